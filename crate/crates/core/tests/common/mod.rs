//! Shared test support: the independent expression evaluator and the fixed
//! corpus used for bit-exactness checks.

/// Direct one-pass recursive-descent evaluation of a source string; shares
/// only the grammar with the library, none of the code.
pub fn ref_eval(src: &str, coords: &[f64]) -> f64 {
    let mut p = RefEval {
        src: src.as_bytes(),
        pos: 0,
        coords,
    };
    p.ws();
    let v = p.expr();
    assert_eq!(p.pos, p.src.len(), "reference evaluator left input behind");
    v
}

pub const CORPUS: [&str; 20] = [
    "1 + 2*3 - 4/8",
    "2*x1^2 + sin(x2)",
    "x1^3 - x2^3 + x3",
    "sqrt(1 + x1^2 + x2^2)",
    "exp(-x1) * cos(x2)",
    "1 - sqrt(1 - x1^2 - x2^2)",
    "abs(x1 - x2) + abs(x2 - x3)",
    "x1/x2 + x2/x3",
    "log(1 + x1^2)",
    "sin(cos(exp(x1)))",
    "-x1^2",
    "2^3^2",
    "x1^-2 + x2^-1",
    "0.5*(3*x1^2 + 0.5*x2^2)",
    "1e-3*x1 + 2.5E2*x2",
    "(x1 + x2)*(x1 - x2)",
    "x1*x2*x3/(1 + x1*x1)",
    "sin(x1)^2 + cos(x1)^2",
    "1 + 0.1*x2^2 + 0.05*x1*x3",
    "sqrt(abs(x1)) ^ 2",
];

pub const CORPUS_POINTS: [[f64; 3]; 2] = [[0.37, -0.82, 1.44], [0.9, 0.25, -0.6]];

struct RefEval<'a> {
    src: &'a [u8],
    pos: usize,
    coords: &'a [f64],
}

impl<'a> RefEval<'a> {
    fn ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn eat(&mut self, c: u8) -> bool {
        if self.src.get(self.pos) == Some(&c) {
            self.pos += 1;
            self.ws();
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> f64 {
        let mut v = self.term();
        loop {
            if self.eat(b'+') {
                v += self.term();
            } else if self.eat(b'-') {
                v -= self.term();
            } else {
                return v;
            }
        }
    }

    fn term(&mut self) -> f64 {
        let mut v = self.unary();
        loop {
            if self.eat(b'*') {
                v *= self.unary();
            } else if self.eat(b'/') {
                v /= self.unary();
            } else {
                return v;
            }
        }
    }

    fn unary(&mut self) -> f64 {
        if self.eat(b'-') {
            -self.unary()
        } else {
            self.power()
        }
    }

    fn power(&mut self) -> f64 {
        let mut v = self.atom();
        while self.eat(b'^') {
            let e = if self.eat(b'-') {
                -self.atom()
            } else {
                self.atom()
            };
            v = ref_pow(v, e);
        }
        v
    }

    fn atom(&mut self) -> f64 {
        if self.eat(b'(') {
            let v = self.expr();
            assert!(self.eat(b')'));
            return v;
        }
        let c = self.src[self.pos];
        if c.is_ascii_digit() || c == b'.' {
            let start = self.pos;
            while self
                .src
                .get(self.pos)
                .is_some_and(|c| c.is_ascii_digit() || *c == b'.')
            {
                self.pos += 1;
            }
            if let Some(b'e' | b'E') = self.src.get(self.pos) {
                self.pos += 1;
                if let Some(b'+' | b'-') = self.src.get(self.pos) {
                    self.pos += 1;
                }
                while self.src.get(self.pos).is_some_and(|c| c.is_ascii_digit()) {
                    self.pos += 1;
                }
            }
            let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
            self.ws();
            return text.parse().unwrap();
        }
        let start = self.pos;
        while self
            .src
            .get(self.pos)
            .is_some_and(|c| c.is_ascii_alphanumeric())
        {
            self.pos += 1;
        }
        let name = std::str::from_utf8(&self.src[start..self.pos])
            .unwrap()
            .to_string();
        self.ws();
        if let Some(idx) = name.strip_prefix('x').and_then(|r| r.parse::<usize>().ok()) {
            return self.coords[idx - 1];
        }
        assert!(self.eat(b'('));
        let arg = self.expr();
        assert!(self.eat(b')'));
        match name.as_str() {
            "sin" => arg.sin(),
            "cos" => arg.cos(),
            "exp" => arg.exp(),
            "sqrt" => arg.sqrt(),
            "log" => arg.ln(),
            "abs" => arg.abs(),
            other => panic!("unknown function {other}"),
        }
    }
}

fn ref_pow(a: f64, b: f64) -> f64 {
    if b.fract() == 0.0 && b.abs() <= i32::MAX as f64 {
        a.powi(b as i32)
    } else {
        (b * a.ln()).exp()
    }
}
