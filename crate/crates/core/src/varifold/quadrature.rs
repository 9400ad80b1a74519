//! Quadrature on reference simplices.
//!
//! Conventions: the reference m-simplex is `{l_i >= 0, sum l_i <= 1}` with
//! volume `1/m!`; weights sum to one, so an integral is
//! `vol * sum_i w_i f(l_i)`. Two rules per dimension:
//!
//! | m | order 2 (degree >= 2)        | order 4 (degree >= 4)           |
//! |---|------------------------------|---------------------------------|
//! | 1 | 2-pt Gauss-Legendre (deg 3)  | 3-pt Gauss-Legendre (deg 5)     |
//! | 2 | 3-pt edge-midpoint rule      | 6-pt two-orbit rule (deg 4)     |
//!
//! Node and weight constants are spelled out below; the unit tests pin them
//! against exact monomial integrals.

use std::sync::OnceLock;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuadOrder {
    Two,
    Four,
}

#[derive(Debug, Clone)]
pub struct QuadRule {
    pub dim: usize,
    pub order: QuadOrder,
    /// Reference-simplex coordinates, one `Vec` of length `dim` per node.
    pub nodes: Vec<Vec<f64>>,
    /// Normalized weights (sum to 1 up to the last ulp of the constants).
    pub weights: Vec<f64>,
}

impl QuadRule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// Reference volume of the m-simplex, `1/m!`.
pub fn reference_volume(m: usize) -> f64 {
    let mut v = 1.0;
    for k in 2..=m {
        v /= k as f64;
    }
    v
}

/// The rule for simplices of dimension `m` (1 or 2).
pub fn rule(m: usize, order: QuadOrder) -> Option<&'static QuadRule> {
    static RULES: OnceLock<[QuadRule; 4]> = OnceLock::new();
    let rules = RULES.get_or_init(build_rules);
    match (m, order) {
        (1, QuadOrder::Two) => Some(&rules[0]),
        (1, QuadOrder::Four) => Some(&rules[1]),
        (2, QuadOrder::Two) => Some(&rules[2]),
        (2, QuadOrder::Four) => Some(&rules[3]),
        _ => None,
    }
}

fn build_rules() -> [QuadRule; 4] {
    // 1d Gauss-Legendre on [0, 1]
    let g = 0.5 / 3.0_f64.sqrt(); // 1/(2 sqrt 3)
    let seg2 = QuadRule {
        dim: 1,
        order: QuadOrder::Two,
        nodes: vec![vec![0.5 - g], vec![0.5 + g]],
        weights: vec![0.5, 0.5],
    };
    let h = 0.5 * (3.0_f64 / 5.0).sqrt(); // sqrt(3/5)/2
    let seg4 = QuadRule {
        dim: 1,
        order: QuadOrder::Four,
        nodes: vec![vec![0.5 - h], vec![0.5], vec![0.5 + h]],
        weights: vec![5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0],
    };
    // triangle, 3-point (degree 2)
    let tri2 = QuadRule {
        dim: 2,
        order: QuadOrder::Two,
        nodes: vec![
            vec![1.0 / 6.0, 1.0 / 6.0],
            vec![2.0 / 3.0, 1.0 / 6.0],
            vec![1.0 / 6.0, 2.0 / 3.0],
        ],
        weights: vec![1.0 / 3.0; 3],
    };
    // triangle, 6-point two-orbit rule (degree 4)
    let a = 0.445948490915965;
    let wa = 0.223381589678011;
    let b = 0.091576213509771;
    let wb = 0.109951743655322;
    let tri4 = QuadRule {
        dim: 2,
        order: QuadOrder::Four,
        nodes: vec![
            vec![a, a],
            vec![1.0 - 2.0 * a, a],
            vec![a, 1.0 - 2.0 * a],
            vec![b, b],
            vec![1.0 - 2.0 * b, b],
            vec![b, 1.0 - 2.0 * b],
        ],
        weights: vec![wa, wa, wa, wb, wb, wb],
    };
    [seg2, seg4, tri2, tri4]
}
