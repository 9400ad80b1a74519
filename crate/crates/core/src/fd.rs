//! Finite-difference stencils shared by the geometry stack.
//!
//! All derivatives in the crate go through these helpers so the boundary
//! handling (one-sided stencils within a step of `{x1 = 0}`) is uniform.

/// Central second-order first derivative: `(f(x+h) - f(x-h)) / 2h`.
pub fn central<F: FnMut(f64) -> f64>(mut f: F, x: f64, h: f64) -> f64 {
    (f(x + h) - f(x - h)) / (2.0 * h)
}

/// Forward one-sided second-order first derivative:
/// `(-3 f(x) + 4 f(x+h) - f(x+2h)) / 2h`.
pub fn forward<F: FnMut(f64) -> f64>(mut f: F, x: f64, h: f64) -> f64 {
    (-3.0 * f(x) + 4.0 * f(x + h) - f(x + 2.0 * h)) / (2.0 * h)
}

/// Second derivative by the central three-point stencil.
pub fn central_second<F: FnMut(f64) -> f64>(mut f: F, x: f64, h: f64) -> f64 {
    (f(x + h) - 2.0 * f(x) + f(x - h)) / (h * h)
}

/// One-sided five-point second derivative at the left end of a stencil
/// (third-order accurate).
pub fn forward_second_5pt<F: FnMut(f64) -> f64>(mut f: F, x: f64, h: f64) -> f64 {
    let (f0, f1, f2, f3, f4) = (
        f(x),
        f(x + h),
        f(x + 2.0 * h),
        f(x + 3.0 * h),
        f(x + 4.0 * h),
    );
    (35.0 * f0 - 104.0 * f1 + 114.0 * f2 - 56.0 * f3 + 11.0 * f4) / (12.0 * h * h)
}

/// One-sided five-point third derivative at the left end of a stencil
/// (second-order accurate).
pub fn forward_third_5pt<F: FnMut(f64) -> f64>(mut f: F, x: f64, h: f64) -> f64 {
    let (f0, f1, f2, f3, f4) = (
        f(x),
        f(x + h),
        f(x + 2.0 * h),
        f(x + 3.0 * h),
        f(x + 4.0 * h),
    );
    (-5.0 * f0 + 18.0 * f1 - 24.0 * f2 + 14.0 * f3 - 3.0 * f4) / (2.0 * h * h * h)
}

/// Sum a slice pairwise in index order. Deterministic regardless of thread
/// count, and better conditioned than a running sum.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    match values.len() {
        0 => 0.0,
        1 => values[0],
        2 => values[0] + values[1],
        n => {
            let mid = n / 2;
            pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
        }
    }
}
