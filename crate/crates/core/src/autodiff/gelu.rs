//! GELU activation in the tanh form, with first and second derivatives.
//!
//! `gelu(x) = 0.5·x·(1 + tanh(s·(x + c·x³)))` with `s = √(2/π)` and
//! `c = 0.044715`. The second derivative is needed when backpropagating
//! through a forward-mode tangent (forward-over-reverse).

/// √(2/π)
pub const SQRT_2_OVER_PI: f64 = 0.797_884_560_802_865_4;
/// Cubic coefficient of the tanh approximation.
pub const GELU_CUBIC: f64 = 0.044_715;

#[inline]
fn inner(x: f64) -> f64 {
    SQRT_2_OVER_PI * (x + GELU_CUBIC * x * x * x)
}

#[inline]
fn inner_grad(x: f64) -> f64 {
    SQRT_2_OVER_PI * (1.0 + 3.0 * GELU_CUBIC * x * x)
}

#[inline]
fn inner_curv(x: f64) -> f64 {
    6.0 * SQRT_2_OVER_PI * GELU_CUBIC * x
}

#[inline]
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + inner(x).tanh())
}

/// GELU together with the tanh of the inner polynomial, which the
/// derivative formulas reuse.
#[inline]
pub fn gelu_with_cache(x: f64) -> (f64, f64) {
    let u = inner(x).tanh();
    (0.5 * x * (1.0 + u), u)
}

/// First derivative given the cached inner tanh `u`.
#[inline]
pub fn grad_from_cache(x: f64, u: f64) -> f64 {
    0.5 * (1.0 + u) + 0.5 * x * (1.0 - u * u) * inner_grad(x)
}

/// Second derivative given the cached inner tanh `u`.
#[inline]
pub fn curvature_from_cache(x: f64, u: f64) -> f64 {
    let sech2 = 1.0 - u * u;
    let wg = inner_grad(x);
    sech2 * wg + 0.5 * x * sech2 * (inner_curv(x) - 2.0 * u * wg * wg)
}

#[inline]
pub fn gelu_grad(x: f64) -> f64 {
    let u = inner(x).tanh();
    grad_from_cache(x, u)
}
