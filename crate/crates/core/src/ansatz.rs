//! The Ansatz function `g(a, t)` of the domain-decoupled architecture, its
//! closed-form time derivative, the optional exponentially damped variant,
//! and closed-form partials with respect to the coefficient vector.
//!
//! Each state `j` gets a residual prediction built from `n_g` sub-functions,
//!
//! `g_j = Σ_i α_ij·(φ(β_ij·t + γ_ij) − φ(γ_ij))`
//!
//! (with an extra `e^{−δ_ij·t}` factor on the first term when damped). The
//! subtrahend makes `g(a, 0)` exactly zero, bitwise, so a prediction
//! `x0 + g` satisfies the initial condition by construction.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Shape of a coefficient vector: `m` states, `n_g` sub-functions, damped
/// flag. The flat layout is block-major `(α, β, γ[, δ])`, each block
/// state-major: entry `(block, j, i)` lives at `block·m·n_g + j·n_g + i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnsatzSpec {
    pub states: usize,
    pub n_g: usize,
    pub damped: bool,
}

impl AnsatzSpec {
    pub fn new(states: usize, n_g: usize, damped: bool) -> Self {
        AnsatzSpec {
            states,
            n_g,
            damped,
        }
    }

    /// Number of coefficient blocks: 3 undamped, 4 damped.
    pub fn blocks(&self) -> usize {
        if self.damped {
            4
        } else {
            3
        }
    }

    /// Flat coefficient count, `3·m·n_g` or `4·m·n_g`.
    pub fn coeff_len(&self) -> usize {
        self.blocks() * self.states * self.n_g
    }

    #[inline]
    pub fn index(&self, block: usize, state: usize, sub: usize) -> usize {
        (block * self.states + state) * self.n_g + sub
    }

    /// State a flat coefficient index belongs to.
    #[inline]
    pub fn state_of(&self, flat: usize) -> usize {
        (flat / self.n_g) % self.states
    }

    fn check(&self, coeffs: &[f64]) -> Result<()> {
        if coeffs.len() != self.coeff_len() {
            return Err(Error::DimensionMismatch {
                context: "ansatz coefficients",
                expected: self.coeff_len(),
                got: coeffs.len(),
            });
        }
        Ok(())
    }
}

/// Owned coefficient vector with its shape.
#[derive(Debug, Clone, PartialEq)]
pub struct AnsatzCoefficients {
    pub spec: AnsatzSpec,
    pub data: Vec<f64>,
}

impl AnsatzCoefficients {
    pub fn from_flat(spec: AnsatzSpec, data: Vec<f64>) -> Result<Self> {
        spec.check(&data)?;
        Ok(AnsatzCoefficients { spec, data })
    }

    pub fn alpha(&self, state: usize, sub: usize) -> f64 {
        self.data[self.spec.index(0, state, sub)]
    }

    pub fn beta(&self, state: usize, sub: usize) -> f64 {
        self.data[self.spec.index(1, state, sub)]
    }

    pub fn gamma(&self, state: usize, sub: usize) -> f64 {
        self.data[self.spec.index(2, state, sub)]
    }

    pub fn delta(&self, state: usize, sub: usize) -> Option<f64> {
        self.spec
            .damped
            .then(|| self.data[self.spec.index(3, state, sub)])
    }
}

/// Base construction function with analytic derivatives. The second
/// derivative is required for the closed-form partials of `ġ`.
#[derive(Debug, Clone, Copy)]
pub struct BaseFunction {
    pub name: &'static str,
    pub value: fn(f64) -> f64,
    pub slope: fn(f64) -> f64,
    pub curvature: fn(f64) -> f64,
}

impl BaseFunction {
    /// The default trigonometric base, `φ = sin`.
    pub const fn sine() -> Self {
        BaseFunction {
            name: "sin",
            value: f64::sin,
            slope: f64::cos,
            curvature: |x| -x.sin(),
        }
    }

    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "sin" => Ok(Self::sine()),
            "tanh" => Ok(BaseFunction {
                name: "tanh",
                value: f64::tanh,
                slope: |x| {
                    let u = x.tanh();
                    1.0 - u * u
                },
                curvature: |x| {
                    let u = x.tanh();
                    -2.0 * u * (1.0 - u * u)
                },
            }),
            other => Err(Error::InvalidArgument {
                context: format!("unknown base function '{other}'"),
            }),
        }
    }
}

impl Default for BaseFunction {
    fn default() -> Self {
        Self::sine()
    }
}

/// Residual state prediction `g(a, t)`, one entry per state.
pub fn eval_g(spec: &AnsatzSpec, coeffs: &[f64], phi: &BaseFunction, t: f64) -> Result<Vec<f64>> {
    spec.check(coeffs)?;
    let mut out = vec![0.0; spec.states];
    for j in 0..spec.states {
        let mut acc = 0.0;
        for i in 0..spec.n_g {
            let alpha = coeffs[spec.index(0, j, i)];
            let beta = coeffs[spec.index(1, j, i)];
            let gamma = coeffs[spec.index(2, j, i)];
            let pw = (phi.value)(beta * t + gamma);
            let pg = (phi.value)(gamma);
            if spec.damped {
                let delta = coeffs[spec.index(3, j, i)];
                acc += alpha * ((-delta * t).exp() * pw - pg);
            } else {
                acc += alpha * (pw - pg);
            }
        }
        out[j] = acc;
    }
    Ok(out)
}

/// Closed-form time derivative `ġ(a, t)`.
pub fn eval_g_dot(
    spec: &AnsatzSpec,
    coeffs: &[f64],
    phi: &BaseFunction,
    t: f64,
) -> Result<Vec<f64>> {
    spec.check(coeffs)?;
    let mut out = vec![0.0; spec.states];
    for j in 0..spec.states {
        let mut acc = 0.0;
        for i in 0..spec.n_g {
            let alpha = coeffs[spec.index(0, j, i)];
            let beta = coeffs[spec.index(1, j, i)];
            let gamma = coeffs[spec.index(2, j, i)];
            let w = beta * t + gamma;
            if spec.damped {
                let delta = coeffs[spec.index(3, j, i)];
                let damp = (-delta * t).exp();
                acc += alpha * damp * (beta * (phi.slope)(w) - delta * (phi.value)(w));
            } else {
                acc += alpha * beta * (phi.slope)(w);
            }
        }
        out[j] = acc;
    }
    Ok(out)
}

/// Closed-form partials of `g` and `ġ` with respect to every coefficient.
///
/// Cross-state partials vanish, so each Jacobian is returned as a flat
/// vector aligned with the coefficient layout: entry `k` is
/// `∂g_{state(k)}/∂a_k` (resp. `∂ġ_{state(k)}/∂a_k`).
#[derive(Debug, Clone, PartialEq)]
pub struct AnsatzPartials {
    pub dg: Vec<f64>,
    pub dg_dot: Vec<f64>,
}

pub fn partials_wrt_coefficients(
    spec: &AnsatzSpec,
    coeffs: &[f64],
    phi: &BaseFunction,
    t: f64,
) -> Result<AnsatzPartials> {
    spec.check(coeffs)?;
    let len = spec.coeff_len();
    let mut dg = vec![0.0; len];
    let mut dg_dot = vec![0.0; len];
    for j in 0..spec.states {
        for i in 0..spec.n_g {
            let ia = spec.index(0, j, i);
            let ib = spec.index(1, j, i);
            let ic = spec.index(2, j, i);
            let alpha = coeffs[ia];
            let beta = coeffs[ib];
            let gamma = coeffs[ic];
            let w = beta * t + gamma;
            let pw = (phi.value)(w);
            let pg = (phi.value)(gamma);
            let dw = (phi.slope)(w);
            let dgm = (phi.slope)(gamma);
            let d2w = (phi.curvature)(w);
            if spec.damped {
                let id = spec.index(3, j, i);
                let delta = coeffs[id];
                let damp = (-delta * t).exp();
                dg[ia] = damp * pw - pg;
                dg[ib] = alpha * damp * t * dw;
                dg[ic] = alpha * (damp * dw - dgm);
                dg[id] = -alpha * t * damp * pw;
                let slope_core = beta * dw - delta * pw;
                dg_dot[ia] = damp * slope_core;
                dg_dot[ib] = alpha * damp * (dw + t * (beta * d2w - delta * dw));
                dg_dot[ic] = alpha * damp * (beta * d2w - delta * dw);
                dg_dot[id] = -alpha * damp * (t * slope_core + pw);
            } else {
                dg[ia] = pw - pg;
                dg[ib] = alpha * t * dw;
                dg[ic] = alpha * (dw - dgm);
                dg_dot[ia] = beta * dw;
                dg_dot[ib] = alpha * (dw + beta * t * d2w);
                dg_dot[ic] = alpha * beta * d2w;
            }
        }
    }
    Ok(AnsatzPartials { dg, dg_dot })
}
