//! The two surrogate architectures and the interval excitation encoding.
//!
//! Both models predict over one shooting interval `t ∈ [0, T_s]` with
//! `T_s = 1.1/f` slightly exceeding the rollout step `T = 1/f`. Inputs are
//! normalized to `[−1, 1]` with the sampling ranges; the time channel of the
//! PINC is normalized by `T_s` to `[0, 1]`, and the Ansatz of the
//! domain-decoupled model receives normalized time as well, so its residual
//! output acts on normalized states and is rescaled by the range half-widths
//! only. No offset enters the residual path, which keeps the prediction at
//! `t = 0` exactly equal to the initial state.

use serde::{Deserialize, Serialize};

use crate::ansatz::{self, AnsatzSpec, BaseFunction};
use crate::autodiff::mlp::Mlp;
use crate::error::{Error, Result};
use crate::sample::{normalize, SamplingBox};

/// Interpolation order of the interval excitation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum ExcitationOrder {
    /// Zero-order hold: excitation constant over the interval.
    Zoh,
    /// Linear interpolation through `u_0` and `u_T`.
    Linear,
    /// Quadratic interpolation through `u_0`, `u_{T/2}` and `u_T`.
    Quadratic,
}

impl ExcitationOrder {
    pub fn degree(self) -> u8 {
        match self {
            ExcitationOrder::Zoh => 0,
            ExcitationOrder::Linear => 1,
            ExcitationOrder::Quadratic => 2,
        }
    }

    /// Knots per interval: `degree + 1`.
    pub fn knot_count(self) -> usize {
        self.degree() as usize + 1
    }
}

impl TryFrom<u8> for ExcitationOrder {
    type Error = Error;
    fn try_from(v: u8) -> Result<Self> {
        match v {
            0 => Ok(ExcitationOrder::Zoh),
            1 => Ok(ExcitationOrder::Linear),
            2 => Ok(ExcitationOrder::Quadratic),
            other => Err(Error::InvalidArgument {
                context: format!("excitation order must be 0, 1 or 2, got {other}"),
            }),
        }
    }
}

impl From<ExcitationOrder> for u8 {
    fn from(v: ExcitationOrder) -> u8 {
        v.degree()
    }
}

/// Excitation knots for one prediction interval of length `step`.
///
/// The flat layout is `(u_0, [u_{T/2}], [u_T])`, each a `p`-vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ExcitationPlan {
    pub order: ExcitationOrder,
    pub knots: Vec<Vec<f64>>,
    pub step: f64,
}

impl ExcitationPlan {
    pub fn new(order: ExcitationOrder, knots: Vec<Vec<f64>>, step: f64) -> Result<Self> {
        if knots.len() != order.knot_count() {
            return Err(Error::DimensionMismatch {
                context: "excitation knot count",
                expected: order.knot_count(),
                got: knots.len(),
            });
        }
        if step <= 0.0 {
            return Err(Error::InvalidArgument {
                context: "excitation step must be positive".into(),
            });
        }
        let p = knots[0].len();
        if knots.iter().any(|k| k.len() != p) {
            return Err(Error::InvalidArgument {
                context: "excitation knots must share one channel count".into(),
            });
        }
        Ok(ExcitationPlan { order, knots, step })
    }

    /// Constant plan from a single knot.
    pub fn zoh(u0: Vec<f64>, step: f64) -> Result<Self> {
        Self::new(ExcitationOrder::Zoh, vec![u0], step)
    }

    pub fn input_dim(&self) -> usize {
        self.knots[0].len()
    }

    /// Flattened knots, length `p·(degree + 1)`.
    pub fn flat(&self) -> Vec<f64> {
        self.knots.iter().flatten().copied().collect()
    }

    pub fn from_flat(order: ExcitationOrder, flat: &[f64], p: usize, step: f64) -> Result<Self> {
        let count = order.knot_count();
        if flat.len() != p * count {
            return Err(Error::DimensionMismatch {
                context: "flat excitation vector",
                expected: p * count,
                got: flat.len(),
            });
        }
        let knots = (0..count).map(|k| flat[k * p..(k + 1) * p].to_vec()).collect();
        Self::new(order, knots, step)
    }

    /// Shooting horizon `T_s = 1.1·T` up to which interpolation is valid.
    pub fn horizon(&self) -> f64 {
        1.1 * self.step
    }

    /// Interpolated excitation at `t ∈ [0, T_s]`.
    ///
    /// The polynomial coefficients are grouped in knot differences, so equal
    /// knots reduce to the constant `u_0` exactly and `t = 0` returns `u_0`
    /// bitwise.
    pub fn interpolate(&self, t: f64) -> Result<Vec<f64>> {
        let horizon = self.horizon();
        if t < 0.0 || t > horizon * (1.0 + 1e-9) {
            return Err(Error::TimeOutOfRange {
                t,
                min: 0.0,
                max: horizon,
            });
        }
        let ts = t / self.step;
        let p = self.input_dim();
        let mut out = Vec::with_capacity(p);
        match self.order {
            ExcitationOrder::Zoh => out.extend_from_slice(&self.knots[0]),
            ExcitationOrder::Linear => {
                for c in 0..p {
                    let u0 = self.knots[0][c];
                    let ut = self.knots[1][c];
                    out.push(u0 + (ut - u0) * ts);
                }
            }
            ExcitationOrder::Quadratic => {
                for c in 0..p {
                    let u0 = self.knots[0][c];
                    let uh = self.knots[1][c];
                    let ut = self.knots[2][c];
                    let a = 2.0 * (u0 + ut) - 4.0 * uh;
                    let b = 4.0 * (uh - u0) - (ut - u0);
                    out.push((a * ts + b) * ts + u0);
                }
            }
        }
        Ok(out)
    }
}

/// Free-function form of [`ExcitationPlan::interpolate`].
pub fn interpolate_excitation(plan: &ExcitationPlan, t: f64) -> Result<Vec<f64>> {
    plan.interpolate(t)
}

/// Domain-decoupled model: the network maps the normalized
/// `(x0, u*_0)` to Ansatz coefficients; `g(a, τ)` with normalized time
/// `τ = t/T_s` produces the residual on normalized states.
#[derive(Debug, Clone)]
pub struct DdPinnModel {
    pub net: Mlp,
    pub ansatz: AnsatzSpec,
    pub base: BaseFunction,
    pub bbox: SamplingBox,
    pub frequency_hz: f64,
    pub order: ExcitationOrder,
    input_ranges: Vec<(f64, f64)>,
    state_half: Vec<f64>,
}

impl DdPinnModel {
    pub fn new(
        net: Mlp,
        ansatz: AnsatzSpec,
        base: BaseFunction,
        bbox: SamplingBox,
        frequency_hz: f64,
        order: ExcitationOrder,
    ) -> Result<Self> {
        bbox.validate()?;
        if frequency_hz <= 0.0 {
            return Err(Error::InvalidArgument {
                context: "operation frequency must be positive".into(),
            });
        }
        let m = bbox.state_dim();
        let p = bbox.input_dim();
        if ansatz.states != m {
            return Err(Error::DimensionMismatch {
                context: "ansatz state count",
                expected: m,
                got: ansatz.states,
            });
        }
        let expected_in = m + p * order.knot_count();
        if net.input_dim() != expected_in {
            return Err(Error::DimensionMismatch {
                context: "ddpinn net input size",
                expected: expected_in,
                got: net.input_dim(),
            });
        }
        if net.output_dim() != ansatz.coeff_len() {
            return Err(Error::DimensionMismatch {
                context: "ddpinn net output size",
                expected: ansatz.coeff_len(),
                got: net.output_dim(),
            });
        }
        let mut input_ranges = bbox.state_ranges();
        for _ in 0..order.knot_count() {
            input_ranges.extend(bbox.input_ranges());
        }
        let state_half = bbox.state_half_widths();
        Ok(DdPinnModel {
            net,
            ansatz,
            base,
            bbox,
            frequency_hz,
            order,
            input_ranges,
            state_half,
        })
    }

    /// Rollout step `T = 1/f`.
    pub fn step(&self) -> f64 {
        1.0 / self.frequency_hz
    }

    /// Trained horizon `T_s = 1.1/f`.
    pub fn horizon(&self) -> f64 {
        1.1 / self.frequency_hz
    }

    pub fn state_dim(&self) -> usize {
        self.bbox.state_dim()
    }

    pub fn state_half_widths(&self) -> &[f64] {
        &self.state_half
    }

    fn check_time(&self, t: f64) -> Result<()> {
        let h = self.horizon();
        if t < 0.0 || t > h * (1.0 + 1e-9) {
            return Err(Error::TimeOutOfRange { t, min: 0.0, max: h });
        }
        Ok(())
    }

    /// Normalized network input `(x0*, u*_0*)`.
    pub fn net_input(&self, x0: &[f64], plan: &ExcitationPlan) -> Result<Vec<f64>> {
        if x0.len() != self.state_dim() {
            return Err(Error::DimensionMismatch {
                context: "ddpinn initial state",
                expected: self.state_dim(),
                got: x0.len(),
            });
        }
        if plan.order != self.order {
            return Err(Error::InvalidArgument {
                context: format!(
                    "plan order {} does not match model order {}",
                    plan.order.degree(),
                    self.order.degree()
                ),
            });
        }
        if plan.input_dim() != self.bbox.input_dim() {
            return Err(Error::DimensionMismatch {
                context: "ddpinn excitation channels",
                expected: self.bbox.input_dim(),
                got: plan.input_dim(),
            });
        }
        let mut raw = x0.to_vec();
        raw.extend(plan.flat());
        Ok(normalize(&raw, &self.input_ranges))
    }

    /// Ansatz coefficients for one interval.
    pub fn coefficients(&self, x0: &[f64], plan: &ExcitationPlan) -> Result<Vec<f64>> {
        let z = self.net_input(x0, plan)?;
        self.net.forward(&z)
    }

    /// `x̂(t) = x0 + s ⊙ g(a, t/T_s)`; exact at `t = 0`.
    pub fn predict(&self, x0: &[f64], plan: &ExcitationPlan, t: f64) -> Result<Vec<f64>> {
        self.check_time(t)?;
        let a = self.coefficients(x0, plan)?;
        let tau = t / self.horizon();
        let g = ansatz::eval_g(&self.ansatz, &a, &self.base, tau)?;
        Ok(x0
            .iter()
            .zip(self.state_half.iter())
            .zip(g.iter())
            .map(|((x, s), gj)| x + s * gj)
            .collect())
    }

    /// `∂x̂/∂t = (s/T_s) ⊙ ġ(a, t/T_s)` in physical units per second.
    pub fn predict_dot(&self, x0: &[f64], plan: &ExcitationPlan, t: f64) -> Result<Vec<f64>> {
        self.check_time(t)?;
        let a = self.coefficients(x0, plan)?;
        let tau = t / self.horizon();
        let g_dot = ansatz::eval_g_dot(&self.ansatz, &a, &self.base, tau)?;
        let inv_h = 1.0 / self.horizon();
        Ok(self
            .state_half
            .iter()
            .zip(g_dot.iter())
            .map(|(s, gd)| s * gd * inv_h)
            .collect())
    }
}

/// Baseline architecture: the network maps normalized `(x0, u0, t)` to the
/// normalized future state. Trained with an initial-condition loss; no
/// exactness guarantee at `t = 0`.
#[derive(Debug, Clone)]
pub struct PincModel {
    pub net: Mlp,
    pub bbox: SamplingBox,
    pub frequency_hz: f64,
    input_ranges: Vec<(f64, f64)>,
    state_half: Vec<f64>,
    state_mid: Vec<f64>,
}

impl PincModel {
    pub fn new(net: Mlp, bbox: SamplingBox, frequency_hz: f64) -> Result<Self> {
        bbox.validate()?;
        if frequency_hz <= 0.0 {
            return Err(Error::InvalidArgument {
                context: "operation frequency must be positive".into(),
            });
        }
        let m = bbox.state_dim();
        let p = bbox.input_dim();
        if net.input_dim() != m + p + 1 {
            return Err(Error::DimensionMismatch {
                context: "pinc net input size",
                expected: m + p + 1,
                got: net.input_dim(),
            });
        }
        if net.output_dim() != m {
            return Err(Error::DimensionMismatch {
                context: "pinc net output size",
                expected: m,
                got: net.output_dim(),
            });
        }
        let mut input_ranges = bbox.state_ranges();
        input_ranges.extend(bbox.input_ranges());
        let state_half = bbox.state_half_widths();
        let state_mid = bbox.state_midpoints();
        Ok(PincModel {
            net,
            bbox,
            frequency_hz,
            input_ranges,
            state_half,
            state_mid,
        })
    }

    pub fn step(&self) -> f64 {
        1.0 / self.frequency_hz
    }

    pub fn horizon(&self) -> f64 {
        1.1 / self.frequency_hz
    }

    pub fn state_dim(&self) -> usize {
        self.bbox.state_dim()
    }

    pub fn state_half_widths(&self) -> &[f64] {
        &self.state_half
    }

    pub fn state_midpoints(&self) -> &[f64] {
        &self.state_mid
    }

    /// Index of the time channel in the network input.
    pub fn time_index(&self) -> usize {
        self.bbox.state_dim() + self.bbox.input_dim()
    }

    fn check_time(&self, t: f64) -> Result<()> {
        let h = self.horizon();
        if t < 0.0 || t > h * (1.0 + 1e-9) {
            return Err(Error::TimeOutOfRange { t, min: 0.0, max: h });
        }
        Ok(())
    }

    /// Normalized input `(x0*, u0*, t/T_s)`.
    pub fn net_input(&self, x0: &[f64], u0: &[f64], t: f64) -> Result<Vec<f64>> {
        if x0.len() != self.state_dim() {
            return Err(Error::DimensionMismatch {
                context: "pinc initial state",
                expected: self.state_dim(),
                got: x0.len(),
            });
        }
        if u0.len() != self.bbox.input_dim() {
            return Err(Error::DimensionMismatch {
                context: "pinc excitation",
                expected: self.bbox.input_dim(),
                got: u0.len(),
            });
        }
        let mut raw = x0.to_vec();
        raw.extend_from_slice(u0);
        let mut z = normalize(&raw, &self.input_ranges);
        z.push(t / self.horizon());
        Ok(z)
    }

    pub fn predict(&self, x0: &[f64], u0: &[f64], t: f64) -> Result<Vec<f64>> {
        self.check_time(t)?;
        let z = self.net_input(x0, u0, t)?;
        let y = self.net.forward(&z)?;
        Ok(self.denormalize_state(&y))
    }

    /// Physical-units time derivative via a dual forward pass seeded on the
    /// time channel; includes the `1/T_s` normalization chain factor.
    pub fn predict_dot(&self, x0: &[f64], u0: &[f64], t: f64) -> Result<Vec<f64>> {
        self.check_time(t)?;
        let z = self.net_input(x0, u0, t)?;
        let (_, dy) = self.net.forward_with_input_derivative(&z, self.time_index())?;
        let inv_h = 1.0 / self.horizon();
        Ok(dy
            .iter()
            .zip(self.state_half.iter())
            .map(|(d, s)| d * s * inv_h)
            .collect())
    }

    pub fn denormalize_state(&self, y: &[f64]) -> Vec<f64> {
        y.iter()
            .zip(self.state_mid.iter())
            .zip(self.state_half.iter())
            .map(|((v, mid), half)| mid + half * v)
            .collect()
    }

    pub fn normalize_state(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.state_mid.iter())
            .zip(self.state_half.iter())
            .map(|((v, mid), half)| (v - mid) / half)
            .collect()
    }
}
