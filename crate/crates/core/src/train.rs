//! Loss computation, gradient-based balancing, Adam optimization, plateau
//! scheduling and the epoch loop for both architectures.
//!
//! Losses are evaluated on normalized states and normalized time, so their
//! magnitudes are comparable across systems and both architectures: the
//! physics residual of state `j` is `ġ_j − (T_s/s_j)·f_j` for the
//! domain-decoupled model and `∂x̂*_j/∂τ − (T_s/s_j)·f_j` for the baseline,
//! with `s_j` the sampling half-width and `τ = t/T_s`.
//!
//! Batch gradients are accumulated chunkwise (64 points per chunk) with an
//! ordered reduction, so results are bitwise reproducible for a fixed
//! configuration regardless of the worker-thread count.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ansatz::{AnsatzSpec, BaseFunction};
use crate::autodiff::mlp::{Mlp, MlpGradients};
use crate::autodiff::tape::Tape;
use crate::dynamics::SystemModel;
use crate::error::{Error, Result};
use crate::integrate::{generate_dataset, DataPoint};
use crate::model::{DdPinnModel, ExcitationOrder, ExcitationPlan, PincModel};
use crate::sample::{latin_hypercube_with, SamplingBox};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    #[serde(rename = "ddpinn")]
    DdPinn,
    Pinc,
}

/// All run hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub arch: Architecture,
    pub frequency_hz: f64,
    pub delta_u: ExcitationOrder,
    pub n_g: usize,
    pub damped: bool,
    pub base_function: String,
    pub hidden_layers: usize,
    pub neurons: usize,
    pub epochs: usize,
    pub batches: usize,
    pub n_collo: usize,
    pub n_ic: usize,
    pub n_data: usize,
    pub alpha_init: f64,
    pub alpha_min: f64,
    pub plateau_factor: f64,
    pub plateau_patience: usize,
    pub plateau_threshold: f64,
    pub lra_rate: f64,
    pub val_fraction: f64,
    pub seed: u64,
    pub threads: usize,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |context: String| Err(Error::InvalidArgument { context });
        if !(self.alpha_init > self.alpha_min && self.alpha_min > 0.0) {
            return bad(format!(
                "need alpha_init > alpha_min > 0, got {} and {}",
                self.alpha_init, self.alpha_min
            ));
        }
        if self.frequency_hz <= 0.0 {
            return bad("operation frequency must be positive".into());
        }
        if self.batches == 0 {
            return bad("at least one batch required".into());
        }
        if self.n_collo > 0 && self.batches > self.n_collo {
            return bad(format!(
                "batch count {} exceeds collocation count {}",
                self.batches, self.n_collo
            ));
        }
        if self.neurons == 0 && self.hidden_layers > 0 {
            return bad("hidden layers need at least one neuron".into());
        }
        if self.arch == Architecture::DdPinn && self.n_ic > 0 {
            return bad("initial-condition points apply to the pinc only".into());
        }
        if self.arch == Architecture::DdPinn && self.n_g == 0 {
            return bad("ddpinn needs at least one sub-function".into());
        }
        if !(0.0..0.9).contains(&self.val_fraction) {
            return bad(format!("val_fraction {} out of range", self.val_fraction));
        }
        if !(self.plateau_factor > 0.0 && self.plateau_factor < 1.0) {
            return bad(format!("plateau factor {} out of (0,1)", self.plateau_factor));
        }
        if self.threads == 0 {
            return bad("threads must be >= 1".into());
        }
        if !(0.0..=1.0).contains(&self.lra_rate) {
            return bad(format!("lra rate {} out of [0,1]", self.lra_rate));
        }
        Ok(())
    }

    pub fn step(&self) -> f64 {
        1.0 / self.frequency_hz
    }

    pub fn horizon(&self) -> f64 {
        1.1 / self.frequency_hz
    }
}

/// Weights of the composite loss; the physics weight is the fixed
/// reference (1) and the initial-condition weight is identically zero for
/// the domain-decoupled architecture.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub ic: f64,
    pub physics: f64,
    pub data: f64,
}

impl LossWeights {
    pub fn initial(arch: Architecture) -> Self {
        LossWeights {
            ic: if arch == Architecture::Pinc { 1.0 } else { 0.0 },
            physics: 1.0,
            data: 1.0,
        }
    }
}

/// A sampled residual-evaluation point `(x0, u*_0, t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CollocationPoint {
    pub x0: Vec<f64>,
    pub plan: ExcitationPlan,
    pub t: f64,
}

/// An initial-condition point `(x0, u0)` for the baseline architecture.
#[derive(Debug, Clone, PartialEq)]
pub struct IcPoint {
    pub x0: Vec<f64>,
    pub u0: Vec<f64>,
}

/// Either trained architecture.
#[derive(Debug, Clone)]
pub enum TrainedModel {
    DdPinn(DdPinnModel),
    Pinc(PincModel),
}

impl TrainedModel {
    pub fn arch(&self) -> Architecture {
        match self {
            TrainedModel::DdPinn(_) => Architecture::DdPinn,
            TrainedModel::Pinc(_) => Architecture::Pinc,
        }
    }

    pub fn net(&self) -> &Mlp {
        match self {
            TrainedModel::DdPinn(m) => &m.net,
            TrainedModel::Pinc(m) => &m.net,
        }
    }

    pub fn net_mut(&mut self) -> &mut Mlp {
        match self {
            TrainedModel::DdPinn(m) => &mut m.net,
            TrainedModel::Pinc(m) => &mut m.net,
        }
    }

    pub fn bbox(&self) -> &SamplingBox {
        match self {
            TrainedModel::DdPinn(m) => &m.bbox,
            TrainedModel::Pinc(m) => &m.bbox,
        }
    }

    pub fn state_dim(&self) -> usize {
        self.bbox().state_dim()
    }

    pub fn step(&self) -> f64 {
        match self {
            TrainedModel::DdPinn(m) => m.step(),
            TrainedModel::Pinc(m) => m.step(),
        }
    }

    pub fn horizon(&self) -> f64 {
        match self {
            TrainedModel::DdPinn(m) => m.horizon(),
            TrainedModel::Pinc(m) => m.horizon(),
        }
    }

    /// Excitation order the model consumes per interval (ZOH for the pinc).
    pub fn order(&self) -> ExcitationOrder {
        match self {
            TrainedModel::DdPinn(m) => m.order,
            TrainedModel::Pinc(_) => ExcitationOrder::Zoh,
        }
    }

    pub fn frequency_hz(&self) -> f64 {
        match self {
            TrainedModel::DdPinn(m) => m.frequency_hz,
            TrainedModel::Pinc(m) => m.frequency_hz,
        }
    }

    /// Physics residual of one collocation point, in normalized units.
    pub fn physics_residual(
        &self,
        system: &SystemModel,
        point: &CollocationPoint,
    ) -> Result<Vec<f64>> {
        let horizon = self.horizon();
        match self {
            TrainedModel::DdPinn(model) => {
                let z = model.net_input(&point.x0, &point.plan)?;
                let a = model.net.forward(&z)?;
                let tau = point.t / horizon;
                let g = crate::ansatz::eval_g(&model.ansatz, &a, &model.base, tau)?;
                let g_dot = crate::ansatz::eval_g_dot(&model.ansatz, &a, &model.base, tau)?;
                let half = model.state_half_widths();
                let x_hat: Vec<f64> = point
                    .x0
                    .iter()
                    .zip(half.iter())
                    .zip(g.iter())
                    .map(|((x, s), gj)| x + s * gj)
                    .collect();
                let u_t = point.plan.interpolate(point.t)?;
                let f = system.rhs_f64(&x_hat, &u_t);
                Ok(g_dot
                    .iter()
                    .zip(f.iter())
                    .zip(half.iter())
                    .map(|((gd, fj), s)| gd - horizon / s * fj)
                    .collect())
            }
            TrainedModel::Pinc(model) => {
                let u0 = &point.plan.knots[0];
                let z = model.net_input(&point.x0, u0, point.t)?;
                let (y, dy) = model
                    .net
                    .forward_with_input_derivative(&z, model.time_index())?;
                let x_hat = model.denormalize_state(&y);
                let f = system.rhs_f64(&x_hat, u0);
                let half = model.state_half_widths();
                Ok(dy
                    .iter()
                    .zip(f.iter())
                    .zip(half.iter())
                    .map(|((d, fj), s)| d - horizon / s * fj)
                    .collect())
            }
        }
    }
}

/// Mean squared physics residual over a batch, normalized units.
pub fn physics_loss(
    model: &TrainedModel,
    system: &SystemModel,
    points: &[CollocationPoint],
) -> Result<f64> {
    if points.is_empty() {
        return Err(Error::InvalidArgument {
            context: "physics loss needs a nonempty batch".into(),
        });
    }
    let m = model.state_dim();
    let mut acc = 0.0;
    for (i, p) in points.iter().enumerate() {
        let r = model.physics_residual(system, p)?;
        let s: f64 = r.iter().map(|v| v * v).sum();
        if !s.is_finite() {
            return Err(Error::NonFinite {
                context: format!("physics residual at point {i} (x0 {:?}, t {})", p.x0, p.t),
            });
        }
        acc += s;
    }
    Ok(acc / (points.len() * m) as f64)
}

/// Mean squared mismatch between the initial state and the prediction at
/// `t = 0`, normalized states. Calling it on the domain-decoupled model is
/// a misuse signal: that loss is identically zero by construction.
pub fn ic_loss(model: &TrainedModel, points: &[IcPoint]) -> Result<f64> {
    let model = match model {
        TrainedModel::DdPinn(_) => {
            return Err(Error::Misuse {
                context: "initial-condition loss is identically zero for the ddpinn",
            })
        }
        TrainedModel::Pinc(m) => m,
    };
    if points.is_empty() {
        return Ok(0.0);
    }
    let m = model.state_dim();
    let mut acc = 0.0;
    for p in points {
        let z = model.net_input(&p.x0, &p.u0, 0.0)?;
        let y = model.net.forward(&z)?;
        let target = model.normalize_state(&p.x0);
        acc += y
            .iter()
            .zip(target.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>();
    }
    Ok(acc / (points.len() * m) as f64)
}

/// Mean squared prediction error against stored targets, normalized states.
/// An empty batch is defined as zero (and excluded from loss balancing).
pub fn data_loss(model: &TrainedModel, points: &[DataPoint]) -> Result<f64> {
    if points.is_empty() {
        return Ok(0.0);
    }
    let m = model.state_dim();
    let mut acc = 0.0;
    for p in points {
        let (pred_norm, target_norm) = match model {
            TrainedModel::DdPinn(model) => {
                let z = model.net_input(&p.x0, &p.plan)?;
                let a = model.net.forward(&z)?;
                let tau = p.t / model.horizon();
                let g = crate::ansatz::eval_g(&model.ansatz, &a, &model.base, tau)?;
                let half = model.state_half_widths();
                let mid = model.bbox.state_midpoints();
                let x0n: Vec<f64> = p
                    .x0
                    .iter()
                    .zip(mid.iter())
                    .zip(half.iter())
                    .map(|((x, c), s)| (x - c) / s)
                    .collect();
                let pred: Vec<f64> = x0n.iter().zip(g.iter()).map(|(x, gj)| x + gj).collect();
                let tgt: Vec<f64> = p
                    .target
                    .iter()
                    .zip(mid.iter())
                    .zip(half.iter())
                    .map(|((x, c), s)| (x - c) / s)
                    .collect();
                (pred, tgt)
            }
            TrainedModel::Pinc(model) => {
                let z = model.net_input(&p.x0, &p.plan.knots[0], p.t)?;
                let y = model.net.forward(&z)?;
                (y, model.normalize_state(&p.target))
            }
        };
        if p.target.len() != m {
            return Err(Error::DimensionMismatch {
                context: "data target",
                expected: m,
                got: p.target.len(),
            });
        }
        acc += pred_norm
            .iter()
            .zip(target_norm.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>();
    }
    Ok(acc / (points.len() * m) as f64)
}

/// Learning-rate-annealing balance update: each auxiliary weight moves
/// toward `max|∇L_phys| / mean|∇L_i|` with EMA rate `rate`; the physics
/// weight stays 1. Auxiliary losses with zero gradient (or absent) keep
/// their weight.
pub fn lra_update(
    weights: &LossWeights,
    physics_grad: &MlpGradients,
    ic_grad: Option<&MlpGradients>,
    data_grad: Option<&MlpGradients>,
    rate: f64,
) -> LossWeights {
    let mut out = *weights;
    let phys_max = physics_grad.max_abs();
    if phys_max == 0.0 {
        return out;
    }
    if let Some(g) = ic_grad {
        let mean = g.mean_abs();
        if mean > 0.0 {
            out.ic = (1.0 - rate) * out.ic + rate * (phys_max / mean);
        }
    }
    if let Some(g) = data_grad {
        let mean = g.mean_abs();
        if mean > 0.0 {
            out.data = (1.0 - rate) * out.data + rate * (phys_max / mean);
        }
    }
    out
}

/// Adam with bias correction, β₁ = 0.9, β₂ = 0.999, ε = 1e-8.
#[derive(Debug, Clone)]
pub struct Adam {
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    step: u64,
    m: MlpGradients,
    v: MlpGradients,
}

impl Adam {
    pub fn new(net: &Mlp) -> Self {
        Adam {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            m: MlpGradients::zeros_like(net),
            v: MlpGradients::zeros_like(net),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, net: &mut Mlp, grads: &MlpGradients, lr: f64) {
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for l in 0..net.layer_count() {
            let apply = |p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]| {
                for i in 0..p.len() {
                    m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                    v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                    let m_hat = m[i] / bc1;
                    let v_hat = v[i] / bc2;
                    p[i] -= lr * m_hat / (v_hat.sqrt() + self.epsilon);
                }
            };
            apply(
                net.weights_mut(l),
                &grads.weights[l],
                &mut self.m.weights[l],
                &mut self.v.weights[l],
            );
            apply(
                net.biases_mut(l),
                &grads.biases[l],
                &mut self.m.biases[l],
                &mut self.v.biases[l],
            );
        }
    }
}

/// Halves the learning rate after `patience` epochs without relative
/// improvement of the observed validation loss; never increases it.
#[derive(Debug, Clone)]
pub struct PlateauScheduler {
    lr: f64,
    factor: f64,
    patience: usize,
    threshold: f64,
    best: f64,
    wait: usize,
}

impl PlateauScheduler {
    pub fn new(lr: f64, factor: f64, patience: usize, threshold: f64) -> Self {
        PlateauScheduler {
            lr,
            factor,
            patience,
            threshold,
            best: f64::INFINITY,
            wait: 0,
        }
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    pub fn observe(&mut self, val: f64) -> f64 {
        if val < self.best * (1.0 - self.threshold) {
            self.best = val;
            self.wait = 0;
        } else {
            self.wait += 1;
            if self.wait >= self.patience {
                self.lr *= self.factor;
                self.wait = 0;
            }
        }
        self.lr
    }
}

/// Per-epoch log record. Loss fields are `None` when the corresponding
/// point set is absent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub lambda_ic: f64,
    pub lambda_physics: f64,
    pub lambda_data: f64,
    pub train_loss: f64,
    pub val_physics: Option<f64>,
    pub val_ic: Option<f64>,
    pub val_data: Option<f64>,
    pub val_total: f64,
}

/// Summary of the final epoch.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingSummary {
    pub epochs_run: usize,
    pub final_lr: f64,
    pub final_val_physics: Option<f64>,
    pub final_val_ic: Option<f64>,
    pub final_val_data: Option<f64>,
    pub final_val_total: Option<f64>,
    pub diverged_at: Option<usize>,
    pub wall_clock_ms: f64,
}

pub struct TrainOutcome {
    pub model: TrainedModel,
    pub log: Vec<EpochRecord>,
    /// Wall-clock per epoch, kept out of the loss log so repeated runs with
    /// one seed produce identical logs.
    pub epoch_wall_ms: Vec<f64>,
    pub weights: LossWeights,
    pub summary: TrainingSummary,
}

/// Network shape for a configuration on a given system.
pub fn network_shape(cfg: &TrainConfig, state_dim: usize, input_dim: usize) -> Vec<usize> {
    let mut shape = Vec::with_capacity(cfg.hidden_layers + 2);
    match cfg.arch {
        Architecture::DdPinn => {
            shape.push(state_dim + input_dim * cfg.delta_u.knot_count());
            shape.extend(std::iter::repeat(cfg.neurons).take(cfg.hidden_layers));
            let spec = AnsatzSpec::new(state_dim, cfg.n_g, cfg.damped);
            shape.push(spec.coeff_len());
        }
        Architecture::Pinc => {
            shape.push(state_dim + input_dim + 1);
            shape.extend(std::iter::repeat(cfg.neurons).take(cfg.hidden_layers));
            shape.push(state_dim);
        }
    }
    shape
}

/// Glorot-initialized model for a configuration (RNG stream 0 of the seed).
pub fn initialize_model(
    system: &SystemModel,
    bbox: &SamplingBox,
    cfg: &TrainConfig,
) -> Result<TrainedModel> {
    cfg.validate()?;
    let shape = network_shape(cfg, system.state_dim(), system.input_dim());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(0);
    let net = Mlp::glorot(&shape, &mut rng)?;
    let base = BaseFunction::by_name(&cfg.base_function)?;
    match cfg.arch {
        Architecture::DdPinn => {
            let spec = AnsatzSpec::new(system.state_dim(), cfg.n_g, cfg.damped);
            Ok(TrainedModel::DdPinn(DdPinnModel::new(
                net,
                spec,
                base,
                bbox.clone(),
                cfg.frequency_hz,
                cfg.delta_u,
            )?))
        }
        Architecture::Pinc => Ok(TrainedModel::Pinc(PincModel::new(
            net,
            bbox.clone(),
            cfg.frequency_hz,
        )?)),
    }
}

// ── batch gradient machinery ─────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum LossKind {
    Physics,
    Ic,
    Data,
}

#[derive(Debug, Clone, Copy)]
struct ChunkTask {
    kind: LossKind,
    start: usize,
    end: usize,
}

const CHUNK: usize = 64;

struct BatchSlices<'a> {
    collo: &'a [CollocationPoint],
    ic: &'a [IcPoint],
    data: &'a [DataPoint],
}

fn chunk_tasks(batch: &BatchSlices<'_>, kinds: &[LossKind]) -> Vec<ChunkTask> {
    let mut tasks = Vec::new();
    for &kind in kinds {
        let n = match kind {
            LossKind::Physics => batch.collo.len(),
            LossKind::Ic => batch.ic.len(),
            LossKind::Data => batch.data.len(),
        };
        let mut start = 0;
        while start < n {
            let end = (start + CHUNK).min(n);
            tasks.push(ChunkTask { kind, start, end });
            start = end;
        }
    }
    tasks
}

/// Sum of squared residuals of one chunk, built on a private tape, with
/// parameter gradients of that sum.
fn run_chunk(
    model: &TrainedModel,
    system: &SystemModel,
    batch: &BatchSlices<'_>,
    task: ChunkTask,
) -> Result<(f64, MlpGradients)> {
    let mut tape = Tape::new(model.net());
    let mut terms = Vec::with_capacity(task.end - task.start);
    match (task.kind, model) {
        (LossKind::Physics, TrainedModel::DdPinn(m)) => {
            let half = m.state_half_widths().to_vec();
            let horizon = m.horizon();
            let zeros = vec![0.0; half.len()];
            let f_scale: Vec<f64> = half.iter().map(|s| horizon / s).collect();
            for p in &batch.collo[task.start..task.end] {
                let z = m.net_input(&p.x0, &p.plan)?;
                let zi = tape.input(z);
                let a = tape.mlp_forward(zi)?;
                let (g, g_dot) = tape.ansatz(a, m.ansatz, &m.base, p.t / horizon)?;
                let x_hat = tape.axpy(g, half.clone(), p.x0.clone());
                let u_t = p.plan.interpolate(p.t)?;
                let f = tape.dynamics(system, x_hat, &u_t)?;
                let f_scaled = tape.axpy(f, f_scale.clone(), zeros.clone());
                let l = tape.sum_sq_diff(g_dot, f_scaled);
                terms.push((1.0, l));
            }
        }
        (LossKind::Physics, TrainedModel::Pinc(m)) => {
            let half = m.state_half_widths().to_vec();
            let horizon = m.horizon();
            let zeros = vec![0.0; half.len()];
            let mid = m.state_midpoints().to_vec();
            let f_scale: Vec<f64> = half.iter().map(|s| horizon / s).collect();
            let t_index = m.time_index();
            for p in &batch.collo[task.start..task.end] {
                let u0 = &p.plan.knots[0];
                let z = m.net_input(&p.x0, u0, p.t)?;
                let mut seed = vec![0.0; z.len()];
                seed[t_index] = 1.0;
                let zi = tape.input_with_tangent(z, seed)?;
                let y = tape.mlp_forward(zi)?;
                let d_tau = tape.tangent_of(y)?;
                let x_hat = tape.axpy(y, half.clone(), mid.clone());
                let f = tape.dynamics(system, x_hat, u0)?;
                let f_scaled = tape.axpy(f, f_scale.clone(), zeros.clone());
                let l = tape.sum_sq_diff(d_tau, f_scaled);
                terms.push((1.0, l));
            }
        }
        (LossKind::Ic, TrainedModel::Pinc(m)) => {
            for p in &batch.ic[task.start..task.end] {
                let z = m.net_input(&p.x0, &p.u0, 0.0)?;
                let zi = tape.input(z);
                let y = tape.mlp_forward(zi)?;
                let l = tape.sum_sq_diff_const(y, m.normalize_state(&p.x0));
                terms.push((1.0, l));
            }
        }
        (LossKind::Ic, TrainedModel::DdPinn(_)) => {
            return Err(Error::Misuse {
                context: "initial-condition loss is identically zero for the ddpinn",
            })
        }
        (LossKind::Data, TrainedModel::DdPinn(m)) => {
            let half = m.state_half_widths().to_vec();
            let mid = m.bbox.state_midpoints();
            let horizon = m.horizon();
            let ones = vec![1.0; half.len()];
            for p in &batch.data[task.start..task.end] {
                let z = m.net_input(&p.x0, &p.plan)?;
                let zi = tape.input(z);
                let a = tape.mlp_forward(zi)?;
                let (g, _) = tape.ansatz(a, m.ansatz, &m.base, p.t / horizon)?;
                let x0n: Vec<f64> = p
                    .x0
                    .iter()
                    .zip(mid.iter())
                    .zip(half.iter())
                    .map(|((x, c), s)| (x - c) / s)
                    .collect();
                let pred = tape.axpy(g, ones.clone(), x0n);
                let tgt: Vec<f64> = p
                    .target
                    .iter()
                    .zip(mid.iter())
                    .zip(half.iter())
                    .map(|((x, c), s)| (x - c) / s)
                    .collect();
                let l = tape.sum_sq_diff_const(pred, tgt);
                terms.push((1.0, l));
            }
        }
        (LossKind::Data, TrainedModel::Pinc(m)) => {
            for p in &batch.data[task.start..task.end] {
                let z = m.net_input(&p.x0, &p.plan.knots[0], p.t)?;
                let zi = tape.input(z);
                let y = tape.mlp_forward(zi)?;
                let l = tape.sum_sq_diff_const(y, m.normalize_state(&p.target));
                terms.push((1.0, l));
            }
        }
    }
    let root = tape.weighted_sum(terms);
    let value = tape.scalar(root);
    if !value.is_finite() {
        return Err(Error::NonFinite {
            context: "chunk loss".into(),
        });
    }
    let grads = tape.backward(root)?;
    Ok((value, grads))
}

/// Per-loss sums and gradients of one batch: `(sum, gradient-of-sum)` per
/// requested kind, reduced over chunks in a fixed order.
fn batch_sums(
    model: &TrainedModel,
    system: &SystemModel,
    batch: &BatchSlices<'_>,
    kinds: &[LossKind],
    threads: usize,
) -> Result<Vec<(LossKind, f64, MlpGradients)>> {
    let tasks = chunk_tasks(batch, kinds);
    let mut results: Vec<Option<(f64, MlpGradients)>> = (0..tasks.len()).map(|_| None).collect();
    if threads <= 1 || tasks.len() <= 1 {
        for (i, &task) in tasks.iter().enumerate() {
            results[i] = Some(run_chunk(model, system, batch, task)?);
        }
    } else {
        let next = AtomicUsize::new(0);
        let slots = Mutex::new(&mut results);
        let errors: Mutex<Vec<Error>> = Mutex::new(Vec::new());
        std::thread::scope(|scope| {
            for _ in 0..threads.min(tasks.len()) {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    if i >= tasks.len() {
                        break;
                    }
                    match run_chunk(model, system, batch, tasks[i]) {
                        Ok(out) => {
                            slots.lock().unwrap()[i] = Some(out);
                        }
                        Err(e) => {
                            errors.lock().unwrap().push(e);
                            break;
                        }
                    }
                });
            }
        });
        if let Some(e) = errors.into_inner().unwrap().into_iter().next() {
            return Err(e);
        }
    }
    let mut out: Vec<(LossKind, f64, MlpGradients)> = kinds
        .iter()
        .map(|&k| (k, 0.0, MlpGradients::zeros_like(model.net())))
        .collect();
    for (task, result) in tasks.iter().zip(results.into_iter()) {
        let (value, grads) = result.expect("all chunks completed");
        let slot = out
            .iter_mut()
            .find(|(k, _, _)| *k == task.kind)
            .expect("kind present");
        slot.1 += value;
        slot.2.axpy(1.0, &grads);
    }
    Ok(out)
}

struct SampledPoints {
    collo_train: Vec<CollocationPoint>,
    collo_val: Vec<CollocationPoint>,
    ic_train: Vec<IcPoint>,
    ic_val: Vec<IcPoint>,
    data_train: Vec<DataPoint>,
    data_val: Vec<DataPoint>,
}

fn sample_points(
    system: &SystemModel,
    bbox: &SamplingBox,
    cfg: &TrainConfig,
) -> Result<SampledPoints> {
    let m = system.state_dim();
    let p = system.input_dim();
    let order = match cfg.arch {
        Architecture::DdPinn => cfg.delta_u,
        Architecture::Pinc => ExcitationOrder::Zoh,
    };
    let knots = order.knot_count();
    let step = cfg.step();

    let mut collo = Vec::new();
    if cfg.n_collo > 0 {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(1);
        let ranges = bbox.collocation_ranges(knots);
        for point in latin_hypercube_with(cfg.n_collo, &ranges, &mut rng)? {
            let x0 = point[..m].to_vec();
            let plan = ExcitationPlan::from_flat(order, &point[m..m + p * knots], p, step)?;
            let t = point[m + p * knots];
            collo.push(CollocationPoint { x0, plan, t });
        }
    }

    let mut ic = Vec::new();
    if cfg.n_ic > 0 {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(2);
        let mut ranges = bbox.state_ranges();
        ranges.extend(bbox.input_ranges());
        for point in latin_hypercube_with(cfg.n_ic, &ranges, &mut rng)? {
            ic.push(IcPoint {
                x0: point[..m].to_vec(),
                u0: point[m..].to_vec(),
            });
        }
    }

    let data = generate_dataset(
        system,
        bbox,
        order,
        cfg.frequency_hz,
        cfg.n_data,
        cfg.seed.wrapping_add(3),
    )?;

    fn split<T>(mut v: Vec<T>, frac: f64) -> (Vec<T>, Vec<T>) {
        let n_val = ((v.len() as f64) * frac).round() as usize;
        let val = v.split_off(v.len() - n_val.min(v.len()));
        (v, val)
    }

    let (collo_train, collo_val) = split(collo, cfg.val_fraction);
    let (ic_train, ic_val) = split(ic, cfg.val_fraction);
    let (data_train, data_val) = split(data, cfg.val_fraction);
    Ok(SampledPoints {
        collo_train,
        collo_val,
        ic_train,
        ic_val,
        data_train,
        data_val,
    })
}

fn batch_range(total: usize, batches: usize, b: usize) -> (usize, usize) {
    let base = total / batches;
    let rem = total % batches;
    let start = b * base + b.min(rem);
    let size = base + usize::from(b < rem);
    (start, start + size)
}

/// Full training run: sampling, epoch loop with loss balancing, plateau
/// scheduling and early stop. Divergence (non-finite validation loss)
/// aborts with the parameters of the last finite epoch.
pub fn train_run(
    system: &SystemModel,
    bbox: &SamplingBox,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let start = Instant::now();
    let mut model = initialize_model(system, bbox, cfg)?;
    let points = sample_points(system, bbox, cfg)?;
    let mut weights = LossWeights::initial(cfg.arch);
    let mut adam = Adam::new(model.net());
    let mut scheduler = PlateauScheduler::new(
        cfg.alpha_init,
        cfg.plateau_factor,
        cfg.plateau_patience,
        cfg.plateau_threshold,
    );
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    shuffle_rng.set_stream(4);

    let m = model.state_dim();
    let has_physics = !points.collo_train.is_empty();
    let has_ic = cfg.arch == Architecture::Pinc && !points.ic_train.is_empty();
    let has_data = !points.data_train.is_empty();
    let multi_loss = [has_physics, has_ic, has_data].iter().filter(|&&b| b).count() > 1;

    let mut log: Vec<EpochRecord> = Vec::new();
    let mut epoch_wall_ms: Vec<f64> = Vec::new();
    let mut diverged_at = None;
    let mut snapshot = model.net().clone();

    let mut collo_idx: Vec<usize> = (0..points.collo_train.len()).collect();
    let mut ic_idx: Vec<usize> = (0..points.ic_train.len()).collect();
    let mut data_idx: Vec<usize> = (0..points.data_train.len()).collect();

    let mut epochs_run = 0;
    'epochs: for epoch in 0..cfg.epochs {
        let t_epoch = Instant::now();
        collo_idx.shuffle(&mut shuffle_rng);
        ic_idx.shuffle(&mut shuffle_rng);
        data_idx.shuffle(&mut shuffle_rng);

        let mut epoch_train_loss = 0.0;
        let lr = scheduler.lr();

        for b in 0..cfg.batches {
            let (cs, ce) = batch_range(points.collo_train.len(), cfg.batches, b);
            let (is, ie) = batch_range(points.ic_train.len(), cfg.batches, b);
            let (ds, de) = batch_range(points.data_train.len(), cfg.batches, b);
            let collo_batch: Vec<CollocationPoint> = collo_idx[cs..ce]
                .iter()
                .map(|&i| points.collo_train[i].clone())
                .collect();
            let ic_batch: Vec<IcPoint> =
                ic_idx[is..ie].iter().map(|&i| points.ic_train[i].clone()).collect();
            let data_batch: Vec<DataPoint> =
                data_idx[ds..de].iter().map(|&i| points.data_train[i].clone()).collect();
            let batch = BatchSlices {
                collo: &collo_batch,
                ic: &ic_batch,
                data: &data_batch,
            };
            let mut kinds = Vec::new();
            if !collo_batch.is_empty() {
                kinds.push(LossKind::Physics);
            }
            if !ic_batch.is_empty() {
                kinds.push(LossKind::Ic);
            }
            if !data_batch.is_empty() {
                kinds.push(LossKind::Data);
            }
            if kinds.is_empty() {
                continue;
            }
            let sums = match batch_sums(&model, system, &batch, &kinds, cfg.threads) {
                Ok(s) => s,
                Err(Error::NonFinite { .. }) => {
                    diverged_at = Some(epoch);
                    *model.net_mut() = snapshot.clone();
                    break 'epochs;
                }
                Err(e) => return Err(e),
            };

            // Loss balancing once per epoch, on the first batch, from the
            // per-loss gradient statistics (gradients of the means).
            if b == 0 && multi_loss && cfg.lra_rate > 0.0 {
                let mut phys = None;
                let mut icg = None;
                let mut datag = None;
                for (kind, _, grads) in &sums {
                    let count = match kind {
                        LossKind::Physics => collo_batch.len(),
                        LossKind::Ic => ic_batch.len(),
                        LossKind::Data => data_batch.len(),
                    };
                    let mut g = grads.clone();
                    g.scale(1.0 / (count * m) as f64);
                    match kind {
                        LossKind::Physics => phys = Some(g),
                        LossKind::Ic => icg = Some(g),
                        LossKind::Data => datag = Some(g),
                    }
                }
                if let Some(phys) = phys {
                    weights = lra_update(&weights, &phys, icg.as_ref(), datag.as_ref(), cfg.lra_rate);
                }
            }

            let mut total_grads = MlpGradients::zeros_like(model.net());
            let mut batch_loss = 0.0;
            for (kind, sum, grads) in &sums {
                let (count, lambda) = match kind {
                    LossKind::Physics => (collo_batch.len(), weights.physics),
                    LossKind::Ic => (ic_batch.len(), weights.ic),
                    LossKind::Data => (data_batch.len(), weights.data),
                };
                let inv = 1.0 / (count * m) as f64;
                batch_loss += lambda * sum * inv;
                total_grads.axpy(lambda * inv, grads);
            }
            adam.step(model.net_mut(), &total_grads, lr);
            epoch_train_loss += batch_loss;
        }
        epoch_train_loss /= cfg.batches as f64;

        let val_physics = if points.collo_val.is_empty() {
            None
        } else {
            Some(physics_loss(&model, system, &points.collo_val).unwrap_or(f64::NAN))
        };
        let val_ic = if cfg.arch == Architecture::Pinc && !points.ic_val.is_empty() {
            Some(ic_loss(&model, &points.ic_val).unwrap_or(f64::NAN))
        } else {
            None
        };
        let val_data = if points.data_val.is_empty() {
            None
        } else {
            Some(data_loss(&model, &points.data_val).unwrap_or(f64::NAN))
        };
        let val_total = weights.physics * val_physics.unwrap_or(0.0)
            + weights.ic * val_ic.unwrap_or(0.0)
            + weights.data * val_data.unwrap_or(0.0);

        log.push(EpochRecord {
            epoch,
            lr,
            lambda_ic: weights.ic,
            lambda_physics: weights.physics,
            lambda_data: weights.data,
            train_loss: epoch_train_loss,
            val_physics,
            val_ic,
            val_data,
            val_total,
        });
        epoch_wall_ms.push(t_epoch.elapsed().as_secs_f64() * 1e3);
        epochs_run = epoch + 1;

        if !val_total.is_finite() || !epoch_train_loss.is_finite() {
            diverged_at = Some(epoch);
            *model.net_mut() = snapshot.clone();
            break;
        }
        snapshot = model.net().clone();

        let lr_after = scheduler.observe(val_total);
        if lr_after < cfg.alpha_min {
            break;
        }
    }

    let summary = TrainingSummary {
        epochs_run,
        final_lr: scheduler.lr(),
        final_val_physics: log.last().and_then(|r| r.val_physics),
        final_val_ic: log.last().and_then(|r| r.val_ic),
        final_val_data: log.last().and_then(|r| r.val_data),
        final_val_total: log.last().map(|r| r.val_total),
        diverged_at,
        wall_clock_ms: start.elapsed().as_secs_f64() * 1e3,
    };
    Ok(TrainOutcome {
        model,
        log,
        epoch_wall_ms,
        weights,
        summary,
    })
}
