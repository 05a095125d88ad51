//! Self-loop prediction and trajectory evaluation metrics.
//!
//! A rollout feeds each predicted state back as the next initial state at
//! the fixed step `T = 1/f`. Predictors are abstracted behind
//! [`StepPredictor`] so the RK4 oracle can stand in for a model, which makes
//! the harness self-checking: the oracle rollout reproduces `simulate()`
//! bitwise on matching grids.

use std::time::Instant;

use crate::dynamics::SystemModel;
use crate::error::{Error, Result};
use crate::integrate::{rk4_step, Trajectory};
use crate::model::{DdPinnModel, ExcitationOrder, ExcitationPlan, PincModel};
use crate::sample::SamplingBox;
use crate::signal::Signal;
use crate::train::TrainedModel;

/// Anything that can advance the state by one interval `T`.
pub trait StepPredictor {
    fn state_dim(&self) -> usize;
    /// Rollout step `T`.
    fn step(&self) -> f64;
    /// Knots consumed per step.
    fn knots_per_step(&self) -> usize;
    /// Advance from `x` over `[k·T, (k+1)·T]` given this step's knots.
    fn predict_step(&self, step_index: usize, x: &[f64], knots: &[Vec<f64>]) -> Result<Vec<f64>>;
    /// Sampling box for divergence/box-exit bookkeeping, when known.
    fn sampling_box(&self) -> Option<&SamplingBox>;
}

impl StepPredictor for DdPinnModel {
    fn state_dim(&self) -> usize {
        self.bbox.state_dim()
    }

    fn step(&self) -> f64 {
        DdPinnModel::step(self)
    }

    fn knots_per_step(&self) -> usize {
        self.order.knot_count()
    }

    fn predict_step(&self, _k: usize, x: &[f64], knots: &[Vec<f64>]) -> Result<Vec<f64>> {
        let plan = ExcitationPlan::new(self.order, knots.to_vec(), DdPinnModel::step(self))?;
        self.predict(x, &plan, DdPinnModel::step(self))
    }

    fn sampling_box(&self) -> Option<&SamplingBox> {
        Some(&self.bbox)
    }
}

impl StepPredictor for PincModel {
    fn state_dim(&self) -> usize {
        self.bbox.state_dim()
    }

    fn step(&self) -> f64 {
        PincModel::step(self)
    }

    fn knots_per_step(&self) -> usize {
        1
    }

    fn predict_step(&self, _k: usize, x: &[f64], knots: &[Vec<f64>]) -> Result<Vec<f64>> {
        self.predict(x, &knots[0], PincModel::step(self))
    }

    fn sampling_box(&self) -> Option<&SamplingBox> {
        Some(&self.bbox)
    }
}

impl StepPredictor for TrainedModel {
    fn state_dim(&self) -> usize {
        TrainedModel::state_dim(self)
    }

    fn step(&self) -> f64 {
        TrainedModel::step(self)
    }

    fn knots_per_step(&self) -> usize {
        match self {
            TrainedModel::DdPinn(m) => StepPredictor::knots_per_step(m),
            TrainedModel::Pinc(m) => StepPredictor::knots_per_step(m),
        }
    }

    fn predict_step(&self, k: usize, x: &[f64], knots: &[Vec<f64>]) -> Result<Vec<f64>> {
        match self {
            TrainedModel::DdPinn(m) => m.predict_step(k, x, knots),
            TrainedModel::Pinc(m) => m.predict_step(k, x, knots),
        }
    }

    fn sampling_box(&self) -> Option<&SamplingBox> {
        Some(self.bbox())
    }
}

/// Ground-truth predictor: integrates each interval with fixed-step RK4
/// under the true driving signal. Substep times are computed from a global
/// substep counter so a rollout matches `simulate()` bitwise.
pub struct Rk4Oracle<'a> {
    pub system: &'a SystemModel,
    pub signal: &'a Signal,
    pub step: f64,
    pub substeps: usize,
}

impl StepPredictor for Rk4Oracle<'_> {
    fn state_dim(&self) -> usize {
        self.system.state_dim()
    }

    fn step(&self) -> f64 {
        self.step
    }

    fn knots_per_step(&self) -> usize {
        1
    }

    fn predict_step(&self, k: usize, x: &[f64], _knots: &[Vec<f64>]) -> Result<Vec<f64>> {
        let h = self.step / self.substeps as f64;
        let base = k * self.substeps;
        let u = |t: f64| self.signal.eval(t);
        let mut state = x.to_vec();
        for j in 0..self.substeps {
            state = rk4_step(self.system, &state, &u, (base + j) as f64 * h, h)?;
        }
        Ok(state)
    }

    fn sampling_box(&self) -> Option<&SamplingBox> {
        None
    }
}

/// Self-loop outcome: the predicted trajectory, per-step latency samples
/// (seconds, warm-up excluded), divergence/box-exit bookkeeping, and the
/// scaled MSE once attached by an evaluation.
#[derive(Debug, Clone)]
pub struct RolloutResult {
    pub trajectory: Trajectory,
    pub step_latencies: Vec<f64>,
    pub diverged_at: Option<usize>,
    pub box_exit_step: Option<usize>,
    pub scaled_mse: Option<f64>,
}

/// Knot sequence for `n_steps` rollout steps of size `step`: step `k` takes
/// the signal at `k·T` (always), `k·T + T/2` (quadratic) and `(k+1)·T`
/// (linear and quadratic).
pub fn knot_sequence(
    signal: &Signal,
    step: f64,
    order: ExcitationOrder,
    n_steps: usize,
) -> Vec<Vec<Vec<f64>>> {
    (0..n_steps)
        .map(|k| {
            let t0 = k as f64 * step;
            match order {
                ExcitationOrder::Zoh => vec![signal.eval(t0)],
                ExcitationOrder::Linear => vec![signal.eval(t0), signal.eval(t0 + step)],
                ExcitationOrder::Quadratic => vec![
                    signal.eval(t0),
                    signal.eval(t0 + 0.5 * step),
                    signal.eval(t0 + step),
                ],
            }
        })
        .collect()
}

const WARMUP_CALLS: usize = 8;
/// Divergence threshold as a multiple of the box half-width.
const DIVERGENCE_FACTOR: f64 = 1e3;

fn diverged(x: &[f64], bbox: Option<&SamplingBox>) -> bool {
    if x.iter().any(|v| !v.is_finite()) {
        return true;
    }
    if let Some(b) = bbox {
        let half = b.state_half_widths();
        return x
            .iter()
            .zip(half.iter())
            .any(|(v, s)| v.abs() > DIVERGENCE_FACTOR * s);
    }
    false
}

/// Feed the prediction back `n_steps` times. A non-finite or exploding
/// state truncates the rollout with the offending step recorded.
pub fn self_loop(
    predictor: &dyn StepPredictor,
    x0: &[f64],
    knots_per_step: &[Vec<Vec<f64>>],
    n_steps: usize,
) -> Result<RolloutResult> {
    if knots_per_step.len() < n_steps {
        return Err(Error::InvalidArgument {
            context: format!(
                "rollout of {n_steps} steps needs {n_steps} knot sets, got {}",
                knots_per_step.len()
            ),
        });
    }
    let step = predictor.step();
    let bbox = predictor.sampling_box();
    let mut times = vec![0.0];
    let mut states = vec![x0.to_vec()];
    let mut inputs = Vec::with_capacity(n_steps + 1);
    let mut latencies = Vec::with_capacity(n_steps);
    let mut diverged_at = None;
    let mut box_exit_step = bbox.and_then(|b| b.state_outside(x0).map(|_| 0));

    if n_steps > 0 {
        for _ in 0..WARMUP_CALLS {
            let _ = predictor.predict_step(0, x0, &knots_per_step[0])?;
        }
    }

    let mut x = x0.to_vec();
    for (k, knots) in knots_per_step.iter().take(n_steps).enumerate() {
        inputs.push(knots[0].clone());
        let start = Instant::now();
        let next = predictor.predict_step(k, &x, knots);
        latencies.push(start.elapsed().as_secs_f64());
        let next = match next {
            Ok(v) => v,
            Err(Error::NonFinite { .. }) => {
                diverged_at = Some(k);
                break;
            }
            Err(e) => return Err(e),
        };
        if diverged(&next, bbox) {
            diverged_at = Some(k);
            break;
        }
        if box_exit_step.is_none() {
            if let Some(b) = bbox {
                if b.state_outside(&next).is_some() {
                    box_exit_step = Some(k + 1);
                }
            }
        }
        times.push((k + 1) as f64 * step);
        states.push(next.clone());
        x = next;
    }
    // input at the final grid point: tail knot of the last executed step
    let executed = times.len() - 1;
    if executed > 0 {
        let last = &knots_per_step[executed - 1];
        inputs.push(last.last().expect("nonempty knots").clone());
        inputs.truncate(times.len());
    } else if let Some(first) = knots_per_step.first() {
        inputs = vec![first[0].clone()];
    } else {
        inputs = vec![Vec::new()];
    }

    Ok(RolloutResult {
        trajectory: Trajectory {
            times,
            states,
            inputs,
        },
        step_latencies: latencies,
        diverged_at,
        box_exit_step,
        scaled_mse: None,
    })
}

/// MSE between two trajectories with each state channel divided by its
/// sampling half-width, over all grid points of `pred` up to `horizon`.
/// The reference is interpolated onto the prediction grid.
pub fn scaled_mse(
    pred: &Trajectory,
    truth: &Trajectory,
    bbox: &SamplingBox,
    horizon: f64,
) -> Result<f64> {
    let half = bbox.state_half_widths();
    let m = bbox.state_dim();
    let slack = 1e-9 * horizon.max(1.0);
    let mut acc = 0.0;
    let mut count = 0usize;
    for (i, &t) in pred.times.iter().enumerate() {
        if t > horizon + slack {
            break;
        }
        let reference = truth.state_at(t)?;
        for j in 0..m {
            let d = (pred.states[i][j] - reference[j]) / half[j];
            acc += d * d;
        }
        count += 1;
    }
    if count == 0 {
        return Err(Error::InvalidArgument {
            context: "scaled mse: no overlapping samples up to the horizon".into(),
        });
    }
    Ok(acc / (count * m) as f64)
}

/// Median over a nonempty sample.
pub fn median(samples: &[f64]) -> f64 {
    let mut v = samples.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Median per-step latency ratio `model / reference` over at least
/// `steps` repeated single-interval predictions, interleaved in blocks so
/// both sides see the same machine conditions. Single-threaded by
/// construction; warm-up excluded.
pub fn relative_prediction_time(
    model: &dyn StepPredictor,
    model_knots: &[Vec<f64>],
    reference: &dyn StepPredictor,
    reference_knots: &[Vec<f64>],
    x0: &[f64],
    steps: usize,
) -> Result<f64> {
    let steps = steps.max(1);
    for _ in 0..WARMUP_CALLS {
        let _ = model.predict_step(0, x0, model_knots)?;
        let _ = reference.predict_step(0, x0, reference_knots)?;
    }
    let block = 25usize;
    let mut lat_model = Vec::with_capacity(steps);
    let mut lat_reference = Vec::with_capacity(steps);
    let mut done = 0;
    while done < steps {
        let n = block.min(steps - done);
        for _ in 0..n {
            let t0 = Instant::now();
            let _ = model.predict_step(0, x0, model_knots)?;
            lat_model.push(t0.elapsed().as_secs_f64());
        }
        for _ in 0..n {
            let t0 = Instant::now();
            let _ = reference.predict_step(0, x0, reference_knots)?;
            lat_reference.push(t0.elapsed().as_secs_f64());
        }
        done += n;
    }
    Ok(median(&lat_model) / median(&lat_reference))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ansatz::{AnsatzSpec, BaseFunction};
    use crate::autodiff::mlp::Mlp;
    use crate::dynamics::MsdParams;
    use crate::integrate::simulate;
    use crate::signal::SignalSpec;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn msd_box(f: f64) -> SamplingBox {
        SamplingBox::new(
            vec![-0.4, -18.0],
            vec![0.4, 18.0],
            vec![-1.0],
            vec![1.0],
            1.1 / f,
        )
        .unwrap()
    }

    fn small_ddpinn(f: f64, order: ExcitationOrder, seed: u64) -> DdPinnModel {
        let spec = AnsatzSpec::new(2, 3, true);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = Mlp::glorot(&[2 + order.knot_count(), 8, spec.coeff_len()], &mut rng).unwrap();
        DdPinnModel::new(net, spec, BaseFunction::sine(), msd_box(f), f, order).unwrap()
    }

    #[test]
    fn zero_steps_returns_initial_state_only() {
        let model = small_ddpinn(100.0, ExcitationOrder::Zoh, 1);
        let out = self_loop(&model, &[0.1, 0.0], &[], 0).unwrap();
        assert_eq!(out.trajectory.states, vec![vec![0.1, 0.0]]);
        assert_eq!(out.trajectory.times, vec![0.0]);
        assert!(out.diverged_at.is_none());
    }

    #[test]
    fn first_point_is_exactly_x0() {
        let model = small_ddpinn(100.0, ExcitationOrder::Zoh, 2);
        let knots = vec![vec![vec![0.2]]; 3];
        let out = self_loop(&model, &[0.05, -1.0], &knots, 3).unwrap();
        assert_eq!(out.trajectory.states[0], vec![0.05, -1.0]);
        assert_eq!(out.step_latencies.len(), 3);
    }

    #[test]
    fn chained_states_are_shared_between_steps() {
        // the end state of step k is bitwise the initial state of step k+1
        let model = small_ddpinn(100.0, ExcitationOrder::Linear, 3);
        let signal = SignalSpec::Chirp {
            amplitude: 0.5,
            f0_hz: 0.5,
            f1_hz: 2.0,
            duration_s: 1.0,
        }
        .build()
        .unwrap();
        let knots = knot_sequence(&signal, StepPredictor::step(&model), model.order, 4);
        let out = self_loop(&model, &[0.0, 0.0], &knots, 4).unwrap();
        for k in 0..3 {
            let next = model
                .predict_step(k, &out.trajectory.states[k], &knots[k])
                .unwrap();
            assert_eq!(next, out.trajectory.states[k + 1]);
        }
    }

    #[test]
    fn oracle_rollout_reproduces_simulate_bitwise() {
        let system = SystemModel::msd(MsdParams::default()).unwrap();
        let signal = SignalSpec::Chirp {
            amplitude: 0.8,
            f0_hz: 0.2,
            f1_hz: 3.0,
            duration_s: 2.0,
        }
        .build()
        .unwrap();
        let f = 100.0;
        let step = 1.0 / f;
        let substeps = 100;
        let oracle = Rk4Oracle {
            system: &system,
            signal: &signal,
            step,
            substeps,
        };
        let n_steps = 50;
        let knots = knot_sequence(&signal, step, ExcitationOrder::Zoh, n_steps);
        let rolled = self_loop(&oracle, &[0.0, 0.0], &knots, n_steps).unwrap();
        let h = step / substeps as f64;
        let u = |t: f64| signal.eval(t);
        let reference = simulate(&system, &[0.0, 0.0], &u, n_steps as f64 * step, h).unwrap();
        for k in 0..=n_steps {
            let fine = &reference.states[k * substeps];
            for (a, b) in rolled.trajectory.states[k].iter().zip(fine.iter()) {
                assert_eq!(a.to_bits(), b.to_bits(), "step {k}");
            }
        }
    }

    #[test]
    fn grid_spacing_is_exactly_the_step() {
        let model = small_ddpinn(50.0, ExcitationOrder::Zoh, 9);
        let knots = vec![vec![vec![0.0]]; 5];
        let out = self_loop(&model, &[0.0, 0.0], &knots, 5).unwrap();
        for (k, &t) in out.trajectory.times.iter().enumerate() {
            assert_eq!(t, k as f64 * 0.02);
        }
    }

    #[test]
    fn scaled_mse_zero_for_identical_trajectories() {
        let t = Trajectory {
            times: vec![0.0, 0.1, 0.2],
            states: vec![vec![0.1, 0.2], vec![0.2, 0.1], vec![0.0, 0.0]],
            inputs: vec![vec![0.0]; 3],
        };
        let b = msd_box(100.0);
        assert_eq!(scaled_mse(&t, &t, &b, 0.2).unwrap(), 0.0);
    }

    #[test]
    fn scaled_mse_hand_value() {
        // single channel, half-width 2, error 1 → 0.25
        let bbox = SamplingBox::new(vec![-2.0], vec![2.0], vec![-1.0], vec![1.0], 0.011).unwrap();
        let pred = Trajectory {
            times: vec![0.0],
            states: vec![vec![1.0]],
            inputs: vec![vec![0.0]],
        };
        let truth = Trajectory {
            times: vec![0.0],
            states: vec![vec![0.0]],
            inputs: vec![vec![0.0]],
        };
        assert_eq!(scaled_mse(&pred, &truth, &bbox, 0.0).unwrap(), 0.25);
    }

    #[test]
    fn scaled_mse_invariant_under_channel_rescaling() {
        let mk = |scale: f64| {
            (
                Trajectory {
                    times: vec![0.0, 1.0],
                    states: vec![vec![0.1 * scale, 0.2], vec![0.3 * scale, -0.1]],
                    inputs: vec![vec![0.0]; 2],
                },
                Trajectory {
                    times: vec![0.0, 1.0],
                    states: vec![vec![0.15 * scale, 0.1], vec![0.2 * scale, 0.0]],
                    inputs: vec![vec![0.0]; 2],
                },
                SamplingBox::new(
                    vec![-0.4 * scale, -1.0],
                    vec![0.4 * scale, 1.0],
                    vec![-1.0],
                    vec![1.0],
                    1.0,
                )
                .unwrap(),
            )
        };
        let (p1, t1, b1) = mk(1.0);
        let (p2, t2, b2) = mk(37.0);
        let a = scaled_mse(&p1, &t1, &b1, 1.0).unwrap();
        let b = scaled_mse(&p2, &t2, &b2, 1.0).unwrap();
        assert!((a - b).abs() < 1e-15);
    }

    #[test]
    fn empty_overlap_is_an_error() {
        let t = Trajectory {
            times: vec![1.0],
            states: vec![vec![0.0, 0.0]],
            inputs: vec![vec![0.0]],
        };
        let mut pred = t.clone();
        pred.times = vec![2.0];
        assert!(scaled_mse(&pred, &t, &msd_box(100.0), 0.5).is_err());
    }

    struct Exploder;
    impl StepPredictor for Exploder {
        fn state_dim(&self) -> usize {
            2
        }
        fn step(&self) -> f64 {
            0.01
        }
        fn knots_per_step(&self) -> usize {
            1
        }
        fn predict_step(&self, k: usize, x: &[f64], _: &[Vec<f64>]) -> Result<Vec<f64>> {
            Ok(x.iter().map(|v| v * 100.0 + (k as f64) + 1.0).collect())
        }
        fn sampling_box(&self) -> Option<&SamplingBox> {
            None
        }
    }

    #[test]
    fn divergence_truncates_with_step_index() {
        struct Boxed {
            bbox: SamplingBox,
        }
        impl StepPredictor for Boxed {
            fn state_dim(&self) -> usize {
                2
            }
            fn step(&self) -> f64 {
                0.01
            }
            fn knots_per_step(&self) -> usize {
                1
            }
            fn predict_step(&self, _k: usize, x: &[f64], _: &[Vec<f64>]) -> Result<Vec<f64>> {
                Ok(x.iter().map(|v| v * 40.0 + 0.1).collect())
            }
            fn sampling_box(&self) -> Option<&SamplingBox> {
                Some(&self.bbox)
            }
        }
        let p = Boxed {
            bbox: msd_box(100.0),
        };
        let knots = vec![vec![vec![0.0]]; 20];
        let out = self_loop(&p, &[0.1, 0.1], &knots, 20).unwrap();
        assert!(out.diverged_at.is_some());
        // threshold is 10³ half-widths: |x| must exceed 400 on channel 0
        let last = out.trajectory.states.last().unwrap();
        assert!(last[0].abs() <= 1e3 * 0.4);
        assert!(out.box_exit_step.is_some());
    }

    #[test]
    fn non_finite_prediction_flags_divergence() {
        struct NanAfter(usize);
        impl StepPredictor for NanAfter {
            fn state_dim(&self) -> usize {
                2
            }
            fn step(&self) -> f64 {
                0.01
            }
            fn knots_per_step(&self) -> usize {
                1
            }
            fn predict_step(&self, k: usize, x: &[f64], _: &[Vec<f64>]) -> Result<Vec<f64>> {
                if k >= self.0 {
                    Ok(vec![f64::NAN, 0.0])
                } else {
                    Ok(x.to_vec())
                }
            }
            fn sampling_box(&self) -> Option<&SamplingBox> {
                None
            }
        }
        let p = NanAfter(3);
        let knots = vec![vec![vec![0.0]]; 10];
        let out = self_loop(&p, &[0.0, 0.0], &knots, 10).unwrap();
        assert_eq!(out.diverged_at, Some(3));
        assert_eq!(out.trajectory.len(), 4);
        let _ = Exploder; // silence unused in case of cfg changes
    }

    #[test]
    fn latency_ratio_of_model_against_itself_is_one() {
        let model = small_ddpinn(100.0, ExcitationOrder::Zoh, 5);
        let knots = vec![vec![0.1]];
        let ratio = relative_prediction_time(&model, &knots, &model, &knots, &[0.1, 0.0], 1000)
            .unwrap();
        assert!((ratio - 1.0).abs() < 0.05, "self ratio {ratio}");
    }

    #[test]
    fn larger_network_is_slower() {
        let small = small_ddpinn(100.0, ExcitationOrder::Zoh, 6);
        let spec = AnsatzSpec::new(2, 3, true);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let big_net = Mlp::glorot(&[3, 256, 256, spec.coeff_len()], &mut rng).unwrap();
        let big = DdPinnModel::new(
            big_net,
            spec,
            BaseFunction::sine(),
            msd_box(100.0),
            100.0,
            ExcitationOrder::Zoh,
        )
        .unwrap();
        let knots = vec![vec![0.1]];
        let ratio =
            relative_prediction_time(&big, &knots, &small, &knots, &[0.1, 0.0], 400).unwrap();
        assert!(ratio > 1.0, "bigger net not slower: {ratio}");
    }
}
