//! Fixed-step classical Runge–Kutta integration: the ground-truth oracle,
//! dataset generator and accuracy baseline.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dynamics::SystemModel;
use crate::error::{Error, Result};
use crate::model::{ExcitationOrder, ExcitationPlan};
use crate::sample::{latin_hypercube_with, SamplingBox};

/// Simulated path: equal-length time/state/input records on a strictly
/// increasing grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub inputs: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn duration(&self) -> f64 {
        if self.times.is_empty() {
            0.0
        } else {
            self.times[self.times.len() - 1] - self.times[0]
        }
    }

    /// Linear interpolation of the state at `t`, which must lie inside the
    /// recorded grid.
    pub fn state_at(&self, t: f64) -> Result<Vec<f64>> {
        let n = self.times.len();
        if n == 0 {
            return Err(Error::InvalidArgument {
                context: "empty trajectory".into(),
            });
        }
        let (t0, t1) = (self.times[0], self.times[n - 1]);
        let slack = 1e-9 * (t1 - t0).max(1.0);
        if t < t0 - slack || t > t1 + slack {
            return Err(Error::TimeOutOfRange {
                t,
                min: t0,
                max: t1,
            });
        }
        let t = t.clamp(t0, t1);
        let idx = match self
            .times
            .binary_search_by(|probe| probe.partial_cmp(&t).unwrap())
        {
            Ok(i) => return Ok(self.states[i].clone()),
            Err(i) => i,
        };
        let (lo, hi) = (idx - 1, idx);
        let w = (t - self.times[lo]) / (self.times[hi] - self.times[lo]);
        Ok(self.states[lo]
            .iter()
            .zip(self.states[hi].iter())
            .map(|(a, b)| a + w * (b - a))
            .collect())
    }
}

/// One classical 4-stage Runge–Kutta step with the excitation sampled at
/// `t`, `t + h/2` and `t + h`.
pub fn rk4_step(
    system: &SystemModel,
    x: &[f64],
    u_of_t: &impl Fn(f64) -> Vec<f64>,
    t: f64,
    h: f64,
) -> Result<Vec<f64>> {
    if h <= 0.0 {
        return Err(Error::InvalidArgument {
            context: format!("rk4 step size must be positive, got {h}"),
        });
    }
    let u0 = u_of_t(t);
    let um = u_of_t(t + 0.5 * h);
    let u1 = u_of_t(t + h);
    let k1 = system.rhs_f64(x, &u0);
    let x2: Vec<f64> = x.iter().zip(k1.iter()).map(|(a, k)| a + 0.5 * h * k).collect();
    let k2 = system.rhs_f64(&x2, &um);
    let x3: Vec<f64> = x.iter().zip(k2.iter()).map(|(a, k)| a + 0.5 * h * k).collect();
    let k3 = system.rhs_f64(&x3, &um);
    let x4: Vec<f64> = x.iter().zip(k3.iter()).map(|(a, k)| a + h * k).collect();
    let k4 = system.rhs_f64(&x4, &u1);
    let out: Vec<f64> = x
        .iter()
        .enumerate()
        .map(|(i, a)| a + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect();
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            context: format!("rk4 step at t = {t} (stiffness or blow-up)"),
        });
    }
    Ok(out)
}

/// Fixed-step rollout recording every step, `round(duration/h) + 1` samples.
/// Times are computed as `j·h` so repeated runs are bitwise identical.
pub fn simulate(
    system: &SystemModel,
    x0: &[f64],
    u_of_t: &impl Fn(f64) -> Vec<f64>,
    duration: f64,
    h: f64,
) -> Result<Trajectory> {
    if duration <= 0.0 || h <= 0.0 {
        return Err(Error::InvalidArgument {
            context: format!("simulate needs positive duration and step, got {duration}, {h}"),
        });
    }
    let steps = (duration / h).round() as usize;
    let mut times = Vec::with_capacity(steps + 1);
    let mut states = Vec::with_capacity(steps + 1);
    let mut inputs = Vec::with_capacity(steps + 1);
    let mut x = x0.to_vec();
    for j in 0..=steps {
        let t = j as f64 * h;
        times.push(t);
        inputs.push(u_of_t(t));
        states.push(x.clone());
        if j < steps {
            x = rk4_step(system, &x, u_of_t, t, h)?;
        }
    }
    Ok(Trajectory {
        times,
        states,
        inputs,
    })
}

/// A supervised tuple `(x0, u*_0, t, x_t)` for the data loss.
#[derive(Debug, Clone, PartialEq)]
pub struct DataPoint {
    pub x0: Vec<f64>,
    pub plan: ExcitationPlan,
    pub t: f64,
    pub target: Vec<f64>,
}

/// Integration substeps per interval used for ground truth, `h = T/100`.
pub const ORACLE_SUBSTEPS: usize = 100;

/// Integrate one interval from `x0` to time `t` under the interpolated
/// excitation, at the ground-truth step `T/100` (shortened to land on `t`).
pub fn integrate_interval(
    system: &SystemModel,
    x0: &[f64],
    plan: &ExcitationPlan,
    t: f64,
    substep: f64,
) -> Result<Vec<f64>> {
    if t == 0.0 {
        return Ok(x0.to_vec());
    }
    let n = (t / substep).ceil().max(1.0) as usize;
    let h = t / n as f64;
    let u = |tt: f64| plan.interpolate(tt.min(t)).expect("interval time in range");
    let mut x = x0.to_vec();
    for j in 0..n {
        x = rk4_step(system, &x, &u, j as f64 * h, h)?;
    }
    Ok(x)
}

/// Latin-hypercube draw of `(x0, knots, t)` tuples over the sampling box,
/// each integrated to its target state with the RK4 oracle. Points whose
/// integration blows up are redrawn uniformly (bounded retries).
pub fn generate_dataset(
    system: &SystemModel,
    bbox: &SamplingBox,
    order: ExcitationOrder,
    frequency_hz: f64,
    n_data: usize,
    seed: u64,
) -> Result<Vec<DataPoint>> {
    if n_data == 0 {
        return Ok(Vec::new());
    }
    let m = bbox.state_dim();
    let p = bbox.input_dim();
    let knots = order.knot_count();
    let step = 1.0 / frequency_hz;
    let substep = step / ORACLE_SUBSTEPS as f64;
    let ranges = bbox.collocation_ranges(knots);
    let points = latin_hypercube(n_data, &ranges, seed)?;
    let mut retry_rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(0x9e37_79b9));
    let mut out = Vec::with_capacity(n_data);
    for point in points {
        let mut point = point;
        let mut attempts = 0;
        loop {
            let x0 = point[..m].to_vec();
            let flat = &point[m..m + p * knots];
            let t = point[m + p * knots];
            let plan = ExcitationPlan::from_flat(order, flat, p, step)?;
            match integrate_interval(system, &x0, &plan, t, substep) {
                Ok(target) => {
                    out.push(DataPoint {
                        x0,
                        plan,
                        t,
                        target,
                    });
                    break;
                }
                Err(_) if attempts < 16 => {
                    attempts += 1;
                    point = ranges
                        .iter()
                        .map(|&(lo, hi)| retry_rng.gen_range(lo..hi))
                        .collect();
                }
                Err(e) => return Err(e),
            }
        }
    }
    Ok(out)
}

fn latin_hypercube(n: usize, ranges: &[(f64, f64)], seed: u64) -> Result<Vec<Vec<f64>>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    latin_hypercube_with(n, ranges, &mut rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{ChainParams, MsdParams};

    fn zero_input(_t: f64) -> Vec<f64> {
        vec![0.0]
    }

    /// Analytic underdamped oscillator `m q̈ + d q̇ + k q = 0`.
    fn damped_oscillator(p: &MsdParams, x0: (f64, f64), t: f64) -> (f64, f64) {
        let w0 = (p.stiffness / p.mass).sqrt();
        let zeta = p.damping / (2.0 * (p.stiffness * p.mass).sqrt());
        let wd = w0 * (1.0 - zeta * zeta).sqrt();
        let (q0, v0) = x0;
        let a = q0;
        let b = (v0 + zeta * w0 * q0) / wd;
        let e = (-zeta * w0 * t).exp();
        let q = e * (a * (wd * t).cos() + b * (wd * t).sin());
        let v = e
            * ((-zeta * w0) * (a * (wd * t).cos() + b * (wd * t).sin())
                + (-a * wd * (wd * t).sin() + b * wd * (wd * t).cos()));
        (q, v)
    }

    fn linear_msd() -> (SystemModel, MsdParams) {
        let p = MsdParams {
            stiffness_cubic: 0.0,
            ..MsdParams::default()
        };
        (SystemModel::msd(p).unwrap(), p)
    }

    #[test]
    fn zero_rhs_leaves_state_unchanged() {
        // equilibrium of the MSD acts as an identically-zero rhs
        let sys = SystemModel::msd(MsdParams::default()).unwrap();
        let x = rk4_step(&sys, &[0.0, 0.0], &zero_input, 0.0, 0.1).unwrap();
        assert_eq!(x, vec![0.0, 0.0]);
    }

    #[test]
    fn exponential_decay_hand_stages() {
        // ẋ = −x through the MSD with m = d, k = 0 is not available, so use
        // a dedicated check on the documented stage arithmetic: integrating
        // the linear msd with k=1,d=0.001,m=0.001 is covered below; here the
        // scalar decay is reproduced via a pure velocity state.
        // ẋ = −x realized as q̇ channel: k=0 not allowed; check against the
        // frozen hand value using a tiny harness instead.
        let f = |x: f64| -x;
        let h = 0.1;
        let x = 1.0;
        let k1 = f(x);
        let k2 = f(x + 0.5 * h * k1);
        let k3 = f(x + 0.5 * h * k2);
        let k4 = f(x + h * k3);
        let next = x + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        assert!((next - 0.904_837_5).abs() < 1e-12);
        assert!((next - (-0.1f64).exp()).abs() < 1e-7);
    }

    #[test]
    fn linear_msd_matches_analytic_oscillator() {
        let (sys, p) = linear_msd();
        let x0 = (0.1, 0.0);
        let h = 1e-4;
        let traj = simulate(&sys, &[x0.0, x0.1], &zero_input, 1.0, h).unwrap();
        let mut max_rel = 0.0f64;
        for (i, &t) in traj.times.iter().enumerate() {
            let (q, v) = damped_oscillator(&p, x0, t);
            let scale = q.abs().max(v.abs()).max(1e-3);
            max_rel = max_rel.max((traj.states[i][0] - q).abs() / scale);
            max_rel = max_rel.max((traj.states[i][1] - v).abs() / scale);
        }
        assert!(max_rel < 1e-6, "max relative error {max_rel}");
    }

    #[test]
    fn fourth_order_convergence() {
        // global error measured as the max over the trajectory, which is a
        // cleaner h⁴ estimate than a single endpoint
        let (sys, p) = linear_msd();
        let x0 = (0.1, 0.0);
        let t_end = 0.5;
        let err_at = |h: f64| {
            let traj = simulate(&sys, &[x0.0, x0.1], &zero_input, t_end, h).unwrap();
            let mut max = 0.0f64;
            for (i, &t) in traj.times.iter().enumerate() {
                let (q, _) = damped_oscillator(&p, x0, t);
                max = max.max((traj.states[i][0] - q).abs());
            }
            max
        };
        let e1 = err_at(2e-3);
        let e2 = err_at(1e-3);
        let e3 = err_at(5e-4);
        let order12 = (e1 / e2).log2();
        let order23 = (e2 / e3).log2();
        assert!(
            (3.7..=4.3).contains(&order12),
            "convergence order {order12} (errors {e1}, {e2})"
        );
        assert!(
            (3.7..=4.3).contains(&order23),
            "convergence order {order23} (errors {e2}, {e3})"
        );
    }

    #[test]
    fn duration_equal_to_step_gives_two_samples() {
        let (sys, _) = linear_msd();
        let traj = simulate(&sys, &[0.1, 0.0], &zero_input, 1e-3, 1e-3).unwrap();
        assert_eq!(traj.len(), 2);
        let step = rk4_step(&sys, &[0.1, 0.0], &zero_input, 0.0, 1e-3).unwrap();
        assert_eq!(traj.states[1], step);
    }

    #[test]
    fn sample_count_follows_grid_arithmetic() {
        let (sys, _) = linear_msd();
        let traj = simulate(&sys, &[0.05, 0.0], &zero_input, 0.01, 0.001).unwrap();
        assert_eq!(traj.len(), 11);
    }

    #[test]
    fn chirp_trajectory_step_halving_converges() {
        let sys = SystemModel::msd(MsdParams::default()).unwrap();
        let chirp = crate::signal::SignalSpec::Chirp {
            amplitude: 0.8,
            f0_hz: 0.2,
            f1_hz: 3.0,
            duration_s: 5.0,
        }
        .build()
        .unwrap();
        let u = |t: f64| chirp.eval(t);
        let h = 1e-4;
        let a = simulate(&sys, &[0.0, 0.0], &u, 1.0, h).unwrap();
        let b = simulate(&sys, &[0.0, 0.0], &u, 1.0, h / 2.0).unwrap();
        let mut max_diff = 0.0f64;
        for (i, state) in a.states.iter().enumerate() {
            for (x, y) in state.iter().zip(b.states[2 * i].iter()) {
                max_diff = max_diff.max((x - y).abs());
            }
        }
        assert!(max_diff < 1e-8, "step halving changed states by {max_diff}");
    }

    #[test]
    fn chain_energy_decays_without_input() {
        let sys = SystemModel::chain(ChainParams::default()).unwrap();
        let chain = match &sys {
            SystemModel::Chain(c) => c.clone(),
            _ => unreachable!(),
        };
        let mut x0 = vec![0.0; 10];
        x0[0] = 0.05;
        x0[2] = -0.03;
        x0[7] = 0.4;
        let traj = simulate(&sys, &x0, &zero_input, 1.0, 1e-4).unwrap();
        let mut prev = f64::INFINITY;
        for state in traj.states.iter().step_by(100) {
            let e = chain.energy(state);
            assert!(e <= prev + 1e-9, "energy increased: {e} > {prev}");
            prev = e;
        }
    }

    #[test]
    fn twolink_energy_decays_with_damping() {
        let p = crate::dynamics::TwoLinkParams::default();
        let sys = SystemModel::two_link(p).unwrap();
        let zero2 = |_t: f64| vec![0.0, 0.0];
        let x0 = [2.0, -1.0, 0.3, 0.2];
        let traj = simulate(&sys, &x0, &zero2, 2.0, 1e-3).unwrap();
        let mut prev = f64::INFINITY;
        for state in traj.states.iter().step_by(50) {
            let e = p.energy(state);
            assert!(e <= prev + 1e-9, "energy increased: {e} > {prev}");
            prev = e;
        }
    }

    #[test]
    fn simulate_is_deterministic() {
        let sys = SystemModel::msd(MsdParams::default()).unwrap();
        let u = |t: f64| vec![(2.0 * t).sin()];
        let a = simulate(&sys, &[0.1, 0.0], &u, 0.1, 1e-4).unwrap();
        let b = simulate(&sys, &[0.1, 0.0], &u, 0.1, 1e-4).unwrap();
        for (x, y) in a.states.iter().zip(b.states.iter()) {
            for (v, w) in x.iter().zip(y.iter()) {
                assert_eq!(v.to_bits(), w.to_bits());
            }
        }
    }

    #[test]
    fn state_interpolation_errors_outside_grid() {
        let (sys, _) = linear_msd();
        let traj = simulate(&sys, &[0.1, 0.0], &zero_input, 0.01, 0.001).unwrap();
        assert!(traj.state_at(0.02).is_err());
        assert!(traj.state_at(0.005).is_ok());
    }

    fn msd_box() -> SamplingBox {
        SamplingBox::new(
            vec![-0.4, -18.0],
            vec![0.4, 18.0],
            vec![-1.0],
            vec![1.0],
            1.1 / 100.0,
        )
        .unwrap()
    }

    #[test]
    fn empty_dataset() {
        let sys = SystemModel::msd(MsdParams::default()).unwrap();
        let d =
            generate_dataset(&sys, &msd_box(), ExcitationOrder::Linear, 100.0, 0, 1).unwrap();
        assert!(d.is_empty());
    }

    #[test]
    fn dataset_tuples_inside_box() {
        let sys = SystemModel::msd(MsdParams::default()).unwrap();
        let bbox = msd_box();
        let d = generate_dataset(&sys, &bbox, ExcitationOrder::Quadratic, 100.0, 50, 7).unwrap();
        assert_eq!(d.len(), 50);
        for p in &d {
            assert!(p.x0[0] >= -0.4 && p.x0[0] <= 0.4);
            assert!(p.x0[1] >= -18.0 && p.x0[1] <= 18.0);
            for k in &p.plan.knots {
                assert!(k[0] >= -1.0 && k[0] <= 1.0);
            }
            assert!(p.t >= 0.0 && p.t <= 1.1 / 100.0);
        }
    }

    #[test]
    fn dataset_targets_verified_at_half_step() {
        let sys = SystemModel::msd(MsdParams::default()).unwrap();
        let bbox = msd_box();
        let d = generate_dataset(&sys, &bbox, ExcitationOrder::Linear, 100.0, 30, 3).unwrap();
        let step = 1.0 / 100.0;
        let substep = step / ORACLE_SUBSTEPS as f64;
        for p in &d {
            let again = integrate_interval(&sys, &p.x0, &p.plan, p.t, substep / 2.0).unwrap();
            for (a, b) in p.target.iter().zip(again.iter()) {
                assert!((a - b).abs() < 1e-7, "target deviation {}", (a - b).abs());
            }
        }
    }
}
