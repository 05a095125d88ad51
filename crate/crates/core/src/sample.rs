//! Latin-hypercube sampling of collocation/IC points and the affine
//! input normalization shared by both architectures.

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrate::Trajectory;

/// Per-channel sampling ranges: one `(min, max)` per state, one per input
/// channel (shared by all excitation knots of that channel), and the time
/// horizon `t ∈ [0, t_max]` with `t_max = 1.1/f`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingBox {
    pub state_min: Vec<f64>,
    pub state_max: Vec<f64>,
    pub input_min: Vec<f64>,
    pub input_max: Vec<f64>,
    pub t_max: f64,
}

impl SamplingBox {
    pub fn new(
        state_min: Vec<f64>,
        state_max: Vec<f64>,
        input_min: Vec<f64>,
        input_max: Vec<f64>,
        t_max: f64,
    ) -> Result<Self> {
        let b = SamplingBox {
            state_min,
            state_max,
            input_min,
            input_max,
            t_max,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        if self.state_min.len() != self.state_max.len()
            || self.input_min.len() != self.input_max.len()
        {
            return Err(Error::InvalidArgument {
                context: "sampling box min/max length mismatch".into(),
            });
        }
        for (ch, (lo, hi)) in self
            .state_min
            .iter()
            .zip(self.state_max.iter())
            .chain(self.input_min.iter().zip(self.input_max.iter()))
            .enumerate()
        {
            if !(lo < hi) {
                return Err(Error::DegenerateBox { channel: ch });
            }
        }
        if !(self.t_max > 0.0) {
            return Err(Error::InvalidArgument {
                context: "sampling box t_max must be positive".into(),
            });
        }
        Ok(())
    }

    pub fn state_dim(&self) -> usize {
        self.state_min.len()
    }

    pub fn input_dim(&self) -> usize {
        self.input_min.len()
    }

    pub fn state_ranges(&self) -> Vec<(f64, f64)> {
        self.state_min
            .iter()
            .zip(self.state_max.iter())
            .map(|(&a, &b)| (a, b))
            .collect()
    }

    pub fn input_ranges(&self) -> Vec<(f64, f64)> {
        self.input_min
            .iter()
            .zip(self.input_max.iter())
            .map(|(&a, &b)| (a, b))
            .collect()
    }

    /// Channel list for sampling one collocation point: states, `knots`
    /// repetitions of the input channels, then time.
    pub fn collocation_ranges(&self, knots: usize) -> Vec<(f64, f64)> {
        let mut ranges = self.state_ranges();
        for _ in 0..knots {
            ranges.extend(self.input_ranges());
        }
        ranges.push((0.0, self.t_max));
        ranges
    }

    pub fn state_half_widths(&self) -> Vec<f64> {
        self.state_min
            .iter()
            .zip(self.state_max.iter())
            .map(|(a, b)| 0.5 * (b - a))
            .collect()
    }

    pub fn state_midpoints(&self) -> Vec<f64> {
        self.state_min
            .iter()
            .zip(self.state_max.iter())
            .map(|(a, b)| 0.5 * (a + b))
            .collect()
    }

    /// First state channel (if any) leaving the box, for soft warnings.
    pub fn state_outside(&self, x: &[f64]) -> Option<usize> {
        x.iter()
            .enumerate()
            .find(|(j, &v)| v < self.state_min[*j] || v > self.state_max[*j])
            .map(|(j, _)| j)
    }
}

/// Latin hypercube sample: `n` points, one per stratum per dimension,
/// uniformly placed within the stratum and coupled by independent
/// permutations. Deterministic per seed.
pub fn latin_hypercube(n: usize, ranges: &[(f64, f64)], seed: u64) -> Result<Vec<Vec<f64>>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    latin_hypercube_with(n, ranges, &mut rng)
}

pub fn latin_hypercube_with(
    n: usize,
    ranges: &[(f64, f64)],
    rng: &mut impl Rng,
) -> Result<Vec<Vec<f64>>> {
    if n == 0 {
        return Err(Error::InvalidArgument {
            context: "latin hypercube needs n >= 1".into(),
        });
    }
    for (ch, (lo, hi)) in ranges.iter().enumerate() {
        if !(lo < hi) {
            return Err(Error::DegenerateBox { channel: ch });
        }
    }
    let dims = ranges.len();
    let mut points = vec![vec![0.0; dims]; n];
    let mut strata: Vec<usize> = (0..n).collect();
    for (d, &(lo, hi)) in ranges.iter().enumerate() {
        strata.shuffle(rng);
        let width = (hi - lo) / n as f64;
        for (i, &s) in strata.iter().enumerate() {
            let jitter: f64 = rng.gen_range(0.0..1.0);
            points[i][d] = lo + (s as f64 + jitter) * width;
        }
    }
    Ok(points)
}

/// Map a point to `[−1, 1]^d` channelwise; values outside the box map
/// outside `[−1, 1]` by design.
pub fn normalize(point: &[f64], ranges: &[(f64, f64)]) -> Vec<f64> {
    point
        .iter()
        .zip(ranges.iter())
        .map(|(&v, &(lo, hi))| 2.0 * (v - lo) / (hi - lo) - 1.0)
        .collect()
}

pub fn denormalize(values: &[f64], ranges: &[(f64, f64)]) -> Vec<f64> {
    values
        .iter()
        .zip(ranges.iter())
        .map(|(&v, &(lo, hi))| lo + 0.5 * (v + 1.0) * (hi - lo))
        .collect()
}

/// Per-state box from a trajectory's extrema, widened on each side by
/// `margin·(max − min)`. Constant channels are widened by `epsilon`.
pub fn derive_state_bounds(
    traj: &Trajectory,
    margin: f64,
    epsilon: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if traj.states.is_empty() {
        return Err(Error::InvalidArgument {
            context: "cannot derive a box from an empty trajectory".into(),
        });
    }
    let m = traj.states[0].len();
    let mut lo = vec![f64::INFINITY; m];
    let mut hi = vec![f64::NEG_INFINITY; m];
    for state in &traj.states {
        for j in 0..m {
            lo[j] = lo[j].min(state[j]);
            hi[j] = hi[j].max(state[j]);
        }
    }
    for j in 0..m {
        let range = hi[j] - lo[j];
        if range == 0.0 {
            lo[j] -= epsilon;
            hi[j] += epsilon;
        } else {
            lo[j] -= margin * range;
            hi[j] += margin * range;
        }
    }
    Ok((lo, hi))
}

#[cfg(test)]
mod tests {
    use super::*;

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
    fn four_point_stratification() {
        let pts = latin_hypercube(4, &[(0.0, 1.0)], 0).unwrap();
        let mut seen = [false; 4];
        for p in &pts {
            let s = (p[0] * 4.0).floor() as usize;
            assert!(!seen[s.min(3)], "stratum {s} hit twice");
            seen[s.min(3)] = true;
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn single_point_inside_box() {
        let pts = latin_hypercube(1, &[(2.0, 3.0), (-1.0, 0.0)], 5).unwrap();
        assert_eq!(pts.len(), 1);
        assert!(pts[0][0] >= 2.0 && pts[0][0] <= 3.0);
        assert!(pts[0][1] >= -1.0 && pts[0][1] <= 0.0);
    }

    #[test]
    fn hundred_point_histogram_exactly_uniform() {
        let n = 100;
        let pts = latin_hypercube(n, &[(0.0, 1.0), (-2.0, 2.0)], 7).unwrap();
        for d in 0..2 {
            let (lo, hi) = [(0.0, 1.0), (-2.0, 2.0)][d];
            let mut counts = vec![0usize; n];
            for p in &pts {
                let s = (((p[d] - lo) / (hi - lo)) * n as f64).floor() as usize;
                counts[s.min(n - 1)] += 1;
            }
            assert!(counts.iter().all(|&c| c == 1), "dim {d}: {counts:?}");
        }
    }

    #[test]
    fn deterministic_per_seed_and_decorrelated_across_seeds() {
        let ranges = [(0.0, 1.0)];
        let a = latin_hypercube(200, &ranges, 1).unwrap();
        let b = latin_hypercube(200, &ranges, 1).unwrap();
        assert_eq!(a, b);
        let c = latin_hypercube(200, &ranges, 2).unwrap();
        // Spearman rank correlation between runs stays small.
        let rank = |v: &[Vec<f64>]| {
            let mut idx: Vec<usize> = (0..v.len()).collect();
            idx.sort_by(|&i, &j| v[i][0].partial_cmp(&v[j][0]).unwrap());
            let mut r = vec![0.0; v.len()];
            for (pos, &i) in idx.iter().enumerate() {
                r[i] = pos as f64;
            }
            r
        };
        let ra = rank(&a);
        let rc = rank(&c);
        let n = ra.len() as f64;
        let mean = (n - 1.0) / 2.0;
        let mut num = 0.0;
        let mut da = 0.0;
        let mut dc = 0.0;
        for i in 0..ra.len() {
            num += (ra[i] - mean) * (rc[i] - mean);
            da += (ra[i] - mean).powi(2);
            dc += (rc[i] - mean).powi(2);
        }
        let rho = num / (da.sqrt() * dc.sqrt());
        assert!(rho.abs() < 0.2, "rank correlation {rho}");
    }

    #[test]
    fn degenerate_box_rejected() {
        assert!(matches!(
            latin_hypercube(4, &[(1.0, 1.0)], 0),
            Err(Error::DegenerateBox { .. })
        ));
    }

    #[test]
    fn midpoint_normalizes_to_zero() {
        let ranges = [(0.0, 2.0), (-4.0, -2.0)];
        let z = normalize(&[1.0, -3.0], &ranges);
        assert_eq!(z, vec![0.0, 0.0]);
    }

    #[test]
    fn box_corners_map_to_unit_bounds_exactly() {
        let b = msd_box();
        let ranges = b.state_ranges();
        let z = normalize(&[0.4, -18.0], &ranges);
        assert_eq!(z[0], 1.0);
        assert_eq!(z[1], -1.0);
    }

    #[test]
    fn round_trip_within_1e12() {
        let ranges = [(-0.4, 0.4), (-18.0, 18.0), (-1.0, 1.0)];
        let pts = latin_hypercube(1000, &ranges, 3).unwrap();
        for p in &pts {
            let back = denormalize(&normalize(p, &ranges), &ranges);
            for (a, b) in p.iter().zip(back.iter()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn derive_bounds_examples() {
        let traj = Trajectory {
            times: vec![0.0, 1.0, 2.0],
            states: vec![vec![0.0, 5.0], vec![1.0, 5.0], vec![0.5, 5.0]],
            inputs: vec![vec![0.0]; 3],
        };
        let (lo, hi) = derive_state_bounds(&traj, 0.1, 1e-6).unwrap();
        assert!((lo[0] + 0.1).abs() < 1e-15);
        assert!((hi[0] - 1.1).abs() < 1e-15);
        // constant channel widened by epsilon
        assert!((lo[1] - (5.0 - 1e-6)).abs() < 1e-12);
        assert!((hi[1] - (5.0 + 1e-6)).abs() < 1e-12);
        let (lo0, hi0) = derive_state_bounds(&traj, 0.0, 1e-6).unwrap();
        assert_eq!(lo0[0], 0.0);
        assert_eq!(hi0[0], 1.0);
    }

    #[test]
    fn derived_box_strictly_contains_trajectory() {
        let traj = Trajectory {
            times: (0..50).map(|i| i as f64 * 0.1).collect(),
            states: (0..50)
                .map(|i| vec![(i as f64 * 0.3).sin(), (i as f64 * 0.2).cos()])
                .collect(),
            inputs: vec![vec![]; 50],
        };
        let (lo, hi) = derive_state_bounds(&traj, 0.1, 1e-6).unwrap();
        for s in &traj.states {
            for j in 0..2 {
                assert!(lo[j] < s[j] && s[j] < hi[j]);
            }
        }
    }
}
