//! Parameterized test excitations: chirps, seeded multisines, constants.
//!
//! Evaluation CSVs and ground-truth simulations are driven by these signals;
//! they are declared in the run configuration so every report is
//! reproducible from its manifest.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum SignalSpec {
    /// Identically zero on `channels` channels.
    Zero { channels: usize },
    /// Constant vector.
    Constant { value: Vec<f64> },
    /// Linear chirp `A·sin(2π(f0·t + (f1−f0)·t²/(2·duration)))`, scalar.
    Chirp {
        amplitude: f64,
        f0_hz: f64,
        f1_hz: f64,
        duration_s: f64,
    },
    /// Sum of `components` equally weighted sines with evenly spaced
    /// frequencies and seeded random phases; peak bounded by `amplitude`.
    Multisine {
        amplitude: f64,
        f_min_hz: f64,
        f_max_hz: f64,
        components: usize,
        seed: u64,
        duration_s: f64,
    },
    /// Independent scalar signals stacked into one input vector.
    PerChannel { channels: Vec<SignalSpec> },
}

impl SignalSpec {
    pub fn channels(&self) -> usize {
        match self {
            SignalSpec::Zero { channels } => *channels,
            SignalSpec::Constant { value } => value.len(),
            SignalSpec::Chirp { .. } | SignalSpec::Multisine { .. } => 1,
            SignalSpec::PerChannel { channels } => channels.iter().map(|c| c.channels()).sum(),
        }
    }

    /// Time span over which the signal is defined; `None` means unlimited.
    pub fn duration(&self) -> Option<f64> {
        match self {
            SignalSpec::Zero { .. } | SignalSpec::Constant { .. } => None,
            SignalSpec::Chirp { duration_s, .. } | SignalSpec::Multisine { duration_s, .. } => {
                Some(*duration_s)
            }
            SignalSpec::PerChannel { channels } => channels
                .iter()
                .filter_map(|c| c.duration())
                .min_by(|a, b| a.partial_cmp(b).unwrap()),
        }
    }

    pub fn build(&self) -> Result<Signal> {
        let terms = self.build_terms()?;
        Ok(Signal {
            spec: self.clone(),
            terms,
        })
    }

    fn build_terms(&self) -> Result<Vec<ChannelTerm>> {
        match self {
            SignalSpec::Zero { channels } => {
                if *channels == 0 {
                    return Err(Error::InvalidArgument {
                        context: "zero signal needs at least one channel".into(),
                    });
                }
                Ok(vec![ChannelTerm::Constant(0.0); *channels])
            }
            SignalSpec::Constant { value } => {
                Ok(value.iter().map(|&v| ChannelTerm::Constant(v)).collect())
            }
            SignalSpec::Chirp {
                amplitude,
                f0_hz,
                f1_hz,
                duration_s,
            } => {
                if *duration_s <= 0.0 {
                    return Err(Error::InvalidArgument {
                        context: "chirp duration must be positive".into(),
                    });
                }
                Ok(vec![ChannelTerm::Chirp {
                    amplitude: *amplitude,
                    f0: *f0_hz,
                    rate: (*f1_hz - *f0_hz) / (2.0 * *duration_s),
                }])
            }
            SignalSpec::Multisine {
                amplitude,
                f_min_hz,
                f_max_hz,
                components,
                seed,
                duration_s,
            } => {
                if *components == 0 || *duration_s <= 0.0 || f_max_hz < f_min_hz {
                    return Err(Error::InvalidArgument {
                        context: "multisine needs components >= 1, duration > 0, f_max >= f_min"
                            .into(),
                    });
                }
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                let n = *components;
                let comps = (0..n)
                    .map(|k| {
                        let f = if n == 1 {
                            *f_min_hz
                        } else {
                            f_min_hz + (f_max_hz - f_min_hz) * k as f64 / (n - 1) as f64
                        };
                        let phase = rng.gen_range(0.0..std::f64::consts::TAU);
                        (amplitude / n as f64, f, phase)
                    })
                    .collect();
                Ok(vec![ChannelTerm::Multisine(comps)])
            }
            SignalSpec::PerChannel { channels } => {
                let mut terms = Vec::new();
                for c in channels {
                    terms.extend(c.build_terms()?);
                }
                if terms.is_empty() {
                    return Err(Error::InvalidArgument {
                        context: "per-channel signal is empty".into(),
                    });
                }
                Ok(terms)
            }
        }
    }
}

#[derive(Debug, Clone)]
enum ChannelTerm {
    Constant(f64),
    Chirp { amplitude: f64, f0: f64, rate: f64 },
    Multisine(Vec<(f64, f64, f64)>),
}

/// A built signal ready for evaluation.
#[derive(Debug, Clone)]
pub struct Signal {
    spec: SignalSpec,
    terms: Vec<ChannelTerm>,
}

impl Signal {
    pub fn channels(&self) -> usize {
        self.terms.len()
    }

    pub fn duration(&self) -> Option<f64> {
        self.spec.duration()
    }

    pub fn spec(&self) -> &SignalSpec {
        &self.spec
    }

    pub fn eval(&self, t: f64) -> Vec<f64> {
        self.terms
            .iter()
            .map(|term| match term {
                ChannelTerm::Constant(v) => *v,
                ChannelTerm::Chirp {
                    amplitude,
                    f0,
                    rate,
                } => amplitude * (std::f64::consts::TAU * (f0 * t + rate * t * t)).sin(),
                ChannelTerm::Multisine(comps) => comps
                    .iter()
                    .map(|(a, f, phase)| a * (std::f64::consts::TAU * f * t + phase).sin())
                    .sum(),
            })
            .collect()
    }
}
