//! Run configuration: JSON files with strict keys, preset expansion and
//! section-wise overrides.
//!
//! A config may name a preset (`msd-50|100|200`, `chain-50`, `twolink-5`,
//! or their `-desk` variants plus `msd-100-desk-bench`); explicit fields
//! override the expanded values. Presets carry the published training and
//! network parameters of both architectures; `model.arch` selects the
//! column, defaulting to the domain-decoupled model.

use serde::{Deserialize, Serialize};

use ddpinn_core::dynamics::{ChainParams, MsdParams, SystemModel, TwoLinkParams};
use ddpinn_core::integrate::simulate;
use ddpinn_core::model::ExcitationOrder;
use ddpinn_core::sample::{derive_state_bounds, SamplingBox};
use ddpinn_core::signal::SignalSpec;
use ddpinn_core::train::{Architecture, TrainConfig};

use crate::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub preset: Option<String>,
    pub system: SystemSection,
    pub model: ModelSection,
    pub training: TrainingSection,
    pub evaluation: EvalSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parameters: Option<serde_json::Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ranges: Option<RangesSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RangesSection {
    pub state_min: Vec<f64>,
    pub state_max: Vec<f64>,
    pub input_min: Vec<f64>,
    pub input_max: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub arch: Architecture,
    pub f_hz: f64,
    pub delta_u: u8,
    pub n_g: usize,
    pub damped: bool,
    pub base_function: String,
    pub hidden_layers: usize,
    pub neurons: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingSection {
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

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    pub test_signal: SignalSpec,
    pub horizon_s: f64,
    pub seed: u64,
}

// ── overlay structs: every field optional ────────────────────────────

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    preset: Option<String>,
    system: Option<FileSystem>,
    model: Option<FileModel>,
    training: Option<FileTraining>,
    evaluation: Option<FileEval>,
}

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileSystem {
    name: Option<String>,
    parameters: Option<serde_json::Value>,
    ranges: Option<RangesSection>,
}

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileModel {
    arch: Option<Architecture>,
    f_hz: Option<f64>,
    delta_u: Option<u8>,
    n_g: Option<usize>,
    damped: Option<bool>,
    base_function: Option<String>,
    hidden_layers: Option<usize>,
    neurons: Option<usize>,
}

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileTraining {
    epochs: Option<usize>,
    batches: Option<usize>,
    n_collo: Option<usize>,
    n_ic: Option<usize>,
    n_data: Option<usize>,
    alpha_init: Option<f64>,
    alpha_min: Option<f64>,
    plateau_factor: Option<f64>,
    plateau_patience: Option<usize>,
    plateau_threshold: Option<f64>,
    lra_rate: Option<f64>,
    val_fraction: Option<f64>,
    seed: Option<u64>,
    threads: Option<usize>,
}

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileEval {
    test_signal: Option<SignalSpec>,
    horizon_s: Option<f64>,
    seed: Option<u64>,
}

// ── presets ──────────────────────────────────────────────────────────

pub const PRESET_NAMES: &[&str] = &[
    "msd-50",
    "msd-100",
    "msd-200",
    "chain-50",
    "twolink-5",
    "msd-100-desk",
    "msd-100-desk-bench",
    "chain-50-desk",
    "twolink-5-desk",
];

struct TrainingNumbers {
    epochs: usize,
    batches: usize,
    n_collo: usize,
    n_ic: usize,
    n_data: usize,
}

fn training_defaults(n: TrainingNumbers, seed: u64) -> TrainingSection {
    TrainingSection {
        epochs: n.epochs,
        batches: n.batches,
        n_collo: n.n_collo,
        n_ic: n.n_ic,
        n_data: n.n_data,
        alpha_init: 1e-3,
        alpha_min: 5e-8,
        plateau_factor: 0.5,
        plateau_patience: 20,
        plateau_threshold: 1e-3,
        lra_rate: 0.1,
        val_fraction: 0.1,
        seed,
        threads: 1,
    }
}

fn msd_eval() -> EvalSection {
    EvalSection {
        test_signal: SignalSpec::Chirp {
            amplitude: 0.3,
            f0_hz: 0.2,
            f1_hz: 3.0,
            duration_s: 5.0,
        },
        horizon_s: 1.0,
        seed: 7,
    }
}

fn chain_eval() -> EvalSection {
    EvalSection {
        test_signal: SignalSpec::Multisine {
            amplitude: 4.0,
            f_min_hz: 0.5,
            f_max_hz: 12.0,
            components: 8,
            seed: 7,
            duration_s: 5.0,
        },
        horizon_s: 1.0,
        seed: 7,
    }
}

fn twolink_eval() -> EvalSection {
    EvalSection {
        test_signal: SignalSpec::PerChannel {
            channels: vec![
                SignalSpec::Multisine {
                    amplitude: 0.5,
                    f_min_hz: 0.05,
                    f_max_hz: 0.4,
                    components: 4,
                    seed: 7,
                    duration_s: 30.0,
                },
                SignalSpec::Multisine {
                    amplitude: 0.5,
                    f_min_hz: 0.05,
                    f_max_hz: 0.4,
                    components: 4,
                    seed: 8,
                    duration_s: 30.0,
                },
            ],
        },
        horizon_s: 10.0,
        seed: 7,
    }
}

fn preset(name: &str, arch: Architecture) -> CliResult<RunConfig> {
    let dd = arch == Architecture::DdPinn;
    let (system_name, f_hz, model, training, evaluation): (
        &str,
        f64,
        ModelSection,
        TrainingSection,
        EvalSection,
    ) = match name {
        "msd-50" | "msd-100" | "msd-200" => {
            let f: f64 = name["msd-".len()..].parse().expect("preset frequency");
            let numbers = if dd {
                TrainingNumbers {
                    epochs: 4000,
                    batches: 1500,
                    n_collo: 375_000,
                    n_ic: 0,
                    n_data: 2000,
                }
            } else {
                TrainingNumbers {
                    epochs: 4000,
                    batches: 400,
                    n_collo: 20_000,
                    n_ic: 40_000,
                    n_data: 2000,
                }
            };
            (
                "msd",
                f,
                model_section(arch, f, 2, 5, 1, 96),
                training_defaults(numbers, 42),
                msd_eval(),
            )
        }
        "msd-100-desk" => {
            let numbers = if dd {
                TrainingNumbers {
                    epochs: 1000,
                    batches: 20,
                    n_collo: 10_000,
                    n_ic: 0,
                    n_data: 0,
                }
            } else {
                TrainingNumbers {
                    epochs: 400,
                    batches: 20,
                    n_collo: 2_000,
                    n_ic: 4_000,
                    n_data: 0,
                }
            };
            (
                "msd",
                100.0,
                model_section(arch, 100.0, 1, 5, 1, 32),
                training_defaults(numbers, 42),
                msd_eval(),
            )
        }
        "msd-100-desk-bench" => {
            // equal collocation budget and equal hidden shape for both
            // architectures; the pinc keeps its 2:1 IC-to-collocation ratio
            let numbers = TrainingNumbers {
                epochs: 6,
                batches: 10,
                n_collo: 10_000,
                n_ic: if dd { 0 } else { 20_000 },
                n_data: 0,
            };
            (
                "msd",
                100.0,
                model_section(arch, 100.0, 1, 5, 2, 64),
                training_defaults(numbers, 42),
                msd_eval(),
            )
        }
        "chain-50" => {
            let numbers = if dd {
                TrainingNumbers {
                    epochs: 2500,
                    batches: 500,
                    n_collo: 250_000,
                    n_ic: 0,
                    n_data: 0,
                }
            } else {
                TrainingNumbers {
                    epochs: 2400,
                    batches: 400,
                    n_collo: 20_000,
                    n_ic: 40_000,
                    n_data: 0,
                }
            };
            (
                "chain",
                50.0,
                model_section(arch, 50.0, 2, 20, 2, 128),
                training_defaults(numbers, 42),
                chain_eval(),
            )
        }
        "chain-50-desk" => {
            let numbers = if dd {
                TrainingNumbers {
                    epochs: 400,
                    batches: 20,
                    n_collo: 20_000,
                    n_ic: 0,
                    n_data: 0,
                }
            } else {
                TrainingNumbers {
                    epochs: 400,
                    batches: 20,
                    n_collo: 4_000,
                    n_ic: 8_000,
                    n_data: 0,
                }
            };
            (
                "chain",
                50.0,
                model_section(arch, 50.0, 2, 10, 2, 48),
                training_defaults(numbers, 42),
                chain_eval(),
            )
        }
        "twolink-5" => {
            let (numbers, hidden, neurons) = if dd {
                (
                    TrainingNumbers {
                        epochs: 2500,
                        batches: 1000,
                        n_collo: 1_000_000,
                        n_ic: 0,
                        n_data: 0,
                    },
                    2,
                    128,
                )
            } else {
                (
                    TrainingNumbers {
                        epochs: 7000,
                        batches: 400,
                        n_collo: 20_000,
                        n_ic: 40_000,
                        n_data: 0,
                    },
                    4,
                    64,
                )
            };
            (
                "twolink",
                5.0,
                model_section(arch, 5.0, 0, 20, hidden, neurons),
                training_defaults(numbers, 42),
                twolink_eval(),
            )
        }
        "twolink-5-desk" => {
            let numbers = if dd {
                TrainingNumbers {
                    epochs: 300,
                    batches: 10,
                    n_collo: 5_000,
                    n_ic: 0,
                    n_data: 0,
                }
            } else {
                TrainingNumbers {
                    epochs: 300,
                    batches: 10,
                    n_collo: 2_000,
                    n_ic: 4_000,
                    n_data: 0,
                }
            };
            (
                "twolink",
                5.0,
                model_section(arch, 5.0, 0, 10, 2, 48),
                training_defaults(numbers, 42),
                twolink_eval(),
            )
        }
        other => {
            return Err(CliError::Config(format!(
                "unknown preset '{other}' (available: {})",
                PRESET_NAMES.join(", ")
            )))
        }
    };
    let _ = f_hz;
    Ok(RunConfig {
        preset: Some(name.to_string()),
        system: SystemSection {
            name: system_name.to_string(),
            parameters: None,
            ranges: None,
        },
        model,
        training,
        evaluation,
    })
}

fn model_section(
    arch: Architecture,
    f_hz: f64,
    delta_u: u8,
    n_g: usize,
    hidden_layers: usize,
    neurons: usize,
) -> ModelSection {
    ModelSection {
        arch,
        f_hz,
        delta_u: if arch == Architecture::Pinc { 0 } else { delta_u },
        n_g,
        damped: true,
        base_function: "sin".into(),
        hidden_layers,
        neurons,
    }
}

// ── loading and merging ──────────────────────────────────────────────

pub fn load_config(path: &std::path::Path) -> CliResult<RunConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    parse_config(&text)
}

pub fn parse_config(text: &str) -> CliResult<RunConfig> {
    let file: FileConfig = serde_json::from_str(text)
        .map_err(|e| CliError::Config(format!("invalid config JSON: {e}")))?;
    resolve(file)
}

fn resolve(file: FileConfig) -> CliResult<RunConfig> {
    let arch = file
        .model
        .as_ref()
        .and_then(|m| m.arch)
        .unwrap_or(Architecture::DdPinn);
    let mut cfg = match &file.preset {
        Some(name) => preset(name, arch)?,
        None => bare_defaults(&file, arch)?,
    };
    if let Some(s) = file.system {
        if let Some(name) = s.name {
            if cfg.preset.is_some() && name != cfg.system.name {
                return Err(CliError::Config(format!(
                    "system '{name}' conflicts with preset system '{}'",
                    cfg.system.name
                )));
            }
            cfg.system.name = name;
        }
        if s.parameters.is_some() {
            cfg.system.parameters = s.parameters;
        }
        if s.ranges.is_some() {
            cfg.system.ranges = s.ranges;
        }
    }
    if let Some(m) = file.model {
        let d = &mut cfg.model;
        if let Some(v) = m.arch {
            d.arch = v;
        }
        if let Some(v) = m.f_hz {
            d.f_hz = v;
        }
        if let Some(v) = m.delta_u {
            d.delta_u = v;
        }
        if let Some(v) = m.n_g {
            d.n_g = v;
        }
        if let Some(v) = m.damped {
            d.damped = v;
        }
        if let Some(v) = m.base_function {
            d.base_function = v;
        }
        if let Some(v) = m.hidden_layers {
            d.hidden_layers = v;
        }
        if let Some(v) = m.neurons {
            d.neurons = v;
        }
    }
    if let Some(t) = file.training {
        let d = &mut cfg.training;
        if let Some(v) = t.epochs {
            d.epochs = v;
        }
        if let Some(v) = t.batches {
            d.batches = v;
        }
        if let Some(v) = t.n_collo {
            d.n_collo = v;
        }
        if let Some(v) = t.n_ic {
            d.n_ic = v;
        }
        if let Some(v) = t.n_data {
            d.n_data = v;
        }
        if let Some(v) = t.alpha_init {
            d.alpha_init = v;
        }
        if let Some(v) = t.alpha_min {
            d.alpha_min = v;
        }
        if let Some(v) = t.plateau_factor {
            d.plateau_factor = v;
        }
        if let Some(v) = t.plateau_patience {
            d.plateau_patience = v;
        }
        if let Some(v) = t.plateau_threshold {
            d.plateau_threshold = v;
        }
        if let Some(v) = t.lra_rate {
            d.lra_rate = v;
        }
        if let Some(v) = t.val_fraction {
            d.val_fraction = v;
        }
        if let Some(v) = t.seed {
            d.seed = v;
        }
        if let Some(v) = t.threads {
            d.threads = v;
        }
    }
    if let Some(e) = file.evaluation {
        let d = &mut cfg.evaluation;
        if let Some(v) = e.test_signal {
            d.test_signal = v;
        }
        if let Some(v) = e.horizon_s {
            d.horizon_s = v;
        }
        if let Some(v) = e.seed {
            d.seed = v;
        }
    }
    // an explicit pinc override on a ddpinn preset zeroes the excitation
    // order, which only the ddpinn consumes
    if cfg.model.arch == Architecture::Pinc {
        cfg.model.delta_u = 0;
    }
    validate(&cfg)?;
    Ok(cfg)
}

fn bare_defaults(file: &FileConfig, arch: Architecture) -> CliResult<RunConfig> {
    let require = |field: &str| CliError::Config(format!("missing required field {field}"));
    let system = file.system.as_ref().ok_or_else(|| require("system"))?;
    let name = system.name.clone().ok_or_else(|| require("system.name"))?;
    let model = file.model.as_ref().ok_or_else(|| require("model"))?;
    let training = file.training.as_ref().ok_or_else(|| require("training"))?;
    let f_hz = model.f_hz.ok_or_else(|| require("model.f_hz"))?;
    let evaluation = match name.as_str() {
        "msd" => msd_eval(),
        "chain" => chain_eval(),
        "twolink" => twolink_eval(),
        other => {
            return Err(CliError::Config(format!(
                "unknown system '{other}' (msd, chain, twolink)"
            )))
        }
    };
    Ok(RunConfig {
        preset: None,
        system: SystemSection {
            name,
            parameters: None,
            ranges: None,
        },
        model: ModelSection {
            arch,
            f_hz,
            delta_u: model.delta_u.unwrap_or(0),
            n_g: model.n_g.unwrap_or(5),
            damped: model.damped.unwrap_or(true),
            base_function: model.base_function.clone().unwrap_or_else(|| "sin".into()),
            hidden_layers: model.hidden_layers.ok_or_else(|| require("model.hidden_layers"))?,
            neurons: model.neurons.ok_or_else(|| require("model.neurons"))?,
        },
        training: training_defaults(
            TrainingNumbers {
                epochs: training.epochs.ok_or_else(|| require("training.epochs"))?,
                batches: training.batches.ok_or_else(|| require("training.batches"))?,
                n_collo: training.n_collo.ok_or_else(|| require("training.n_collo"))?,
                n_ic: training.n_ic.unwrap_or(0),
                n_data: training.n_data.unwrap_or(0),
            },
            training.seed.unwrap_or(42),
        ),
        evaluation,
    })
}

fn validate(cfg: &RunConfig) -> CliResult<()> {
    if !matches!(cfg.system.name.as_str(), "msd" | "chain" | "twolink") {
        return Err(CliError::Config(format!(
            "unknown system '{}' (msd, chain, twolink)",
            cfg.system.name
        )));
    }
    ExcitationOrder::try_from(cfg.model.delta_u)
        .map_err(|e| CliError::Config(e.to_string()))?;
    if cfg.evaluation.horizon_s <= 0.0 {
        return Err(CliError::Config("evaluation horizon must be positive".into()));
    }
    // dry-build the core config so all numeric invariants are checked here
    let tc = cfg.train_config()?;
    tc.validate().map_err(|e| CliError::Config(e.to_string()))?;
    cfg.build_system()?;
    Ok(())
}

impl RunConfig {
    pub fn train_config(&self) -> CliResult<TrainConfig> {
        Ok(TrainConfig {
            arch: self.model.arch,
            frequency_hz: self.model.f_hz,
            delta_u: ExcitationOrder::try_from(self.model.delta_u)
                .map_err(|e| CliError::Config(e.to_string()))?,
            n_g: self.model.n_g,
            damped: self.model.damped,
            base_function: self.model.base_function.clone(),
            hidden_layers: self.model.hidden_layers,
            neurons: self.model.neurons,
            epochs: self.training.epochs,
            batches: self.training.batches,
            n_collo: self.training.n_collo,
            n_ic: self.training.n_ic,
            n_data: self.training.n_data,
            alpha_init: self.training.alpha_init,
            alpha_min: self.training.alpha_min,
            plateau_factor: self.training.plateau_factor,
            plateau_patience: self.training.plateau_patience,
            plateau_threshold: self.training.plateau_threshold,
            lra_rate: self.training.lra_rate,
            val_fraction: self.training.val_fraction,
            seed: self.training.seed,
            threads: self.training.threads,
        })
    }

    pub fn build_system(&self) -> CliResult<SystemModel> {
        build_system(&self.system)
    }

    /// Sampling box: explicit ranges win; otherwise the published ranges
    /// for the mass-spring-damper and two-link systems, and a box derived
    /// from the default test path (10% margin) for the chain.
    pub fn build_box(&self) -> CliResult<SamplingBox> {
        let system = self.build_system()?;
        let t_max = 1.1 / self.model.f_hz;
        if let Some(r) = &self.system.ranges {
            return SamplingBox::new(
                r.state_min.clone(),
                r.state_max.clone(),
                r.input_min.clone(),
                r.input_max.clone(),
                t_max,
            )
            .map_err(|e| CliError::Config(e.to_string()));
        }
        let bbox = match self.system.name.as_str() {
            "msd" => SamplingBox::new(
                vec![-0.4, -18.0],
                vec![0.4, 18.0],
                vec![-1.0],
                vec![1.0],
                t_max,
            )?,
            "twolink" => {
                let pi = std::f64::consts::PI;
                SamplingBox::new(
                    vec![-pi, -pi, -1.0, -1.0],
                    vec![pi, pi, 1.0, 1.0],
                    vec![-0.6, -0.6],
                    vec![0.6, 0.6],
                    t_max,
                )?
            }
            "chain" => {
                let signal = self
                    .evaluation
                    .test_signal
                    .build()
                    .map_err(|e| CliError::Config(e.to_string()))?;
                let duration = signal.duration().unwrap_or(self.evaluation.horizon_s);
                let u = |t: f64| signal.eval(t);
                let x0 = vec![0.0; system.state_dim()];
                let h = (1.0 / self.model.f_hz) / 100.0;
                let traj = simulate(&system, &x0, &u, duration, h)?;
                let (lo, hi) = derive_state_bounds(&traj, 0.10, 1e-6)?;
                let mut u_lo = f64::INFINITY;
                let mut u_hi = f64::NEG_INFINITY;
                for us in &traj.inputs {
                    u_lo = u_lo.min(us[0]);
                    u_hi = u_hi.max(us[0]);
                }
                let spread = (u_hi - u_lo).max(1e-6);
                SamplingBox::new(
                    lo,
                    hi,
                    vec![u_lo - 0.10 * spread],
                    vec![u_hi + 0.10 * spread],
                    t_max,
                )?
            }
            other => unreachable!("validated system name {other}"),
        };
        Ok(bbox)
    }
}

pub fn build_system(section: &SystemSection) -> CliResult<SystemModel> {
    let params = section.parameters.clone();
    let de = |e: serde_json::Error| CliError::Config(format!("system.parameters: {e}"));
    match section.name.as_str() {
        "msd" => {
            let p: MsdParams = match params {
                Some(v) => serde_json::from_value(v).map_err(de)?,
                None => MsdParams::default(),
            };
            SystemModel::msd(p).map_err(|e| CliError::Config(e.to_string()))
        }
        "chain" => {
            let p: ChainParams = match params {
                Some(v) => serde_json::from_value(v).map_err(de)?,
                None => ChainParams::default(),
            };
            SystemModel::chain(p).map_err(|e| CliError::Config(e.to_string()))
        }
        "twolink" => {
            let p: TwoLinkParams = match params {
                Some(v) => serde_json::from_value(v).map_err(de)?,
                None => TwoLinkParams::default(),
            };
            SystemModel::two_link(p).map_err(|e| CliError::Config(e.to_string()))
        }
        other => Err(CliError::Config(format!(
            "unknown system '{other}' (msd, chain, twolink)"
        ))),
    }
}

/// Default test signal for a bare system name (used by `simulate`).
pub fn default_signal(system_name: &str, seed: u64) -> CliResult<SignalSpec> {
    let section = match system_name {
        "msd" => msd_eval(),
        "chain" => {
            let mut e = chain_eval();
            if let SignalSpec::Multisine { seed: s, .. } = &mut e.test_signal {
                *s = seed;
            }
            e
        }
        "twolink" => twolink_eval(),
        other => {
            return Err(CliError::Config(format!(
                "unknown system '{other}' (msd, chain, twolink)"
            )))
        }
    };
    Ok(section.test_signal)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preset_msd_100_expands_to_published_numbers() {
        let cfg = parse_config(r#"{"preset": "msd-100"}"#).unwrap();
        assert_eq!(cfg.system.name, "msd");
        assert_eq!(cfg.model.arch, Architecture::DdPinn);
        assert_eq!(cfg.model.f_hz, 100.0);
        assert_eq!(cfg.model.neurons, 96);
        assert_eq!(cfg.model.hidden_layers, 1);
        assert_eq!(cfg.training.epochs, 4000);
        assert_eq!(cfg.training.batches, 1500);
        assert_eq!(cfg.training.n_collo, 375_000);
        assert_eq!(cfg.training.n_ic, 0);
        assert_eq!(cfg.training.n_data, 2000);
    }

    #[test]
    fn preset_pinc_column() {
        let cfg = parse_config(r#"{"preset": "msd-100", "model": {"arch": "pinc"}}"#).unwrap();
        assert_eq!(cfg.training.batches, 400);
        assert_eq!(cfg.training.n_collo, 20_000);
        assert_eq!(cfg.training.n_ic, 40_000);
        assert_eq!(cfg.model.neurons, 96);
        assert_eq!(cfg.model.delta_u, 0);
    }

    #[test]
    fn preset_twolink_pinc_has_four_hidden_layers() {
        let cfg = parse_config(r#"{"preset": "twolink-5", "model": {"arch": "pinc"}}"#).unwrap();
        assert_eq!(cfg.model.hidden_layers, 4);
        assert_eq!(cfg.model.neurons, 64);
        assert_eq!(cfg.training.epochs, 7000);
    }

    #[test]
    fn overrides_take_precedence() {
        let cfg = parse_config(
            r#"{"preset": "msd-100-desk", "training": {"epochs": 7, "seed": 9}}"#,
        )
        .unwrap();
        assert_eq!(cfg.training.epochs, 7);
        assert_eq!(cfg.training.seed, 9);
        assert_eq!(cfg.training.n_collo, 10_000);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(matches!(
            parse_config(r#"{"preset": "msd-100", "extra": 1}"#),
            Err(CliError::Config(_))
        ));
        assert!(matches!(
            parse_config(r#"{"preset": "msd-100", "training": {"bogus_key": 1}}"#),
            Err(CliError::Config(_))
        ));
    }

    #[test]
    fn unknown_preset_rejected() {
        assert!(matches!(
            parse_config(r#"{"preset": "msd-73"}"#),
            Err(CliError::Config(_))
        ));
    }

    #[test]
    fn malformed_json_rejected() {
        assert!(matches!(
            parse_config("{"),
            Err(CliError::Config(_))
        ));
    }

    #[test]
    fn msd_box_matches_published_ranges() {
        let cfg = parse_config(r#"{"preset": "msd-100"}"#).unwrap();
        let b = cfg.build_box().unwrap();
        assert_eq!(b.state_min, vec![-0.4, -18.0]);
        assert_eq!(b.state_max, vec![0.4, 18.0]);
        assert_eq!(b.input_min, vec![-1.0]);
        assert_eq!(b.input_max, vec![1.0]);
        assert!((b.t_max - 0.011).abs() < 1e-12);
    }

    #[test]
    fn chain_box_derived_from_test_path_contains_it() {
        let cfg = parse_config(r#"{"preset": "chain-50-desk"}"#).unwrap();
        let b = cfg.build_box().unwrap();
        let system = cfg.build_system().unwrap();
        let signal = cfg.evaluation.test_signal.build().unwrap();
        let u = |t: f64| signal.eval(t);
        let traj = simulate(&system, &vec![0.0; 10], &u, 5.0, 0.02 / 100.0).unwrap();
        for s in &traj.states {
            for j in 0..10 {
                assert!(b.state_min[j] < s[j] && s[j] < b.state_max[j]);
            }
        }
    }

    #[test]
    fn custom_parameters_accepted_and_strict() {
        let cfg = parse_config(
            r#"{"preset": "msd-100-desk",
                "system": {"parameters": {"mass": 0.002, "damping": 0.001,
                            "stiffness": 1.0, "stiffness_cubic": 15.0}}}"#,
        )
        .unwrap();
        match cfg.build_system().unwrap() {
            SystemModel::Msd(p) => assert_eq!(p.mass, 0.002),
            _ => panic!("wrong system"),
        }
        assert!(parse_config(
            r#"{"preset": "msd-100-desk", "system": {"parameters": {"masse": 1.0}}}"#
        )
        .is_err());
    }

    #[test]
    fn bare_config_without_preset() {
        let cfg = parse_config(
            r#"{"system": {"name": "msd"},
                "model": {"arch": "ddpinn", "f_hz": 100.0, "hidden_layers": 1, "neurons": 16},
                "training": {"epochs": 10, "batches": 2, "n_collo": 100}}"#,
        )
        .unwrap();
        assert_eq!(cfg.model.n_g, 5);
        assert_eq!(cfg.training.alpha_init, 1e-3);
    }

    #[test]
    fn config_roundtrips_through_json() {
        let cfg = parse_config(r#"{"preset": "chain-50"}"#).unwrap();
        let text = serde_json::to_string(&cfg).unwrap();
        let back: RunConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(cfg, back);
    }
}
