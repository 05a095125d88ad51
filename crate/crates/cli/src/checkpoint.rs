//! Trained-model serialization.
//!
//! Checkpoints are JSON with full-precision decimal floats (shortest
//! round-trip representation), so a loaded model reproduces the saved
//! model's predictions bitwise.

use std::path::Path;

use serde::{Deserialize, Serialize};

use ddpinn_core::ansatz::{AnsatzSpec, BaseFunction};
use ddpinn_core::autodiff::mlp::Mlp;
use ddpinn_core::dynamics::SystemModel;
use ddpinn_core::model::{DdPinnModel, ExcitationOrder, PincModel};
use ddpinn_core::sample::SamplingBox;
use ddpinn_core::train::{Architecture, TrainedModel, TrainingSummary};

use crate::config::RunConfig;
use crate::{CliError, CliResult};

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format_version: u32,
    pub config: RunConfig,
    pub layer_sizes: Vec<usize>,
    /// Row-major `(out × in)` weight matrix per layer.
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
    pub sampling_box: SamplingBox,
    pub summary: TrainingSummary,
}

impl Checkpoint {
    pub fn from_model(
        model: &TrainedModel,
        config: &RunConfig,
        bbox: &SamplingBox,
        summary: TrainingSummary,
    ) -> Self {
        let net = model.net();
        Checkpoint {
            format_version: CHECKPOINT_FORMAT_VERSION,
            config: config.clone(),
            layer_sizes: net.layer_sizes().to_vec(),
            weights: (0..net.layer_count()).map(|l| net.weights(l).to_vec()).collect(),
            biases: (0..net.layer_count()).map(|l| net.biases(l).to_vec()).collect(),
            sampling_box: bbox.clone(),
            summary,
        }
    }

    pub fn save(&self, path: &Path) -> CliResult<()> {
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| CliError::Runtime(format!("checkpoint serialization: {e}")))?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let ckpt: Checkpoint = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("invalid checkpoint: {e}")))?;
        if ckpt.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(CliError::Config(format!(
                "unsupported checkpoint format version {}",
                ckpt.format_version
            )));
        }
        Ok(ckpt)
    }

    /// Reconstruct the model and its system.
    pub fn into_model(&self) -> CliResult<(TrainedModel, SystemModel)> {
        let system = self.config.build_system()?;
        let net = Mlp::from_parts(
            self.layer_sizes.clone(),
            self.weights.clone(),
            self.biases.clone(),
        )
        .map_err(|e| CliError::Config(format!("checkpoint network: {e}")))?;
        let model = match self.config.model.arch {
            Architecture::DdPinn => {
                let spec = AnsatzSpec::new(
                    system.state_dim(),
                    self.config.model.n_g,
                    self.config.model.damped,
                );
                let base = BaseFunction::by_name(&self.config.model.base_function)
                    .map_err(|e| CliError::Config(e.to_string()))?;
                let order = ExcitationOrder::try_from(self.config.model.delta_u)
                    .map_err(|e| CliError::Config(e.to_string()))?;
                TrainedModel::DdPinn(
                    DdPinnModel::new(
                        net,
                        spec,
                        base,
                        self.sampling_box.clone(),
                        self.config.model.f_hz,
                        order,
                    )
                    .map_err(|e| CliError::Config(e.to_string()))?,
                )
            }
            Architecture::Pinc => TrainedModel::Pinc(
                PincModel::new(net, self.sampling_box.clone(), self.config.model.f_hz)
                    .map_err(|e| CliError::Config(e.to_string()))?,
            ),
        };
        Ok((model, system))
    }
}
