//! CSV and manifest writers.
//!
//! All CSVs use '.' decimals, comma separators and a header row; floats are
//! written in shortest round-trip form so identical runs produce identical
//! bytes. Wall-clock timings go to the JSON manifest, never into a CSV.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use sha2::{Digest, Sha256};

use ddpinn_core::integrate::Trajectory;
use ddpinn_core::train::EpochRecord;

use crate::config::RunConfig;
use crate::CliResult;

pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "nan".to_string()
    } else {
        format!("{v}")
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

pub fn write_training_log(path: &Path, log: &[EpochRecord]) -> CliResult<()> {
    let mut out = String::new();
    out.push_str(
        "epoch,lr,lambda_ic,lambda_physics,lambda_data,train_loss,val_physics,val_ic,val_data,val_total\n",
    );
    for r in log {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            r.epoch,
            fmt_f64(r.lr),
            fmt_f64(r.lambda_ic),
            fmt_f64(r.lambda_physics),
            fmt_f64(r.lambda_data),
            fmt_f64(r.train_loss),
            fmt_opt(r.val_physics),
            fmt_opt(r.val_ic),
            fmt_opt(r.val_data),
            fmt_f64(r.val_total),
        );
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Plain trajectory: `t, x_1..x_m, u_1..u_p`.
pub fn write_trajectory(path: &Path, traj: &Trajectory) -> CliResult<()> {
    let m = traj.states.first().map(Vec::len).unwrap_or(0);
    let p = traj.inputs.first().map(Vec::len).unwrap_or(0);
    let mut out = String::from("t");
    for j in 1..=m {
        let _ = write!(out, ",x_{j}");
    }
    for j in 1..=p {
        let _ = write!(out, ",u_{j}");
    }
    out.push('\n');
    for i in 0..traj.len() {
        let _ = write!(out, "{}", fmt_f64(traj.times[i]));
        for v in &traj.states[i] {
            let _ = write!(out, ",{}", fmt_f64(*v));
        }
        for v in &traj.inputs[i] {
            let _ = write!(out, ",{}", fmt_f64(*v));
        }
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Side-by-side evaluation trajectory on the prediction grid:
/// `t, x_1..x_m, xhat_1..xhat_m, u_1..u_p`.
pub fn write_comparison_trajectory(
    path: &Path,
    pred: &Trajectory,
    truth: &Trajectory,
) -> CliResult<()> {
    let m = pred.states.first().map(Vec::len).unwrap_or(0);
    let p = pred.inputs.first().map(Vec::len).unwrap_or(0);
    let mut out = String::from("t");
    for j in 1..=m {
        let _ = write!(out, ",x_{j}");
    }
    for j in 1..=m {
        let _ = write!(out, ",xhat_{j}");
    }
    for j in 1..=p {
        let _ = write!(out, ",u_{j}");
    }
    out.push('\n');
    for i in 0..pred.len() {
        let t = pred.times[i];
        let reference = truth.state_at(t).unwrap_or_else(|_| vec![f64::NAN; m]);
        let _ = write!(out, "{}", fmt_f64(t));
        for v in &reference {
            let _ = write!(out, ",{}", fmt_f64(*v));
        }
        for v in &pred.states[i] {
            let _ = write!(out, ",{}", fmt_f64(*v));
        }
        for v in &pred.inputs[i] {
            let _ = write!(out, ",{}", fmt_f64(*v));
        }
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub struct EvaluationMetrics {
    pub scaled_mse: f64,
    pub horizon_s: f64,
    pub steps: usize,
    pub divergence_step: Option<usize>,
    pub box_exit_step: Option<usize>,
    pub median_step_latency_us: f64,
    pub latency_per_sim_second_ms: f64,
    pub latency_ratio_vs_baseline: Option<f64>,
}

pub fn write_metrics(path: &Path, m: &EvaluationMetrics) -> CliResult<()> {
    let mut out = String::new();
    out.push_str(
        "scaled_mse,horizon_s,steps,divergence_step,box_exit_step,median_step_latency_us,latency_per_sim_second_ms,latency_ratio_vs_baseline\n",
    );
    let _ = writeln!(
        out,
        "{},{},{},{},{},{},{},{}",
        fmt_f64(m.scaled_mse),
        fmt_f64(m.horizon_s),
        m.steps,
        m.divergence_step.map(|v| v.to_string()).unwrap_or_default(),
        m.box_exit_step.map(|v| v.to_string()).unwrap_or_default(),
        fmt_f64(m.median_step_latency_us),
        fmt_f64(m.latency_per_sim_second_ms),
        fmt_opt(m.latency_ratio_vs_baseline),
    );
    std::fs::write(path, out)?;
    Ok(())
}

pub struct BenchmarkEpochRow {
    pub epoch: usize,
    pub epoch_ms_a: f64,
    pub epoch_ms_b: f64,
    pub train_loss_a: f64,
    pub train_loss_b: f64,
    pub val_physics_a: Option<f64>,
    pub val_physics_b: Option<f64>,
}

pub fn write_benchmark_epochs(path: &Path, rows: &[BenchmarkEpochRow]) -> CliResult<()> {
    let mut out = String::new();
    out.push_str("epoch,epoch_ms_a,epoch_ms_b,train_loss_a,train_loss_b,val_physics_a,val_physics_b\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.epoch,
            fmt_f64(r.epoch_ms_a),
            fmt_f64(r.epoch_ms_b),
            fmt_f64(r.train_loss_a),
            fmt_f64(r.train_loss_b),
            fmt_opt(r.val_physics_a),
            fmt_opt(r.val_physics_b),
        );
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn write_benchmark_summary(path: &Path, rows: &[(&str, f64)]) -> CliResult<()> {
    let mut out = String::from("metric,value\n");
    for (name, value) in rows {
        let _ = writeln!(out, "{name},{}", fmt_f64(*value));
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Reproducibility manifest written next to every command's outputs. This
/// is the one place wall-clock data lives.
#[derive(Serialize)]
struct Manifest<'a> {
    command: String,
    crate_version: &'static str,
    created_unix_ms: u128,
    seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    preset: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    config_sha256: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    config_b_sha256: Option<String>,
    outputs: Vec<String>,
    warnings: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    timing: Option<ManifestTiming>,
    #[serde(skip_serializing_if = "Option::is_none")]
    details: Option<serde_json::Value>,
    #[serde(skip_serializing_if = "Option::is_none")]
    config: Option<&'a RunConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    config_b: Option<&'a RunConfig>,
}

#[derive(Serialize)]
pub struct ManifestTiming {
    pub total_wall_ms: f64,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub epoch_wall_ms: Vec<f64>,
}

pub struct ManifestData<'a> {
    pub command: String,
    pub seed: u64,
    pub config: Option<&'a RunConfig>,
    pub config_b: Option<&'a RunConfig>,
    pub outputs: Vec<String>,
    pub warnings: Vec<String>,
    pub timing: Option<ManifestTiming>,
    pub details: Option<serde_json::Value>,
}

pub fn config_hash(config: &RunConfig) -> String {
    let canonical = serde_json::to_string(config).expect("config serializes");
    let mut hasher = Sha256::new();
    hasher.update(canonical.as_bytes());
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn write_manifest(dir: &Path, data: ManifestData<'_>) -> CliResult<PathBuf> {
    let manifest = Manifest {
        command: data.command,
        crate_version: env!("CARGO_PKG_VERSION"),
        created_unix_ms: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_millis())
            .unwrap_or(0),
        seed: data.seed,
        preset: data.config.and_then(|c| c.preset.clone()),
        config_sha256: data.config.map(config_hash),
        config_b_sha256: data.config_b.map(config_hash),
        outputs: data.outputs,
        warnings: data.warnings,
        timing: data.timing,
        details: data.details,
        config: data.config,
        config_b: data.config_b,
    };
    let path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest)
        .map_err(|e| crate::CliError::Runtime(format!("manifest serialization: {e}")))?;
    std::fs::write(&path, text)?;
    Ok(path)
}
