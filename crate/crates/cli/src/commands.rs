//! The four subcommands: train, evaluate, benchmark, simulate.

use std::path::{Path, PathBuf};

use serde_json::json;

use ddpinn_core::integrate::{simulate, Trajectory, ORACLE_SUBSTEPS};
use ddpinn_core::rollout::{
    knot_sequence, median, relative_prediction_time, scaled_mse, self_loop, Rk4Oracle,
    RolloutResult, StepPredictor,
};
use ddpinn_core::signal::{Signal, SignalSpec};
use ddpinn_core::train::{train_run, TrainOutcome, TrainedModel};

use crate::checkpoint::Checkpoint;
use crate::config::{self, RunConfig};
use crate::report::{
    self, BenchmarkEpochRow, EvaluationMetrics, ManifestData, ManifestTiming,
};
use crate::{CliError, CliResult, OUT_DIR_ENV};

/// Flags shared by every subcommand.
#[derive(Debug, Default, Clone)]
pub struct CommonArgs {
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub threads: Option<usize>,
}

/// Resolve the run directory: explicit flag wins (used as-is), otherwise a
/// fresh directory under `$DDPINN_OUT_DIR` or `./runs`.
fn resolve_out_dir(common: &CommonArgs, stem: &str) -> CliResult<PathBuf> {
    if let Some(dir) = &common.out_dir {
        std::fs::create_dir_all(dir)?;
        return Ok(dir.clone());
    }
    let root = std::env::var(OUT_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|_| PathBuf::from("runs"));
    let mut candidate = root.join(stem);
    let mut counter = 1;
    while candidate.exists() {
        counter += 1;
        candidate = root.join(format!("{stem}-{counter}"));
    }
    std::fs::create_dir_all(&candidate)?;
    Ok(candidate)
}

fn apply_overrides(cfg: &mut RunConfig, common: &CommonArgs) {
    if let Some(seed) = common.seed {
        cfg.training.seed = seed;
    }
    if let Some(threads) = common.threads {
        cfg.training.threads = threads;
    }
}

fn stem_of(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "run".into())
}

/// Train a model from a config file; writes `checkpoint.json`,
/// `training_log.csv` and `manifest.json`.
pub fn cmd_train(config_path: &Path, common: &CommonArgs) -> CliResult<PathBuf> {
    let mut cfg = config::load_config(config_path)?;
    apply_overrides(&mut cfg, common);
    let dir = resolve_out_dir(
        common,
        &format!("train-{}-{}", stem_of(config_path), cfg.training.seed),
    )?;
    let system = cfg.build_system()?;
    let bbox = cfg.build_box()?;
    let train_cfg = cfg.train_config()?;
    let outcome = train_run(&system, &bbox, &train_cfg).map_err(CliError::from)?;

    let ckpt = Checkpoint::from_model(&outcome.model, &cfg, &bbox, outcome.summary.clone());
    ckpt.save(&dir.join("checkpoint.json"))?;
    report::write_training_log(&dir.join("training_log.csv"), &outcome.log)?;
    let mut warnings = Vec::new();
    if let Some(epoch) = outcome.summary.diverged_at {
        warnings.push(format!(
            "training diverged at epoch {epoch}; checkpoint holds the last finite parameters"
        ));
    }
    report::write_manifest(
        &dir,
        ManifestData {
            command: format!("train {}", config_path.display()),
            seed: cfg.training.seed,
            config: Some(&cfg),
            config_b: None,
            outputs: vec!["checkpoint.json".into(), "training_log.csv".into()],
            warnings,
            timing: Some(ManifestTiming {
                total_wall_ms: outcome.summary.wall_clock_ms,
                epoch_wall_ms: outcome.epoch_wall_ms.clone(),
            }),
            details: None,
        },
    )?;
    if outcome.summary.diverged_at.is_some() {
        return Err(CliError::Divergence { out_dir: dir });
    }
    Ok(dir)
}

fn parse_signal(json: &str) -> CliResult<SignalSpec> {
    serde_json::from_str(json).map_err(|e| CliError::Config(format!("invalid signal spec: {e}")))
}

fn build_signal(spec: &SignalSpec, input_dim: usize) -> CliResult<Signal> {
    let signal = spec
        .build()
        .map_err(|e| CliError::Config(e.to_string()))?;
    if signal.channels() != input_dim {
        return Err(CliError::Config(format!(
            "signal has {} channels, system expects {input_dim}",
            signal.channels()
        )));
    }
    Ok(signal)
}

pub struct EvaluateArgs<'a> {
    pub checkpoint: &'a Path,
    pub signal_json: Option<&'a str>,
    pub horizon_s: Option<f64>,
    pub baseline: Option<&'a Path>,
    /// Replace the model with the RK4 ground-truth integrator (debug mode).
    pub oracle: bool,
}

/// Evaluate a checkpoint on a test signal: RK4 ground truth, self-loop
/// rollout, metrics and trajectory CSVs.
pub fn cmd_evaluate(args: &EvaluateArgs<'_>, common: &CommonArgs) -> CliResult<PathBuf> {
    let ckpt = Checkpoint::load(args.checkpoint)?;
    let cfg = ckpt.config.clone();
    let (model, system) = ckpt.into_model()?;
    let dir = resolve_out_dir(
        common,
        &format!("evaluate-{}", stem_of(args.checkpoint)),
    )?;

    let spec = match args.signal_json {
        Some(json) => parse_signal(json)?,
        None => cfg.evaluation.test_signal.clone(),
    };
    let horizon = args.horizon_s.unwrap_or(cfg.evaluation.horizon_s);
    if horizon <= 0.0 {
        return Err(CliError::Config("horizon must be positive".into()));
    }
    let signal = build_signal(&spec, system.input_dim())?;
    if let Some(duration) = signal.duration() {
        if horizon > duration * (1.0 + 1e-9) {
            return Err(CliError::Config(format!(
                "horizon {horizon} s exceeds the signal duration {duration} s"
            )));
        }
    }

    let step = model.step();
    let steps = (horizon / step).round().max(1.0) as usize;
    let x0 = vec![0.0; system.state_dim()];
    let u = |t: f64| signal.eval(t);
    let truth = simulate(
        &system,
        &x0,
        &u,
        steps as f64 * step,
        step / ORACLE_SUBSTEPS as f64,
    )
    .map_err(CliError::from)?;

    let rolled: RolloutResult = if args.oracle {
        let oracle = Rk4Oracle {
            system: &system,
            signal: &signal,
            step,
            substeps: ORACLE_SUBSTEPS,
        };
        let knots = knot_sequence(&signal, step, ddpinn_core::model::ExcitationOrder::Zoh, steps);
        self_loop(&oracle, &x0, &knots, steps).map_err(CliError::from)?
    } else {
        let knots = knot_sequence(&signal, step, model.order(), steps);
        self_loop(&model, &x0, &knots, steps).map_err(CliError::from)?
    };

    let mse = scaled_mse(&rolled.trajectory, &truth, model.bbox(), horizon)
        .map_err(CliError::from)?;
    let median_latency = if rolled.step_latencies.is_empty() {
        0.0
    } else {
        median(&rolled.step_latencies)
    };

    let latency_ratio = match args.baseline {
        Some(path) => {
            let base_ckpt = Checkpoint::load(path)?;
            let (base_model, base_system) = base_ckpt.into_model()?;
            if base_system.state_dim() != system.state_dim() {
                return Err(CliError::Config(
                    "baseline checkpoint is for a different system".into(),
                ));
            }
            let model_knots = knot_sequence(&signal, step, model.order(), 1).remove(0);
            let base_knots =
                knot_sequence(&signal, base_model.step(), base_model.order(), 1).remove(0);
            Some(
                relative_prediction_time(&model, &model_knots, &base_model, &base_knots, &x0, 1000)
                    .map_err(CliError::from)?,
            )
        }
        None => None,
    };

    let metrics = EvaluationMetrics {
        scaled_mse: mse,
        horizon_s: horizon,
        steps,
        divergence_step: rolled.diverged_at,
        box_exit_step: rolled.box_exit_step,
        median_step_latency_us: median_latency * 1e6,
        latency_per_sim_second_ms: median_latency * model.frequency_hz() * 1e3,
        latency_ratio_vs_baseline: latency_ratio,
    };
    report::write_metrics(&dir.join("metrics.csv"), &metrics)?;
    report::write_comparison_trajectory(&dir.join("trajectory.csv"), &rolled.trajectory, &truth)?;
    let mut warnings = Vec::new();
    if let Some(k) = rolled.diverged_at {
        warnings.push(format!("self-loop prediction diverged at step {k}"));
    }
    if let Some(k) = rolled.box_exit_step {
        warnings.push(format!("prediction left the sampling box at step {k}"));
    }
    report::write_manifest(
        &dir,
        ManifestData {
            command: format!("evaluate {}", args.checkpoint.display()),
            seed: cfg.evaluation.seed,
            config: Some(&cfg),
            config_b: None,
            outputs: vec!["metrics.csv".into(), "trajectory.csv".into()],
            warnings,
            timing: None,
            details: Some(json!({
                "signal": spec,
                "horizon_s": horizon,
                "steps": steps,
                "oracle": args.oracle,
            })),
        },
    )?;
    Ok(dir)
}

/// Train two configs on the same system with a shared epoch budget and
/// report per-epoch wall-clock, loss curves and prediction latency.
pub fn cmd_benchmark(
    config_a: &Path,
    config_b: &Path,
    epochs: usize,
    common: &CommonArgs,
) -> CliResult<PathBuf> {
    let mut cfg_a = config::load_config(config_a)?;
    let mut cfg_b = config::load_config(config_b)?;
    apply_overrides(&mut cfg_a, common);
    apply_overrides(&mut cfg_b, common);
    if epochs > 0 {
        cfg_a.training.epochs = epochs;
        cfg_b.training.epochs = epochs;
    }
    if cfg_a.system != cfg_b.system {
        return Err(CliError::Config(
            "benchmark configs target different systems".into(),
        ));
    }
    let dir = resolve_out_dir(
        common,
        &format!("benchmark-{}-vs-{}", stem_of(config_a), stem_of(config_b)),
    )?;

    let run = |cfg: &RunConfig| -> CliResult<TrainOutcome> {
        let system = cfg.build_system()?;
        let bbox = cfg.build_box()?;
        train_run(&system, &bbox, &cfg.train_config()?).map_err(CliError::from)
    };
    let out_a = run(&cfg_a)?;
    let out_b = run(&cfg_b)?;

    let rows: Vec<BenchmarkEpochRow> = (0..out_a.log.len().min(out_b.log.len()))
        .map(|e| BenchmarkEpochRow {
            epoch: e,
            epoch_ms_a: out_a.epoch_wall_ms[e],
            epoch_ms_b: out_b.epoch_wall_ms[e],
            train_loss_a: out_a.log[e].train_loss,
            train_loss_b: out_b.log[e].train_loss,
            val_physics_a: out_a.log[e].val_physics,
            val_physics_b: out_b.log[e].val_physics,
        })
        .collect();

    // median per-epoch time; the first epoch is excluded when possible to
    // keep one-off allocation effects out of the statistic
    let epoch_median = |ms: &[f64]| -> f64 {
        if ms.len() > 2 {
            median(&ms[1..])
        } else {
            median(ms)
        }
    };
    let med_a = epoch_median(&out_a.epoch_wall_ms);
    let med_b = epoch_median(&out_b.epoch_wall_ms);

    // prediction latency at matched workloads, interleaved measurement
    let bbox = cfg_a.build_box()?;
    let x0 = bbox.state_midpoints();
    let mid_u: Vec<f64> = bbox
        .input_min
        .iter()
        .zip(bbox.input_max.iter())
        .map(|(a, b)| 0.5 * (a + b))
        .collect();
    let knots_for = |m: &TrainedModel| -> Vec<Vec<f64>> {
        (0..StepPredictor::knots_per_step(m))
            .map(|_| mid_u.clone())
            .collect()
    };
    let ka = knots_for(&out_a.model);
    let kb = knots_for(&out_b.model);
    let latency_ratio =
        relative_prediction_time(&out_b.model, &kb, &out_a.model, &ka, &x0, 1000)
            .map_err(CliError::from)?;

    report::write_benchmark_epochs(&dir.join("benchmark.csv"), &rows)?;
    let summary_rows = [
        ("median_epoch_ms_a", med_a),
        ("median_epoch_ms_b", med_b),
        ("epoch_time_ratio_b_over_a", med_b / med_a),
        ("step_latency_ratio_b_over_a", latency_ratio),
        (
            "final_val_physics_a",
            out_a
                .summary
                .final_val_physics
                .unwrap_or(f64::NAN),
        ),
        (
            "final_val_physics_b",
            out_b
                .summary
                .final_val_physics
                .unwrap_or(f64::NAN),
        ),
    ];
    report::write_benchmark_summary(&dir.join("benchmark_summary.csv"), &summary_rows)?;
    report::write_manifest(
        &dir,
        ManifestData {
            command: format!(
                "benchmark {} {} --epochs {epochs}",
                config_a.display(),
                config_b.display()
            ),
            seed: cfg_a.training.seed,
            config: Some(&cfg_a),
            config_b: Some(&cfg_b),
            outputs: vec!["benchmark.csv".into(), "benchmark_summary.csv".into()],
            warnings: Vec::new(),
            timing: Some(ManifestTiming {
                total_wall_ms: out_a.summary.wall_clock_ms + out_b.summary.wall_clock_ms,
                epoch_wall_ms: Vec::new(),
            }),
            details: None,
        },
    )?;
    Ok(dir)
}

/// Integrate a benchmark system under a test signal and write the
/// ground-truth trajectory CSV.
pub fn cmd_simulate(
    system_name: &str,
    signal_json: Option<&str>,
    duration: f64,
    step: f64,
    common: &CommonArgs,
) -> CliResult<PathBuf> {
    if duration <= 0.0 || step <= 0.0 {
        return Err(CliError::Config(
            "duration and step must be positive".into(),
        ));
    }
    let section = crate::config::SystemSection {
        name: system_name.to_string(),
        parameters: None,
        ranges: None,
    };
    let system = config::build_system(&section)?;
    let seed = common.seed.unwrap_or(7);
    let spec = match signal_json {
        Some(json) => parse_signal(json)?,
        None => config::default_signal(system_name, seed)?,
    };
    let signal = build_signal(&spec, system.input_dim())?;
    if let Some(sig_duration) = signal.duration() {
        if duration > sig_duration * (1.0 + 1e-9) {
            return Err(CliError::Config(format!(
                "duration {duration} s exceeds the signal duration {sig_duration} s"
            )));
        }
    }
    let dir = resolve_out_dir(common, &format!("simulate-{system_name}-{seed}"))?;
    let x0 = vec![0.0; system.state_dim()];
    let u = |t: f64| signal.eval(t);
    let traj: Trajectory = simulate(&system, &x0, &u, duration, step).map_err(CliError::from)?;
    report::write_trajectory(&dir.join("trajectory.csv"), &traj)?;
    report::write_manifest(
        &dir,
        ManifestData {
            command: format!("simulate {system_name}"),
            seed,
            config: None,
            config_b: None,
            outputs: vec!["trajectory.csv".into()],
            warnings: Vec::new(),
            timing: None,
            details: Some(json!({
                "system": system_name,
                "signal": spec,
                "duration_s": duration,
                "step_s": step,
                "samples": traj.len(),
            })),
        },
    )?;
    Ok(dir)
}
