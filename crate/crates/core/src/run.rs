//! Run directories: training with periodic snapshots, evaluation, sweeps and plots.
//!
//! A finished run directory holds `config.txt`, `manifest.json`,
//! `metrics.csv`, `lambda.csv` and `checkpoint.txt`.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use crate::checkpoint::{read_checkpoint, write_checkpoint};
use crate::config::{config_hash, parse_config, set_key, to_config_text};
use crate::error::{config_err, Error, Result};
use crate::plot::{LineChart, Series};
use crate::report::{lambda_csv, metrics_csv, parse_lambda_csv, read_metrics, rolling_mean, tail_mean, RunManifest};
use crate::trainer::{evaluate, EvalSummary, TrainConfig, Trainer};

pub const CONFIG_FILE: &str = "config.txt";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const METRICS_FILE: &str = "metrics.csv";
pub const LAMBDA_FILE: &str = "lambda.csv";
pub const CHECKPOINT_FILE: &str = "checkpoint.txt";

/// Window of the rolling means used in summaries and plots.
pub const ROLLING_WINDOW: usize = 50;

fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

fn io_context(path: &Path, e: std::io::Error) -> Error {
    Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| io_context(path, e))
}

fn snapshot(dir: &Path, trainer: &Trainer, manifest: &mut RunManifest) -> Result<()> {
    write_file(&dir.join(METRICS_FILE), &metrics_csv(&trainer.metrics))?;
    write_file(&dir.join(LAMBDA_FILE), &lambda_csv(&trainer.metrics))?;
    write_checkpoint(&dir.join(CHECKPOINT_FILE), trainer)?;
    manifest.episodes_completed = trainer.episode;
    manifest.write(&dir.join(MANIFEST_FILE))
}

/// Trains into `dir`. With `resume`, continues from the directory's checkpoint;
/// otherwise the directory must not already contain a run.
pub fn train_run(config: TrainConfig, dir: &Path, resume: bool) -> Result<RunManifest> {
    config.validate()?;
    std::fs::create_dir_all(dir).map_err(|e| io_context(dir, e))?;
    let manifest_path = dir.join(MANIFEST_FILE);
    let (mut trainer, mut manifest) = if resume {
        let stored = parse_config(&dir.join(CONFIG_FILE))?;
        if config_hash(&stored) != config_hash(&config) {
            return Err(config_err("resume config differs from the one stored in the run directory"));
        }
        let trainer = read_checkpoint(&dir.join(CHECKPOINT_FILE), config)?;
        (trainer, RunManifest::read(&manifest_path)?)
    } else {
        if manifest_path.exists() {
            return Err(config_err(format!("{} already holds a run; pass --resume or pick a new directory", dir.display())));
        }
        write_file(&dir.join(CONFIG_FILE), &to_config_text(&config))?;
        let manifest = RunManifest {
            tool: "swarm-cc".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            scheme: config.scheme.name().into(),
            seed: config.seed,
            config_sha256: config_hash(&config),
            config_file: CONFIG_FILE.into(),
            metrics_file: METRICS_FILE.into(),
            lambda_file: LAMBDA_FILE.into(),
            checkpoint_file: CHECKPOINT_FILE.into(),
            started_at: now(),
            finished_at: None,
            episodes_completed: 0,
        };
        (Trainer::new(config)?, manifest)
    };
    let every = trainer.config.checkpoint_every;
    while !trainer.is_finished() {
        let m = trainer.run_episode()?;
        log::info!(
            "episode {}/{}: success {:.3}, energy {:.3}, lambda {:.4}",
            m.episode + 1,
            trainer.config.episodes,
            m.mean_success,
            m.mean_energy,
            m.lambda_mean()
        );
        if every > 0 && trainer.episode % every == 0 && !trainer.is_finished() {
            snapshot(dir, &trainer, &mut manifest)?;
        }
    }
    manifest.finished_at = Some(now());
    snapshot(dir, &trainer, &mut manifest)?;
    Ok(manifest)
}

/// Loads a run's config and latest checkpoint.
pub fn load_run(dir: &Path) -> Result<Trainer> {
    if !dir.is_dir() {
        return Err(config_err(format!("run directory {} does not exist", dir.display())));
    }
    let config = parse_config(&dir.join(CONFIG_FILE))?;
    read_checkpoint(&dir.join(CHECKPOINT_FILE), config)
}

/// Greedy evaluation of a run's agents, optionally under another config.
pub fn eval_run(dir: &Path, config_override: Option<&Path>, episodes: usize, seed: u64) -> Result<EvalSummary> {
    let trainer = load_run(dir)?;
    let config = match config_override {
        Some(p) => parse_config(p)?,
        None => trainer.config.clone(),
    };
    evaluate(&trainer.agents, &config, episodes, seed)
}

/// One sweep axis: a config key and the values to try.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepAxis {
    pub key: String,
    pub values: Vec<String>,
}

impl SweepAxis {
    pub fn parse(spec: &str) -> Result<Self> {
        let (key, values) = spec.split_once('=').ok_or_else(|| config_err(format!("sweep axis must look like key=v1,v2, got '{spec}'")))?;
        let values: Vec<String> = values.split(',').map(|v| v.trim().to_string()).filter(|v| !v.is_empty()).collect();
        if values.is_empty() {
            return Err(config_err(format!("sweep axis '{key}' has no values")));
        }
        let mut probe = TrainConfig::default();
        for v in &values {
            set_key(&mut probe, key.trim(), v).map_err(config_err)?;
        }
        Ok(Self { key: key.trim().to_string(), values })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub dir: PathBuf,
    pub assignment: Vec<(String, String)>,
    pub seed: u64,
    pub final_success: f64,
    pub final_energy: f64,
    pub final_lambda: f64,
}

/// Rolling-mean summaries over the final fifth of a run.
pub fn final_summary(dir: &Path) -> Result<(f64, f64, f64)> {
    let rows = read_metrics(&dir.join(METRICS_FILE))?;
    let col = |f: fn(&crate::report::MetricsRow) -> f64| rolling_mean(&rows.iter().map(f).collect::<Vec<_>>(), ROLLING_WINDOW);
    Ok((
        tail_mean(&col(|r| r.mean_success), 0.2),
        tail_mean(&col(|r| r.mean_energy), 0.2),
        tail_mean(&rows.iter().map(|r| r.lambda_mean).collect::<Vec<_>>(), 0.2),
    ))
}

/// Cartesian grid over `axes` times `seeds` replicates (seed, seed+1, ...), run
/// sequentially. Every grid point of replicate `r` uses the same seed.
pub fn sweep(base: &TrainConfig, axes: &[SweepAxis], seeds: usize, out: &Path) -> Result<Vec<SweepPoint>> {
    if axes.is_empty() {
        return Err(config_err("sweep needs at least one --axis"));
    }
    std::fs::create_dir_all(out).map_err(|e| io_context(out, e))?;
    let mut grid: Vec<Vec<(String, String)>> = vec![Vec::new()];
    for axis in axes {
        grid = grid
            .into_iter()
            .flat_map(|prefix| {
                axis.values.iter().map(move |v| {
                    let mut p = prefix.clone();
                    p.push((axis.key.clone(), v.clone()));
                    p
                })
            })
            .collect();
    }
    let mut points = Vec::new();
    for assignment in &grid {
        for r in 0..seeds.max(1) {
            let mut cfg = base.clone();
            for (k, v) in assignment {
                set_key(&mut cfg, k, v).map_err(config_err)?;
            }
            cfg.seed = base.seed + r as u64;
            cfg.validate()?;
            let name: Vec<String> = assignment.iter().map(|(k, v)| format!("{k}={v}")).collect();
            let dir = out.join(format!("{}_seed{}", name.join("_"), cfg.seed));
            log::info!("sweep point {}", dir.display());
            train_run(cfg.clone(), &dir, false)?;
            let (final_success, final_energy, final_lambda) = final_summary(&dir)?;
            points.push(SweepPoint { dir, assignment: assignment.clone(), seed: cfg.seed, final_success, final_energy, final_lambda });
        }
    }
    let mut csv = String::new();
    for axis in axes {
        let _ = write!(csv, "{},", axis.key);
    }
    csv.push_str("seed,final_success,final_energy,final_lambda,run\n");
    for p in &points {
        for (_, v) in &p.assignment {
            let _ = write!(csv, "{v},");
        }
        let _ = writeln!(csv, "{},{:?},{:?},{:?},{}", p.seed, p.final_success, p.final_energy, p.final_lambda, p.dir.display());
    }
    write_file(&out.join("summary.csv"), &csv)?;
    Ok(points)
}

fn run_label(dir: &Path) -> String {
    dir.file_name().map_or_else(|| dir.display().to_string(), |n| n.to_string_lossy().into_owned())
}

/// Renders success, energy and multiplier charts for one or more runs into
/// `out`, plus `plot_data.csv`. Re-running overwrites the same files.
pub fn plot_runs(runs: &[PathBuf], out: &Path) -> Result<Vec<PathBuf>> {
    if runs.is_empty() {
        return Err(config_err("plot needs at least one run directory"));
    }
    std::fs::create_dir_all(out).map_err(|e| io_context(out, e))?;
    let mut success = LineChart {
        title: format!("Mean successful UAVs (rolling {ROLLING_WINDOW})"),
        x_label: "episode".into(),
        y_label: "UAVs holding the message".into(),
        ..Default::default()
    };
    let mut energy = LineChart {
        title: format!("Round energy (rolling {ROLLING_WINDOW})"),
        x_label: "episode".into(),
        y_label: "energy / broadcast-slot energy".into(),
        ..Default::default()
    };
    let mut lambda = LineChart { title: "Lagrange multiplier".into(), x_label: "episode".into(), y_label: "lambda".into(), ..Default::default() };
    let mut data = String::from("run,episode,success_rolling,energy_rolling,lambda_mean\n");
    let mut budgets: Vec<(f64, String)> = Vec::new();
    let mut by_budget: Vec<(f64, f64, f64)> = Vec::new();

    for dir in runs {
        if !dir.is_dir() {
            return Err(config_err(format!("run directory {} does not exist", dir.display())));
        }
        let label = run_label(dir);
        let config = parse_config(&dir.join(CONFIG_FILE))?;
        let rows = read_metrics(&dir.join(METRICS_FILE))?;
        let episodes: Vec<f64> = rows.iter().map(|r| r.episode as f64).collect();
        let s = rolling_mean(&rows.iter().map(|r| r.mean_success).collect::<Vec<_>>(), ROLLING_WINDOW);
        let e = rolling_mean(&rows.iter().map(|r| r.mean_energy).collect::<Vec<_>>(), ROLLING_WINDOW);
        for (k, r) in rows.iter().enumerate() {
            let _ = writeln!(data, "{label},{},{:?},{:?},{:?}", r.episode, s[k], e[k], r.lambda_mean);
        }
        success.series.push(Series { name: label.clone(), points: episodes.iter().copied().zip(s.iter().copied()).collect() });
        energy.series.push(Series { name: label.clone(), points: episodes.iter().copied().zip(e.iter().copied()).collect() });
        if !budgets.iter().any(|(b, _)| *b == config.e_c) {
            budgets.push((config.e_c, format!("E_c = {}", config.e_c)));
        }
        by_budget.push((config.e_c, tail_mean(&s, 0.2), tail_mean(&e, 0.2)));
        if runs.len() == 1 {
            let traces = parse_lambda_csv(&std::fs::read_to_string(dir.join(LAMBDA_FILE)).map_err(|e| io_context(dir, e))?)?;
            for (i, t) in traces.into_iter().enumerate() {
                lambda.series.push(Series { name: format!("agent {i}"), points: episodes.iter().copied().zip(t).collect() });
            }
        } else {
            lambda.series.push(Series { name: label, points: episodes.iter().copied().zip(rows.iter().map(|r| r.lambda_mean)).collect() });
        }
    }
    energy.guides = budgets;

    let mut written = Vec::new();
    let mut emit = |name: &str, body: String| -> Result<()> {
        let p = out.join(name);
        write_file(&p, &body)?;
        written.push(p);
        Ok(())
    };
    emit("success.svg", success.to_svg())?;
    emit("energy.svg", energy.to_svg())?;
    emit("lambda.svg", lambda.to_svg())?;
    let mut distinct: Vec<f64> = by_budget.iter().map(|b| b.0).collect();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() > 1 {
        let avg = |pick: fn(&(f64, f64, f64)) -> f64, b: f64| {
            let xs: Vec<f64> = by_budget.iter().filter(|r| r.0 == b).map(pick).collect();
            xs.iter().sum::<f64>() / xs.len() as f64
        };
        let chart = LineChart {
            title: "Final performance versus energy budget".into(),
            x_label: "E_c (broadcast-slot units)".into(),
            y_label: "final-20% rolling mean".into(),
            series: vec![
                Series { name: "success".into(), points: distinct.iter().map(|&b| (b, avg(|r| r.1, b))).collect() },
                Series { name: "energy".into(), points: distinct.iter().map(|&b| (b, avg(|r| r.2, b))).collect() },
            ],
            guides: Vec::new(),
        };
        emit("budget_sweep.svg", chart.to_svg())?;
    }
    emit("plot_data.csv", data)?;
    Ok(written)
}
