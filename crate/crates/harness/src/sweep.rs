//! Grids of runs over one config key and a list of seeds.
//!
//! Every cell gets its own config clone, RNG substreams and output
//! directory, so cells can run on any number of workers. A failing cell
//! is recorded and the sweep carries on.

use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;

use rayon::prelude::*;

use crate::config::{ConfigError, Dataset, RunConfig};
use crate::descent::cmd_descent;
use crate::error::RunError;
use crate::train::{cmd_train, opt};

#[derive(Debug, Clone)]
pub struct SweepSpec {
    /// Swept key; `None` sweeps seeds only.
    pub key: Option<String>,
    pub values: Vec<String>,
    pub seeds: Vec<u64>,
    pub workers: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CellMetrics {
    pub final_mmd: Option<f64>,
    pub leaked_mass: Option<f64>,
    pub tv_final: Option<f64>,
    pub wall_seconds: f64,
}

#[derive(Debug)]
pub struct Cell {
    pub value: String,
    pub seed: u64,
    pub dir: PathBuf,
    pub outcome: Result<CellMetrics, RunError>,
}

#[derive(Debug)]
pub struct SweepReport {
    pub key: Option<String>,
    pub cells: Vec<Cell>,
}

pub const RUNS_HEADER: &str = "value,seed,status,final_mmd,leaked_mass,tv_final,wall_seconds,error";
pub const SWEEP_HEADER: &str = "value,runs,failed,\
mmd_mean,mmd_std,mmd_median,leak_mean,leak_std,leak_median,tv_mean,tv_std,tv_median";

/// Mean, sample standard deviation and median; `None` when empty.
pub fn spread(xs: &[f64]) -> Option<(f64, f64, f64)> {
    if xs.is_empty() {
        return None;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let std = if xs.len() > 1 {
        (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    Some((mean, std, median(xs)))
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

fn cell_config(base: &RunConfig, spec: &SweepSpec, value: &str, seed: u64) -> Result<RunConfig, ConfigError> {
    let mut cfg = base.clone();
    let mut dir = base.out_dir.clone();
    if let Some(key) = &spec.key {
        cfg.set(key, value)?;
        dir.push(format!("{key}={value}"));
    }
    cfg.seed = seed;
    dir.push(format!("seed={seed}"));
    cfg.out_dir = dir;
    cfg.validate()?;
    Ok(cfg)
}

fn run_cell(cfg: &RunConfig) -> Result<CellMetrics, RunError> {
    if cfg.dataset == Dataset::Finite {
        let (traj, _) = cmd_descent(cfg)?;
        return Ok(CellMetrics {
            tv_final: Some(traj.last().tv),
            ..Default::default()
        });
    }
    let r = cmd_train(cfg)?;
    Ok(CellMetrics {
        final_mmd: r.final_mmd(),
        leaked_mass: r.leaked_mass(),
        tv_final: None,
        wall_seconds: r.wall_seconds,
    })
}

/// Runs every `(value, seed)` cell and writes `runs.csv` and `sweep.csv`
/// under `base.out_dir`.
pub fn cmd_sweep(base: &RunConfig, spec: &SweepSpec) -> Result<SweepReport, RunError> {
    let values = match (&spec.key, spec.values.is_empty()) {
        (Some(key), true) => {
            return Err(ConfigError::Invalid(format!("sweep over `{key}` needs at least one value")).into())
        }
        (Some(key), false) => {
            if key == "seed" || key == "out_dir" {
                return Err(ConfigError::Invalid(format!("`{key}` is not sweepable; list seeds instead")).into());
            }
            spec.values.clone()
        }
        (None, _) => vec![String::new()],
    };
    if spec.seeds.is_empty() {
        return Err(ConfigError::Invalid("sweep needs at least one seed".into()).into());
    }
    // Reject bad values before anything runs.
    for v in &values {
        cell_config(base, spec, v, spec.seeds[0])?;
    }

    let grid: Vec<(String, u64)> = values
        .iter()
        .flat_map(|v| spec.seeds.iter().map(move |&s| (v.clone(), s)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(spec.workers.max(1))
        .build()
        .map_err(|e| RunError::Internal(e.to_string()))?;
    let cells: Vec<Cell> = pool.install(|| {
        grid.par_iter()
            .map(|(value, seed)| {
                let cfg = cell_config(base, spec, value, *seed).expect("validated above");
                let outcome = run_cell(&cfg);
                Cell {
                    value: value.clone(),
                    seed: *seed,
                    dir: cfg.out_dir,
                    outcome,
                }
            })
            .collect()
    });

    let report = SweepReport {
        key: spec.key.clone(),
        cells,
    };
    let dir = &base.out_dir;
    fs::create_dir_all(dir).map_err(|source| RunError::Io {
        path: dir.clone(),
        source,
    })?;
    for (name, body) in [("runs.csv", report.runs_csv()), ("sweep.csv", report.sweep_csv())] {
        let path = dir.join(name);
        fs::write(&path, body).map_err(|source| RunError::Io { path, source })?;
    }
    Ok(report)
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\"").replace('\n', " "))
    } else {
        s.to_string()
    }
}

impl SweepReport {
    pub fn failed(&self) -> usize {
        self.cells.iter().filter(|c| c.outcome.is_err()).count()
    }

    /// Distinct values in first-seen order.
    pub fn values(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for c in &self.cells {
            if !out.contains(&c.value.as_str()) {
                out.push(&c.value);
            }
        }
        out
    }

    pub fn metric(&self, value: &str, f: impl Fn(&CellMetrics) -> Option<f64>) -> Vec<f64> {
        self.cells
            .iter()
            .filter(|c| c.value == value)
            .filter_map(|c| c.outcome.as_ref().ok().and_then(&f))
            .collect()
    }

    pub fn runs_csv(&self) -> String {
        let mut s = String::from(RUNS_HEADER);
        s.push('\n');
        for c in &self.cells {
            let line = match &c.outcome {
                Ok(m) => format!(
                    "{},{},ok,{},{},{},{},",
                    csv_field(&c.value),
                    c.seed,
                    opt(m.final_mmd),
                    opt(m.leaked_mass),
                    opt(m.tv_final),
                    m.wall_seconds
                ),
                Err(e) => format!(
                    "{},{},failed,na,na,na,na,{}",
                    csv_field(&c.value),
                    c.seed,
                    csv_field(&e.to_string())
                ),
            };
            s.push_str(&line);
            s.push('\n');
        }
        s
    }

    pub fn sweep_csv(&self) -> String {
        let mut s = String::from(SWEEP_HEADER);
        s.push('\n');
        let stats = |xs: Vec<f64>| match spread(&xs) {
            Some((m, sd, med)) => format!("{m},{sd},{med}"),
            None => "na,na,na".into(),
        };
        for v in self.values() {
            let runs = self.cells.iter().filter(|c| c.value == v).count();
            let failed = self.cells.iter().filter(|c| c.value == v && c.outcome.is_err()).count();
            writeln!(
                s,
                "{},{runs},{failed},{},{},{}",
                csv_field(v),
                stats(self.metric(v, |m| m.final_mmd)),
                stats(self.metric(v, |m| m.leaked_mass)),
                stats(self.metric(v, |m| m.tv_final)),
            )
            .expect("writing to a String");
        }
        s
    }
}
