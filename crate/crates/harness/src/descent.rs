//! Exact descent on a finite space, driven from a run config.

use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;
use std::time::Instant;

use labelaug_core::oracle::{exact_descent, DescentConfig, DescentInit, Trajectory};
use labelaug_core::{FiniteDistribution, TransformationSet};

use crate::config::{ConfigError, Dataset, DescentStart, RunConfig};
use crate::data::{base_set, finite_target, method_set};
use crate::error::RunError;
use crate::rng::{stream, Stream};
use crate::train::summary_txt;

pub const TRAJECTORY_HEADER: &str = "step,tv,tv_transformed,objective,grad_norm";

#[derive(Debug, Clone)]
pub struct DescentSetup {
    pub p_d: FiniteDistribution,
    pub set: TransformationSet,
    pub descent: DescentConfig,
}

pub fn setup(cfg: &RunConfig) -> Result<DescentSetup, RunError> {
    cfg.validate()?;
    if cfg.dataset != Dataset::Finite {
        return Err(ConfigError::Invalid("descent needs dataset=finite".into()).into());
    }
    let p_d = finite_target(cfg, &mut stream(cfg.seed, Stream::Data));
    let set = method_set(cfg)?;
    let init = match cfg.descent_init {
        DescentStart::Random => DescentInit::Random { scale: 1.0 },
        DescentStart::Rotated => {
            let t = base_set(cfg)?.get(cfg.descent_rotation).clone();
            DescentInit::At(t.pushforward(&p_d)?)
        }
    };
    let descent = DescentConfig {
        method: cfg.method,
        steps: cfg.descent_steps,
        lr: cfg.descent_lr,
        disc: cfg.disc_schedule(),
        init,
        lambda_g: cfg.lambda_g.unwrap_or(1.0),
        gen_loss: cfg.gen_loss,
        seed: cfg.seed,
    };
    Ok(DescentSetup { p_d, set, descent })
}

pub fn run_descent(cfg: &RunConfig) -> Result<Trajectory, RunError> {
    let s = setup(cfg)?;
    Ok(exact_descent(&s.p_d, &s.set, &s.descent)?)
}

pub fn trajectory_csv(t: &Trajectory) -> String {
    let mut s = String::from(TRAJECTORY_HEADER);
    s.push('\n');
    for r in &t.records {
        writeln!(
            s,
            "{},{},{},{},{}",
            r.step, r.tv, r.tv_transformed, r.objective, r.grad_norm
        )
        .expect("writing to a String");
    }
    s
}

/// Runs descent and writes `trajectory.csv` and `summary.txt`.
pub fn cmd_descent(cfg: &RunConfig) -> Result<(Trajectory, Vec<PathBuf>), RunError> {
    let start = Instant::now();
    let traj = run_descent(cfg)?;
    let wall = start.elapsed().as_secs_f64();
    let dir = &cfg.out_dir;
    fs::create_dir_all(dir).map_err(|source| RunError::Io {
        path: dir.clone(),
        source,
    })?;
    let last = traj.last();
    let metrics = [
        ("status", "ok".to_string()),
        ("final_mmd", "na".into()),
        ("leaked_mass", "na".into()),
        ("tv_final", last.tv.to_string()),
        ("tv_transformed_final", last.tv_transformed.to_string()),
        ("objective_final", last.objective.to_string()),
        ("grad_norm_initial", traj.first().grad_norm.to_string()),
        ("wall_seconds", wall.to_string()),
    ];
    let mut written = Vec::new();
    for (name, body) in [
        ("trajectory.csv", trajectory_csv(&traj)),
        ("summary.txt", summary_txt(cfg, &metrics)),
    ] {
        let path = dir.join(name);
        fs::write(&path, body).map_err(|source| RunError::Io {
            path: path.clone(),
            source,
        })?;
        written.push(path);
    }
    Ok((traj, written))
}

#[cfg(test)]
mod tests {
    use super::*;
    use labelaug_core::Method;

    fn finite(method: Method) -> RunConfig {
        let mut cfg = RunConfig::for_method(method);
        cfg.dataset = Dataset::Finite;
        cfg
    }

    #[test]
    fn rejects_continuous_datasets() {
        let cfg = RunConfig::for_method(Method::SsganLa);
        assert!(matches!(run_descent(&cfg), Err(RunError::Config(_))));
    }

    #[test]
    fn rotated_start_is_the_pushed_target() {
        let mut cfg = finite(Method::Dagan);
        cfg.descent_init = DescentStart::Rotated;
        cfg.descent_steps = 1;
        let s = setup(&cfg).unwrap();
        let DescentInit::At(p) = &s.descent.init else {
            panic!("rotated start")
        };
        let mut shifted = s.p_d.probs().to_vec();
        shifted.rotate_right(4);
        assert_eq!(p.probs(), shifted.as_slice());
    }
}
