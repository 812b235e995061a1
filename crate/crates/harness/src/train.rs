//! Mini-batch adversarial training on the synthetic datasets.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use labelaug_core::metrics::{self, Bandwidth, Kernel};
use labelaug_core::models::{
    build_discriminator, build_generator, heads_for, DiscriminatorNet, GeneratorNet, ModelConfig,
};
use labelaug_core::objectives::{method_loss, Batch, Block, MethodConfig, Side};
use labelaug_core::{adam_step, AdamState, Method, Tape, Tensor, TransformationSet, Var};
use rand::Rng;

use crate::config::{Dataset, RunConfig};
use crate::data::{data_dim, method_set, sample_real, LEAK_RADIUS, MODES};
use crate::error::RunError;
use crate::rng::Streams;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossRecord {
    pub iter: usize,
    pub d_loss: f64,
    pub g_loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Failure {
    pub iter: usize,
    pub what: String,
}

#[derive(Debug, Clone)]
pub struct TrainResult {
    pub losses: Vec<LossRecord>,
    pub generator: GeneratorNet,
    pub discriminator: DiscriminatorNet,
    /// Set when training stopped on a non-finite loss or gradient.
    pub failure: Option<Failure>,
    pub eval: Option<Evaluation>,
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub gen_samples: Vec<f64>,
    pub real_samples: Vec<f64>,
    pub dim: usize,
    pub final_mmd: f64,
    pub mmd_bandwidth: f64,
    pub leaked_mass: Option<f64>,
}

struct Trainer<'a> {
    cfg: &'a RunConfig,
    mcfg: MethodConfig,
    set: TransformationSet,
    dim: usize,
    gen: GeneratorNet,
    disc: DiscriminatorNet,
    g_opt: AdamState,
    d_opt: AdamState,
    rng: Streams,
}

fn has_plain_head(method: Method) -> bool {
    method.has_tradeoff() || method == Method::Gan
}

impl Trainer<'_> {
    /// Discriminator outputs for one side: the untransformed block (when the
    /// method has a plain head) and the transformed blocks.
    fn blocks(
        &mut self,
        tape: &mut Tape,
        bound: &labelaug_core::models::Bound,
        x: Var,
        plain: bool,
        transformed: bool,
    ) -> Result<(Vec<Block>, Vec<Block>), RunError> {
        let n = tape.shape(x)[0];
        let inv = 1.0 / n as f64;
        let mut plain_blocks = Vec::new();
        if plain {
            let heads = self.disc.discriminate(tape, bound, x)?;
            plain_blocks.push(Block {
                heads,
                weights: vec![inv; n],
                k: 0,
            });
        }
        let mut out = Vec::new();
        if !transformed {
            return Ok((plain_blocks, out));
        }
        if self.cfg.method.uses_all_transforms() {
            for (k, t) in self.set.transforms().iter().enumerate() {
                let pk = self.set.prob(k);
                if pk == 0.0 {
                    continue;
                }
                let xk = t.apply(tape, x)?;
                let heads = self.disc.discriminate(tape, bound, xk)?;
                out.push(Block {
                    heads,
                    weights: vec![pk * inv; n],
                    k,
                });
            }
        } else {
            let labels: Vec<usize> = (0..n)
                .map(|_| self.set.sample_transform(&mut self.rng.transform))
                .collect();
            for (k, t) in self.set.transforms().iter().enumerate() {
                let idx: Vec<usize> = (0..n).filter(|&i| labels[i] == k).collect();
                if idx.is_empty() {
                    continue;
                }
                let sub = tape.gather_rows(x, &idx)?;
                let xk = t.apply(tape, sub)?;
                let heads = self.disc.discriminate(tape, bound, xk)?;
                out.push(Block {
                    heads,
                    weights: vec![inv; idx.len()],
                    k,
                });
            }
        }
        Ok((plain_blocks, out))
    }

    fn disc_step(&mut self) -> Result<f64, StepError> {
        let n = self.cfg.batch;
        let real = sample_real(self.cfg.dataset, n, &mut self.rng.data);
        let fake = self.gen.sample(n, &mut self.rng.latent).map_err(RunError::from)?;
        let mut tape = Tape::new();
        let bound = self.disc.bind(&mut tape);
        let real = tape.constant(Tensor::matrix(n, self.dim, real).map_err(RunError::from)?);
        let fake = tape.constant(Tensor::matrix(n, self.dim, fake).map_err(RunError::from)?);
        let method = self.cfg.method;
        let plain = has_plain_head(method);
        let (plain_real, real_t) = self.blocks(&mut tape, &bound, real, plain, method != Method::Gan)?;
        // The rotation-style classifier only ever sees real data.
        let fake_t_needed = !matches!(method, Method::Gan | Method::Ssgan);
        let (plain_fake, fake_t) = self.blocks(&mut tape, &bound, fake, plain, fake_t_needed)?;
        let batch = Batch {
            plain_real,
            plain_fake,
            real: real_t,
            fake: fake_t,
        };
        let loss = method_loss(&mut tape, &self.mcfg, self.set.len(), &batch, Side::Disc).map_err(RunError::from)?;
        let value = finite(tape.item(loss), "discriminator loss")?;
        tape.backward(loss).map_err(RunError::from)?;
        let grads = bound.grads(&tape);
        adam_step(self.disc.params_mut(), &grads, &mut self.d_opt)
            .map_err(|e| StepError::NonFinite(format!("discriminator gradient: {e}")))?;
        Ok(value)
    }

    fn gen_step(&mut self) -> Result<f64, StepError> {
        let n = self.cfg.batch;
        let mut tape = Tape::new();
        let g_bound = self.gen.bind(&mut tape);
        let d_bound = self.disc.bind_frozen(&mut tape);
        let fake = self
            .gen
            .generate(&mut tape, &g_bound, n, &mut self.rng.latent)
            .map_err(RunError::from)?;
        let method = self.cfg.method;
        let (plain_fake, fake_t) =
            self.blocks(&mut tape, &d_bound, fake, has_plain_head(method), method != Method::Gan)?;
        let batch = Batch {
            plain_fake,
            fake: fake_t,
            ..Default::default()
        };
        let loss = method_loss(&mut tape, &self.mcfg, self.set.len(), &batch, Side::Gen).map_err(RunError::from)?;
        let value = finite(tape.item(loss), "generator loss")?;
        tape.backward(loss).map_err(RunError::from)?;
        let grads = g_bound.grads(&tape);
        adam_step(self.gen.params_mut(), &grads, &mut self.g_opt)
            .map_err(|e| StepError::NonFinite(format!("generator gradient: {e}")))?;
        Ok(value)
    }
}

enum StepError {
    NonFinite(String),
    Run(RunError),
}

impl From<RunError> for StepError {
    fn from(e: RunError) -> Self {
        StepError::Run(e)
    }
}

fn finite(v: Option<f64>, what: &str) -> Result<f64, StepError> {
    match v {
        Some(x) if x.is_finite() => Ok(x),
        Some(x) => Err(StepError::NonFinite(format!("{what} = {x}"))),
        None => Err(StepError::Run(RunError::Internal(format!("{what} is not a scalar")))),
    }
}

/// Trains per `cfg` and evaluates the final generator. A non-finite loss
/// stops training early; the partial result is returned with `failure` set
/// and no evaluation.
pub fn train(cfg: &RunConfig) -> Result<TrainResult, RunError> {
    cfg.validate()?;
    if cfg.dataset == Dataset::Finite {
        return Err(RunError::Config(crate::config::ConfigError::Invalid(
            "dataset=finite is for the descent command; train needs gauss1d_shift or modes2d_rot".into(),
        )));
    }
    let set = method_set(cfg)?;
    let dim = data_dim(cfg.dataset);
    let mut rng = Streams::new(cfg.seed);
    let model = ModelConfig {
        hidden: cfg.hidden,
        depth: cfg.depth,
        latent_dim: cfg.latent_dim,
    };
    let gen = build_generator(dim, &model, &mut rng.init)?;
    let disc = build_discriminator(&heads_for(cfg.method), set.len(), dim, &model, &mut rng.init)?;
    let mut t = Trainer {
        cfg,
        mcfg: cfg.method_config(),
        dim,
        g_opt: AdamState::new(gen.params().len(), cfg.adam()),
        d_opt: AdamState::new(disc.params().len(), cfg.adam()),
        set,
        gen,
        disc,
        rng,
    };
    let mut losses = Vec::with_capacity(cfg.steps);
    let mut failure = None;
    'outer: for iter in 0..cfg.steps {
        let mut d_loss = f64::NAN;
        for _ in 0..cfg.n_dis {
            match t.disc_step() {
                Ok(v) => d_loss = v,
                Err(StepError::NonFinite(what)) => {
                    failure = Some(Failure { iter, what });
                    break 'outer;
                }
                Err(StepError::Run(e)) => return Err(e),
            }
        }
        match t.gen_step() {
            Ok(g_loss) => losses.push(LossRecord { iter, d_loss, g_loss }),
            Err(StepError::NonFinite(what)) => {
                failure = Some(Failure { iter, what });
                break;
            }
            Err(StepError::Run(e)) => return Err(e),
        }
    }
    let eval = match failure {
        Some(_) => None,
        None => Some(evaluate(cfg, &t.gen, &mut t.rng.eval, &t.set)?),
    };
    Ok(TrainResult {
        losses,
        generator: t.gen,
        discriminator: t.disc,
        failure,
        eval,
    })
}

fn transformed_copy<R: Rng + ?Sized>(
    x: &[f64],
    dim: usize,
    set: &TransformationSet,
    rng: &mut R,
) -> Result<Vec<f64>, RunError> {
    let mut out = Vec::with_capacity(x.len());
    for p in x.chunks(dim) {
        let k = set.sample_transform(rng);
        out.extend(set.get(k).apply_point(p)?);
    }
    Ok(out)
}

fn evaluate<R: Rng + ?Sized>(
    cfg: &RunConfig,
    gen: &GeneratorNet,
    rng: &mut R,
    set: &TransformationSet,
) -> Result<Evaluation, RunError> {
    let dim = data_dim(cfg.dataset);
    let gen_samples = gen.sample(cfg.mmd_samples, rng)?;
    let real_samples = sample_real(cfg.dataset, cfg.mmd_samples, rng);
    let (a, b) = if cfg.mmd_transformed {
        (
            transformed_copy(&gen_samples, dim, set, rng)?,
            transformed_copy(&real_samples, dim, set, rng)?,
        )
    } else {
        (gen_samples.clone(), real_samples.clone())
    };
    let h = metrics::median_heuristic(&a, &b, dim)?;
    let final_mmd = metrics::mmd(
        &a,
        &b,
        dim,
        Kernel {
            bandwidth: Bandwidth::Fixed(h),
        },
    )?;
    let leaked_mass = match cfg.dataset {
        Dataset::Modes2dRot => {
            let group = TransformationSet::quarter_turns(4)?;
            Some(metrics::leaked_mass(&gen_samples, &MODES, &group, LEAK_RADIUS)?)
        }
        _ => None,
    };
    Ok(Evaluation {
        gen_samples,
        real_samples,
        dim,
        final_mmd,
        mmd_bandwidth: h,
        leaked_mass,
    })
}

/// Number of grid points in `density.csv`.
pub const DENSITY_POINTS: usize = 512;

/// KDE of the first coordinate of real and generated samples on a shared
/// grid. A collapsed generator (zero spread) borrows the real bandwidth.
pub fn density_table(eval: &Evaluation) -> Result<Vec<[f64; 3]>, RunError> {
    let first = |x: &[f64]| x.iter().step_by(eval.dim).copied().collect::<Vec<_>>();
    let (real, gen) = (first(&eval.real_samples), first(&eval.gen_samples));
    let bw_real = metrics::silverman_bandwidth(&real)?;
    let bw_gen = metrics::silverman_bandwidth(&gen).unwrap_or(bw_real);
    let pad = 3.0 * bw_real.max(bw_gen);
    let lo = real.iter().chain(&gen).copied().fold(f64::INFINITY, f64::min) - pad;
    let hi = real.iter().chain(&gen).copied().fold(f64::NEG_INFINITY, f64::max) + pad;
    let grid: Vec<f64> = (0..DENSITY_POINTS)
        .map(|i| lo + (hi - lo) * i as f64 / (DENSITY_POINTS - 1) as f64)
        .collect();
    let p_real = metrics::kde(&real, &grid, Some(bw_real))?;
    let p_gen = metrics::kde(&gen, &grid, Some(bw_gen))?;
    Ok(grid
        .into_iter()
        .zip(p_real)
        .zip(p_gen)
        .map(|((x, r), g)| [x, r, g])
        .collect())
}

pub const LOSSES_HEADER: &str = "iter,d_loss,g_loss";
pub const DENSITY_HEADER: &str = "x,p_real,p_gen";

pub fn losses_csv(losses: &[LossRecord]) -> String {
    let mut s = String::from(LOSSES_HEADER);
    s.push('\n');
    for r in losses {
        writeln!(s, "{},{},{}", r.iter, r.d_loss, r.g_loss).expect("writing to a String");
    }
    s
}

fn samples_txt(samples: &[f64], dim: usize) -> String {
    let mut s = String::new();
    for p in samples.chunks(dim) {
        let row: Vec<String> = p.iter().map(f64::to_string).collect();
        s.push_str(&row.join(","));
        s.push('\n');
    }
    s
}

fn params_txt(name: &str, layout: &str, params: &[f64]) -> String {
    let mut s = format!("# {name}\n# layout={layout}\n# count={}\n", params.len());
    for p in params {
        writeln!(s, "{p}").expect("writing to a String");
    }
    s
}

fn join<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

/// Flat `key=value` summary: metrics first, then every config key.
pub fn summary_txt(cfg: &RunConfig, metrics: &[(&str, String)]) -> String {
    let mut s = String::new();
    for (k, v) in metrics {
        writeln!(s, "{k}={v}").expect("writing to a String");
    }
    s.push_str(&cfg.emit());
    s
}

pub fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "na".to_string(), |x| x.to_string())
}

fn write(dir: &Path, name: &str, body: &str, written: &mut Vec<PathBuf>) -> Result<(), RunError> {
    let path = dir.join(name);
    fs::write(&path, body).map_err(|source| RunError::Io {
        path: path.clone(),
        source,
    })?;
    written.push(path);
    Ok(())
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub config: RunConfig,
    pub result: TrainResult,
    pub wall_seconds: f64,
    pub artifacts: Vec<PathBuf>,
}

impl RunReport {
    pub fn final_mmd(&self) -> Option<f64> {
        self.result.eval.as_ref().map(|e| e.final_mmd)
    }

    pub fn leaked_mass(&self) -> Option<f64> {
        self.result.eval.as_ref().and_then(|e| e.leaked_mass)
    }
}

/// Trains and writes every artifact to `cfg.out_dir`. Training failures
/// still write the partial losses and a summary before returning the error.
pub fn cmd_train(cfg: &RunConfig) -> Result<RunReport, RunError> {
    let start = Instant::now();
    let result = train(cfg)?;
    let wall_seconds = start.elapsed().as_secs_f64();
    let dir = &cfg.out_dir;
    fs::create_dir_all(dir).map_err(|source| RunError::Io {
        path: dir.clone(),
        source,
    })?;
    let mut written = Vec::new();
    write(dir, "losses.csv", &losses_csv(&result.losses), &mut written)?;
    let g = &result.generator;
    write(
        dir,
        "generator.params",
        &params_txt("generator", &join(g.widths()), g.params()),
        &mut written,
    )?;
    let d = &result.discriminator;
    let d_layout = format!("data_dim={};heads={}", d.data_dim(), join(&d.head_widths()));
    write(
        dir,
        "discriminator.params",
        &params_txt("discriminator", &d_layout, d.params()),
        &mut written,
    )?;

    let mut metrics = vec![(
        "status",
        if result.failure.is_some() { "failed" } else { "ok" }.to_string(),
    )];
    if let Some(eval) = &result.eval {
        write(
            dir,
            "samples.txt",
            &samples_txt(&eval.gen_samples, eval.dim),
            &mut written,
        )?;
        let mut density = String::from(DENSITY_HEADER);
        density.push('\n');
        for [x, r, g] in density_table(eval)? {
            writeln!(density, "{x},{r},{g}").expect("writing to a String");
        }
        write(dir, "density.csv", &density, &mut written)?;
        metrics.push(("final_mmd", eval.final_mmd.to_string()));
        metrics.push(("leaked_mass", opt(eval.leaked_mass)));
        metrics.push(("mmd_kernel", "gaussian".into()));
        metrics.push(("mmd_bandwidth", eval.mmd_bandwidth.to_string()));
    } else {
        metrics.push(("final_mmd", "na".into()));
        metrics.push(("leaked_mass", "na".into()));
    }
    metrics.push(("tv_final", "na".into()));
    metrics.push(("wall_seconds", wall_seconds.to_string()));
    if let Some(f) = &result.failure {
        metrics.push(("failure_iter", f.iter.to_string()));
        metrics.push(("failure", f.what.clone()));
    }
    write(dir, "summary.txt", &summary_txt(cfg, &metrics), &mut written)?;
    if let Some(f) = &result.failure {
        return Err(RunError::NonFinite {
            iter: f.iter,
            what: f.what.clone(),
            dir: dir.clone(),
        });
    }
    Ok(RunReport {
        config: cfg.clone(),
        result,
        wall_seconds,
        artifacts: written,
    })
}
