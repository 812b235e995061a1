//! Exact alternating training on a finite space.
//!
//! The generator is `p_g = softmax(θ)`. Each step the discriminator heads are
//! either set to their exact best response or moved by gradient ascent on
//! logit tables, then held fixed while the generator takes one exact
//! gradient step on `L(θ) = Σ_x p_g(x) h(x)`, with `h(x)` the per-point
//! generator loss. The gradient is `p_g ⊙ (h - L)`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::method::{GenLoss, Method};
use crate::metrics::tv_distance;
use crate::transform::TransformationSet;

use super::numeric::{method_heads, softmax, HeadWeights};
use super::{la_class, mixture_transformed, ClassifierTable, FiniteDistribution, OracleError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum DiscMode {
    /// Exact optimum recomputed before every generator step.
    BestResponse,
    /// `n_dis` ascent steps of size `lr` on per-row logits, warm-started.
    Ascent { n_dis: usize, lr: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DescentInit {
    /// Logits drawn i.i.d. `N(0, scale²)` from the seed.
    Random { scale: f64 },
    /// Start at a given distribution (logits `ln p`, zeros floored).
    At(FiniteDistribution),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DescentConfig {
    pub method: Method,
    pub steps: usize,
    pub lr: f64,
    pub disc: DiscMode,
    pub init: DescentInit,
    pub lambda_g: f64,
    pub gen_loss: GenLoss,
    pub seed: u64,
}

impl DescentConfig {
    pub fn new(method: Method) -> Self {
        Self {
            method,
            steps: 5000,
            lr: 1.0,
            disc: DiscMode::BestResponse,
            init: DescentInit::Random { scale: 1.0 },
            lambda_g: 1.0,
            gen_loss: GenLoss::Minimax,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DescentRecord {
    pub step: usize,
    pub tv: f64,
    pub tv_transformed: f64,
    pub objective: f64,
    pub grad_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub records: Vec<DescentRecord>,
    pub final_pg: FiniteDistribution,
}

impl Trajectory {
    pub fn first(&self) -> &DescentRecord {
        &self.records[0]
    }

    pub fn last(&self) -> &DescentRecord {
        self.records.last().expect("at least the initial record")
    }

    pub fn min_tv(&self) -> f64 {
        self.records.iter().map(|r| r.tv).fold(f64::INFINITY, f64::min)
    }

    pub fn max_tv_transformed(&self) -> f64 {
        self.records.iter().map(|r| r.tv_transformed).fold(0.0, f64::max)
    }
}

/// Floor for `ln 0` when starting from a distribution with zeros.
const MIN_LOGIT: f64 = -700.0;

/// Runs exact alternating descent. Record `i` describes the state before the
/// `i`-th generator update; the last record is the final state.
pub fn exact_descent(p_d: &FiniteDistribution, set: &TransformationSet, cfg: &DescentConfig) -> Result<Trajectory> {
    set.ensure_finite(p_d.len())?;
    let n = p_d.len();
    let mut theta: Vec<f64> = match &cfg.init {
        DescentInit::Random { scale } => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            (0..n)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    scale * z
                })
                .collect()
        }
        DescentInit::At(p) => {
            if p.len() != n {
                return Err(OracleError::LengthMismatch(p.len(), n));
            }
            p.probs()
                .iter()
                .map(|&v| if v > 0.0 { v.ln() } else { MIN_LOGIT })
                .collect()
        }
    };
    let pd_t = mixture_transformed(p_d, set)?;
    let mut disc_logits: Option<Vec<Vec<Vec<f64>>>> = None;
    let mut records = Vec::with_capacity(cfg.steps + 1);

    for step in 0..=cfg.steps {
        let p_g = FiniteDistribution::from_trusted(softmax(&theta));
        let heads = method_heads(cfg.method, p_d, &p_g, set)?;
        let tables: Vec<ClassifierTable> = match cfg.disc {
            DiscMode::BestResponse => heads.iter().map(HeadWeights::best_response).collect(),
            DiscMode::Ascent { n_dis, lr } => {
                let logits = disc_logits
                    .get_or_insert_with(|| heads.iter().map(|h| vec![vec![0.0; h.classes]; h.rows.len()]).collect());
                for _ in 0..n_dis {
                    ascend(logits, &heads, lr);
                }
                logits
                    .iter()
                    .zip(&heads)
                    .map(|(l, h)| ClassifierTable::new(h.classes, l.iter().map(|r| Some(softmax(r))).collect()))
                    .collect()
            }
        };

        let h = point_losses(cfg, set, &tables, n)?;
        let mut objective = 0.0;
        for (&px, &hx) in p_g.probs().iter().zip(&h) {
            if px == 0.0 {
                continue;
            }
            objective += px * hx;
            if !hx.is_finite() {
                return Err(OracleError::NonFinite {
                    step,
                    what: "generator loss at a support point",
                    value: hx,
                });
            }
        }
        if !objective.is_finite() {
            return Err(OracleError::NonFinite {
                step,
                what: "objective",
                value: objective,
            });
        }
        let grad: Vec<f64> = p_g
            .probs()
            .iter()
            .zip(&h)
            .map(|(&px, &hx)| if px == 0.0 { 0.0 } else { px * (hx - objective) })
            .collect();
        let grad_norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        let pg_t = mixture_transformed(&p_g, set)?;
        records.push(DescentRecord {
            step,
            tv: tv_distance(p_g.probs(), p_d.probs()).expect("equal lengths"),
            tv_transformed: tv_distance(pg_t.probs(), pd_t.probs()).expect("equal lengths"),
            objective,
            grad_norm,
        });
        if step == cfg.steps {
            return Ok(Trajectory { records, final_pg: p_g });
        }
        for (t, g) in theta.iter_mut().zip(&grad) {
            *t -= cfg.lr * g;
        }
    }
    unreachable!("loop returns on its last iteration")
}

fn ascend(logits: &mut [Vec<Vec<f64>>], heads: &[HeadWeights], lr: f64) {
    for (table, head) in logits.iter_mut().zip(heads) {
        for (row, a) in table.iter_mut().zip(&head.rows) {
            let mass: f64 = a.iter().sum();
            let d = softmax(row);
            for ((t, &ac), &dc) in row.iter_mut().zip(a).zip(&d) {
                *t += lr * (ac - mass * dc);
            }
        }
    }
}

fn ln_entry(table: &ClassifierTable, x: usize, class: usize) -> f64 {
    match table.get(x, class) {
        Some(v) => v.ln(),
        None => f64::NEG_INFINITY,
    }
}

/// `log(1 - D)` (minimax) or `-log D` (non-saturating) for a `[fake, real]`
/// binary table.
fn binary_gen(table: &ClassifierTable, x: usize, gen_loss: GenLoss) -> f64 {
    match gen_loss {
        GenLoss::Minimax => ln_entry(table, x, 0),
        GenLoss::NonSaturating => -ln_entry(table, x, 1),
    }
}

fn point_losses(
    cfg: &DescentConfig,
    set: &TransformationSet,
    tables: &[ClassifierTable],
    n: usize,
) -> Result<Vec<f64>> {
    let k_total = set.len();
    let mut h = vec![0.0; n];
    for (x, hx) in h.iter_mut().enumerate() {
        let gan = || binary_gen(&tables[0], x, cfg.gen_loss);
        // Σ_k p(T_k) f(k, T_k x), skipping transforms that are never drawn.
        let over_transforms = |f: &dyn Fn(usize, usize) -> f64| -> Result<f64> {
            let mut s = 0.0;
            for (k, t) in set.transforms().iter().enumerate() {
                let pk = set.prob(k);
                if pk > 0.0 {
                    s += pk * f(k, t.apply_index(x)?);
                }
            }
            Ok(s)
        };
        let la = |table: &ClassifierTable| {
            over_transforms(&|k, xt| {
                -(ln_entry(table, xt, la_class(k, true, k_total)) - ln_entry(table, xt, la_class(k, false, k_total)))
            })
        };
        *hx = match cfg.method {
            Method::Gan => gan(),
            Method::Ssgan => gan() - cfg.lambda_g * over_transforms(&|k, xt| ln_entry(&tables[1], xt, k))?,
            Method::SsganMs => {
                gan()
                    - cfg.lambda_g
                        * over_transforms(&|k, xt| ln_entry(&tables[1], xt, k + 1) - ln_entry(&tables[1], xt, 0))?
            }
            Method::Dagan | Method::DaganPlus => over_transforms(&|_, xt| binary_gen(&tables[0], xt, cfg.gen_loss))?,
            Method::DaganMd => over_transforms(&|k, xt| binary_gen(&tables[k], xt, cfg.gen_loss))?,
            Method::SsganLa => la(&tables[0])?,
            Method::SsganLaPlus => gan() + cfg.lambda_g * la(&tables[1])?,
        };
    }
    Ok(h)
}
