//! Identity suite over random finite instances.
//!
//! Each check runs on `trials` random `(p_d, p_g)` pairs per space size with
//! the cyclic group of that size, and reports its worst error against a
//! fixed tolerance. A failing check keeps the first offending instance as
//! JSON so it can be replayed.

use std::fmt::Write as _;

use labelaug_core::gradcheck::RandomGraph;
use labelaug_core::oracle::numeric::numeric_dla;
use labelaug_core::oracle::{
    expectation_forms, generator_value_la, generator_value_ms, generator_value_ssgan, kl_divergence, la_class,
    leak_family, optimal_classifier_ms, optimal_classifier_ssgan, optimal_dla, pushforwards, OracleError,
};
use labelaug_core::{ClassifierTable, FiniteDistribution, MixtureWeights, TransformationSet};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Closed-form label-augmented optimum; swappable so a corrupted formula
/// can be shown to fail.
pub type DlaFn =
    fn(&FiniteDistribution, &FiniteDistribution, &TransformationSet) -> Result<ClassifierTable, OracleError>;

pub const TOL_DLA: f64 = 1e-6;
pub const TOL_IDENTITY: f64 = 1e-9;
pub const TOL_BASE: f64 = 1e-12;
pub const TOL_NORMALIZATION: f64 = 1e-12;
pub const TOL_MIXTURE_GAP: f64 = 1e-12;
pub const TOL_KL_INVARIANCE: f64 = 1e-12;
pub const MIN_FAMILY_TV: f64 = 0.01;
pub const GRAD_REL: f64 = 1e-5;
/// Absolute floor for gradients that are zero up to rounding.
pub const GRAD_ABS: f64 = 1e-8;
pub const GRAD_STEP: f64 = 1e-5;
pub const FAMILY_DRAWS: usize = 20;

#[derive(Debug, Clone)]
pub struct VerifyOptions {
    pub sizes: Vec<usize>,
    pub trials: usize,
    pub seed: u64,
    /// Group order per size; `None` uses the full cyclic group of the size.
    pub group_order: Option<usize>,
    pub dla: DlaFn,
    /// Replaces the cyclic group for the family check only.
    pub family_set: Option<TransformationSet>,
    pub gradient_graphs: usize,
    pub gradient_depth: usize,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            sizes: vec![4, 8],
            trials: 100,
            seed: 0,
            group_order: None,
            dla: optimal_dla,
            family_set: None,
            gradient_graphs: 200,
            gradient_depth: 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Pass,
    Fail,
    /// A precondition of the statement does not hold; not a failure.
    HypothesisNotMet,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Pass => "pass",
            Status::Fail => "FAIL",
            Status::HypothesisNotMet => "hypothesis not met",
        }
    }
}

#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: String,
    pub instances: usize,
    pub max_error: f64,
    pub tolerance: f64,
    pub status: Status,
    pub detail: Option<String>,
}

#[derive(Debug, Clone, Default)]
pub struct VerifyReport {
    pub checks: Vec<CheckResult>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.status != Status::Fail)
    }

    pub fn get(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub const CSV_HEADER: &'static str = "check,instances,max_error,tolerance,status,detail";

    pub fn csv(&self) -> String {
        let mut s = String::from(Self::CSV_HEADER);
        s.push('\n');
        for c in &self.checks {
            let detail = c.detail.as_deref().unwrap_or("").replace('"', "\"\"");
            writeln!(
                s,
                "{},{},{:e},{:e},{},\"{}\"",
                c.name,
                c.instances,
                c.max_error,
                c.tolerance,
                c.status.as_str(),
                detail
            )
            .expect("writing to a String");
        }
        s
    }

    pub fn table(&self) -> String {
        let mut s = format!(
            "{:<34} {:>9} {:>12} {:>10}  status\n",
            "check", "instances", "max_error", "tolerance"
        );
        for c in &self.checks {
            writeln!(
                s,
                "{:<34} {:>9} {:>12.3e} {:>10.0e}  {}",
                c.name,
                c.instances,
                c.max_error,
                c.tolerance,
                c.status.as_str()
            )
            .expect("writing to a String");
            if let Some(d) = c.detail.as_ref().filter(|_| c.status != Status::Pass) {
                writeln!(s, "    {d}").expect("writing to a String");
            }
        }
        s
    }
}

/// Accumulates the worst error of one check.
struct Tracker {
    name: String,
    tolerance: f64,
    instances: usize,
    max_error: f64,
    replay: Option<String>,
    error: Option<String>,
}

impl Tracker {
    fn new(name: impl Into<String>, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            tolerance,
            instances: 0,
            max_error: 0.0,
            replay: None,
            error: None,
        }
    }

    fn record(&mut self, err: f64, replay: impl FnOnce() -> String) {
        self.instances += 1;
        // NaN counts as a violation.
        let bad = err.is_nan() || err > self.tolerance;
        if bad || err > self.max_error {
            self.max_error = if err.is_nan() {
                f64::INFINITY
            } else {
                err.max(self.max_error)
            };
        }
        if bad && self.replay.is_none() {
            self.replay = Some(replay());
        }
    }

    fn fail(&mut self, msg: String) {
        self.error.get_or_insert(msg);
    }

    fn finish(self) -> CheckResult {
        let failed = self.replay.is_some() || self.error.is_some();
        CheckResult {
            name: self.name,
            instances: self.instances,
            max_error: self.max_error,
            tolerance: self.tolerance,
            status: if failed { Status::Fail } else { Status::Pass },
            detail: self.error.or(self.replay),
        }
    }
}

fn replay_json(n: usize, trial: usize, p_d: &FiniteDistribution, p_g: &FiniteDistribution) -> String {
    serde_json::json!({ "n": n, "trial": trial, "p_d": p_d.probs(), "p_g": p_g.probs() }).to_string()
}

fn ln_table(d: &ClassifierTable, x: usize, c: usize) -> f64 {
    d.get(x, c).map_or(f64::NEG_INFINITY, f64::ln)
}

/// `Σ_k p(T_k) E_{x ~ P_g}[f(k, T_k x)]` by direct enumeration.
fn enumerate(
    p_g: &FiniteDistribution,
    set: &TransformationSet,
    f: impl Fn(usize, usize) -> f64,
) -> Result<f64, OracleError> {
    let mut total = 0.0;
    for x in 0..p_g.len() {
        if p_g.get(x) == 0.0 {
            continue;
        }
        for (k, t) in set.transforms().iter().enumerate() {
            total += p_g.get(x) * set.prob(k) * f(k, t.apply_index(x)?);
        }
    }
    Ok(total)
}

/// All identity checks for one space size.
fn finite_checks(n: usize, opts: &VerifyOptions, rng: &mut ChaCha8Rng) -> Vec<CheckResult> {
    let order = opts.group_order.unwrap_or(n);
    let tag = |s: &str| format!("{s}[n={n}]");
    let mut dla_check = Tracker::new(tag("dla_closed_form"), TOL_DLA);
    let mut la_identity = Tracker::new(tag("la_reverse_kl_identity"), TOL_IDENTITY);
    let mut ssgan_plugin = Tracker::new(tag("ssgan_classifier_plugin"), TOL_IDENTITY);
    let mut ms_plugin = Tracker::new(tag("ms_classifier_plugin"), TOL_IDENTITY);
    let mut base = Tracker::new(tag("transform_expectation_forms"), TOL_BASE);
    let mut norm = Tracker::new(tag("table_normalization"), TOL_NORMALIZATION);
    let mut kl_inv = Tracker::new(tag("kl_permutation_invariance"), TOL_KL_INVARIANCE);
    let mut family = Tracker::new(tag("leak_family_gap"), TOL_MIXTURE_GAP);
    let mut family_tv = 0.0f64;
    let mut family_status = Status::Pass;
    let mut family_note = None;

    let set = match TransformationSet::cyclic(n, order) {
        Ok(s) => s,
        Err(e) => {
            let mut t = Tracker::new(tag("setup"), 0.0);
            t.fail(e.to_string());
            return vec![t.finish()];
        }
    };
    let family_set = opts.family_set.clone().unwrap_or_else(|| set.clone());

    for trial in 0..opts.trials {
        let p_d = FiniteDistribution::random(n, rng);
        let p_g = FiniteDistribution::random(n, rng);
        let replay = || replay_json(n, trial, &p_d, &p_g);
        let outcome: Result<(), OracleError> = (|| {
            let closed = (opts.dla)(&p_d, &p_g, &set)?;
            let numeric = numeric_dla(&p_d, &p_g, &set)?;
            dla_check.record(closed.max_abs_diff(&numeric), replay);

            let k_total = set.len();
            let term = enumerate(&p_g, &set, |k, xt| {
                ln_table(&closed, xt, la_class(k, true, k_total)) - ln_table(&closed, xt, la_class(k, false, k_total))
            })?;
            let kl = generator_value_la(&p_g, &p_d, &set)?;
            la_identity.record((term + kl).abs(), replay);

            let c = optimal_classifier_ssgan(&p_d, &set)?;
            let plug = enumerate(&p_g, &set, |k, xt| ln_table(&c, xt, k))?;
            ssgan_plugin.record((plug - generator_value_ssgan(&p_g, &p_d, &set)?).abs(), replay);

            let cp = optimal_classifier_ms(&p_d, &p_g, &set)?;
            let plug = enumerate(&p_g, &set, |k, xt| ln_table(&cp, xt, k + 1) - ln_table(&cp, xt, 0))?;
            ms_plugin.record((plug + generator_value_ms(&p_g, &p_d, &set)?).abs(), replay);

            let f: Vec<f64> = FiniteDistribution::random(n, rng)
                .probs()
                .iter()
                .map(|v| 0.1 + n as f64 * v)
                .collect();
            let [a, b, c3] = expectation_forms(&p_d, &set, &f)?;
            base.record((a - b).abs().max((b - c3).abs()), replay);

            let worst_norm = [
                c.normalization_error(),
                cp.normalization_error(),
                closed.normalization_error(),
            ]
            .into_iter()
            .fold(0.0, f64::max);
            norm.record(worst_norm, replay);

            let kl_plain = kl_divergence(&p_g, &p_d)?;
            let pushed_g = pushforwards(&p_g, &set)?;
            let pushed_d = pushforwards(&p_d, &set)?;
            let worst = pushed_g
                .iter()
                .zip(&pushed_d)
                .map(|(g, d)| kl_divergence(g, d).map(|v| (v - kl_plain).abs()))
                .collect::<Result<Vec<_>, _>>()?
                .into_iter()
                .fold(0.0, f64::max);
            kl_inv.record(worst, replay);
            Ok(())
        })();
        if let Err(e) = outcome {
            dla_check.fail(format!("{e} on {}", replay()));
        }
    }

    // Leak family: mixtures of transformed copies of one target.
    let p_d = FiniteDistribution::random(n, rng);
    for draw in 0..FAMILY_DRAWS {
        let pi = MixtureWeights::random(family_set.len(), rng);
        match leak_family(&p_d, &family_set, &pi) {
            Ok(f) => {
                family.record(f.mixture_gap, || {
                    serde_json::json!({ "n": n, "draw": draw, "p_d": p_d.probs(), "pi": pi.weights() }).to_string()
                });
                family_tv = family_tv.max(f.tv_to_data);
            }
            Err(e @ (OracleError::NotAGroup(_) | OracleError::NonUniform)) => {
                family_status = Status::HypothesisNotMet;
                family_note = Some(e.to_string());
                break;
            }
            Err(e) => {
                family.fail(e.to_string());
                break;
            }
        }
    }
    let mut family = family.finish();
    let mut spread = CheckResult {
        name: tag("leak_family_nonidentifiable"),
        instances: family.instances,
        max_error: family_tv,
        tolerance: MIN_FAMILY_TV,
        status: if family_tv > MIN_FAMILY_TV {
            Status::Pass
        } else {
            Status::Fail
        },
        detail: Some(format!(
            "largest TV(p_pi, p_d) = {family_tv:.4}; must exceed {MIN_FAMILY_TV}"
        )),
    };
    if family_status == Status::HypothesisNotMet {
        for c in [&mut family, &mut spread] {
            c.status = Status::HypothesisNotMet;
            c.detail = family_note.clone();
        }
    }

    vec![
        dla_check.finish(),
        la_identity.finish(),
        ssgan_plugin.finish(),
        ms_plugin.finish(),
        base.finish(),
        norm.finish(),
        kl_inv.finish(),
        family,
        spread,
    ]
}

/// Backprop against central differences on random graphs.
pub fn gradient_check(graphs: usize, depth: usize, seed: u64) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = Tracker::new("autodiff_gradients", 1.0);
    for i in 0..graphs {
        let g = RandomGraph::sample(&mut rng, depth);
        match g.check(GRAD_STEP, GRAD_REL, GRAD_ABS) {
            Ok(ratio) => t.record(ratio, || format!("graph {i}: {g:?}")),
            Err(e) => t.fail(format!("graph {i}: {e}")),
        }
    }
    let mut r = t.finish();
    r.detail
        .get_or_insert_with(|| format!("violation ratio; relative {GRAD_REL}, absolute floor {GRAD_ABS}"));
    r
}

pub fn run_verify(opts: &VerifyOptions) -> VerifyReport {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut checks = Vec::new();
    for &n in &opts.sizes {
        checks.extend(finite_checks(n, opts, &mut rng));
    }
    if opts.gradient_graphs > 0 {
        checks.push(gradient_check(opts.gradient_graphs, opts.gradient_depth, opts.seed));
    }
    VerifyReport { checks }
}
