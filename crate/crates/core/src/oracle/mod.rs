//! Exact oracles on finite sample spaces.
//!
//! Every density is an explicit probability vector and every transformation
//! a permutation, so optimal discriminators, generator objectives and the
//! expectation identities they rest on can be evaluated by plain summation
//! and compared to numerical identity. Nothing here clamps: a zero density
//! stays zero, `0 · log 0` is taken as 0, and support violations surface as
//! `±∞` rather than as large finite numbers.
//!
//! The closed forms use the general best response with weights
//! `p(T_k) p^{T_k}(x̃)`; under uniform `p(T_k)` these are exactly the
//! textbook expressions with `p(T_k) = 1/K` cancelled.

mod descent;
pub mod numeric;

pub use descent::{exact_descent, DescentConfig, DescentInit, DescentRecord, DiscMode, Trajectory};

use rand::Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::tv_distance;
use crate::transform::{GroupWitness, TransformError, TransformationSet};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("transformation set is not a group ({0}); hypothesis not met")]
    NotAGroup(GroupWitness),
    #[error("transformation probabilities must be uniform for this construction")]
    NonUniform,
    #[error("invalid mixture weights: {0}")]
    InvalidWeights(String),
    #[error("method `{0}` is not supported here")]
    UnsupportedMethod(String),
    #[error("non-finite {what} at step {step}: {value}")]
    NonFinite {
        step: usize,
        what: &'static str,
        value: f64,
    },
    #[error(transparent)]
    Transform(#[from] TransformError),
}

pub type Result<T> = std::result::Result<T, OracleError>;

/// Probability vector over `0..n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiniteDistribution {
    probs: Vec<f64>,
}

impl FiniteDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(OracleError::InvalidDistribution("empty".into()));
        }
        if let Some((i, p)) = probs.iter().enumerate().find(|(_, p)| !(p.is_finite() && **p >= 0.0)) {
            return Err(OracleError::InvalidDistribution(format!("entry {i} is {p}")));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(OracleError::InvalidDistribution(format!("sum is {total}")));
        }
        Ok(Self { probs })
    }

    /// For vectors that are valid by construction (pushforwards, mixtures).
    pub(crate) fn from_trusted(probs: Vec<f64>) -> Self {
        Self { probs }
    }

    /// Normalises non-negative weights.
    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0 && total.is_finite()) {
            return Err(OracleError::InvalidDistribution(format!("weights sum to {total}")));
        }
        Self::new(weights.iter().map(|w| w / total).collect())
    }

    pub fn uniform(n: usize) -> Self {
        Self {
            probs: vec![1.0 / n as f64; n],
        }
    }

    pub fn point_mass(n: usize, at: usize) -> Self {
        let mut probs = vec![0.0; n];
        probs[at] = 1.0;
        Self { probs }
    }

    /// A draw from the flat Dirichlet on the `n`-simplex. Every entry is
    /// strictly positive.
    pub fn random<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        let raw: Vec<f64> = (0..n)
            .map(|_| {
                let e: f64 = rng.sample(Exp1);
                e.max(1e-6)
            })
            .collect();
        let total: f64 = raw.iter().sum();
        Self {
            probs: raw.into_iter().map(|v| v / total).collect(),
        }
    }

    /// Softmax of logits.
    pub fn softmax(logits: &[f64]) -> Self {
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        Self {
            probs: exps.into_iter().map(|e| e / total).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn get(&self, i: usize) -> f64 {
        self.probs[i]
    }
}

/// `KL(p || q)` in nats with `0 · log 0 = 0`; `+∞` when `p` has mass where
/// `q` has none.
pub fn kl_divergence(p: &FiniteDistribution, q: &FiniteDistribution) -> Result<f64> {
    if p.len() != q.len() {
        return Err(OracleError::LengthMismatch(p.len(), q.len()));
    }
    let mut total = 0.0;
    for (&a, &b) in p.probs().iter().zip(q.probs()) {
        if a == 0.0 {
            continue;
        }
        if b == 0.0 {
            return Ok(f64::INFINITY);
        }
        total += a * (a / b).ln();
    }
    Ok(total)
}

/// Row-stochastic table of conditional class probabilities indexed by the
/// point of the (transformed) space. Rows whose defining denominator is zero
/// are undefined (`None`); they carry no probability mass under either
/// distribution and are skipped by every expectation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierTable {
    classes: usize,
    rows: Vec<Option<Vec<f64>>>,
}

impl ClassifierTable {
    pub fn new(classes: usize, rows: Vec<Option<Vec<f64>>>) -> Self {
        debug_assert!(rows.iter().flatten().all(|r| r.len() == classes));
        Self { classes, rows }
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn row(&self, x: usize) -> Option<&[f64]> {
        self.rows[x].as_deref()
    }

    pub fn get(&self, x: usize, class: usize) -> Option<f64> {
        self.rows[x].as_ref().map(|r| r[class])
    }

    pub fn rows(&self) -> &[Option<Vec<f64>>] {
        &self.rows
    }

    pub fn undefined_rows(&self) -> usize {
        self.rows.iter().filter(|r| r.is_none()).count()
    }

    /// Largest `|Σ_c row[c] - 1|` over defined rows.
    pub fn normalization_error(&self) -> f64 {
        self.rows
            .iter()
            .flatten()
            .map(|r| (r.iter().sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// Largest absolute entry difference over rows defined in both tables.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.rows
            .iter()
            .zip(&other.rows)
            .filter_map(|(a, b)| Some((a.as_ref()?, b.as_ref()?)))
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max)
    }

    /// Normalises each row of non-negative weights; zero rows are undefined.
    pub fn from_weights(classes: usize, weights: Vec<Vec<f64>>) -> Self {
        let rows = weights
            .into_iter()
            .map(|w| {
                let total: f64 = w.iter().sum();
                (total > 0.0).then(|| w.iter().map(|v| v / total).collect())
            })
            .collect();
        Self { classes, rows }
    }
}

/// Mixture weights `π` on the `K` transformations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureWeights {
    weights: Vec<f64>,
}

impl MixtureWeights {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.iter().any(|w| !(0.0..=1.0).contains(w)) {
            return Err(OracleError::InvalidWeights("entries must lie in [0, 1]".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(OracleError::InvalidWeights(format!("sum is {total}")));
        }
        Ok(Self { weights })
    }

    /// `π = e_1`, the real distribution itself.
    pub fn identity(k: usize) -> Self {
        let mut weights = vec![0.0; k];
        weights[0] = 1.0;
        Self { weights }
    }

    pub fn random<R: Rng + ?Sized>(k: usize, rng: &mut R) -> Self {
        Self {
            weights: FiniteDistribution::random(k, rng).probs,
        }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

/// `p^{T_k}` for every `k`.
pub fn pushforwards(p: &FiniteDistribution, set: &TransformationSet) -> Result<Vec<FiniteDistribution>> {
    set.ensure_finite(p.len())?;
    Ok(set
        .transforms()
        .iter()
        .map(|t| t.pushforward(p))
        .collect::<std::result::Result<_, _>>()?)
}

/// `p^T = Σ_k p(T_k) p^{T_k}`.
pub fn mixture_transformed(p: &FiniteDistribution, set: &TransformationSet) -> Result<FiniteDistribution> {
    let pushed = pushforwards(p, set)?;
    Ok(mix(&pushed, set.probs()))
}

fn mix(parts: &[FiniteDistribution], weights: &[f64]) -> FiniteDistribution {
    let n = parts[0].len();
    let mut out = vec![0.0; n];
    for (part, &w) in parts.iter().zip(weights) {
        for (o, &v) in out.iter_mut().zip(part.probs()) {
            *o += w * v;
        }
    }
    FiniteDistribution::from_trusted(out)
}

fn check_pair(a: &FiniteDistribution, b: &FiniteDistribution) -> Result<()> {
    if a.len() != b.len() {
        return Err(OracleError::LengthMismatch(a.len(), b.len()));
    }
    Ok(())
}

/// Self-supervised classifier optimum:
/// `C*(k|x̃) = p(T_k) p_d^{T_k}(x̃) / Σ_j p(T_j) p_d^{T_j}(x̃)`.
pub fn optimal_classifier_ssgan(p_d: &FiniteDistribution, set: &TransformationSet) -> Result<ClassifierTable> {
    let pd_k = pushforwards(p_d, set)?;
    let k = set.len();
    let weights = (0..p_d.len())
        .map(|x| (0..k).map(|j| set.prob(j) * pd_k[j].get(x)).collect())
        .collect();
    Ok(ClassifierTable::from_weights(k, weights))
}

/// Label-extended classifier optimum with the fake class in column 0:
/// `C₊*(0|x̃) = p_g^T / (p_d^T + p_g^T)` and
/// `C₊*(k|x̃) = p_d^T / (p_d^T + p_g^T) · C*(k|x̃)` in column `k + 1`.
pub fn optimal_classifier_ms(
    p_d: &FiniteDistribution,
    p_g: &FiniteDistribution,
    set: &TransformationSet,
) -> Result<ClassifierTable> {
    check_pair(p_d, p_g)?;
    let c_star = optimal_classifier_ssgan(p_d, set)?;
    let pd_t = mixture_transformed(p_d, set)?;
    let pg_t = mixture_transformed(p_g, set)?;
    let k = set.len();
    let rows = (0..p_d.len())
        .map(|x| {
            let (d, g) = (pd_t.get(x), pg_t.get(x));
            let denom = d + g;
            if denom <= 0.0 {
                return None;
            }
            let mut row = vec![0.0; k + 1];
            row[0] = g / denom;
            if let Some(c) = c_star.row(x) {
                for j in 0..k {
                    row[j + 1] = d / denom * c[j];
                }
            }
            Some(row)
        })
        .collect();
    Ok(ClassifierTable::new(k + 1, rows))
}

/// Column of the label-augmented class `(k, real)` or `(k, fake)` among
/// `2K` classes: real classes occupy `0..K`, fake classes `K..2K`.
pub fn la_class(k: usize, real: bool, n_transforms: usize) -> usize {
    if real {
        k
    } else {
        n_transforms + k
    }
}

/// Label-augmented discriminator optimum:
/// `D*(k,1|x̃) ∝ p_d^{T_k}(x̃)`, `D*(k,0|x̃) ∝ p_g^{T_k}(x̃)`, normalised
/// over all `2K` classes (weights `p(T_k)` for non-uniform sets).
pub fn optimal_dla(
    p_d: &FiniteDistribution,
    p_g: &FiniteDistribution,
    set: &TransformationSet,
) -> Result<ClassifierTable> {
    check_pair(p_d, p_g)?;
    let pd_k = pushforwards(p_d, set)?;
    let pg_k = pushforwards(p_g, set)?;
    let k = set.len();
    let weights = (0..p_d.len())
        .map(|x| {
            let mut w = vec![0.0; 2 * k];
            for j in 0..k {
                w[la_class(j, true, k)] = set.prob(j) * pd_k[j].get(x);
                w[la_class(j, false, k)] = set.prob(j) * pg_k[j].get(x);
            }
            w
        })
        .collect();
    Ok(ClassifierTable::from_weights(2 * k, weights))
}

/// Binary optimum on transformed data, `D*(x̃) = p_d^T / (p_d^T + p_g^T)`.
pub fn optimal_binary_dagan(
    p_d: &FiniteDistribution,
    p_g: &FiniteDistribution,
    set: &TransformationSet,
) -> Result<Vec<Option<f64>>> {
    check_pair(p_d, p_g)?;
    let pd_t = mixture_transformed(p_d, set)?;
    let pg_t = mixture_transformed(p_g, set)?;
    Ok(binary_ratio(&pd_t, &pg_t))
}

/// Per-head optimum of the multi-discriminator variant,
/// `D_k*(x̃) = p_d^{T_k} / (p_d^{T_k} + p_g^{T_k})`.
pub fn optimal_binary_md(
    p_d: &FiniteDistribution,
    p_g: &FiniteDistribution,
    set: &TransformationSet,
) -> Result<Vec<Vec<Option<f64>>>> {
    check_pair(p_d, p_g)?;
    let pd_k = pushforwards(p_d, set)?;
    let pg_k = pushforwards(p_g, set)?;
    Ok(pd_k.iter().zip(&pg_k).map(|(d, g)| binary_ratio(d, g)).collect())
}

fn binary_ratio(d: &FiniteDistribution, g: &FiniteDistribution) -> Vec<Option<f64>> {
    d.probs()
        .iter()
        .zip(g.probs())
        .map(|(&a, &b)| (a + b > 0.0).then(|| a / (a + b)))
        .collect()
}

/// `Σ_x p(x) log q(x)` with `0 · log(anything) = 0` and `-∞` when
/// `p(x) > 0` meets `q(x) = 0` or an undefined entry.
fn expect_log(p: &[f64], q: impl Fn(usize) -> Option<f64>) -> f64 {
    let mut total = 0.0;
    for (x, &mass) in p.iter().enumerate() {
        if mass == 0.0 {
            continue;
        }
        match q(x) {
            Some(v) if v > 0.0 => total += mass * v.ln(),
            _ => return f64::NEG_INFINITY,
        }
    }
    total
}

/// Generator self-supervised value at the classifier optimum,
/// `Σ_k p(T_k) E_{x̃ ~ P_g^{T_k}} log C*(k|x̃)` (to be maximised).
pub fn generator_value_ssgan(
    p_g: &FiniteDistribution,
    p_d: &FiniteDistribution,
    set: &TransformationSet,
) -> Result<f64> {
    check_pair(p_d, p_g)?;
    let c_star = optimal_classifier_ssgan(p_d, set)?;
    let pg_k = pushforwards(p_g, set)?;
    let mut total = 0.0;
    for (k, pg) in pg_k.iter().enumerate() {
        if set.prob(k) == 0.0 {
            continue;
        }
        total += set.prob(k) * expect_log(pg.probs(), |x| c_star.get(x, k));
    }
    Ok(total)
}

/// The quantity the label-extended generator minimises at the classifier
/// optimum: `KL(P_g^T || P_d^T) - generator_value_ssgan`.
pub fn generator_value_ms(p_g: &FiniteDistribution, p_d: &FiniteDistribution, set: &TransformationSet) -> Result<f64> {
    let kl = kl_divergence(&mixture_transformed(p_g, set)?, &mixture_transformed(p_d, set)?)?;
    let ss = generator_value_ssgan(p_g, p_d, set)?;
    Ok(kl - ss)
}

/// Average reverse KL under each transformation,
/// `Σ_k p(T_k) KL(P_g^{T_k} || P_d^{T_k})`.
pub fn generator_value_la(p_g: &FiniteDistribution, p_d: &FiniteDistribution, set: &TransformationSet) -> Result<f64> {
    check_pair(p_d, p_g)?;
    let pd_k = pushforwards(p_d, set)?;
    let pg_k = pushforwards(p_g, set)?;
    let mut total = 0.0;
    for (k, (g, d)) in pg_k.iter().zip(&pd_k).enumerate() {
        if set.prob(k) == 0.0 {
            continue;
        }
        total += set.prob(k) * kl_divergence(g, d)?;
    }
    Ok(total)
}

/// The three ways of writing `E_{x, T_k}[log f(T_k(x))]`:
/// over `(x, T_k)` pairs, over `x̃ ~ P^T` with `T_k ~ p(T_k | x̃)`, and over
/// `T_k` then `x̃ ~ P^{T_k}`.
pub fn expectation_forms(p: &FiniteDistribution, set: &TransformationSet, f: &[f64]) -> Result<[f64; 3]> {
    if f.len() != p.len() {
        return Err(OracleError::LengthMismatch(f.len(), p.len()));
    }
    set.ensure_finite(p.len())?;
    let log_f = |x: usize| f[x].ln();

    let mut pairs = 0.0;
    for (x, &px) in p.probs().iter().enumerate() {
        if px == 0.0 {
            continue;
        }
        for (k, t) in set.transforms().iter().enumerate() {
            pairs += px * set.prob(k) * log_f(t.apply_index(x)?);
        }
    }

    let p_k = pushforwards(p, set)?;
    let p_t = mix(&p_k, set.probs());
    let mut posterior = 0.0;
    for x in 0..p.len() {
        let mass = p_t.get(x);
        if mass == 0.0 {
            continue;
        }
        let post: f64 = (0..set.len()).map(|k| set.prob(k) * p_k[k].get(x) / mass).sum();
        posterior += mass * post * log_f(x);
    }

    let mut per_transform = 0.0;
    for (k, pk) in p_k.iter().enumerate() {
        let inner: f64 = pk
            .probs()
            .iter()
            .enumerate()
            .filter(|(_, m)| **m > 0.0)
            .map(|(x, m)| m * log_f(x))
            .sum();
        per_transform += set.prob(k) * inner;
    }
    Ok([pairs, posterior, per_transform])
}

#[derive(Debug, Clone, PartialEq)]
pub struct LeakFamily {
    /// `p_π = Σ_j π_j p_d^{T_j}`.
    pub p_pi: FiniteDistribution,
    /// `max_x |p_π^T(x) - p_d^T(x)|`.
    pub mixture_gap: f64,
    /// `TV(p_π, p_d)`.
    pub tv_to_data: f64,
}

/// Builds the mixture of transformed copies of `p_d` with weights `π` and
/// measures how far its transformed mixture is from that of `p_d`. Requires
/// a group with uniform sampling.
pub fn leak_family(p_d: &FiniteDistribution, set: &TransformationSet, pi: &MixtureWeights) -> Result<LeakFamily> {
    if pi.weights().len() != set.len() {
        return Err(OracleError::LengthMismatch(pi.weights().len(), set.len()));
    }
    set.ensure_finite(p_d.len())?;
    let check = set.is_group()?;
    if let Some(w) = check.witness {
        return Err(OracleError::NotAGroup(w));
    }
    if !set.is_uniform() {
        return Err(OracleError::NonUniform);
    }
    let pd_k = pushforwards(p_d, set)?;
    let p_pi = mix(&pd_k, pi.weights());
    let pi_t = mixture_transformed(&p_pi, set)?;
    let pd_t = mix(&pd_k, set.probs());
    let mixture_gap = pi_t
        .probs()
        .iter()
        .zip(pd_t.probs())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let tv_to_data = tv_distance(p_pi.probs(), p_d.probs()).expect("equal lengths");
    Ok(LeakFamily {
        p_pi,
        mixture_gap,
        tv_to_data,
    })
}
