//! Training objectives for every method, in log-loss and hinge forms.
//!
//! A batch is a list of [`Block`]s. Every row of a block went through the
//! same transformation `k`, and each row carries a weight; an expectation is
//! the weighted sum over the blocks of one side. Mini-batch training uses
//! weights `1/n` (one sampled transform per datum) or `p(T_k)/n` (all
//! transforms per datum). An exhaustive batch over a finite space uses
//! exact probabilities, which is how these losses are checked against the
//! oracles.
//!
//! Every function returns a loss to minimise for the requested side.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{AutodiffError, Tape, Tensor, Var};
use crate::method::{GenLoss, LossForm, Method};
use crate::oracle::la_class;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ObjectiveError {
    #[error("method `{0}` has no trade-off weights; remove lambda_d / lambda_g")]
    LambdaNotApplicable(Method),
    #[error("{name} must be non-negative and finite, got {value}")]
    BadLambda { name: &'static str, value: f64 },
    #[error("n_dis must be at least 1")]
    ZeroNDis,
    #[error("{0} blocks are required for this loss")]
    MissingBlocks(&'static str),
    #[error("block references head {head} but only {heads} are present")]
    HeadOutOfRange { head: usize, heads: usize },
    #[error("transform label {label} out of range for {k} transforms")]
    LabelOutOfRange { label: usize, k: usize },
    #[error("block has {rows} rows but {weights} weights")]
    WeightCount { rows: usize, weights: usize },
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
}

pub type Result<T> = std::result::Result<T, ObjectiveError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    Disc,
    Gen,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MethodConfig {
    pub method: Method,
    /// Present only for methods with a trade-off.
    pub lambda_d: Option<f64>,
    pub lambda_g: Option<f64>,
    pub loss_form: LossForm,
    pub gen_loss: GenLoss,
    pub n_dis: usize,
}

impl MethodConfig {
    pub fn new(method: Method) -> Self {
        let lambda = method.has_tradeoff().then_some(1.0);
        Self {
            method,
            lambda_d: lambda,
            lambda_g: lambda,
            loss_form: LossForm::Log,
            gen_loss: GenLoss::Minimax,
            n_dis: 2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_dis == 0 {
            return Err(ObjectiveError::ZeroNDis);
        }
        for (name, v) in [("lambda_d", self.lambda_d), ("lambda_g", self.lambda_g)] {
            match v {
                Some(_) if !self.method.has_tradeoff() => return Err(ObjectiveError::LambdaNotApplicable(self.method)),
                Some(value) if !(value >= 0.0 && value.is_finite()) => {
                    return Err(ObjectiveError::BadLambda { name, value })
                }
                _ => {}
            }
        }
        Ok(())
    }

    pub fn lambda_d(&self) -> f64 {
        self.lambda_d.unwrap_or(1.0)
    }

    pub fn lambda_g(&self) -> f64 {
        self.lambda_g.unwrap_or(1.0)
    }
}

/// Discriminator outputs for rows that share one transformation.
#[derive(Debug, Clone)]
pub struct Block {
    /// Logits per head, each `[n, width]`.
    pub heads: Vec<Var>,
    pub weights: Vec<f64>,
    pub k: usize,
}

impl Block {
    fn head(&self, i: usize) -> Result<Var> {
        self.heads.get(i).copied().ok_or(ObjectiveError::HeadOutOfRange {
            head: i,
            heads: self.heads.len(),
        })
    }
}

/// Untransformed blocks feed the plain binary discriminator of the
/// trade-off methods; transformed blocks feed everything else.
#[derive(Debug, Clone, Default)]
pub struct Batch {
    pub plain_real: Vec<Block>,
    pub plain_fake: Vec<Block>,
    pub real: Vec<Block>,
    pub fake: Vec<Block>,
}

/// `Σ_i w_i col_i` over a block for a `[n, 1]` column.
fn expect(tape: &mut Tape, col: Var, weights: &[f64]) -> Result<Var> {
    let rows = tape.shape(col)[0];
    if rows != weights.len() {
        return Err(ObjectiveError::WeightCount {
            rows,
            weights: weights.len(),
        });
    }
    let w = tape.constant(Tensor::matrix(1, rows, weights.to_vec())?);
    let s = tape.matmul(w, col)?;
    Ok(tape.sum(s)?)
}

/// Sums `f(block)` expectations over blocks; empty lists give 0.
fn over_blocks(tape: &mut Tape, blocks: &[Block], mut f: impl FnMut(&mut Tape, &Block) -> Result<Var>) -> Result<Var> {
    let mut total = tape.scalar(0.0);
    for b in blocks.iter().filter(|b| !b.weights.is_empty()) {
        let col = f(tape, b)?;
        let e = expect(tape, col, &b.weights)?;
        total = tape.add(total, e)?;
    }
    Ok(total)
}

fn weighted(tape: &mut Tape, scale: f64, x: Var) -> Result<Var> {
    Ok(tape.affine(x, scale, 0.0)?)
}

fn column(tape: &mut Tape, x: Var, class: usize) -> Result<Var> {
    let n = tape.shape(x)[0];
    Ok(tape.pick(x, &vec![class; n])?)
}

/// `[ln(1 - D), ln D]` for a binary logit `l`, i.e. the log-softmax of the
/// two-class logits `[0, l]`.
fn binary_log_probs(tape: &mut Tape, l: Var) -> Result<Var> {
    let lift = tape.constant(Tensor::matrix(1, 2, vec![0.0, 1.0])?);
    let two = tape.matmul(l, lift)?;
    Ok(tape.log_softmax(two)?)
}

fn binary_check(tape: &Tape, l: Var) -> Result<()> {
    let shape = tape.shape(l);
    if shape.len() != 2 || shape[1] != 1 {
        return Err(AutodiffError::ShapeMismatch {
            op: "binary head",
            lhs: shape.to_vec(),
            rhs: vec![shape.first().copied().unwrap_or(0), 1],
        }
        .into());
    }
    Ok(())
}

/// Binary GAN loss on the given blocks and head.
///
/// Log form: the discriminator minimises `-(E_real ln D + E_fake ln(1-D))`;
/// the generator minimises `E_fake ln(1-D)` (minimax) or `-E_fake ln D`.
/// Hinge form: `E_real max(0, 1-l) + E_fake max(0, 1+l)` and `-E_fake l`.
pub fn loss_gan(
    tape: &mut Tape,
    real: &[Block],
    fake: &[Block],
    head: impl Fn(&Block) -> usize,
    side: Side,
    form: LossForm,
    gen_loss: GenLoss,
) -> Result<Var> {
    let logit = |tape: &mut Tape, b: &Block| -> Result<Var> {
        let l = b.head(head(b))?;
        binary_check(tape, l)?;
        Ok(l)
    };
    match (side, form) {
        (Side::Disc, LossForm::Log) => {
            let r = over_blocks(tape, real, |t, b| {
                let l = logit(t, b)?;
                let lp = binary_log_probs(t, l)?;
                column(t, lp, 1)
            })?;
            let f = over_blocks(tape, fake, |t, b| {
                let l = logit(t, b)?;
                let lp = binary_log_probs(t, l)?;
                column(t, lp, 0)
            })?;
            let v = tape.add(r, f)?;
            weighted(tape, -1.0, v)
        }
        (Side::Disc, LossForm::Hinge) => {
            let r = over_blocks(tape, real, |t, b| {
                let l = logit(t, b)?;
                let m = t.affine(l, -1.0, 1.0)?;
                Ok(t.relu(m)?)
            })?;
            let f = over_blocks(tape, fake, |t, b| {
                let l = logit(t, b)?;
                let m = t.affine(l, 1.0, 1.0)?;
                Ok(t.relu(m)?)
            })?;
            Ok(tape.add(r, f)?)
        }
        (Side::Gen, LossForm::Log) => match gen_loss {
            GenLoss::Minimax => over_blocks(tape, fake, |t, b| {
                let l = logit(t, b)?;
                let lp = binary_log_probs(t, l)?;
                column(t, lp, 0)
            }),
            GenLoss::NonSaturating => {
                let v = over_blocks(tape, fake, |t, b| {
                    let l = logit(t, b)?;
                    let lp = binary_log_probs(t, l)?;
                    column(t, lp, 1)
                })?;
                weighted(tape, -1.0, v)
            }
        },
        (Side::Gen, LossForm::Hinge) => {
            let v = over_blocks(tape, fake, logit)?;
            weighted(tape, -1.0, v)
        }
    }
}

fn check_label(k: usize, classes: usize) -> Result<()> {
    if k >= classes {
        return Err(ObjectiveError::LabelOutOfRange { label: k, k: classes });
    }
    Ok(())
}

/// `E[ln softmax(z)_{class(b)}]` over blocks of one head.
fn expected_log_prob(tape: &mut Tape, blocks: &[Block], head: usize, class: impl Fn(&Block) -> usize) -> Result<Var> {
    over_blocks(tape, blocks, |t, b| {
        let z = b.head(head)?;
        let width = t.shape(z)[1];
        let c = class(b);
        check_label(c, width)?;
        let lp = t.log_softmax(z)?;
        column(t, lp, c)
    })
}

fn plain_gan(tape: &mut Tape, batch: &Batch, side: Side, cfg: &MethodConfig) -> Result<Var> {
    if batch.plain_fake.is_empty() {
        return Err(ObjectiveError::MissingBlocks("untransformed fake"));
    }
    if side == Side::Disc && batch.plain_real.is_empty() {
        return Err(ObjectiveError::MissingBlocks("untransformed real"));
    }
    loss_gan(
        tape,
        &batch.plain_real,
        &batch.plain_fake,
        |_| 0,
        side,
        cfg.loss_form,
        cfg.gen_loss,
    )
}

/// Adversarial loss on untransformed data plus the rotation-style
/// classifier (head 1, `K` classes): the classifier learns on real data and
/// the generator is rewarded when its transformed samples are classified as
/// their transformation.
pub fn loss_ssgan(tape: &mut Tape, batch: &Batch, side: Side, cfg: &MethodConfig) -> Result<Var> {
    let gan = plain_gan(tape, batch, side, cfg)?;
    let (blocks, lambda) = match side {
        Side::Disc => (&batch.real, cfg.lambda_d()),
        Side::Gen => (&batch.fake, cfg.lambda_g()),
    };
    let ss = expected_log_prob(tape, blocks, 1, |b| b.k)?;
    let ss = weighted(tape, -lambda, ss)?;
    Ok(tape.add(gan, ss)?)
}

/// Adversarial loss plus the label-extended classifier (head 1, `K + 1`
/// classes, class 0 = fake, class `k + 1` = real under `T_k`).
pub fn loss_ssgan_ms(tape: &mut Tape, batch: &Batch, side: Side, cfg: &MethodConfig) -> Result<Var> {
    let gan = plain_gan(tape, batch, side, cfg)?;
    let ss = match side {
        Side::Disc => {
            let r = expected_log_prob(tape, &batch.real, 1, |b| b.k + 1)?;
            let f = expected_log_prob(tape, &batch.fake, 1, |_| 0)?;
            let s = tape.add(r, f)?;
            weighted(tape, -cfg.lambda_d(), s)?
        }
        Side::Gen => {
            let hit = expected_log_prob(tape, &batch.fake, 1, |b| b.k + 1)?;
            let fake = expected_log_prob(tape, &batch.fake, 1, |_| 0)?;
            let s = tape.sub(hit, fake)?;
            weighted(tape, -cfg.lambda_g(), s)?
        }
    };
    Ok(tape.add(gan, ss)?)
}

/// Plain GAN loss on transformed data with one binary head. The identity
/// up-weighting of the `plus` variant lives entirely in the block weights.
pub fn loss_dagan(tape: &mut Tape, batch: &Batch, side: Side, cfg: &MethodConfig) -> Result<Var> {
    loss_gan(tape, &batch.real, &batch.fake, |_| 0, side, cfg.loss_form, cfg.gen_loss)
}

/// One binary head per transformation: rows transformed by `T_k` are scored
/// by head `k` only.
pub fn loss_dagan_md(tape: &mut Tape, batch: &Batch, side: Side, cfg: &MethodConfig) -> Result<Var> {
    loss_gan(
        tape,
        &batch.real,
        &batch.fake,
        |b| b.k,
        side,
        cfg.loss_form,
        cfg.gen_loss,
    )
}

/// Differences `z_j - z_t` for every competitor `j != t`, `[n, C - 1]`.
fn competitor_gaps(tape: &mut Tape, z: Var, target: usize) -> Result<Var> {
    let c = tape.shape(z)[1];
    check_label(target, c)?;
    let mut m = vec![0.0; c * (c - 1)];
    for (col, j) in (0..c).filter(|&j| j != target).enumerate() {
        m[j * (c - 1) + col] = 1.0;
        m[target * (c - 1) + col] = -1.0;
    }
    let m = tape.constant(Tensor::matrix(c, c - 1, m)?);
    Ok(tape.matmul(z, m)?)
}

fn row_mean(tape: &mut Tape, x: Var) -> Result<Var> {
    let c = tape.shape(x)[1];
    let avg = tape.constant(Tensor::filled(vec![c, 1], 1.0 / c as f64));
    Ok(tape.matmul(x, avg)?)
}

/// Multi-class hinge: mean over competitors of `max(0, 1 - z_t + z_j)`.
fn multi_hinge(tape: &mut Tape, z: Var, target: usize) -> Result<Var> {
    let gaps = competitor_gaps(tape, z, target)?;
    let m = tape.affine(gaps, 1.0, 1.0)?;
    let h = tape.relu(m)?;
    row_mean(tape, h)
}

/// Mean over competitors of `-z_t + z_j`.
fn mean_gap(tape: &mut Tape, z: Var, target: usize) -> Result<Var> {
    let gaps = competitor_gaps(tape, z, target)?;
    row_mean(tape, gaps)
}

/// Label-augmented discriminator over `2K` classes on head `head`.
///
/// Log form: the discriminator minimises cross-entropy to `(k, real)` on
/// real rows and `(k, fake)` on fake rows; the generator minimises
/// `-(E_fake ln D(k, real) - E_fake ln D(k, fake))`. Hinge form uses the
/// multi-class hinge and its margin-gap generator counterpart.
pub fn loss_ssgan_la(
    tape: &mut Tape,
    batch: &Batch,
    side: Side,
    form: LossForm,
    k_total: usize,
    head: usize,
) -> Result<Var> {
    let real_class = |b: &Block| la_class(b.k, true, k_total);
    let fake_class = |b: &Block| la_class(b.k, false, k_total);
    for b in batch.real.iter().chain(&batch.fake) {
        check_label(b.k, k_total)?;
    }
    match (side, form) {
        (Side::Disc, LossForm::Log) => {
            let r = expected_log_prob(tape, &batch.real, head, real_class)?;
            let f = expected_log_prob(tape, &batch.fake, head, fake_class)?;
            let s = tape.add(r, f)?;
            weighted(tape, -1.0, s)
        }
        (Side::Gen, LossForm::Log) => {
            let hit = expected_log_prob(tape, &batch.fake, head, real_class)?;
            let caught = expected_log_prob(tape, &batch.fake, head, fake_class)?;
            let s = tape.sub(hit, caught)?;
            weighted(tape, -1.0, s)
        }
        (Side::Disc, LossForm::Hinge) => {
            let r = over_blocks(tape, &batch.real, |t, b| multi_hinge(t, b.head(head)?, real_class(b)))?;
            let f = over_blocks(tape, &batch.fake, |t, b| multi_hinge(t, b.head(head)?, fake_class(b)))?;
            Ok(tape.add(r, f)?)
        }
        (Side::Gen, LossForm::Hinge) => {
            let hit = over_blocks(tape, &batch.fake, |t, b| mean_gap(t, b.head(head)?, real_class(b)))?;
            let caught = over_blocks(tape, &batch.fake, |t, b| mean_gap(t, b.head(head)?, fake_class(b)))?;
            Ok(tape.sub(hit, caught)?)
        }
    }
}

/// Plain binary discriminator (head 0, untransformed data) plus the
/// label-augmented head 1, weighted by λ.
pub fn loss_ssgan_la_plus(
    tape: &mut Tape,
    batch: &Batch,
    side: Side,
    cfg: &MethodConfig,
    k_total: usize,
) -> Result<Var> {
    let gan = plain_gan(tape, batch, side, cfg)?;
    let la = loss_ssgan_la(tape, batch, side, cfg.loss_form, k_total, 1)?;
    let lambda = match side {
        Side::Disc => cfg.lambda_d(),
        Side::Gen => cfg.lambda_g(),
    };
    let la = weighted(tape, lambda, la)?;
    Ok(tape.add(gan, la)?)
}

/// Dispatches to the method's loss.
pub fn method_loss(tape: &mut Tape, cfg: &MethodConfig, k_total: usize, batch: &Batch, side: Side) -> Result<Var> {
    match cfg.method {
        Method::Gan => plain_gan(tape, batch, side, cfg),
        Method::Ssgan => loss_ssgan(tape, batch, side, cfg),
        Method::SsganMs => loss_ssgan_ms(tape, batch, side, cfg),
        Method::Dagan | Method::DaganPlus => loss_dagan(tape, batch, side, cfg),
        Method::DaganMd => loss_dagan_md(tape, batch, side, cfg),
        Method::SsganLa => loss_ssgan_la(tape, batch, side, cfg.loss_form, k_total, 0),
        Method::SsganLaPlus => loss_ssgan_la_plus(tape, batch, side, cfg, k_total),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn leaf(tape: &mut Tape, rows: usize, cols: usize, v: Vec<f64>) -> Var {
        tape.leaf(Tensor::matrix(rows, cols, v).unwrap())
    }

    fn uniform(n: usize) -> Vec<f64> {
        vec![1.0 / n as f64; n]
    }

    fn block(heads: Vec<Var>, n: usize, k: usize) -> Block {
        Block {
            heads,
            weights: uniform(n),
            k,
        }
    }

    fn value(tape: &Tape, v: Var) -> f64 {
        tape.item(v).unwrap()
    }

    #[test]
    fn log_gan_at_half_is_two_ln_two() {
        let mut t = Tape::new();
        let r = leaf(&mut t, 3, 1, vec![0.0; 3]);
        let f = leaf(&mut t, 2, 1, vec![0.0; 2]);
        let loss = loss_gan(
            &mut t,
            &[block(vec![r], 3, 0)],
            &[block(vec![f], 2, 0)],
            |_| 0,
            Side::Disc,
            LossForm::Log,
            GenLoss::Minimax,
        )
        .unwrap();
        assert_abs_diff_eq!(value(&t, loss), 2.0 * 2f64.ln(), epsilon = 1e-15);
    }

    #[test]
    fn hinge_gan_examples() {
        let mut t = Tape::new();
        let r = leaf(&mut t, 1, 1, vec![2.0]);
        let f = leaf(&mut t, 1, 1, vec![-2.0]);
        let (rb, fb) = ([block(vec![r], 1, 0)], [block(vec![f], 1, 0)]);
        let d = loss_gan(&mut t, &rb, &fb, |_| 0, Side::Disc, LossForm::Hinge, GenLoss::Minimax).unwrap();
        assert_eq!(value(&t, d), 0.0);
        let c = leaf(&mut t, 1, 1, vec![0.7]);
        let g = loss_gan(
            &mut t,
            &[],
            &[block(vec![c], 1, 0)],
            |_| 0,
            Side::Gen,
            LossForm::Hinge,
            GenLoss::Minimax,
        )
        .unwrap();
        assert_abs_diff_eq!(value(&t, g), -0.7, epsilon = 1e-15);
    }

    #[test]
    fn non_saturating_generator() {
        let mut t = Tape::new();
        let l = leaf(&mut t, 1, 1, vec![0.3]);
        let g = loss_gan(
            &mut t,
            &[],
            &[block(vec![l], 1, 0)],
            |_| 0,
            Side::Gen,
            LossForm::Log,
            GenLoss::NonSaturating,
        )
        .unwrap();
        let d = 1.0 / (1.0 + (-0.3f64).exp());
        assert_abs_diff_eq!(value(&t, g), -d.ln(), epsilon = 1e-15);
    }

    fn ssgan_batch(t: &mut Tape, k: usize, c_width: usize) -> Batch {
        let d_r = leaf(t, 2, 1, vec![0.4, -0.3]);
        let d_f = leaf(t, 2, 1, vec![-0.1, 0.9]);
        let c_r = leaf(
            t,
            2,
            c_width,
            (0..2 * c_width).map(|i| (i as f64 * 0.37).sin()).collect(),
        );
        let c_f = leaf(
            t,
            2,
            c_width,
            (0..2 * c_width).map(|i| (i as f64 * 0.21).cos()).collect(),
        );
        Batch {
            plain_real: vec![block(vec![d_r], 2, 0)],
            plain_fake: vec![block(vec![d_f], 2, 0)],
            real: vec![block(vec![d_r, c_r], 2, k - 1)],
            fake: vec![block(vec![d_f, c_f], 2, k - 1)],
        }
    }

    fn gan_only(t: &mut Tape, b: &Batch, side: Side) -> f64 {
        let v = loss_gan(
            t,
            &b.plain_real,
            &b.plain_fake,
            |_| 0,
            side,
            LossForm::Log,
            GenLoss::Minimax,
        )
        .unwrap();
        value(t, v)
    }

    #[test]
    fn ssgan_with_zero_lambda_is_gan() {
        let mut t = Tape::new();
        let b = ssgan_batch(&mut t, 3, 3);
        let mut cfg = MethodConfig::new(Method::Ssgan);
        cfg.lambda_d = Some(0.0);
        let v = loss_ssgan(&mut t, &b, Side::Disc, &cfg).unwrap();
        assert_eq!(value(&t, v), gan_only(&mut t, &b, Side::Disc));
    }

    #[test]
    fn ssgan_uniform_classifier_adds_log_one_over_k() {
        let mut t = Tape::new();
        let mut b = ssgan_batch(&mut t, 4, 4);
        let flat = leaf(&mut t, 2, 4, vec![0.5; 8]);
        b.real[0].heads[1] = flat;
        b.fake[0].heads[1] = flat;
        let mut cfg = MethodConfig::new(Method::Ssgan);
        cfg.lambda_d = Some(0.5);
        let v = loss_ssgan(&mut t, &b, Side::Disc, &cfg).unwrap();
        let want = gan_only(&mut t, &b, Side::Disc) - 0.5 * 0.25f64.ln();
        assert_abs_diff_eq!(value(&t, v), want, epsilon = 1e-14);
        let g = loss_ssgan(&mut t, &b, Side::Gen, &cfg).unwrap();
        let want = gan_only(&mut t, &b, Side::Gen) - 0.25f64.ln();
        assert_abs_diff_eq!(value(&t, g), want, epsilon = 1e-14);
    }

    #[test]
    fn ssgan_lambda_g_zero_ignores_classifier() {
        let mut t = Tape::new();
        let b = ssgan_batch(&mut t, 3, 3);
        let mut cfg = MethodConfig::new(Method::Ssgan);
        cfg.lambda_g = Some(0.0);
        let g = loss_ssgan(&mut t, &b, Side::Gen, &cfg).unwrap();
        assert_eq!(value(&t, g), gan_only(&mut t, &b, Side::Gen));
    }

    #[test]
    fn ms_examples() {
        let mut t = Tape::new();
        let b = ssgan_batch(&mut t, 2, 4);
        let mut cfg = MethodConfig::new(Method::SsganMs);
        cfg.lambda_d = Some(0.0);
        cfg.lambda_g = Some(0.0);
        for side in [Side::Disc, Side::Gen] {
            let v = loss_ssgan_ms(&mut t, &b, side, &cfg).unwrap();
            assert_eq!(value(&t, v), gan_only(&mut t, &b, side));
        }
        let mut b = ssgan_batch(&mut t, 2, 4);
        let flat = leaf(&mut t, 2, 4, vec![-1.0; 8]);
        b.fake[0].heads[1] = flat;
        let g = loss_ssgan_ms(&mut t, &b, Side::Gen, &MethodConfig::new(Method::SsganMs)).unwrap();
        assert_abs_diff_eq!(value(&t, g), gan_only(&mut t, &b, Side::Gen), epsilon = 1e-15);
    }

    #[test]
    fn md_routes_by_transform_and_skips_empty_heads() {
        let mut t = Tape::new();
        let h0 = leaf(&mut t, 1, 1, vec![0.0]);
        let h1 = leaf(&mut t, 1, 1, vec![5.0]);
        let cfg = MethodConfig::new(Method::DaganMd);
        let fake = vec![Block {
            heads: vec![h0, h1],
            weights: vec![1.0],
            k: 1,
        }];
        let batch = Batch {
            fake,
            ..Default::default()
        };
        let v = loss_dagan_md(&mut t, &batch, Side::Gen, &cfg).unwrap();
        let d = 1.0 / (1.0 + (-5.0f64).exp());
        assert_abs_diff_eq!(value(&t, v), (1.0 - d).ln(), epsilon = 1e-12);

        let bad = Batch {
            fake: vec![Block {
                heads: vec![h0],
                weights: vec![1.0],
                k: 3,
            }],
            ..Default::default()
        };
        assert!(matches!(
            loss_dagan_md(&mut t, &bad, Side::Gen, &cfg),
            Err(ObjectiveError::HeadOutOfRange { head: 3, .. })
        ));
    }

    #[test]
    fn la_uniform_logits_give_zero_generator_loss() {
        let mut t = Tape::new();
        let z = leaf(&mut t, 3, 8, vec![0.2; 24]);
        let batch = Batch {
            fake: (0..4)
                .map(|k| Block {
                    heads: vec![z],
                    weights: vec![1.0 / 12.0; 3],
                    k,
                })
                .collect(),
            ..Default::default()
        };
        for form in [LossForm::Log, LossForm::Hinge] {
            let g = loss_ssgan_la(&mut t, &batch, Side::Gen, form, 4, 0).unwrap();
            assert_abs_diff_eq!(value(&t, g), 0.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn la_hinge_satisfied_margins_give_zero() {
        let mut t = Tape::new();
        // Target (1, real) for K = 2 is class 1.
        let z = leaf(&mut t, 1, 4, vec![0.0, 1.0, -0.5, 0.0]);
        let batch = Batch {
            real: vec![Block {
                heads: vec![z],
                weights: vec![1.0],
                k: 1,
            }],
            ..Default::default()
        };
        let d = loss_ssgan_la(&mut t, &batch, Side::Disc, LossForm::Hinge, 2, 0).unwrap();
        assert_eq!(value(&t, d), 0.0);
        let z = leaf(&mut t, 1, 4, vec![0.0, 0.9, -0.5, 0.0]);
        let batch = Batch {
            real: vec![Block {
                heads: vec![z],
                weights: vec![1.0],
                k: 1,
            }],
            ..Default::default()
        };
        let d = loss_ssgan_la(&mut t, &batch, Side::Disc, LossForm::Hinge, 2, 0).unwrap();
        assert!(value(&t, d) > 0.0);
    }

    #[test]
    fn la_label_out_of_range() {
        let mut t = Tape::new();
        let z = leaf(&mut t, 1, 4, vec![0.0; 4]);
        let batch = Batch {
            real: vec![Block {
                heads: vec![z],
                weights: vec![1.0],
                k: 2,
            }],
            ..Default::default()
        };
        assert!(matches!(
            loss_ssgan_la(&mut t, &batch, Side::Disc, LossForm::Log, 2, 0),
            Err(ObjectiveError::LabelOutOfRange { .. })
        ));
    }

    #[test]
    fn lambda_validation() {
        let mut cfg = MethodConfig::new(Method::SsganLa);
        assert!(cfg.validate().is_ok());
        cfg.lambda_g = Some(1.0);
        assert_eq!(
            cfg.validate(),
            Err(ObjectiveError::LambdaNotApplicable(Method::SsganLa))
        );
        let mut cfg = MethodConfig::new(Method::Ssgan);
        cfg.lambda_d = Some(-1.0);
        assert!(cfg.validate().is_err());
        cfg.lambda_d = Some(0.2);
        cfg.n_dis = 0;
        assert_eq!(cfg.validate(), Err(ObjectiveError::ZeroNDis));
    }

    fn la_plus_batch(t: &mut Tape) -> Batch {
        let d_r = leaf(t, 2, 1, vec![0.8, -1.4]);
        let d_f = leaf(t, 2, 1, vec![-0.6, 1.3]);
        let z_r = leaf(t, 2, 4, vec![0.3, -0.2, 0.9, 0.1, -0.4, 0.6, 0.0, 0.2]);
        let z_f = leaf(t, 2, 4, vec![-0.3, 0.4, 0.2, 1.1, 0.5, -0.9, 0.3, 0.0]);
        Batch {
            plain_real: vec![block(vec![d_r], 2, 0)],
            plain_fake: vec![block(vec![d_f], 2, 0)],
            real: (0..2)
                .map(|k| Block {
                    heads: vec![d_r, z_r],
                    weights: vec![0.25; 2],
                    k,
                })
                .collect(),
            fake: (0..2)
                .map(|k| Block {
                    heads: vec![d_f, z_f],
                    weights: vec![0.25; 2],
                    k,
                })
                .collect(),
        }
    }

    #[test]
    fn la_plus_decomposes_into_components() {
        let mut t = Tape::new();
        let b = la_plus_batch(&mut t);
        for lambda in [0.0, 1.0, 0.2] {
            let mut cfg = MethodConfig::new(Method::SsganLaPlus);
            cfg.loss_form = LossForm::Hinge;
            cfg.lambda_d = Some(lambda);
            cfg.lambda_g = Some(lambda);
            for side in [Side::Disc, Side::Gen] {
                let total = loss_ssgan_la_plus(&mut t, &b, side, &cfg, 2).unwrap();
                let gan = loss_gan(
                    &mut t,
                    &b.plain_real,
                    &b.plain_fake,
                    |_| 0,
                    side,
                    LossForm::Hinge,
                    GenLoss::Minimax,
                )
                .unwrap();
                let la = loss_ssgan_la(&mut t, &b, side, LossForm::Hinge, 2, 1).unwrap();
                let want = value(&t, gan) + lambda * value(&t, la);
                assert!((value(&t, total) - want).abs() <= 1e-12);
            }
        }
    }

    /// With one identity transform and zero trade-off weights every method
    /// is the plain GAN on the same rows. The label-augmented head reduces
    /// through the logit `z_real - z_fake`, on the discriminator side only.
    #[test]
    fn reduction_chain_with_identity_only() {
        let mut t = Tape::new();
        let l_r = leaf(&mut t, 3, 1, vec![0.4, -1.2, 2.0]);
        let l_f = leaf(&mut t, 2, 1, vec![-0.3, 0.8]);
        let c_r = leaf(&mut t, 3, 1, vec![0.0; 3]);
        let c_f = leaf(&mut t, 2, 1, vec![0.0; 2]);
        let c2_r = leaf(&mut t, 3, 2, vec![0.0; 6]);
        let c2_f = leaf(&mut t, 2, 2, vec![0.0; 4]);
        // LA logits (real, fake) whose difference is the binary logit.
        let z_r = leaf(&mut t, 3, 2, vec![0.4, 0.0, -0.2, 1.0, 1.5, -0.5]);
        let z_f = leaf(&mut t, 2, 2, vec![0.0, 0.3, 1.0, 0.2]);
        let reference = |t: &mut Tape, side| {
            let v = loss_gan(
                t,
                &[block(vec![l_r], 3, 0)],
                &[block(vec![l_f], 2, 0)],
                |_| 0,
                side,
                LossForm::Log,
                GenLoss::Minimax,
            )
            .unwrap();
            value(t, v)
        };
        for method in Method::ALL {
            let mut cfg = MethodConfig::new(method);
            if method.has_tradeoff() {
                cfg.lambda_d = Some(0.0);
                cfg.lambda_g = Some(0.0);
            }
            let (real_heads, fake_heads) = match method {
                Method::Ssgan => (vec![l_r, c_r], vec![l_f, c_f]),
                Method::SsganMs => (vec![l_r, c2_r], vec![l_f, c2_f]),
                Method::SsganLa => (vec![z_r], vec![z_f]),
                Method::SsganLaPlus => (vec![l_r, z_r], vec![l_f, z_f]),
                _ => (vec![l_r], vec![l_f]),
            };
            let plain = [block(vec![l_r], 3, 0)];
            let batch = Batch {
                plain_real: plain.to_vec(),
                plain_fake: vec![block(vec![l_f], 2, 0)],
                real: vec![block(real_heads, 3, 0)],
                fake: vec![block(fake_heads, 2, 0)],
            };
            let sides: &[Side] = if method == Method::SsganLa {
                &[Side::Disc]
            } else {
                &[Side::Disc, Side::Gen]
            };
            for &side in sides {
                let got = method_loss(&mut t, &cfg, 1, &batch, side).unwrap();
                let want = reference(&mut t, side);
                assert!((value(&t, got) - want).abs() <= 1e-12, "{method} {side:?}");
            }
        }
    }

    proptest! {
        #[test]
        fn raising_target_logit_lowers_cross_entropy(
            logits in prop::collection::vec(-3.0f64..3.0, 8),
            k in 0usize..4,
            bump in 0.01f64..2.0,
        ) {
            let mut t = Tape::new();
            let z = leaf(&mut t, 1, 8, logits.clone());
            let batch = Batch { real: vec![Block { heads: vec![z], weights: vec![1.0], k }], ..Default::default() };
            let before = loss_ssgan_la(&mut t, &batch, Side::Disc, LossForm::Log, 4, 0).unwrap();
            let mut raised = logits.clone();
            raised[la_class(k, true, 4)] += bump;
            let z2 = leaf(&mut t, 1, 8, raised);
            let batch = Batch { real: vec![Block { heads: vec![z2], weights: vec![1.0], k }], ..Default::default() };
            let after = loss_ssgan_la(&mut t, &batch, Side::Disc, LossForm::Log, 4, 0).unwrap();
            prop_assert!(value(&t, after) < value(&t, before));
        }
    }
}
