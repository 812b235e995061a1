//! Discriminator objectives written as per-row weighted log-likelihoods, and
//! a numeric maximiser for them.
//!
//! Every discriminator objective in the family has the form
//! `Σ_x̃ Σ_c a[x̃][c] log D(c|x̃)`, where the weights come from enumerating
//! `(x, T_k)` pairs directly. Maximising row by row over the simplex is how
//! the closed-form optima are cross-checked without reusing the pushforward
//! code they are built from.

use crate::method::Method;
use crate::transform::TransformationSet;

use super::{la_class, ClassifierTable, FiniteDistribution, OracleError, Result};

/// Weights `a[x̃][c]` of one discriminator head.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadWeights {
    pub classes: usize,
    pub rows: Vec<Vec<f64>>,
}

impl HeadWeights {
    fn zeros(n: usize, classes: usize) -> Self {
        Self {
            classes,
            rows: vec![vec![0.0; classes]; n],
        }
    }

    /// The exact best response: each row normalised.
    pub fn best_response(&self) -> ClassifierTable {
        ClassifierTable::from_weights(self.classes, self.rows.clone())
    }

    /// `Σ a log D` for a given table; `-∞` if positive weight meets zero.
    pub fn objective(&self, table: &ClassifierTable) -> f64 {
        let mut total = 0.0;
        for (x, row) in self.rows.iter().enumerate() {
            for (c, &a) in row.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                match table.get(x, c) {
                    Some(d) if d > 0.0 => total += a * d.ln(),
                    _ => return f64::NEG_INFINITY,
                }
            }
        }
        total
    }

    /// Maximises each row numerically; rows with no weight are undefined.
    pub fn maximize(&self, tol: f64, max_iter: usize) -> ClassifierTable {
        let rows = self
            .rows
            .iter()
            .map(|a| (a.iter().sum::<f64>() > 0.0).then(|| maximize_log_row(a, tol, max_iter)))
            .collect();
        ClassifierTable::new(self.classes, rows)
    }
}

/// Gradient ascent on softmax logits for `max_d Σ_c a_c log d_c` over the
/// simplex. The logit gradient is `a - (Σa) softmax(θ)`; weights are scaled
/// to unit mass so a unit step is stable. Stops when the gradient's max-norm
/// falls below `tol`.
pub fn maximize_log_row(a: &[f64], tol: f64, max_iter: usize) -> Vec<f64> {
    let total: f64 = a.iter().sum();
    let w: Vec<f64> = a.iter().map(|v| v / total).collect();
    let mut theta = vec![0.0; a.len()];
    let mut d = softmax(&theta);
    for _ in 0..max_iter {
        let mut worst: f64 = 0.0;
        for ((t, &wc), &dc) in theta.iter_mut().zip(&w).zip(&d) {
            let g = wc - dc;
            worst = worst.max(g.abs());
            *t += g;
        }
        d = softmax(&theta);
        if worst < tol {
            break;
        }
    }
    d
}

pub(crate) fn softmax(theta: &[f64]) -> Vec<f64> {
    FiniteDistribution::softmax(theta).probs().to_vec()
}

fn check(p_d: &FiniteDistribution, p_g: &FiniteDistribution, set: &TransformationSet) -> Result<()> {
    if p_d.len() != p_g.len() {
        return Err(OracleError::LengthMismatch(p_d.len(), p_g.len()));
    }
    set.ensure_finite(p_d.len())?;
    Ok(())
}

/// Calls `f(x, k, x̃ = T_k(x), p(T_k))` for every pair.
fn for_pairs(n: usize, set: &TransformationSet, mut f: impl FnMut(usize, usize, usize, f64)) -> Result<()> {
    for x in 0..n {
        for (k, t) in set.transforms().iter().enumerate() {
            f(x, k, t.apply_index(x)?, set.prob(k));
        }
    }
    Ok(())
}

/// Binary head on transformed points, columns `[fake, real]`.
pub fn weights_binary(
    p_d: &FiniteDistribution,
    p_g: &FiniteDistribution,
    set: &TransformationSet,
) -> Result<HeadWeights> {
    check(p_d, p_g, set)?;
    let mut h = HeadWeights::zeros(p_d.len(), 2);
    for_pairs(p_d.len(), set, |x, _, xt, pk| {
        h.rows[xt][0] += p_g.get(x) * pk;
        h.rows[xt][1] += p_d.get(x) * pk;
    })?;
    Ok(h)
}

/// Self-supervised classifier trained on real data only.
pub fn weights_ssgan(p_d: &FiniteDistribution, set: &TransformationSet) -> Result<HeadWeights> {
    set.ensure_finite(p_d.len())?;
    let mut h = HeadWeights::zeros(p_d.len(), set.len());
    for_pairs(p_d.len(), set, |x, k, xt, pk| {
        h.rows[xt][k] += p_d.get(x) * pk;
    })?;
    Ok(h)
}

/// Label-extended classifier: column 0 is the fake class.
pub fn weights_ms(p_d: &FiniteDistribution, p_g: &FiniteDistribution, set: &TransformationSet) -> Result<HeadWeights> {
    check(p_d, p_g, set)?;
    let mut h = HeadWeights::zeros(p_d.len(), set.len() + 1);
    for_pairs(p_d.len(), set, |x, k, xt, pk| {
        h.rows[xt][k + 1] += p_d.get(x) * pk;
        h.rows[xt][0] += p_g.get(x) * pk;
    })?;
    Ok(h)
}

/// One binary head per transformation, each seeing only its own transform.
pub fn weights_md(
    p_d: &FiniteDistribution,
    p_g: &FiniteDistribution,
    set: &TransformationSet,
) -> Result<Vec<HeadWeights>> {
    check(p_d, p_g, set)?;
    let mut heads = vec![HeadWeights::zeros(p_d.len(), 2); set.len()];
    for_pairs(p_d.len(), set, |x, k, xt, pk| {
        heads[k].rows[xt][0] += p_g.get(x) * pk;
        heads[k].rows[xt][1] += p_d.get(x) * pk;
    })?;
    Ok(heads)
}

/// Label-augmented head over `2K` classes.
pub fn weights_la(p_d: &FiniteDistribution, p_g: &FiniteDistribution, set: &TransformationSet) -> Result<HeadWeights> {
    check(p_d, p_g, set)?;
    let k_total = set.len();
    let mut h = HeadWeights::zeros(p_d.len(), 2 * k_total);
    for_pairs(p_d.len(), set, |x, k, xt, pk| {
        h.rows[xt][la_class(k, true, k_total)] += p_d.get(x) * pk;
        h.rows[xt][la_class(k, false, k_total)] += p_g.get(x) * pk;
    })?;
    Ok(h)
}

/// All discriminator heads of a method, in the order used by
/// exact descent. The identity-only set is used for the untransformed
/// binary head of the trade-off methods.
pub fn method_heads(
    method: Method,
    p_d: &FiniteDistribution,
    p_g: &FiniteDistribution,
    set: &TransformationSet,
) -> Result<Vec<HeadWeights>> {
    let plain = TransformationSet::identity();
    Ok(match method {
        Method::Gan => vec![weights_binary(p_d, p_g, &plain)?],
        Method::Ssgan => vec![weights_binary(p_d, p_g, &plain)?, weights_ssgan(p_d, set)?],
        Method::SsganMs => vec![weights_binary(p_d, p_g, &plain)?, weights_ms(p_d, p_g, set)?],
        Method::Dagan | Method::DaganPlus => vec![weights_binary(p_d, p_g, set)?],
        Method::DaganMd => weights_md(p_d, p_g, set)?,
        Method::SsganLa => vec![weights_la(p_d, p_g, set)?],
        Method::SsganLaPlus => vec![weights_binary(p_d, p_g, &plain)?, weights_la(p_d, p_g, set)?],
    })
}

/// Numeric maximiser of the label-augmented discriminator objective.
pub fn numeric_dla(
    p_d: &FiniteDistribution,
    p_g: &FiniteDistribution,
    set: &TransformationSet,
) -> Result<ClassifierTable> {
    Ok(weights_la(p_d, p_g, set)?.maximize(1e-13, 1_000_000))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn row_maximiser_recovers_normalised_weights() {
        let d = maximize_log_row(&[0.35, 0.15, 0.2, 0.3], 1e-14, 100_000);
        for (got, want) in d.iter().zip([0.35, 0.15, 0.2, 0.3]) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-12);
        }
    }

    #[test]
    fn best_response_beats_perturbations() {
        let h = HeadWeights {
            classes: 3,
            rows: vec![vec![0.2, 0.5, 0.3], vec![0.1, 0.0, 0.9]],
        };
        let best = h.best_response();
        let v = h.objective(&best);
        let perturbed = ClassifierTable::new(3, vec![Some(vec![0.25, 0.45, 0.3]), Some(vec![0.1, 0.0, 0.9])]);
        assert!(h.objective(&perturbed) < v);
    }
}
