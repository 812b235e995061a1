//! Synthetic datasets and the transformation set a config asks for.

use labelaug_core::oracle::FiniteDistribution;
use labelaug_core::{Method, TransformationSet};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::config::{Dataset, FinitePd, RunConfig, TransformKind};

/// Centres of the 2-d blobs. Not symmetric under any quarter turn, and every
/// turned copy lies at least 0.5 from every centre.
pub const MODES: [[f64; 2]; 3] = [[1.0, 0.25], [0.6, 0.6], [0.25, 1.0]];
pub const MODE_STD: f64 = 0.05;
/// Assignment radius used when scoring leaked mass.
pub const LEAK_RADIUS: f64 = 0.2;

pub fn data_dim(dataset: Dataset) -> usize {
    match dataset {
        Dataset::Gauss1dShift | Dataset::Finite => 1,
        Dataset::Modes2dRot => 2,
    }
}

/// `n` real samples, flat row-major.
pub fn sample_real<R: Rng + ?Sized>(dataset: Dataset, n: usize, rng: &mut R) -> Vec<f64> {
    match dataset {
        Dataset::Gauss1dShift | Dataset::Finite => (0..n).map(|_| StandardNormal.sample(rng)).collect(),
        Dataset::Modes2dRot => {
            let mut out = Vec::with_capacity(2 * n);
            for _ in 0..n {
                let m = MODES[rng.random_range(0..MODES.len())];
                for c in m {
                    let e: f64 = StandardNormal.sample(rng);
                    out.push(c + MODE_STD * e);
                }
            }
            out
        }
    }
}

/// The transformation family without method-specific reweighting.
pub fn base_set(cfg: &RunConfig) -> Result<TransformationSet, labelaug_core::transform::TransformError> {
    match cfg.transform_kind() {
        TransformKind::Identity => Ok(TransformationSet::identity()),
        TransformKind::Shift => TransformationSet::gauss_shifts(cfg.k),
        TransformKind::Rotation => TransformationSet::quarter_turns(cfg.k),
        TransformKind::Cyclic => TransformationSet::cyclic(cfg.finite_n, cfg.k),
        TransformKind::Auto => unreachable!("resolved by transform_kind"),
    }
}

/// The set a method trains with: plain GAN sees no transforms and
/// dagan_plus up-weights the identity.
pub fn method_set(cfg: &RunConfig) -> Result<TransformationSet, labelaug_core::transform::TransformError> {
    let base = base_set(cfg)?;
    match cfg.method {
        Method::Gan => Ok(TransformationSet::identity()),
        Method::DaganPlus => TransformationSet::identity_upweighted(base.transforms().to_vec(), cfg.identity_prob),
        _ => Ok(base),
    }
}

/// Target distribution of the finite descent experiments.
pub fn finite_target<R: Rng + ?Sized>(cfg: &RunConfig, rng: &mut R) -> FiniteDistribution {
    match cfg.finite_pd {
        FinitePd::Geometric => {
            let w: Vec<f64> = (0..cfg.finite_n).map(|i| 0.6f64.powi(i as i32)).collect();
            FiniteDistribution::from_weights(&w).expect("positive weights")
        }
        FinitePd::Random => FiniteDistribution::random(cfg.finite_n, rng),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Stream};

    #[test]
    fn modes_stay_clear_of_turned_copies() {
        let turns = TransformationSet::quarter_turns(4).unwrap();
        for t in turns.transforms().iter().filter(|t| !t.is_identity()) {
            for m in MODES {
                let c = t.apply_point(&m).unwrap();
                for other in MODES {
                    let d = ((c[0] - other[0]).powi(2) + (c[1] - other[1]).powi(2)).sqrt();
                    assert!(d > 2.0 * LEAK_RADIUS, "{t} maps {m:?} within {d} of {other:?}");
                }
            }
        }
    }

    #[test]
    fn blobs_have_the_stated_spread() {
        let x = sample_real(Dataset::Modes2dRot, 3000, &mut stream(1, Stream::Data));
        let near = x
            .chunks(2)
            .filter(|p| MODES.iter().any(|m| (p[0] - m[0]).hypot(p[1] - m[1]) < 4.0 * MODE_STD))
            .count();
        assert!(near as f64 / 3000.0 > 0.99);
    }

    #[test]
    fn dagan_plus_upweights_identity() {
        let cfg = RunConfig::for_method(Method::DaganPlus);
        let set = method_set(&cfg).unwrap();
        assert_eq!(set.probs(), &[0.5, 0.5 / 3.0, 0.5 / 3.0, 0.5 / 3.0]);
        let gan = method_set(&RunConfig::for_method(Method::Gan)).unwrap();
        assert_eq!(gan.len(), 1);
    }
}
