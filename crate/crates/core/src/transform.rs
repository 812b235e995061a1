//! Deterministic data transformations, their sampling distribution and the
//! group structure of a transformation set.

use std::fmt;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{AutodiffError, Tape, Tensor, Var};
use crate::oracle::FiniteDistribution;

/// Offsets of composed shifts are compared with this tolerance.
const SHIFT_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TransformError {
    #[error("{kind} acts on {expected}-d samples, got dimension {actual}")]
    Dimension {
        kind: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("{kind} has no finite pushforward")]
    NotFinite { kind: &'static str },
    #[error("{kind} cannot act on continuous samples")]
    NotContinuous { kind: &'static str },
    #[error("not a bijection on 0..{0}")]
    InvalidPermutation(usize),
    #[error("quarter turns must be in 0..4, got {0}")]
    InvalidQuarterTurns(u8),
    #[error("permutation on {perm} points applied to a space of {space} points")]
    SpaceMismatch { perm: usize, space: usize },
    #[error("cannot compose {0} with {1}")]
    Incomparable(String, String),
    #[error("transformation set is empty")]
    Empty,
    #[error("invalid sampling probabilities: {0}")]
    BadProbs(String),
    #[error("transformation set is not a group: {0}")]
    NotAGroup(GroupWitness),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
}

pub type Result<T> = std::result::Result<T, TransformError>;

/// A bijection `i -> map[i]` on `0..n`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct Permutation(Vec<usize>);

impl Permutation {
    pub fn new(map: Vec<usize>) -> Result<Self> {
        let n = map.len();
        let mut seen = vec![false; n];
        for &i in &map {
            if i >= n || seen[i] {
                return Err(TransformError::InvalidPermutation(n));
            }
            seen[i] = true;
        }
        Ok(Self(map))
    }

    pub fn identity(n: usize) -> Self {
        Self((0..n).collect())
    }

    /// `i -> (i + shift) mod n`.
    pub fn cyclic_shift(n: usize, shift: usize) -> Self {
        Self((0..n).map(|i| (i + shift) % n).collect())
    }

    pub fn size(&self) -> usize {
        self.0.len()
    }

    pub fn image(&self, i: usize) -> usize {
        self.0[i]
    }

    pub fn map(&self) -> &[usize] {
        &self.0
    }

    pub fn inverse(&self) -> Self {
        let mut inv = vec![0; self.0.len()];
        for (i, &j) in self.0.iter().enumerate() {
            inv[j] = i;
        }
        Self(inv)
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &Self) -> Self {
        Self(other.0.iter().map(|&j| self.0[j]).collect())
    }

    pub fn is_identity(&self) -> bool {
        self.0.iter().enumerate().all(|(i, &j)| i == j)
    }
}

impl TryFrom<Vec<usize>> for Permutation {
    type Error = TransformError;
    fn try_from(v: Vec<usize>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<Permutation> for Vec<usize> {
    fn from(p: Permutation) -> Self {
        p.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Transformation {
    Identity,
    Shift1d { offset: f64 },
    Rotation2d { quarter_turns: u8 },
    Permutation { map: Permutation },
}

impl fmt::Display for Transformation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Identity => write!(f, "identity"),
            Self::Shift1d { offset } => write!(f, "shift({offset})"),
            Self::Rotation2d { quarter_turns } => write!(f, "rot({}°)", 90 * *quarter_turns as u32),
            Self::Permutation { map } => write!(f, "perm{:?}", map.map()),
        }
    }
}

impl Transformation {
    pub fn shift(offset: f64) -> Self {
        Self::Shift1d { offset }
    }

    /// The `k`-th (0-based) shift of the 1-d experiment, `x + 2k`.
    pub fn gauss_shift(k: usize) -> Self {
        Self::Shift1d { offset: 2.0 * k as f64 }
    }

    pub fn rotation(quarter_turns: u8) -> Result<Self> {
        if quarter_turns > 3 {
            return Err(TransformError::InvalidQuarterTurns(quarter_turns));
        }
        Ok(Self::Rotation2d { quarter_turns })
    }

    pub fn permutation(map: Vec<usize>) -> Result<Self> {
        Ok(Self::Permutation {
            map: Permutation::new(map)?,
        })
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Self::Identity => "identity",
            Self::Shift1d { .. } => "shift1d",
            Self::Rotation2d { .. } => "rotation2d",
            Self::Permutation { .. } => "permutation",
        }
    }

    pub fn is_identity(&self) -> bool {
        match self {
            Self::Identity => true,
            Self::Shift1d { offset } => offset.abs() <= SHIFT_TOL,
            Self::Rotation2d { quarter_turns } => *quarter_turns == 0,
            Self::Permutation { map } => map.is_identity(),
        }
    }

    fn rotation_matrix_t(q: u8) -> [f64; 4] {
        let (c, s) = match q % 4 {
            0 => (1.0, 0.0),
            1 => (0.0, 1.0),
            2 => (-1.0, 0.0),
            _ => (0.0, -1.0),
        };
        // Transpose of [[c, -s], [s, c]] for row-vector samples.
        [c, s, -s, c]
    }

    /// Applies the map to an `[n, d]` batch on the tape. Shifts and rotations
    /// are affine, so the result is differentiable in `x`.
    pub fn apply(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        let dim = tape.shape(x).get(1).copied().unwrap_or(1);
        match self {
            Self::Identity => Ok(x),
            Self::Shift1d { offset } => {
                if dim != 1 {
                    return Err(TransformError::Dimension {
                        kind: "shift1d",
                        expected: 1,
                        actual: dim,
                    });
                }
                Ok(tape.affine(x, 1.0, *offset)?)
            }
            Self::Rotation2d { quarter_turns } => {
                if dim != 2 {
                    return Err(TransformError::Dimension {
                        kind: "rotation2d",
                        expected: 2,
                        actual: dim,
                    });
                }
                if *quarter_turns == 0 {
                    return Ok(x);
                }
                let r = Tensor::matrix(2, 2, Self::rotation_matrix_t(*quarter_turns).to_vec())?;
                let r = tape.constant(r);
                Ok(tape.matmul(x, r)?)
            }
            Self::Permutation { .. } => Err(TransformError::NotContinuous { kind: "permutation" }),
        }
    }

    /// Applies the map to a single point.
    pub fn apply_point(&self, x: &[f64]) -> Result<Vec<f64>> {
        match self {
            Self::Identity => Ok(x.to_vec()),
            Self::Shift1d { offset } => match x {
                [v] => Ok(vec![v + offset]),
                _ => Err(TransformError::Dimension {
                    kind: "shift1d",
                    expected: 1,
                    actual: x.len(),
                }),
            },
            Self::Rotation2d { quarter_turns } => match x {
                [a, b] => {
                    let m = Self::rotation_matrix_t(*quarter_turns);
                    Ok(vec![a * m[0] + b * m[2], a * m[1] + b * m[3]])
                }
                _ => Err(TransformError::Dimension {
                    kind: "rotation2d",
                    expected: 2,
                    actual: x.len(),
                }),
            },
            Self::Permutation { .. } => Err(TransformError::NotContinuous { kind: "permutation" }),
        }
    }

    /// Image of a point of a finite space.
    pub fn apply_index(&self, i: usize) -> Result<usize> {
        match self {
            Self::Identity => Ok(i),
            Self::Permutation { map } => Ok(map.image(i)),
            other => Err(TransformError::NotFinite {
                kind: other.kind_name(),
            }),
        }
    }

    /// Exact pushforward of a finite distribution: `out[σ(i)] = p[i]`.
    pub fn pushforward(&self, p: &FiniteDistribution) -> Result<FiniteDistribution> {
        match self {
            Self::Identity => Ok(p.clone()),
            Self::Permutation { map } => {
                if map.size() != p.len() {
                    return Err(TransformError::SpaceMismatch {
                        perm: map.size(),
                        space: p.len(),
                    });
                }
                let mut out = vec![0.0; p.len()];
                for (i, &mass) in p.probs().iter().enumerate() {
                    out[map.image(i)] = mass;
                }
                Ok(FiniteDistribution::from_trusted(out))
            }
            other => Err(TransformError::NotFinite {
                kind: other.kind_name(),
            }),
        }
    }

    pub fn inverse(&self) -> Self {
        match self {
            Self::Identity => Self::Identity,
            Self::Shift1d { offset } => Self::Shift1d { offset: -offset },
            Self::Rotation2d { quarter_turns } => Self::Rotation2d {
                quarter_turns: (4 - quarter_turns) % 4,
            },
            Self::Permutation { map } => Self::Permutation { map: map.inverse() },
        }
    }

    /// `self ∘ other` (apply `other` first). Identity composes with any kind;
    /// otherwise both must be the same kind on the same space.
    pub fn compose(&self, other: &Self) -> Result<Self> {
        match (self, other) {
            (Self::Identity, t) | (t, Self::Identity) => Ok(t.clone()),
            (Self::Shift1d { offset: a }, Self::Shift1d { offset: b }) => Ok(Self::Shift1d { offset: a + b }),
            (Self::Rotation2d { quarter_turns: a }, Self::Rotation2d { quarter_turns: b }) => Ok(Self::Rotation2d {
                quarter_turns: (a + b) % 4,
            }),
            (Self::Permutation { map: a }, Self::Permutation { map: b }) if a.size() == b.size() => {
                Ok(Self::Permutation { map: a.compose(b) })
            }
            (a, b) => Err(TransformError::Incomparable(a.to_string(), b.to_string())),
        }
    }

    /// Equality as maps. Shift offsets are compared to within 1e-12.
    pub fn same_map(&self, other: &Self) -> bool {
        if self.is_identity() && other.is_identity() {
            return true;
        }
        match (self, other) {
            (Self::Shift1d { offset: a }, Self::Shift1d { offset: b }) => (a - b).abs() <= SHIFT_TOL,
            (Self::Rotation2d { quarter_turns: a }, Self::Rotation2d { quarter_turns: b }) => a == b,
            (Self::Permutation { map: a }, Self::Permutation { map: b }) => a == b,
            _ => false,
        }
    }
}

/// Why a transformation set fails to be a group.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum GroupWitness {
    /// `T_left ∘ T_right` is not in the set.
    NotClosed {
        left: usize,
        right: usize,
    },
    MissingIdentity,
    MissingInverse {
        index: usize,
    },
}

impl fmt::Display for GroupWitness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::NotClosed { left, right } => {
                write!(f, "T{left} ∘ T{right} is not in the set")
            }
            Self::MissingIdentity => write!(f, "identity is missing"),
            Self::MissingInverse { index } => write!(f, "inverse of T{index} is missing"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupCheck {
    pub is_group: bool,
    pub witness: Option<GroupWitness>,
}

/// An ordered set of transformations with sampling probabilities `p(T_k)`.
/// Index 0 is the identity whenever the set contains one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformationSet {
    transforms: Vec<Transformation>,
    probs: Vec<f64>,
}

impl TransformationSet {
    pub fn new(transforms: Vec<Transformation>, probs: Vec<f64>) -> Result<Self> {
        if transforms.is_empty() {
            return Err(TransformError::Empty);
        }
        if probs.len() != transforms.len() {
            return Err(TransformError::BadProbs(format!(
                "{} probabilities for {} transforms",
                probs.len(),
                transforms.len()
            )));
        }
        if probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(TransformError::BadProbs("entries must be finite and >= 0".into()));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(TransformError::BadProbs(format!("sum is {total}")));
        }
        Ok(Self { transforms, probs })
    }

    /// Uniform `p(T_k) = 1/K`.
    pub fn uniform(transforms: Vec<Transformation>) -> Result<Self> {
        let k = transforms.len();
        Self::new(transforms, vec![1.0 / k.max(1) as f64; k])
    }

    /// Identity (index 0) gets `identity_prob`; the rest share the remainder
    /// equally.
    pub fn identity_upweighted(transforms: Vec<Transformation>, identity_prob: f64) -> Result<Self> {
        let k = transforms.len();
        if k == 0 {
            return Err(TransformError::Empty);
        }
        if !transforms[0].is_identity() {
            return Err(TransformError::BadProbs(
                "index 0 must be the identity to up-weight it".into(),
            ));
        }
        if !(0.0..=1.0).contains(&identity_prob) {
            return Err(TransformError::BadProbs(format!(
                "identity probability {identity_prob} outside [0, 1]"
            )));
        }
        if k == 1 {
            return Self::new(transforms, vec![1.0]);
        }
        let rest = (1.0 - identity_prob) / (k - 1) as f64;
        let mut probs = vec![rest; k];
        probs[0] = identity_prob;
        Self::new(transforms, probs)
    }

    pub fn identity() -> Self {
        Self {
            transforms: vec![Transformation::Identity],
            probs: vec![1.0],
        }
    }

    /// `{x + 2k : k = 0..K}`, uniform.
    pub fn gauss_shifts(k: usize) -> Result<Self> {
        Self::uniform((0..k).map(Transformation::gauss_shift).collect())
    }

    /// The first `k` quarter turns (all four gives the cyclic group), uniform.
    pub fn quarter_turns(k: usize) -> Result<Self> {
        let ts = (0..k.min(4) as u8)
            .map(Transformation::rotation)
            .collect::<Result<Vec<_>>>()?;
        if k > 4 {
            return Err(TransformError::InvalidQuarterTurns(k as u8));
        }
        Self::uniform(ts)
    }

    /// Cyclic group of the given order acting on `0..n` by shifts of
    /// multiples of `n / order`, uniform.
    pub fn cyclic(n: usize, order: usize) -> Result<Self> {
        if order == 0 || n == 0 || !n.is_multiple_of(order) {
            return Err(TransformError::BadProbs(format!(
                "order {order} does not divide space size {n}"
            )));
        }
        let step = n / order;
        Self::uniform(
            (0..order)
                .map(|j| Transformation::Permutation {
                    map: Permutation::cyclic_shift(n, j * step),
                })
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.transforms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transforms.is_empty()
    }

    pub fn transforms(&self) -> &[Transformation] {
        &self.transforms
    }

    pub fn get(&self, k: usize) -> &Transformation {
        &self.transforms[k]
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, k: usize) -> f64 {
        self.probs[k]
    }

    pub fn is_uniform(&self) -> bool {
        let u = 1.0 / self.len() as f64;
        self.probs.iter().all(|p| (p - u).abs() <= 1e-12)
    }

    pub fn with_probs(&self, probs: Vec<f64>) -> Result<Self> {
        Self::new(self.transforms.clone(), probs)
    }

    /// Draws `k` with probability `p(T_k)`.
    pub fn sample_transform<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        if self.len() == 1 {
            return 0;
        }
        let dist = WeightedIndex::new(&self.probs).expect("probabilities validated on construction");
        dist.sample(rng)
    }

    /// `T_k ∘ T_j` for every `k`, the left translates of `T_j`.
    pub fn translates(&self, j: usize) -> Result<Vec<Transformation>> {
        self.transforms.iter().map(|t| self.transforms[j].compose(t)).collect()
    }

    fn position(&self, t: &Transformation) -> Option<usize> {
        self.transforms.iter().position(|s| s.same_map(t))
    }

    /// Checks closure, identity membership and inverse membership under
    /// composition.
    pub fn is_group(&self) -> Result<GroupCheck> {
        let fail = |w| {
            Ok(GroupCheck {
                is_group: false,
                witness: Some(w),
            })
        };
        // Compose every pair first so incomparable kinds are reported as
        // such rather than as a closure failure.
        let mut table = Vec::with_capacity(self.len() * self.len());
        for i in 0..self.len() {
            for j in 0..self.len() {
                table.push((i, j, self.transforms[i].compose(&self.transforms[j])?));
            }
        }
        for (i, j, c) in &table {
            if self.position(c).is_none() {
                return fail(GroupWitness::NotClosed { left: *i, right: *j });
            }
        }
        if !self.transforms.iter().any(Transformation::is_identity) {
            return fail(GroupWitness::MissingIdentity);
        }
        for (i, t) in self.transforms.iter().enumerate() {
            if self.position(&t.inverse()).is_none() {
                return fail(GroupWitness::MissingInverse { index: i });
            }
        }
        Ok(GroupCheck {
            is_group: true,
            witness: None,
        })
    }

    /// All transforms must be finite (identity or permutations of one space).
    pub fn ensure_finite(&self, space: usize) -> Result<()> {
        for t in &self.transforms {
            match t {
                Transformation::Identity => {}
                Transformation::Permutation { map } if map.size() == space => {}
                Transformation::Permutation { map } => {
                    return Err(TransformError::SpaceMismatch {
                        perm: map.size(),
                        space,
                    })
                }
                other => {
                    return Err(TransformError::NotFinite {
                        kind: other.kind_name(),
                    })
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn dist(p: &[f64]) -> FiniteDistribution {
        FiniteDistribution::new(p.to_vec()).unwrap()
    }

    #[test]
    fn third_gauss_shift_moves_zero_to_four() {
        let t = Transformation::gauss_shift(2);
        assert_eq!(t.apply_point(&[0.0]).unwrap(), vec![4.0]);
    }

    #[test]
    fn identity_and_quarter_turn_on_points() {
        assert_eq!(
            Transformation::Identity.apply_point(&[0.3, -1.2]).unwrap(),
            vec![0.3, -1.2]
        );
        let r = Transformation::rotation(1).unwrap();
        assert_eq!(r.apply_point(&[1.0, 0.0]).unwrap(), vec![0.0, 1.0]);
        assert!(Transformation::rotation(4).is_err());
    }

    #[test]
    fn tape_application_matches_points() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::matrix(2, 2, vec![1.0, 0.0, 0.5, -2.0]).unwrap());
        let r = Transformation::rotation(3).unwrap();
        let y = r.apply(&mut tape, x).unwrap();
        assert_eq!(&tape.value(y)[0..2], r.apply_point(&[1.0, 0.0]).unwrap().as_slice());
        assert_eq!(&tape.value(y)[2..4], r.apply_point(&[0.5, -2.0]).unwrap().as_slice());
        assert!(matches!(
            Transformation::shift(1.0).apply(&mut tape, x),
            Err(TransformError::Dimension { .. })
        ));
        assert!(matches!(
            Transformation::permutation(vec![1, 0]).unwrap().apply(&mut tape, x),
            Err(TransformError::NotContinuous { .. })
        ));
    }

    #[test]
    fn pushforward_examples() {
        let p = dist(&[0.7, 0.3]);
        assert_eq!(Transformation::Identity.pushforward(&p).unwrap(), p);
        let swap = Transformation::permutation(vec![1, 0]).unwrap();
        assert_eq!(swap.pushforward(&p).unwrap().probs(), &[0.3, 0.7]);
        let shift = Transformation::Permutation {
            map: Permutation::cyclic_shift(4, 1),
        };
        let q = shift.pushforward(&dist(&[0.1, 0.2, 0.3, 0.4])).unwrap();
        assert_eq!(q.probs(), &[0.4, 0.1, 0.2, 0.3]);
        assert!(Transformation::shift(1.0).pushforward(&p).is_err());
    }

    #[test]
    fn quarter_turns_form_a_group() {
        let set = TransformationSet::quarter_turns(4).unwrap();
        assert_eq!(
            set.is_group().unwrap(),
            GroupCheck {
                is_group: true,
                witness: None
            }
        );
    }

    #[test]
    fn identity_and_one_turn_is_not_closed() {
        let set = TransformationSet::quarter_turns(2).unwrap();
        let check = set.is_group().unwrap();
        assert!(!check.is_group);
        assert_eq!(check.witness, Some(GroupWitness::NotClosed { left: 1, right: 1 }));
    }

    #[test]
    fn gauss_shifts_are_not_a_group() {
        // Enumerate compositions 2i + 2j and test membership directly.
        let offsets: Vec<f64> = (0..4).map(|k| 2.0 * k as f64).collect();
        let closed = offsets
            .iter()
            .all(|a| offsets.iter().all(|b| offsets.contains(&(a + b))));
        assert!(!closed);
        let check = TransformationSet::gauss_shifts(4).unwrap().is_group().unwrap();
        assert!(!check.is_group);
        assert_eq!(check.witness, Some(GroupWitness::NotClosed { left: 1, right: 3 }));
    }

    #[test]
    fn mixed_kinds_are_incomparable() {
        let set =
            TransformationSet::uniform(vec![Transformation::shift(1.0), Transformation::rotation(1).unwrap()]).unwrap();
        assert!(matches!(set.is_group(), Err(TransformError::Incomparable(..))));
    }

    #[test]
    fn single_transform_always_sampled() {
        let set = TransformationSet::identity();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!((0..100).all(|_| set.sample_transform(&mut rng) == 0));
    }

    #[test]
    fn uniform_sampling_frequencies() {
        let set = TransformationSet::quarter_turns(4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut counts = [0usize; 4];
        let n = 100_000;
        for _ in 0..n {
            counts[set.sample_transform(&mut rng)] += 1;
        }
        for c in counts {
            assert_abs_diff_eq!(c as f64 / n as f64, 0.25, epsilon = 0.01);
        }
    }

    #[test]
    fn upweighted_identity_frequency() {
        let set = TransformationSet::identity_upweighted(
            TransformationSet::quarter_turns(4).unwrap().transforms().to_vec(),
            0.5,
        )
        .unwrap();
        assert_abs_diff_eq!(set.prob(1), 1.0 / 6.0, epsilon = 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 100_000;
        let hits = (0..n).filter(|_| set.sample_transform(&mut rng) == 0).count();
        assert_abs_diff_eq!(hits as f64 / n as f64, 0.5, epsilon = 0.01);
    }

    #[test]
    fn sampling_is_deterministic_given_seed() {
        let set = TransformationSet::gauss_shifts(4).unwrap();
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..50).map(|_| set.sample_transform(&mut rng)).collect::<Vec<_>>()
        };
        assert_eq!(draw(9), draw(9));
    }

    #[test]
    fn bad_probabilities_rejected() {
        let ts = TransformationSet::quarter_turns(2).unwrap().transforms().to_vec();
        assert!(TransformationSet::new(ts.clone(), vec![0.6, 0.6]).is_err());
        assert!(TransformationSet::new(ts.clone(), vec![-0.5, 1.5]).is_err());
        assert!(TransformationSet::new(ts, vec![1.0]).is_err());
        assert!(TransformationSet::uniform(vec![]).is_err());
        assert!(Permutation::new(vec![0, 0]).is_err());
    }

    proptest! {
        #[test]
        fn rotation_inverse_is_exact(q in 0u8..4, a in -5.0f64..5.0, b in -5.0f64..5.0) {
            let t = Transformation::rotation(q).unwrap();
            let y = t.apply_point(&[a, b]).unwrap();
            prop_assert_eq!(t.inverse().apply_point(&y).unwrap(), vec![a, b]);
        }

        #[test]
        fn shift_inverse_within_tolerance(k in 0usize..8, x in -10.0f64..10.0) {
            let t = Transformation::gauss_shift(k);
            let y = t.apply_point(&[x]).unwrap();
            let back = t.inverse().apply_point(&y).unwrap()[0];
            prop_assert!((back - x).abs() <= 1e-12);
        }

        #[test]
        fn pushforward_preserves_mass(
            raw in prop::collection::vec(0.0f64..1.0, 2..9),
            shift in 0usize..8,
        ) {
            let total: f64 = raw.iter().sum::<f64>() + 1e-9;
            let p = FiniteDistribution::new(raw.iter().map(|v| (v + 1e-9 / raw.len() as f64) / total).collect()).unwrap();
            let t = Transformation::Permutation { map: Permutation::cyclic_shift(p.len(), shift % p.len()) };
            let q = t.pushforward(&p).unwrap();
            prop_assert!((q.probs().iter().sum::<f64>() - p.probs().iter().sum::<f64>()).abs() <= 1e-15);
        }

        #[test]
        fn group_translates_are_the_group(n in 2usize..9, j in 0usize..8) {
            let set = TransformationSet::cyclic(n, n).unwrap();
            let j = j % n;
            let translates = set.translates(j).unwrap();
            let mut hit = vec![0usize; n];
            for t in &translates {
                let pos = set.transforms().iter().position(|s| s.same_map(t));
                prop_assert!(pos.is_some());
                hit[pos.unwrap()] += 1;
            }
            prop_assert!(hit.iter().all(|&h| h == 1));
        }
    }
}
