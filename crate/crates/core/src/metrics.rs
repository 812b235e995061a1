//! Evaluation metrics: total variation on finite spaces, Gaussian KDE,
//! kernel MMD and the leaked-mass score for augmentation leakage.
//!
//! Sample sets are flat row-major buffers with an explicit dimension.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::transform::{TransformError, TransformationSet};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least {need} samples, got {got}")]
    TooFewSamples { need: usize, got: usize },
    #[error("samples have zero spread; pass an explicit bandwidth")]
    ZeroSpread,
    #[error("bandwidth must be positive and finite, got {0}")]
    BadBandwidth(f64),
    #[error("buffer of length {len} is not a whole number of {dim}-d points")]
    Dimension { len: usize, dim: usize },
    #[error("grid must be sorted")]
    UnsortedGrid,
    #[error("transformation set is not a group: {0}")]
    NotAGroup(String),
    #[error("ambiguous assignment: copy of mode {mode} under transform {transform} lies {distance:.4} from mode {other}, need more than {limit:.4}")]
    Ambiguous {
        mode: usize,
        transform: usize,
        other: usize,
        distance: f64,
        limit: f64,
    },
    #[error("transformation set has no identity element")]
    NoIdentity,
    #[error(transparent)]
    Transform(#[from] TransformError),
}

pub type Result<T> = std::result::Result<T, MetricsError>;

/// `½ Σ |p_i - q_i|`.
pub fn tv_distance(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(MetricsError::LengthMismatch(p.len(), q.len()));
    }
    Ok(0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>())
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Silverman's rule, `0.9 min(σ, IQR / 1.34) n^{-1/5}`.
pub fn silverman_bandwidth(samples: &[f64]) -> Result<f64> {
    if samples.len() < 2 {
        return Err(MetricsError::TooFewSamples {
            need: 2,
            got: samples.len(),
        });
    }
    let (_, var) = mean_var(samples);
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let iqr = quantile(&sorted, 0.75) - quantile(&sorted, 0.25);
    let sd = var.sqrt();
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    if spread.is_nan() || spread <= 0.0 {
        return Err(MetricsError::ZeroSpread);
    }
    Ok(0.9 * spread * (samples.len() as f64).powf(-0.2))
}

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Gaussian KDE of 1-D samples evaluated on `grid`. `None` selects
/// Silverman's bandwidth.
pub fn kde(samples: &[f64], grid: &[f64], bandwidth: Option<f64>) -> Result<Vec<f64>> {
    if samples.len() < 2 {
        return Err(MetricsError::TooFewSamples {
            need: 2,
            got: samples.len(),
        });
    }
    if grid.windows(2).any(|w| w[0] > w[1]) {
        return Err(MetricsError::UnsortedGrid);
    }
    let h = match bandwidth {
        Some(h) if h > 0.0 && h.is_finite() => h,
        Some(h) => return Err(MetricsError::BadBandwidth(h)),
        None => silverman_bandwidth(samples)?,
    };
    let norm = INV_SQRT_2PI / (h * samples.len() as f64);
    Ok(grid
        .par_iter()
        .map(|&g| {
            samples
                .iter()
                .map(|&s| (-0.5 * ((g - s) / h).powi(2)).exp())
                .sum::<f64>()
                * norm
        })
        .collect())
}

/// `points` evenly spaced values spanning the sample range widened by three
/// bandwidths on each side.
pub fn kde_grid(samples: &[f64], bandwidth: f64, points: usize) -> Vec<f64> {
    let lo = samples.iter().copied().fold(f64::INFINITY, f64::min) - 3.0 * bandwidth;
    let hi = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 3.0 * bandwidth;
    let step = (hi - lo) / (points.max(2) - 1) as f64;
    (0..points.max(2)).map(|i| lo + step * i as f64).collect()
}

pub fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    x.windows(2)
        .zip(y.windows(2))
        .map(|(xs, ys)| 0.5 * (xs[1] - xs[0]) * (ys[0] + ys[1]))
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub enum Bandwidth {
    #[default]
    Median,
    Fixed(f64),
}

/// Gaussian kernel `exp(-d² / 2h²)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct Kernel {
    pub bandwidth: Bandwidth,
}

/// Largest number of pooled points the median heuristic looks at.
pub const MEDIAN_SUBSAMPLE: usize = 1000;

fn check_dim(data: &[f64], dim: usize) -> Result<usize> {
    if dim == 0 || !data.len().is_multiple_of(dim) {
        return Err(MetricsError::Dimension { len: data.len(), dim });
    }
    Ok(data.len() / dim)
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn cmp_points(a: &[f64], b: &[f64]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

/// Points sorted lexicographically, so results never depend on input order.
fn canonical(data: &[f64], dim: usize) -> Vec<&[f64]> {
    let mut pts: Vec<&[f64]> = data.chunks_exact(dim).collect();
    pts.sort_by(|a, b| cmp_points(a, b));
    pts
}

/// Median pairwise distance over the pooled samples, on an evenly strided
/// subsample of at most [`MEDIAN_SUBSAMPLE`] points of the canonical order.
fn median_distance(pooled: &[&[f64]]) -> f64 {
    let stride = pooled.len().div_ceil(MEDIAN_SUBSAMPLE).max(1);
    let sub: Vec<&[f64]> = pooled.iter().step_by(stride).copied().collect();
    let mut d: Vec<f64> = (0..sub.len())
        .into_par_iter()
        .flat_map_iter(|i| {
            let sub = &sub;
            (i + 1..sub.len()).map(move |j| sq_dist(sub[i], sub[j]).sqrt())
        })
        .collect();
    if d.is_empty() {
        return 0.0;
    }
    let mid = d.len() / 2;
    let (_, m, _) = d.select_nth_unstable_by(mid, f64::total_cmp);
    *m
}

/// Median heuristic bandwidth for two sample sets.
pub fn median_heuristic(a: &[f64], b: &[f64], dim: usize) -> Result<f64> {
    check_dim(a, dim)?;
    check_dim(b, dim)?;
    let mut pooled = canonical(a, dim);
    pooled.extend(canonical(b, dim));
    pooled.sort_by(|x, y| cmp_points(x, y));
    Ok(median_distance(&pooled))
}

fn kernel_sum(xs: &[&[f64]], ys: &[&[f64]], gamma: f64, skip_diag: bool) -> f64 {
    let rows: Vec<f64> = xs
        .par_iter()
        .enumerate()
        .map(|(i, x)| {
            ys.iter()
                .enumerate()
                .filter(|(j, _)| !(skip_diag && *j == i))
                .map(|(_, y)| (-gamma * sq_dist(x, y)).exp())
                .sum()
        })
        .collect();
    rows.iter().sum()
}

/// Unbiased MMD² U-statistic with a Gaussian kernel, reported as
/// `sqrt(max(MMD², 0))`. Symmetric in its arguments and independent of
/// sample order, bit for bit.
pub fn mmd(a: &[f64], b: &[f64], dim: usize, kernel: Kernel) -> Result<f64> {
    let (na, nb) = (check_dim(a, dim)?, check_dim(b, dim)?);
    if na < 2 || nb < 2 {
        return Err(MetricsError::TooFewSamples {
            need: 2,
            got: na.min(nb),
        });
    }
    let (mut xs, mut ys) = (canonical(a, dim), canonical(b, dim));
    let swap = xs
        .len()
        .cmp(&ys.len())
        .then_with(|| {
            xs.iter()
                .zip(&ys)
                .map(|(p, q)| cmp_points(p, q))
                .find(|o| o.is_ne())
                .unwrap_or(Ordering::Equal)
        })
        .is_gt();
    if swap {
        std::mem::swap(&mut xs, &mut ys);
    }
    let h = match kernel.bandwidth {
        Bandwidth::Fixed(h) if h > 0.0 && h.is_finite() => h,
        Bandwidth::Fixed(h) => return Err(MetricsError::BadBandwidth(h)),
        Bandwidth::Median => {
            let mut pooled = xs.clone();
            pooled.extend(ys.iter().copied());
            pooled.sort_by(|x, y| cmp_points(x, y));
            let h = median_distance(&pooled);
            if h.is_nan() || h <= 0.0 {
                // All points coincide: the two sets are identical.
                return Ok(0.0);
            }
            h
        }
    };
    let gamma = 1.0 / (2.0 * h * h);
    let (m, n) = (xs.len() as f64, ys.len() as f64);
    let kxx = kernel_sum(&xs, &xs, gamma, true) / (m * (m - 1.0));
    let kyy = kernel_sum(&ys, &ys, gamma, true) / (n * (n - 1.0));
    let kxy = kernel_sum(&xs, &ys, gamma, false) / (m * n);
    Ok((kxx + kyy - 2.0 * kxy).max(0.0).sqrt())
}

/// Fraction of 2-D `samples` whose nearest reference copy `T_j(mode_i)` has
/// a non-identity `T_j`. Every non-identity copy of every mode must lie more
/// than `2 · radius` from every mode, otherwise assignment is ambiguous.
pub fn leaked_mass(samples: &[f64], modes: &[[f64; 2]], group: &TransformationSet, radius: f64) -> Result<f64> {
    let n = check_dim(samples, 2)?;
    if n == 0 {
        return Err(MetricsError::TooFewSamples { need: 1, got: 0 });
    }
    let check = group.is_group()?;
    if let Some(w) = check.witness {
        return Err(MetricsError::NotAGroup(w.to_string()));
    }
    let identity = group
        .transforms()
        .iter()
        .position(|t| t.is_identity())
        .ok_or(MetricsError::NoIdentity)?;

    let mut copies: Vec<([f64; 2], bool)> = Vec::new();
    for (j, t) in group.transforms().iter().enumerate() {
        for (i, m) in modes.iter().enumerate() {
            let c = t.apply_point(m)?;
            let c = [c[0], c[1]];
            if j != identity {
                for (o, other) in modes.iter().enumerate() {
                    let d = sq_dist(&c, other).sqrt();
                    if d <= 2.0 * radius {
                        return Err(MetricsError::Ambiguous {
                            mode: i,
                            transform: j,
                            other: o,
                            distance: d,
                            limit: 2.0 * radius,
                        });
                    }
                }
            }
            copies.push((c, j != identity));
        }
    }
    let leaked = samples
        .par_chunks_exact(2)
        .filter(|p| {
            copies
                .iter()
                .min_by(|a, b| sq_dist(p, &a.0).total_cmp(&sq_dist(p, &b.0)))
                .is_some_and(|c| c.1)
        })
        .count();
    Ok(leaked as f64 / n as f64)
}
