//! Covering numbers of point sets and the resulting generalization
//! bounds for robust classifier classes.
//!
//! Covers restrict centers to the input points. The true external
//! covering number (centers anywhere) is never larger, and the bounds
//! built on top are increasing in the covering number, so point-centered
//! covers keep every bound sound. Both constructions verify their own
//! output: a result is returned only after the post-hoc cover check
//! passes.

use itertools::Itertools;
use serde::Serialize;

use crate::distributions::tv_bound_from_renyi;
use crate::error::{CertError, Result};
use crate::norm::{lp_distance, NormOrder};

/// A verified cover of a point set by `radius`-balls centered at input
/// points.
#[derive(Debug, Clone, Serialize)]
pub struct CoveringResult {
    n_balls: usize,
    centers: Vec<Vec<f64>>,
    radius: f64,
    norm_order: NormOrder,
    /// True only for covers produced by exhaustive minimization.
    exact: bool,
}

impl CoveringResult {
    pub fn n_balls(&self) -> usize {
        self.n_balls
    }

    pub fn centers(&self) -> &[Vec<f64>] {
        &self.centers
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn norm_order(&self) -> NormOrder {
        self.norm_order
    }

    pub fn is_exact(&self) -> bool {
        self.exact
    }
}

/// True when every point lies within `radius` (inclusive) of some center.
pub fn is_valid_cover(
    points: &[Vec<f64>],
    centers: &[Vec<f64>],
    radius: f64,
    norm_order: NormOrder,
) -> bool {
    points.iter().all(|p| {
        centers
            .iter()
            .any(|c| matches!(lp_distance(p, c, norm_order), Ok(d) if d <= radius))
    })
}

fn validate_points(points: &[Vec<f64>], alpha: f64) -> Result<()> {
    if points.is_empty() {
        return Err(CertError::InvalidInput(
            "cannot cover an empty point set".into(),
        ));
    }
    let d = points[0].len();
    if d == 0 || points.iter().any(|p| p.len() != d) {
        return Err(CertError::DimensionMismatch(
            "points must be non-empty vectors of equal dimension".into(),
        ));
    }
    if points.iter().flatten().any(|v| !v.is_finite()) {
        return Err(CertError::InvalidInput("points must be finite".into()));
    }
    if !alpha.is_finite() || alpha <= 0.0 {
        return Err(CertError::InvalidInput(format!(
            "covering radius must be positive, got {alpha}"
        )));
    }
    Ok(())
}

/// `coverage[i]` is the bitset of points within `alpha` of point `i`.
fn coverage_bitsets(points: &[Vec<f64>], alpha: f64, p: NormOrder) -> Vec<Vec<u64>> {
    let n = points.len();
    let words = n.div_ceil(64);
    let mut sets = vec![vec![0u64; words]; n];
    for i in 0..n {
        for j in 0..n {
            if lp_distance(&points[i], &points[j], p).unwrap() <= alpha {
                sets[i][j / 64] |= 1 << (j % 64);
            }
        }
    }
    sets
}

fn finish(
    points: &[Vec<f64>],
    chosen: Vec<usize>,
    alpha: f64,
    p: NormOrder,
    exact: bool,
) -> CoveringResult {
    let centers: Vec<Vec<f64>> = chosen.iter().map(|&i| points[i].clone()).collect();
    assert!(
        is_valid_cover(points, &centers, alpha, p),
        "internal error: produced an invalid cover"
    );
    CoveringResult {
        n_balls: centers.len(),
        centers,
        radius: alpha,
        norm_order: p,
        exact,
    }
}

/// Greedy max-coverage cover: repeatedly center a ball at the point
/// covering the most still-uncovered points, ties broken by smallest
/// index. Uses at most `n` balls and over-estimates the minimal
/// point-centered cover by at most a `ln n` factor.
pub fn covering_greedy(points: &[Vec<f64>], alpha: f64, p: NormOrder) -> Result<CoveringResult> {
    validate_points(points, alpha)?;
    let n = points.len();
    let sets = coverage_bitsets(points, alpha, p);
    let words = sets[0].len();
    let mut uncovered: Vec<u64> = (0..words)
        .map(|w| {
            let bits = n - w * 64;
            if bits >= 64 {
                u64::MAX
            } else {
                (1u64 << bits) - 1
            }
        })
        .collect();
    let mut chosen = Vec::new();
    while uncovered.iter().any(|&w| w != 0) {
        let mut best = 0;
        let mut best_gain = 0;
        for (i, set) in sets.iter().enumerate() {
            let gain: u32 = set
                .iter()
                .zip(&uncovered)
                .map(|(s, u)| (s & u).count_ones())
                .sum();
            if gain as usize > best_gain {
                best_gain = gain as usize;
                best = i;
            }
        }
        for (u, s) in uncovered.iter_mut().zip(&sets[best]) {
            *u &= !s;
        }
        chosen.push(best);
    }
    Ok(finish(points, chosen, alpha, p, false))
}

/// Maximum point count accepted by [`covering_exact`].
pub const EXACT_COVER_LIMIT: usize = 12;

/// Minimal point-centered cover by exhaustive set cover. Among minimal
/// covers, returns the lexicographically smallest index set. Limited to
/// [`EXACT_COVER_LIMIT`] points.
pub fn covering_exact(points: &[Vec<f64>], alpha: f64, p: NormOrder) -> Result<CoveringResult> {
    validate_points(points, alpha)?;
    let n = points.len();
    if n > EXACT_COVER_LIMIT {
        return Err(CertError::Capability(format!(
            "exhaustive covering handles at most {EXACT_COVER_LIMIT} points, got {n}"
        )));
    }
    let sets = coverage_bitsets(points, alpha, p);
    let words = sets[0].len();
    let full: Vec<u64> = (0..words)
        .map(|w| {
            let bits = n - w * 64;
            if bits >= 64 {
                u64::MAX
            } else {
                (1u64 << bits) - 1
            }
        })
        .collect();
    for k in 1..=n {
        // Combinations arrive in lexicographic order, so the first hit is
        // the canonical optimum.
        for combo in (0..n).combinations(k) {
            let mut union = vec![0u64; words];
            for &i in &combo {
                for (u, s) in union.iter_mut().zip(&sets[i]) {
                    *u |= s;
                }
            }
            if union == full {
                return Ok(finish(points, combo, alpha, p, true));
            }
        }
    }
    unreachable!("the full point set always covers itself");
}

fn check_bound_args(n_cover: usize, num_classes: usize, n: usize) -> Result<()> {
    if n_cover == 0 || num_classes == 0 || n == 0 {
        return Err(CertError::InvalidInput(
            "covering number, class count, and sample size must be positive".into(),
        ));
    }
    Ok(())
}

/// Rademacher complexity bound for the loss class of TV-robust
/// classifiers: `sqrt(N * K / n) + eps_tv`, where `N` is a covering
/// number of the data, `K` the number of classes, and `n` the sample
/// size.
pub fn rademacher_bound_tv(
    n_cover: usize,
    num_classes: usize,
    n: usize,
    eps_tv: f64,
) -> Result<f64> {
    check_bound_args(n_cover, num_classes, n)?;
    if !(0.0..=1.0).contains(&eps_tv) {
        return Err(CertError::InvalidInput(format!(
            "eps_tv must lie in [0, 1], got {eps_tv}"
        )));
    }
    Ok(((n_cover * num_classes) as f64 / n as f64).sqrt() + eps_tv)
}

/// Rademacher complexity bound for Renyi-robust classifiers: the Renyi
/// level first converts to a TV level, then enters the TV bound.
/// Reported unclamped; values above 1 are vacuous but honest.
pub fn rademacher_bound_renyi(
    n_cover: usize,
    num_classes: usize,
    n: usize,
    eps_renyi: f64,
) -> Result<f64> {
    check_bound_args(n_cover, num_classes, n)?;
    if eps_renyi.is_nan() || eps_renyi < 0.0 {
        return Err(CertError::InvalidInput(format!(
            "eps_renyi must be non-negative, got {eps_renyi}"
        )));
    }
    Ok(((n_cover * num_classes) as f64 / n as f64).sqrt() + tv_bound_from_renyi(eps_renyi)?)
}

/// High-probability bound on the generalization gap:
/// `2 * rademacher + 3 * sqrt(ln(2 / delta) / (2n))`, holding with
/// probability at least `1 - delta`.
pub fn generalization_gap_bound(rademacher: f64, n: usize, delta: f64) -> Result<f64> {
    if rademacher.is_nan() || rademacher < 0.0 {
        return Err(CertError::InvalidInput(format!(
            "rademacher bound must be non-negative, got {rademacher}"
        )));
    }
    if n == 0 {
        return Err(CertError::InvalidInput(
            "sample size must be positive".into(),
        ));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(CertError::InvalidInput(format!(
            "delta must lie in (0, 1), got {delta}"
        )));
    }
    Ok(2.0 * rademacher + 3.0 * ((2.0 / delta).ln() / (2.0 * n as f64)).sqrt())
}

/// Bound on `R_adv - empirical risk` for the TV-robust class, holding
/// with probability at least `1 - delta`: the generalization gap plus the
/// adversarial gap `eps_tv`.
pub fn adversarial_generalization_bound(
    rad_bound: f64,
    n: usize,
    delta: f64,
    eps_tv: f64,
) -> Result<f64> {
    if !(0.0..=1.0).contains(&eps_tv) {
        return Err(CertError::InvalidInput(format!(
            "eps_tv must lie in [0, 1], got {eps_tv}"
        )));
    }
    Ok(generalization_gap_bound(rad_bound, n, delta)? + eps_tv)
}
