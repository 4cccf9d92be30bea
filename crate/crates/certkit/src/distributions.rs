//! Probability divergences on finite categorical distributions.
//!
//! A randomized classifier maps an input to a distribution over `K` labels;
//! robustness certificates are phrased in terms of a divergence between the
//! output distributions at nearby inputs. This module provides the
//! divergences and the inter-divergence inequalities the certificates rely
//! on.
//!
//! | Divergence        | Definition                                               | Range        |
//! |-------------------|----------------------------------------------------------|--------------|
//! | Total variation   | `sup_Z (rho(Z) - rho'(Z)) = 0.5 * sum_y |rho - rho'|`    | `[0, 1]`     |
//! | Renyi (order β)   | `(β-1)^-1 ln sum_y rho'(y) (rho(y)/rho'(y))^β`           | `[0, inf]`   |
//! | Hellinger         | `sqrt(sum_y (sqrt(rho) - sqrt(rho'))^2)`                 | `[0, sqrt 2]`|
//! | Separation        | `sup_y (1 - rho(y)/rho'(y))`                             | `(-inf, 1]`  |
//! | Wasserstein       | optimal transport cost w.r.t. a ground distance          | `[0, inf)`   |
//!
//! Renyi order `β = 1` is Kullback-Leibler and `β = inf` is the max
//! divergence; both use their dedicated formulas rather than numerical
//! limits.

use serde::{Deserialize, Serialize};

use crate::error::{CertError, Result};

/// Largest deviation of `sum(probs)` from 1 that the constructor repairs by
/// renormalizing; anything worse is rejected.
pub const SUM_TOLERANCE: f64 = 1e-6;

/// Guaranteed bound on `|sum(probs) - 1|` after construction.
pub const NORMALIZED_SUM_TOLERANCE: f64 = 1e-9;

/// A probability distribution over `K >= 2` labels.
///
/// Entries are non-negative and sum to 1 within [`NORMALIZED_SUM_TOLERANCE`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct CategoricalDistribution {
    probs: Vec<f64>,
}

impl CategoricalDistribution {
    /// Builds a distribution over `probs.len()` labels.
    ///
    /// Sums within [`SUM_TOLERANCE`] of 1 are renormalized; larger
    /// deviations, negative or non-finite entries, and fewer than two
    /// labels are rejected.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.len() < 2 {
            return Err(CertError::InvalidDistribution(format!(
                "need at least 2 labels, got {}",
                probs.len()
            )));
        }
        for (i, &p) in probs.iter().enumerate() {
            if !p.is_finite() || p < 0.0 {
                return Err(CertError::InvalidDistribution(format!(
                    "entry {i} is {p}, expected a finite non-negative value"
                )));
            }
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(CertError::InvalidDistribution(format!(
                "entries sum to {sum}, further than {SUM_TOLERANCE} from 1"
            )));
        }
        let probs = probs.into_iter().map(|p| p / sum).collect();
        Ok(CategoricalDistribution { probs })
    }

    /// All mass on `label`.
    pub fn point_mass(num_classes: usize, label: usize) -> Result<Self> {
        if label >= num_classes {
            return Err(CertError::InvalidInput(format!(
                "label {label} out of range for {num_classes} classes"
            )));
        }
        let mut probs = vec![0.0; num_classes];
        probs[label] = 1.0;
        Self::new(probs)
    }

    /// Equal mass on every label.
    pub fn uniform(num_classes: usize) -> Result<Self> {
        Self::new(vec![1.0 / num_classes as f64; num_classes.max(1)])
    }

    /// Empirical frequencies of `counts`; the total must be positive.
    pub fn from_counts(counts: &[u64]) -> Result<Self> {
        let total: u64 = counts.iter().sum();
        if total == 0 {
            return Err(CertError::InvalidDistribution("counts sum to zero".into()));
        }
        Self::new(counts.iter().map(|&c| c as f64 / total as f64).collect())
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn num_classes(&self) -> usize {
        self.probs.len()
    }

    /// Probability of `label`; labels out of range carry no mass.
    pub fn prob(&self, label: usize) -> f64 {
        self.probs.get(label).copied().unwrap_or(0.0)
    }

    /// Largest and second-largest probabilities.
    pub fn top_two(&self) -> (f64, f64) {
        let mut top = f64::NEG_INFINITY;
        let mut second = f64::NEG_INFINITY;
        for &p in &self.probs {
            if p > top {
                second = top;
                top = p;
            } else if p > second {
                second = p;
            }
        }
        (top, second)
    }
}

impl TryFrom<Vec<f64>> for CategoricalDistribution {
    type Error = CertError;

    fn try_from(probs: Vec<f64>) -> Result<Self> {
        CategoricalDistribution::new(probs)
    }
}

impl From<CategoricalDistribution> for Vec<f64> {
    fn from(d: CategoricalDistribution) -> Vec<f64> {
        d.probs
    }
}

/// Ground distance on the label set, for Wasserstein distances.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GroundDistance {
    /// 0/1 distance; Wasserstein then coincides with total variation.
    Trivial,
    /// Labels sit at integer positions on a line, `d(j, k) = |j - k|`.
    OrderedLine,
}

/// Selects which divergence a certificate or query is phrased in.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DivergenceKind {
    TotalVariation,
    /// Renyi divergence of order `beta >= 1` (`1` = KL, `inf` = max).
    Renyi {
        beta: f64,
    },
    Hellinger,
    Separation,
    Wasserstein(GroundDistance),
}

/// Evaluates `kind` between `rho` and `rho_alt`.
pub fn divergence(
    kind: DivergenceKind,
    rho: &CategoricalDistribution,
    rho_alt: &CategoricalDistribution,
) -> Result<f64> {
    match kind {
        DivergenceKind::TotalVariation => tv_distance(rho, rho_alt),
        DivergenceKind::Renyi { beta } => renyi_divergence(rho, rho_alt, beta),
        DivergenceKind::Hellinger => hellinger_distance(rho, rho_alt),
        DivergenceKind::Separation => separation_distance(rho, rho_alt),
        DivergenceKind::Wasserstein(g) => wasserstein_distance(rho, rho_alt, g),
    }
}

fn check_dims(rho: &CategoricalDistribution, rho_alt: &CategoricalDistribution) -> Result<()> {
    if rho.num_classes() != rho_alt.num_classes() {
        return Err(CertError::DimensionMismatch(format!(
            "distributions over {} vs {} labels",
            rho.num_classes(),
            rho_alt.num_classes()
        )));
    }
    Ok(())
}

/// Total variation distance, `0.5 * sum_y |rho(y) - rho'(y)|`.
///
/// Equals the supremum of `rho(Z) - rho'(Z)` over label events `Z`.
pub fn tv_distance(
    rho: &CategoricalDistribution,
    rho_alt: &CategoricalDistribution,
) -> Result<f64> {
    check_dims(rho, rho_alt)?;
    let sum: f64 = rho
        .probs()
        .iter()
        .zip(rho_alt.probs())
        .map(|(p, q)| (p - q).abs())
        .sum();
    Ok(0.5 * sum)
}

/// Renyi divergence of order `beta` from `rho` to `rho_alt`.
///
/// `beta = 1` evaluates the Kullback-Leibler divergence and `beta = inf`
/// the max divergence `sup_y ln(rho(y)/rho'(y))`; orders below 1 are
/// rejected. Labels outside the support of `rho_alt` but inside the
/// support of `rho` make the divergence infinite.
pub fn renyi_divergence(
    rho: &CategoricalDistribution,
    rho_alt: &CategoricalDistribution,
    beta: f64,
) -> Result<f64> {
    check_dims(rho, rho_alt)?;
    if beta.is_nan() || beta < 1.0 {
        return Err(CertError::Domain(format!(
            "Renyi order must satisfy beta >= 1, got {beta}"
        )));
    }
    let pairs = rho.probs().iter().zip(rho_alt.probs());
    let value = if beta == 1.0 {
        let mut kl = 0.0;
        for (&p, &q) in pairs {
            if p > 0.0 {
                if q == 0.0 {
                    return Ok(f64::INFINITY);
                }
                kl += p * (p / q).ln();
            }
        }
        kl
    } else if beta.is_infinite() {
        let mut sup = f64::NEG_INFINITY;
        for (&p, &q) in pairs {
            if p > 0.0 {
                if q == 0.0 {
                    return Ok(f64::INFINITY);
                }
                sup = sup.max((p / q).ln());
            }
        }
        sup
    } else {
        // Log-sum-exp over t_y = beta ln p + (1 - beta) ln q keeps large
        // orders finite where the direct power sum would overflow.
        let mut terms = Vec::with_capacity(rho.num_classes());
        let mut max_t = f64::NEG_INFINITY;
        for (&p, &q) in pairs {
            if p > 0.0 {
                if q == 0.0 {
                    return Ok(f64::INFINITY);
                }
                let t = beta * p.ln() + (1.0 - beta) * q.ln();
                max_t = max_t.max(t);
                terms.push(t);
            }
        }
        let sum: f64 = terms.iter().map(|t| (t - max_t).exp()).sum();
        (max_t + sum.ln()) / (beta - 1.0)
    };
    Ok(value.max(0.0))
}

/// Hellinger distance, `sqrt(sum_y (sqrt(rho(y)) - sqrt(rho'(y)))^2)`.
pub fn hellinger_distance(
    rho: &CategoricalDistribution,
    rho_alt: &CategoricalDistribution,
) -> Result<f64> {
    check_dims(rho, rho_alt)?;
    let sum: f64 = rho
        .probs()
        .iter()
        .zip(rho_alt.probs())
        .map(|(p, q)| {
            let d = p.sqrt() - q.sqrt();
            d * d
        })
        .sum();
    Ok(sum.sqrt())
}

/// Separation distance, `sup_y (1 - rho(y)/rho'(y))`.
///
/// A label with `rho(y) = rho'(y) = 0` contributes 0; a label with
/// `rho'(y) = 0 < rho(y)` contributes `-inf` and never attains the
/// supremum. The raw supremum is reported without clamping.
pub fn separation_distance(
    rho: &CategoricalDistribution,
    rho_alt: &CategoricalDistribution,
) -> Result<f64> {
    check_dims(rho, rho_alt)?;
    let mut sup = f64::NEG_INFINITY;
    for (&p, &q) in rho.probs().iter().zip(rho_alt.probs()) {
        let term = if q == 0.0 {
            if p == 0.0 {
                0.0
            } else {
                f64::NEG_INFINITY
            }
        } else {
            1.0 - p / q
        };
        sup = sup.max(term);
    }
    Ok(sup)
}

/// Wasserstein distance w.r.t. `ground`.
///
/// The trivial ground distance reduces to total variation; on the ordered
/// line the optimal transport cost is the area between the two CDFs.
pub fn wasserstein_distance(
    rho: &CategoricalDistribution,
    rho_alt: &CategoricalDistribution,
    ground: GroundDistance,
) -> Result<f64> {
    check_dims(rho, rho_alt)?;
    match ground {
        GroundDistance::Trivial => tv_distance(rho, rho_alt),
        GroundDistance::OrderedLine => {
            // Unit spacing: the cost is the CDF gap summed over the K-1
            // boundaries between consecutive labels.
            let mut cdf_gap = 0.0;
            let mut total = 0.0;
            for k in 0..rho.num_classes() - 1 {
                cdf_gap += rho.prob(k) - rho_alt.prob(k);
                total += cdf_gap.abs();
            }
            Ok(total)
        }
    }
}

/// Upper bound on `rho(Z)` given `rho'(Z) = q_alt` and a Renyi-`beta`
/// divergence of at most `eps` between the two distributions:
/// `(e^eps * q_alt)^((beta-1)/beta)`.
///
/// Requires `beta > 1`; `beta = inf` uses exponent 1.
pub fn probability_preservation_bound(q_alt: f64, eps: f64, beta: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&q_alt) {
        return Err(CertError::Domain(format!(
            "event probability must lie in [0, 1], got {q_alt}"
        )));
    }
    if eps.is_nan() || eps < 0.0 {
        return Err(CertError::Domain(format!(
            "divergence level must be non-negative, got {eps}"
        )));
    }
    if beta.is_nan() || beta <= 1.0 {
        return Err(CertError::Domain(format!(
            "probability preservation requires beta > 1, got {beta}"
        )));
    }
    if q_alt == 0.0 {
        return Ok(0.0);
    }
    let exponent = if beta.is_infinite() {
        1.0
    } else {
        (beta - 1.0) / beta
    };
    Ok((eps.exp() * q_alt).powf(exponent))
}

/// Upper bound on total variation given a Renyi divergence of at most
/// `eps` (any order `beta >= 1`):
/// `min( (3/2) (sqrt(1 + 4 eps / 9) - 1)^(1/2), (e^(eps+1) - 1)/(e^(eps+1) + 1) )`.
pub fn tv_bound_from_renyi(eps: f64) -> Result<f64> {
    if eps.is_nan() || eps < 0.0 {
        return Err(CertError::Domain(format!(
            "divergence level must be non-negative, got {eps}"
        )));
    }
    let pinsker_branch = 1.5 * ((1.0 + 4.0 * eps / 9.0).sqrt() - 1.0).sqrt();
    // (e^x - 1)/(e^x + 1) written as tanh(x/2) so eps = inf yields 1.
    let vajda_branch = ((eps + 1.0) / 2.0).tanh();
    Ok(pinsker_branch.min(vajda_branch))
}

/// Shannon entropy `-sum_y rho(y) ln rho(y)` in nats.
pub fn shannon_entropy(rho: &CategoricalDistribution) -> f64 {
    rho.probs()
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| -p * p.ln())
        .sum()
}
