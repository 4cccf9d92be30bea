//! Risk-gap bounds, mode-preservation certificates, and the
//! low-confidence mass bound for certified randomized classifiers.
//!
//! Three routes bound the adversarial risk of an `(alpha, eps)`-robust
//! classifier in terms of its clean risk `R`:
//!
//! * total variation: `R_adv <= R + eps`,
//! * Renyi, multiplicative: `R_adv <= (e^eps * R)^((beta-1)/beta)`,
//! * Renyi, additive: `R_adv - R <= 1 - e^{-eps} * E[e^{-H(p(x))}]`.
//!
//! All adversarial-risk bounds clamp to `[R, 1]`: the zero perturbation is
//! always feasible, so `R_adv >= R`, and risks cap at 1.

use rayon::prelude::*;
use serde::Serialize;

use crate::classifiers::{
    mode_classifier, predict_distribution_at, DistributionEstimate, EvalMode, RandomizedClassifier,
};
use crate::distributions::{shannon_entropy, CategoricalDistribution, DivergenceKind};
use crate::error::{CertError, Result};
use crate::harness::LabeledDataset;
use crate::smoothing::RobustnessCertificate;

fn check_unit_interval(value: f64, name: &str) -> Result<()> {
    if !(0.0..=1.0).contains(&value) {
        return Err(CertError::InvalidInput(format!(
            "{name} must lie in [0, 1], got {value}"
        )));
    }
    Ok(())
}

/// Adversarial-risk bound for a TV-robust classifier:
/// `min(1, clean_risk + eps_tv)`.
pub fn tv_risk_gap_bound(clean_risk: f64, eps_tv: f64) -> Result<f64> {
    check_unit_interval(clean_risk, "clean_risk")?;
    check_unit_interval(eps_tv, "eps_tv")?;
    Ok((clean_risk + eps_tv).min(1.0))
}

/// Adversarial-risk bound for a Renyi-robust classifier:
/// `min(1, (e^eps * clean_risk)^((beta-1)/beta))` for `beta > 1`.
pub fn renyi_multiplicative_bound(clean_risk: f64, eps: f64, beta: f64) -> Result<f64> {
    check_unit_interval(clean_risk, "clean_risk")?;
    if eps.is_nan() || eps < 0.0 {
        return Err(CertError::InvalidInput(format!(
            "eps must be non-negative, got {eps}"
        )));
    }
    if beta.is_nan() || beta <= 1.0 {
        return Err(CertError::InvalidInput(format!(
            "the multiplicative bound needs beta > 1, got {beta}"
        )));
    }
    let exponent = if beta.is_infinite() {
        1.0
    } else {
        (beta - 1.0) / beta
    };
    Ok((eps.exp() * clean_risk).powf(exponent).min(1.0))
}

/// Bound on the adversarial risk gap `R_adv - R` of a Renyi-robust
/// classifier: `1 - e^{-eps} * exp_neg_entropy`, where `exp_neg_entropy`
/// estimates `E[e^{-H(p(x))}]` over the data marginal.
pub fn renyi_additive_gap_bound(eps: f64, exp_neg_entropy: f64) -> Result<f64> {
    if eps.is_nan() || eps < 0.0 {
        return Err(CertError::InvalidInput(format!(
            "eps must be non-negative, got {eps}"
        )));
    }
    check_unit_interval(exp_neg_entropy, "exp_neg_entropy")?;
    Ok(1.0 - (-eps).exp() * exp_neg_entropy)
}

/// Average of `e^{-H(p(x))}` over the given points, with `p(x)` estimated
/// by `m` Monte-Carlo samples (or exactly, when the classifier evaluates
/// exactly). Each point uses its index as RNG stream, so the value is
/// independent of evaluation order.
pub fn estimate_exp_neg_entropy(
    clf: &RandomizedClassifier,
    xs: &[Vec<f64>],
    m: usize,
) -> Result<f64> {
    if xs.is_empty() {
        return Err(CertError::InvalidInput(
            "need at least one point to estimate the entropy term".into(),
        ));
    }
    if m == 0 {
        return Err(CertError::InvalidInput(
            "need at least one sample per point".into(),
        ));
    }
    let eval = match clf.eval_mode() {
        EvalMode::Exact => EvalMode::Exact,
        EvalMode::MonteCarlo { seed, .. } => EvalMode::MonteCarlo { samples: m, seed },
    };
    let clf = clf.with_eval_mode(eval)?;
    let terms: Vec<f64> = xs
        .par_iter()
        .enumerate()
        .map(|(i, x)| -> Result<f64> {
            let est = predict_distribution_at(&clf, x, i as u64)?;
            Ok((-shannon_entropy(est.distribution())).exp())
        })
        .collect::<Result<_>>()?;
    Ok(terms.iter().sum::<f64>() / terms.len() as f64)
}

/// Top-two probabilities of an estimate, shrunk by its confidence radius:
/// the top probability decreases by `radius`, the runner-up increases by
/// it. Exact estimates pass through unchanged.
fn shrunken_top_two(est: &DistributionEstimate) -> (f64, f64) {
    let (p1, p2) = est.distribution().top_two();
    let r = est.confidence_radius();
    (p1 - r, p2 + r)
}

/// Absolute slack on the inclusive certification boundary, absorbing the
/// binary representation error of decimal probabilities and levels so
/// that exact-boundary cases certify as the inequality's `>=` intends.
const BOUNDARY_SLACK: f64 = 1e-12;

/// Mode preservation under a TV certificate: every distribution within TV
/// distance `eps_tv` keeps the same mode iff
/// `p_(1) >= p_(2) + 2 * eps_tv` (inclusive).
pub fn mode_preservation_tv(dist: &CategoricalDistribution, eps_tv: f64) -> Result<bool> {
    check_unit_interval(eps_tv, "eps_tv")?;
    let (p1, p2) = dist.top_two();
    Ok(p1 - p2 >= 2.0 * eps_tv - BOUNDARY_SLACK)
}

/// [`mode_preservation_tv`] on a Monte-Carlo estimate: the margin is first
/// shrunk by twice the confidence radius, keeping the decision
/// conservative under sampling noise.
pub fn mode_preservation_tv_estimate(est: &DistributionEstimate, eps_tv: f64) -> Result<bool> {
    check_unit_interval(eps_tv, "eps_tv")?;
    let (p1, p2) = shrunken_top_two(est);
    Ok(p1 - p2 >= 2.0 * eps_tv - BOUNDARY_SLACK)
}

/// Mode preservation under a Renyi certificate of level `beta > 1`:
/// `p_(1)^(beta/(beta-1)) >= e^((2 - 1/beta) * eps) * p_(2)^((beta-1)/beta)`,
/// with the asymmetric exponents taken as stated. At `beta = inf` both
/// exponents degenerate to 1 and the factor to `e^{2 eps}`.
pub fn mode_preservation_renyi(
    dist: &CategoricalDistribution,
    eps: f64,
    beta: f64,
) -> Result<bool> {
    let (p1, p2) = dist.top_two();
    mode_preservation_renyi_raw(p1, p2, eps, beta)
}

/// [`mode_preservation_renyi`] with the top-two probabilities shrunk by
/// the estimate's confidence radius.
pub fn mode_preservation_renyi_estimate(
    est: &DistributionEstimate,
    eps: f64,
    beta: f64,
) -> Result<bool> {
    let (p1, p2) = shrunken_top_two(est);
    mode_preservation_renyi_raw(p1.max(0.0), p2.min(1.0), eps, beta)
}

fn mode_preservation_renyi_raw(p1: f64, p2: f64, eps: f64, beta: f64) -> Result<bool> {
    if eps.is_nan() || eps < 0.0 {
        return Err(CertError::InvalidInput(format!(
            "eps must be non-negative, got {eps}"
        )));
    }
    if beta.is_nan() || beta <= 1.0 {
        return Err(CertError::InvalidInput(format!(
            "mode preservation under Renyi robustness needs beta > 1, got {beta}"
        )));
    }
    let (exp1, exp2, rate) = if beta.is_infinite() {
        (1.0, 1.0, 2.0)
    } else {
        (beta / (beta - 1.0), (beta - 1.0) / beta, 2.0 - 1.0 / beta)
    };
    Ok(p1.powf(exp1) >= (rate * eps).exp() * p2.powf(exp2))
}

/// Empirical frequency of dataset points that the classifier gets right
/// yet cannot certify: correctly mode-classified but failing
/// [`mode_preservation_tv`] at `eps_tv` (with Monte-Carlo margins shrunk
/// by confidence radii). Bounds the mass on which an adversary within a
/// TV certificate of `eps_tv` could still flip the mode.
pub fn low_confidence_mass_bound(
    clf: &RandomizedClassifier,
    dataset: &LabeledDataset,
    eps_tv: f64,
) -> Result<f64> {
    check_unit_interval(eps_tv, "eps_tv")?;
    let flags: Vec<bool> = dataset
        .points()
        .par_iter()
        .zip(dataset.labels().par_iter())
        .enumerate()
        .map(|(i, (x, &y))| -> Result<bool> {
            let est = predict_distribution_at(clf, x, i as u64)?;
            let correct = mode_classifier(&est) == y;
            Ok(correct && !mode_preservation_tv_estimate(&est, eps_tv)?)
        })
        .collect::<Result<_>>()?;
    Ok(flags.iter().filter(|&&f| f).count() as f64 / flags.len() as f64)
}

/// Text recorded in every report: the entropy term averages over the
/// empirical sample, not the true data marginal.
pub const MARGINAL_NOTE: &str =
    "exp_neg_entropy averages over the empirical sample in place of the true data marginal";

/// The clean risk together with every applicable adversarial-risk bound
/// and their minimum.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RiskGapReport {
    clean_risk: f64,
    /// TV robustness level `eps_tv`; the TV route bounds the adversarial
    /// risk by `clean_risk + tv_gap`.
    tv_gap: Option<f64>,
    renyi_mult_bound: Option<f64>,
    renyi_add_gap: Option<f64>,
    exp_neg_entropy: Option<f64>,
    best_adv_risk_bound: f64,
    note: &'static str,
}

impl RiskGapReport {
    pub fn clean_risk(&self) -> f64 {
        self.clean_risk
    }

    pub fn tv_gap(&self) -> Option<f64> {
        self.tv_gap
    }

    pub fn renyi_mult_bound(&self) -> Option<f64> {
        self.renyi_mult_bound
    }

    pub fn renyi_add_gap(&self) -> Option<f64> {
        self.renyi_add_gap
    }

    pub fn exp_neg_entropy(&self) -> Option<f64> {
        self.exp_neg_entropy
    }

    /// Minimum of the available adversarial-risk bounds, clamped to
    /// `[clean_risk, 1]`. Vacuously 1 when no bound applies.
    pub fn best_adv_risk_bound(&self) -> f64 {
        self.best_adv_risk_bound
    }
}

/// Combines the available certificates into a [`RiskGapReport`].
///
/// The TV certificate feeds the additive TV bound; the Renyi certificate
/// feeds the multiplicative bound (only for `beta > 1`; at `beta = 1` the
/// exponent degenerates and the bound is disabled) and, together with
/// `exp_neg_entropy`, the additive entropy bound. Certificates must carry
/// matching radii and divergence kinds.
pub fn build_risk_gap_report(
    clean_risk: f64,
    cert_tv: Option<&RobustnessCertificate>,
    cert_renyi: Option<&RobustnessCertificate>,
    exp_neg_entropy: Option<f64>,
) -> Result<RiskGapReport> {
    check_unit_interval(clean_risk, "clean_risk")?;
    if let Some(e) = exp_neg_entropy {
        check_unit_interval(e, "exp_neg_entropy")?;
    }
    if let Some(cert) = cert_tv {
        if cert.divergence() != DivergenceKind::TotalVariation {
            return Err(CertError::InvalidInput(format!(
                "cert_tv carries {:?}, expected total variation",
                cert.divergence()
            )));
        }
    }
    let renyi_beta = match cert_renyi {
        None => None,
        Some(cert) => match cert.divergence() {
            DivergenceKind::Renyi { beta } => Some(beta),
            other => {
                return Err(CertError::InvalidInput(format!(
                    "cert_renyi carries {other:?}, expected a Renyi divergence"
                )))
            }
        },
    };
    if let (Some(a), Some(b)) = (cert_tv, cert_renyi) {
        if a.radius() != b.radius() {
            return Err(CertError::InvalidInput(format!(
                "certificate radii differ: {} vs {}",
                a.radius(),
                b.radius()
            )));
        }
    }

    let tv_gap = cert_tv.map(|c| c.epsilon());
    let renyi_mult_bound = match (cert_renyi, renyi_beta) {
        (Some(cert), Some(beta)) if beta > 1.0 => Some(renyi_multiplicative_bound(
            clean_risk,
            cert.epsilon(),
            beta,
        )?),
        _ => None,
    };
    let renyi_add_gap = match (cert_renyi, exp_neg_entropy) {
        (Some(cert), Some(term)) => Some(renyi_additive_gap_bound(cert.epsilon(), term)?),
        _ => None,
    };

    let mut best = f64::INFINITY;
    if let Some(gap) = tv_gap {
        best = best.min(tv_risk_gap_bound(clean_risk, gap.min(1.0))?);
    }
    if let Some(bound) = renyi_mult_bound {
        best = best.min(bound);
    }
    if let Some(gap) = renyi_add_gap {
        best = best.min(clean_risk + gap);
    }
    let best_adv_risk_bound = best.clamp(clean_risk, 1.0);

    Ok(RiskGapReport {
        clean_risk,
        tv_gap,
        renyi_mult_bound,
        renyi_add_gap,
        exp_neg_entropy,
        best_adv_risk_bound,
        note: MARGINAL_NOTE,
    })
}
