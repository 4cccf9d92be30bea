//! Derivative-free attacks that lower-bound the adversarial risk.
//!
//! The search draws random restarts uniformly from the `lp` ball, probes
//! the ball's axis extremes, and refines each candidate by coordinate
//! descent with shrinking steps. Every candidate is projected into the
//! ball first and the data box `[-1, 1]^d` second; projecting onto the
//! box never increases a coordinate's magnitude, so the ball constraint
//! survives. Candidate losses share one RNG stream (common random
//! numbers), which stabilizes comparisons between perturbations.
//!
//! Restarts consume a fixed number of draws from a sequential stream, so
//! enlarging the restart budget replays the smaller budget's trials
//! first: the attack is monotone in its budget on a fixed instance.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{summarize, with_samples, LabeledDataset, RiskEstimate};
use crate::classifiers::{expected_01_loss, predict_distribution_at, RandomizedClassifier};
use crate::error::{CertError, Result};
use crate::norm::{lp_norm, NormOrder};
use crate::smoothing::Perturbation;

/// Search effort for [`attack_point`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "BudgetRepr", into = "BudgetRepr")]
pub struct AttackBudget {
    random_restarts: usize,
    refinement_steps: usize,
    mc_samples_per_query: usize,
    seed: u64,
}

impl AttackBudget {
    pub fn new(
        random_restarts: usize,
        refinement_steps: usize,
        mc_samples_per_query: usize,
        seed: u64,
    ) -> Result<Self> {
        if random_restarts == 0 {
            return Err(CertError::InvalidInput(
                "need at least one random restart".into(),
            ));
        }
        if mc_samples_per_query == 0 {
            return Err(CertError::InvalidInput(
                "need at least one sample per query".into(),
            ));
        }
        Ok(AttackBudget {
            random_restarts,
            refinement_steps,
            mc_samples_per_query,
            seed,
        })
    }

    pub fn random_restarts(&self) -> usize {
        self.random_restarts
    }

    pub fn refinement_steps(&self) -> usize {
        self.refinement_steps
    }

    pub fn mc_samples_per_query(&self) -> usize {
        self.mc_samples_per_query
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn with_seed(self, seed: u64) -> Self {
        AttackBudget { seed, ..self }
    }
}

#[derive(Serialize, Deserialize)]
struct BudgetRepr {
    random_restarts: usize,
    refinement_steps: usize,
    mc_samples_per_query: usize,
    seed: u64,
}

impl TryFrom<BudgetRepr> for AttackBudget {
    type Error = CertError;
    fn try_from(r: BudgetRepr) -> Result<Self> {
        AttackBudget::new(
            r.random_restarts,
            r.refinement_steps,
            r.mc_samples_per_query,
            r.seed,
        )
    }
}

impl From<AttackBudget> for BudgetRepr {
    fn from(b: AttackBudget) -> BudgetRepr {
        BudgetRepr {
            random_restarts: b.random_restarts,
            refinement_steps: b.refinement_steps,
            mc_samples_per_query: b.mc_samples_per_query,
            seed: b.seed,
        }
    }
}

/// Projects `tau` into the `lp` ball of radius `alpha`, then pulls
/// `x + tau` back into `[-1, 1]^d`. The box step only shrinks coordinate
/// magnitudes, so the ball constraint is preserved.
fn project(tau: &mut [f64], x: &[f64], alpha: f64, p: NormOrder) {
    if p == NormOrder::LINF {
        for t in tau.iter_mut() {
            *t = t.clamp(-alpha, alpha);
        }
    } else {
        let norm = lp_norm(tau, p);
        if norm > alpha && norm > 0.0 {
            let scale = alpha / norm;
            for t in tau.iter_mut() {
                *t *= scale;
            }
        }
    }
    for (t, &xi) in tau.iter_mut().zip(x) {
        *t = (xi + *t).clamp(-1.0, 1.0) - xi;
    }
}

/// One uniform draw from the `lp` ball of radius `alpha`. Consumes a
/// fixed number of RNG values per call for each `p`.
fn sample_ball(rng: &mut ChaCha8Rng, d: usize, alpha: f64, p: NormOrder) -> Vec<f64> {
    if p == NormOrder::LINF {
        return (0..d).map(|_| rng.random_range(-alpha..=alpha)).collect();
    }
    if p == NormOrder::L2 {
        let z: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
        let u: f64 = rng.random();
        let norm = z.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return vec![0.0; d];
        }
        let r = alpha * u.powf(1.0 / d as f64);
        return z.iter().map(|v| v * r / norm).collect();
    }
    // l1: Dirichlet(1, ..., 1) magnitudes via normalized exponentials,
    // random signs, and the radial correction u^(1/d).
    let e: Vec<f64> = (0..d).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
    let signs: Vec<f64> = (0..d)
        .map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 })
        .collect();
    let u: f64 = rng.random();
    let total: f64 = e.iter().sum();
    if total == 0.0 {
        return vec![0.0; d];
    }
    let r = alpha * u.powf(1.0 / d as f64);
    e.iter()
        .zip(&signs)
        .map(|(ei, s)| s * r * ei / total)
        .collect()
}

fn check_norm_order(p: NormOrder) -> Result<()> {
    if p == NormOrder::L1 || p == NormOrder::L2 || p == NormOrder::LINF {
        Ok(())
    } else {
        Err(CertError::Capability(format!(
            "attack supports norms 1, 2, and inf, got {p}"
        )))
    }
}

/// Best perturbation found for point `x` with true label `y`, searching
/// the `lp` ball of radius `alpha`; uses RNG stream 0. See
/// [`attack_point_at`].
pub fn attack_point(
    clf: &RandomizedClassifier,
    x: &[f64],
    y: usize,
    alpha: f64,
    p: NormOrder,
    budget: &AttackBudget,
) -> Result<(Perturbation, f64)> {
    attack_point_at(clf, x, y, alpha, p, budget, 0)
}

/// [`attack_point`] with an explicit RNG stream, used by dataset-level
/// drivers to key randomness off the point index.
///
/// Returns the perturbation and the expected 0-1 loss at `x + tau`. The
/// zero perturbation is always a candidate, so the returned loss never
/// falls below the clean loss under the same evaluation stream; the
/// returned value lower-bounds the true supremum over the ball.
pub fn attack_point_at(
    clf: &RandomizedClassifier,
    x: &[f64],
    y: usize,
    alpha: f64,
    p: NormOrder,
    budget: &AttackBudget,
    stream: u64,
) -> Result<(Perturbation, f64)> {
    check_norm_order(p)?;
    if !alpha.is_finite() || alpha < 0.0 {
        return Err(CertError::InvalidInput(format!(
            "perturbation radius must be finite and non-negative, got {alpha}"
        )));
    }
    if x.iter().any(|v| !(-1.0..=1.0).contains(v)) {
        return Err(CertError::InvalidInput(
            "attack point must lie in [-1, 1]^d".into(),
        ));
    }
    if y >= clf.num_classes() {
        return Err(CertError::InvalidInput(format!(
            "label {y} out of range for {} classes",
            clf.num_classes()
        )));
    }
    let d = clf.input_dim();
    if x.len() != d {
        return Err(CertError::DimensionMismatch(format!(
            "input has dimension {}, classifier expects {d}",
            x.len()
        )));
    }

    let eval_clf = with_samples(clf, budget.mc_samples_per_query)?;
    // Common random numbers: every candidate is scored on the same
    // evaluation stream.
    let loss_at = |tau: &[f64]| -> Result<f64> {
        let point: Vec<f64> = x.iter().zip(tau).map(|(xi, t)| xi + t).collect();
        let est = predict_distribution_at(&eval_clf, &point, stream)?;
        expected_01_loss(&est, y)
    };

    let mut best_tau = vec![0.0; d];
    let mut best_loss = loss_at(&best_tau)?;
    if alpha == 0.0 {
        return Ok((Perturbation::new(best_tau)?, best_loss));
    }

    let consider = |tau: Vec<f64>, best_tau: &mut Vec<f64>, best_loss: &mut f64| -> Result<()> {
        let loss = loss_at(&tau)?;
        if loss > *best_loss {
            *best_loss = loss;
            *best_tau = tau;
        }
        Ok(())
    };

    let refine = |start: Vec<f64>, best_tau: &mut Vec<f64>, best_loss: &mut f64| -> Result<()> {
        let mut current = start;
        let mut current_loss = loss_at(&current)?;
        if current_loss > *best_loss {
            *best_loss = current_loss;
            *best_tau = current.clone();
        }
        let mut step = alpha / 2.0;
        for _ in 0..budget.refinement_steps {
            for c in 0..d {
                for sign in [1.0, -1.0] {
                    let mut cand = current.clone();
                    cand[c] += sign * step;
                    project(&mut cand, x, alpha, p);
                    let loss = loss_at(&cand)?;
                    if loss > current_loss {
                        current_loss = loss;
                        current = cand;
                    }
                }
            }
            step /= 2.0;
        }
        if current_loss > *best_loss {
            *best_loss = current_loss;
            *best_tau = current;
        }
        Ok(())
    };

    // Deterministic probes at the ball's axis extremes catch flat 0-1
    // loss landscapes that defeat local search.
    for c in 0..d {
        for sign in [1.0, -1.0] {
            let mut probe = vec![0.0; d];
            probe[c] = sign * alpha;
            project(&mut probe, x, alpha, p);
            consider(probe, &mut best_tau, &mut best_loss)?;
        }
    }

    let mut search_rng = ChaCha8Rng::seed_from_u64(budget.seed);
    search_rng.set_stream(stream);
    for _ in 0..budget.random_restarts {
        let mut start = sample_ball(&mut search_rng, d, alpha, p);
        project(&mut start, x, alpha, p);
        refine(start, &mut best_tau, &mut best_loss)?;
    }

    debug_assert!(lp_norm(&best_tau, p) <= alpha + 1e-9);
    Ok((Perturbation::new(best_tau)?, best_loss))
}

/// Mean attacked loss over the dataset: a lower bound on the adversarial
/// risk at radius `alpha`. Point `i` uses RNG stream `i` for both its
/// search and its loss evaluations, so the result is schedule-independent
/// and, at `alpha = 0`, coincides with [`super::empirical_risk`] at
/// `m = mc_samples_per_query`.
pub fn empirical_adversarial_risk(
    clf: &RandomizedClassifier,
    dataset: &LabeledDataset,
    alpha: f64,
    p: NormOrder,
    budget: &AttackBudget,
) -> Result<RiskEstimate> {
    let losses: Vec<f64> = dataset
        .points()
        .par_iter()
        .zip(dataset.labels().par_iter())
        .enumerate()
        .map(|(i, (x, &y))| -> Result<f64> {
            let (_, loss) = attack_point_at(clf, x, y, alpha, p, budget, i as u64)?;
            Ok(loss)
        })
        .collect::<Result<_>>()?;
    Ok(summarize(&losses))
}
