//! Synthetic datasets, empirical risk estimation, black-box attacks, and
//! the guaranteed-accuracy curves that tie certificates to measurements.
//!
//! Dataset-level estimators parallelize over points. Per-point randomness
//! comes from RNG streams keyed by the point index, and reductions run in
//! a fixed order, so every result is independent of thread count and
//! scheduling.

pub mod attack;
pub mod curve;

pub use attack::{attack_point, attack_point_at, empirical_adversarial_risk, AttackBudget};
pub use curve::{
    curve_to_csv, guaranteed_accuracy_curve, noise_accuracy_sweep, noisy_classifier, sweep_to_csv,
    CurveConfig, CurveRow, SweepRow,
};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifiers::{
    expected_01_loss, predict_distribution_at, DeterministicClassifier, EvalMode, LinearClassifier,
    RandomizedClassifier,
};
use crate::error::{CertError, Result};

/// How a dataset came to be: a generator descriptor plus its seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub generator: String,
    pub seed: u64,
}

/// A labeled point set inside the box `[-1, 1]^d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DatasetRepr", into = "DatasetRepr")]
pub struct LabeledDataset {
    points: Vec<Vec<f64>>,
    labels: Vec<usize>,
    num_classes: usize,
    provenance: Provenance,
}

impl LabeledDataset {
    pub fn from_parts(
        points: Vec<Vec<f64>>,
        labels: Vec<usize>,
        num_classes: usize,
        generator: String,
        seed: u64,
    ) -> Result<Self> {
        if points.is_empty() {
            return Err(CertError::InvalidInput(
                "a dataset needs at least one point".into(),
            ));
        }
        if points.len() != labels.len() {
            return Err(CertError::DimensionMismatch(format!(
                "{} points vs {} labels",
                points.len(),
                labels.len()
            )));
        }
        let d = points[0].len();
        if d == 0 || points.iter().any(|p| p.len() != d) {
            return Err(CertError::DimensionMismatch(
                "points must be non-empty vectors of equal dimension".into(),
            ));
        }
        if points
            .iter()
            .flatten()
            .any(|v| !v.is_finite() || !(-1.0..=1.0).contains(v))
        {
            return Err(CertError::InvalidInput(
                "all coordinates must lie in [-1, 1]".into(),
            ));
        }
        if num_classes < 2 {
            return Err(CertError::InvalidInput(format!(
                "need at least 2 classes, got {num_classes}"
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(CertError::InvalidInput(format!(
                "label {bad} out of range for {num_classes} classes"
            )));
        }
        Ok(LabeledDataset {
            points,
            labels,
            num_classes,
            provenance: Provenance { generator, seed },
        })
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }
}

#[derive(Serialize, Deserialize)]
struct DatasetRepr {
    points: Vec<Vec<f64>>,
    labels: Vec<usize>,
    num_classes: usize,
    provenance: Provenance,
}

impl TryFrom<DatasetRepr> for LabeledDataset {
    type Error = CertError;
    fn try_from(r: DatasetRepr) -> Result<Self> {
        let mut ds = LabeledDataset::from_parts(
            r.points,
            r.labels,
            r.num_classes,
            r.provenance.generator,
            r.provenance.seed,
        )?;
        ds.provenance.seed = r.provenance.seed;
        Ok(ds)
    }
}

impl From<LabeledDataset> for DatasetRepr {
    fn from(ds: LabeledDataset) -> DatasetRepr {
        DatasetRepr {
            points: ds.points,
            labels: ds.labels,
            num_classes: ds.num_classes,
            provenance: ds.provenance,
        }
    }
}

/// Balanced Gaussian blobs around the given centers, clipped to
/// `[-1, 1]^d`. Point `i` belongs to blob `i mod centers.len()`, so class
/// counts differ by at most one. Deterministic in `seed`.
pub fn generate_mixture_dataset(
    n: usize,
    d: usize,
    centers: &[Vec<f64>],
    sigma_data: f64,
    seed: u64,
) -> Result<LabeledDataset> {
    if centers.len() < 2 {
        return Err(CertError::InvalidInput(
            "need at least two mixture centers".into(),
        ));
    }
    if n < centers.len() {
        return Err(CertError::InvalidInput(format!(
            "need at least one point per center: n = {n}, centers = {}",
            centers.len()
        )));
    }
    if d == 0 || centers.iter().any(|c| c.len() != d) {
        return Err(CertError::DimensionMismatch(
            "centers must match the requested dimension".into(),
        ));
    }
    if centers.iter().flatten().any(|v| !v.is_finite()) {
        return Err(CertError::InvalidInput("centers must be finite".into()));
    }
    for (i, a) in centers.iter().enumerate() {
        if centers[i + 1..].contains(a) {
            return Err(CertError::InvalidInput(format!(
                "duplicate mixture center {a:?}"
            )));
        }
    }
    if !sigma_data.is_finite() || sigma_data < 0.0 {
        return Err(CertError::InvalidInput(format!(
            "sigma_data must be finite and non-negative, got {sigma_data}"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let label = i % centers.len();
        let point: Vec<f64> = centers[label]
            .iter()
            .map(|&c| {
                let z: f64 = StandardNormal.sample(&mut rng);
                (c + sigma_data * z).clamp(-1.0, 1.0)
            })
            .collect();
        points.push(point);
        labels.push(label);
    }
    let descriptor = format!(
        "mixture(n={n},d={d},centers={},sigma_data={sigma_data})",
        centers.len()
    );
    LabeledDataset::from_parts(points, labels, centers.len().max(2), descriptor, seed)
}

/// A mean over dataset points together with the standard error of that
/// mean (per-point scatter only; it does not fold in per-point
/// Monte-Carlo error).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RiskEstimate {
    mean: f64,
    std_error: f64,
    n_points: usize,
}

impl RiskEstimate {
    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn std_error(&self) -> f64 {
        self.std_error
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }
}

fn summarize(losses: &[f64]) -> RiskEstimate {
    let n = losses.len();
    let mean = losses.iter().sum::<f64>() / n as f64;
    let std_error = if n > 1 {
        let var = losses.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        (var / n as f64).sqrt()
    } else {
        0.0
    };
    RiskEstimate {
        mean,
        std_error,
        n_points: n,
    }
}

/// The classifier with its Monte-Carlo sample count replaced by `m`;
/// exact evaluation passes through untouched.
pub(crate) fn with_samples(clf: &RandomizedClassifier, m: usize) -> Result<RandomizedClassifier> {
    match clf.eval_mode() {
        EvalMode::Exact => Ok(clf.clone()),
        EvalMode::MonteCarlo { seed, .. } => {
            clf.with_eval_mode(EvalMode::MonteCarlo { samples: m, seed })
        }
    }
}

/// Mean expected 0-1 loss over the dataset, estimated with `m` samples
/// per point (ignored under exact evaluation). Point `i` uses RNG stream
/// `i`.
pub fn empirical_risk(
    clf: &RandomizedClassifier,
    dataset: &LabeledDataset,
    m: usize,
) -> Result<RiskEstimate> {
    if m == 0 {
        return Err(CertError::InvalidInput(
            "need at least one sample per point".into(),
        ));
    }
    let clf = with_samples(clf, m)?;
    let losses: Vec<f64> = dataset
        .points()
        .par_iter()
        .zip(dataset.labels().par_iter())
        .enumerate()
        .map(|(i, (x, &y))| -> Result<f64> {
            let est = predict_distribution_at(&clf, x, i as u64)?;
            expected_01_loss(&est, y)
        })
        .collect::<Result<_>>()?;
    Ok(summarize(&losses))
}

/// Standard deviation of the benchmark's Gaussian blobs.
pub const BENCHMARK_SIGMA_DATA: f64 = 0.2;

/// The fixed two-blob benchmark: centers `(+0.5, 0)` and `(-0.5, 0)` in
/// the plane with data noise [`BENCHMARK_SIGMA_DATA`].
pub fn benchmark_dataset(n: usize, seed: u64) -> Result<LabeledDataset> {
    generate_mixture_dataset(
        n,
        2,
        &[vec![0.5, 0.0], vec![-0.5, 0.0]],
        BENCHMARK_SIGMA_DATA,
        seed,
    )
}

/// Least-squares linear fit for a two-class dataset: regresses targets
/// `+1` (class 0) and `-1` (class 1) on the affine features `[x, 1]` via
/// the normal equations, then classifies by the sign of the fit.
pub fn fit_linear_least_squares(dataset: &LabeledDataset) -> Result<DeterministicClassifier> {
    if dataset.num_classes() != 2 {
        return Err(CertError::InvalidInput(format!(
            "least-squares fit handles 2 classes, got {}",
            dataset.num_classes()
        )));
    }
    let n = dataset.len();
    let d = dataset.dim();
    let mut design = nalgebra::DMatrix::zeros(n, d + 1);
    let mut targets = nalgebra::DVector::zeros(n);
    for (i, (x, &y)) in dataset.points().iter().zip(dataset.labels()).enumerate() {
        for (j, &v) in x.iter().enumerate() {
            design[(i, j)] = v;
        }
        design[(i, d)] = 1.0;
        targets[i] = 1.0 - 2.0 * y as f64;
    }
    let gram = design.transpose() * &design;
    let rhs = design.transpose() * targets;
    let sol = gram.lu().solve(&rhs).ok_or_else(|| {
        CertError::InvalidInput("degenerate design matrix in least-squares fit".into())
    })?;
    let w: Vec<f64> = sol.as_slice()[..d].to_vec();
    let b = sol[d];
    Ok(DeterministicClassifier::Linear(LinearClassifier::binary(
        w, b,
    )?))
}
