//! Deterministic base classifiers and their noise-randomized wrappers.
//!
//! A [`RandomizedClassifier`] pairs a deterministic base with an optional
//! Gaussian noise layer and an evaluation mode. Output distributions are
//! computed exactly where a closed form exists (noise-free bases; linear
//! two-class bases under isotropic noise; 2-D grid tables) and by seeded
//! Monte Carlo everywhere else.
//!
//! Monte-Carlo draws come from a counter-based generator keyed by
//! `(seed, stream)`, where callers assign one stream per evaluation point.
//! Results are therefore reproducible and independent of how work is
//! scheduled across threads.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::distributions::CategoricalDistribution;
use crate::error::{CertError, Result};
use crate::smoothing::{std_normal_cdf, GaussianNoiseSpec};

/// Failure probability of the simultaneous Hoeffding confidence radius
/// attached to Monte-Carlo estimates.
pub const CONFIDENCE_DELTA: f64 = 1e-3;

/// Linear multi-class scorer: label = argmax of `weights * x + bias`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LinearRepr", into = "LinearRepr")]
pub struct LinearClassifier {
    /// One row of length `d` per class.
    weights: Vec<Vec<f64>>,
    bias: Vec<f64>,
}

impl LinearClassifier {
    pub fn new(weights: Vec<Vec<f64>>, bias: Vec<f64>) -> Result<Self> {
        if weights.len() < 2 {
            return Err(CertError::InvalidInput(format!(
                "need at least 2 classes, got {}",
                weights.len()
            )));
        }
        if weights.len() != bias.len() {
            return Err(CertError::DimensionMismatch(format!(
                "{} weight rows vs {} bias entries",
                weights.len(),
                bias.len()
            )));
        }
        let d = weights[0].len();
        if d == 0 || weights.iter().any(|row| row.len() != d) {
            return Err(CertError::InvalidInput(
                "weight rows must be non-empty and of equal length".into(),
            ));
        }
        if weights
            .iter()
            .flatten()
            .chain(&bias)
            .any(|v| !v.is_finite())
        {
            return Err(CertError::InvalidInput(
                "weights and bias must be finite".into(),
            ));
        }
        Ok(LinearClassifier { weights, bias })
    }

    /// Two-class classifier from a single separating hyperplane; class 0
    /// scores `w . x + b`, class 1 scores 0.
    pub fn binary(w: Vec<f64>, b: f64) -> Result<Self> {
        let zeros = vec![0.0; w.len()];
        Self::new(vec![w, zeros], vec![b, 0.0])
    }

    pub fn num_classes(&self) -> usize {
        self.weights.len()
    }

    pub fn input_dim(&self) -> usize {
        self.weights[0].len()
    }

    pub fn weights(&self) -> &[Vec<f64>] {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    fn scores(&self, x: &[f64]) -> Vec<f64> {
        self.weights
            .iter()
            .zip(&self.bias)
            .map(|(row, b)| row.iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>() + b)
            .collect()
    }
}

#[derive(Serialize, Deserialize)]
struct LinearRepr {
    weights: Vec<Vec<f64>>,
    bias: Vec<f64>,
}

impl TryFrom<LinearRepr> for LinearClassifier {
    type Error = CertError;
    fn try_from(r: LinearRepr) -> Result<Self> {
        LinearClassifier::new(r.weights, r.bias)
    }
}

impl From<LinearClassifier> for LinearRepr {
    fn from(c: LinearClassifier) -> LinearRepr {
        LinearRepr {
            weights: c.weights,
            bias: c.bias,
        }
    }
}

/// Label lookup table over a 2-D lattice.
///
/// Cell `(ix, iy)` covers
/// `[origin + ix * cell_size, origin + (ix+1) * cell_size)` per axis;
/// lookups outside the declared box clamp to the nearest boundary cell, so
/// the induced label partition of the plane extends the boundary cells to
/// infinity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridTableRepr", into = "GridTableRepr")]
pub struct GridTableClassifier {
    origin: [f64; 2],
    cell_size: f64,
    /// Cells per axis, `[nx, ny]`.
    shape: [usize; 2],
    /// Row-major, `labels[iy * nx + ix]`.
    labels: Vec<usize>,
    num_classes: usize,
}

impl GridTableClassifier {
    pub fn new(
        origin: [f64; 2],
        cell_size: f64,
        shape: [usize; 2],
        labels: Vec<usize>,
        num_classes: usize,
    ) -> Result<Self> {
        if !origin.iter().all(|v| v.is_finite()) || !cell_size.is_finite() || cell_size <= 0.0 {
            return Err(CertError::InvalidInput(
                "grid origin must be finite and cell size positive".into(),
            ));
        }
        if shape[0] == 0 || shape[1] == 0 {
            return Err(CertError::InvalidInput(
                "grid shape must be non-zero".into(),
            ));
        }
        if labels.len() != shape[0] * shape[1] {
            return Err(CertError::DimensionMismatch(format!(
                "{} labels for a {}x{} grid",
                labels.len(),
                shape[0],
                shape[1]
            )));
        }
        if num_classes < 2 {
            return Err(CertError::InvalidInput(format!(
                "need at least 2 classes, got {num_classes}"
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(CertError::InvalidInput(format!(
                "cell label {bad} out of range for {num_classes} classes"
            )));
        }
        Ok(GridTableClassifier {
            origin,
            cell_size,
            shape,
            labels,
            num_classes,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn shape(&self) -> [usize; 2] {
        self.shape
    }

    /// Declared input box as `[lo, hi]` per axis.
    pub fn bounds(&self) -> [[f64; 2]; 2] {
        [
            [
                self.origin[0],
                self.origin[0] + self.shape[0] as f64 * self.cell_size,
            ],
            [
                self.origin[1],
                self.origin[1] + self.shape[1] as f64 * self.cell_size,
            ],
        ]
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        let b = self.bounds();
        x.len() == 2 && (b[0][0]..=b[0][1]).contains(&x[0]) && (b[1][0]..=b[1][1]).contains(&x[1])
    }

    fn cell_index(&self, coord: f64, axis: usize) -> usize {
        let raw = ((coord - self.origin[axis]) / self.cell_size).floor();
        raw.clamp(0.0, (self.shape[axis] - 1) as f64) as usize
    }

    fn classify(&self, x: &[f64]) -> usize {
        let ix = self.cell_index(x[0], 0);
        let iy = self.cell_index(x[1], 1);
        self.labels[iy * self.shape[0] + ix]
    }

    /// Extent of cell `index` along `axis`, with boundary cells extended
    /// to infinity to match the clamping lookup.
    fn cell_extent(&self, index: usize, axis: usize) -> (f64, f64) {
        let lo = if index == 0 {
            f64::NEG_INFINITY
        } else {
            self.origin[axis] + index as f64 * self.cell_size
        };
        let hi = if index + 1 == self.shape[axis] {
            f64::INFINITY
        } else {
            self.origin[axis] + (index + 1) as f64 * self.cell_size
        };
        (lo, hi)
    }
}

#[derive(Serialize, Deserialize)]
struct GridTableRepr {
    origin: [f64; 2],
    cell_size: f64,
    shape: [usize; 2],
    labels: Vec<usize>,
    num_classes: usize,
}

impl TryFrom<GridTableRepr> for GridTableClassifier {
    type Error = CertError;
    fn try_from(r: GridTableRepr) -> Result<Self> {
        GridTableClassifier::new(r.origin, r.cell_size, r.shape, r.labels, r.num_classes)
    }
}

impl From<GridTableClassifier> for GridTableRepr {
    fn from(c: GridTableClassifier) -> GridTableRepr {
        GridTableRepr {
            origin: c.origin,
            cell_size: c.cell_size,
            shape: c.shape,
            labels: c.labels,
            num_classes: c.num_classes,
        }
    }
}

/// A deterministic base classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum DeterministicClassifier {
    Linear(LinearClassifier),
    #[serde(rename = "grid")]
    GridTable(GridTableClassifier),
}

impl DeterministicClassifier {
    pub fn num_classes(&self) -> usize {
        match self {
            DeterministicClassifier::Linear(c) => c.num_classes(),
            DeterministicClassifier::GridTable(c) => c.num_classes(),
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            DeterministicClassifier::Linear(c) => c.input_dim(),
            DeterministicClassifier::GridTable(_) => 2,
        }
    }

    /// Label at `x`; ties in linear scores resolve to the smallest index.
    pub fn classify(&self, x: &[f64]) -> Result<usize> {
        if x.len() != self.input_dim() {
            return Err(CertError::DimensionMismatch(format!(
                "input has dimension {}, classifier expects {}",
                x.len(),
                self.input_dim()
            )));
        }
        Ok(match self {
            DeterministicClassifier::Linear(c) => argmax(&c.scores(x)),
            DeterministicClassifier::GridTable(c) => c.classify(x),
        })
    }
}

/// Index of the largest value; ties go to the smallest index.
pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// How output distributions are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum EvalMode {
    /// Closed-form evaluation; only some configurations support it.
    Exact,
    /// `samples` seeded draws per evaluation point.
    MonteCarlo { samples: usize, seed: u64 },
}

/// A base classifier with optional Gaussian input noise and an evaluation
/// mode for its output distributions.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RandomizedClassifier {
    base: DeterministicClassifier,
    noise: Option<GaussianNoiseSpec>,
    eval: EvalMode,
}

impl RandomizedClassifier {
    pub fn new(
        base: DeterministicClassifier,
        noise: Option<GaussianNoiseSpec>,
        eval: EvalMode,
    ) -> Result<Self> {
        if let Some(spec) = &noise {
            if let Some(d) = spec.dim() {
                if d != base.input_dim() {
                    return Err(CertError::DimensionMismatch(format!(
                        "noise covariance is {d}-dimensional, base expects {}",
                        base.input_dim()
                    )));
                }
            }
        }
        if let EvalMode::MonteCarlo { samples, .. } = eval {
            if samples == 0 {
                return Err(CertError::InvalidInput(
                    "Monte-Carlo evaluation needs at least one sample".into(),
                ));
            }
        }
        Ok(RandomizedClassifier { base, noise, eval })
    }

    pub fn base(&self) -> &DeterministicClassifier {
        &self.base
    }

    pub fn noise(&self) -> Option<&GaussianNoiseSpec> {
        self.noise.as_ref()
    }

    pub fn eval_mode(&self) -> EvalMode {
        self.eval
    }

    /// Same classifier with a different evaluation mode.
    pub fn with_eval_mode(&self, eval: EvalMode) -> Result<Self> {
        Self::new(self.base.clone(), self.noise.clone(), eval)
    }

    pub fn num_classes(&self) -> usize {
        self.base.num_classes()
    }

    pub fn input_dim(&self) -> usize {
        self.base.input_dim()
    }

    /// True when a closed-form output distribution exists: no noise, a
    /// two-class linear base under isotropic noise, or a grid-table base.
    pub fn supports_exact(&self) -> bool {
        match (&self.base, &self.noise) {
            (_, None) => true,
            (DeterministicClassifier::Linear(c), Some(spec)) => {
                c.num_classes() == 2 && spec.is_isotropic()
            }
            (DeterministicClassifier::GridTable(_), Some(_)) => true,
        }
    }
}

/// Output distribution at one input plus the uncertainty of its
/// estimation.
#[derive(Debug, Clone)]
pub struct DistributionEstimate {
    distribution: CategoricalDistribution,
    confidence_radius: f64,
    samples_used: usize,
}

impl DistributionEstimate {
    /// Wraps an externally produced estimate. Library-produced estimates
    /// carry a zero radius exactly when they are closed-form.
    pub fn new(
        distribution: CategoricalDistribution,
        confidence_radius: f64,
        samples_used: usize,
    ) -> Result<Self> {
        if !confidence_radius.is_finite() || confidence_radius < 0.0 {
            return Err(CertError::InvalidInput(format!(
                "confidence radius must be finite and non-negative, got {confidence_radius}"
            )));
        }
        Ok(DistributionEstimate {
            distribution,
            confidence_radius,
            samples_used,
        })
    }

    pub fn distribution(&self) -> &CategoricalDistribution {
        &self.distribution
    }

    /// Simultaneous per-label half-width at failure probability
    /// [`CONFIDENCE_DELTA`]; 0 exactly when the evaluation was exact.
    pub fn confidence_radius(&self) -> f64 {
        self.confidence_radius
    }

    pub fn samples_used(&self) -> usize {
        self.samples_used
    }

    pub fn is_exact(&self) -> bool {
        self.confidence_radius == 0.0
    }
}

/// Simultaneous Hoeffding half-width for `num_classes` frequencies
/// estimated from `samples` draws: `sqrt(ln(2K/delta) / (2m))`.
pub fn hoeffding_radius(num_classes: usize, samples: usize) -> f64 {
    ((2.0 * num_classes as f64 / CONFIDENCE_DELTA).ln() / (2.0 * samples as f64)).sqrt()
}

/// Output distribution of `clf` at `x`, using RNG stream 0.
pub fn predict_distribution(clf: &RandomizedClassifier, x: &[f64]) -> Result<DistributionEstimate> {
    predict_distribution_at(clf, x, 0)
}

/// Output distribution of `clf` at `x`.
///
/// `stream` selects the RNG stream for Monte-Carlo draws; dataset-level
/// callers pass the point index so that estimates do not depend on the
/// order or parallelism of evaluation. Exact mode on a configuration
/// without a closed form is a capability error; grid-table bases require
/// `x` inside the declared box.
pub fn predict_distribution_at(
    clf: &RandomizedClassifier,
    x: &[f64],
    stream: u64,
) -> Result<DistributionEstimate> {
    if x.len() != clf.input_dim() {
        return Err(CertError::DimensionMismatch(format!(
            "input has dimension {}, classifier expects {}",
            x.len(),
            clf.input_dim()
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(CertError::InvalidInput("input must be finite".into()));
    }
    if let DeterministicClassifier::GridTable(grid) = &clf.base {
        if !grid.contains(x) {
            return Err(CertError::InvalidInput(format!(
                "input {x:?} lies outside the grid's declared box {:?}",
                grid.bounds()
            )));
        }
    }
    match clf.eval {
        EvalMode::Exact => predict_exact(clf, x),
        EvalMode::MonteCarlo { samples, seed } => {
            predict_monte_carlo(clf, x, samples, seed, stream)
        }
    }
}

fn predict_exact(clf: &RandomizedClassifier, x: &[f64]) -> Result<DistributionEstimate> {
    let k = clf.num_classes();
    let distribution = match (&clf.base, &clf.noise) {
        (base, None) => CategoricalDistribution::point_mass(k, base.classify(x)?)?,
        (DeterministicClassifier::Linear(c), Some(spec)) => {
            let sigma = spec.sigma().ok_or_else(|| {
                CertError::Capability("exact linear evaluation requires isotropic noise".into())
            })?;
            if c.num_classes() != 2 {
                return Err(CertError::Capability(format!(
                    "exact linear evaluation requires 2 classes, got {}",
                    c.num_classes()
                )));
            }
            exact_linear_binary(c, sigma, x)?
        }
        (DeterministicClassifier::GridTable(grid), Some(spec)) => {
            exact_grid_pushforward(grid, spec, x)?
        }
    };
    Ok(DistributionEstimate {
        distribution,
        confidence_radius: 0.0,
        samples_used: 0,
    })
}

/// Closed form for a two-class linear base under isotropic noise: the
/// score gap is univariate Gaussian, so class 0 wins with probability
/// `Phi((dw . x + db) / (sigma ||dw||))`.
fn exact_linear_binary(
    c: &LinearClassifier,
    sigma: f64,
    x: &[f64],
) -> Result<CategoricalDistribution> {
    let dw: Vec<f64> = c.weights()[0]
        .iter()
        .zip(&c.weights()[1])
        .map(|(a, b)| a - b)
        .collect();
    let db = c.bias()[0] - c.bias()[1];
    let margin = dw.iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>() + db;
    let scale = sigma * dw.iter().map(|w| w * w).sum::<f64>().sqrt();
    let p0 = if scale == 0.0 {
        // Degenerate gap: noise cannot flip the decision.
        if margin >= 0.0 {
            1.0
        } else {
            0.0
        }
    } else {
        std_normal_cdf(margin / scale)
    };
    CategoricalDistribution::new(vec![p0, 1.0 - p0])
}

/// Exact pushforward through a grid table: per-label sums of Gaussian
/// rectangle masses, with boundary cells extended to infinity to match
/// the clamping lookup.
fn exact_grid_pushforward(
    grid: &GridTableClassifier,
    spec: &GaussianNoiseSpec,
    x: &[f64],
) -> Result<CategoricalDistribution> {
    let [nx, ny] = grid.shape();
    let mut probs = vec![0.0; grid.num_classes()];
    if let Some(sigma) = spec.sigma() {
        // Independent axes: rectangle mass factorizes into Phi products.
        let axis_masses = |axis: usize, n: usize| -> Vec<f64> {
            (0..n)
                .map(|i| {
                    let (lo, hi) = grid.cell_extent(i, axis);
                    std_normal_cdf((hi - x[axis]) / sigma) - std_normal_cdf((lo - x[axis]) / sigma)
                })
                .collect()
        };
        let mx = axis_masses(0, nx);
        let my = axis_masses(1, ny);
        for iy in 0..ny {
            for ix in 0..nx {
                probs[grid.labels[iy * nx + ix]] += mx[ix] * my[iy];
            }
        }
    } else {
        let cov = spec.covariance_rows(2);
        let (sxx, sxy, syy) = (cov[0][0], cov[0][1], cov[1][1]);
        let sx = sxx.sqrt();
        // y | x=u is Gaussian with mean my(u) and standard deviation sy_c.
        let slope = sxy / sxx;
        let sy_c = (syy - sxy * sxy / sxx).sqrt();
        let lo_trunc = x[0] - 12.0 * sx;
        let hi_trunc = x[0] + 12.0 * sx;
        for iy in 0..ny {
            let (y_lo, y_hi) = grid.cell_extent(iy, 1);
            for ix in 0..nx {
                let (x_lo, x_hi) = grid.cell_extent(ix, 0);
                let a = x_lo.max(lo_trunc);
                let b = x_hi.min(hi_trunc);
                if a >= b {
                    continue;
                }
                let integrand = |u: f64| {
                    let z = (u - x[0]) / sx;
                    let density = (-0.5 * z * z).exp() / (sx * (2.0 * std::f64::consts::PI).sqrt());
                    let mean_y = x[1] + slope * (u - x[0]);
                    let band = std_normal_cdf((y_hi - mean_y) / sy_c)
                        - std_normal_cdf((y_lo - mean_y) / sy_c);
                    density * band
                };
                probs[grid.labels[iy * nx + ix]] += simpson(integrand, a, b, 128);
            }
        }
    }
    CategoricalDistribution::new(probs)
}

/// Composite Simpson rule with `2 * half_panels` panels.
fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, half_panels: usize) -> f64 {
    let n = 2 * half_panels;
    let h = (b - a) / n as f64;
    let mut acc = f(a) + f(b);
    for i in 1..n {
        let weight = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += weight * f(a + i as f64 * h);
    }
    acc * h / 3.0
}

fn predict_monte_carlo(
    clf: &RandomizedClassifier,
    x: &[f64],
    samples: usize,
    seed: u64,
    stream: u64,
) -> Result<DistributionEstimate> {
    let k = clf.num_classes();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let mut counts = vec![0u64; k];
    let mut perturbed = vec![0.0; x.len()];
    for _ in 0..samples {
        let label = match &clf.noise {
            None => clf.base.classify(x)?,
            Some(spec) => {
                spec.sample_into(&mut rng, &mut perturbed);
                for (slot, xi) in perturbed.iter_mut().zip(x) {
                    *slot += xi;
                }
                clf.base.classify(&perturbed)?
            }
        };
        counts[label] += 1;
    }
    Ok(DistributionEstimate {
        distribution: CategoricalDistribution::from_counts(&counts)?,
        confidence_radius: hoeffding_radius(k, samples),
        samples_used: samples,
    })
}

/// Label with the largest estimated probability; ties resolve to the
/// smallest index.
pub fn mode_classifier(est: &DistributionEstimate) -> usize {
    argmax(est.distribution().probs())
}

/// One label drawn from the output distribution at `x`.
///
/// Deterministic in `(clf, x, seed)` and independent of the evaluation
/// mode.
pub fn sample_prediction(clf: &RandomizedClassifier, x: &[f64], seed: u64) -> Result<usize> {
    if x.len() != clf.input_dim() {
        return Err(CertError::DimensionMismatch(format!(
            "input has dimension {}, classifier expects {}",
            x.len(),
            clf.input_dim()
        )));
    }
    match &clf.noise {
        None => clf.base.classify(x),
        Some(spec) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut perturbed = vec![0.0; x.len()];
            spec.sample_into(&mut rng, &mut perturbed);
            for (slot, xi) in perturbed.iter_mut().zip(x) {
                *slot += xi;
            }
            clf.base.classify(&perturbed)
        }
    }
}

/// Expected 0-1 loss of the estimated distribution against `label`,
/// `1 - p(label)`.
pub fn expected_01_loss(est: &DistributionEstimate, label: usize) -> Result<f64> {
    if label >= est.distribution().num_classes() {
        return Err(CertError::InvalidInput(format!(
            "label {label} out of range for {} classes",
            est.distribution().num_classes()
        )));
    }
    Ok(1.0 - est.distribution().prob(label))
}

/// Reads a [`DeterministicClassifier`] from a JSON model file.
pub fn load_model(path: &Path) -> Result<DeterministicClassifier> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

/// Writes a [`DeterministicClassifier`] as a JSON model file.
pub fn save_model(path: &Path, clf: &DeterministicClassifier) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(clf)?)?;
    Ok(())
}
