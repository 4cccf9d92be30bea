//! Robustness certificates for Gaussian noise-injection preprocessing.
//!
//! Adding Gaussian noise to the input before a deterministic classifier
//! turns it into a randomized classifier whose output distributions at two
//! inputs differing by `tau` are divergence-bounded in closed form. By the
//! data-processing inequality the bound survives the classifier, so the
//! noise layer alone certifies an l_2 robustness radius:
//!
//! - Renyi order `beta`: `D_beta = (beta / 2) * ||tau||_{Sigma^-1}^2`;
//! - total variation: `D_TV = 2 Phi(||tau||_{Sigma^-1} / 2) - 1`,
//!
//! where `||.||_{Sigma^-1}` is the Mahalanobis norm of the noise covariance
//! and `Phi` the standard normal CDF.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::distributions::{tv_bound_from_renyi, DivergenceKind, GroundDistance};
use crate::error::{CertError, Result};
use crate::norm::{lp_norm, NormOrder};

/// Eigenvalues below `RELATIVE_SPD_TOLERANCE * lambda_max` fail the
/// positive-definiteness gate.
pub const RELATIVE_SPD_TOLERANCE: f64 = 1e-12;

/// Covariance of the injected Gaussian noise.
///
/// Either isotropic (`sigma^2 * I` in any dimension) or a full SPD matrix
/// with a fixed dimension. Construction verifies symmetry and positive
/// definiteness and caches the Cholesky factor.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "NoiseSpecRepr", into = "NoiseSpecRepr")]
pub struct GaussianNoiseSpec {
    kind: NoiseKind,
}

#[derive(Debug, Clone)]
enum NoiseKind {
    Isotropic {
        sigma: f64,
    },
    Full {
        covariance: DMatrix<f64>,
        /// Lower-triangular Cholesky factor of `covariance`.
        factor: DMatrix<f64>,
    },
}

impl GaussianNoiseSpec {
    /// Isotropic noise with standard deviation `sigma > 0`.
    pub fn isotropic(sigma: f64) -> Result<Self> {
        if !sigma.is_finite() || sigma <= 0.0 {
            return Err(CertError::Domain(format!(
                "noise standard deviation must be positive, got {sigma}"
            )));
        }
        Ok(GaussianNoiseSpec {
            kind: NoiseKind::Isotropic { sigma },
        })
    }

    /// Full covariance given as rows of a square matrix.
    pub fn full(covariance: &[Vec<f64>]) -> Result<Self> {
        let d = covariance.len();
        if d == 0 || covariance.iter().any(|row| row.len() != d) {
            return Err(CertError::InvalidInput(
                "covariance must be a non-empty square matrix".into(),
            ));
        }
        let flat: Vec<f64> = covariance.iter().flatten().copied().collect();
        if flat.iter().any(|x| !x.is_finite()) {
            return Err(CertError::InvalidInput(
                "covariance entries must be finite".into(),
            ));
        }
        let m = DMatrix::from_row_slice(d, d, &flat);
        let scale = flat.iter().fold(0.0_f64, |a, x| a.max(x.abs()));
        for i in 0..d {
            for j in (i + 1)..d {
                if (m[(i, j)] - m[(j, i)]).abs() > 1e-9 * scale.max(1.0) {
                    return Err(CertError::InvalidInput(format!(
                        "covariance is not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        let sym = (&m + m.transpose()) * 0.5;
        let eigenvalues = sym.symmetric_eigenvalues();
        let max_ev = eigenvalues.iter().fold(f64::NEG_INFINITY, |a, &x| a.max(x));
        let min_ev = eigenvalues.iter().fold(f64::INFINITY, |a, &x| a.min(x));
        if max_ev.is_nan() || max_ev <= 0.0 || min_ev <= RELATIVE_SPD_TOLERANCE * max_ev {
            return Err(CertError::InvalidInput(format!(
                "covariance is not positive definite (eigenvalues in [{min_ev}, {max_ev}])"
            )));
        }
        let factor = nalgebra::linalg::Cholesky::new(sym.clone())
            .ok_or_else(|| {
                CertError::InvalidInput("covariance failed Cholesky factorization".into())
            })?
            .l();
        Ok(GaussianNoiseSpec {
            kind: NoiseKind::Full {
                covariance: sym,
                factor,
            },
        })
    }

    /// Fixed dimension of the noise, or `None` for isotropic noise.
    pub fn dim(&self) -> Option<usize> {
        match &self.kind {
            NoiseKind::Isotropic { .. } => None,
            NoiseKind::Full { covariance, .. } => Some(covariance.nrows()),
        }
    }

    pub fn is_isotropic(&self) -> bool {
        matches!(self.kind, NoiseKind::Isotropic { .. })
    }

    /// Standard deviation for isotropic noise, `None` otherwise.
    pub fn sigma(&self) -> Option<f64> {
        match self.kind {
            NoiseKind::Isotropic { sigma } => Some(sigma),
            NoiseKind::Full { .. } => None,
        }
    }

    /// Covariance entries as rows, materializing `sigma^2 * I` at `dim`
    /// for isotropic noise.
    pub fn covariance_rows(&self, dim: usize) -> Vec<Vec<f64>> {
        match &self.kind {
            NoiseKind::Isotropic { sigma } => {
                let mut rows = vec![vec![0.0; dim]; dim];
                for (i, row) in rows.iter_mut().enumerate() {
                    row[i] = sigma * sigma;
                }
                rows
            }
            NoiseKind::Full { covariance, .. } => (0..covariance.nrows())
                .map(|i| covariance.row(i).iter().copied().collect())
                .collect(),
        }
    }

    fn check_dim(&self, dim: usize) -> Result<()> {
        if let Some(d) = self.dim() {
            if d != dim {
                return Err(CertError::DimensionMismatch(format!(
                    "noise covariance is {d}-dimensional, input is {dim}-dimensional"
                )));
            }
        }
        Ok(())
    }

    /// One noise draw of dimension `dim`.
    pub(crate) fn sample_into<R: Rng>(&self, rng: &mut R, out: &mut [f64]) {
        match &self.kind {
            NoiseKind::Isotropic { sigma } => {
                for slot in out.iter_mut() {
                    let z: f64 = rng.sample(StandardNormal);
                    *slot = sigma * z;
                }
            }
            NoiseKind::Full { factor, .. } => {
                let d = factor.nrows();
                debug_assert_eq!(out.len(), d);
                let z: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
                for i in 0..d {
                    let mut acc = 0.0;
                    for j in 0..=i {
                        acc += factor[(i, j)] * z[j];
                    }
                    out[i] = acc;
                }
            }
        }
    }
}

#[derive(Serialize, Deserialize)]
struct NoiseSpecRepr {
    #[serde(skip_serializing_if = "Option::is_none")]
    sigma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    covariance: Option<Vec<Vec<f64>>>,
}

impl TryFrom<NoiseSpecRepr> for GaussianNoiseSpec {
    type Error = CertError;

    fn try_from(repr: NoiseSpecRepr) -> Result<Self> {
        match (repr.sigma, repr.covariance) {
            (Some(s), None) => GaussianNoiseSpec::isotropic(s),
            (None, Some(c)) => GaussianNoiseSpec::full(&c),
            _ => Err(CertError::InvalidInput(
                "noise spec needs exactly one of `sigma` or `covariance`".into(),
            )),
        }
    }
}

impl From<GaussianNoiseSpec> for NoiseSpecRepr {
    fn from(spec: GaussianNoiseSpec) -> NoiseSpecRepr {
        match &spec.kind {
            NoiseKind::Isotropic { sigma } => NoiseSpecRepr {
                sigma: Some(*sigma),
                covariance: None,
            },
            NoiseKind::Full { covariance, .. } => NoiseSpecRepr {
                sigma: None,
                covariance: Some(spec.covariance_rows(covariance.nrows())),
            },
        }
    }
}

/// An input-space shift whose effect on the output distribution is being
/// certified. Entries must be finite.
#[derive(Debug, Clone, PartialEq)]
pub struct Perturbation {
    tau: Vec<f64>,
}

impl Perturbation {
    pub fn new(tau: Vec<f64>) -> Result<Self> {
        if tau.is_empty() {
            return Err(CertError::InvalidInput("perturbation is empty".into()));
        }
        if tau.iter().any(|x| !x.is_finite()) {
            return Err(CertError::InvalidInput(
                "perturbation entries must be finite".into(),
            ));
        }
        Ok(Perturbation { tau })
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.tau
    }

    pub fn dim(&self) -> usize {
        self.tau.len()
    }
}

/// `(alpha_p, epsilon)`-robustness: inputs within `radius` in the l_p
/// metric map to output distributions within `epsilon` in `divergence`.
#[derive(Debug, Clone, PartialEq)]
pub struct RobustnessCertificate {
    radius: f64,
    epsilon: f64,
    divergence: DivergenceKind,
    norm_order: NormOrder,
}

impl RobustnessCertificate {
    /// Builds a certificate; `radius >= 0`, `epsilon >= 0`, and total
    /// variation levels must not exceed 1.
    pub fn new(
        radius: f64,
        epsilon: f64,
        divergence: DivergenceKind,
        norm_order: NormOrder,
    ) -> Result<Self> {
        if !radius.is_finite() || radius < 0.0 {
            return Err(CertError::Domain(format!(
                "certificate radius must be finite and non-negative, got {radius}"
            )));
        }
        if epsilon.is_nan() || epsilon < 0.0 {
            return Err(CertError::Domain(format!(
                "certificate level must be non-negative, got {epsilon}"
            )));
        }
        if matches!(divergence, DivergenceKind::TotalVariation) && epsilon > 1.0 {
            return Err(CertError::Domain(format!(
                "total variation level must lie in [0, 1], got {epsilon}"
            )));
        }
        if let DivergenceKind::Renyi { beta } = divergence {
            if beta.is_nan() || beta < 1.0 {
                return Err(CertError::Domain(format!(
                    "Renyi order must satisfy beta >= 1, got {beta}"
                )));
            }
        }
        Ok(RobustnessCertificate {
            radius,
            epsilon,
            divergence,
            norm_order,
        })
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn divergence(&self) -> DivergenceKind {
        self.divergence
    }

    pub fn norm_order(&self) -> NormOrder {
        self.norm_order
    }
}

/// Renyi and total-variation certificates for the same radius.
#[derive(Debug, Clone)]
pub struct GaussianCertificates {
    pub renyi: RobustnessCertificate,
    pub tv: RobustnessCertificate,
}

/// Mahalanobis norm `sqrt(tau^T Sigma^-1 tau)` of a shift under the noise
/// covariance. Isotropic noise gives `||tau||_2 / sigma`.
pub fn mahalanobis_norm(tau: &Perturbation, spec: &GaussianNoiseSpec) -> Result<f64> {
    spec.check_dim(tau.dim())?;
    match &spec.kind {
        NoiseKind::Isotropic { sigma } => Ok(lp_norm(tau.as_slice(), NormOrder::L2) / sigma),
        NoiseKind::Full { factor, .. } => {
            let v = nalgebra::DVector::from_column_slice(tau.as_slice());
            let y = factor
                .solve_lower_triangular(&v)
                .ok_or_else(|| CertError::InvalidInput("singular Cholesky factor".into()))?;
            Ok(y.norm())
        }
    }
}

/// Renyi divergence of order `beta` between the noise distributions at two
/// inputs differing by `tau`: `(beta / 2) * ||tau||_{Sigma^-1}^2`.
pub fn gaussian_renyi_divergence(
    tau: &Perturbation,
    spec: &GaussianNoiseSpec,
    beta: f64,
) -> Result<f64> {
    if beta.is_nan() || beta < 1.0 {
        return Err(CertError::Domain(format!(
            "Renyi order must satisfy beta >= 1, got {beta}"
        )));
    }
    let m = mahalanobis_norm(tau, spec)?;
    if m == 0.0 {
        return Ok(0.0);
    }
    Ok(beta / 2.0 * m * m)
}

/// Total variation between the noise distributions at two inputs differing
/// by `tau`: `2 Phi(||tau||_{Sigma^-1} / 2) - 1`.
pub fn gaussian_tv_distance(tau: &Perturbation, spec: &GaussianNoiseSpec) -> Result<f64> {
    let m = mahalanobis_norm(tau, spec)?;
    Ok(2.0 * std_normal_cdf(m / 2.0) - 1.0)
}

/// Standard normal CDF `Phi(x)`, accurate to better than 1e-12 absolute
/// error over the whole real line.
///
/// Evaluates `erfc(-x / sqrt 2) / 2` with a Maclaurin series for arguments
/// up to 2 and a Lentz-evaluated Stieltjes continued fraction beyond,
/// reflecting negative arguments through `erfc(-z) = 2 - erfc(z)`.
pub fn std_normal_cdf(x: f64) -> f64 {
    let z = -x / std::f64::consts::SQRT_2;
    let az = z.abs();
    let tail = if az <= 2.0 {
        1.0 - erf_series(az)
    } else {
        erfc_continued_fraction(az)
    };
    let erfc_z = if z < 0.0 { 2.0 - tail } else { tail };
    0.5 * erfc_z
}

/// `erf(x)` for `0 <= x <= 2` via the alternating Maclaurin series
/// `(2/sqrt pi) sum_n (-1)^n x^(2n+1) / (n! (2n+1))`.
fn erf_series(x: f64) -> f64 {
    let xx = x * x;
    let mut power = x;
    let mut sum = x;
    for n in 1..=80 {
        power *= -xx / n as f64;
        let term = power / (2 * n + 1) as f64;
        sum += term;
        if term.abs() <= 1e-18 * sum.abs() {
            break;
        }
    }
    std::f64::consts::FRAC_2_SQRT_PI * sum
}

/// `erfc(x)` for `x > 2` via the continued fraction
/// `erfc(x) = e^(-x^2) / (x sqrt pi) * 1 / (1 + u / (1 + 2u / (1 + ...)))`
/// with `u = 1 / (2 x^2)`, evaluated by the modified Lentz recurrence.
fn erfc_continued_fraction(x: f64) -> f64 {
    let u = 1.0 / (2.0 * x * x);
    let mut f = 1.0_f64;
    let mut c = 1.0_f64;
    let mut d = 0.0_f64;
    for n in 1..=200 {
        let a = n as f64 * u;
        d = 1.0 + a * d;
        if d == 0.0 {
            d = 1e-300;
        }
        c = 1.0 + a / c;
        if c == 0.0 {
            c = 1e-300;
        }
        d = 1.0 / d;
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < 1e-17 {
            break;
        }
    }
    let sqrt_pi = 2.0 / std::f64::consts::FRAC_2_SQRT_PI;
    (-x * x).exp() / (x * sqrt_pi) / f
}

/// Certificates at l_2 radius `alpha2` for isotropic Gaussian
/// noise-injection with standard deviation `sigma`.
///
/// The Renyi certificate carries `beta * alpha2^2 / (2 sigma^2)` at order
/// `beta`; the total-variation certificate carries
/// `2 Phi(alpha2 / (2 sigma)) - 1`.
pub fn certify_gaussian_preprocessing(
    sigma: f64,
    alpha2: f64,
    beta: f64,
) -> Result<GaussianCertificates> {
    if !sigma.is_finite() || sigma <= 0.0 {
        return Err(CertError::Domain(format!(
            "noise standard deviation must be positive, got {sigma}"
        )));
    }
    if !alpha2.is_finite() || alpha2 < 0.0 {
        return Err(CertError::Domain(format!(
            "certified radius must be finite and non-negative, got {alpha2}"
        )));
    }
    if beta.is_nan() || beta < 1.0 {
        return Err(CertError::Domain(format!(
            "Renyi order must satisfy beta >= 1, got {beta}"
        )));
    }
    let renyi_eps = if alpha2 == 0.0 {
        0.0
    } else {
        beta * alpha2 * alpha2 / (2.0 * sigma * sigma)
    };
    let tv_eps = 2.0 * std_normal_cdf(alpha2 / (2.0 * sigma)) - 1.0;
    Ok(GaussianCertificates {
        renyi: RobustnessCertificate::new(
            alpha2,
            renyi_eps,
            DivergenceKind::Renyi { beta },
            NormOrder::L2,
        )?,
        tv: RobustnessCertificate::new(
            alpha2,
            tv_eps,
            DivergenceKind::TotalVariation,
            NormOrder::L2,
        )?,
    })
}

/// Converts a certificate to another divergence, keeping the radius.
///
/// Supported conversions:
/// - TV -> Wasserstein: `epsilon * diameter` (`diameter` of the label set
///   under the ground distance; defaults to 1 for the trivial ground);
/// - TV -> Hellinger: `sqrt(2 epsilon)`;
/// - Renyi(beta) -> TV: [`tv_bound_from_renyi`];
/// - Renyi(beta) -> Hellinger: `sqrt(epsilon)`;
/// - Renyi(inf) -> Separation: `epsilon`.
///
/// Anything else (including conversions that would need information the
/// certificate does not carry) is a capability error.
pub fn convert_certificate(
    cert: &RobustnessCertificate,
    target: DivergenceKind,
    diameter: Option<f64>,
) -> Result<RobustnessCertificate> {
    if let Some(d) = diameter {
        if !d.is_finite() || d < 0.0 {
            return Err(CertError::Domain(format!(
                "ground-distance diameter must be finite and non-negative, got {d}"
            )));
        }
    }
    let eps = cert.epsilon();
    let new_eps = match (cert.divergence(), target) {
        (DivergenceKind::TotalVariation, DivergenceKind::Wasserstein(ground)) => {
            let diam = match (ground, diameter) {
                (_, Some(d)) => d,
                (GroundDistance::Trivial, None) => 1.0,
                (GroundDistance::OrderedLine, None) => {
                    return Err(CertError::InvalidInput(
                        "Wasserstein target on the ordered line needs a diameter".into(),
                    ))
                }
            };
            eps * diam
        }
        (DivergenceKind::TotalVariation, DivergenceKind::Hellinger) => (2.0 * eps).sqrt(),
        (DivergenceKind::Renyi { .. }, DivergenceKind::TotalVariation) => tv_bound_from_renyi(eps)?,
        (DivergenceKind::Renyi { .. }, DivergenceKind::Hellinger) => eps.sqrt(),
        (DivergenceKind::Renyi { beta }, DivergenceKind::Separation) => {
            if !beta.is_infinite() {
                return Err(CertError::Capability(format!(
                    "separation certificates require a Renyi(inf) source, got beta = {beta}"
                )));
            }
            eps
        }
        (source, target) if source == target => eps,
        (source, target) => {
            return Err(CertError::Capability(format!(
                "no conversion from {source:?} to {target:?}"
            )))
        }
    };
    RobustnessCertificate::new(cert.radius(), new_eps, target, cert.norm_order())
}
