//! Vector norms used for perturbation radii, covering, and attacks.

use serde::Serialize;

use crate::error::{CertError, Result};

/// Order of an l_p norm, p in [1, inf].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NormOrder(f64);

impl NormOrder {
    pub const L1: NormOrder = NormOrder(1.0);
    pub const L2: NormOrder = NormOrder(2.0);
    pub const LINF: NormOrder = NormOrder(f64::INFINITY);

    /// Builds a norm order, rejecting p < 1 and NaN.
    pub fn new(p: f64) -> Result<Self> {
        if p.is_nan() || p < 1.0 {
            return Err(CertError::Domain(format!(
                "norm order must satisfy p >= 1, got {p}"
            )));
        }
        Ok(NormOrder(p))
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn is_infinite(self) -> bool {
        self.0.is_infinite()
    }
}

impl std::fmt::Display for NormOrder {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.0.is_infinite() {
            write!(f, "inf")
        } else {
            write!(f, "{}", self.0)
        }
    }
}

/// l_p norm of a vector.
pub fn lp_norm(v: &[f64], order: NormOrder) -> f64 {
    let p = order.value();
    if p.is_infinite() {
        v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
    } else if p == 1.0 {
        v.iter().map(|x| x.abs()).sum()
    } else if p == 2.0 {
        v.iter().map(|x| x * x).sum::<f64>().sqrt()
    } else {
        v.iter().map(|x| x.abs().powf(p)).sum::<f64>().powf(1.0 / p)
    }
}

/// l_p distance between two vectors of equal dimension.
pub fn lp_distance(a: &[f64], b: &[f64], order: NormOrder) -> Result<f64> {
    if a.len() != b.len() {
        return Err(CertError::DimensionMismatch(format!(
            "lp_distance: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    Ok(lp_norm(&diff, order))
}
