//! Closed forms and ODE integrations used to check the grid solvers.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleKind {
    EuclidCircle,
    HyperbolicCircle,
    AnnulusHarmonic,
    ExpOffset,
}

impl std::str::FromStr for OracleKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "euclid_circle" => Ok(Self::EuclidCircle),
            "hyperbolic_circle" => Ok(Self::HyperbolicCircle),
            "annulus_harmonic" => Ok(Self::AnnulusHarmonic),
            "exp_offset" => Ok(Self::ExpOffset),
            other => Err(Error::UnsupportedKind(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleSample {
    /// Time, or radius for the harmonic profile.
    pub at: f64,
    pub value: Option<f64>,
    pub past_extinction: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleResult {
    pub kind: OracleKind,
    pub params: Vec<f64>,
    pub samples: Vec<OracleSample>,
}

/// Curve-shortening radius `sqrt(r0^2 - 2t)`; `None` once extinct.
pub fn euclid_circle_radius(r0: f64, t: f64) -> Option<f64> {
    let s = r0 * r0 - 2.0 * t;
    (s >= 0.0).then(|| s.sqrt())
}

fn coth(r: f64) -> f64 {
    1.0 / r.tanh()
}

fn rk4(r0: f64, t: f64, n: usize) -> Option<f64> {
    let f = |r: f64| -coth(r);
    let k = t / n as f64;
    let mut r = r0;
    for _ in 0..n {
        let a = f(r);
        let b = f(r + 0.5 * k * a);
        let c = f(r + 0.5 * k * b);
        let d = f(r + k * c);
        r += k / 6.0 * (a + 2.0 * b + 2.0 * c + d);
        if !(r > 0.0) || !r.is_finite() {
            return None;
        }
    }
    Some(r)
}

/// Hyperbolic radius of a geodesic circle under `dr/dt = -coth r`, by RK4
/// with steps no longer than `max_step`, halved until the Richardson error
/// estimate drops below 1e-8. `None` past extinction.
pub fn hyperbolic_circle_radius(r0: f64, t: f64, max_step: f64) -> Option<f64> {
    if t == 0.0 {
        return Some(r0);
    }
    // the circle collapses at t = ln cosh r0; integrating into the
    // singularity is pointless
    if t >= r0.cosh().ln() {
        return None;
    }
    let mut n = ((t / max_step).ceil() as usize).max(1);
    let mut coarse = rk4(r0, t, n)?;
    for _ in 0..30 {
        n *= 2;
        let fine = rk4(r0, t, n)?;
        if (fine - coarse).abs() / 15.0 <= 1e-8 {
            return Some(fine);
        }
        coarse = fine;
    }
    None
}

/// Radial harmonic profile `ln(r/r0) / ln(r1/r0)`.
pub fn annulus_harmonic(r0: f64, r1: f64, r: f64) -> f64 {
    (r / r0).ln() / (r1 / r0).ln()
}

/// Tube half-width `c e^{lambda t}`.
pub fn exp_offset(c: f64, lambda: f64, t: f64) -> f64 {
    c * (lambda * t).exp()
}

/// Evaluates an oracle at the given times (radii for the harmonic profile).
/// Parameters: euclid_circle [r0], hyperbolic_circle [r0, max_step],
/// annulus_harmonic [r0, r1], exp_offset [c, lambda].
pub fn oracle(kind: OracleKind, params: &[f64], at: &[f64]) -> Result<OracleResult> {
    let need = match kind {
        OracleKind::EuclidCircle => 1,
        _ => 2,
    };
    if params.len() < need || (kind == OracleKind::HyperbolicCircle && params.len() > 2) {
        return Err(Error::InvalidParameter(format!(
            "{kind:?} takes {need} parameters, got {}",
            params.len()
        )));
    }
    let samples = at
        .iter()
        .map(|&s| {
            let value = match kind {
                OracleKind::EuclidCircle => euclid_circle_radius(params[0], s),
                OracleKind::HyperbolicCircle => {
                    let step = params.get(1).copied().unwrap_or(1e-3);
                    hyperbolic_circle_radius(params[0], s, step)
                }
                OracleKind::AnnulusHarmonic => Some(annulus_harmonic(params[0], params[1], s)),
                OracleKind::ExpOffset => Some(exp_offset(params[0], params[1], s)),
            };
            OracleSample {
                at: s,
                past_extinction: value.is_none(),
                value,
            }
        })
        .collect();
    Ok(OracleResult {
        kind,
        params: params.to_vec(),
        samples,
    })
}
