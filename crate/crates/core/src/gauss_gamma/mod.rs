//! Marginal transform from a latent Gaussian to a Gamma "event count".
//!
//! For a reaction with expected count `mu` over an interval, the latent
//! `Z ~ Normal(mu, mu)` is mapped to `X = F⁻¹(Φ(Z))` where `F` is the CDF of
//! `Gamma(shape = mu, scale = 1)`. Mean and variance of `X` are both `mu`,
//! matching the Poisson increment it stands in for.
//!
//! Derivatives are analytic. With `φ` the Normal(mu, mu) density and `f` the
//! Gamma density at `x = G(z)`:
//!
//! ```text
//! G'(z)  = φ(z) / f(x)
//! G''(z) = G'(z) · φ'(z)/φ(z) - G'(z)² · f'(x)/f(x)
//!        = -G'(z) (z - mu)/mu - G'(z)² ((mu - 1)/x - 1)
//! ```
//!
//! `z` is clamped so that `Φ(z)` stays inside `[1e-12, 1 - 1e-12]`; beyond
//! the clamp the value and both derivatives are those of the clamp point.

pub mod special;

use crate::error::{Error, Result};
use special::{gamma_pq, gamma_quantile_ln, ln_gamma, ln_normal_pdf, std_normal_tails};

/// Tail probability kept by the input clamp.
pub const CLAMP_TAIL: f64 = 1e-12;
/// `|Φ⁻¹(1e-12)|` for the standard Normal.
const CLAMP_STD: f64 = 7.034_483_825_301_132;

/// One evaluation of the transform and its first two derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransformPoint {
    pub shape: f64,
    pub z: f64,
    pub x: f64,
    pub ln_x: f64,
    pub d1: f64,
    pub d2: f64,
    /// `z` fell outside the clamp and was moved to its boundary.
    pub clamped: bool,
}

fn check_shape(mu: f64) -> Result<()> {
    if !(mu > 0.0) || !mu.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "Gamma shape must be positive and finite, got {mu}"
        )));
    }
    Ok(())
}

/// Regularized lower incomplete gamma `P(shape, x)`, the Gamma(shape, 1) CDF.
pub fn gamma_cdf(x: f64, shape: f64) -> Result<f64> {
    check_shape(shape)?;
    if !(x >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "gamma_cdf needs x >= 0, got {x}"
        )));
    }
    Ok(gamma_pq(shape, x).0)
}

/// Quantile of Gamma(shape, 1).
pub fn gamma_quantile(p: f64, shape: f64) -> Result<f64> {
    check_shape(shape)?;
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "quantile probability must lie in (0, 1), got {p}"
        )));
    }
    Ok(gamma_quantile_ln(p, 1.0 - p, shape).exp())
}

/// Evaluate `G(z)` and its derivatives for shape `mu`.
pub fn evaluate(z: f64, mu: f64) -> Result<TransformPoint> {
    check_shape(mu)?;
    if !z.is_finite() {
        return Err(Error::NonFinite(format!("transform input z = {z}")));
    }
    let sd = mu.sqrt();
    let t = (z - mu) / sd;
    let tc = t.clamp(-CLAMP_STD, CLAMP_STD);
    let clamped = tc != t;
    let zc = if clamped { mu + tc * sd } else { z };

    let (p, q) = std_normal_tails(tc);
    let ln_x = gamma_quantile_ln(p, q, mu);
    let x = ln_x.exp().max(f64::MIN_POSITIVE);

    let ln_phi = ln_normal_pdf(zc, mu, mu);
    let ln_f = (mu - 1.0) * ln_x - x - ln_gamma(mu);
    let ln_d1 = ln_phi - ln_f;
    let d1 = ln_d1.exp();
    let d2 = -d1 * tc / sd - (mu - 1.0) * (2.0 * ln_d1 - ln_x).exp() + d1 * d1;

    Ok(TransformPoint {
        shape: mu,
        z,
        x,
        ln_x,
        d1,
        d2,
        clamped,
    })
}

/// `G(z) = F⁻¹(Φ(z; mu, mu); mu)`.
pub fn transform(z: f64, mu: f64) -> Result<f64> {
    evaluate(z, mu).map(|pt| pt.x)
}

/// `dG/dz` at `z`.
pub fn jacobian_diag(z: f64, mu: f64) -> Result<f64> {
    evaluate(z, mu).map(|pt| pt.d1)
}

/// `d²G/dz²` at `z`.
pub fn hessian_diag(z: f64, mu: f64) -> Result<f64> {
    evaluate(z, mu).map(|pt| pt.d2)
}
