//! Extended Kalman filter over the latent Gaussian event counts.
//!
//! For each interval the latent `Z_i ~ Normal(μ_i, diag(μ_i))` is updated by
//! the observed increment `ΔY_i ≈ V·G(Z_i) + noise`, where `G` is the
//! Gaussian-to-Gamma transform. `G` is expanded to second order around the
//! prior mean. Intervals are filtered independently: each prior depends on
//! `Y_{i-1}` alone.

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gauss_gamma;
use crate::network::{LogRates, ReactionNetwork, Trajectory};

const JITTER_STEPS: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterConfig {
    /// Measurement variance, `Σ = σ² I`.
    pub sigma2: f64,
    /// Reactions with `μ_ij` below this are inactive for the interval.
    pub mu_floor: f64,
    /// Added to the innovation covariance when `sigma2 = 0`, and escalated
    /// tenfold whenever its factorization fails.
    pub jitter: f64,
    /// `2` keeps the `½ V_jj H_jj` mean correction, `1` drops it.
    pub taylor_order: u8,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            sigma2: 0.0,
            mu_floor: 1e-8,
            jitter: 1e-8,
            taylor_order: 2,
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma2 >= 0.0) || !self.sigma2.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "sigma2 must be finite and >= 0, got {}",
                self.sigma2
            )));
        }
        if !(self.mu_floor > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "mu_floor must be positive, got {}",
                self.mu_floor
            )));
        }
        if !(self.jitter > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "jitter must be positive, got {}",
                self.jitter
            )));
        }
        if !matches!(self.taylor_order, 1 | 2) {
            return Err(Error::InvalidArgument(format!(
                "taylor_order must be 1 or 2, got {}",
                self.taylor_order
            )));
        }
        Ok(())
    }
}

/// Prior and posterior moments for one interval.
///
/// `jac` and `hess` hold the diagonals of the (diagonal) Jacobian and
/// Hessian of `G`, evaluated at `z_upd`; the update itself used their
/// values at `z_pred`.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterState {
    /// 1-based interval index.
    pub interval: usize,
    pub mu: DVector<f64>,
    pub active: Vec<bool>,
    pub z_pred: DVector<f64>,
    pub v_pred: DMatrix<f64>,
    pub z_upd: DVector<f64>,
    pub v_upd: DMatrix<f64>,
    pub g: DVector<f64>,
    pub jac: DVector<f64>,
    pub hess: DVector<f64>,
    /// `r × p`.
    pub gain: DMatrix<f64>,
    /// Diagonal loading actually added to the innovation covariance.
    pub jitter_used: f64,
}

impl FilterState {
    pub fn jac_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&self.jac)
    }

    pub fn hess_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&self.hess)
    }

    pub fn n_active(&self) -> usize {
        self.active.iter().filter(|a| **a).count()
    }
}

/// Prior moments: `ẑ = μ`, `V = diag(μ)`.
pub fn predict(mu: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
    (mu.clone(), DMatrix::from_diagonal(mu))
}

/// Transform value and derivative diagonals at `z`; inactive coordinates
/// give `(μ, 0, 0)`.
pub fn transform_terms(
    z: &DVector<f64>,
    mu: &DVector<f64>,
    active: &[bool],
) -> Result<(DVector<f64>, DVector<f64>, DVector<f64>)> {
    let r = mu.len();
    let mut g = DVector::zeros(r);
    let mut jac = DVector::zeros(r);
    let mut hess = DVector::zeros(r);
    for j in 0..r {
        if active[j] {
            let pt = gauss_gamma::evaluate(z[j], mu[j])?;
            g[j] = pt.x;
            jac[j] = pt.d1;
            hess[j] = pt.d2;
        } else {
            g[j] = mu[j];
        }
    }
    Ok((g, jac, hess))
}

fn taylor_mean(g: &DVector<f64>, v: &DMatrix<f64>, hess: &DVector<f64>, order: u8) -> DVector<f64> {
    if order < 2 {
        return g.clone();
    }
    DVector::from_fn(g.len(), |j, _| g[j] + 0.5 * v[(j, j)] * hess[j])
}

/// Second-order moments of `G(Z)` for `Z ~ Normal(ẑ, V)`:
/// mean `g + ½ V_jj H_jj` and covariance `J V J`.
pub fn moments_of_g(
    z_hat: &DVector<f64>,
    v: &DMatrix<f64>,
    mu: &DVector<f64>,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let cfg = FilterConfig::default();
    let active: Vec<bool> = mu.iter().map(|&m| m >= cfg.mu_floor).collect();
    let (g, jac, hess) = transform_terms(z_hat, mu, &active)?;
    let mean = taylor_mean(&g, v, &hess, cfg.taylor_order);
    let cov = DMatrix::from_fn(v.nrows(), v.ncols(), |a, b| jac[a] * v[(a, b)] * jac[b]);
    Ok((mean, cov))
}

/// Gain `K = V_pred J Vᵀ (V J V_pred J Vᵀ + s I)⁻¹` for diagonal `v_pred`
/// and `jac`, with `s = σ²` (plus jitter when `σ² = 0`).
///
/// Returns the gain, the factor `B = V J V_pred` (`p × r`) and the jitter used.
pub fn gain(
    v_pred_diag: &DVector<f64>,
    jac: &DVector<f64>,
    net_effect: &DMatrix<f64>,
    sigma2: f64,
    jitter: f64,
    interval: usize,
) -> Result<(DMatrix<f64>, DMatrix<f64>, f64)> {
    let p = net_effect.nrows();
    let r = net_effect.ncols();
    let mut a = net_effect.clone();
    let mut b = net_effect.clone();
    for j in 0..r {
        a.column_mut(j).scale_mut(jac[j]);
        b.column_mut(j).scale_mut(jac[j] * v_pred_diag[j]);
    }
    // B Aᵀ = V J D J Vᵀ
    let s = &b * a.transpose();
    if s.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numeric {
            interval,
            msg: "innovation covariance is not finite".into(),
        });
    }
    let mut extra = if sigma2 > 0.0 { 0.0 } else { jitter };
    for _ in 0..=JITTER_STEPS {
        let mut m = s.clone();
        for l in 0..p {
            m[(l, l)] += sigma2 + extra;
        }
        let m = (&m + m.transpose()) * 0.5;
        if let Some(chol) = Cholesky::new(m) {
            let k = chol.solve(&b).transpose();
            return Ok((k, b, extra));
        }
        extra = if extra == 0.0 { jitter } else { extra * 10.0 };
    }
    Err(Error::Singular {
        interval,
        msg: format!("innovation covariance not positive definite with jitter up to {extra:e}"),
    })
}

/// Filter one interval given its prior rates `mu` and increment `dy`.
pub fn filter_interval(
    interval: usize,
    mu: DVector<f64>,
    dy: &DVector<f64>,
    net_effect: &DMatrix<f64>,
    cfg: &FilterConfig,
) -> Result<FilterState> {
    if let Some(j) = mu.iter().position(|m| !m.is_finite() || *m < 0.0) {
        return Err(Error::Numeric {
            interval,
            msg: format!("expected count of reaction {} is {}", j + 1, mu[j]),
        });
    }
    let r = mu.len();
    let active: Vec<bool> = mu.iter().map(|&m| m >= cfg.mu_floor).collect();
    let (z_pred, v_pred) = predict(&mu);
    let d = DVector::from_fn(r, |j, _| if active[j] { mu[j] } else { 0.0 });

    let numeric = |e: Error| match e {
        Error::NonFinite(msg) | Error::InvalidArgument(msg) => Error::Numeric { interval, msg },
        other => other,
    };
    let (g0, jac0, hess0) = transform_terms(&z_pred, &mu, &active).map_err(numeric)?;
    let mean0 = DVector::from_fn(r, |j, _| {
        if cfg.taylor_order >= 2 {
            g0[j] + 0.5 * d[j] * hess0[j]
        } else {
            g0[j]
        }
    });
    let innovation = dy - net_effect * &mean0;
    let (k, b, jitter_used) = gain(&d, &jac0, net_effect, cfg.sigma2, cfg.jitter, interval)?;

    let mut z_upd = &z_pred + &k * &innovation;
    for j in 0..r {
        if !active[j] {
            z_upd[j] = mu[j];
        }
    }
    // (I - K V J) V_pred = D - K B
    let mut v_upd = DMatrix::from_diagonal(&d) - &k * &b;
    v_upd = (&v_upd + v_upd.transpose()) * 0.5;
    if z_upd.iter().chain(v_upd.iter()).any(|x| !x.is_finite()) {
        return Err(Error::Numeric {
            interval,
            msg: "posterior moments are not finite".into(),
        });
    }
    let (g, jac, hess) = transform_terms(&z_upd, &mu, &active).map_err(numeric)?;
    Ok(FilterState {
        interval,
        mu,
        active,
        z_pred,
        v_pred,
        z_upd,
        v_upd,
        g,
        jac,
        hess,
        gain: k,
        jitter_used,
    })
}

/// Filter every interval of `traj` at log-rates `rates`.
pub fn filter_pass(
    net: &ReactionNetwork,
    rates: &LogRates,
    traj: &Trajectory,
    cfg: &FilterConfig,
) -> Result<Vec<FilterState>> {
    cfg.validate()?;
    traj.check_against(net)?;
    let v = net.net_effect();
    (1..=traj.n_intervals())
        .map(|i| {
            let mu = net.interval_rates(rates, traj.state(i - 1), traj.dt(i))?;
            let dy = DVector::from_vec(traj.increment(i));
            filter_interval(i, DVector::from_vec(mu), &dy, v, cfg)
        })
        .collect()
}
