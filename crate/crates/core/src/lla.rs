//! Local linear approximation: Gaussian increments
//! `ΔY_i ~ Normal(V μ_i, V diag(μ_i) Vᵀ)`, fitted by iteratively
//! reweighted generalized least squares on `θ = exp(β)`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::em::FitResult;
use crate::error::{Error, Result};
use crate::network::{LogRates, ReactionNetwork, Trajectory};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LlaMode {
    /// Reweight until the estimate stops moving.
    Iterated,
    /// One weighted solve with weights from the least-squares start.
    OneShot,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LlaConfig {
    pub max_iter: usize,
    /// Stop when no `β` component moves by more than this.
    pub step_tol: f64,
    /// Added to each increment covariance.
    pub ridge: f64,
    /// Eigenvalues below `pinv_threshold · λ_max` are treated as zero.
    pub pinv_threshold: f64,
    /// Rates are raised to at least this before taking logs.
    pub theta_floor: f64,
    pub mode: LlaMode,
}

impl Default for LlaConfig {
    fn default() -> Self {
        LlaConfig {
            max_iter: 100,
            step_tol: 1e-8,
            ridge: 0.0,
            pinv_threshold: 1e-10,
            theta_floor: 1e-6,
            mode: LlaMode::Iterated,
        }
    }
}

impl LlaConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.ridge >= 0.0) {
            return Err(Error::InvalidArgument(format!("ridge must be >= 0, got {}", self.ridge)));
        }
        if !(self.theta_floor > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "theta_floor must be positive, got {}",
                self.theta_floor
            )));
        }
        if !(self.pinv_threshold >= 0.0 && self.pinv_threshold < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "pinv_threshold must lie in [0, 1), got {}",
                self.pinv_threshold
            )));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidArgument("max_iter must be at least 1".into()));
        }
        Ok(())
    }
}

/// Pseudo-inverse and log pseudo-determinant of a symmetric PSD matrix.
struct PseudoInverse {
    inverse: DMatrix<f64>,
    ln_det: f64,
    rank: usize,
}

fn pseudo_inverse(m: DMatrix<f64>, threshold: f64) -> PseudoInverse {
    let n = m.nrows();
    let eig = SymmetricEigen::new(m);
    let lmax = eig.eigenvalues.iter().fold(0.0_f64, |a, &l| a.max(l));
    let cut = threshold * lmax;
    let mut inverse = DMatrix::zeros(n, n);
    let mut ln_det = 0.0;
    let mut rank = 0;
    for (k, &l) in eig.eigenvalues.iter().enumerate() {
        if l > cut && l > 0.0 {
            let u = eig.eigenvectors.column(k);
            inverse += (u * u.transpose()) / l;
            ln_det += l.ln();
            rank += 1;
        }
    }
    PseudoInverse {
        inverse,
        ln_det,
        rank,
    }
}

/// `V diag(w) Vᵀ + ridge I`.
fn increment_covariance(v: &DMatrix<f64>, w: &[f64], ridge: f64) -> DMatrix<f64> {
    let mut scaled = v.clone();
    for (j, &wj) in w.iter().enumerate() {
        scaled.column_mut(j).scale_mut(wj);
    }
    let mut s = scaled * v.transpose();
    for l in 0..s.nrows() {
        s[(l, l)] += ridge;
    }
    (&s + s.transpose()) * 0.5
}

fn interval_loglik(
    v: &DMatrix<f64>,
    mu: &[f64],
    dy: &DVector<f64>,
    cfg: &LlaConfig,
    interval: usize,
) -> Result<f64> {
    if cfg.ridge == 0.0 && mu.iter().all(|m| *m == 0.0) {
        return Err(Error::Singular {
            interval,
            msg: "every expected count is zero and ridge = 0".into(),
        });
    }
    let mean = v * DVector::from_column_slice(mu);
    let resid = dy - mean;
    let pinv = pseudo_inverse(increment_covariance(v, mu, cfg.ridge), cfg.pinv_threshold);
    if pinv.rank == 0 {
        return Err(Error::Singular {
            interval,
            msg: "increment covariance has rank zero".into(),
        });
    }
    let quad = resid.dot(&(&pinv.inverse * &resid));
    Ok(-0.5 * (pinv.rank as f64 * LN_2PI + pinv.ln_det + quad))
}

/// Gaussian log-likelihood of all increments at `rates`.
pub fn lla_loglik(
    net: &ReactionNetwork,
    rates: &LogRates,
    traj: &Trajectory,
    cfg: &LlaConfig,
) -> Result<f64> {
    traj.check_against(net)?;
    let v = net.net_effect();
    let mut total = 0.0;
    for i in 1..=traj.n_intervals() {
        let mu = net.interval_rates(rates, traj.state(i - 1), traj.dt(i))?;
        let dy = DVector::from_vec(traj.increment(i));
        total += interval_loglik(v, &mu, &dy, cfg, i)?;
    }
    if total.is_nan() {
        return Err(Error::NonFinite("LLA log-likelihood is NaN".into()));
    }
    Ok(total)
}

/// Per-interval design: `ΔY_i ≈ A_i θ` with `A_i = V diag(dt_i c_i) M`.
struct Design {
    exposures: Vec<Vec<f64>>,
    blocks: Vec<DMatrix<f64>>,
    increments: Vec<DVector<f64>>,
}

fn design(net: &ReactionNetwork, traj: &Trajectory) -> Result<Design> {
    let v = net.net_effect();
    let tying = net.tying_matrix();
    let mut exposures = Vec::new();
    let mut blocks = Vec::new();
    let mut increments = Vec::new();
    for i in 1..=traj.n_intervals() {
        let dt = traj.dt(i);
        let e: Vec<f64> = net
            .propensity_factors(traj.state(i - 1))?
            .into_iter()
            .map(|c| c * dt)
            .collect();
        let mut ve = v.clone();
        for (j, &ej) in e.iter().enumerate() {
            ve.column_mut(j).scale_mut(ej);
        }
        blocks.push(ve * &tying);
        exposures.push(e);
        increments.push(DVector::from_vec(traj.increment(i)));
    }
    Ok(Design {
        exposures,
        blocks,
        increments,
    })
}

/// Weighted least-squares solve; `None` weights means identity.
fn solve_weighted(
    d: &Design,
    weights: Option<&[DMatrix<f64>]>,
    n_params: usize,
    threshold: f64,
) -> (DVector<f64>, usize) {
    let mut normal = DMatrix::zeros(n_params, n_params);
    let mut rhs = DVector::zeros(n_params);
    for (i, (a, dy)) in d.blocks.iter().zip(&d.increments).enumerate() {
        match weights {
            Some(w) => {
                let atw = a.transpose() * &w[i];
                normal += &atw * a;
                rhs += &atw * dy;
            }
            None => {
                normal += a.transpose() * a;
                rhs += a.transpose() * dy;
            }
        }
    }
    let pinv = pseudo_inverse(normal, threshold.max(1e-14));
    (&pinv.inverse * rhs, pinv.rank)
}

fn project(theta: &DVector<f64>, floor: f64) -> Vec<f64> {
    theta.iter().map(|t| if t.is_finite() { t.max(floor).ln() } else { floor.ln() }).collect()
}

/// LLA estimate of the log-rates.
pub fn lla_fit(net: &ReactionNetwork, traj: &Trajectory, cfg: &LlaConfig) -> Result<FitResult> {
    cfg.validate()?;
    traj.check_against(net)?;
    let d = net.n_params();
    let v = net.net_effect();
    let map = net.param_map();
    let des = design(net, traj)?;
    let mut warnings = Vec::new();

    let (theta0, rank0) = solve_weighted(&des, None, d, cfg.pinv_threshold);
    if rank0 < d {
        warnings.push(format!("least-squares design has rank {rank0} < {d}; pseudo-inverse used"));
    }
    if theta0.iter().any(|t| *t < cfg.theta_floor) {
        warnings.push("negative or tiny least-squares rates raised to theta_floor".into());
    }
    let mut beta = project(&theta0, cfg.theta_floor);
    let loglik = |b: &[f64]| -> f64 {
        LogRates::new(b.to_vec())
            .and_then(|r| lla_loglik(net, &r, traj, cfg))
            .unwrap_or(f64::NEG_INFINITY)
    };
    let mut best = (loglik(&beta), beta.clone());
    let max_iter = match cfg.mode {
        LlaMode::Iterated => cfg.max_iter,
        LlaMode::OneShot => 1,
    };
    let mut iterations = 0;
    let mut converged = false;
    for _ in 0..max_iter {
        iterations += 1;
        let theta: Vec<f64> = beta.iter().map(|b| b.exp()).collect();
        let weights: Vec<DMatrix<f64>> = des
            .exposures
            .iter()
            .map(|e| {
                let mu: Vec<f64> = e.iter().enumerate().map(|(j, ej)| ej * theta[map[j]]).collect();
                pseudo_inverse(increment_covariance(v, &mu, cfg.ridge), cfg.pinv_threshold).inverse
            })
            .collect();
        let (theta_new, rank) = solve_weighted(&des, Some(&weights), d, cfg.pinv_threshold);
        if rank < d && iterations == 1 {
            warnings.push(format!("weighted design has rank {rank} < {d}; pseudo-inverse used"));
        }
        let beta_new = project(&theta_new, cfg.theta_floor);
        let step = beta_new
            .iter()
            .zip(&beta)
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
        beta = beta_new;
        let ll = loglik(&beta);
        if ll > best.0 {
            best = (ll, beta.clone());
        }
        if step <= cfg.step_tol {
            converged = true;
            break;
        }
    }
    if cfg.mode == LlaMode::OneShot {
        converged = true;
    } else if !converged {
        warnings.push(format!("reweighting did not settle within {} iterations", cfg.max_iter));
    }
    let (ll, beta_hat) = best;
    if !ll.is_finite() {
        warnings.push("log-likelihood at the returned estimate is not finite".into());
    }
    Ok(FitResult {
        estimator: "lla".into(),
        beta_hat,
        param_names: net.param_names().to_vec(),
        iterations,
        err_trace: Vec::new(),
        q_trace: Vec::new(),
        q_value: ll,
        q_latent: None,
        q_observed: None,
        bic: None,
        converged,
        n_intervals: traj.n_intervals(),
        n_params: d,
        jitter: None,
        seed: None,
        config: serde_json::to_value(cfg).unwrap_or(serde_json::Value::Null),
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::parse_network;
    use approx::assert_relative_eq;

    #[test]
    fn scalar_density_closed_form() {
        let net = parse_network("0 -> A").unwrap();
        let traj = Trajectory::for_network(&net, vec![0.0, 2.0], vec![vec![5.0], vec![12.0]]).unwrap();
        let beta = 0.9_f64;
        let ll = lla_loglik(&net, &LogRates::new(vec![beta]).unwrap(), &traj, &LlaConfig::default()).unwrap();
        let mu = 2.0 * beta.exp();
        let expected = -0.5 * ((2.0 * std::f64::consts::PI * mu).ln() + (7.0 - mu).powi(2) / mu);
        assert_relative_eq!(ll, expected, max_relative = 1e-13);
    }

    #[test]
    fn vanishing_rates_with_movement() {
        let net = parse_network("0 -> A").unwrap();
        let traj = Trajectory::for_network(&net, vec![0.0, 1.0], vec![vec![0.0], vec![3.0]]).unwrap();
        let cfg = LlaConfig::default();
        let a = lla_loglik(&net, &LogRates::new(vec![-10.0]).unwrap(), &traj, &cfg).unwrap();
        let b = lla_loglik(&net, &LogRates::new(vec![-300.0]).unwrap(), &traj, &cfg).unwrap();
        assert!(b < a && b < -1e100);
    }

    #[test]
    fn all_zero_rates_singular() {
        let net = parse_network("A -> B").unwrap();
        let traj = Trajectory::for_network(&net, vec![0.0, 1.0], vec![vec![0.0, 1.0], vec![0.0, 1.0]]).unwrap();
        let r = LogRates::new(vec![0.0]).unwrap();
        assert!(matches!(
            lla_loglik(&net, &r, &traj, &LlaConfig::default()),
            Err(Error::Singular { interval: 1, .. })
        ));
        let ridge = LlaConfig { ridge: 1.0, ..Default::default() };
        assert!(lla_loglik(&net, &r, &traj, &ridge).unwrap().is_finite());
    }

    #[test]
    fn one_shot_runs_one_reweight() {
        let net = parse_network("0 -> A\nA -> 0").unwrap();
        let traj = Trajectory::for_network(
            &net,
            vec![0.0, 1.0, 2.0, 3.0],
            vec![vec![10.0], vec![14.0], vec![13.0], vec![17.0]],
        )
        .unwrap();
        let cfg = LlaConfig { mode: LlaMode::OneShot, ..Default::default() };
        let fit = lla_fit(&net, &traj, &cfg).unwrap();
        assert_eq!(fit.iterations, 1);
        assert!(fit.bic.is_none());
        let json = serde_json::to_value(&fit).unwrap();
        assert!(json.get("bic").is_none());
    }
}
