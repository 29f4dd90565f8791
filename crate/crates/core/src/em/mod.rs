//! Q-function, M-step and the EM driver, plus Q-based BIC.
//!
//! The latent part of Q treats each active `Z_ij` as `Normal(μ_ij, μ_ij)`
//! with the filter's posterior moments plugged in:
//!
//! ```text
//! -½ Σ_i Σ_j [ ln 2π + ln μ_ij + (ẑ_ij² + V_ij,jj)/μ_ij - 2 ẑ_ij + μ_ij ]
//! ```
//!
//! with `μ_ij = dt_i · c_ij · exp(β_m(j))`. The active set is frozen at the
//! filter's rates so the objective stays smooth in `β`.

pub mod bfgs;

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::ekf::{filter_pass, FilterConfig, FilterState};
use crate::error::{Error, Result};
use crate::network::{LogRates, ReactionNetwork, Trajectory};
pub use bfgs::BfgsConfig;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmConfig {
    pub tol: f64,
    pub maxit: usize,
    pub filter: FilterConfig,
    pub optimizer: BfgsConfig,
}

impl Default for EmConfig {
    fn default() -> Self {
        EmConfig {
            tol: 0.002,
            maxit: 300,
            filter: FilterConfig::default(),
            optimizer: BfgsConfig::default(),
        }
    }
}

impl EmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::InvalidArgument(format!("tol must be positive, got {}", self.tol)));
        }
        if self.maxit == 0 {
            return Err(Error::InvalidArgument("maxit must be at least 1".into()));
        }
        self.filter.validate()
    }
}

/// Outcome of an estimator run; serializes to the fit JSON document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub estimator: String,
    pub beta_hat: Vec<f64>,
    pub param_names: Vec<String>,
    pub iterations: usize,
    /// Max absolute change of `β` per iteration.
    pub err_trace: Vec<f64>,
    /// `Q(β_new | β_old)` per EM iteration.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub q_trace: Vec<f64>,
    /// `Q(β̂ | β̂)`; for LLA the Gaussian log-likelihood.
    pub q_value: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q_latent: Option<f64>,
    /// Absent when `σ² = 0`, where the observation term is undefined.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q_observed: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bic: Option<f64>,
    pub converged: bool,
    pub n_intervals: usize,
    pub n_params: usize,
    /// Largest diagonal loading used by the filter.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jitter: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default)]
    pub config: serde_json::Value,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl FitResult {
    pub fn rates(&self) -> Result<LogRates> {
        LogRates::new(self.beta_hat.clone())
    }
}

#[derive(Debug, Clone, Copy)]
struct Term {
    interval: usize,
    reaction: usize,
    param: usize,
    /// `dt · c_ij`, so that `μ = exposure · θ`.
    exposure: f64,
    z: f64,
    /// `ẑ² + V_jj`.
    second: f64,
}

/// Latent Q terms frozen at a set of filter states.
#[derive(Debug, Clone)]
pub struct LatentQ {
    terms: Vec<Term>,
    n_params: usize,
}

impl LatentQ {
    pub fn new(net: &ReactionNetwork, traj: &Trajectory, states: &[FilterState]) -> Result<Self> {
        traj.check_against(net)?;
        if states.len() != traj.n_intervals() {
            return Err(Error::Dimension(format!(
                "{} filter states for {} intervals",
                states.len(),
                traj.n_intervals()
            )));
        }
        let map = net.param_map();
        let mut terms = Vec::new();
        for (i, st) in states.iter().enumerate() {
            let factors = net.propensity_factors(traj.state(i))?;
            let dt = traj.dt(i + 1);
            for j in 0..net.n_reactions() {
                if !st.active[j] {
                    continue;
                }
                let exposure = dt * factors[j];
                if !(exposure > 0.0) {
                    return Err(Error::Dimension(format!(
                        "filter state {} marks reaction {} active but its propensity is zero",
                        i + 1,
                        j + 1
                    )));
                }
                let z = st.z_upd[j];
                terms.push(Term {
                    interval: i + 1,
                    reaction: j + 1,
                    param: map[j],
                    exposure,
                    z,
                    second: z * z + st.v_upd[(j, j)],
                });
            }
        }
        Ok(LatentQ {
            terms,
            n_params: net.n_params(),
        })
    }

    fn check_beta(&self, beta: &[f64]) -> Result<()> {
        if beta.len() != self.n_params {
            return Err(Error::Dimension(format!(
                "{} log-rates for {} parameters",
                beta.len(),
                self.n_params
            )));
        }
        Ok(())
    }

    /// Value without finiteness checks.
    pub fn value_unchecked(&self, beta: &[f64]) -> f64 {
        let mut acc = 0.0;
        for t in &self.terms {
            let b = beta[t.param];
            let mu = t.exposure * b.exp();
            acc += LN_2PI + t.exposure.ln() + b + t.second / mu - 2.0 * t.z + mu;
        }
        -0.5 * acc
    }

    pub fn value(&self, beta: &[f64]) -> Result<f64> {
        self.check_beta(beta)?;
        let v = self.value_unchecked(beta);
        if v.is_finite() {
            return Ok(v);
        }
        for t in &self.terms {
            let mu = t.exposure * beta[t.param].exp();
            let term = t.exposure.ln() + beta[t.param] + t.second / mu + mu;
            if !term.is_finite() {
                return Err(Error::Numeric {
                    interval: t.interval,
                    msg: format!("latent Q term of reaction {} is {term}", t.reaction),
                });
            }
        }
        Err(Error::NonFinite(format!("latent Q is {v}")))
    }

    pub fn gradient_unchecked(&self, beta: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.n_params];
        for t in &self.terms {
            let mu = t.exposure * beta[t.param].exp();
            g[t.param] -= 0.5 * (1.0 - t.second / mu + mu);
        }
        g
    }

    pub fn gradient(&self, beta: &[f64]) -> Result<Vec<f64>> {
        self.check_beta(beta)?;
        let g = self.gradient_unchecked(beta);
        if let Some(m) = g.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!("Q gradient component {} is {}", m + 1, g[m])));
        }
        Ok(g)
    }

    /// Number of active latent coordinates summed over intervals.
    pub fn n_terms(&self) -> usize {
        self.terms.len()
    }
}

/// Latent part of `Q(β | β*)` for filter states computed at `β*`.
pub fn q_latent(
    rates: &LogRates,
    states: &[FilterState],
    net: &ReactionNetwork,
    traj: &Trajectory,
) -> Result<f64> {
    LatentQ::new(net, traj, states)?.value(rates.as_slice())
}

/// `∂ q_latent / ∂β`.
pub fn q_gradient(
    rates: &LogRates,
    states: &[FilterState],
    net: &ReactionNetwork,
    traj: &Trajectory,
) -> Result<Vec<f64>> {
    LatentQ::new(net, traj, states)?.gradient(rates.as_slice())
}

/// Observation part of Q. `None` when `σ² = 0`.
pub fn q_observed(
    states: &[FilterState],
    net: &ReactionNetwork,
    traj: &Trajectory,
    cfg: &FilterConfig,
) -> Result<Option<f64>> {
    traj.check_against(net)?;
    if states.len() != traj.n_intervals() {
        return Err(Error::Dimension(format!(
            "{} filter states for {} intervals",
            states.len(),
            traj.n_intervals()
        )));
    }
    let sigma2 = cfg.sigma2;
    if sigma2 == 0.0 {
        return Ok(None);
    }
    let v = net.net_effect();
    let vtv = v.transpose() * v;
    let p = net.n_species() as f64;
    let n = traj.n_intervals() as f64;
    let mut acc = 0.0;
    for (i, st) in states.iter().enumerate() {
        let dy = nalgebra::DVector::from_vec(traj.increment(i + 1));
        let r = st.g.len();
        let mean = nalgebra::DVector::from_fn(r, |j, _| {
            if cfg.taylor_order >= 2 {
                st.g[j] + 0.5 * st.v_upd[(j, j)] * st.hess[j]
            } else {
                st.g[j]
            }
        });
        let vm = v * &mean;
        let mut trace = 0.0;
        for a in 0..r {
            for b in 0..r {
                trace += vtv[(a, b)] * st.jac[b] * st.v_upd[(b, a)] * st.jac[a];
            }
        }
        acc += dy.dot(&dy) - 2.0 * dy.dot(&vm) + vm.dot(&vm) + trace;
    }
    let value = -0.5 * n * p * (2.0 * PI * sigma2).ln() - 0.5 * acc / sigma2;
    if !value.is_finite() {
        return Err(Error::NonFinite(format!("observed Q is {value}")));
    }
    Ok(Some(value))
}

/// Result of one M-step.
#[derive(Debug, Clone, PartialEq)]
pub struct MStep {
    pub beta: Vec<f64>,
    pub q: f64,
    pub converged: bool,
    pub iterations: usize,
}

/// Maximize the latent Q over `β` by BFGS from `beta_init`.
///
/// Never returns a point with a lower Q than `beta_init`.
pub fn m_step(
    states: &[FilterState],
    net: &ReactionNetwork,
    traj: &Trajectory,
    beta_init: &LogRates,
    cfg: &EmConfig,
) -> Result<MStep> {
    let q = LatentQ::new(net, traj, states)?;
    m_step_with(&q, beta_init.as_slice(), &cfg.optimizer)
}

fn m_step_with(q: &LatentQ, beta_init: &[f64], opt: &BfgsConfig) -> Result<MStep> {
    let q_init = q.value(beta_init)?;
    let out = bfgs::minimize(
        |b| {
            let v = q.value_unchecked(b);
            let g = q.gradient_unchecked(b);
            (-v, g.into_iter().map(|x| -x).collect())
        },
        beta_init,
        opt,
    );
    let q_out = -out.f;
    if q_out.is_finite() && q_out >= q_init {
        Ok(MStep {
            beta: out.x,
            q: q_out,
            converged: out.converged,
            iterations: out.iterations,
        })
    } else {
        Ok(MStep {
            beta: beta_init.to_vec(),
            q: q_init,
            converged: out.converged,
            iterations: out.iterations,
        })
    }
}

/// `-2Q + d ln N`.
pub fn bic_value(q: f64, n_intervals: usize, d_params: usize) -> f64 {
    -2.0 * q + d_params as f64 * (n_intervals as f64).ln()
}

/// BIC of a fit from its `Q(β̂ | β̂)`.
pub fn bic(fit: &FitResult, n_intervals: usize, d_params: usize) -> Result<f64> {
    if n_intervals == 0 {
        return Err(Error::InvalidArgument("BIC needs at least one interval".into()));
    }
    Ok(bic_value(fit.q_value, n_intervals, d_params))
}

fn wrap_estep(it: usize, e: Error) -> Error {
    match e {
        Error::Numeric { interval, msg } => Error::Numeric {
            interval,
            msg: format!("E-step of EM iteration {it}: {msg}"),
        },
        Error::Singular { interval, msg } => Error::Singular {
            interval,
            msg: format!("E-step of EM iteration {it}: {msg}"),
        },
        Error::NonFinite(msg) => Error::NonFinite(format!("E-step of EM iteration {it}: {msg}")),
        other => other,
    }
}

fn max_jitter(states: &[FilterState]) -> f64 {
    states.iter().fold(0.0, |m, s| m.max(s.jitter_used))
}

/// EM: alternate the filter pass and the M-step until the largest change
/// of any `β` component is at most `tol`, or `maxit` iterations.
pub fn em_fit(
    net: &ReactionNetwork,
    traj: &Trajectory,
    beta_init: &LogRates,
    cfg: &EmConfig,
) -> Result<FitResult> {
    cfg.validate()?;
    traj.check_against(net)?;
    if beta_init.len() != net.n_params() {
        return Err(Error::Dimension(format!(
            "{} initial log-rates for {} parameters",
            beta_init.len(),
            net.n_params()
        )));
    }
    let mut beta = beta_init.as_slice().to_vec();
    let mut err_trace = Vec::new();
    let mut q_trace = Vec::new();
    let mut warnings = Vec::new();
    let mut jitter: f64 = 0.0;
    let mut it = 0;
    loop {
        it += 1;
        let rates = LogRates::new(beta.clone())?;
        let states = filter_pass(net, &rates, traj, &cfg.filter).map_err(|e| wrap_estep(it, e))?;
        jitter = jitter.max(max_jitter(&states));
        let q = LatentQ::new(net, traj, &states)?;
        let step = m_step_with(&q, &beta, &cfg.optimizer)?;
        if !step.converged {
            warnings.push(format!("M-step of iteration {it} stopped before its gradient tolerance"));
        }
        let err = step
            .beta
            .iter()
            .zip(&beta)
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
        err_trace.push(err);
        q_trace.push(step.q);
        beta = step.beta;
        if err <= cfg.tol || it >= cfg.maxit {
            break;
        }
    }
    let converged = err_trace.last().is_some_and(|e| *e <= cfg.tol);
    if !converged {
        warnings.push(format!("EM stopped at maxit = {} before reaching tol", cfg.maxit));
    }
    let rates = LogRates::new(beta.clone())?;
    let states = filter_pass(net, &rates, traj, &cfg.filter).map_err(|e| wrap_estep(it + 1, e))?;
    jitter = jitter.max(max_jitter(&states));
    let ql = LatentQ::new(net, traj, &states)?.value(&beta)?;
    let qo = q_observed(&states, net, traj, &cfg.filter)?;
    if qo.is_none() {
        warnings.push("sigma2 = 0: observation term of Q omitted, BIC uses the latent term".into());
    }
    let q_value = ql + qo.unwrap_or(0.0);
    let n = traj.n_intervals();
    Ok(FitResult {
        estimator: "em".into(),
        beta_hat: beta,
        param_names: net.param_names().to_vec(),
        iterations: it,
        err_trace,
        q_trace,
        q_value,
        q_latent: Some(ql),
        q_observed: qo,
        bic: Some(bic_value(q_value, n, net.n_params())),
        converged,
        n_intervals: n,
        n_params: net.n_params(),
        jitter: Some(jitter),
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

    fn birth_traj() -> (ReactionNetwork, Trajectory) {
        let net = parse_network("0 -> A").unwrap();
        let traj = Trajectory::for_network(
            &net,
            vec![0.0, 1.0, 2.5, 3.0],
            vec![vec![0.0], vec![4.0], vec![9.0], vec![11.0]],
        )
        .unwrap();
        (net, traj)
    }

    #[test]
    fn bic_arithmetic() {
        assert!((bic_value(-100.0, 50, 6) - 223.47).abs() < 0.01);
        assert_eq!(bic_value(-100.0, 50, 0), 200.0);
    }

    #[test]
    fn no_intervals_no_terms() {
        let (net, _) = birth_traj();
        let q = LatentQ { terms: vec![], n_params: net.n_params() };
        assert_eq!(q.value(&[0.3]).unwrap(), 0.0);
    }

    #[test]
    fn latent_q_at_prior_moments() {
        let net = parse_network("0 -> A\nA -> 0").unwrap();
        let traj = Trajectory::for_network(&net, vec![0.0, 2.0], vec![vec![3.0], vec![5.0]]).unwrap();
        let rates = LogRates::new(vec![0.4, -0.7]).unwrap();
        let mut st = filter_pass(&net, &rates, &traj, &FilterConfig::default()).unwrap();
        st[0].z_upd = st[0].mu.clone();
        st[0].v_upd.fill(0.0);
        let q = q_latent(&rates, &st, &net, &traj).unwrap();
        let mu = [2.0 * 0.4_f64.exp(), 2.0 * 3.0 * (-0.7_f64).exp()];
        let expected: f64 = -0.5 * mu.iter().map(|m| LN_2PI + m.ln() + m - 2.0 * m + m).sum::<f64>();
        assert_relative_eq!(q, expected, max_relative = 1e-13);
    }

    #[test]
    fn m_step_matches_closed_form() {
        let (net, traj) = birth_traj();
        let rates = LogRates::new(vec![1.0]).unwrap();
        let cfg = EmConfig::default();
        let st = filter_pass(&net, &rates, &traj, &cfg.filter).unwrap();
        let out = m_step(&st, &net, &traj, &rates, &cfg).unwrap();
        // (Σ e) θ² + n θ - Σ s/e = 0
        let e: Vec<f64> = (1..=3).map(|i| traj.dt(i)).collect();
        let s: Vec<f64> = st.iter().map(|x| x.z_upd[0].powi(2) + x.v_upd[(0, 0)]).collect();
        let a: f64 = e.iter().sum();
        let c: f64 = s.iter().zip(&e).map(|(s, e)| s / e).sum();
        let theta = (-3.0 + (9.0 + 4.0 * a * c).sqrt()) / (2.0 * a);
        assert_relative_eq!(out.beta[0], theta.ln(), max_relative = 1e-9);

        let again = m_step(&st, &net, &traj, &LogRates::new(out.beta.clone()).unwrap(), &cfg).unwrap();
        assert!((again.beta[0] - out.beta[0]).abs() < 1e-10);
    }

    #[test]
    fn infinite_tol_is_one_iteration() {
        let (net, traj) = birth_traj();
        let cfg = EmConfig { tol: f64::INFINITY, ..Default::default() };
        let fit = em_fit(&net, &traj, &LogRates::new(vec![0.0]).unwrap(), &cfg).unwrap();
        assert_eq!(fit.iterations, 1);
        assert!(fit.converged);
        assert!(fit.q_observed.is_none());
    }

    #[test]
    fn observed_term_limit() {
        let (net, traj) = birth_traj();
        let cfg = FilterConfig { sigma2: 1e12, ..Default::default() };
        let rates = LogRates::new(vec![1.0]).unwrap();
        let st = filter_pass(&net, &rates, &traj, &cfg).unwrap();
        let q = q_observed(&st, &net, &traj, &cfg).unwrap().unwrap();
        let constant = -0.5 * 3.0 * (2.0 * PI * 1e12).ln();
        assert!((q - constant).abs() < 1e-9 * constant.abs());
        assert!(q_observed(&st, &net, &traj, &FilterConfig::default()).unwrap().is_none());
    }

    #[test]
    fn config_validation() {
        assert!(EmConfig { tol: 0.0, ..Default::default() }.validate().is_err());
        assert!(EmConfig { maxit: 0, ..Default::default() }.validate().is_err());
    }
}
