//! LLA estimator and KL metric against constructed instances and a dense
//! Gaussian density.

use leh::eval::systems::builtin_system;
use leh::eval::{kl_divergence, simulate_dataset, GridDesign};
use leh::lla::{lla_fit, lla_loglik, LlaConfig};
use leh::rng::stream;
use leh::{parse_network, LogRates, Trajectory};
use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;

#[test]
fn noiseless_linear_system_is_recovered_exactly() {
    // ΔY = V·diag(c)·θ·dt with θ = (20, 0.5, 0.25).
    let net = parse_network("0 -> A\nA -> B\nB -> 0").unwrap();
    let traj = Trajectory::for_network(
        &net,
        vec![0.0, 1.0, 2.0, 6.0, 8.0],
        vec![
            vec![100.0, 40.0],
            vec![70.0, 80.0],
            vec![55.0, 95.0],
            vec![25.0, 110.0],
            vec![40.0, 80.0],
        ],
    )
    .unwrap();
    let fit = lla_fit(&net, &traj, &LlaConfig::default()).unwrap();
    for (b, theta) in fit.beta_hat.iter().zip([20.0_f64, 0.5, 0.25]) {
        assert!((b.exp() - theta).abs() < 1e-9 * theta, "{} vs {theta}", b.exp());
    }
}

fn dense_loglik(net: &leh::ReactionNetwork, rates: &LogRates, traj: &Trajectory) -> f64 {
    let v = net.net_effect();
    let mut total = 0.0;
    for i in 1..=traj.n_intervals() {
        let mu = DVector::from_vec(net.interval_rates(rates, traj.state(i - 1), traj.dt(i)).unwrap());
        let cov = v * DMatrix::from_diagonal(&mu) * v.transpose();
        let resid = DVector::from_vec(traj.increment(i)) - v * &mu;
        let chol = Cholesky::new(cov.clone()).expect("full-rank covariance");
        let ln_det: f64 = chol.l().diagonal().iter().map(|d| 2.0 * d.ln()).sum();
        let quad = resid.dot(&chol.solve(&resid));
        total -= 0.5 * (resid.len() as f64 * (2.0 * std::f64::consts::PI).ln() + ln_det + quad);
    }
    total
}

#[test]
fn loglik_matches_dense_gaussian() {
    let sys = builtin_system("cell-diff").unwrap();
    let mut rng = stream(71, 0);
    for case in 0..10 {
        let traj = simulate_dataset(
            &sys.network,
            &sys.beta_true,
            &sys.y0,
            GridDesign { jump: 15, n_intervals: 4 },
            71,
            case + 1,
        )
        .unwrap();
        let beta: Vec<f64> = sys.beta_true.as_slice().iter().map(|b| b + rng.random_range(-0.7..0.7)).collect();
        let rates = LogRates::new(beta).unwrap();
        let ours = lla_loglik(&sys.network, &rates, &traj, &LlaConfig::default()).unwrap();
        let dense = dense_loglik(&sys.network, &rates, &traj);
        assert!((ours - dense).abs() < 1e-8 * dense.abs(), "case {case}: {ours} vs {dense}");
    }
}

#[test]
fn reordering_reactions_reorders_estimates() {
    let a = parse_network("0 -> A @ b\nA -> 0 @ d\nA -> B @ c\nB -> 0 @ e").unwrap();
    let b = parse_network("species: A B\nB -> 0 @ e\nA -> B @ c\n0 -> A @ b\nA -> 0 @ d").unwrap();
    let truth = LogRates::new(vec![3.0, -1.0, -0.5, -1.2]).unwrap();
    let rec = leh::gillespie::simulate(&a, &truth, &[20.0, 10.0], 3.0, 5).unwrap();
    let grid: Vec<f64> = (0..=6).map(|k| 0.5 * k as f64).collect();
    let traj = leh::gillespie::observe(&a, &rec, &grid).unwrap();
    let fa = lla_fit(&a, &traj, &LlaConfig::default()).unwrap();
    let fb = lla_fit(&b, &traj, &LlaConfig::default()).unwrap();
    let by_name = |f: &leh::em::FitResult, n: &str| {
        f.beta_hat[f.param_names.iter().position(|p| p == n).unwrap()]
    };
    for n in ["b", "c", "d", "e"] {
        assert!((by_name(&fa, n) - by_name(&fb, n)).abs() < 1e-8, "{n}");
    }
}

#[test]
fn perturbing_a_rate_raises_kl() {
    let sys = builtin_system("cell-diff").unwrap();
    let design = GridDesign { jump: 10, n_intervals: 5 };
    let kl = |b: &[f64]| {
        kl_divergence(&sys.network, &sys.beta_true, &LogRates::new(b.to_vec()).unwrap(), &sys.y0, design, 40, 3).unwrap()
    };
    let base = kl(sys.beta_true.as_slice());
    assert!(base.kl.abs() <= 3.0 * base.se.max(1e-12));
    for k in 0..6 {
        let mut prev = base.kl;
        for delta in [1.0, 2.0] {
            let mut b = sys.beta_true.as_slice().to_vec();
            b[k] += delta;
            let est = kl(&b);
            assert!(est.kl > prev + 3.0 * est.se, "beta_{} + {delta}: {} (se {}) vs {prev}", k + 1, est.kl, est.se);
            prev = est.kl;
        }
    }
}
