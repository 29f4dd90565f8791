//! Dense BFGS minimizer with a backtracking Armijo line search.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BfgsConfig {
    pub max_iter: usize,
    /// Stop when `‖∇f‖∞ ≤ grad_tol · max(1, |f|)`.
    pub grad_tol: f64,
    /// Largest allowed change of any coordinate in one step.
    pub max_step: f64,
}

impl Default for BfgsConfig {
    fn default() -> Self {
        BfgsConfig {
            max_iter: 200,
            grad_tol: 1e-11,
            max_step: 5.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BfgsOutcome {
    pub x: Vec<f64>,
    pub f: f64,
    pub grad: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

fn inf_norm(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Minimize `f` from `x0`. `f` returns the value and gradient; a non-finite
/// value marks the point as infeasible and the line search backs off.
pub fn minimize<F>(mut f: F, x0: &[f64], cfg: &BfgsConfig) -> BfgsOutcome
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let n = x0.len();
    let mut x = DVector::from_column_slice(x0);
    let (mut fx, g) = f(x.as_slice());
    let mut g = DVector::from_vec(g);
    let mut h = DMatrix::<f64>::identity(n, n);
    let mut first = true;
    let mut iterations = 0;
    let mut converged = false;

    if !fx.is_finite() {
        return BfgsOutcome {
            x: x0.to_vec(),
            f: fx,
            grad: g.as_slice().to_vec(),
            iterations,
            converged,
        };
    }

    while iterations < cfg.max_iter {
        if inf_norm(&g) <= cfg.grad_tol * fx.abs().max(1.0) {
            converged = true;
            break;
        }
        iterations += 1;
        let mut d = -(&h * &g);
        let mut slope = g.dot(&d);
        if !(slope < 0.0) {
            h = DMatrix::identity(n, n);
            d = -g.clone();
            slope = g.dot(&d);
            first = true;
        }
        let mut alpha = if first { 1.0 / inf_norm(&g).max(1.0) } else { 1.0 };
        let dmax = inf_norm(&d);
        if alpha * dmax > cfg.max_step {
            alpha = cfg.max_step / dmax;
        }

        let mut accepted = None;
        for _ in 0..60 {
            let trial = &x + &d * alpha;
            let (ft, gt) = f(trial.as_slice());
            if ft.is_finite() && ft <= fx + 1e-4 * alpha * slope {
                accepted = Some((trial, ft, DVector::from_vec(gt)));
                break;
            }
            alpha *= 0.5;
        }
        let Some((x_new, f_new, g_new)) = accepted else {
            // No decrease along the direction: at the resolution limit.
            converged = inf_norm(&g) <= 1e-6 * fx.abs().max(1.0);
            break;
        };

        let s = &x_new - &x;
        let y = &g_new - &g;
        let sy = s.dot(&y);
        let small_change = inf_norm(&s) <= 1e-14 * inf_norm(&x).max(1.0);
        x = x_new;
        fx = f_new;
        g = g_new;
        if sy > 1e-12 * s.norm() * y.norm() {
            if first {
                h = DMatrix::identity(n, n) * (sy / y.dot(&y));
                first = false;
            }
            let rho = 1.0 / sy;
            let hy = &h * &y;
            let yhy = y.dot(&hy);
            // H' = H - ρ(s yᵀH + H y sᵀ) + (ρ² yᵀHy + ρ) s sᵀ
            h -= (&s * hy.transpose() + &hy * s.transpose()) * rho;
            h += (&s * s.transpose()) * (rho * rho * yhy + rho);
        }
        if small_change {
            converged = inf_norm(&g) <= 1e-6 * fx.abs().max(1.0);
            break;
        }
    }
    if !converged && inf_norm(&g) <= cfg.grad_tol * fx.abs().max(1.0) {
        converged = true;
    }
    BfgsOutcome {
        x: x.as_slice().to_vec(),
        f: fx,
        grad: g.as_slice().to_vec(),
        iterations,
        converged,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rosenbrock() {
        let f = |x: &[f64]| {
            let (a, b) = (x[0], x[1]);
            let v = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
            let g = vec![-2.0 * (1.0 - a) - 400.0 * a * (b - a * a), 200.0 * (b - a * a)];
            (v, g)
        };
        let out = minimize(f, &[-1.2, 1.0], &BfgsConfig::default());
        assert!(out.converged);
        assert!((out.x[0] - 1.0).abs() < 1e-6 && (out.x[1] - 1.0).abs() < 1e-6, "{out:?}");
    }

    #[test]
    fn badly_scaled_separable() {
        // Shape of a latent Q term: c·e^x + s·e^{-x} + n·x.
        let f = |x: &[f64]| {
            let mut v = 0.0;
            let mut g = vec![0.0; 2];
            for (i, (c, s)) in [(4000.0, 3900.0), (0.3, 0.2)].iter().enumerate() {
                v += c * x[i].exp() + s * (-x[i]).exp() + 10.0 * x[i];
                g[i] = c * x[i].exp() - s * (-x[i]).exp() + 10.0;
            }
            (v, g)
        };
        let out = minimize(f, &[3.0, -3.0], &BfgsConfig::default());
        assert!(out.converged, "{out:?}");
        assert!(out.grad.iter().all(|g| g.abs() < 1e-6));
    }

    #[test]
    fn infeasible_start_returns_start() {
        let out = minimize(|_| (f64::NAN, vec![0.0]), &[1.0], &BfgsConfig::default());
        assert_eq!(out.x, vec![1.0]);
        assert!(!out.converged);
    }
}
