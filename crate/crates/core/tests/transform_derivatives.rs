//! Analytic derivatives of the marginal transform against finite differences.

use leh::gauss_gamma::{evaluate, transform};

const SHAPES: [f64; 6] = [0.5, 2.0, 10.0, 50.0, 200.0, 1000.0];

fn grid(mu: f64) -> impl Iterator<Item = f64> {
    let sd = mu.sqrt();
    (0..50).map(move |k| mu - 3.0 * sd + 6.0 * sd * k as f64 / 49.0)
}

/// Richardson-extrapolated central differences `(G', G'')`.
fn finite_differences(z: f64, mu: f64) -> (f64, f64) {
    let g = |z: f64| transform(z, mu).unwrap();
    let d1 = |h: f64| (g(z + h) - g(z - h)) / (2.0 * h);
    let d2 = |h: f64| (g(z + h) - 2.0 * g(z) + g(z - h)) / (h * h);
    let h1 = 2e-3 * mu.sqrt();
    let h2 = 2e-2 * mu.sqrt();
    let j = (4.0 * d1(h1 / 2.0) - d1(h1)) / 3.0;
    let hs = (4.0 * d2(h2 / 2.0) - d2(h2)) / 3.0;
    (j, hs)
}

#[test]
fn jacobian_and_hessian_match_finite_differences() {
    let mut worst_j = 0.0_f64;
    let mut worst_h = 0.0_f64;
    for mu in SHAPES {
        for z in grid(mu) {
            let pt = evaluate(z, mu).unwrap();
            let (j_fd, h_fd) = finite_differences(z, mu);
            let rel_j = ((pt.d1 - j_fd) / j_fd).abs();
            let rel_h = ((pt.d2 - h_fd) / h_fd).abs();
            worst_j = worst_j.max(rel_j);
            worst_h = worst_h.max(rel_h);
        }
    }
    eprintln!("worst relative error: J {worst_j:e}, H {worst_h:e}");
    assert!(worst_j < 1e-5);
    assert!(worst_h < 1e-4);
}
