//! Log-gamma, regularized incomplete gamma, Gamma quantile and Normal CDF.
//!
//! Everything here is written against `f64` only. The incomplete gamma uses
//! the power series below `x = a + 1` and a Lentz continued fraction above
//! it; the log prefactor `a ln x - x - ln Γ(a)` is assembled from a Stirling
//! form for large `a` so that the cancellation between `a ln x` and
//! `ln Γ(a)` does not eat the precision at large shapes.

use std::f64::consts::PI;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;
const EPS: f64 = f64::EPSILON;
// Series and continued fraction both need O(sqrt(a)) terms near x = a.
const MAX_TERMS: usize = 200_000;

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// Remainder of Stirling's series, `ln Γ(a) - [(a - ½) ln a - a + ½ ln 2π]`.
fn stirling_remainder(a: f64) -> f64 {
    let r = 1.0 / a;
    let r2 = r * r;
    r * (1.0 / 12.0
        + r2 * (-1.0 / 360.0
            + r2 * (1.0 / 1260.0
                + r2 * (-1.0 / 1680.0
                    + r2 * (1.0 / 1188.0 + r2 * (-691.0 / 360_360.0 + r2 / 156.0))))))
}

/// Natural log of the Gamma function for `a > 0`.
pub fn ln_gamma(a: f64) -> f64 {
    if a < 0.5 {
        return ln_gamma(a + 1.0) - a.ln();
    }
    if a >= 10.0 {
        return (a - 0.5) * a.ln() - a + LN_SQRT_2PI + stirling_remainder(a);
    }
    let x = a - 1.0;
    let mut acc = LANCZOS[0];
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + LANCZOS_G + 0.5;
    LN_SQRT_2PI + (x + 0.5) * t.ln() - t + acc.ln()
}

/// `ln(1 + t) - t`, accurate for small `t`.
fn log1pmx(t: f64) -> f64 {
    if t.abs() < 0.25 {
        // -t²/2 + t³/3 - t⁴/4 + ...
        let mut pow = t * t;
        let mut sum = 0.0;
        let mut k = 2.0;
        loop {
            let term = pow / k;
            if (k as i32) % 2 == 0 {
                sum -= term;
            } else {
                sum += term;
            }
            if term.abs() <= EPS * sum.abs() * 0.25 {
                break;
            }
            pow *= t;
            k += 1.0;
        }
        sum
    } else {
        t.ln_1p() - t
    }
}

/// `a ln x - x - ln Γ(a)`, the log of `x^a e^{-x} / Γ(a)`.
pub fn ln_gamma_prefactor(a: f64, x: f64) -> f64 {
    if a >= 10.0 {
        let t = (x - a) / a;
        a * log1pmx(t) + 0.5 * a.ln() - LN_SQRT_2PI - stirling_remainder(a)
    } else {
        a * x.ln() - x - ln_gamma(a)
    }
}

/// Log density of the unit-scale Gamma distribution with the given shape.
pub fn ln_gamma_pdf(shape: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return f64::NEG_INFINITY;
    }
    ln_gamma_prefactor(shape, x) - x.ln()
}

/// Regularized incomplete gamma pair `(P(a, x), Q(a, x))`.
///
/// Both tails are produced directly so callers never form `1 - P` in the
/// tail where it cancels.
pub fn gamma_pq(a: f64, x: f64) -> (f64, f64) {
    debug_assert!(a > 0.0);
    if x <= 0.0 {
        return (0.0, 1.0);
    }
    if x.is_infinite() {
        return (1.0, 0.0);
    }
    let pref = ln_gamma_prefactor(a, x).exp();
    if x < a + 1.0 {
        let mut ap = a;
        let mut term = 1.0 / a;
        let mut sum = term;
        for _ in 0..MAX_TERMS {
            ap += 1.0;
            term *= x / ap;
            sum += term;
            if term < sum * EPS * 0.5 {
                break;
            }
        }
        let p = (pref * sum).min(1.0);
        (p, 1.0 - p)
    } else {
        // Modified Lentz on the Legendre continued fraction for Γ(a, x).
        let tiny = 1e-300;
        let mut b = x + 1.0 - a;
        let mut c = 1.0 / tiny;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..MAX_TERMS {
            let an = -(i as f64) * (i as f64 - a);
            b += 2.0;
            d = an * d + b;
            if d.abs() < tiny {
                d = tiny;
            }
            c = b + an / c;
            if c.abs() < tiny {
                c = tiny;
            }
            d = 1.0 / d;
            let delta = d * c;
            h *= delta;
            if (delta - 1.0).abs() < EPS * 0.5 {
                break;
            }
        }
        let q = (pref * h).min(1.0);
        (1.0 - q, q)
    }
}

/// Regularized lower incomplete gamma `P(a, x)`.
pub fn gamma_p(a: f64, x: f64) -> f64 {
    gamma_pq(a, x).0
}

/// Regularized upper incomplete gamma `Q(a, x)`.
pub fn gamma_q(a: f64, x: f64) -> f64 {
    gamma_pq(a, x).1
}

/// Complementary error function, through `erfc(x) = Q(½, x²)`.
pub fn erfc(x: f64) -> f64 {
    if x >= 0.0 {
        gamma_q(0.5, x * x)
    } else {
        1.0 + gamma_p(0.5, x * x)
    }
}

pub fn erf(x: f64) -> f64 {
    let p = gamma_p(0.5, x * x);
    if x >= 0.0 {
        p
    } else {
        -p
    }
}

/// Standard Normal lower and upper tail probabilities `(Φ(t), 1 - Φ(t))`.
pub fn std_normal_tails(t: f64) -> (f64, f64) {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    (0.5 * erfc(-t * s), 0.5 * erfc(t * s))
}

/// Log density of `Normal(mean, var)`.
pub fn ln_normal_pdf(z: f64, mean: f64, var: f64) -> f64 {
    let d = z - mean;
    -0.5 * d * d / var - 0.5 * (2.0 * PI * var).ln()
}

/// Rough standard Normal quantile (absolute error below 5e-4), only used to
/// seed the Gamma quantile iteration.
fn rough_normal_quantile(p: f64) -> f64 {
    let (tail, sign) = if p < 0.5 { (p, -1.0) } else { (1.0 - p, 1.0) };
    let t = (-2.0 * tail.max(1e-300).ln()).sqrt();
    let num = 2.515_517 + t * (0.802_853 + t * 0.010_328);
    let den = 1.0 + t * (1.432_788 + t * (0.189_269 + t * 0.001_308));
    sign * (t - num / den)
}

/// Log of the Gamma(shape, 1) quantile, given both tails `p` and `q = 1 - p`.
///
/// Newton iteration on `u = ln x`, safeguarded by a bracket that falls back
/// to bisection whenever the Newton step leaves it. The lower tail is solved
/// when `p <= ½`, the upper tail otherwise.
pub(crate) fn gamma_quantile_ln(p: f64, q: f64, shape: f64) -> f64 {
    let a = shape;
    let lower = p <= 0.5;
    let ln_gamma_a1 = ln_gamma(a + 1.0);

    // P(a, x) = x^a / Γ(a + 1) · (1 + O(x)); below e^-40 this is exact to
    // double precision.
    let small_x = (p.ln() + ln_gamma_a1) / a;
    if lower && small_x < -40.0 {
        return small_x;
    }

    // h(u) increasing in u in both branches.
    let h = |u: f64| -> f64 {
        let (pp, qq) = gamma_pq(a, u.exp());
        if lower {
            pp - p
        } else {
            q - qq
        }
    };

    let mut u = {
        let w = rough_normal_quantile(p);
        let wh = a * (1.0 - 1.0 / (9.0 * a) + w / (3.0 * a.sqrt())).powi(3);
        if a >= 1.0 && wh > 0.0 {
            wh.ln()
        } else if lower {
            small_x.min(a.max(1.0).ln() + 1.0)
        } else {
            // Γ(a, x) / Γ(a) ≈ x^{a-1} e^{-x} / Γ(a) for large x.
            let guess = -q.ln() - ln_gamma(a);
            guess.max(1.0).ln()
        }
    };

    let mut hu = h(u);
    if hu == 0.0 {
        return u;
    }
    let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
    if hu < 0.0 {
        lo = u;
    } else {
        hi = u;
    }

    let mut expand = 1.0;
    for _ in 0..400 {
        let slope = ln_gamma_prefactor(a, u.exp()).exp();
        let mut next = u - hu / slope;
        if !(next > lo && next < hi) {
            next = match (lo.is_finite(), hi.is_finite()) {
                (true, true) => 0.5 * (lo + hi),
                (true, false) => lo + expand,
                (false, true) => hi - expand,
                (false, false) => unreachable!("bracket always has one finite side"),
            };
            expand *= 2.0;
        }
        let delta = (next - u).abs();
        u = next;
        hu = h(u);
        if hu == 0.0 {
            return u;
        }
        if hu < 0.0 {
            lo = u;
        } else {
            hi = u;
        }
        if delta <= 2.0 * EPS * u.abs().max(1.0) {
            break;
        }
    }
    u
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn ln_gamma_integers() {
        let mut fact = 1.0_f64;
        for n in 1..30 {
            assert_relative_eq!(ln_gamma(n as f64), fact.ln(), max_relative = 1e-14, epsilon = 1e-15);
            fact *= n as f64;
        }
        assert_relative_eq!(ln_gamma(0.5), PI.sqrt().ln(), max_relative = 1e-14);
    }

    #[test]
    fn ln_gamma_branches_meet() {
        // Lanczos just below 10 and Stirling at 10.
        let below = ln_gamma(9.999_999_999);
        let at = ln_gamma(10.0);
        assert!((below - at).abs() < 1e-8);
        assert_relative_eq!(at, 362_880.0_f64.ln(), max_relative = 1e-15);
    }

    #[test]
    fn pq_sum_to_one() {
        for &a in &[1e-3, 0.5, 1.0, 3.7, 50.0, 1e4] {
            for &x in &[1e-5, 0.1, 1.0, 5.0, a, 2.0 * a + 3.0] {
                let (p, q) = gamma_pq(a, x);
                assert!((p + q - 1.0).abs() < 1e-14, "a={a} x={x}");
            }
        }
    }

    #[test]
    fn erf_known_values() {
        assert_relative_eq!(erf(0.5), 0.520_499_877_813_046_5, max_relative = 1e-14);
        assert_relative_eq!(erfc(3.0), 2.209_049_699_858_544e-5, max_relative = 1e-13);
        assert_relative_eq!(erfc(-1.0), 1.842_700_792_949_715, max_relative = 1e-14);
    }

    #[test]
    fn log1pmx_matches_direct_away_from_zero() {
        for &t in &[-0.2_f64, -0.01, 1e-4, 0.1, 0.24] {
            let direct = t.ln_1p() - t;
            assert_relative_eq!(log1pmx(t), direct, max_relative = 1e-9);
        }
    }
}
