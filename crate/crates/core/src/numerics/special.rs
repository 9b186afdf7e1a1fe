//! Gamma-family special functions and (non)central chi-square tails.

const EPS: f64 = 1e-16;
const FPMIN: f64 = 1e-300;
const MAX_ITER: usize = 10_000;

/// Remaining Poisson mass at which the noncentral series is truncated.
pub const NONCENTRAL_TAIL_MASS: f64 = 1e-12;

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

/// `ln Γ(x)` for `x > 0` (Lanczos, g = 7).
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // reflection
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = LANCZOS[0];
    let t = x + LANCZOS_G + 0.5;
    for (i, &c) in LANCZOS.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// Series for the regularized lower incomplete gamma, good for `x < a + 1`.
fn gamma_p_series(a: f64, x: f64) -> f64 {
    let mut ap = a;
    let mut del = 1.0 / a;
    let mut sum = del;
    for _ in 0..MAX_ITER {
        ap += 1.0;
        del *= x / ap;
        sum += del;
        if del.abs() < sum.abs() * EPS {
            break;
        }
    }
    (sum.ln() - x + a * x.ln() - ln_gamma(a)).exp()
}

/// Continued fraction (modified Lentz) for the regularized upper incomplete
/// gamma, good for `x ≥ a + 1`.
fn gamma_q_cf(a: f64, x: f64) -> f64 {
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / FPMIN;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..MAX_ITER {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = b + an / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    (-x + a * x.ln() - ln_gamma(a)).exp() * h
}

/// Regularized lower incomplete gamma `P(a, x)`.
pub fn gamma_p(a: f64, x: f64) -> f64 {
    assert!(a > 0.0, "gamma_p needs a > 0");
    if x <= 0.0 {
        return 0.0;
    }
    if x.is_infinite() {
        return 1.0;
    }
    if x < a + 1.0 {
        gamma_p_series(a, x).min(1.0)
    } else {
        (1.0 - gamma_q_cf(a, x)).max(0.0)
    }
}

/// Regularized upper incomplete gamma `Q(a, x) = 1 − P(a, x)`.
pub fn gamma_q(a: f64, x: f64) -> f64 {
    assert!(a > 0.0, "gamma_q needs a > 0");
    if x <= 0.0 {
        return 1.0;
    }
    if x.is_infinite() {
        return 0.0;
    }
    if x < a + 1.0 {
        (1.0 - gamma_p_series(a, x)).max(0.0)
    } else {
        gamma_q_cf(a, x).min(1.0)
    }
}

/// Upper tail `P(χ²_df > x)`.
pub fn chi_square_sf(x: f64, df: usize) -> f64 {
    assert!(df > 0, "chi-square needs df ≥ 1");
    assert!(x >= 0.0 || x.is_nan(), "chi-square survival needs x ≥ 0");
    gamma_q(df as f64 / 2.0, x / 2.0)
}

/// Lower tail `P(χ²_df ≤ x)`.
pub fn chi_square_cdf(x: f64, df: usize) -> f64 {
    assert!(df > 0, "chi-square needs df ≥ 1");
    gamma_p(df as f64 / 2.0, x / 2.0)
}

/// Upper quantile `χ²_{df,α}`: the `x` with `chi_square_sf(x, df) = alpha`.
pub fn chi_square_quantile(alpha: f64, df: usize) -> f64 {
    assert!(alpha > 0.0 && alpha < 1.0, "alpha must lie in (0, 1)");
    let mut lo = 0.0;
    let mut hi = df as f64 + 10.0;
    while chi_square_sf(hi, df) > alpha {
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if chi_square_sf(mid, df) > alpha {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-14 * hi {
            break;
        }
    }
    0.5 * (lo + hi)
}

#[inline]
fn poisson_ln_pmf(j: usize, mean: f64) -> f64 {
    if mean == 0.0 {
        return if j == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    -mean + j as f64 * mean.ln() - ln_gamma(j as f64 + 1.0)
}

/// Upper tail of a noncentral chi-square with `df` degrees of freedom and
/// noncentrality `ncp`: `Σ_j Pois(j; ncp/2) · Q(df/2 + j, x/2)`.
///
/// Terms are accumulated outward from the Poisson mode until the weight not
/// yet visited is below [`NONCENTRAL_TAIL_MASS`].
pub fn noncentral_chi_square_sf(x: f64, df: usize, ncp: f64) -> f64 {
    noncentral_chi_square_sf_tol(x, df, ncp, NONCENTRAL_TAIL_MASS)
}

/// As [`noncentral_chi_square_sf`] with an explicit tail-mass cutoff.
pub fn noncentral_chi_square_sf_tol(x: f64, df: usize, ncp: f64, tail_mass: f64) -> f64 {
    assert!(df > 0, "chi-square needs df ≥ 1");
    assert!(x >= 0.0, "survival needs x ≥ 0");
    assert!(ncp >= 0.0, "noncentrality must be ≥ 0");
    if ncp == 0.0 {
        return chi_square_sf(x, df);
    }
    if x == 0.0 {
        return 1.0;
    }
    let mean = ncp / 2.0;
    let half_x = x / 2.0;
    let k = df as f64 / 2.0;
    let mode = mean.floor() as usize;

    let mut mass = 0.0;
    let mut total = 0.0;
    let term = |j: usize| -> (f64, f64) {
        let w = poisson_ln_pmf(j, mean).exp();
        (w, w * gamma_q(k + j as f64, half_x))
    };

    let (w, t) = term(mode);
    mass += w;
    total += t;
    let (mut down, mut up) = (mode, mode);
    let limit = mode + 100_000;
    while 1.0 - mass > tail_mass && up < limit {
        // take the heavier neighbour next
        let wd = if down > 0 {
            poisson_ln_pmf(down - 1, mean).exp()
        } else {
            0.0
        };
        let wu = poisson_ln_pmf(up + 1, mean).exp();
        if down > 0 && wd >= wu {
            down -= 1;
            let (w, t) = term(down);
            mass += w;
            total += t;
        } else {
            up += 1;
            let (w, t) = term(up);
            mass += w;
            total += t;
        }
    }
    total.clamp(0.0, 1.0)
}

/// Partial sum of the first `terms` Poisson-weighted terms (`j = 0..terms`).
pub fn noncentral_chi_square_sf_partial(x: f64, df: usize, ncp: f64, terms: usize) -> f64 {
    let mean = ncp / 2.0;
    let k = df as f64 / 2.0;
    (0..terms)
        .map(|j| poisson_ln_pmf(j, mean).exp() * gamma_q(k + j as f64, x / 2.0))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn ln_gamma_integers() {
        let mut f = 1.0_f64;
        for n in 1..20 {
            assert_relative_eq!(ln_gamma(n as f64), f.ln(), epsilon = 1e-12, max_relative = 1e-13);
            f *= n as f64;
        }
        assert_relative_eq!(ln_gamma(0.5), std::f64::consts::PI.sqrt().ln(), epsilon = 1e-14);
    }

    #[test]
    fn chi_square_at_zero() {
        assert_eq!(chi_square_sf(0.0, 3), 1.0);
    }

    #[test]
    fn chi_square_95_quantile_df3() {
        assert_relative_eq!(chi_square_sf(7.814728, 3), 0.05, epsilon = 1e-7);
        assert_relative_eq!(chi_square_quantile(0.05, 3), 7.814_727_903_251_178, epsilon = 1e-9);
    }

    #[test]
    fn chi_square_far_tail() {
        assert!(chi_square_sf(1e4, 9) < 1e-300);
        assert_eq!(chi_square_sf(f64::INFINITY, 9), 0.0);
    }

    #[test]
    fn df2_is_exponential() {
        for &x in &[0.1, 1.0, 5.0, 30.0] {
            assert_relative_eq!(chi_square_sf(x, 2), (-x / 2.0).exp(), max_relative = 1e-13);
        }
    }

    #[test]
    fn noncentral_reduces_to_central() {
        assert_eq!(noncentral_chi_square_sf(4.0, 3, 0.0), chi_square_sf(4.0, 3));
        assert_eq!(noncentral_chi_square_sf(0.0, 3, 5.0), 1.0);
    }

    #[test]
    fn noncentral_df2_closed_form_check() {
        // Q_1(√λ, √x) for df = 2 via its Bessel series
        let (x, ncp) = (3.0_f64, 2.5_f64);
        let mut s = 0.0;
        let mut term_a = 1.0;
        for k in 0..200 {
            if k > 0 {
                term_a *= (ncp / 2.0) / k as f64;
            }
            s += term_a * gamma_q(1.0 + k as f64, x / 2.0);
        }
        let expect = (-ncp / 2.0).exp() * s;
        assert_relative_eq!(noncentral_chi_square_sf(x, 2, ncp), expect, max_relative = 1e-12);
    }
}
