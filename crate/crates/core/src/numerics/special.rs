//! Special functions: log-gamma, regularized incomplete gamma, and the normal
//! and chi-square distribution functions with their quantiles.

use crate::error::{Error, Result};

/// Absolute tolerance for quantile root-finding.
pub const QUANTILE_TOL: f64 = 1e-10;
/// Iteration cap for quantile root-finding.
pub const QUANTILE_MAX_ITER: usize = 200;

const GAMMA_SERIES_EPS: f64 = 1e-16;
const GAMMA_MAX_ITER: usize = 10_000;
const STIRLING_SHIFT: f64 = 10.0;
const HALF_LN_TWO_PI: f64 = 0.918_938_533_204_672_8;

/// `ln Γ(x)` for `x > 0`.
///
/// Arguments below 10 are shifted up with `Γ(x+1) = xΓ(x)` and the Stirling
/// series (seven correction terms) is evaluated at the shifted point.
pub fn ln_gamma(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::Domain(format!("ln_gamma requires x > 0, got {x}")));
    }
    let mut z = x;
    let mut shift = 0.0;
    while z < STIRLING_SHIFT {
        shift += z.ln();
        z += 1.0;
    }
    let inv = 1.0 / z;
    let inv2 = inv * inv;
    // Bernoulli coefficients B_2k / (2k (2k-1))
    let series = inv
        * (1.0 / 12.0
            + inv2
                * (-1.0 / 360.0
                    + inv2
                        * (1.0 / 1260.0
                            + inv2
                                * (-1.0 / 1680.0
                                    + inv2
                                        * (1.0 / 1188.0
                                            + inv2 * (-691.0 / 360_360.0 + inv2 / 156.0))))));
    Ok((z - 0.5) * z.ln() - z + HALF_LN_TWO_PI + series - shift)
}

/// Regularized lower incomplete gamma `P(a, x)`.
pub fn reg_gamma_lower(a: f64, x: f64) -> Result<f64> {
    let (p, _) = reg_gamma_pair(a, x)?;
    Ok(p)
}

/// Regularized upper incomplete gamma `Q(a, x) = 1 - P(a, x)`.
pub fn reg_gamma_upper(a: f64, x: f64) -> Result<f64> {
    let (_, q) = reg_gamma_pair(a, x)?;
    Ok(q)
}

/// Returns `(P, Q)`, each computed directly on the side where it is accurate.
fn reg_gamma_pair(a: f64, x: f64) -> Result<(f64, f64)> {
    if !(a > 0.0) {
        return Err(Error::Domain(format!(
            "incomplete gamma shape must be > 0, got {a}"
        )));
    }
    if x.is_nan() || x < 0.0 {
        return Err(Error::Domain(format!(
            "incomplete gamma argument must be >= 0, got {x}"
        )));
    }
    if x == 0.0 {
        return Ok((0.0, 1.0));
    }
    if x.is_infinite() {
        return Ok((1.0, 0.0));
    }
    let log_prefactor = a * x.ln() - x - ln_gamma(a)?;
    if x < a + 1.0 {
        let p = gamma_series(a, x, log_prefactor)?;
        Ok((p, 1.0 - p))
    } else {
        let q = gamma_continued_fraction(a, x, log_prefactor)?;
        Ok((1.0 - q, q))
    }
}

fn gamma_series(a: f64, x: f64, log_prefactor: f64) -> Result<f64> {
    let mut ap = a;
    let mut term = 1.0 / a;
    let mut sum = term;
    for _ in 0..GAMMA_MAX_ITER {
        ap += 1.0;
        term *= x / ap;
        sum += term;
        if term.abs() < sum.abs() * GAMMA_SERIES_EPS {
            return Ok(sum * log_prefactor.exp());
        }
    }
    Err(Error::NumericFailure(format!(
        "incomplete gamma series did not converge (a={a}, x={x})"
    )))
}

// modified Lentz evaluation of the continued fraction for Q(a, x)
fn gamma_continued_fraction(a: f64, x: f64, log_prefactor: f64) -> Result<f64> {
    const TINY: f64 = 1e-300;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..GAMMA_MAX_ITER {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < TINY {
            d = TINY;
        }
        c = b + an / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < GAMMA_SERIES_EPS {
            return Ok(log_prefactor.exp() * h);
        }
    }
    Err(Error::NumericFailure(format!(
        "incomplete gamma continued fraction did not converge (a={a}, x={x})"
    )))
}

/// Standard normal density.
pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x - HALF_LN_TWO_PI).exp()
}

/// Standard normal CDF `Φ(x)`, via `erfc(t) = Q(1/2, t²)`.
pub fn normal_cdf(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    let half_tail = 0.5 * reg_gamma_upper(0.5, 0.5 * x * x).expect("valid arguments");
    if x < 0.0 {
        half_tail
    } else {
        1.0 - half_tail
    }
}

/// Standard normal quantile `Φ⁻¹(p)` for `p ∈ (0, 1)`.
pub fn normal_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain(format!(
            "normal quantile requires p in (0,1), got {p}"
        )));
    }
    if p == 0.5 {
        return Ok(0.0);
    }
    if p > 0.5 {
        return Ok(-normal_lower_quantile(1.0 - p)?);
    }
    normal_lower_quantile(p)
}

fn normal_lower_quantile(p: f64) -> Result<f64> {
    // Abramowitz & Stegun 26.2.23 as the starting point
    let t = (-2.0 * p.ln()).sqrt();
    let guess = -(t
        - (2.515_517 + 0.802_853 * t + 0.010_328 * t * t)
            / (1.0 + 1.432_788 * t + 0.189_269 * t * t + 0.001_308 * t * t * t));
    let guess = guess.min(0.0);
    safeguarded_newton(p, -40.0, 0.0, guess, normal_cdf, normal_pdf)
}

/// Chi-square CDF with `dof` degrees of freedom.
pub fn chi2_cdf(dof: u32, x: f64) -> Result<f64> {
    if dof == 0 {
        return Err(Error::Domain(
            "chi-square needs at least one degree of freedom".into(),
        ));
    }
    if x <= 0.0 {
        return Ok(0.0);
    }
    reg_gamma_lower(dof as f64 / 2.0, x / 2.0)
}

fn chi2_pdf(dof: u32, x: f64, ln_gamma_half: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let k = dof as f64 / 2.0;
    ((k - 1.0) * x.ln() - x / 2.0 - k * std::f64::consts::LN_2 - ln_gamma_half).exp()
}

/// Chi-square quantile: the `x` with `F(x) = p`, for `0 ≤ p < 1`.
pub fn chi2_quantile(dof: u32, p: f64) -> Result<f64> {
    if dof == 0 {
        return Err(Error::Domain(
            "chi-square needs at least one degree of freedom".into(),
        ));
    }
    if !(0.0..1.0).contains(&p) {
        return Err(Error::Domain(format!(
            "chi-square quantile requires 0 <= p < 1, got {p}"
        )));
    }
    if p == 0.0 {
        return Ok(0.0);
    }
    let k = dof as f64;
    let lg = ln_gamma(k / 2.0)?;

    let mut hi = k.max(1.0) * 2.0;
    while chi2_cdf(dof, hi)? < p {
        hi *= 2.0;
        if !hi.is_finite() {
            return Err(Error::NumericFailure(format!(
                "no chi-square bracket for p={p}"
            )));
        }
    }
    // Wilson-Hilferty start
    let z = normal_quantile(p.clamp(1e-300, 1.0 - 1e-16)).unwrap_or(0.0);
    let c = 2.0 / (9.0 * k);
    let guess = (k * (1.0 - c + z * c.sqrt()).powi(3)).clamp(0.0, hi);
    safeguarded_newton(
        p,
        0.0,
        hi,
        guess,
        |x| chi2_cdf(dof, x).expect("dof checked"),
        |x| chi2_pdf(dof, x, lg),
    )
}

/// Newton iteration on an increasing function kept inside a shrinking
/// bracket; falls back to bisection when the Newton step leaves it.
fn safeguarded_newton(
    target: f64,
    mut lo: f64,
    mut hi: f64,
    start: f64,
    f: impl Fn(f64) -> f64,
    df: impl Fn(f64) -> f64,
) -> Result<f64> {
    let mut x = if start > lo && start < hi {
        start
    } else {
        0.5 * (lo + hi)
    };
    for _ in 0..QUANTILE_MAX_ITER {
        let fx = f(x) - target;
        if fx == 0.0 {
            return Ok(x);
        }
        if fx < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let slope = df(x);
        let newton = x - fx / slope;
        let next = if slope > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        let step = (next - x).abs();
        x = next;
        if step < QUANTILE_TOL * 1e-3 || hi - lo < QUANTILE_TOL * 1e-3 {
            return Ok(x);
        }
    }
    Err(Error::NumericFailure(format!(
        "quantile root-finding did not converge in {QUANTILE_MAX_ITER} iterations (target {target})"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ln_gamma_known_values() {
        assert!(ln_gamma(1.0).unwrap().abs() < 1e-13);
        assert!(ln_gamma(2.0).unwrap().abs() < 1e-13);
        let half = ln_gamma(0.5).unwrap();
        assert!((half - std::f64::consts::PI.sqrt().ln()).abs() < 1e-12);
        // Γ(11) = 10! = 3628800
        assert!((ln_gamma(11.0).unwrap() - 3_628_800f64.ln()).abs() < 1e-10);
        assert!((ln_gamma(5.5).unwrap() - 52.342_777_784_553_52_f64.ln()).abs() < 1e-12);
        assert!(ln_gamma(0.0).is_err());
    }

    #[test]
    fn chi2_two_dof_closed_form() {
        let q = chi2_quantile(2, 0.95).unwrap();
        assert!((q - (-2.0 * 0.05f64.ln())).abs() < 1e-9);
        assert!((q - 5.99146).abs() < 1e-5);
    }

    #[test]
    fn chi2_zero_and_domain() {
        assert_eq!(chi2_quantile(7, 0.0).unwrap(), 0.0);
        assert!(chi2_quantile(7, 1.0).is_err());
        assert!(chi2_quantile(7, -0.1).is_err());
        assert!(chi2_quantile(0, 0.5).is_err());
    }

    #[test]
    fn chi2_cdf_roundtrip() {
        for dof in [1, 2, 3, 10, 50, 100, 300] {
            for &p in &[1e-6, 0.01, 0.3, 0.5, 0.9, 0.99, 0.999_999] {
                let x = chi2_quantile(dof, p).unwrap();
                let back = chi2_cdf(dof, x).unwrap();
                assert!((back - p).abs() < 1e-8, "dof {dof} p {p}: {back}");
            }
        }
    }

    #[test]
    fn normal_quantile_basics() {
        assert_eq!(normal_quantile(0.5).unwrap(), 0.0);
        for p in [0.9, 0.99] {
            assert_eq!(
                normal_quantile(1.0 - p).unwrap(),
                -normal_quantile(p).unwrap()
            );
        }
        assert!(normal_quantile(0.0).is_err());
        assert!(normal_quantile(1.0).is_err());
        for &p in &[1e-12, 1e-5, 0.025, 0.2, 0.7, 0.975, 1.0 - 1e-9] {
            let x = normal_quantile(p).unwrap();
            assert!((normal_cdf(x) - p).abs() < 1e-10, "p {p}");
        }
    }

    #[test]
    fn quantiles_strictly_increasing() {
        let grid: Vec<f64> = (1..=100).map(|i| i as f64 / 101.0).collect();
        let nq: Vec<f64> = grid.iter().map(|&p| normal_quantile(p).unwrap()).collect();
        assert!(nq.windows(2).all(|w| w[0] < w[1]));
        for dof in [1, 4, 10, 40] {
            let cq: Vec<f64> = grid
                .iter()
                .map(|&p| chi2_quantile(dof, p).unwrap())
                .collect();
            assert!(cq.windows(2).all(|w| w[0] < w[1]));
        }
    }
}
