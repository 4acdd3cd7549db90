//! Special functions used by the photon-number projections.
//!
//! `ln_dpois` follows Loader's saddle-point formulation, which keeps the
//! Poisson log-pmf accurate to a few ulps even for counts near `1e11`,
//! where the textbook `n ln(lambda) - lambda - ln n!` loses every digit to
//! cancellation.

use std::f64::consts::PI;

use statrs::function::erf::erfc;
use statrs::function::gamma::ln_gamma;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// `ln(n!) - [(n + 1/2) ln n - n + ln sqrt(2 pi)]`.
pub fn stirlerr(n: f64) -> f64 {
    const S0: f64 = 1.0 / 12.0;
    const S1: f64 = 1.0 / 360.0;
    const S2: f64 = 1.0 / 1260.0;
    const S3: f64 = 1.0 / 1680.0;
    const S4: f64 = 1.0 / 1188.0;
    if n <= 15.0 {
        return ln_gamma(n + 1.0) - (n + 0.5) * n.ln() + n - LN_SQRT_2PI;
    }
    let nn = n * n;
    if n > 500.0 {
        (S0 - S1 / nn) / n
    } else if n > 80.0 {
        (S0 - (S1 - S2 / nn) / nn) / n
    } else if n > 35.0 {
        (S0 - (S1 - (S2 - S3 / nn) / nn) / nn) / n
    } else {
        (S0 - (S1 - (S2 - (S3 - S4 / nn) / nn) / nn) / nn) / n
    }
}

/// Deviance term `x ln(x / np) + np - x`, computed without cancellation.
pub fn bd0(x: f64, np: f64) -> f64 {
    if (x - np).abs() < 0.1 * (x + np) {
        let mut v = (x - np) / (x + np);
        let mut s = (x - np) * v;
        let mut ej = 2.0 * x * v;
        v *= v;
        for j in 1..1000 {
            ej *= v;
            let s1 = s + ej / (2 * j + 1) as f64;
            if s1 == s {
                return s1;
            }
            s = s1;
        }
        s
    } else {
        x * (x / np).ln() + np - x
    }
}

/// Natural log of the Poisson probability of `n` events at mean `lambda`.
pub fn ln_dpois(n: f64, lambda: f64) -> f64 {
    if lambda == 0.0 {
        return if n == 0.0 { 0.0 } else { f64::NEG_INFINITY };
    }
    if n == 0.0 {
        return -lambda;
    }
    -stirlerr(n) - bd0(n, lambda) - 0.5 * (2.0 * PI * n).ln()
}

/// Upper tail of the standard normal distribution.
pub fn normal_tail(x: f64) -> f64 {
    0.5 * erfc(x / std::f64::consts::SQRT_2)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dpois_matches_direct_formula_for_small_counts() {
        for &(n, lam) in &[(0.0, 3.0), (1.0, 0.5), (7.0, 4.0), (30.0, 25.0), (100.0, 90.0)] {
            let direct = n * f64::ln(lam) - lam - ln_gamma(n + 1.0);
            assert!((ln_dpois(n, lam) - direct).abs() < 1e-10, "n={n} lam={lam}");
        }
    }

    #[test]
    fn dpois_normalizes_at_large_mean() {
        // sum over +-12 sigma of a Poisson with mean 4e8
        let lam: f64 = 4e8;
        let sd = lam.sqrt();
        let mut total = 0.0;
        let lo = (lam - 12.0 * sd).floor() as i64;
        let hi = (lam + 12.0 * sd).ceil() as i64;
        for n in lo..=hi {
            total += ln_dpois(n as f64, lam).exp();
        }
        assert!((total - 1.0).abs() < 1e-9, "total={total}");
    }

    #[test]
    fn normal_tail_at_four_sigma() {
        assert!((normal_tail(4.0) - 3.167_124_183_311_998e-5).abs() < 1e-12);
    }
}
