//! Complex numbers stored as (log-magnitude, phase).
//!
//! Branch weights in the multiplexing pipeline routinely reach magnitudes
//! like `exp(-2e8)`; a linear-domain `f64` underflows long before that. All
//! coefficients and Gram entries therefore live in log-polar form and are
//! only exponentiated once they have been shifted by a common maximum.

use std::f64::consts::{LN_2, PI, TAU};
use std::fmt;
use std::ops::{Div, Mul, Neg};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Relative threshold below which a cancelling sum is reported as zero.
pub const CANCELLATION_FLOOR: f64 = 1e-14;

/// A complex number `exp(log_magnitude) * exp(i * phase)`.
#[derive(Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogComplex {
    log_magnitude: f64,
    phase: f64,
}

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_phase(phase: f64) -> f64 {
    if phase > -PI && phase <= PI {
        return phase;
    }
    let mut p = phase.rem_euclid(TAU);
    if p > PI {
        p -= TAU;
    }
    p
}

impl LogComplex {
    pub const ZERO: LogComplex = LogComplex {
        log_magnitude: f64::NEG_INFINITY,
        phase: 0.0,
    };
    pub const ONE: LogComplex = LogComplex {
        log_magnitude: 0.0,
        phase: 0.0,
    };

    pub fn new(log_magnitude: f64, phase: f64) -> Self {
        if log_magnitude == f64::NEG_INFINITY {
            return Self::ZERO;
        }
        LogComplex {
            log_magnitude,
            phase: wrap_phase(phase),
        }
    }

    /// `exp(z)` for a complex exponent.
    pub fn exp(z: Complex64) -> Self {
        Self::new(z.re, z.im)
    }

    pub fn from_real(x: f64) -> Self {
        Self::from_complex(Complex64::new(x, 0.0))
    }

    pub fn from_complex(z: Complex64) -> Self {
        if z.re == 0.0 && z.im == 0.0 {
            return Self::ZERO;
        }
        Self::new(z.norm().ln(), z.arg())
    }

    pub fn log_magnitude(&self) -> f64 {
        self.log_magnitude
    }

    pub fn phase(&self) -> f64 {
        self.phase
    }

    pub fn is_zero(&self) -> bool {
        self.log_magnitude == f64::NEG_INFINITY
    }

    /// `|z|^2` in the linear domain (may underflow to 0).
    pub fn norm_sqr(&self) -> f64 {
        (2.0 * self.log_magnitude).exp()
    }

    pub fn abs(&self) -> f64 {
        self.log_magnitude.exp()
    }

    /// Linear-domain value (may underflow to 0).
    pub fn to_complex(&self) -> Complex64 {
        if self.is_zero() {
            return Complex64::new(0.0, 0.0);
        }
        Complex64::from_polar(self.log_magnitude.exp(), self.phase)
    }

    /// Linear-domain value after dividing by `exp(shift)`.
    pub fn to_complex_shifted(&self, shift: f64) -> Complex64 {
        if self.is_zero() {
            return Complex64::new(0.0, 0.0);
        }
        Complex64::from_polar((self.log_magnitude - shift).exp(), self.phase)
    }

    /// Natural log as a complex number (`re = -inf` for zero).
    pub fn ln(&self) -> Complex64 {
        Complex64::new(self.log_magnitude, self.phase)
    }

    pub fn conj(&self) -> Self {
        if self.is_zero() {
            return *self;
        }
        Self::new(self.log_magnitude, -self.phase)
    }

    pub fn powi(&self, n: i32) -> Self {
        if n == 0 {
            return Self::ONE;
        }
        if self.is_zero() {
            return *self;
        }
        Self::new(self.log_magnitude * n as f64, self.phase * n as f64)
    }

    pub fn sqrt(&self) -> Self {
        if self.is_zero() {
            return *self;
        }
        Self::new(0.5 * self.log_magnitude, 0.5 * self.phase)
    }

    /// Multiplies by `exp(k)` for real `k`.
    pub fn scale_log(&self, k: f64) -> Self {
        if self.is_zero() {
            return *self;
        }
        Self::new(self.log_magnitude + k, self.phase)
    }

    /// Stable sum of many log-domain values.
    pub fn sum<I: IntoIterator<Item = LogComplex>>(values: I) -> Self {
        let mut acc = LogSum::default();
        for v in values {
            acc.push(v);
        }
        acc.finish()
    }

    pub fn add(&self, other: &LogComplex) -> Self {
        Self::sum([*self, *other])
    }
}

impl Mul for LogComplex {
    type Output = LogComplex;
    fn mul(self, rhs: LogComplex) -> LogComplex {
        if self.is_zero() || rhs.is_zero() {
            return LogComplex::ZERO;
        }
        LogComplex::new(
            self.log_magnitude + rhs.log_magnitude,
            self.phase + rhs.phase,
        )
    }
}

impl Div for LogComplex {
    type Output = LogComplex;
    fn div(self, rhs: LogComplex) -> LogComplex {
        if self.is_zero() {
            return self;
        }
        LogComplex::new(
            self.log_magnitude - rhs.log_magnitude,
            self.phase - rhs.phase,
        )
    }
}

impl Neg for LogComplex {
    type Output = LogComplex;
    fn neg(self) -> LogComplex {
        if self.is_zero() {
            return self;
        }
        LogComplex::new(self.log_magnitude, self.phase + PI)
    }
}

impl fmt::Debug for LogComplex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "exp({:.6e}){:+.6}i", self.log_magnitude, self.phase)
    }
}

/// Accumulator for a sum of log-domain complex values.
///
/// Values are buffered, shifted by the running maximum and summed with
/// Neumaier compensation on each component. A result smaller than
/// [`CANCELLATION_FLOOR`] times the largest addend is reported as exact zero.
#[derive(Default, Clone)]
pub struct LogSum {
    values: Vec<LogComplex>,
}

impl LogSum {
    pub fn push(&mut self, v: LogComplex) {
        if !v.is_zero() {
            self.values.push(v);
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn finish(&self) -> LogComplex {
        let max = self
            .values
            .iter()
            .map(|v| v.log_magnitude)
            .fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            return LogComplex::ZERO;
        }
        if self.values.len() == 1 {
            return self.values[0];
        }
        let mut re = Neumaier::default();
        let mut im = Neumaier::default();
        for v in &self.values {
            let z = v.to_complex_shifted(max);
            re.add(z.re);
            im.add(z.im);
        }
        let z = Complex64::new(re.total(), im.total());
        let mag = z.norm();
        if mag < CANCELLATION_FLOOR {
            return LogComplex::ZERO;
        }
        LogComplex::new(max + mag.ln(), z.arg())
    }
}

#[derive(Default, Clone, Copy)]
struct Neumaier {
    sum: f64,
    comp: f64,
}

impl Neumaier {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn total(&self) -> f64 {
        self.sum + self.comp
    }
}

/// `exp(w) - 1` for complex `w` without cancellation near zero.
pub fn expm1(w: Complex64) -> Complex64 {
    let (s, c) = w.im.sin_cos();
    let half = (0.5 * w.im).sin();
    let em1 = w.re.exp_m1();
    Complex64::new(em1 * c - 2.0 * half * half, w.re.exp() * s)
}

fn ln_complex(z: Complex64) -> Complex64 {
    Complex64::new(z.norm().ln(), z.arg())
}

/// `ln(exp(z) - 1)`.
pub fn ln_expm1(z: Complex64) -> Complex64 {
    if z.re > 1.0 {
        z + ln_complex(-expm1(-z))
    } else {
        ln_complex(expm1(z))
    }
}

/// `ln(sinh(z))`.
pub fn ln_sinh(z: Complex64) -> Complex64 {
    if z.re >= 0.0 {
        // sinh z = e^z (1 - e^{-2z}) / 2
        z + ln_complex(-expm1(-2.0 * z)) - LN_2
    } else {
        Complex64::new(0.0, PI) + ln_sinh(-z)
    }
}

/// `ln(cosh(z) - 1) = ln 2 + 2 ln sinh(z/2)`.
pub fn ln_cosh_m1(z: Complex64) -> Complex64 {
    Complex64::new(LN_2, 0.0) + 2.0 * ln_sinh(0.5 * z)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: Complex64, b: Complex64, tol: f64) -> bool {
        (a - b).norm() <= tol * (1.0 + b.norm())
    }

    #[test]
    fn phase_wraps_into_half_open_interval() {
        assert_eq!(wrap_phase(PI), PI);
        assert!((wrap_phase(-PI) - PI).abs() < 1e-15);
        assert!((wrap_phase(3.0 * PI) - PI).abs() < 1e-12);
        assert!((wrap_phase(0.5 + 4.0 * TAU) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn zero_is_neg_infinity() {
        let z = LogComplex::from_real(0.0);
        assert!(z.is_zero());
        assert_eq!(z.log_magnitude(), f64::NEG_INFINITY);
        assert!((z * LogComplex::ONE).is_zero());
    }

    #[test]
    fn sum_of_huge_and_tiny_magnitudes() {
        let a = LogComplex::new(-2e8, 0.0);
        let b = LogComplex::new(-2e8 + 2f64.ln(), 0.0);
        let s = a.add(&b);
        assert!((s.log_magnitude() - (-2e8 + 3f64.ln())).abs() < 1e-6);
    }

    #[test]
    fn exact_cancellation_reports_zero() {
        let a = LogComplex::new(-5.0, 0.3);
        assert!(a.add(&(-a)).is_zero());
    }

    #[test]
    fn scaling_shifts_log_magnitude_exactly() {
        let a = LogComplex::new(-3.25, 1.0);
        assert_eq!(a.scale_log(7.0).log_magnitude(), 3.75);
    }

    #[test]
    fn special_functions_match_direct_formulas() {
        for z in [
            Complex64::new(0.3, 0.2),
            Complex64::new(-1.2, 0.7),
            Complex64::new(4.0, -2.0),
            Complex64::new(1e-6, 0.0),
        ] {
            assert!(close(ln_sinh(z).exp(), z.sinh(), 1e-12));
            assert!(close(ln_cosh_m1(z).exp(), z.cosh() - 1.0, 1e-9));
            assert!(close(ln_expm1(z).exp(), z.exp() - 1.0, 1e-12));
        }
        // large arguments stay finite in log form
        let big = ln_sinh(Complex64::new(1e6, 0.0));
        assert!((big.re - (1e6 - LN_2)).abs() < 1e-6);
    }
}
