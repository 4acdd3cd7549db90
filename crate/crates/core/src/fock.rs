//! Truncated photon-number-basis simulator.
//!
//! A brute-force reference for [`crate::state`]: states are dense tensors of
//! Fock coefficients and the beamsplitter is the number-basis unitary, built
//! per total-photon-number block by exponentiating its generator. Only meant
//! for a handful of modes at amplitudes of order one.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::state::{fock_amplitude, ModeKind, SuperState};

/// Truncation leakage above which the oracle refuses to continue.
pub const LEAKAGE_LIMIT: f64 = 1e-10;
const MAX_ENTRIES: usize = 4_000_000;

#[derive(Clone, Debug, PartialEq)]
pub struct FockVector {
    labels: Vec<String>,
    cutoff: usize,
    coeffs: Vec<Complex64>,
}

/// `ceil(|a|^2 + 10|a|) + 20` for the largest amplitude in `x`.
pub fn default_cutoff(x: &SuperState) -> usize {
    let amax = x
        .terms()
        .iter()
        .flat_map(|t| t.amps.iter())
        .map(|a| a.norm())
        .fold(0.0, f64::max);
    (amax * amax + 10.0 * amax).ceil() as usize + 20
}

fn dims_ok(modes: usize, cutoff: usize) -> Result<()> {
    let n = (cutoff + 1).checked_pow(modes as u32);
    match n {
        Some(n) if n <= MAX_ENTRIES => Ok(()),
        _ => Err(Error::InvalidParameter(format!(
            "{modes} modes at cutoff {cutoff} exceed the oracle size limit"
        ))),
    }
}

impl FockVector {
    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn norm_sqr(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm_sqr()).sum()
    }

    fn dim(&self) -> usize {
        self.cutoff + 1
    }

    fn stride(&self, mode: usize) -> usize {
        self.dim().pow((self.labels.len() - 1 - mode) as u32)
    }

    fn index_of(&self, label: &str) -> Result<usize> {
        self.labels
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| Error::UnknownMode(label.to_string()))
    }

    /// Coefficient of `|n_1 ... n_m>`.
    pub fn get(&self, ns: &[usize]) -> Complex64 {
        let mut idx = 0;
        for &n in ns {
            if n > self.cutoff {
                return Complex64::new(0.0, 0.0);
            }
            idx = idx * self.dim() + n;
        }
        self.coeffs[idx]
    }

    /// Photon-number distribution of one mode.
    pub fn distribution(&self, label: &str) -> Result<Vec<f64>> {
        let i = self.index_of(label)?;
        let (d, s) = (self.dim(), self.stride(i));
        let mut p = vec![0.0; d];
        for (idx, c) in self.coeffs.iter().enumerate() {
            p[(idx / s) % d] += c.norm_sqr();
        }
        Ok(p)
    }

    /// Phase shifter `e^{i phi n}` on one mode.
    pub fn phase(&self, label: &str, phi: f64) -> Result<Self> {
        let i = self.index_of(label)?;
        let (d, s) = (self.dim(), self.stride(i));
        let mut out = self.clone();
        for (idx, c) in out.coeffs.iter_mut().enumerate() {
            let n = (idx / s) % d;
            *c *= Complex64::from_polar(1.0, phi * n as f64);
        }
        Ok(out)
    }
}

/// Expands a coherent superposition in the number basis.
pub fn to_fock(x: &SuperState, cutoff: Option<usize>) -> Result<FockVector> {
    if x.modes().iter().any(|m| m.kind != ModeKind::Field) {
        return Err(Error::InvalidParameter(
            "herald records have no number-basis expansion".into(),
        ));
    }
    let cutoff = cutoff.unwrap_or_else(|| default_cutoff(x));
    let m = x.num_modes();
    dims_ok(m, cutoff)?;
    let d = cutoff + 1;
    let mut coeffs = vec![Complex64::new(0.0, 0.0); d.pow(m as u32)];
    for t in x.terms() {
        let per_mode: Vec<Vec<Complex64>> = t
            .amps
            .iter()
            .map(|&a| (0..d).map(|n| fock_amplitude(n as u64, a).to_complex()).collect())
            .collect();
        let c = t.coeff.to_complex();
        for (idx, slot) in coeffs.iter_mut().enumerate() {
            let mut v = c;
            let mut rem = idx;
            for k in (0..m).rev() {
                v *= per_mode[k][rem % d];
                rem /= d;
            }
            *slot += v;
        }
    }
    let out = FockVector {
        labels: x.labels().iter().map(|s| s.to_string()).collect(),
        cutoff,
        coeffs,
    };
    let expected = x.norm_sqr();
    let leakage = (expected - out.norm_sqr()) / expected.max(f64::MIN_POSITIVE);
    if leakage > LEAKAGE_LIMIT {
        return Err(Error::Leakage {
            leakage,
            limit: LEAKAGE_LIMIT,
        });
    }
    Ok(out)
}

/// Number-basis unitary of `(a, b) -> (cos t a + sin t b, sin t a - cos t b)`
/// restricted to total photon number `n`, on the basis `|k, n-k>`.
fn block_unitary(n: usize, theta: f64) -> DMatrix<f64> {
    // generator of the rotation part: b^dag a - a^dag b
    let mut g = DMatrix::<f64>::zeros(n + 1, n + 1);
    for k in 1..=n {
        // b^dag a |k, n-k> = sqrt(k (n-k+1)) |k-1, n-k+1>
        let v = ((k * (n - k + 1)) as f64).sqrt();
        g[(k - 1, k)] += v;
        g[(k, k - 1)] -= v;
    }
    let mut u = (g * theta).exp();
    // parity on the second mode is applied first
    for col in 0..=n {
        if (n - col) % 2 == 1 {
            for row in 0..=n {
                u[(row, col)] = -u[(row, col)];
            }
        }
    }
    u
}

/// Applies the beamsplitter between modes `i` and `j`.
pub fn fock_beamsplitter(v: &FockVector, i: &str, j: &str, theta: f64) -> Result<FockVector> {
    let ii = v.index_of(i)?;
    let jj = v.index_of(j)?;
    if ii == jj {
        return Err(Error::InvalidParameter("beamsplitter needs two modes".into()));
    }
    let d = v.dim();
    let (si, sj) = (v.stride(ii), v.stride(jj));
    let blocks: Vec<DMatrix<f64>> = (0..=2 * v.cutoff).map(|n| block_unitary(n, theta)).collect();
    let mut out = vec![Complex64::new(0.0, 0.0); v.coeffs.len()];
    let before = v.norm_sqr();
    for base in 0..v.coeffs.len() {
        if (base / si) % d != 0 || (base / sj) % d != 0 {
            continue;
        }
        for (n, u) in blocks.iter().enumerate() {
            let lo = n.saturating_sub(v.cutoff);
            let hi = n.min(v.cutoff);
            if lo > hi {
                continue;
            }
            let input: Vec<Complex64> = (0..=n)
                .map(|k| {
                    if k >= lo && k <= hi {
                        v.coeffs[base + k * si + (n - k) * sj]
                    } else {
                        Complex64::new(0.0, 0.0)
                    }
                })
                .collect();
            if input.iter().all(|c| c.norm_sqr() == 0.0) {
                continue;
            }
            for row in lo..=hi {
                let mut acc = Complex64::new(0.0, 0.0);
                for (col, c) in input.iter().enumerate() {
                    acc += c * u[(row, col)];
                }
                out[base + row * si + (n - row) * sj] = acc;
            }
        }
    }
    let res = FockVector {
        labels: v.labels.clone(),
        cutoff: v.cutoff,
        coeffs: out,
    };
    let leakage = (before - res.norm_sqr()) / before.max(f64::MIN_POSITIVE);
    if leakage > LEAKAGE_LIMIT {
        return Err(Error::Leakage {
            leakage,
            limit: LEAKAGE_LIMIT,
        });
    }
    Ok(res)
}

/// Projects mode `i` onto `|n>` and removes it; returns the branch and its norm.
pub fn fock_project(v: &FockVector, i: &str, n: usize) -> Result<(FockVector, f64)> {
    let ii = v.index_of(i)?;
    let d = v.dim();
    let s = v.stride(ii);
    let mut labels = v.labels.clone();
    labels.remove(ii);
    if n > v.cutoff {
        let out = FockVector {
            labels,
            cutoff: v.cutoff,
            coeffs: vec![Complex64::new(0.0, 0.0); d.pow((v.labels.len() - 1) as u32)],
        };
        return Ok((out, 0.0));
    }
    let coeffs: Vec<Complex64> = v
        .coeffs
        .iter()
        .enumerate()
        .filter(|(idx, _)| (idx / s) % d == n)
        .map(|(_, c)| *c)
        .collect();
    let out = FockVector {
        labels,
        cutoff: v.cutoff,
        coeffs,
    };
    let w = out.norm_sqr().sqrt();
    Ok((out, w))
}

/// `max |to_fock(x) - v|` over all basis coefficients.
pub fn compare(x: &SuperState, v: &FockVector) -> Result<f64> {
    if x.num_modes() != v.labels.len() {
        return Err(Error::ModeCountMismatch(x.num_modes(), v.labels.len()));
    }
    let fx = to_fock(x, Some(v.cutoff))?;
    Ok(fx
        .coeffs
        .iter()
        .zip(&v.coeffs)
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max))
}
