//! Multimode superpositions of coherent states.
//!
//! A [`SuperState`] is `sum_j c_j |a_j1>|a_j2>...|a_jm>` with log-domain
//! coefficients. Every transform used by the optical blocks (beamsplitters,
//! phase shifters, photon counting) maps such a sum onto another such sum,
//! so the representation is exact at any amplitude.
//!
//! Detector modes whose photon count is only known up to an outcome class
//! (zero / even / odd) are kept as [`ModeKind::Herald`] modes. Their Gram
//! kernel is `<a|P|b>` for the class projector `P`, which is equivalent to
//! tracing out the detector after the class measurement. This keeps the
//! enumerated outcome branches exact without mixed states.

use std::f64::consts::PI;
use std::fmt;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::logc::{expm1, LogComplex, LogSum};
use crate::special::{ln_dpois, normal_tail};

/// Amplitude distance under which two terms are merged.
pub const DEFAULT_MERGE_TOL: f64 = 1e-9;
/// Terms this many e-folds below the largest term are dropped.
pub const DEFAULT_PRUNE_LOG_THRESHOLD: f64 = 46.0;

/// Photon-count outcome classes retained on a herald mode.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum HeraldClass {
    /// n > 0, any parity.
    NonZero,
    /// n > 0 and even.
    EvenNonZero,
    /// n odd.
    Odd,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModeKind {
    Field,
    Herald(HeraldClass),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mode {
    pub label: String,
    pub kind: ModeKind,
}

impl Mode {
    fn field(label: impl Into<String>) -> Self {
        Mode {
            label: label.into(),
            kind: ModeKind::Field,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum NormStatus {
    Raw,
    Normalized,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum NormMode {
    /// Divide by the true (Gram) norm.
    Exact,
    /// Treat branches as orthogonal: divide by `sqrt(sum |c_j|^2)`.
    OrthogonalApprox,
}

/// One branch of a superposition.
#[derive(Clone, Debug, PartialEq)]
pub struct CoherentTerm {
    pub coeff: LogComplex,
    pub amps: Vec<Complex64>,
}

/// Logical coherent-state qubit `mu |-alpha> + nu |alpha>`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QubitSpec {
    pub mu: Complex64,
    pub nu: Complex64,
    pub alpha: f64,
}

impl QubitSpec {
    pub fn new(mu: Complex64, nu: Complex64, alpha: f64) -> Result<Self> {
        if alpha <= 0.0 || !alpha.is_finite() {
            return Err(Error::NonPositiveAlpha(alpha));
        }
        let n = mu.norm_sqr() + nu.norm_sqr();
        if (n - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter(format!(
                "|mu|^2 + |nu|^2 = {n}, expected 1"
            )));
        }
        Ok(QubitSpec { mu, nu, alpha })
    }

    /// Real-coefficient qubit `cos(t)|0> + e^{i phi} sin(t)|1>`.
    pub fn from_angles(theta: f64, phi: f64, alpha: f64) -> Result<Self> {
        Self::new(
            Complex64::new(theta.cos(), 0.0),
            Complex64::from_polar(theta.sin(), phi),
            alpha,
        )
    }

    pub fn zero(alpha: f64) -> Result<Self> {
        Self::new(Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0), alpha)
    }
}

/// Overlap `<a|b>` of two coherent states.
pub fn overlap(a: Complex64, b: Complex64) -> LogComplex {
    let d = a - b;
    LogComplex::new(-0.5 * d.norm_sqr(), (a.conj() * b).im)
}

/// `<n|a>` for a photon-number state.
pub fn fock_amplitude(n: u64, a: Complex64) -> LogComplex {
    let lam = a.norm_sqr();
    if lam == 0.0 {
        return if n == 0 {
            LogComplex::ONE
        } else {
            LogComplex::ZERO
        };
    }
    let phase = if a.im == 0.0 {
        if a.re < 0.0 && n % 2 == 1 {
            PI
        } else {
            0.0
        }
    } else {
        (n as f64) * a.arg()
    };
    LogComplex::new(0.5 * ln_dpois(n as f64, lam), phase)
}

fn kernel(kind: ModeKind, a: Complex64, b: Complex64) -> LogComplex {
    let class = match kind {
        ModeKind::Field => return overlap(a, b),
        ModeKind::Herald(class) => class,
    };
    // factor out an exact overlap so large |a|^2 never cancels against ln cosh
    let z = a.conj() * b;
    let half = Complex64::new(0.5, 0.0);
    if z.re >= 0.0 {
        // e^{-(|a|^2+|b|^2)/2} e^{z} = <a|b>
        let w = -expm1(-z);
        let f = match class {
            HeraldClass::NonZero => w,
            HeraldClass::EvenNonZero => w * w * half,
            HeraldClass::Odd => -expm1(-2.0 * z) * half,
        };
        overlap(a, b) * LogComplex::from_complex(f)
    } else {
        // e^{-(|a|^2+|b|^2)/2} e^{-z} = <a|-b>
        let f = match class {
            HeraldClass::NonZero => {
                let pre = -0.5 * (a.norm_sqr() + b.norm_sqr());
                return LogComplex::new(pre, 0.0) * LogComplex::from_complex(expm1(z));
            }
            HeraldClass::EvenNonZero => expm1(z) * expm1(z) * half,
            HeraldClass::Odd => expm1(2.0 * z) * half,
        };
        overlap(a, -b) * LogComplex::from_complex(f)
    }
}

/// Probability that homodyne in-phase detection misreads a qubit of
/// amplitude `alpha` (quadrature variance 1/4, threshold at zero).
pub fn homodyne_readout_error(alpha: f64) -> Result<f64> {
    if alpha <= 0.0 || !alpha.is_finite() {
        return Err(Error::NonPositiveAlpha(alpha));
    }
    Ok(normal_tail(2.0 * alpha))
}

/// What [`SuperState::merge_prune`] removed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PruneReport {
    pub merged: usize,
    pub dropped: usize,
    /// Upper bound on `1 - fidelity` between the pruned and unpruned state.
    pub fidelity_loss_bound: f64,
}

#[derive(Clone, PartialEq)]
pub struct SuperState {
    modes: Vec<Mode>,
    terms: Vec<CoherentTerm>,
    norm_status: NormStatus,
}

impl fmt::Debug for SuperState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let labels: Vec<_> = self.modes.iter().map(|m| m.label.as_str()).collect();
        writeln!(f, "SuperState{labels:?} ({:?})", self.norm_status)?;
        for t in &self.terms {
            let amps: Vec<String> = t
                .amps
                .iter()
                .map(|a| {
                    if a.im == 0.0 {
                        format!("{:.6}", a.re)
                    } else {
                        format!("{:.6}{:+.6}i", a.re, a.im)
                    }
                })
                .collect();
            writeln!(f, "  {:?} |{}>", t.coeff, amps.join(", "))?;
        }
        Ok(())
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha <= 0.0 || !alpha.is_finite() {
        Err(Error::NonPositiveAlpha(alpha))
    } else {
        Ok(())
    }
}

impl SuperState {
    /// Builds a state from raw terms. Every term must carry one amplitude per label.
    pub fn from_terms(labels: &[&str], terms: Vec<CoherentTerm>) -> Result<Self> {
        let modes: Vec<Mode> = labels.iter().map(|l| Mode::field(*l)).collect();
        for (i, m) in modes.iter().enumerate() {
            if modes[..i].iter().any(|o| o.label == m.label) {
                return Err(Error::LabelCollision(m.label.clone()));
            }
        }
        for t in &terms {
            if t.amps.len() != modes.len() {
                return Err(Error::ModeCountMismatch(t.amps.len(), modes.len()));
            }
        }
        Ok(SuperState {
            modes,
            terms,
            norm_status: NormStatus::Raw,
        })
    }

    /// Zero-mode state holding a single scalar.
    pub fn scalar(c: LogComplex) -> Self {
        SuperState {
            modes: vec![],
            terms: vec![CoherentTerm { coeff: c, amps: vec![] }],
            norm_status: NormStatus::Raw,
        }
    }

    pub fn coherent(label: &str, a: Complex64) -> Self {
        SuperState {
            modes: vec![Mode::field(label)],
            terms: vec![CoherentTerm {
                coeff: LogComplex::ONE,
                amps: vec![a],
            }],
            norm_status: NormStatus::Normalized,
        }
    }

    pub fn vacuum(label: &str) -> Self {
        Self::coherent(label, Complex64::new(0.0, 0.0))
    }

    /// `|-v> + |v>` across several modes, normalized per `norm`.
    pub fn entangled_cat(labels: &[&str], plus_branch: &[f64], norm: NormMode) -> Result<Self> {
        let plus: Vec<Complex64> = plus_branch.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        let minus: Vec<Complex64> = plus.iter().map(|a| -a).collect();
        let s = Self::from_terms(
            labels,
            vec![
                CoherentTerm {
                    coeff: LogComplex::ONE,
                    amps: minus,
                },
                CoherentTerm {
                    coeff: LogComplex::ONE,
                    amps: plus,
                },
            ],
        )?;
        s.normalize(norm)
    }

    /// `(|-alpha> + |alpha>)/N`.
    pub fn cat(label: &str, alpha: f64, norm: NormMode) -> Result<Self> {
        check_alpha(alpha)?;
        Self::entangled_cat(&[label], &[alpha], norm)
    }

    /// `mu |-alpha> + nu |alpha>`, exactly normalized.
    pub fn qubit(label: &str, spec: &QubitSpec) -> Result<Self> {
        check_alpha(spec.alpha)?;
        let mut terms = Vec::with_capacity(2);
        for (c, a) in [(spec.mu, -spec.alpha), (spec.nu, spec.alpha)] {
            let coeff = LogComplex::from_complex(c);
            if !coeff.is_zero() {
                terms.push(CoherentTerm {
                    coeff,
                    amps: vec![Complex64::new(a, 0.0)],
                });
            }
        }
        Self::from_terms(&[label], terms)?.normalize(NormMode::Exact)
    }

    /// `(|-alpha>|-alpha> + |alpha>|alpha>)/N`.
    pub fn bell_cat(labels: [&str; 2], alpha: f64, norm: NormMode) -> Result<Self> {
        check_alpha(alpha)?;
        Self::entangled_cat(&labels, &[alpha, alpha], norm)
    }

    /// `(|-alpha>|-M alpha> + |alpha>|M alpha>)/N`.
    pub fn multiplier_resource(
        labels: [&str; 2],
        alpha: f64,
        factor: f64,
        norm: NormMode,
    ) -> Result<Self> {
        check_alpha(alpha)?;
        check_alpha(factor)?;
        Self::entangled_cat(&labels, &[alpha, factor * alpha], norm)
    }

    /// `(|-alpha>|M^k alpha>|-alpha> + |alpha>|-M^k alpha>|alpha>)/N`.
    pub fn demux_resource(
        labels: [&str; 3],
        alpha: f64,
        k: u32,
        m: f64,
        norm: NormMode,
    ) -> Result<Self> {
        check_alpha(alpha)?;
        Self::demux_resource_with_middle(labels, alpha, m.powi(k as i32) * alpha, norm)
    }

    /// Demux resource with an explicit magnitude for the anti-correlated middle mode.
    pub fn demux_resource_with_middle(
        labels: [&str; 3],
        alpha: f64,
        middle: f64,
        norm: NormMode,
    ) -> Result<Self> {
        check_alpha(alpha)?;
        check_alpha(middle)?;
        Self::entangled_cat(&labels, &[alpha, -middle, alpha], norm)
    }

    pub fn modes(&self) -> &[Mode] {
        &self.modes
    }

    pub fn labels(&self) -> Vec<&str> {
        self.modes.iter().map(|m| m.label.as_str()).collect()
    }

    pub fn terms(&self) -> &[CoherentTerm] {
        &self.terms
    }

    pub fn num_modes(&self) -> usize {
        self.modes.len()
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn norm_status(&self) -> NormStatus {
        self.norm_status
    }

    pub fn is_zero(&self) -> bool {
        self.terms.iter().all(|t| t.coeff.is_zero())
    }

    pub fn mode_index(&self, label: &str) -> Result<usize> {
        self.modes
            .iter()
            .position(|m| m.label == label)
            .ok_or_else(|| Error::UnknownMode(label.to_string()))
    }

    fn field_index(&self, label: &str) -> Result<usize> {
        let i = self.mode_index(label)?;
        if self.modes[i].kind != ModeKind::Field {
            return Err(Error::HeraldMode(label.to_string()));
        }
        Ok(i)
    }

    pub fn has_mode(&self, label: &str) -> bool {
        self.modes.iter().any(|m| m.label == label)
    }

    /// Amplitudes of one mode across all terms, in term order.
    pub fn amplitudes(&self, label: &str) -> Result<Vec<Complex64>> {
        let i = self.mode_index(label)?;
        Ok(self.terms.iter().map(|t| t.amps[i]).collect())
    }

    /// Labels of field (non-herald) modes.
    pub fn field_labels(&self) -> Vec<&str> {
        self.modes
            .iter()
            .filter(|m| m.kind == ModeKind::Field)
            .map(|m| m.label.as_str())
            .collect()
    }

    pub fn relabel(mut self, from: &str, to: &str) -> Result<Self> {
        if from == to {
            return Ok(self);
        }
        if self.has_mode(to) {
            return Err(Error::LabelCollision(to.to_string()));
        }
        let i = self.mode_index(from)?;
        self.modes[i].label = to.to_string();
        Ok(self)
    }

    /// Multiplies every coefficient by `c`.
    pub fn scale(mut self, c: LogComplex) -> Self {
        for t in &mut self.terms {
            t.coeff = t.coeff * c;
        }
        self.norm_status = NormStatus::Raw;
        self
    }

    /// Gram entry between term `j` of `self` and term `k` of `other` (no coefficients).
    fn pair_kernel(&self, j: usize, other: &SuperState, k: usize) -> LogComplex {
        let a = &self.terms[j].amps;
        let b = &other.terms[k].amps;
        let mut acc = LogComplex::ONE;
        for (m, mode) in self.modes.iter().enumerate() {
            acc = acc * kernel(mode.kind, a[m], b[m]);
            if acc.is_zero() {
                break;
            }
        }
        acc
    }

    fn check_compatible(&self, other: &SuperState) -> Result<()> {
        if self.modes.len() != other.modes.len() {
            return Err(Error::ModeCountMismatch(self.modes.len(), other.modes.len()));
        }
        for (i, (a, b)) in self.modes.iter().zip(&other.modes).enumerate() {
            if a.kind != b.kind {
                return Err(Error::ModeKindMismatch(i));
            }
        }
        Ok(())
    }

    /// `<self|other>`; modes are matched by position.
    pub fn inner_product(&self, other: &SuperState) -> Result<LogComplex> {
        self.check_compatible(other)?;
        let mut acc = LogSum::default();
        for (j, tj) in self.terms.iter().enumerate() {
            if tj.coeff.is_zero() {
                continue;
            }
            for (k, tk) in other.terms.iter().enumerate() {
                if tk.coeff.is_zero() {
                    continue;
                }
                acc.push(tj.coeff.conj() * tk.coeff * self.pair_kernel(j, other, k));
            }
        }
        Ok(acc.finish())
    }

    /// `log <self|self>`.
    pub fn log_norm_sqr(&self) -> f64 {
        // the Gram sum of a state with itself is real and nonnegative
        let g = self.inner_product(self).expect("self-compatible");
        if g.is_zero() {
            f64::NEG_INFINITY
        } else {
            g.log_magnitude()
        }
    }

    pub fn norm_sqr(&self) -> f64 {
        self.log_norm_sqr().exp()
    }

    /// Log of the orthogonal-branch approximation `sum_j |c_j|^2 K_jj`.
    fn log_diag_norm_sqr(&self) -> f64 {
        let mut acc = LogSum::default();
        for j in 0..self.terms.len() {
            let c = self.terms[j].coeff;
            acc.push(c.conj() * c * self.pair_kernel(j, self, j));
        }
        let s = acc.finish();
        if s.is_zero() {
            f64::NEG_INFINITY
        } else {
            s.log_magnitude()
        }
    }

    pub fn normalize(&self, mode: NormMode) -> Result<Self> {
        let ln = match mode {
            NormMode::Exact => self.log_norm_sqr(),
            NormMode::OrthogonalApprox => self.log_diag_norm_sqr(),
        };
        if ln == f64::NEG_INFINITY || ln.is_nan() {
            return Err(Error::ZeroNorm);
        }
        let mut out = self.clone().scale(LogComplex::new(-0.5 * ln, 0.0));
        out.norm_status = match mode {
            NormMode::Exact => NormStatus::Normalized,
            NormMode::OrthogonalApprox => NormStatus::Raw,
        };
        Ok(out)
    }

    /// Tensor product; labels must be disjoint.
    pub fn tensor(&self, other: &SuperState) -> Result<Self> {
        for m in &other.modes {
            if self.has_mode(&m.label) {
                return Err(Error::LabelCollision(m.label.clone()));
            }
        }
        let mut modes = self.modes.clone();
        modes.extend(other.modes.iter().cloned());
        let mut terms = Vec::with_capacity(self.terms.len() * other.terms.len());
        for a in &self.terms {
            for b in &other.terms {
                let mut amps = a.amps.clone();
                amps.extend_from_slice(&b.amps);
                terms.push(CoherentTerm {
                    coeff: a.coeff * b.coeff,
                    amps,
                });
            }
        }
        let norm_status = if self.norm_status == NormStatus::Normalized
            && other.norm_status == NormStatus::Normalized
        {
            NormStatus::Normalized
        } else {
            NormStatus::Raw
        };
        Ok(SuperState {
            modes,
            terms,
            norm_status,
        })
    }

    /// Lossless beamsplitter `(a, b) -> (cos t a + sin t b, sin t a - cos t b)`.
    pub fn apply_beamsplitter(&self, i: &str, j: &str, theta: f64) -> Result<Self> {
        let (c, s) = (theta.cos(), theta.sin());
        self.apply_two_mode(i, j, [[c, s], [s, -c]])
    }

    /// Beamsplitter specified by its exact reflection coefficient `r = cos(theta)`.
    pub fn apply_beamsplitter_reflectivity(&self, i: &str, j: &str, r: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&r) {
            return Err(Error::InvalidParameter(format!("reflectivity {r}")));
        }
        let t = (1.0 - r * r).sqrt();
        self.apply_two_mode(i, j, [[r, t], [t, -r]])
    }

    fn apply_two_mode(&self, i: &str, j: &str, u: [[f64; 2]; 2]) -> Result<Self> {
        if i == j {
            return Err(Error::InvalidParameter(format!(
                "beamsplitter needs two distinct modes, got `{i}` twice"
            )));
        }
        let ii = self.field_index(i)?;
        let jj = self.field_index(j)?;
        let mut out = self.clone();
        for t in &mut out.terms {
            let (a, b) = (t.amps[ii], t.amps[jj]);
            t.amps[ii] = a * u[0][0] + b * u[0][1];
            t.amps[jj] = a * u[1][0] + b * u[1][1];
        }
        Ok(out)
    }

    /// Phase shifter `a -> e^{i phi} a` on one mode.
    pub fn apply_phase(&self, i: &str, phi: f64) -> Result<Self> {
        let ii = self.field_index(i)?;
        let rot = Complex64::from_polar(1.0, phi);
        let exact_pi = (phi.rem_euclid(2.0 * PI) - PI).abs() < 1e-15;
        let identity = phi.rem_euclid(2.0 * PI) == 0.0;
        let mut out = self.clone();
        for t in &mut out.terms {
            let a = t.amps[ii];
            t.amps[ii] = if identity {
                a
            } else if exact_pi {
                -a
            } else {
                a * rot
            };
        }
        Ok(out)
    }

    /// Attaches a fresh vacuum mode.
    pub fn with_vacuum(&self, label: &str) -> Result<Self> {
        self.tensor(&SuperState::vacuum(label))
    }

    fn remove_mode_with(&self, ii: usize, factor: impl Fn(Complex64) -> LogComplex) -> Self {
        let mut modes = self.modes.clone();
        modes.remove(ii);
        let terms = self
            .terms
            .iter()
            .filter_map(|t| {
                let c = t.coeff * factor(t.amps[ii]);
                if c.is_zero() {
                    return None;
                }
                let mut amps = t.amps.clone();
                amps.remove(ii);
                Some(CoherentTerm { coeff: c, amps })
            })
            .collect();
        SuperState {
            modes,
            terms,
            norm_status: NormStatus::Raw,
        }
    }

    /// Projects mode `i` onto `|n>` and removes it. Returns the unnormalized
    /// branch and its norm `||(<n| x I) psi||` as a real log-domain weight.
    pub fn project_photon_number(&self, i: &str, n: u64) -> Result<(SuperState, LogComplex)> {
        let ii = self.field_index(i)?;
        let out = self.remove_mode_with(ii, |a| fock_amplitude(n, a));
        let ln = out.log_norm_sqr();
        let w = if ln == f64::NEG_INFINITY {
            LogComplex::ZERO
        } else {
            LogComplex::new(0.5 * ln, 0.0)
        };
        Ok((out, w))
    }

    /// Probability of finding vacuum in mode `i` (relative to the current norm).
    pub fn prob_zero(&self, i: &str) -> Result<f64> {
        let (branch, _) = self.project_photon_number(i, 0)?;
        Ok(relative_prob(branch.log_norm_sqr(), self.log_norm_sqr()))
    }

    /// Applies the outcome-class projector to mode `i` and keeps the mode as a
    /// herald record. Returns the unnormalized branch and its probability.
    pub fn apply_herald(&self, i: &str, class: HeraldClass) -> Result<(SuperState, f64)> {
        let ii = self.field_index(i)?;
        let mut out = self.clone();
        out.modes[ii].kind = ModeKind::Herald(class);
        out.norm_status = NormStatus::Raw;
        out.drop_null_terms();
        let p = relative_prob(out.log_norm_sqr(), self.log_norm_sqr());
        Ok((out, p))
    }

    fn drop_null_terms(&mut self) {
        let herald: Vec<usize> = (0..self.modes.len())
            .filter(|&m| self.modes[m].kind != ModeKind::Field)
            .collect();
        if herald.is_empty() {
            return;
        }
        let modes = self.modes.clone();
        self.terms.retain(|t| {
            herald
                .iter()
                .all(|&m| !kernel(modes[m].kind, t.amps[m], t.amps[m]).is_zero())
        });
    }

    /// Samples a photon count on mode `i` from the exact marginal distribution
    /// and returns the conditioned (unnormalized) state and its weight.
    pub fn sample_photon_count<R: Rng + ?Sized>(
        &self,
        i: &str,
        rng: &mut R,
    ) -> Result<(u64, SuperState, LogComplex)> {
        let ii = self.field_index(i)?;
        // group terms by the amplitude they carry on mode i
        let mut groups: Vec<(Complex64, Vec<usize>)> = Vec::new();
        for (j, t) in self.terms.iter().enumerate() {
            let a = t.amps[ii];
            match groups
                .iter_mut()
                .find(|(g, _)| (g - a).norm() < DEFAULT_MERGE_TOL)
            {
                Some((_, v)) => v.push(j),
                None => groups.push((a, vec![j])),
            }
        }
        // Gram matrix of the remaining modes between groups: p(n) = phi^H R phi
        let rest: Vec<SuperState> = groups
            .iter()
            .map(|(_, idx)| self.subset(idx).remove_mode_with(ii, |_| LogComplex::ONE))
            .collect();
        let ng = groups.len();
        let mut gram = vec![LogComplex::ZERO; ng * ng];
        for g in 0..ng {
            for h in g..ng {
                let v = rest[g].inner_product(&rest[h])?;
                gram[g * ng + h] = v;
                gram[h * ng + g] = v.conj();
            }
        }
        let rest_norms: Vec<f64> = (0..ng)
            .map(|g| {
                let d = gram[g * ng + g];
                if d.is_zero() {
                    f64::NEG_INFINITY
                } else {
                    d.log_magnitude()
                }
            })
            .collect();
        let max_w = rest_norms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if max_w == f64::NEG_INFINITY {
            return Err(Error::ZeroNorm);
        }
        let ln_total = {
            let mut acc = LogSum::default();
            gram.iter().for_each(|v| acc.push(*v));
            let t = acc.finish();
            if t.is_zero() {
                return Err(Error::ZeroNorm);
            }
            t.log_magnitude()
        };
        let ln_p_of = |n: u64| -> f64 {
            let phi: Vec<LogComplex> = groups.iter().map(|(a, _)| fock_amplitude(n, *a)).collect();
            let mut acc = LogSum::default();
            for g in 0..ng {
                if phi[g].is_zero() {
                    continue;
                }
                for h in 0..ng {
                    if !phi[h].is_zero() && !gram[g * ng + h].is_zero() {
                        acc.push(phi[g].conj() * phi[h] * gram[g * ng + h]);
                    }
                }
            }
            let v = acc.finish();
            if v.is_zero() {
                f64::NEG_INFINITY
            } else {
                v.log_magnitude()
            }
        };
        let weights: Vec<f64> = rest_norms.iter().map(|w| (w - max_w).exp()).collect();
        let total: f64 = weights.iter().sum();
        let g = ng as f64;
        for _ in 0..1_000_000 {
            let mut u = rng.gen::<f64>() * total;
            let mut pick = ng - 1;
            for (k, w) in weights.iter().enumerate() {
                if u < *w {
                    pick = k;
                    break;
                }
                u -= w;
            }
            let lam = groups[pick].0.norm_sqr();
            let n = if lam == 0.0 {
                0
            } else {
                Poisson::new(lam)
                    .map_err(|e| Error::InvalidParameter(e.to_string()))?
                    .sample(rng) as u64
            };
            let ln_p = ln_p_of(n);
            let mut bound = LogSum::default();
            for (k, (a, _)) in groups.iter().enumerate() {
                bound.push(LogComplex::new(
                    rest_norms[k] + ln_dpois(n as f64, a.norm_sqr()),
                    0.0,
                ));
            }
            let ln_bound = bound.finish().log_magnitude() + g.ln();
            let accept = (ln_p - ln_bound).exp().min(1.0);
            if rng.gen::<f64>() < accept {
                let (branch, _) = self.project_photon_number(i, n)?;
                let w = LogComplex::new(0.5 * (ln_p - ln_total), 0.0);
                return Ok((n, branch, w));
            }
        }
        Err(Error::SamplerExhausted)
    }

    fn subset(&self, idx: &[usize]) -> SuperState {
        SuperState {
            modes: self.modes.clone(),
            terms: idx.iter().map(|&j| self.terms[j].clone()).collect(),
            norm_status: NormStatus::Raw,
        }
    }

    /// Merges near-identical terms and drops negligible ones.
    pub fn merge_prune(&self, merge_tol: f64, prune_log_threshold: f64) -> (SuperState, PruneReport) {
        let mut report = PruneReport::default();
        let mut merged: Vec<CoherentTerm> = Vec::with_capacity(self.terms.len());
        for t in &self.terms {
            if t.coeff.is_zero() {
                continue;
            }
            let hit = merged.iter_mut().find(|m| {
                m.amps
                    .iter()
                    .zip(&t.amps)
                    .all(|(a, b)| (a - b).norm() < merge_tol)
            });
            match hit {
                Some(m) => {
                    m.coeff = m.coeff.add(&t.coeff);
                    report.merged += 1;
                }
                None => merged.push(t.clone()),
            }
        }
        let mut out = SuperState {
            modes: self.modes.clone(),
            terms: merged,
            norm_status: self.norm_status,
        };
        out.terms.retain(|t| !t.coeff.is_zero());
        // log amplitude of each term, herald kernels included
        let logs: Vec<f64> = (0..out.terms.len())
            .map(|j| {
                let k = out.pair_kernel(j, &out, j);
                out.terms[j].coeff.log_magnitude() + 0.5 * k.log_magnitude()
            })
            .collect();
        let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let ln_norm = out.log_norm_sqr();
        let mut dropped = LogSum::default();
        let mut keep = Vec::with_capacity(out.terms.len());
        for (t, l) in out.terms.drain(..).zip(&logs) {
            if *l < max - prune_log_threshold {
                dropped.push(LogComplex::new(*l, 0.0));
                report.dropped += 1;
            } else {
                keep.push(t);
            }
        }
        out.terms = keep;
        if report.dropped > 0 {
            // ||dropped|| <= sum of dropped term norms; 1 - F <= 2 ||dropped|| / ||psi||
            let d = dropped.finish().log_magnitude() - 0.5 * ln_norm;
            report.fidelity_loss_bound = (2.0 * d.exp()).min(1.0);
            out.norm_status = NormStatus::Raw;
        }
        if report.merged > 0 {
            out.norm_status = NormStatus::Raw;
        }
        (out, report)
    }

    /// `merge_prune` with the default tolerances.
    pub fn tidy(&self) -> SuperState {
        self.merge_prune(DEFAULT_MERGE_TOL, DEFAULT_PRUNE_LOG_THRESHOLD).0
    }

    /// `|<x|y>|^2 / (<x|x><y|y>)`.
    pub fn fidelity(&self, other: &SuperState) -> Result<f64> {
        let ip = self.inner_product(other)?;
        let nx = self.log_norm_sqr();
        let ny = other.log_norm_sqr();
        if nx == f64::NEG_INFINITY || ny == f64::NEG_INFINITY {
            return Err(Error::ZeroNorm);
        }
        if ip.is_zero() {
            return Ok(0.0);
        }
        Ok((2.0 * ip.log_magnitude() - nx - ny).exp().min(1.0))
    }

    /// Fidelity of the reduced state on `keep` with a pure `target`, all other
    /// modes (including herald records) traced out. `target`'s modes are
    /// matched to `keep` by position.
    pub fn reduced_fidelity(&self, target: &SuperState, keep: &[&str]) -> Result<f64> {
        if target.num_modes() != keep.len() {
            return Err(Error::ModeCountMismatch(target.num_modes(), keep.len()));
        }
        let kept: Vec<usize> = keep
            .iter()
            .map(|l| self.field_index(l))
            .collect::<Result<_>>()?;
        let traced: Vec<usize> = (0..self.modes.len()).filter(|m| !kept.contains(m)).collect();
        let ln_t = target.log_norm_sqr();
        let ln_x = self.log_norm_sqr();
        if ln_t == f64::NEG_INFINITY || ln_x == f64::NEG_INFINITY {
            return Err(Error::ZeroNorm);
        }
        // u_k = c_k <t|s_k> on the kept modes
        let u: Vec<LogComplex> = self
            .terms
            .iter()
            .map(|tk| {
                LogComplex::sum(target.terms.iter().map(|tl| {
                    let mut acc = tl.coeff.conj() * tk.coeff;
                    for (p, &m) in kept.iter().enumerate() {
                        acc = acc * overlap(tl.amps[p], tk.amps[m]);
                    }
                    acc
                }))
            })
            .collect();
        let mut acc = LogSum::default();
        for j in 0..self.terms.len() {
            if u[j].is_zero() {
                continue;
            }
            for k in 0..self.terms.len() {
                if u[k].is_zero() {
                    continue;
                }
                let mut r = u[j].conj() * u[k];
                for &m in &traced {
                    r = r * kernel(self.modes[m].kind, self.terms[j].amps[m], self.terms[k].amps[m]);
                    if r.is_zero() {
                        break;
                    }
                }
                acc.push(r);
            }
        }
        let f = acc.finish();
        if f.is_zero() {
            return Ok(0.0);
        }
        Ok((f.log_magnitude() - ln_t - ln_x).exp().min(1.0))
    }

    /// Reduced state is pure and equal to `target` on `keep`; convenience for
    /// single-mode qubit checks.
    pub fn qubit_fidelity(&self, label: &str, spec: &QubitSpec) -> Result<f64> {
        let target = SuperState::qubit("q", spec)?;
        self.reduced_fidelity(&target, &[label])
    }

    /// Mean total photon number over field modes.
    pub fn mean_photon_number(&self) -> f64 {
        let fields: Vec<usize> = (0..self.modes.len())
            .filter(|&m| self.modes[m].kind == ModeKind::Field)
            .collect();
        let ln_n = self.log_norm_sqr();
        let mut acc = LogSum::default();
        for j in 0..self.terms.len() {
            for k in 0..self.terms.len() {
                let g = self.terms[j].coeff.conj() * self.terms[k].coeff * self.pair_kernel(j, self, k);
                let s: Complex64 = fields
                    .iter()
                    .map(|&m| self.terms[j].amps[m].conj() * self.terms[k].amps[m])
                    .sum();
                acc.push(g * LogComplex::from_complex(s));
            }
        }
        let v = acc.finish();
        if v.is_zero() {
            return 0.0;
        }
        v.scale_log(-ln_n).to_complex().re
    }
}

/// `exp(ln_branch - ln_total)` clamped to `[0, 1]`.
pub fn relative_prob(ln_branch: f64, ln_total: f64) -> f64 {
    if ln_branch == f64::NEG_INFINITY {
        return 0.0;
    }
    (ln_branch - ln_total).exp().clamp(0.0, 1.0)
}
