//! Closed-form figures, parameter sweeps and Monte Carlo statistics.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::blocks::Ctx;
use crate::error::{Error, Result};
use crate::mux::{round_trip, MuxPlan};
use crate::state::QubitSpec;

/// Erasure success `exp(-(beta M^-m)^2 / 2)` for an adder with inputs of
/// leading amplitudes `alpha_hi > beta_lo`.
pub fn analytic_erasure_p(alpha_hi: f64, beta_lo: f64, m_factor: f64, m: f64) -> f64 {
    // the deviation on the residual port is independent of alpha_hi
    let _ = alpha_hi;
    let d = beta_lo * m_factor.powf(-m);
    (-0.5 * d * d).exp()
}

/// Probability of projecting `|(1+eps) alpha>` onto `|alpha>`.
pub fn analytic_teleport_correction_p(alpha: f64, eps: f64) -> f64 {
    (-0.5 * alpha * alpha * eps * eps).exp()
}

/// Worst relative deviation when extracting level `k` from a qudit with ratio `M`:
/// `(1/M^k) (1 - M^k) / (1 - M)`.
pub fn demux_worst_eps(m_factor: f64, k: u32) -> Result<f64> {
    if !(m_factor > 1.0) || k == 0 {
        return Err(Error::InvalidParameter(format!(
            "need M > 1 and k >= 1, got M={m_factor}, k={k}"
        )));
    }
    let mk = m_factor.powi(k as i32);
    Ok((1.0 - mk) / (mk * (1.0 - m_factor)))
}

/// Overlap `|<-alpha|alpha>|^2 = exp(-4 alpha^2)` sampled on a grid.
pub fn qubit_overlap_curve(alphas: &[f64]) -> Result<Vec<(f64, f64)>> {
    alphas
        .iter()
        .map(|&a| {
            if a < 0.0 || !a.is_finite() {
                Err(Error::NonPositiveAlpha(a))
            } else {
                Ok((a, (-4.0 * a * a).exp()))
            }
        })
        .collect()
}

/// Analytic stage figures for a multiplexer with `n` users at ratio `M`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanFigures {
    /// Erasure success of each combiner stage.
    pub adder: Vec<f64>,
    /// Worst-branch teleport projection success of each extraction, top level first.
    pub extraction: Vec<f64>,
    /// Erasure success of each re-merge, top level first.
    pub remerge: Vec<f64>,
}

impl PlanFigures {
    pub fn end_to_end(&self) -> f64 {
        self.adder
            .iter()
            .chain(&self.extraction)
            .chain(&self.remerge)
            .product()
    }
}

/// Worst-case analytic figures; `mux_m[i]` is the m of adder `i+1` and
/// `demux_m[j]` the m of the re-merge after extracting level `n-1-j`.
pub fn plan_figures(alpha: f64, m_factor: f64, n: usize, mux_m: &[f64], demux_m: &[f64]) -> Result<PlanFigures> {
    if n == 0 || mux_m.len() + 1 < n || demux_m.len() + 1 < n {
        return Err(Error::InvalidParameter("schedule shorter than user count".into()));
    }
    let level = |k: usize| m_factor.powi(k as i32) * alpha;
    let below = |k: usize| (0..k).map(level).sum::<f64>();
    let adder = (1..n)
        .map(|k| analytic_erasure_p(level(k), below(k), m_factor, mux_m[k - 1]))
        .collect();
    let mut extraction = Vec::new();
    let mut remerge = Vec::new();
    for (j, k) in (1..n).rev().enumerate() {
        let eps = demux_worst_eps(m_factor, k as u32)?;
        extraction.push(analytic_teleport_correction_p(alpha, eps));
        remerge.push(analytic_erasure_p(level(k), below(k + 1), m_factor, demux_m[j]));
    }
    Ok(PlanFigures {
        adder,
        extraction,
        remerge,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub alpha: Vec<f64>,
    pub m_factor: Vec<f64>,
    pub m: Vec<f64>,
    pub n: Vec<usize>,
}

/// One output row `(alpha, M, m, N, metric, value)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub alpha: f64,
    #[serde(rename = "M")]
    pub m_factor: f64,
    pub m: f64,
    #[serde(rename = "N")]
    pub n: usize,
    pub metric: String,
    pub value: f64,
}

/// Evenly spaced grid including both ends.
pub fn linspace(lo: f64, hi: f64, steps: usize) -> Vec<f64> {
    match steps {
        0 => vec![],
        1 => vec![lo],
        _ => (0..steps)
            .map(|i| lo + (hi - lo) * i as f64 / (steps - 1) as f64)
            .collect(),
    }
}

/// Evaluates analytic metrics on the full grid; rows are ordered by grid index.
pub fn sweep(spec: &SweepSpec) -> Result<Vec<SweepRow>> {
    if spec.alpha.is_empty() || spec.m_factor.is_empty() || spec.m.is_empty() || spec.n.is_empty() {
        return Err(Error::InvalidParameter("sweep grid is empty".into()));
    }
    let mut points = Vec::new();
    for &a in &spec.alpha {
        for &mf in &spec.m_factor {
            for &m in &spec.m {
                for &n in &spec.n {
                    if !(a > 0.0) || !(mf > 1.0) || !(m > 0.0) || n == 0 {
                        return Err(Error::InvalidParameter(format!(
                            "invalid grid point alpha={a}, M={mf}, m={m}, N={n}"
                        )));
                    }
                    points.push((a, mf, m, n));
                }
            }
        }
    }
    let rows: Vec<Vec<SweepRow>> = points
        .par_iter()
        .map(|&(a, mf, m, n)| sweep_point(a, mf, m, n))
        .collect::<Result<_>>()?;
    Ok(rows.into_iter().flatten().collect())
}

fn sweep_point(alpha: f64, mf: f64, m: f64, n: usize) -> Result<Vec<SweepRow>> {
    let sched = vec![m; n.saturating_sub(1)];
    let fig = plan_figures(alpha, mf, n, &sched, &sched)?;
    let row = |metric: &str, value: f64| SweepRow {
        alpha,
        m_factor: mf,
        m,
        n,
        metric: metric.to_string(),
        value,
    };
    let worst_eps = if n > 1 { demux_worst_eps(mf, (n - 1) as u32)? } else { 0.0 };
    Ok(vec![
        row("adder_success", fig.adder.iter().product()),
        row("extraction_success", fig.extraction.iter().product()),
        row("remerge_success", fig.remerge.iter().product()),
        row("end_to_end_success", fig.end_to_end()),
        row("worst_eps", worst_eps),
        row("overlap_error", (-4.0 * alpha * alpha).exp()),
        row("max_amplitude", mf.powf((n as f64 - 1.0) + m) * alpha),
    ])
}

/// Aggregate of independent Monte Carlo trajectories.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialStats {
    pub trials: u64,
    pub successes: u64,
    pub success_rate: f64,
    /// 95% half-width of the success rate.
    pub success_ci: f64,
    /// Wilson interval replaces the normal one when successes are few.
    pub small_sample: bool,
    pub mean_fidelity: f64,
    pub fidelity_variance: f64,
    pub fidelity_ci: f64,
    pub seed: u64,
}

fn z95() -> f64 {
    Normal::new(0.0, 1.0)
        .expect("standard normal")
        .inverse_cdf(0.975)
}

/// Builds statistics from per-trial `(success, fidelity)` pairs; fidelities
/// are averaged over successful trials.
pub fn trial_stats(outcomes: &[(bool, f64)], seed: u64) -> TrialStats {
    let n = outcomes.len() as u64;
    let k = outcomes.iter().filter(|o| o.0).count() as u64;
    let z = z95();
    let p = if n > 0 { k as f64 / n as f64 } else { 0.0 };
    let small = k < 10 || n - k < 10;
    let ci = if n == 0 {
        0.0
    } else if small {
        let nf = n as f64;
        let denom = 1.0 + z * z / nf;
        z / denom * (p * (1.0 - p) / nf + z * z / (4.0 * nf * nf)).sqrt()
    } else {
        z * (p * (1.0 - p) / n as f64).sqrt()
    };
    let fids: Vec<f64> = outcomes.iter().filter(|o| o.0).map(|o| o.1).collect();
    let (mean, var) = if fids.is_empty() {
        (0.0, 0.0)
    } else {
        let m = fids.iter().sum::<f64>() / fids.len() as f64;
        let v = if fids.len() > 1 {
            fids.iter().map(|f| (f - m).powi(2)).sum::<f64>() / (fids.len() - 1) as f64
        } else {
            0.0
        };
        (m, v)
    };
    TrialStats {
        trials: n,
        successes: k,
        success_rate: p,
        success_ci: ci,
        small_sample: small,
        mean_fidelity: mean,
        fidelity_variance: var,
        fidelity_ci: if fids.is_empty() { 0.0 } else { z * (var / fids.len() as f64).sqrt() },
        seed,
    }
}

/// Independent sampled round trips. Trial `i` draws from stream `i` of a
/// generator seeded with `seed`, so results do not depend on thread count.
/// A trial's fidelity is the mean over users of the recovered-qubit fidelity.
pub fn monte_carlo(plan: &MuxPlan, qubits: &[QubitSpec], trials: u64, seed: u64) -> Result<TrialStats> {
    plan.validate()?;
    let outcomes: Vec<(bool, f64)> = (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i);
            let mut ctx = Ctx::sampled(&mut rng);
            ctx.exact_probabilities = false;
            let rt = round_trip(&mut ctx, qubits, plan)?;
            let ok = rt.success();
            let f = if ok {
                rt.fidelities.iter().sum::<f64>() / rt.fidelities.len() as f64
            } else {
                0.0
            };
            Ok((ok, f))
        })
        .collect::<Result<_>>()?;
    Ok(trial_stats(&outcomes, seed))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn erasure_figures() {
        assert!((analytic_erasure_p(20.0, 2.0, 10.0, 1.0) - 0.98020).abs() < 1e-5);
        assert!((analytic_erasure_p(200.0, 22.0, 10.0, 2.0) - 0.97609).abs() < 1e-5);
        assert!((analytic_erasure_p(200.0, 22.0, 10.0, 1.4) - 0.68140).abs() < 1e-4);
    }

    #[test]
    fn teleport_figures() {
        assert_eq!(analytic_teleport_correction_p(2.0, 0.0), 1.0);
        assert!((analytic_teleport_correction_p(2.0, 0.11) - 0.97609).abs() < 1e-5);
        assert!((analytic_teleport_correction_p(2.0, 0.3162) - 0.81873).abs() < 1e-4);
    }

    #[test]
    fn worst_eps_values() {
        assert!((demux_worst_eps(10.0, 2).unwrap() - 0.11).abs() < 1e-12);
        assert!((demux_worst_eps(10.0, 1).unwrap() - 0.1).abs() < 1e-12);
        let big = demux_worst_eps(1e4, 3).unwrap();
        assert!((big * 1e4 - 1.0).abs() < 2e-4);
        assert!((demux_worst_eps(10.0, 40).unwrap() - 1.0 / 9.0).abs() < 1e-12);
        assert!(demux_worst_eps(1.0, 2).is_err());
    }

    #[test]
    fn overlap_curve() {
        let c = qubit_overlap_curve(&linspace(0.0, 3.0, 31)).unwrap();
        assert_eq!(c[0].1, 1.0);
        assert!((c[10].1 - 0.0183156).abs() < 1e-6);
        assert!(c.windows(2).all(|w| w[1].1 < w[0].1));
    }

    #[test]
    fn sweep_single_point_and_monotonicity() {
        let spec = SweepSpec {
            alpha: vec![2.0],
            m_factor: vec![10.0],
            m: vec![2.0],
            n: vec![3],
        };
        let rows = sweep(&spec).unwrap();
        assert_eq!(rows.len(), 7);
        let fig = plan_figures(2.0, 10.0, 3, &[2.0, 2.0], &[2.0, 2.0]).unwrap();
        let e2e = rows.iter().find(|r| r.metric == "end_to_end_success").unwrap();
        assert_eq!(e2e.value, fig.end_to_end());
        let spec = SweepSpec {
            alpha: vec![2.0],
            m_factor: linspace(5.0, 20.0, 7),
            m: vec![1.0],
            n: vec![3],
        };
        let ext: Vec<f64> = sweep(&spec)
            .unwrap()
            .into_iter()
            .filter(|r| r.metric == "extraction_success")
            .map(|r| r.value)
            .collect();
        assert!(ext.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn stats_intervals() {
        let outcomes: Vec<(bool, f64)> = (0..1000).map(|i| (i % 4 != 0, 0.99)).collect();
        let s = trial_stats(&outcomes, 1);
        assert_eq!(s.successes, 750);
        assert!(!s.small_sample);
        assert!((s.success_ci - 1.959964 * (0.75f64 * 0.25 / 1000.0).sqrt()).abs() < 1e-6);
        let few: Vec<(bool, f64)> = (0..20).map(|i| (i < 3, 1.0)).collect();
        assert!(trial_stats(&few, 1).small_sample);
    }

    #[test]
    fn monte_carlo_is_deterministic() {
        let plan = MuxPlan::new(2.0, 10.0, 2).unwrap();
        let qs = vec![QubitSpec::from_angles(0.4, 0.1, 2.0).unwrap(); 2];
        let a = monte_carlo(&plan, &qs, 1, 11).unwrap();
        let b = monte_carlo(&plan, &qs, 1, 11).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.trials, 1);
        assert!(monte_carlo(&plan, &qs[..1], 1, 11).is_err());
    }

    #[test]
    fn monte_carlo_tracks_enumeration() {
        let plan = MuxPlan::new(2.0, 10.0, 2).unwrap();
        let qs = vec![QubitSpec::from_angles(0.9, 0.0, 2.0).unwrap(); 2];
        let exact = round_trip(&mut Ctx::enumerate(), &qs, &plan)
            .unwrap()
            .ledger
            .corrected_success_probability();
        let mc = monte_carlo(&plan, &qs, 400, 3).unwrap();
        let sigma = (exact * (1.0 - exact) / 400.0).sqrt();
        assert!((mc.success_rate - exact).abs() < 4.0 * sigma, "{} vs {exact}", mc.success_rate);
    }
}
