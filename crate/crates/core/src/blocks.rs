//! Heralded optical building blocks.
//!
//! Every block mixes modes on beamsplitters and counts photons on two
//! detectors. Success means exactly one detector stays dark. The photon count
//! `n` on the other detector imprints `(-1)^n` on the negative-amplitude
//! class, which is undone by a repeat-until-even loop.
//!
//! Two detector models are supported through [`Detect`]:
//! * `Enumerate` keeps the exact even-parity success branch (detector kept as
//!   a herald record mode) and reports exact class probabilities.
//! * `Sample` draws actual photon counts and follows one trajectory.

use std::f64::consts::FRAC_PI_4;
use std::f64::consts::PI;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::logc::LogComplex;
use crate::state::{relative_prob, HeraldClass, NormMode, SuperState};

/// Retry cap for parity-correction loops.
pub const DEFAULT_Z_RETRY_CAP: u32 = 64;

pub enum Detect<'r> {
    Enumerate,
    Sample(&'r mut dyn RngCore),
}

/// Execution context shared by the blocks of one pipeline run.
pub struct Ctx<'r> {
    pub detect: Detect<'r>,
    pub z_retry_cap: u32,
    pub sum_bs: SumBs,
    /// Whether sampled runs also compute exact stage probabilities for the
    /// ledger; when off those fields are NaN.
    pub exact_probabilities: bool,
    counter: usize,
}

impl<'r> Ctx<'r> {
    pub fn enumerate() -> Self {
        Ctx {
            detect: Detect::Enumerate,
            z_retry_cap: DEFAULT_Z_RETRY_CAP,
            sum_bs: SumBs::ExactReflectivity,
            exact_probabilities: true,
            counter: 0,
        }
    }

    pub fn sampled(rng: &'r mut dyn RngCore) -> Self {
        Ctx {
            detect: Detect::Sample(rng),
            z_retry_cap: DEFAULT_Z_RETRY_CAP,
            sum_bs: SumBs::ExactReflectivity,
            exact_probabilities: true,
            counter: 0,
        }
    }

    pub fn is_enumerate(&self) -> bool {
        matches!(self.detect, Detect::Enumerate)
    }

    /// A mode label not used before in this run.
    pub fn fresh(&mut self, prefix: &str) -> String {
        self.counter += 1;
        format!("{prefix}#{}", self.counter)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Success,
    Failure,
    Retry,
}

/// What one detector reported.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reading {
    Count(u64),
    Zero,
    EvenNonZero,
    Odd,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeraldRecord {
    pub stage: String,
    pub outcome: Outcome,
    pub readings: Vec<Reading>,
    /// `(-1)^n` of the non-dark detector.
    pub parity_phase: i8,
    /// Probability of the recorded outcome class given the history.
    pub branch_probability: f64,
    /// Success probability summed over parities.
    pub success_probability: f64,
    /// Success probability once an odd parity is repaired by the retry loop.
    pub corrected_probability: f64,
    /// Probability that both detectors stay dark.
    pub null_probability: f64,
    pub analytic_probability: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct HeraldLedger {
    pub records: Vec<HeraldRecord>,
    /// Modes left with an uncorrected phase flip after the retry cap.
    pub pending_parity: Vec<String>,
    /// `(mode, factor)` for every divider repair that scaled a mode down.
    pub shrink: Vec<(String, f64)>,
    pub failed: bool,
}

impl HeraldLedger {
    pub fn push(&mut self, r: HeraldRecord) {
        if r.outcome == Outcome::Failure {
            self.failed = true;
        }
        self.records.push(r);
    }

    pub fn extend(&mut self, other: HeraldLedger) {
        self.failed |= other.failed;
        self.pending_parity.extend(other.pending_parity);
        self.shrink.extend(other.shrink);
        self.records.extend(other.records);
    }

    /// Product of branch probabilities along the recorded path. Equals the
    /// squared norm of the unnormalized conditional state.
    pub fn path_probability(&self) -> f64 {
        self.records.iter().map(|r| r.branch_probability).product()
    }

    /// Product of per-stage success probabilities, parity unrepaired.
    pub fn cumulative_success_probability(&self) -> f64 {
        self.records
            .iter()
            .filter(|r| r.outcome != Outcome::Retry)
            .map(|r| r.success_probability)
            .product()
    }

    /// Product of per-stage probabilities including parity repair.
    pub fn corrected_success_probability(&self) -> f64 {
        self.records
            .iter()
            .filter(|r| r.outcome != Outcome::Retry)
            .map(|r| r.corrected_probability)
            .product()
    }

    pub fn find(&self, stage: &str) -> Option<&HeraldRecord> {
        self.records.iter().find(|r| r.stage == stage)
    }
}

/// How the sum beamsplitter of an adder is set.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SumBs {
    /// Reflection coefficient exactly `M^-m`.
    ExactReflectivity,
    /// Angle `pi/2 - M^-m`.
    SmallAngle,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdderParams {
    pub m_factor: f64,
    pub m: f64,
}

impl AdderParams {
    pub fn new(m_factor: f64, m: f64) -> Result<Self> {
        if !(m_factor > 1.0) || !(m > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "adder needs M > 1 and m > 0, got M={m_factor}, m={m}"
            )));
        }
        Ok(AdderParams { m_factor, m })
    }

    /// `M^m`.
    pub fn gain(&self) -> f64 {
        self.m_factor.powf(self.m)
    }

    /// Nominal sum beamsplitter angle `pi/2 - M^-m`.
    pub fn theta_sum(&self) -> f64 {
        PI / 2.0 - 1.0 / self.gain()
    }

    /// `(r, t)` of the sum beamsplitter for the chosen convention.
    pub fn coefficients(&self, conv: SumBs) -> (f64, f64) {
        let r = match conv {
            SumBs::ExactReflectivity => 1.0 / self.gain(),
            SumBs::SmallAngle => self.theta_sum().cos(),
        };
        (r, (1.0 - r * r).sqrt())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DividerMode {
    /// Beamsplitter at angle `1/M`.
    Exact,
    /// Idealized `|a>|0> -> |a>|a/M>` (not unitary).
    FirstOrder,
}

/// Splits `a/M` off mode `i` into the fresh mode `new_mode`.
pub fn divider(
    x: &SuperState,
    i: &str,
    m_factor: f64,
    new_mode: &str,
    mode: DividerMode,
) -> Result<SuperState> {
    if !(m_factor > 1.0) {
        return Err(Error::InvalidParameter(format!("divider needs M > 1, got {m_factor}")));
    }
    match mode {
        DividerMode::Exact => x
            .with_vacuum(new_mode)?
            .apply_beamsplitter(i, new_mode, 1.0 / m_factor),
        DividerMode::FirstOrder => {
            let ii = x.mode_index(i)?;
            let terms = x
                .terms()
                .iter()
                .map(|t| {
                    let mut t = t.clone();
                    let a = t.amps[ii];
                    t.amps.push(a / m_factor);
                    t
                })
                .collect();
            let mut labels = x.labels();
            labels.push(new_mode);
            if x.modes().iter().any(|m| m.kind != crate::state::ModeKind::Field) {
                return Err(Error::InvalidParameter(
                    "first-order divider is defined on field modes only".into(),
                ));
            }
            SuperState::from_terms(&labels, terms)
        }
    }
}

/// Taps exactly the fraction `ratio` of the amplitude of mode `i` into
/// `new_mode`; the remaining mode keeps `sqrt(1 - ratio^2)`.
pub fn tap(x: &SuperState, i: &str, ratio: f64, new_mode: &str) -> Result<SuperState> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::InvalidParameter(format!("tap ratio {ratio}")));
    }
    x.with_vacuum(new_mode)?
        .apply_beamsplitter(i, new_mode, ratio.asin())
}

/// Result of a two-detector measurement.
struct Measured {
    /// Success state: even-parity branch (enumerate) or the sampled branch.
    state: Option<SuperState>,
    /// Enumerate only: the odd-parity success branch.
    odd: Option<SuperState>,
    readings: Vec<Reading>,
    parity_odd: bool,
    p_even: f64,
    p_odd: f64,
    p_null: f64,
}

impl Measured {
    fn success(&self) -> bool {
        self.state.is_some()
    }

    fn p_success(&self) -> f64 {
        self.p_even + self.p_odd
    }

    fn branch_probability(&self) -> f64 {
        if !self.success() {
            1.0 - self.p_success()
        } else if self.parity_odd {
            self.p_odd
        } else {
            self.p_even
        }
    }
}

fn rescale(x: SuperState, from: f64, to: f64) -> SuperState {
    x.scale(LogComplex::new(0.5 * (to.ln() - from.ln()), 0.0))
}

fn flip_all(x: &SuperState, modes: &[String]) -> Result<SuperState> {
    let mut y = x.clone();
    for m in modes {
        y = y.apply_phase(m, PI)?;
    }
    Ok(y)
}

/// Counts photons on `d1` and `d2`. When `d1` is the dark one, `flip` modes
/// receive a pi phase so both success arms leave the same state.
fn measure_pair(ctx: &mut Ctx, y: &SuperState, d1: &str, d2: &str, flip: &[String]) -> Result<Measured> {
    let exact = ctx.is_enumerate() || ctx.exact_probabilities;
    let arms = if exact {
        let ln_y = y.log_norm_sqr();
        if ln_y == f64::NEG_INFINITY {
            return Err(Error::ZeroNorm);
        }
        let (arm1, _) = y.project_photon_number(d2, 0)?;
        let (arm2, _) = y.project_photon_number(d1, 0)?;
        let (e1, _) = arm1.apply_herald(d1, HeraldClass::EvenNonZero)?;
        let (o1, _) = arm1.apply_herald(d1, HeraldClass::Odd)?;
        let (e2, _) = arm2.apply_herald(d2, HeraldClass::EvenNonZero)?;
        let (o2, _) = arm2.apply_herald(d2, HeraldClass::Odd)?;
        let p = |s: &SuperState| relative_prob(s.log_norm_sqr(), ln_y);
        let pn = p(&arm1.project_photon_number(d1, 0)?.0);
        Some(([p(&e1), p(&o1), p(&e2), p(&o2), pn], [e1, o1, e2, o2]))
    } else {
        None
    };
    let (p_even, p_odd, p_null) = match &arms {
        Some((ps, _)) => (ps[0] + ps[2], ps[1] + ps[3], ps[4]),
        None => (f64::NAN, f64::NAN, f64::NAN),
    };

    match &mut ctx.detect {
        Detect::Enumerate => {
            let ([pe1, po1, pe2, po2, _], [e1, o1, e2, o2]) = arms.expect("enumerate computes arms");
            // both arms carry the same conditional state; keep one, weighted by both
            let pick = |s1: SuperState, p1: f64, s2: SuperState, p2: f64, tot: f64| -> Result<Option<SuperState>> {
                if tot <= 0.0 {
                    Ok(None)
                } else if p1 > 0.0 {
                    Ok(Some(rescale(s1, p1, tot).tidy()))
                } else {
                    Ok(Some(rescale(flip_all(&s2, flip)?, p2, tot).tidy()))
                }
            };
            let state = pick(e1, pe1, e2, pe2, p_even)?;
            let odd = pick(o1, po1, o2, po2, p_odd)?;
            Ok(Measured {
                readings: vec![Reading::EvenNonZero, Reading::Zero],
                state,
                odd,
                parity_odd: false,
                p_even,
                p_odd,
                p_null,
            })
        }
        Detect::Sample(rng) => {
            let (n1, s1, _) = y.sample_photon_count(d1, &mut **rng)?;
            let (n2, s2, _) = s1.sample_photon_count(d2, &mut **rng)?;
            let success = (n1 == 0) != (n2 == 0);
            let n = n1.max(n2);
            let state = if !success {
                None
            } else if n1 == 0 {
                Some(flip_all(&s2, flip)?.tidy())
            } else {
                Some(s2.tidy())
            };
            Ok(Measured {
                state,
                odd: None,
                readings: vec![Reading::Count(n1), Reading::Count(n2)],
                parity_odd: success && n % 2 == 1,
                p_even,
                p_odd,
                p_null,
            })
        }
    }
}

fn record(stage: &str, m: &Measured, analytic: Option<f64>, outcome: Option<Outcome>) -> HeraldRecord {
    HeraldRecord {
        stage: stage.to_string(),
        outcome: outcome.unwrap_or(if m.success() {
            Outcome::Success
        } else {
            Outcome::Failure
        }),
        readings: m.readings.clone(),
        parity_phase: if m.parity_odd { -1 } else { 1 },
        branch_probability: m.branch_probability(),
        success_probability: m.p_success(),
        corrected_probability: m.p_success(),
        null_probability: m.p_null,
        analytic_probability: analytic,
    }
}

/// Teleports mode `input` through `resource`, whose first mode is mixed with
/// the input; the remaining resource modes carry the output.
fn raw_teleport(ctx: &mut Ctx, x: &SuperState, input: &str, resource: &SuperState) -> Result<Measured> {
    let labels: Vec<String> = resource.labels().iter().map(|s| s.to_string()).collect();
    if labels.len() < 2 {
        return Err(Error::InvalidParameter(
            "teleport resource needs at least two modes".into(),
        ));
    }
    let (d1, d2) = (ctx.fresh("det"), ctx.fresh("det"));
    let y = x
        .tensor(resource)?
        .apply_beamsplitter(input, &labels[0], FRAC_PI_4)?
        .relabel(input, &d1)?
        .relabel(&labels[0], &d2)?;
    measure_pair(ctx, &y, &d1, &d2, &labels[1..])
}

/// One teleportation; any phase flip is left to the caller.
pub fn teleport(
    ctx: &mut Ctx,
    x: &SuperState,
    input: &str,
    resource: &SuperState,
    stage: &str,
) -> Result<(Option<SuperState>, HeraldRecord)> {
    let m = raw_teleport(ctx, x, input, resource)?;
    let rec = record(stage, &m, None, None);
    Ok((m.state, rec))
}

/// Mixes mode `i` with a cat of `reference` and counts both ports.
fn raw_erase(ctx: &mut Ctx, x: &SuperState, i: &str, reference: f64) -> Result<Measured> {
    let aux = ctx.fresh("cat");
    let d1 = ctx.fresh("det");
    let y = x
        .tensor(&SuperState::cat(&aux, reference, NormMode::Exact)?)?
        .apply_beamsplitter(i, &aux, FRAC_PI_4)?
        .relabel(i, &d1)?;
    measure_pair(ctx, &y, &d1, &aux, &[])
}

/// Erases mode `i` against a cat of `reference`; the phase flip is left to the caller.
pub fn erase_mode(
    ctx: &mut Ctx,
    x: &SuperState,
    i: &str,
    reference: f64,
    stage: &str,
) -> Result<(Option<SuperState>, HeraldRecord)> {
    let m = raw_erase(ctx, x, i, reference)?;
    let rec = record(stage, &m, None, None);
    Ok((m.state, rec))
}

/// How a pending phase flip on the negative class is undone.
#[derive(Clone, Debug, PartialEq)]
pub enum ZFix {
    /// Identity teleports of a qubit-like mode through a Bell cat of `alpha`.
    Teleport { mode: String, alpha: f64 },
    /// Tap `ratio` of a sum mode and erase it against a cat of the tapped leading amplitude.
    Divider { mode: String, leading: f64, ratio: f64 },
}

fn z_attempt(ctx: &mut Ctx, x: &SuperState, fix: &ZFix) -> Result<(Measured, ZFix)> {
    match fix {
        ZFix::Teleport { mode, alpha } => {
            let a = ctx.fresh("bell");
            let out = ctx.fresh("bell");
            let res = SuperState::bell_cat([&a, &out], *alpha, NormMode::Exact)?;
            let mut m = raw_teleport(ctx, x, mode, &res)?;
            m.state = m.state.map(|s| s.relabel(&out, mode)).transpose()?;
            m.odd = m.odd.map(|s| s.relabel(&out, mode)).transpose()?;
            Ok((m, fix.clone()))
        }
        ZFix::Divider { mode, leading, ratio } => {
            let t = ctx.fresh("ztap");
            let y = tap(x, mode, *ratio, &t)?;
            let m = raw_erase(ctx, &y, &t, leading * ratio)?;
            let next = ZFix::Divider {
                mode: mode.clone(),
                leading: leading * (1.0 - ratio * ratio).sqrt(),
                ratio: *ratio,
            };
            Ok((m, next))
        }
    }
}

/// Repeat-until-even loop after an odd parity on a sampled trajectory.
pub fn z_correct(
    ctx: &mut Ctx,
    x: SuperState,
    fix: &ZFix,
    stage: &str,
    ledger: &mut HeraldLedger,
) -> Result<Option<SuperState>> {
    let mut state = x;
    let mut fix = fix.clone();
    for attempt in 0..ctx.z_retry_cap {
        let (m, next) = z_attempt(ctx, &state, &fix)?;
        let name = format!("{stage}/z{attempt}");
        match m.state.clone() {
            None => {
                ledger.push(record(&name, &m, None, Some(Outcome::Failure)));
                return Ok(None);
            }
            Some(s) => {
                let done = m.parity_odd;
                let outcome = if done { Outcome::Success } else { Outcome::Retry };
                let mut r = record(&name, &m, None, Some(outcome));
                r.branch_probability = if done { m.p_odd } else { m.p_even };
                ledger.push(r);
                if let ZFix::Divider { mode, ratio, .. } = &fix {
                    ledger.shrink.push((mode.clone(), (1.0 - ratio * ratio).sqrt()));
                }
                state = s;
                fix = next;
                if done {
                    return Ok(Some(state));
                }
            }
        }
    }
    let label = match &fix {
        ZFix::Teleport { mode, .. } | ZFix::Divider { mode, .. } => mode.clone(),
    };
    ledger.pending_parity.push(label);
    Ok(Some(state))
}

/// Probability that the retry loop repairs an odd parity, from one attempt
/// on the odd-branch state.
fn z_loop_probability(ctx: &mut Ctx, odd: &SuperState, fix: &ZFix) -> Result<f64> {
    let (m, _) = z_attempt(ctx, odd, fix)?;
    let (pe, po) = (m.p_even, m.p_odd);
    let cap = ctx.z_retry_cap as i32;
    if pe >= 1.0 {
        return Ok(0.0);
    }
    Ok(po * (1.0 - pe.powi(cap)) / (1.0 - pe))
}

/// Records a measured stage and repairs its parity. Returns `None` on failure.
fn finish_stage(
    ctx: &mut Ctx,
    m: Measured,
    fix: Option<&ZFix>,
    stage: &str,
    analytic: Option<f64>,
    ledger: &mut HeraldLedger,
) -> Result<Option<SuperState>> {
    let mut rec = record(stage, &m, analytic, None);
    if ctx.is_enumerate() {
        if let (Some(fix), Some(odd)) = (fix, &m.odd) {
            let q = z_loop_probability(ctx, odd, fix)?;
            rec.corrected_probability = m.p_even + m.p_odd * q;
        }
        ledger.push(rec);
        return Ok(m.state);
    }
    if fix.is_none() {
        rec.corrected_probability = m.p_success();
    } else {
        rec.corrected_probability = rec.branch_probability;
    }
    ledger.push(rec);
    match (m.state, fix) {
        (None, _) => Ok(None),
        (Some(s), Some(fix)) if m.parity_odd => z_correct(ctx, s, fix, stage, ledger),
        (Some(s), _) => Ok(Some(s)),
    }
}

/// Teleportation with the phase flip repaired by `fix`.
pub fn teleport_stage(
    ctx: &mut Ctx,
    x: &SuperState,
    input: &str,
    resource: &SuperState,
    fix: Option<&ZFix>,
    stage: &str,
    analytic: Option<f64>,
    ledger: &mut HeraldLedger,
) -> Result<Option<SuperState>> {
    let m = raw_teleport(ctx, x, input, resource)?;
    finish_stage(ctx, m, fix, stage, analytic, ledger)
}

/// Erasure with the phase flip repaired by `fix`.
pub fn erase_stage(
    ctx: &mut Ctx,
    x: &SuperState,
    i: &str,
    reference: f64,
    fix: Option<&ZFix>,
    stage: &str,
    analytic: Option<f64>,
    ledger: &mut HeraldLedger,
) -> Result<Option<SuperState>> {
    let m = raw_erase(ctx, x, i, reference)?;
    finish_stage(ctx, m, fix, stage, analytic, ledger)
}

/// Scales a `+-alpha` qubit mode to `+-factor*alpha` by teleportation.
pub fn multiplier(
    ctx: &mut Ctx,
    x: &SuperState,
    i: &str,
    factor: f64,
    alpha: f64,
    stage: &str,
    ledger: &mut HeraldLedger,
) -> Result<Option<SuperState>> {
    let a = ctx.fresh("mul");
    let out = ctx.fresh("mul");
    let res = SuperState::multiplier_resource([&a, &out], alpha, factor, NormMode::Exact)?;
    let fix = ZFix::Teleport {
        mode: i.to_string(),
        alpha: factor * alpha,
    };
    let m = raw_teleport(ctx, x, i, &res)?;
    let m = Measured {
        state: m.state.map(|s| s.relabel(&out, i)).transpose()?,
        odd: m.odd.map(|s| s.relabel(&out, i)).transpose()?,
        ..m
    };
    finish_stage(ctx, m, Some(&fix), stage, None, ledger)
}

/// Inputs of one adder.
#[derive(Clone, Debug)]
pub struct AdderSpec<'a> {
    pub hi: &'a str,
    pub lo: &'a str,
    pub params: AdderParams,
    /// Current leading amplitude of `hi` before multiplication.
    pub alpha_hi: f64,
    /// Worst-case amplitude of `lo`, for the analytic erasure figure.
    pub beta_lo: Option<f64>,
    /// Skip the multiplier when `hi` already carries the gain.
    pub premultiplied: bool,
    /// Parity repair for the erasure flip.
    pub fix: ZFix,
}

/// Adds `lo` onto `hi`: multiplier, sum beamsplitter, erasure of the residual
/// port and parity repair. The sum is left in mode `hi`; `lo` is consumed.
pub fn adder(
    ctx: &mut Ctx,
    x: &SuperState,
    spec: &AdderSpec,
    stage: &str,
    ledger: &mut HeraldLedger,
) -> Result<Option<SuperState>> {
    let gain = spec.params.gain();
    let mut y = x.clone();
    if !spec.premultiplied {
        match multiplier(ctx, &y, spec.hi, gain, spec.alpha_hi, &format!("{stage}/multiply"), ledger)? {
            Some(s) => y = s,
            None => return Ok(None),
        }
    }
    let (r, t) = spec.params.coefficients(ctx.sum_bs);
    let y = y.apply_beamsplitter_reflectivity(spec.hi, spec.lo, r)?;
    let reference = t * gain * spec.alpha_hi;
    let analytic = spec
        .beta_lo
        .map(|b| crate::analytics::analytic_erasure_p(spec.alpha_hi, b, spec.params.m_factor, spec.params.m));
    erase_stage(
        ctx,
        &y,
        spec.lo,
        reference,
        Some(&spec.fix),
        &format!("{stage}/erase"),
        analytic,
        ledger,
    )
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Topology {
    Series,
    Parallel,
}

/// One input of a combiner.
#[derive(Clone, Debug, PartialEq)]
pub struct CombinerInput {
    pub mode: String,
    /// Leading amplitude the mode carries on entry.
    pub amplitude: f64,
    /// Nominal amplitude after all stages (for ordering and analytics).
    pub nominal: f64,
}

/// Stage plan of a combiner: pairs `(hi, lo)` by input index per round.
pub fn combiner_schedule(n: usize, topology: Topology) -> Vec<Vec<(usize, usize)>> {
    match topology {
        Topology::Series => (1..n).map(|k| vec![(k, 0)]).collect(),
        Topology::Parallel => {
            let mut groups: Vec<usize> = (0..n).collect();
            let mut rounds = Vec::new();
            while groups.len() > 1 {
                let mut pairs = Vec::new();
                let mut next = Vec::new();
                for chunk in groups.chunks(2) {
                    if chunk.len() == 2 {
                        pairs.push((chunk[1], chunk[0]));
                    }
                    next.push(chunk[0]);
                }
                rounds.push(pairs);
                groups = next;
            }
            rounds
        }
    }
}

/// Gains each input must already carry so every stage can skip the
/// multiplier when its upper port is a sum (parallel topology).
pub fn parallel_pregain(n: usize, m_of_stage: &[f64], m_factor: f64) -> Vec<f64> {
    let mut gain = vec![1.0; n];
    let rounds = combiner_schedule(n, Topology::Parallel);
    let mut members: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    let mut stage = 0;
    for pairs in rounds {
        for (hi, lo) in pairs {
            let m = m_of_stage[stage];
            if members[hi].len() > 1 {
                for &u in &members[hi] {
                    gain[u] *= m_factor.powf(m);
                }
            }
            let moved = std::mem::take(&mut members[hi]);
            members[lo].extend(moved);
            stage += 1;
        }
    }
    gain
}

/// Combines `inputs` (ordered by increasing nominal amplitude) into one mode
/// named `output`. Also returns, per input, the factor by which parity
/// repairs shrank its level below the design amplitude.
pub fn combiner(
    ctx: &mut Ctx,
    x: &SuperState,
    inputs: &[CombinerInput],
    m_factor: f64,
    m_schedule: &[f64],
    topology: Topology,
    z_alpha: f64,
    output: &str,
    ledger: &mut HeraldLedger,
) -> Result<Option<(SuperState, Vec<f64>)>> {
    let n = inputs.len();
    if n == 0 {
        return Err(Error::InvalidParameter("combiner needs at least one input".into()));
    }
    for w in inputs.windows(2) {
        if !(w[0].nominal < w[1].nominal) {
            return Err(Error::Ordering(format!(
                "inputs must increase in amplitude: {} then {}",
                w[0].nominal, w[1].nominal
            )));
        }
    }
    if m_schedule.len() + 1 < n {
        return Err(Error::InvalidParameter(format!(
            "{} inputs need {} m values, got {}",
            n,
            n - 1,
            m_schedule.len()
        )));
    }
    let rounds = combiner_schedule(n, topology);
    let mut y = x.clone();
    let mut members: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    // running worst-case amplitude of each group
    let mut worst: Vec<f64> = inputs.iter().map(|i| i.nominal).collect();
    let mut scales = vec![1.0; n];
    let mut stage = 0;
    for pairs in rounds {
        for (hi, lo) in pairs {
            let params = AdderParams::new(m_factor, m_schedule[stage])?;
            let top = *members[hi].iter().max().expect("nonempty group");
            let premultiplied = members[hi].len() > 1;
            let alpha_hi = if premultiplied {
                inputs[top].amplitude / params.gain()
            } else {
                inputs[hi].amplitude
            };
            let spec = AdderSpec {
                hi: &inputs[hi].mode,
                lo: &inputs[lo].mode,
                params,
                alpha_hi,
                beta_lo: Some(worst[lo]),
                premultiplied,
                fix: ZFix::Divider {
                    mode: inputs[hi].mode.clone(),
                    leading: inputs[top].nominal * scales[top],
                    ratio: z_alpha / (inputs[top].nominal * scales[top]),
                },
            };
            let name = format!("adder{}", stage + 1);
            let mark = ledger.shrink.len();
            let out = match adder(ctx, &y, &spec, &name, ledger)? {
                Some(s) => s,
                None => return Ok(None),
            };
            // the sum sits in `hi`; carry it under the lower group's label
            let tmp = ctx.fresh("sum");
            y = out
                .relabel(&inputs[hi].mode, &tmp)?
                .relabel(&tmp, &inputs[lo].mode)?;
            worst[lo] += worst[hi];
            let moved = std::mem::take(&mut members[hi]);
            members[lo].extend(moved);
            let f: f64 = ledger.shrink[mark..]
                .iter()
                .filter(|(m, _)| *m == inputs[hi].mode)
                .map(|(_, f)| f)
                .product();
            for &u in &members[lo] {
                scales[u] *= f;
            }
            stage += 1;
        }
    }
    Ok(Some((y.relabel(&inputs[0].mode, output)?, scales)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::QubitSpec;
    use num_complex::Complex64;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(x: f64) -> Complex64 {
        Complex64::new(x, 0.0)
    }

    fn qubit(label: &str, theta: f64, phi: f64, alpha: f64) -> SuperState {
        SuperState::qubit(label, &QubitSpec::from_angles(theta, phi, alpha).unwrap()).unwrap()
    }

    #[test]
    fn first_order_divider_example() {
        let x = SuperState::coherent("a", c(200.0));
        let y = divider(&x, "a", 100.0, "t", DividerMode::FirstOrder).unwrap();
        assert_eq!(y.amplitudes("t").unwrap(), vec![c(2.0)]);
        assert_eq!(y.amplitudes("a").unwrap(), vec![c(200.0)]);
        let e = divider(&x, "a", 100.0, "t", DividerMode::Exact).unwrap();
        let gap = 200.0 - e.amplitudes("a").unwrap()[0].re;
        assert!((gap - 200.0 * (1.0 - (0.01f64).cos())).abs() < 1e-12);
        assert!((gap - 200.0 / (2.0 * 1e4)).abs() < 1e-6);
    }

    #[test]
    fn divider_correlates_instead_of_cloning() {
        let x = SuperState::cat("a", 20.0, NormMode::Exact).unwrap();
        let y = divider(&x, "a", 10.0, "t", DividerMode::FirstOrder).unwrap();
        assert_eq!(y.num_terms(), 2);
        let clone = SuperState::cat("a", 20.0, NormMode::Exact)
            .unwrap()
            .tensor(&SuperState::cat("t", 2.0, NormMode::Exact).unwrap())
            .unwrap();
        assert!(y.fidelity(&clone).unwrap() < 0.6);
    }

    #[test]
    fn tap_splits_exact_fraction() {
        let y = tap(&SuperState::coherent("a", c(222.0)), "a", 0.01, "t").unwrap();
        assert!((y.amplitudes("t").unwrap()[0].re - 2.22).abs() < 1e-12);
    }

    #[test]
    fn teleport_preserves_logical_coefficients() {
        let x = qubit("in", 0.7, 0.4, 2.0);
        let res = SuperState::bell_cat(["a", "b"], 2.0, NormMode::Exact).unwrap();
        let mut ctx = Ctx::enumerate();
        let (out, rec) = teleport(&mut ctx, &x, "in", &res, "t").unwrap();
        let out = out.unwrap();
        assert_eq!(rec.outcome, Outcome::Success);
        let f = out.qubit_fidelity("b", &QubitSpec::from_angles(0.7, 0.4, 2.0).unwrap()).unwrap();
        assert!(1.0 - f < 1e-10, "{f}");
        assert!((rec.success_probability + rec.null_probability - 1.0).abs() < 1e-10);
    }

    #[test]
    fn teleport_arms_leave_identical_states() {
        let x = qubit("in", 0.3, 1.1, 1.2)
            .tensor(&SuperState::coherent("spect", c(0.4)))
            .unwrap();
        let res = SuperState::bell_cat(["a", "b"], 1.2, NormMode::Exact).unwrap();
        let y = x.tensor(&res).unwrap().apply_beamsplitter("in", "a", FRAC_PI_4).unwrap();
        for class in [HeraldClass::EvenNonZero, HeraldClass::Odd] {
            let arm1 = y.project_photon_number("a", 0).unwrap().0.apply_herald("in", class).unwrap().0;
            let arm2 = y.project_photon_number("in", 0).unwrap().0.apply_herald("a", class).unwrap().0;
            let arm2 = arm2.apply_phase("b", PI).unwrap();
            // herald records sit at different positions; compare the field part
            let target = qubit("q", 0.3, 1.1, 1.2)
                .tensor(&SuperState::coherent("s", c(0.4)))
                .unwrap();
            let f1 = arm1.reduced_fidelity(&target, &["b", "spect"]).unwrap();
            let f2 = arm2.reduced_fidelity(&target, &["b", "spect"]).unwrap();
            assert!((f1 - f2).abs() < 1e-12);
            assert!((arm1.norm_sqr() - arm2.norm_sqr()).abs() < 1e-12);
        }
    }

    #[test]
    fn teleport_projects_deviation_with_known_probability() {
        // |(1+eps) alpha> onto |alpha>
        let (alpha, eps) = (2.0, 0.11);
        let x = SuperState::coherent("in", c(alpha * (1.0 + eps)));
        let res = SuperState::bell_cat(["a", "b"], alpha, NormMode::Exact).unwrap();
        let mut ctx = Ctx::enumerate();
        let (out, rec) = teleport(&mut ctx, &x, "in", &res, "t").unwrap();
        let expect = (-(alpha * eps).powi(2) / 2.0).exp();
        assert!((rec.success_probability - expect).abs() < 1e-3, "{}", rec.success_probability);
        let f = out
            .unwrap()
            .reduced_fidelity(&SuperState::coherent("q", c(alpha)), &["b"])
            .unwrap();
        assert!(f > 1.0 - 1e-3, "{f}");
    }

    #[test]
    fn multiplier_scales_branches() {
        let x = qubit("q", 0.4, 0.0, 2.0);
        let mut ctx = Ctx::enumerate();
        let mut ledger = HeraldLedger::default();
        let y = multiplier(&mut ctx, &x, "q", 10.0, 2.0, "mul", &mut ledger).unwrap().unwrap();
        let f = y
            .qubit_fidelity("q", &QubitSpec::from_angles(0.4, 0.0, 20.0).unwrap())
            .unwrap();
        assert!(1.0 - f < 1e-10);
        let g = 10f64.powf(1.4);
        let y = multiplier(&mut ctx, &x, "q", g, 2.0, "mul", &mut ledger).unwrap().unwrap();
        let amp = y.amplitudes("q").unwrap().iter().map(|a| a.re.abs()).fold(0.0, f64::max);
        assert!((amp / 2.0 - 25.12).abs() < 1e-2);
    }

    #[test]
    fn erasure_matches_closed_form() {
        // residual |+-(R) + delta> with delta = 0.2
        let r = 199.0;
        let x = SuperState::entangled_cat(&["res", "m"], &[r, 5.0], NormMode::Exact)
            .unwrap()
            .apply_beamsplitter("res", "m", 0.0)
            .unwrap()
            .apply_phase("m", PI)
            .unwrap();
        let shifted = SuperState::from_terms(
            &["res", "m"],
            x.terms()
                .iter()
                .map(|t| crate::state::CoherentTerm {
                    coeff: t.coeff,
                    amps: vec![t.amps[0] + 0.2, t.amps[1]],
                })
                .collect(),
        )
        .unwrap();
        let mut ctx = Ctx::enumerate();
        let (_, rec) = erase_mode(&mut ctx, &shifted, "res", r, "e").unwrap();
        assert!((rec.success_probability - (-0.02f64).exp()).abs() < 1e-10);
    }

    #[test]
    fn erasure_parity_phase_follows_photon_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let spec = QubitSpec::from_angles(0.6, 0.3, 2.0).unwrap();
        let x = SuperState::entangled_cat(&["res", "m"], &[30.0, 2.0], NormMode::Exact).unwrap();
        let x = SuperState::from_terms(
            &["res", "m"],
            x.terms()
                .iter()
                .zip([spec.mu, spec.nu])
                .map(|(t, c)| crate::state::CoherentTerm {
                    coeff: LogComplex::from_complex(c),
                    amps: vec![t.amps[0] * (30.1 / 30.0), t.amps[1]],
                })
                .collect(),
        )
        .unwrap();
        let flipped = QubitSpec::new(spec.mu, -spec.nu, 2.0).unwrap();
        for _ in 0..50 {
            let mut ctx = Ctx::sampled(&mut rng);
            let (out, rec) = erase_mode(&mut ctx, &x, "res", 30.0, "e").unwrap();
            let Some(out) = out else { continue };
            let plain = out.qubit_fidelity("m", &spec).unwrap();
            let flip = out.qubit_fidelity("m", &flipped).unwrap();
            if rec.parity_phase == 1 {
                assert!(plain > 1.0 - 1e-9 && flip < 0.5, "{rec:?} {plain} {flip}");
            } else {
                assert!(flip > 1.0 - 1e-9 && plain < 0.5, "{rec:?} {plain} {flip}");
            }
        }
    }

    #[test]
    fn sampled_z_loop_restores_phase() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let spec = QubitSpec::from_angles(0.5, 0.2, 2.0).unwrap();
        let x = SuperState::qubit("q", &QubitSpec::new(spec.mu, -spec.nu, 2.0).unwrap()).unwrap();
        let fix = ZFix::Teleport {
            mode: "q".into(),
            alpha: 2.0,
        };
        let mut ctx = Ctx::sampled(&mut rng);
        let mut ledger = HeraldLedger::default();
        let y = z_correct(&mut ctx, x, &fix, "z", &mut ledger).unwrap().unwrap();
        assert!(ledger.pending_parity.is_empty());
        assert!(y.qubit_fidelity("q", &spec).unwrap() > 1.0 - 1e-10);
    }

    #[test]
    fn adder_produces_sum_amplitudes() {
        let mut ctx = Ctx::enumerate();
        let mut ledger = HeraldLedger::default();
        let t = (1.0 - 0.01f64).sqrt();
        let x = SuperState::cat("hi", 20.0, NormMode::Exact)
            .unwrap()
            .tensor(&SuperState::cat("lo", 2.0 / t, NormMode::Exact).unwrap())
            .unwrap();
        let spec = AdderSpec {
            hi: "hi",
            lo: "lo",
            params: AdderParams::new(10.0, 1.0).unwrap(),
            alpha_hi: 20.0,
            beta_lo: Some(2.0),
            premultiplied: false,
            fix: ZFix::Divider {
                mode: "hi".into(),
                leading: 20.0,
                ratio: 0.1,
            },
        };
        let y = adder(&mut ctx, &x, &spec, "add", &mut ledger).unwrap().unwrap();
        let mut amps: Vec<f64> = y.amplitudes("hi").unwrap().iter().map(|a| a.re).collect();
        amps.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (a, e) in amps.iter().zip([-22.0, -18.0, 18.0, 22.0]) {
            assert!((a - e).abs() < 1e-9, "{amps:?}");
        }
        let erase = ledger.find("add/erase").unwrap();
        assert!((erase.success_probability - 0.98).abs() < 5e-4);
    }

    #[test]
    fn schedules() {
        assert_eq!(combiner_schedule(1, Topology::Series), Vec::<Vec<(usize, usize)>>::new());
        assert_eq!(combiner_schedule(3, Topology::Series), vec![vec![(1, 0)], vec![(2, 0)]]);
        let p = combiner_schedule(4, Topology::Parallel);
        assert_eq!(p, vec![vec![(1, 0), (3, 2)], vec![(2, 0)]]);
        assert_eq!(p.iter().map(Vec::len).sum::<usize>(), 3);
        assert_eq!(combiner_schedule(3, Topology::Parallel), vec![vec![(1, 0)], vec![(2, 0)]]);
        let g = parallel_pregain(4, &[1.0, 1.0, 2.0], 10.0);
        assert_eq!(g, vec![1.0, 1.0, 100.0, 100.0]);
    }

    #[test]
    fn combiner_rejects_bad_ordering() {
        let mut ctx = Ctx::enumerate();
        let x = SuperState::vacuum("a").tensor(&SuperState::vacuum("b")).unwrap();
        let inputs = [
            CombinerInput { mode: "a".into(), amplitude: 20.0, nominal: 20.0 },
            CombinerInput { mode: "b".into(), amplitude: 2.0, nominal: 2.0 },
        ];
        let e = combiner(&mut ctx, &x, &inputs, 10.0, &[1.0], Topology::Series, 2.0, "o", &mut HeraldLedger::default());
        assert!(matches!(e, Err(Error::Ordering(_))));
    }
}
