//! Multiplexer and demultiplexer pipelines.
//!
//! User `i` is scaled to `M^{e_i} alpha` (`e_i = i` unless overloaded) and all
//! users are summed into one mode, the qudit. The demultiplexer extracts
//! users from the largest amplitude down: a tap brings the level to `alpha`,
//! a teleportation projects it onto `+-alpha` and leaves an anti-correlated
//! copy, which an adder merges back to cancel the level from the qudit.
//!
//! Beamsplitter transmissions shrink amplitudes by known factors. The
//! multiplexer pre-scales each user so the qudit is exactly nominal; the
//! demultiplexer tracks the residual scale and adapts tap ratios and
//! resource amplitudes so every extraction sees nominal levels.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::blocks::{
    combiner, combiner_schedule, multiplier, tap, teleport_stage, AdderParams, AdderSpec,
    CombinerInput, Ctx, HeraldLedger, Topology, ZFix,
};
use crate::error::{Error, Result};
use crate::logc::LogComplex;
use crate::state::{CoherentTerm, NormMode, QubitSpec, SuperState};

/// Label of the multiplexed mode.
pub const QUDIT: &str = "qudit";

pub fn user_label(u: usize) -> String {
    format!("u{u}")
}

pub fn output_label(u: usize) -> String {
    format!("out{u}")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UserSlot {
    /// Level exponent: the user travels at `M^exponent * alpha`.
    pub exponent: f64,
    /// m of the adder where this user is the upper input.
    pub mux_m: f64,
    /// m of the re-merge after this user is extracted.
    pub demux_m: f64,
    /// Added after the design through an interleaved slot.
    pub overload: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MuxPlan {
    pub alpha: f64,
    pub m_factor: f64,
    pub users: Vec<UserSlot>,
    pub topology: Topology,
}

impl MuxPlan {
    /// `n` users at integer levels; adder `i` uses `m = i`, the re-merge after
    /// extracting level `k` uses `m = k + 1`.
    pub fn new(alpha: f64, m_factor: f64, n: usize) -> Result<Self> {
        let users = (0..n)
            .map(|i| UserSlot {
                exponent: i as f64,
                mux_m: (i as f64).max(1.0),
                demux_m: i as f64 + 1.0,
                overload: false,
            })
            .collect();
        let plan = MuxPlan {
            alpha,
            m_factor,
            users,
            topology: Topology::Series,
        };
        plan.validate()?;
        Ok(plan)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0) || !self.alpha.is_finite() {
            return Err(Error::NonPositiveAlpha(self.alpha));
        }
        if !(self.m_factor >= 3.0) {
            return Err(Error::InvalidParameter(format!(
                "M must be at least 3, got {}",
                self.m_factor
            )));
        }
        if self.users.is_empty() {
            return Err(Error::InvalidParameter("plan has no users".into()));
        }
        for (i, u) in self.users.iter().enumerate() {
            if !(u.exponent >= 0.0) || !(u.mux_m > 0.0) || !(u.demux_m > 0.0) {
                return Err(Error::InvalidParameter(format!("user {i}: {u:?}")));
            }
            if self.users[..i].iter().any(|v| v.exponent == u.exponent) {
                return Err(Error::InvalidParameter(format!(
                    "two users share exponent {}",
                    u.exponent
                )));
            }
        }
        Ok(())
    }

    pub fn n_users(&self) -> usize {
        self.users.len()
    }

    /// Nominal amplitude of user `u`.
    pub fn level(&self, u: usize) -> f64 {
        self.m_factor.powf(self.users[u].exponent) * self.alpha
    }

    /// User indices by increasing amplitude.
    pub fn order(&self) -> Vec<usize> {
        let mut o: Vec<usize> = (0..self.users.len()).collect();
        o.sort_by(|&a, &b| self.users[a].exponent.total_cmp(&self.users[b].exponent));
        o
    }

    /// Sum of the levels below user `u`: the worst-case deviation at its extraction.
    pub fn below(&self, u: usize) -> f64 {
        let e = self.users[u].exponent;
        (0..self.users.len())
            .filter(|&v| self.users[v].exponent < e)
            .map(|v| self.level(v))
            .sum()
    }

    /// Worst relative deviation of the extracted level of user `u`.
    pub fn extraction_eps(&self, u: usize) -> f64 {
        self.below(u) / self.level(u)
    }

    /// Adder m values in combiner stage order.
    pub fn m_schedule(&self) -> Vec<f64> {
        let order = self.order();
        combiner_schedule(order.len(), self.topology)
            .into_iter()
            .flatten()
            .map(|(hi, _)| self.users[order[hi]].mux_m)
            .collect()
    }

    /// Overrides adder m values in combiner stage order.
    pub fn with_m_schedule(mut self, ms: &[f64]) -> Result<Self> {
        let order = self.order();
        let stages: Vec<usize> = combiner_schedule(order.len(), self.topology)
            .into_iter()
            .flatten()
            .map(|(hi, _)| order[hi])
            .collect();
        if ms.len() != stages.len() {
            return Err(Error::InvalidParameter(format!(
                "expected {} m values, got {}",
                stages.len(),
                ms.len()
            )));
        }
        for (u, &m) in stages.iter().zip(ms) {
            self.users[*u].mux_m = m;
        }
        self.validate()?;
        Ok(self)
    }

    /// Overrides re-merge m values in extraction order (largest level first).
    pub fn with_demux_schedule(mut self, ms: &[f64]) -> Result<Self> {
        let order: Vec<usize> = self.order().into_iter().rev().collect();
        if ms.len() + 1 != order.len() {
            return Err(Error::InvalidParameter(format!(
                "expected {} re-merge m values, got {}",
                order.len().saturating_sub(1),
                ms.len()
            )));
        }
        for (u, &m) in order.iter().zip(ms) {
            self.users[*u].demux_m = m;
        }
        self.validate()?;
        Ok(self)
    }

    pub fn with_topology(mut self, t: Topology) -> Self {
        self.topology = t;
        self
    }

    /// Multiplier applied to each user before the combiner, so that every
    /// level reaches the qudit at exactly its nominal amplitude.
    pub fn entry_factors(&self, conv: crate::blocks::SumBs) -> Result<Vec<f64>> {
        let order = self.order();
        let n = order.len();
        let mut scale = vec![1.0; n];
        let mut members: Vec<Vec<usize>> = (0..n).map(|p| vec![p]).collect();
        for (hi, lo) in combiner_schedule(n, self.topology).into_iter().flatten() {
            let params = AdderParams::new(self.m_factor, self.users[order[hi]].mux_m)?;
            let (r, t) = params.coefficients(conv);
            if members[hi].len() > 1 {
                for &p in &members[hi] {
                    scale[p] *= r;
                }
            }
            for &p in &members[lo] {
                scale[p] *= t;
            }
            let moved = std::mem::take(&mut members[hi]);
            members[lo].extend(moved);
        }
        let mut out = vec![0.0; n];
        for (p, &u) in order.iter().enumerate() {
            out[u] = self.m_factor.powf(self.users[u].exponent) / scale[p];
        }
        Ok(out)
    }
}

/// Adds `extra_users` slots interleaved at half-integer levels, lowest first.
pub fn overload_plan(plan: &MuxPlan, extra_users: usize) -> Result<MuxPlan> {
    if extra_users == 0 {
        return Err(Error::InvalidParameter("extra_users must be at least 1".into()));
    }
    let top = plan
        .users
        .iter()
        .map(|u| u.exponent)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut out = plan.clone();
    for i in 0..extra_users {
        let e = i as f64 + 0.5;
        if e > top {
            return Err(Error::InvalidParameter(format!(
                "no free interleaved slot for extra user {i}"
            )));
        }
        out.users.push(UserSlot {
            exponent: e,
            mux_m: e.max(1.0),
            demux_m: e + 1.0,
            overload: true,
        });
    }
    out.validate()?;
    Ok(out)
}

/// Ratio that keeps the top level at `beta` for `n` users: `(beta/alpha)^(1/(n-1))`.
pub fn heuristic_ratio(alpha: f64, beta: f64, n: usize) -> Result<f64> {
    if n < 2 || !(beta > alpha) || !(alpha > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "need n >= 2 and beta > alpha > 0, got n={n}, alpha={alpha}, beta={beta}"
        )));
    }
    Ok((beta / alpha).powf(1.0 / (n as f64 - 1.0)))
}

fn check_qubits(qubits: &[QubitSpec], plan: &MuxPlan) -> Result<()> {
    if qubits.len() != plan.n_users() {
        return Err(Error::InvalidParameter(format!(
            "{} qubits for {} users",
            qubits.len(),
            plan.n_users()
        )));
    }
    for q in qubits {
        if (q.alpha - plan.alpha).abs() > 1e-12 * plan.alpha {
            return Err(Error::InvalidParameter(format!(
                "qubit amplitude {} differs from plan amplitude {}",
                q.alpha, plan.alpha
            )));
        }
    }
    Ok(())
}

/// `sum_l (prod_j c_j) |sum_k s_k M^{e_k} alpha>` over all sign patterns, with
/// every amplitude multiplied by `scale`, exactly normalized.
pub fn ideal_qudit_scaled(
    qubits: &[QubitSpec],
    plan: &MuxPlan,
    users: &[usize],
    scale: f64,
    label: &str,
) -> Result<SuperState> {
    let mut terms: Vec<CoherentTerm> = vec![CoherentTerm {
        coeff: LogComplex::ONE,
        amps: vec![Complex64::new(0.0, 0.0)],
    }];
    for &u in users {
        let q = &qubits[u];
        let lvl = plan.level(u) * scale;
        let mut next = Vec::with_capacity(terms.len() * 2);
        for t in &terms {
            for (c, s) in [(q.mu, -1.0), (q.nu, 1.0)] {
                let c = LogComplex::from_complex(c);
                if c.is_zero() {
                    continue;
                }
                next.push(CoherentTerm {
                    coeff: t.coeff * c,
                    amps: vec![t.amps[0] + s * lvl],
                });
            }
        }
        terms = next;
    }
    SuperState::from_terms(&[label], terms)?
        .tidy()
        .normalize(NormMode::Exact)
}

/// Target multiplexed state for `qubits` under `plan`.
pub fn ideal_qudit(qubits: &[QubitSpec], plan: &MuxPlan) -> Result<SuperState> {
    plan.validate()?;
    check_qubits(qubits, plan)?;
    let users: Vec<usize> = (0..plan.n_users()).collect();
    ideal_qudit_scaled(qubits, plan, &users, 1.0, QUDIT)
}

/// Input product state: user `u` in mode `u{u}`.
pub fn input_state(qubits: &[QubitSpec]) -> Result<SuperState> {
    let mut x = SuperState::scalar(LogComplex::ONE);
    for (u, q) in qubits.iter().enumerate() {
        x = x.tensor(&SuperState::qubit(&user_label(u), q)?)?;
    }
    Ok(x)
}

/// Multiplexes `qubits` into the mode [`QUDIT`]. Returns `None` when a herald fails.
pub fn qmux(
    ctx: &mut Ctx,
    qubits: &[QubitSpec],
    plan: &MuxPlan,
    ledger: &mut HeraldLedger,
) -> Result<Option<Qudit>> {
    plan.validate()?;
    check_qubits(qubits, plan)?;
    let factors = plan.entry_factors(ctx.sum_bs)?;
    let mut x = input_state(qubits)?;
    let order = plan.order();
    for &u in &order {
        let stage = format!("user{u}/multiply");
        match multiplier(ctx, &x, &user_label(u), factors[u], plan.alpha, &stage, ledger)? {
            Some(s) => x = s,
            None => return Ok(None),
        }
    }
    let inputs: Vec<CombinerInput> = order
        .iter()
        .map(|&u| CombinerInput {
            mode: user_label(u),
            amplitude: factors[u] * plan.alpha,
            nominal: plan.level(u),
        })
        .collect();
    let combined = combiner(
        ctx,
        &x,
        &inputs,
        plan.m_factor,
        &plan.m_schedule(),
        plan.topology,
        plan.alpha,
        QUDIT,
        ledger,
    )?;
    Ok(combined.map(|(state, by_position)| {
        let mut scales = vec![1.0; plan.n_users()];
        for (p, &u) in order.iter().enumerate() {
            scales[u] = by_position[p];
        }
        Qudit {
            state,
            scales,
            remaining: order,
        }
    }))
}

/// A multiplexed mode together with what is known about its levels.
#[derive(Clone, Debug)]
pub struct Qudit {
    pub state: SuperState,
    /// Per user: known factor on its level relative to nominal.
    pub scales: Vec<f64>,
    /// Users still in the qudit, by increasing amplitude.
    pub remaining: Vec<usize>,
}

impl Qudit {
    /// A qudit whose levels are exactly nominal.
    pub fn nominal(state: SuperState, plan: &MuxPlan) -> Self {
        Qudit {
            state,
            scales: vec![1.0; plan.n_users()],
            remaining: plan.order(),
        }
    }
}

/// Extracts user `u` into mode `out{u}`. Only the largest remaining level may
/// be extracted. Returns `None` when a herald fails.
pub fn qdemux_cell(
    ctx: &mut Ctx,
    ds: Qudit,
    u: usize,
    plan: &MuxPlan,
    ledger: &mut HeraldLedger,
) -> Result<Option<Qudit>> {
    if ds.remaining.last() != Some(&u) {
        return Err(Error::Ordering(format!(
            "user {u} is not the largest remaining level (remaining {:?})",
            ds.remaining
        )));
    }
    let alpha = plan.alpha;
    let out = output_label(u);
    let fix = ZFix::Teleport {
        mode: out.clone(),
        alpha,
    };
    let mut remaining = ds.remaining.clone();
    remaining.pop();
    if remaining.is_empty() {
        // last level: project the qudit itself onto +-alpha
        let a = ctx.fresh("bell");
        let res = SuperState::bell_cat([&a, &out], alpha, NormMode::Exact)?;
        let stage = format!("demux{u}/readout");
        let eps = (1.0 - ds.scales[u]).abs();
        let analytic = Some(crate::analytics::analytic_teleport_correction_p(alpha, eps));
        let state = teleport_stage(ctx, &ds.state, QUDIT, &res, Some(&fix), &stage, analytic, ledger)?;
        let mut scales = ds.scales;
        scales[u] = 1.0;
        return Ok(state.map(|state| Qudit {
            state,
            scales,
            remaining,
        }));
    }
    let level = plan.level(u);
    let params = AdderParams::new(plan.m_factor, plan.users[u].demux_m)?;
    let (_, t) = params.coefficients(ctx.sum_bs);
    let ratio = alpha / (ds.scales[u] * level);
    let c_tap = (1.0 - ratio * ratio).sqrt();
    let middle = t * c_tap * ds.scales[u] * level;

    let tp = ctx.fresh("tap");
    let x = tap(&ds.state, QUDIT, ratio, &tp)?;
    let (a, r) = (ctx.fresh("dres"), ctx.fresh("dres"));
    let res = SuperState::demux_resource_with_middle([&a, &r, &out], alpha, middle, NormMode::Exact)?;
    let analytic = Some(crate::analytics::analytic_teleport_correction_p(
        alpha,
        plan.extraction_eps(u),
    ));
    let stage = format!("demux{u}/extract");
    let x = match teleport_stage(ctx, &x, &tp, &res, Some(&fix), &stage, analytic, ledger)? {
        Some(s) => s,
        None => return Ok(None),
    };
    let spec = AdderSpec {
        hi: &r,
        lo: QUDIT,
        params,
        alpha_hi: middle,
        beta_lo: Some(level + plan.below(u)),
        premultiplied: false,
        fix: fix.clone(),
    };
    let x = match crate::blocks::adder(ctx, &x, &spec, &format!("demux{u}/remerge"), ledger)? {
        Some(s) => s,
        None => return Ok(None),
    };
    let mut scales = ds.scales;
    for &v in &remaining {
        scales[v] *= t * c_tap;
    }
    scales[u] = 1.0;
    Ok(Some(Qudit {
        state: x.relabel(&r, QUDIT)?,
        scales,
        remaining,
    }))
}

/// Extracts every user, largest level first. Returns `None` when a herald fails.
pub fn qdemux_all(
    ctx: &mut Ctx,
    ds: Qudit,
    plan: &MuxPlan,
    ledger: &mut HeraldLedger,
) -> Result<Option<SuperState>> {
    let mut ds = ds;
    while let Some(&u) = ds.remaining.last() {
        ds = match qdemux_cell(ctx, ds, u, plan, ledger)? {
            Some(d) => d,
            None => return Ok(None),
        };
    }
    Ok(Some(ds.state))
}

/// Fidelity of each recovered output mode with its input qubit.
pub fn recovered_fidelities(state: &SuperState, qubits: &[QubitSpec]) -> Result<Vec<f64>> {
    (0..qubits.len())
        .map(|u| state.qubit_fidelity(&output_label(u), &qubits[u]))
        .collect()
}

/// Outcome of a full multiplex / demultiplex run.
#[derive(Clone, Debug)]
pub struct RoundTrip {
    pub ledger: HeraldLedger,
    /// Qudit right after multiplexing (success path only).
    pub qudit: Option<Qudit>,
    /// Final state with every `out{u}` mode (success path only).
    pub output: Option<SuperState>,
    /// Per-user fidelity; empty when the run failed.
    pub fidelities: Vec<f64>,
}

impl RoundTrip {
    pub fn success(&self) -> bool {
        self.output.is_some() && !self.ledger.failed
    }
}

pub fn round_trip(ctx: &mut Ctx, qubits: &[QubitSpec], plan: &MuxPlan) -> Result<RoundTrip> {
    let mut ledger = HeraldLedger::default();
    let qudit = qmux(ctx, qubits, plan, &mut ledger)?;
    let output = match &qudit {
        Some(q) => qdemux_all(ctx, q.clone(), plan, &mut ledger)?,
        None => None,
    };
    let fidelities = match &output {
        Some(s) => recovered_fidelities(s, qubits)?,
        None => vec![],
    };
    Ok(RoundTrip {
        ledger,
        qudit,
        output,
        fidelities,
    })
}
