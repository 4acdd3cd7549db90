//! Browser bindings: overlap curve, success-probability sweep and qudit layout.
//!
//! Every export returns a flat `Float64Array`; row layouts are documented per function.

use cohmux::analytics::{linspace, plan_figures, qubit_overlap_curve};
use cohmux::mux::{ideal_qudit, MuxPlan, QUDIT};
use cohmux::QubitSpec;
use wasm_bindgen::prelude::*;

/// Rows `[alpha, |<alpha|-alpha>|^2]` for `steps` amplitudes in `[0, alpha_max]`.
#[wasm_bindgen]
pub fn overlap_curve(alpha_max: f64, steps: usize) -> Result<Vec<f64>, String> {
    let pts = qubit_overlap_curve(&linspace(0.0, alpha_max, steps)).map_err(|e| e.to_string())?;
    Ok(pts.into_iter().flat_map(|(a, o)| [a, o]).collect())
}

/// Rows `[alpha, adders, extractions, re-merges, end_to_end]` of worst-case
/// success products. Every adder uses `m`; re-merges keep the default schedule.
#[wasm_bindgen]
pub fn probability_sweep(
    m_factor: f64,
    m: f64,
    n: usize,
    alpha_lo: f64,
    alpha_hi: f64,
    steps: usize,
) -> Result<Vec<f64>, String> {
    let mut out = Vec::with_capacity(steps * 5);
    for alpha in linspace(alpha_lo, alpha_hi, steps) {
        let plan = MuxPlan::new(alpha, m_factor, n).map_err(|e| e.to_string())?;
        let demux_m: Vec<f64> = plan.order().iter().rev().map(|&u| plan.users[u].demux_m).collect();
        let adder_m = vec![m; n.saturating_sub(1)];
        let f = plan_figures(alpha, m_factor, n, &adder_m, &demux_m).map_err(|e| e.to_string())?;
        let prod = |v: &[f64]| v.iter().product::<f64>();
        out.extend([alpha, prod(&f.adder), prod(&f.extraction), prod(&f.remerge), f.end_to_end()]);
    }
    Ok(out)
}

/// Branch amplitudes of an `n`-user qudit, ascending, followed by the worst
/// relative extraction deviation of each user (lowest level first).
#[wasm_bindgen]
pub fn qudit_layout(alpha: f64, m_factor: f64, n: usize) -> Result<Vec<f64>, String> {
    let plan = MuxPlan::new(alpha, m_factor, n).map_err(|e| e.to_string())?;
    let plus = QubitSpec::from_angles(std::f64::consts::FRAC_PI_4, 0.0, alpha).map_err(|e| e.to_string())?;
    let q = ideal_qudit(&vec![plus; n], &plan).map_err(|e| e.to_string())?;
    let mut amps: Vec<f64> = q
        .amplitudes(QUDIT)
        .map_err(|e| e.to_string())?
        .iter()
        .map(|a| a.re)
        .collect();
    amps.sort_by(f64::total_cmp);
    amps.extend((0..n).map(|u| plan.extraction_eps(u)));
    Ok(amps)
}
