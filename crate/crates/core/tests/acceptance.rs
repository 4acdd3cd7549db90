//! Acceptance gate: one PASS/FAIL line per criterion.
//!
//! Exits 0 unless `COHMUX_ACCEPTANCE_STRICT=1` is set, in which case any
//! FAIL exits 1.

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::time::Instant;

use cohmux::analytics::{analytic_erasure_p, demux_worst_eps, monte_carlo};
use cohmux::blocks::{erase_mode, teleport, Ctx, Reading};
use cohmux::fock::{compare, fock_beamsplitter, fock_project, to_fock};
use cohmux::mux::{overload_plan, round_trip, MuxPlan, RoundTrip};
use cohmux::state::CoherentTerm;
use cohmux::{HeraldClass, LogComplex, NormMode, QubitSpec, SuperState};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Gate {
    failures: usize,
}

impl Gate {
    fn check(&mut self, id: &str, name: &str, ok: bool, detail: String) {
        if !ok {
            self.failures += 1;
        }
        println!("{} [{id}] {name}: {detail}", if ok { "PASS" } else { "FAIL" });
    }

    /// `value` within `tol` of `target`.
    fn near(&mut self, id: &str, name: &str, value: f64, target: f64, tol: f64) {
        let ok = (value - target).abs() <= tol;
        self.check(id, name, ok, format!("{value:.6} vs {target:.6} (tol {tol:e})"));
    }
}

fn zeros(n: usize) -> Vec<QubitSpec> {
    vec![QubitSpec::zero(2.0).unwrap(); n]
}

fn run(plan: &MuxPlan, qs: &[QubitSpec]) -> RoundTrip {
    round_trip(&mut Ctx::enumerate(), qs, plan).unwrap()
}

fn stage_p(rt: &RoundTrip, stage: &str) -> f64 {
    rt.ledger
        .find(stage)
        .unwrap_or_else(|| panic!("missing stage {stage}"))
        .success_probability
}

fn random_qubit(rng: &mut ChaCha8Rng, alpha: f64) -> QubitSpec {
    let theta = (1.0 - 2.0 * rng.gen::<f64>()).acos();
    QubitSpec::from_angles(theta, 2.0 * PI * rng.gen::<f64>(), alpha).unwrap()
}

fn random_amp(rng: &mut ChaCha8Rng, r: f64) -> Complex64 {
    Complex64::from_polar(r * rng.gen::<f64>().sqrt(), 2.0 * PI * rng.gen::<f64>())
}

fn random_state(rng: &mut ChaCha8Rng, modes: usize, r: f64) -> SuperState {
    let labels: Vec<String> = (0..modes).map(|i| format!("m{i}")).collect();
    let refs: Vec<&str> = labels.iter().map(|s| s.as_str()).collect();
    let terms = (0..rng.gen_range(1..=3))
        .map(|_| CoherentTerm {
            coeff: LogComplex::from_complex(random_amp(rng, 1.0)),
            amps: (0..modes).map(|_| random_amp(rng, r)).collect(),
        })
        .collect();
    SuperState::from_terms(&refs, terms)
        .unwrap()
        .normalize(NormMode::Exact)
        .unwrap()
}

fn golden(g: &mut Gate) {
    let t0 = Instant::now();
    let tol = 5e-4;
    let base = MuxPlan::new(2.0, 10.0, 3).unwrap();
    let rt = run(&base, &zeros(3));
    g.near("1a", "first adder m=1 (enumerate)", stage_p(&rt, "adder1/erase"), 0.98, tol);
    g.near("1a", "first adder m=1 (analytic)", analytic_erasure_p(20.0, 2.0, 10.0, 1.0), 0.98, tol);
    g.near("1b", "second adder m=2 (enumerate)", stage_p(&rt, "adder2/erase"), 0.9761, tol);
    g.near("1b", "second adder m=2 (analytic)", analytic_erasure_p(200.0, 22.0, 10.0, 2.0), 0.9761, tol);
    let v = run(&base.clone().with_m_schedule(&[1.0, 1.4]).unwrap(), &zeros(3));
    g.near("1c", "second adder m=1.4 (enumerate)", stage_p(&v, "adder2/erase"), 0.6814, tol);
    g.near("1c", "second adder m=1.4 (analytic)", analytic_erasure_p(200.0, 22.0, 10.0, 1.4), 0.6814, tol);
    let p = stage_p(&rt, "demux2/extract");
    g.check("1d", "qubit-2 projection >= 97.60%", p >= 0.9760 - tol, format!("{p:.6} (tol {tol:e})"));
    g.near("1e", "re-merge m=3", stage_p(&rt, "demux2/remerge/erase"), 0.9756, tol);
    let v = run(&base.clone().with_demux_schedule(&[2.4, 2.0]).unwrap(), &zeros(3));
    g.near("1e", "re-merge m=2.4", stage_p(&v, "demux2/remerge/erase"), 0.6766, tol);
    g.near("1f", "qubit-1 projection", stage_p(&rt, "demux1/extract"), 0.9802, tol);
    let p = stage_p(&rt, "demux1/remerge/erase");
    g.check(
        "1g",
        "final erase >= 97.60% (run at m=2)",
        p >= 0.9760 - tol,
        format!("{p:.6} (tol {tol:e})"),
    );
    let dt = t0.elapsed().as_secs_f64();
    g.check("1", "golden suite runtime < 5 s", dt < 5.0, format!("{dt:.2} s"));
}

fn overload(g: &mut Gate) {
    let base = MuxPlan::new(2.0, 10.0, 3).unwrap();
    let ov = overload_plan(&base, 1).unwrap();
    g.near("2a", "overload worst eps", ov.extraction_eps(3), 0.3162, 5e-4);
    let rt = run(&ov, &zeros(4));
    g.near("2b", "overload extraction", stage_p(&rt, "demux3/extract"), 0.8187, 5e-4);
    g.near("2c", "overload qubit-2 projection", stage_p(&rt, "demux2/extract"), 0.9607, 5e-4);
    g.near("2d", "overload re-merge m=3", stage_p(&rt, "demux2/remerge/erase"), 0.9742, 5e-4);
    let v = run(&ov.with_demux_schedule(&[2.4, 2.0, 1.5]).unwrap(), &zeros(4));
    g.near("2d", "overload re-merge m=2.4", stage_p(&v, "demux2/remerge/erase"), 0.6615, 5e-4);
}

fn worst_eps(g: &mut Gate) {
    let v = demux_worst_eps(10.0, 2).unwrap();
    g.near("3", "demux_worst_eps(10, 2)", v, 1.0 / 9.0 - 1.0 / 900.0, 1e-12);
}

fn oracle(g: &mut Gate) {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let modes = rng.gen_range(1..=3);
        let mut x = random_state(&mut rng, modes, 2.0);
        let mut v = to_fock(&x, None).unwrap();
        let pick = |rng: &mut ChaCha8Rng, k: usize| format!("m{}", rng.gen_range(0..k));
        let l = pick(&mut rng, modes);
        let phi = 2.0 * PI * rng.gen::<f64>();
        x = x.apply_phase(&l, phi).unwrap();
        v = v.phase(&l, phi).unwrap();
        if modes >= 2 {
            let i = rng.gen_range(0..modes);
            let j = (i + rng.gen_range(1..modes)) % modes;
            let theta = 2.0 * PI * rng.gen::<f64>();
            let (a, b) = (format!("m{i}"), format!("m{j}"));
            x = x.apply_beamsplitter(&a, &b, theta).unwrap();
            v = fock_beamsplitter(&v, &a, &b, theta).unwrap();
            let n = rng.gen_range(0..=6);
            let l = pick(&mut rng, modes);
            x = x.project_photon_number(&l, n).unwrap().0;
            v = fock_project(&v, &l, n as usize).unwrap().0;
        }
        worst = worst.max(compare(&x, &v).unwrap());
    }
    g.check("4", "coherent engine vs number basis, 200 cases", worst < 1e-8, format!("max deviation {worst:.3e} (tol 1e-8)"));
    let dt = t0.elapsed().as_secs_f64();
    g.check("4", "oracle runtime < 60 s", dt < 60.0, format!("{dt:.2} s"));
}

fn round_trips(g: &mut Gate) {
    let plan = MuxPlan::new(2.0, 10.0, 3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut min_fid: f64 = 1.0;
    let mut worst_norm: f64 = 0.0;
    for _ in 0..50 {
        let qs: Vec<QubitSpec> = (0..3).map(|_| random_qubit(&mut rng, 2.0)).collect();
        let rt = run(&plan, &qs);
        min_fid = rt.fidelities.iter().cloned().fold(min_fid, f64::min);
        let out = rt.output.as_ref().unwrap();
        worst_norm = worst_norm.max((out.norm_sqr() - rt.ledger.path_probability()).abs());
    }
    g.check("5a", "recovered qubit fidelity >= 1 - 1e-4", min_fid >= 1.0 - 1e-4, format!("min fidelity {min_fid:.6}"));
    g.check("5b", "success probability vs ledger product", worst_norm < 1e-6, format!("max deviation {worst_norm:.3e} (tol 1e-6)"));
}

fn invariants(g: &mut Gate) {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (mut dn, mut dp): (f64, f64) = (0.0, 0.0);
    for _ in 0..1000 {
        let x = random_state(&mut rng, 3, 3.0);
        let theta = 2.0 * PI * rng.gen::<f64>();
        let y = x.apply_beamsplitter("m0", "m2", theta).unwrap();
        dn = dn.max((y.norm_sqr() - x.norm_sqr()).abs());
        dp = dp.max((y.mean_photon_number() - x.mean_photon_number()).abs());
    }
    g.check("6a", "beamsplitter unitarity", dn < 1e-10, format!("max norm change {dn:.3e} (tol 1e-10)"));
    g.check("6a", "photon number conservation", dp < 1e-10, format!("max change {dp:.3e} (tol 1e-10)"));

    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let x = random_state(&mut rng, 2, 2.5);
        let p0 = x.prob_zero("m0").unwrap();
        let pe = x.apply_herald("m0", HeraldClass::EvenNonZero).unwrap().1;
        let po = x.apply_herald("m0", HeraldClass::Odd).unwrap().1;
        worst = worst.max((p0 + pe + po - 1.0).abs());
        let total: f64 = (0..80)
            .map(|n| x.project_photon_number("m0", n).unwrap().0.norm_sqr())
            .sum();
        worst = worst.max((total - 1.0).abs());
    }
    g.check("6b", "measurement completeness", worst < 1e-8, format!("max defect {worst:.3e} (tol 1e-8)"));

    let (a, b) = (2.0, 1.5);
    let pair = SuperState::entangled_cat(&["i", "o"], &[a, b], NormMode::Exact).unwrap();
    let mut ctx_rng = ChaCha8Rng::seed_from_u64(7);
    let (mut bad, mut runs) = (0, 0);
    for _ in 0..500 {
        let mut ctx = Ctx::sampled(&mut ctx_rng);
        let (state, rec) = erase_mode(&mut ctx, &pair, "i", a, "erase").unwrap();
        let Some(state) = state else { continue };
        runs += 1;
        let n: u64 = rec
            .readings
            .iter()
            .map(|r| match r {
                Reading::Count(n) => *n,
                _ => 0,
            })
            .sum();
        let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
        let expect = SuperState::qubit("o", &QubitSpec::new(Complex64::new(FRAC_1_SQRT_2, 0.0), Complex64::new(sign * FRAC_1_SQRT_2, 0.0), b).unwrap())
            .unwrap();
        let f = state.reduced_fidelity(&expect, &["o"]).unwrap();
        if rec.parity_phase as f64 != sign || f < 1.0 - 1e-9 {
            bad += 1;
        }
    }
    g.check("6c", "erase parity phase equals (-1)^n", bad == 0 && runs > 0, format!("{bad} mismatches in {runs} successful trajectories"));
}

fn sampling(g: &mut Gate) {
    let plan = MuxPlan::new(2.0, 10.0, 3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let qs: Vec<QubitSpec> = (0..3).map(|_| random_qubit(&mut rng, 2.0)).collect();
    let exact = run(&plan, &qs).ledger.corrected_success_probability();
    let trials = 10_000u64;
    let mc = monte_carlo(&plan, &qs, trials, 2024).unwrap();
    let sigma = (exact * (1.0 - exact) / trials as f64).sqrt();
    let z = (mc.success_rate - exact) / sigma;
    g.check(
        "7a",
        "Monte Carlo success rate within 3 sigma",
        z.abs() <= 3.0,
        format!("{:.5} vs {exact:.5} ({z:+.2} sigma, {trials} trials)", mc.success_rate),
    );
    let a = serde_json::to_string(&monte_carlo(&plan, &qs, 1000, 99).unwrap()).unwrap();
    let b = serde_json::to_string(&monte_carlo(&plan, &qs, 1000, 99).unwrap()).unwrap();
    g.check("7b", "fixed-seed report is byte-identical", a == b, format!("{} bytes", a.len()));
}

fn null_scaling(g: &mut Gate) {
    for alpha in [1.0, 1.5, 2.0] {
        let mut worst: f64 = 0.0;
        for (mu, nu) in [(1.0, 0.0), (0.0, 1.0), (FRAC_1_SQRT_2, FRAC_1_SQRT_2), (FRAC_1_SQRT_2, -FRAC_1_SQRT_2)] {
            let q = QubitSpec::new(Complex64::new(mu, 0.0), Complex64::new(nu, 0.0), alpha).unwrap();
            let x = SuperState::qubit("q", &q).unwrap();
            let res = SuperState::bell_cat(["a", "b"], alpha, NormMode::Exact).unwrap();
            let (_, rec) = teleport(&mut Ctx::enumerate(), &x, "q", &res, "t").unwrap();
            worst = worst.max(rec.null_probability);
        }
        let target = (-alpha * alpha).exp();
        let ratio = worst / target;
        g.check(
            "8",
            &format!("teleport null probability at alpha={alpha}"),
            (0.5..=2.0).contains(&ratio),
            format!("{worst:.4e} vs e^-a^2 = {target:.4e} (ratio {ratio:.3}, need 0.5..2)"),
        );
    }
}

fn main() {
    let mut g = Gate { failures: 0 };
    golden(&mut g);
    overload(&mut g);
    worst_eps(&mut g);
    oracle(&mut g);
    round_trips(&mut g);
    invariants(&mut g);
    sampling(&mut g);
    null_scaling(&mut g);
    println!("{} criteria lines failed", g.failures);
    if g.failures > 0 && std::env::var("COHMUX_ACCEPTANCE_STRICT").as_deref() == Ok("1") {
        std::process::exit(1);
    }
}
