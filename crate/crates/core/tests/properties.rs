use cohmux::blocks::SumBs;
use cohmux::fock::{compare, fock_beamsplitter, fock_project, to_fock};
use cohmux::mux::{ideal_qudit, MuxPlan};
use cohmux::state::{overlap, CoherentTerm};
use cohmux::{HeraldClass, LogComplex, NormMode, QubitSpec, SuperState};
use num_complex::Complex64;
use proptest::prelude::*;

fn amp(r: f64) -> impl Strategy<Value = Complex64> {
    (0.0..r, 0.0..std::f64::consts::TAU).prop_map(|(m, p)| Complex64::from_polar(m, p))
}

fn state(modes: usize, r: f64) -> impl Strategy<Value = SuperState> {
    let term = (amp(1.0), prop::collection::vec(amp(r), modes));
    prop::collection::vec(term, 1..4).prop_filter_map("zero norm", move |ts| {
        let labels: Vec<String> = (0..modes).map(|i| format!("m{i}")).collect();
        let refs: Vec<&str> = labels.iter().map(|s| s.as_str()).collect();
        let terms = ts
            .into_iter()
            .map(|(c, amps)| CoherentTerm {
                coeff: LogComplex::from_complex(c),
                amps,
            })
            .collect();
        SuperState::from_terms(&refs, terms)
            .ok()?
            .normalize(NormMode::Exact)
            .ok()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn beamsplitter_preserves_norm_and_photons(x in state(3, 3.0), theta in 0.0..std::f64::consts::TAU) {
        let y = x.apply_beamsplitter("m0", "m1", theta).unwrap();
        prop_assert!((y.norm_sqr() - 1.0).abs() < 1e-10);
        prop_assert!((y.mean_photon_number() - x.mean_photon_number()).abs() < 1e-9);
    }

    #[test]
    fn beamsplitter_is_an_involution(x in state(2, 3.0), theta in 0.0..std::f64::consts::TAU) {
        let y = x.apply_beamsplitter("m0", "m1", theta).unwrap()
            .apply_beamsplitter("m0", "m1", theta).unwrap();
        prop_assert!((y.fidelity(&x).unwrap() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn herald_classes_are_complete(x in state(2, 3.0)) {
        let p0 = x.prob_zero("m1").unwrap();
        let pe = x.apply_herald("m1", HeraldClass::EvenNonZero).unwrap().1;
        let po = x.apply_herald("m1", HeraldClass::Odd).unwrap().1;
        let pnz = x.apply_herald("m1", HeraldClass::NonZero).unwrap().1;
        prop_assert!((p0 + pe + po - 1.0).abs() < 1e-8);
        prop_assert!((pe + po - pnz).abs() < 1e-8);
    }

    #[test]
    fn normalization_ignores_global_scale(x in state(2, 2.0), c in amp(5.0)) {
        prop_assume!(c.norm() > 1e-3);
        let y = x.clone().scale(LogComplex::from_complex(c)).normalize(NormMode::Exact).unwrap();
        prop_assert!((y.norm_sqr() - 1.0).abs() < 1e-12);
        prop_assert!((y.fidelity(&x).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn overlap_magnitude(a in amp(4.0), b in amp(4.0)) {
        let o = overlap(a, b);
        prop_assert!((2.0 * o.log_magnitude() + (a - b).norm_sqr()).abs() < 1e-12);
    }

    #[test]
    fn coherent_engine_matches_number_basis(
        x in state(2, 2.0),
        theta in 0.0..std::f64::consts::TAU,
        n in 0u64..7,
    ) {
        let y = x.apply_beamsplitter("m0", "m1", theta).unwrap();
        let v = fock_beamsplitter(&to_fock(&x, None).unwrap(), "m0", "m1", theta).unwrap();
        prop_assert!(compare(&y, &v).unwrap() < 1e-8);
        let (py, _) = y.project_photon_number("m1", n).unwrap();
        let (pv, _) = fock_project(&v, "m1", n as usize).unwrap();
        prop_assert!(compare(&py, &pv).unwrap() < 1e-8);
    }

    #[test]
    fn ideal_qudit_is_normalized(
        angles in prop::collection::vec((0.0..std::f64::consts::PI, 0.0..std::f64::consts::TAU), 1..4),
        alpha in 1.0..3.0f64,
    ) {
        let qs: Vec<QubitSpec> = angles.iter().map(|&(t, p)| QubitSpec::from_angles(t, p, alpha).unwrap()).collect();
        let plan = MuxPlan::new(alpha, 10.0, qs.len()).unwrap();
        let s = ideal_qudit(&qs, &plan).unwrap();
        prop_assert!((s.norm_sqr() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn entry_factors_are_at_least_nominal(n in 1usize..5, m_factor in 3.0..20.0f64) {
        let plan = MuxPlan::new(2.0, m_factor, n).unwrap();
        let f = plan.entry_factors(SumBs::ExactReflectivity).unwrap();
        for (u, fu) in f.iter().enumerate() {
            prop_assert!(*fu >= m_factor.powi(u as i32) * (1.0 - 1e-12));
        }
    }
}
