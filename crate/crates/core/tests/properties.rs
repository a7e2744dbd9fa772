use proptest::prelude::*;

use lcflow_core::calculus::Calculus;
use lcflow_core::config::parse_config;
use lcflow_core::diagnostics::{g_pointwise, named_constants, BootstrapReport, Readings, SampleLaw, TickSample};
use lcflow_core::experiments::{evaluate_closure, rescale_params, rescale_state, Normalizations};
use lcflow_core::grid::{CalculusMode, Grid};
use lcflow_core::integrator::{build_initial_data, InitSpec};
use lcflow_core::model::PhysParams;

fn tick() -> impl Strategy<Value = TickSample> {
    (0.0..10.0f64, prop::array::uniform8(0.0..5.0f64)).prop_map(|(t, v)| TickSample {
        t,
        grad_d_l3: v[0],
        rho_dev_linf: v[1],
        grad_rho_lq: v[2],
        grad_rho_l2: v[3],
        grad_u_l2: v[4],
        sqrt_rho_ut_l2: v[5],
        grad_ut_l2: v[6],
        n3: v[7],
    })
}

proptest! {
    #[test]
    fn g_is_nonnegative_and_vanishes_at_background(
        a in 0.01..50.0f64,
        gamma in 1.01..5.0f64,
        rho_bar in 0.1..50.0f64,
        ratio in 0.05..4.0f64,
    ) {
        let g = g_pointwise(rho_bar * ratio, a, gamma, rho_bar);
        prop_assert!(g >= 0.0, "G = {g}");
        prop_assert_eq!(g_pointwise(rho_bar, a, gamma, rho_bar), 0.0);
    }

    #[test]
    fn config_emit_parses_back_unchanged(
        rho_bar in 1.01..40.0f64,
        alpha in 0.0..4.0f64,
        gamma in 1.01..4.0f64,
        mu1 in 0.01..10.0f64,
        q in 3.01..5.99f64,
        n in 8usize..40,
        t_end in 1e-4..2.0f64,
        amp in 0.0..0.25f64,
        seed in any::<u64>(),
        cadence in 1u64..50,
    ) {
        let text = format!(
            "physics.rho_bar = {rho_bar}\nphysics.alpha = {alpha}\nphysics.gamma = {gamma}\n\
             physics.mu1 = {mu1}\nphysics.q = {q}\ngrid.dims = {n}\nsolver.t_end = {t_end}\n\
             init.rho_amplitude = {amp}\ninit.seed = {seed}\noutput.cadence = {cadence}\n"
        );
        let config = parse_config(&text).unwrap();
        let again = parse_config(&config.emit()).unwrap();
        prop_assert_eq!(&again, &config);
        prop_assert_eq!(again.emit(), config.emit());
    }

    #[test]
    fn closure_verdicts_only_improve_with_larger_delta(
        values in prop::array::uniform6(0.0..10.0f64),
        d1 in 0.01..5.0f64,
        extra in 0.0..5.0f64,
    ) {
        let p = PhysParams::default();
        let norms = Normalizations { n1: 1.0, n2: 1.0, n3: 1.0, n4: 1.0 };
        let small = evaluate_closure(values, &p, d1, norms);
        let large = evaluate_closure(values, &p, d1 + extra, norms);
        for (s, l) in small.verdicts.iter().zip(&large.verdicts) {
            prop_assert!(!s.assumption_ok || l.assumption_ok);
            prop_assert!(!s.conclusion_ok || l.conclusion_ok);
            prop_assert!(!s.conclusion_ok || s.assumption_ok);
        }
    }

    #[test]
    fn bootstrap_functionals_never_decrease(ticks in prop::collection::vec(tick(), 1..20)) {
        let mut ticks = ticks;
        ticks.sort_by(|a, b| a.t.total_cmp(&b.t));
        let p = PhysParams::default();
        let mut r = BootstrapReport::new(&p, Readings::default());
        let mut prev = r.values();
        for s in &ticks {
            r.absorb(s);
            let now = r.values();
            for (a, b) in prev.iter().zip(now) {
                prop_assert!(b >= *a);
            }
            prev = now;
        }
    }

    #[test]
    fn unit_scaling_is_the_identity(seed in 0u64..1000) {
        let p = PhysParams::default();
        let calc = Calculus::new(Grid::cube(8).unwrap(), CalculusMode::Spectral);
        let spec = InitSpec { velocity_amplitude: 1.0, grad_d_target: 0.3, seed, ..InitSpec::default() };
        let s = build_initial_data(&calc, &p, &spec).unwrap();
        prop_assert_eq!(rescale_state(&s, 1).unwrap(), s);
        prop_assert_eq!(rescale_params(&p, 1), p);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn gn_running_max_is_nondecreasing(seed in any::<u64>(), samples in 1usize..12) {
        let calc = Calculus::new(Grid::cube(8).unwrap(), CalculusMode::Spectral);
        let suite = named_constants(&calc, samples, seed, SampleLaw::default()).unwrap();
        for (_, est) in &suite.estimates {
            prop_assert_eq!(est.history.len(), samples);
            prop_assert!(est.history.windows(2).all(|w| w[1] >= w[0]));
            prop_assert_eq!(*est.history.last().unwrap(), est.constant);
        }
        prop_assert!(suite.eps0 == 0.5 * suite.delta);
    }
}
