//! Property tests for structural invariants of the flow and the sweeps.

use proptest::prelude::*;

use quenchlab::analysis::{classify_simultaneity, Simultaneity, DELTA_CLASS};
use quenchlab::integrator::{
    check_comparison, integrate, monitor_key_inequality, IntegratorControls, RecordMode, Verdict, BOUND_TOLERANCE,
};
use quenchlab::kernel::{assemble_operator, build_kernel, Domain, NonlocalOperator, Profile};
use quenchlab::model::{check_monotone_criterion, ModelParams};
use quenchlab::stationary::{solve_stationary, within_bounds};
use quenchlab::sweep::{parameter_scan, scan_to_csv, ParamName, ScanAxis};

fn op(n: usize) -> NonlocalOperator {
    let d = Domain::interval(-1.0, 1.0, n).unwrap();
    let k = build_kernel(Profile::Epanechnikov, 0.5, 1).unwrap();
    assemble_operator(&d, &k).unwrap()
}

fn full(times: Vec<f64>) -> IntegratorControls {
    IntegratorControls { rtol: 1e-9, record: RecordMode::Full, output_times: times, t_max: 2.0, ..Default::default() }
}

fn exponents() -> impl Strategy<Value = (f64, f64, f64, f64)> {
    (0.5f64..3.0, 0.5f64..3.0, 0.1f64..1.0, 0.1f64..1.0)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 12, ..ProptestConfig::default() })]

    #[test]
    fn ordered_data_stay_ordered(
        (p, q, a, b) in exponents(),
        lo in prop::collection::vec(0.3f64..0.9, 21),
        gap in prop::collection::vec(0.0f64..0.2, 21),
    ) {
        let op = op(21);
        let params = ModelParams::new(1.0, 1.0, p, q, a, b).unwrap();
        let hi: Vec<f64> = lo.iter().zip(&gap).map(|(x, g)| x + g).collect();
        let times: Vec<f64> = (1..=200).map(|i| i as f64 * 1e-3).collect();
        let (tl, _) = integrate(&lo, &lo, &params, &op, &full(times.clone())).unwrap();
        let (th, _) = integrate(&hi, &hi, &params, &op, &full(times)).unwrap();
        let rep = check_comparison(&th, &tl).unwrap();
        prop_assert!(rep.max_excess <= 1e-7, "{:?}", rep.first_violation);
    }

    #[test]
    fn maxima_never_exceed_initial_bounds(
        (p, q, a, b) in exponents(),
        u in prop::collection::vec(0.2f64..1.6, 21),
        v in prop::collection::vec(0.2f64..1.6, 21),
    ) {
        let op = op(21);
        let params = ModelParams::new(0.5, 0.5, p, q, a, b).unwrap();
        let (_, r) = integrate(&u, &v, &params, &op, &IntegratorControls { t_max: 2.0, ..Default::default() }).unwrap();
        prop_assert!(r.max_u <= r.bounds.m + BOUND_TOLERANCE);
        prop_assert!(r.max_v <= r.bounds.n + BOUND_TOLERANCE);
    }

    #[test]
    fn nonincreasing_start_stays_nonincreasing(
        (p, q, a, b) in exponents(),
        u in prop::collection::vec(0.3f64..0.6, 21),
        v in prop::collection::vec(0.3f64..0.6, 21),
    ) {
        let op = op(21);
        let params = ModelParams::new(1.0, 1.0, p, q, a, b).unwrap();
        let verdict = check_monotone_criterion(&u, &v, &params, &op).unwrap();
        prop_assume!(verdict.u && verdict.v);
        let (traj, _) = integrate(&u, &v, &params, &op, &full(Vec::new())).unwrap();
        let states = traj.states.as_ref().unwrap();
        for w in states.windows(2) {
            let ((u0, v0), (u1, v1)) = (&w[0], &w[1]);
            prop_assert!(u1.iter().zip(u0).all(|(x, y)| *x <= y + 1e-9));
            prop_assert!(v1.iter().zip(v0).all(|(x, y)| *x <= y + 1e-9));
        }
    }

    #[test]
    fn simultaneous_runs_keep_the_key_inequality(
        p in 1.6f64..3.0,
        q in 1.6f64..3.0,
        a in 0.2f64..0.6,
        b in 0.2f64..0.6,
    ) {
        let op = op(41);
        let params = ModelParams::new(1.0, 1.0, p, q, a, b).unwrap();
        let c = IntegratorControls { record: RecordMode::Full, stop_floor: 1e-6, ..Default::default() };
        let (traj, r) = integrate(&vec![0.4; 41], &vec![0.4; 41], &params, &op, &c).unwrap();
        prop_assert_eq!(r.verdict, Verdict::Quench);
        let kind = classify_simultaneity(&r, DELTA_CLASS).unwrap().kind;
        if kind == Simultaneity::Simultaneous {
            prop_assert!(monitor_key_inequality(&traj, &params).unwrap().bounded);
        }
    }

    #[test]
    fn small_stationary_solutions_respect_bounds(lambda in 0.0005f64..0.004, mu in 0.0005f64..0.004) {
        let op = op(41);
        let params = ModelParams::new(lambda, mu, 1.0, 1.0, 1.0, 1.0).unwrap();
        let s = solve_stationary(&params, &op, &[1.0; 41], &[1.0; 41]).unwrap();
        prop_assert!(s.converged);
        prop_assert!(within_bounds(&s.w, &s.z, &params));
    }
}

#[test]
fn scans_do_not_depend_on_thread_count() {
    let op = op(41);
    let base = ModelParams::new(1.0, 1.0, 1.0, 1.0, 1.0, 1.0).unwrap();
    let axes = [ScanAxis::linspace(ParamName::P, 0.5, 2.5, 3), ScanAxis::linspace(ParamName::Lambda, 0.2, 1.0, 3)];
    let c = IntegratorControls { t_max: 5.0, ..Default::default() };
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| scan_to_csv(&parameter_scan(&axes, &base, &[0.6; 41], &[0.6; 41], &op, &c, DELTA_CLASS)))
    };
    let one = run(1);
    assert_eq!(one, run(4));
    assert_eq!(one, run(4));
    assert_eq!(one.lines().count(), 10);
}
