use std::f64::consts::PI;

use proptest::prelude::*;

use isslab_core::bounds::{audit_iss, beta, gamma1, gamma2, gamma_fp, iss_rhs, BoundParams};
use isslab_core::diagonal::{closed_form_solution, example3_model, DiagonalModel};
use isslab_core::fokker_planck::{
    build_model, project_p, random_density, sample_nodes, step, FPModel,
};
use isslab_core::mild_solver::{solve_mild, solve_mild_from, SolveStatus, SolverOptions};
use isslab_core::orlicz::{
    check_delta2, dual_norm_lower_bound, holder_pair, luxemburg_norm, Tail,
};
use isslab_core::signals::random_signal;
use isslab_core::{euclid_norm, Interval, Signal, YoungFunction};

fn iv(a: f64, b: f64) -> Interval {
    Interval::new(a, b).unwrap()
}

fn young_kinds() -> Vec<YoungFunction> {
    vec![
        YoungFunction::power(1.5).unwrap(),
        YoungFunction::power(3.0).unwrap(),
        YoungFunction::power_over_p(2.0).unwrap(),
        YoungFunction::LogLog,
        YoungFunction::Identity,
        YoungFunction::tabulated(vec![[1.0, 0.5], [2.0, 2.0], [4.0, 8.0]], Tail::Linear).unwrap(),
        YoungFunction::tabulated(vec![[1.0, 1.0], [3.0, 5.0]], Tail::Infinite).unwrap(),
    ]
}

fn fp_model() -> FPModel {
    let w = sample_nodes(64, |x| 0.5 * (2.0 * PI * x).cos());
    let a = sample_nodes(64, |x| (PI * x).cos());
    build_model(0.5, &w, &a, 64).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn luxemburg_is_homogeneous(seed in 0u64..10_000, c in 1e-3f64..1e3, kind in 0usize..7) {
        let phi = &young_kinds()[kind];
        let u = random_signal(seed, 2, iv(0.0, 1.5), 7, 2.0).unwrap();
        let a = luxemburg_norm(phi, &u, u.domain(), 1e-13).unwrap();
        let b = luxemburg_norm(phi, &u.scale(c), u.domain(), 1e-13).unwrap();
        prop_assert!((b - c * a).abs() <= 1e-10 * c * a, "{} vs {}", b, c * a);
    }

    #[test]
    fn luxemburg_is_monotone_in_interval(seed in 0u64..10_000, a in 0.0f64..1.0, b in 1.0f64..2.0, kind in 0usize..7) {
        let phi = &young_kinds()[kind];
        let u = random_signal(seed, 1, iv(0.0, 2.0), 9, 3.0).unwrap();
        let inner = luxemburg_norm(phi, &u, iv(a, b), 1e-12).unwrap();
        let outer = luxemburg_norm(phi, &u, u.domain(), 1e-12).unwrap();
        prop_assert!(inner <= outer + 1e-12);
    }

    #[test]
    fn holder_and_dual_sandwich(seed in 0u64..10_000, kind in 0usize..4) {
        let phi = &young_kinds()[kind];
        let u = random_signal(seed, 2, iv(0.0, 1.0), 6, 2.0).unwrap();
        let v = random_signal(seed + 1, 2, iv(0.0, 1.0), 5, 2.0).unwrap();
        prop_assert!(holder_pair(&u, &v, phi, u.domain()).unwrap().holds(1e-10));
        let lower = dual_norm_lower_bound(phi, &u, u.domain(), 32).unwrap();
        let norm = luxemburg_norm(phi, &u, u.domain(), 1e-12).unwrap();
        prop_assert!(lower <= 2.0 * norm * (1.0 + 1e-9));
    }

    #[test]
    fn power_satisfies_delta2_with_two_to_the_p(p in 1.0f64..6.0) {
        let r = check_delta2(&YoungFunction::power(p).unwrap(), 0.0, None).unwrap();
        prop_assert!(r.satisfied);
        prop_assert!((r.k - 2f64.powf(p)).abs() <= 1e-12 * 2f64.powf(p));
    }

    #[test]
    fn lp_norm_monotone_under_restriction(seed in 0u64..10_000, a in 0.0f64..1.0, p in 1.0f64..5.0) {
        let u = random_signal(seed, 3, iv(0.0, 2.0), 11, 1.0).unwrap();
        let part = u.restrict(iv(a, 2.0)).unwrap();
        prop_assert!(part.lp_norm(p, part.domain()).unwrap() <= u.lp_norm(p, u.domain()).unwrap() + 1e-14);
    }

    #[test]
    fn exp_weight_composes(seed in 0u64..10_000, a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let u = random_signal(seed, 2, iv(0.0, 2.0), 8, 1.0).unwrap();
        let two = u.exp_weight(a).unwrap().exp_weight(b).unwrap();
        let one = u.exp_weight(a + b).unwrap();
        for i in 0..u.cells() {
            for (x, y) in two.cell(i).iter().zip(one.cell(i)) {
                prop_assert!((x - y).abs() <= 1e-12 * y.abs().max(1e-300));
            }
        }
    }

    #[test]
    fn random_signal_is_reproducible(seed in any::<u64>()) {
        let a = random_signal(seed, 2, iv(0.0, 1.0), 5, 1.0).unwrap();
        let b = random_signal(seed, 2, iv(0.0, 1.0), 5, 1.0).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn comparison_function_contracts(s in 1e-3f64..5.0, ds in 1e-3f64..1.0, t in 0.0f64..5.0, dt in 1e-2f64..1.0) {
        let p = BoundParams::new(1.5, 0.8, 0.7, 1.0, 1.0).unwrap();
        prop_assert!(beta(&p, s + ds, t).unwrap() > beta(&p, s, t).unwrap());
        prop_assert!(beta(&p, s, t + dt).unwrap() < beta(&p, s, t).unwrap());
        prop_assert!(gamma1(&p, s + ds).unwrap() > gamma1(&p, s).unwrap());
        prop_assert!(gamma2(s + ds).unwrap() > gamma2(s).unwrap());
        prop_assert!(gamma_fp(2.0, s + ds).unwrap() > gamma_fp(2.0, s).unwrap());
    }

    #[test]
    fn input_terms_of_iss_rhs_grow_with_t(seed in 0u64..10_000, t in 0.0f64..1.5, dt in 0.0f64..0.5) {
        let p = BoundParams::new(1.0, 1.0, 1.0, 1.0, 1.0).unwrap();
        let u1 = random_signal(seed, 1, iv(0.0, 1.0), 4, 0.5).unwrap();
        let u2 = random_signal(seed + 7, 2, iv(0.0, 1.0), 4, 0.5).unwrap();
        let phi = YoungFunction::power_over_p(2.0).unwrap();
        let a = iss_rhs(&p, 0.0, &u1, &u2, &phi, &YoungFunction::Identity, t).unwrap();
        let b = iss_rhs(&p, 0.0, &u1, &u2, &phi, &YoungFunction::Identity, t + dt).unwrap();
        prop_assert!(b >= a - 1e-12);
    }

    #[test]
    fn fp_mass_and_projection(seed in 0u64..10_000, u in -3.0f64..3.0, dt in 1e-4f64..1e-1) {
        let m = fp_model();
        let rho = random_density(&m, seed, 5, 0.8).unwrap();
        let next = step(&m, &rho, u, dt).unwrap();
        prop_assert!((next.mass - rho.mass).abs() <= 1e-12);
        let b = m.density(m.b_alpha_h.apply(&rho.values)).unwrap();
        let pb = project_p(&m, &b);
        let scale = b.values.iter().fold(1.0f64, |s, v| s.max(v.abs()));
        for (x, y) in pb.values.iter().zip(&b.values) {
            prop_assert!((x - y).abs() <= 1e-10 * scale);
        }
    }
}

fn random_diagonal(seed: u64) -> (DiagonalModel, Vec<f64>) {
    let mut rng = isslab_core::rng::seeded(seed, 3);
    let n = 1 + (rng.next_u64() % 4) as usize;
    let lambda: Vec<f64> = (0..n).map(|_| rng.uniform(-5.0, -0.2)).collect();
    let mu: Vec<f64> = (0..n).map(|_| rng.symmetric(2.0)).collect();
    let x0: Vec<f64> = (0..n).map(|_| rng.symmetric(1.0)).collect();
    (DiagonalModel::new(lambda, mu).unwrap(), x0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn solver_matches_diagonal_closed_form(seed in 0u64..100_000) {
        let (m, x0) = random_diagonal(seed);
        let n = m.modes();
        let u = random_signal(seed, 1, iv(0.0, 1.0), 6, 1.5).unwrap();
        let z = Signal::zeros(n, iv(0.0, 1.0)).unwrap();
        let tol = 1e-10;
        let tr = solve_mild(&m, &x0, &u, &z, 1.0, tol).unwrap();
        for (t, x) in tr.grid.iter().zip(&tr.states).step_by(97) {
            let exact = closed_form_solution(&m, &x0, &u, *t).unwrap();
            let err = x.iter().zip(&exact).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            prop_assert!(err <= (10.0 * tol).max(1e-8 * (1.0 + euclid_norm(&exact))));
        }
    }

    #[test]
    fn restart_matches_single_solve(seed in 0u64..100_000, k in 1usize..15) {
        let (m, x0) = random_diagonal(seed);
        let n = m.modes();
        let u1 = random_signal(seed, 1, iv(0.0, 1.0), 5, 1.0).unwrap();
        let u2 = random_signal(seed + 1, n, iv(0.0, 1.0), 5, 1.0).unwrap();
        let opts = SolverOptions::default();
        let full = solve_mild_from(&m, 0.0, &x0, &u1, &u2, 1.0, &opts).unwrap();
        let a = k as f64 / 16.0;
        let i = full.index_of(a).unwrap();
        let rest = solve_mild_from(&m, a, &full.states[i], &u1, &u2, 1.0, &opts).unwrap();
        for (x, y) in rest.final_state().iter().zip(full.final_state()) {
            prop_assert!((x - y).abs() <= 5.0 * opts.tol);
        }
    }

    /// With `M = 1`, `ω = min|λ_n|`, `m = 1` and `C_B = max|b_n|` (the `L¹`
    /// admissibility constant of the shifted semigroup), moderate inputs
    /// pass the audit.
    #[test]
    fn certified_diagonal_trajectories_pass_audit(seed in 0u64..100_000) {
        let (m, x0) = random_diagonal(seed);
        let n = m.modes();
        let omega = m.lambda.iter().map(|l| l.abs()).fold(f64::INFINITY, f64::min);
        let cb = m.mu.iter().map(|v| v.abs()).fold(0.0, f64::max);
        let p = BoundParams::new(1.0, omega, 1.0, cb, cb).unwrap();
        let u1 = random_signal(seed, 1, iv(0.0, 1.0), 5, 0.5).unwrap();
        let u2 = random_signal(seed + 1, n, iv(0.0, 1.0), 5, 0.5).unwrap();
        let tr = solve_mild(&m, &x0, &u1, &u2, 1.0, 1e-10).unwrap();
        prop_assert_eq!(tr.status, SolveStatus::Complete);
        let thin = tr.thinned(128);
        let rep = audit_iss(&thin, &p, euclid_norm(&x0), &u1, &u2,
            &YoungFunction::Identity, &YoungFunction::Identity, 1e-6).unwrap();
        prop_assert!(rep.pass, "{:?}", rep);
    }

    #[test]
    fn closed_form_truncation_is_exact(seed in 0u64..100_000, n in 1usize..20, t in 0.0f64..2.0) {
        let u = random_signal(seed, 1, iv(0.0, 2.0), 8, 1.0).unwrap();
        let mut rng = isslab_core::rng::seeded(seed, 4);
        let x0: Vec<f64> = (0..n + 4).map(|_| rng.symmetric(1.0)).collect();
        let a = closed_form_solution(&example3_model(n).unwrap(), &x0[..n], &u, t).unwrap();
        let b = closed_form_solution(&example3_model(n + 4).unwrap(), &x0, &u, t).unwrap();
        prop_assert_eq!(&a[..], &b[..n]);
    }
}
