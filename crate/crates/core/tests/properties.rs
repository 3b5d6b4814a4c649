mod common;

use linrecon::constraint::{reduce_qr, reduce_rref, ConstraintSystem};
use linrecon::covariance::{
    estimate, shrinkage_intensity, w_wls, CovKind, CovarianceSpec, WMatrix,
};
use linrecon::linalg::Matrix;
use linrecon::probabilistic::{
    bootstrap_sample, fit_base, gaussian_reconcile, reconcile_ensemble, BaseKind, GaussianForecast,
};
use linrecon::reconcile::{coherence_residual, Path, ReconcilerState};
use linrecon::scoring::{crps, energy_score, EsPairs, CRPS_EXACT_MAX};
use proptest::prelude::*;
use proptest::test_runner::RngSeed;
use rand::Rng;

fn state_for(cs: &ConstraintSystem, seed: u64) -> (ReconcilerState, Matrix) {
    let mut rng = common::rng(seed ^ 0x5eed);
    let plan = reduce_rref(cs, None).unwrap();
    let w = common::random_spd(&mut rng, cs.n());
    let w = WMatrix::from_matrix(common::to_plan_cov(&plan, &w), CovKind::Sam).unwrap();
    (ReconcilerState::fit(&plan, &w).unwrap(), w.w)
}

proptest! {
    #![proptest_config(ProptestConfig { rng_seed: RngSeed::Fixed(0x1e57), ..ProptestConfig::with_cases(64) })]

    #[test]
    fn reconciliation_invariants(seed in any::<u64>()) {
        let mut rng = common::rng(seed);
        let cs = common::random_system(&mut rng, 30, 20);
        let (state, _) = state_for(&cs, seed);
        let plan = state.plan();
        let n = plan.n();
        let y1 = common::gaussian(&mut rng, n, 2) * 10.0;
        let y2 = common::gaussian(&mut rng, n, 2) * 10.0;
        let scale = 1.0 + common::max_abs(&y1);

        let r1 = state.apply(&y1, Path::Auto).unwrap();
        prop_assert!(coherence_residual(plan, &r1) <= 1e-9 * scale);
        let again = state.apply(&r1, Path::Auto).unwrap();
        prop_assert!(common::max_abs(&(&again - &r1)) <= 1e-10 * scale);

        let (a, b) = (rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
        let r2 = state.apply(&y2, Path::Auto).unwrap();
        let mixed = state.apply(&(&y1 * a + &y2 * b), Path::Auto).unwrap();
        let scale2 = 1.0 + common::max_abs(&y1).max(common::max_abs(&y2)) * 6.0;
        prop_assert!(common::max_abs(&(mixed - (r1 * a + r2 * b))) <= 1e-10 * scale2);

        let s = plan.structural();
        prop_assert!(common::max_abs(&(state.m() * s - s)) <= 1e-10 * (1.0 + common::max_abs(s)));
        prop_assert!(common::max_abs(&(plan.zero_constraints() * state.m())) <= 1e-10 * (1.0 + common::max_abs(s)));
        prop_assert!(common::max_abs(&(state.m() - state.sg())) <= 1e-10 * (1.0 + common::max_abs(s)));
    }

    #[test]
    fn redundant_rows_leave_the_partition_alone(seed in any::<u64>()) {
        let mut rng = common::rng(seed);
        let cs = common::random_system(&mut rng, 25, 12);
        let p = cs.p();
        let mix = Matrix::from_fn(3, p, |_, _| rng.random_range(-2..=2) as f64);
        let extra = &mix * cs.gamma();
        let bigger = ConstraintSystem::new(
            Matrix::from_fn(p + 3, cs.n(), |i, j| if i < p { cs.gamma()[(i, j)] } else { extra[(i - p, j)] }),
            cs.var_names().to_vec(),
        ).unwrap();
        let a = reduce_rref(&cs, None).unwrap();
        let b = reduce_rref(&bigger, None).unwrap();
        prop_assert_eq!(&a.partition().constrained_idx, &b.partition().constrained_idx);
        prop_assert!(common::max_abs(&(a.lin_comb() - b.lin_comb())) < 1e-9 * (1.0 + common::max_abs(a.lin_comb())));
        let q = reduce_qr(&bigger, None).unwrap();
        prop_assert_eq!(q.n_c(), a.n_c());
    }

    #[test]
    fn plan_order_round_trip(seed in any::<u64>()) {
        let mut rng = common::rng(seed);
        let cs = common::random_system(&mut rng, 20, 10);
        let plan = reduce_qr(&cs, None).unwrap();
        let x = common::gaussian(&mut rng, cs.n(), 3);
        let back = plan.to_original_order(&plan.to_plan_order(&x).unwrap()).unwrap();
        prop_assert_eq!(back, x);
    }

    #[test]
    fn crps_is_nonnegative_and_translation_invariant(
        xs in prop::collection::vec(-100.0f64..100.0, 1..60),
        z in -100.0f64..100.0,
        c in -50.0f64..50.0,
    ) {
        let a = crps(&xs, z).unwrap();
        prop_assert!(a >= -1e-12);
        let shifted: Vec<f64> = xs.iter().map(|x| x + c).collect();
        let b = crps(&shifted, z + c).unwrap();
        prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()));
    }

    #[test]
    fn energy_score_is_translation_invariant(
        seed in any::<u64>(),
        c in -50.0f64..50.0,
    ) {
        let mut rng = common::rng(seed);
        let l = rng.random_range(2..30);
        let d = rng.random_range(1..6);
        let xs: Vec<Vec<f64>> = (0..l).map(|_| (0..d).map(|_| rng.random_range(-5.0..5.0)).collect()).collect();
        let z: Vec<f64> = (0..d).map(|_| rng.random_range(-5.0..5.0)).collect();
        for pairs in [EsPairs::Consecutive, EsPairs::All] {
            let a = energy_score(&xs, &z, pairs).unwrap();
            let xs2: Vec<Vec<f64>> = xs.iter().map(|x| x.iter().map(|v| v + c).collect()).collect();
            let z2: Vec<f64> = z.iter().map(|v| v + c).collect();
            let b = energy_score(&xs2, &z2, pairs).unwrap();
            prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()));
        }
    }
}

#[test]
fn rref_qr_and_lagrangian_agree() {
    let mut rng = common::rng(2024);
    for _ in 0..40 {
        let cs = common::random_system(&mut rng, 40, 25);
        let n = cs.n();
        let w = common::random_spd(&mut rng, n);
        let y = common::gaussian(&mut rng, n, 2) * 5.0;
        let expect = common::lagrangian_oracle(cs.gamma(), &w, &y);
        for plan in [
            reduce_rref(&cs, None).unwrap(),
            reduce_qr(&cs, None).unwrap(),
        ] {
            let wp = WMatrix::from_matrix(common::to_plan_cov(&plan, &w), CovKind::Sam).unwrap();
            let state = ReconcilerState::fit(&plan, &wp).unwrap();
            let got = plan
                .to_original_order(
                    &state
                        .apply(&plan.to_plan_order(&y).unwrap(), Path::Auto)
                        .unwrap(),
                )
                .unwrap();
            let err = common::max_abs(&(got - &expect));
            assert!(
                err <= 1e-8 * (1.0 + common::max_abs(&y)),
                "{err:e} for {:?}",
                plan.method()
            );
        }
    }
}

#[test]
fn crps_sorted_formula_matches_double_sum() {
    let mut rng = common::rng(9);
    let xs: Vec<f64> = (0..CRPS_EXACT_MAX + 500)
        .map(|_| rng.random_range(-3.0..3.0))
        .collect();
    let z = 0.3;
    let l = xs.len() as f64;
    let first: f64 = xs.iter().map(|x| (x - z).abs()).sum::<f64>() / l;
    let mut pair = 0.0;
    for a in &xs {
        for b in &xs {
            pair += (a - b).abs();
        }
    }
    let expect = first - pair / (2.0 * l * l);
    assert!((crps(&xs, z).unwrap() - expect).abs() < 1e-10);
}

#[test]
fn shrinkage_intensity_stays_in_unit_interval() {
    let mut rng = common::rng(4);
    for _ in 0..50 {
        let n = rng.random_range(2..12);
        let t = rng.random_range(3..40);
        let res =
            linrecon::covariance::ResidualMatrix::new(common::gaussian(&mut rng, n, t)).unwrap();
        let lambda = shrinkage_intensity(&res).unwrap();
        assert!((0.0..=1.0).contains(&lambda));
        let shr = estimate(&CovarianceSpec::new(CovKind::Shr), &res).unwrap();
        let wls = w_wls(&res).unwrap();
        for i in 0..n {
            assert_eq!(shr.w[(i, i)], wls.w[(i, i)]);
        }
    }
}

#[test]
fn gaussian_reconciliation_of_coherent_input_is_unchanged() {
    let mut rng = common::rng(5);
    let cs = common::random_system(&mut rng, 15, 6);
    let (state, _) = state_for(&cs, 5);
    let plan = state.plan();
    let s = plan.structural();
    let u = common::gaussian(&mut rng, plan.n_u(), 1);
    let b = common::gaussian(&mut rng, plan.n_u(), plan.n_u());
    let v = &b * b.transpose();
    let g = GaussianForecast::new(s * &u, s * &v * s.transpose(), 1).unwrap();
    let r = gaussian_reconcile(&state, &g).unwrap();
    assert!(common::max_abs(&(&r.mean - &g.mean)) < 1e-10 * (1.0 + common::max_abs(&g.mean)));
    assert!(common::max_abs(&(&r.cov - &g.cov)) < 1e-10 * (1.0 + common::max_abs(&g.cov)));
}

#[test]
fn bootstrap_is_reproducible_and_reconciled_members_are_coherent() {
    let data = linrecon::synth::synthesize(linrecon::synth::Structure::TwoHierGdp, 40, 11).unwrap();
    let cs = linrecon::synth::structure(linrecon::synth::Structure::TwoHierGdp)
        .unwrap()
        .system;
    let plan = reduce_qr(&cs, None).unwrap();
    let values = plan.rows_to_plan_order(&data.names, &data.values).unwrap();
    let model = fit_base(BaseKind::Ar1Drift, &values, &plan.plan_names()).unwrap();
    let a = bootstrap_sample(&model, 64, 3, 17).unwrap();
    let b = bootstrap_sample(&model, 64, 3, 17).unwrap();
    assert_eq!(a.samples, b.samples);
    let c = bootstrap_sample(&model, 64, 3, 18).unwrap();
    assert_ne!(a.samples, c.samples);

    let w = estimate(&CovarianceSpec::new(CovKind::Shr), &model.residuals).unwrap();
    let state = ReconcilerState::fit(&plan, &w).unwrap();
    let r = reconcile_ensemble(&state, &a).unwrap();
    for s in &r.samples {
        assert!(coherence_residual(&plan, s) <= 1e-9 * (1.0 + common::max_abs(s)));
    }
}
