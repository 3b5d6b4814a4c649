mod common;

use linrecon::constraint::{
    compose_grouped, from_hierarchy, parse_constraints, reduce_direct, reduce_qr, reduce_rref,
    ComposeBlock, ConstraintSystem, HierarchySpec, ReconciliationPlan, Relation, VariablePartition,
};
use linrecon::covariance::w_ols;
use linrecon::linalg::Matrix;
use linrecon::reconcile::{Path, ReconcilerState};

fn m(rows: &[&[f64]]) -> Matrix {
    Matrix::from_fn(rows.len(), rows[0].len(), |i, j| rows[i][j])
}

fn assert_close(a: &Matrix, b: &Matrix, tol: f64) {
    assert_eq!(a.shape(), b.shape());
    let d = common::max_abs(&(a - b));
    assert!(d <= tol, "max difference {d:e}\n{a}\n{b}");
}

fn system(gamma: Matrix) -> ConstraintSystem {
    let n = gamma.ncols();
    ConstraintSystem::new(gamma, common::names(n)).unwrap()
}

/// Every null vector of Γ satisfies `C P x = 0` and vice versa.
fn same_subspace(plan: &ReconciliationPlan, cs: &ConstraintSystem) {
    assert!(plan.relative_residual(cs) < 1e-10);
    let s = plan.coherent_basis_original_order();
    assert!(common::max_abs(&(cs.gamma() * &s)) < 1e-10);
    assert_eq!(common::oracle_rank(cs.gamma()), plan.n_c());
}

#[test]
fn full_rank_example() {
    let cs = system(m(&[
        &[2.0, -4.0, -8.0, 6.0, 3.0],
        &[0.0, 1.0, 3.0, 2.0, 3.0],
        &[3.0, -2.0, 0.0, 0.0, 8.0],
    ]));
    let plan = reduce_rref(&cs, None).unwrap();
    assert_eq!(plan.partition().constrained_idx, vec![0, 1, 3]);
    assert_eq!(plan.partition().free_idx, vec![2, 4]);
    assert_close(
        plan.lin_comb(),
        &m(&[&[-2.0, -4.0], &[-3.0, -2.0], &[0.0, -0.5]]),
        1e-12,
    );
    let direct = reduce_direct(
        &cs,
        &VariablePartition::from_constrained(vec![0, 1, 3], 5).unwrap(),
    )
    .unwrap();
    assert_close(direct.lin_comb(), plan.lin_comb(), 1e-12);
    same_subspace(&reduce_qr(&cs, None).unwrap(), &cs);
}

#[test]
fn redundant_example() {
    let cs = system(m(&[
        &[1.0, -2.0, -1.0, 3.0],
        &[2.0, -4.0, -3.0, 2.0],
        &[4.0, -8.0, -6.0, 4.0],
    ]));
    let plan = reduce_rref(&cs, None).unwrap();
    assert_eq!(plan.partition().constrained_idx, vec![0, 2]);
    assert_eq!(plan.partition().free_idx, vec![1, 3]);
    // The rref block over the free columns is [[-2, 7], [0, 4]] = -A.
    assert_close(plan.lin_comb(), &m(&[&[2.0, -7.0], &[0.0, -4.0]]), 1e-12);
    same_subspace(&plan, &cs);
}

const SMALL: &str = "X = A1 + A2 + B\nX = C + D\nA = A1 + A2\n";

#[test]
fn small_hierarchy_from_dsl() {
    let cs = parse_constraints(SMALL).unwrap();
    assert_eq!(cs.var_names(), ["X", "A1", "A2", "B", "C", "D", "A"]);

    let cs = parse_constraints(&format!("vars: X, A, A1, A2, B, C, D\n{SMALL}")).unwrap();
    assert_close(
        cs.gamma(),
        &m(&[
            &[1.0, 0.0, -1.0, -1.0, -1.0, 0.0, 0.0],
            &[1.0, 0.0, 0.0, 0.0, 0.0, -1.0, -1.0],
            &[0.0, 1.0, -1.0, -1.0, 0.0, 0.0, 0.0],
        ]),
        0.0,
    );
}

#[test]
fn small_hierarchy_direct_partition() {
    let cs = parse_constraints(&format!("vars: X, A, A1, A2, B, C, D\n{SMALL}")).unwrap();
    // Constrained {X, A, A1}; free {A2, B, C, D}.
    let part = VariablePartition::from_constrained(vec![0, 1, 2], 7).unwrap();
    let plan = reduce_direct(&cs, &part).unwrap();
    assert_eq!(plan.free_names(), ["A2", "B", "C", "D"]);
    assert_close(
        plan.lin_comb(),
        &m(&[
            &[0.0, 0.0, 1.0, 1.0],
            &[0.0, -1.0, 1.0, 1.0],
            &[-1.0, -1.0, 1.0, 1.0],
        ]),
        1e-12,
    );
    let rref = reduce_rref(&cs, None).unwrap();
    same_subspace(&rref, &cs);
    same_subspace(&plan, &cs);
    // Same coherent subspace means identical reconciled forecasts.
    let mut rng = common::rng(1);
    let y = common::gaussian(&mut rng, 7, 3);
    let a = ReconcilerState::fit(&plan, &w_ols(7)).unwrap();
    let b = ReconcilerState::fit(&rref, &w_ols(7)).unwrap();
    let ya = plan
        .to_original_order(
            &a.apply(&plan.to_plan_order(&y).unwrap(), Path::Auto)
                .unwrap(),
        )
        .unwrap();
    let yb = rref
        .to_original_order(
            &b.apply(&rref.to_plan_order(&y).unwrap(), Path::Auto)
                .unwrap(),
        )
        .unwrap();
    assert_close(&ya, &yb, 1e-12);
}

#[test]
fn three_level_hierarchy() {
    let spec = HierarchySpec::new(vec![
        Relation::sum("a1", &["b1", "b2", "b3", "b4", "b5"]),
        Relation::sum("a2", &["b1", "b2"]),
        Relation::sum("a3", &["b3", "b4", "b5"]),
    ]);
    let cs = from_hierarchy(&spec).unwrap();
    let plan = reduce_rref(&cs, None).unwrap();
    assert_eq!(plan.constrained_names(), ["a1", "a2", "a3"]);
    assert_eq!(plan.free_names(), ["b1", "b2", "b3", "b4", "b5"]);
    assert_close(
        plan.lin_comb(),
        &m(&[
            &[1.0, 1.0, 1.0, 1.0, 1.0],
            &[1.0, 1.0, 0.0, 0.0, 0.0],
            &[0.0, 0.0, 1.0, 1.0, 1.0],
        ]),
        1e-12,
    );
}

#[test]
fn two_trees_sharing_a_top() {
    let tree = parse_constraints("T = L + R\n").unwrap();
    let blocks = [
        ComposeBlock::prefixed(tree.clone(), "g1_", &["T"]),
        ComposeBlock::prefixed(tree, "g2_", &["T"]),
    ];
    let cs = compose_grouped(&blocks, &["T".to_string()], &[]).unwrap();
    assert_eq!((cs.p(), cs.n()), (2, 5));
    let plan = reduce_rref(&cs, None).unwrap();
    assert_eq!((plan.n_c(), plan.n_u()), (2, 3));
}

#[test]
fn four_hierarchies_partition_and_lin_comb() {
    let cs = parse_constraints(common::FOUR_HIERARCHIES).unwrap();
    assert_eq!((cs.p(), cs.n()), (15, 35));
    let plan = reduce_rref(&cs, None).unwrap();
    assert_eq!(plan.constrained_names(), common::CONSTRAINED);
    assert_eq!(plan.free_names(), common::FREE);
    assert_close(plan.lin_comb(), &common::four_hierarchies_a(), 1e-12);
}

#[test]
fn four_hierarchies_with_redundant_relations() {
    let text = format!(
        "{}{}",
        common::FOUR_HIERARCHIES,
        common::FOUR_HIERARCHIES_REDUNDANT
    );
    let cs = parse_constraints(&text).unwrap();
    assert_eq!((cs.p(), cs.n()), (18, 35));
    let plan = reduce_rref(&cs, None).unwrap();
    assert_eq!(plan.constrained_names(), common::CONSTRAINED);
    assert_eq!(plan.free_names(), common::FREE);
    assert_close(plan.lin_comb(), &common::four_hierarchies_a(), 1e-12);

    let qr = reduce_qr(&cs, None).unwrap();
    assert_eq!((qr.n_c(), qr.n_u()), (15, 20));
    same_subspace(&qr, &cs);
}

#[test]
fn four_hierarchies_from_relations() {
    let mut spec = HierarchySpec::default();
    for line in common::FOUR_HIERARCHIES.lines().filter(|l| l.contains('=')) {
        let (parent, rhs) = line.split_once('=').unwrap();
        let children: Vec<&str> = rhs.split('+').map(str::trim).collect();
        spec.push(Relation::sum(parent.trim(), &children));
    }
    let cs = from_hierarchy(&spec).unwrap();
    assert_eq!(cs.n(), 35);
    let plan = reduce_rref(&cs, None).unwrap();
    assert_eq!((plan.n_c(), plan.n_u()), (15, 20));
    same_subspace(&plan, &cs);
}
