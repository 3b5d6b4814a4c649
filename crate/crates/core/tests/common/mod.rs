#![allow(dead_code)]

use linrecon::constraint::{ConstraintSystem, ReconciliationPlan};
use linrecon::covariance::ResidualMatrix;
use linrecon::linalg::Matrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn names(n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("v{i}")).collect()
}

pub fn max_abs(m: &Matrix) -> f64 {
    m.iter().fold(0.0_f64, |a, v| a.max(v.abs()))
}

pub fn gaussian(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Matrix {
    Matrix::from_fn(r, c, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// Random `Γ = L R` with small integer factors: `n ≤ n_max`, `p ≤ p_max`
/// rows, rank usually `min(p, r)` for a random inner dimension `r`, so
/// about half the systems carry redundant rows.
pub fn random_system(rng: &mut ChaCha8Rng, n_max: usize, p_max: usize) -> ConstraintSystem {
    loop {
        let n = rng.random_range(3..=n_max);
        let p = rng.random_range(1..=p_max.min(n - 1));
        let r = if rng.random_bool(0.5) {
            p
        } else {
            rng.random_range(1..=p)
        };
        let left = Matrix::from_fn(p, r, |_, _| rng.random_range(-2..=2) as f64);
        let right = Matrix::from_fn(r, n, |_, _| {
            if rng.random_bool(0.4) {
                0.0
            } else {
                rng.random_range(-3..=3) as f64
            }
        });
        let gamma = left * right;
        if max_abs(&gamma) == 0.0 || oracle_rank(&gamma) >= n {
            continue;
        }
        if let Ok(cs) = ConstraintSystem::new(gamma, names(n)) {
            return cs;
        }
    }
}

/// One-sided Jacobi on the columns of `Γ'`: returns the orthonormal basis
/// of the row space of `Γ` and the singular values, largest first. nalgebra's
/// SVD can lose accuracy on strongly rank-deficient wide matrices, so the
/// oracles do not use it.
pub fn row_space(gamma: &Matrix) -> (Matrix, Vec<f64>) {
    let mut x = gamma.transpose();
    let cols = x.ncols();
    for _ in 0..100 {
        let mut rotated = false;
        for i in 0..cols {
            for j in (i + 1)..cols {
                let alpha = x.column(i).norm_squared();
                let beta = x.column(j).norm_squared();
                let gamma = x.column(i).dot(&x.column(j));
                if gamma == 0.0 || gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for k in 0..x.nrows() {
                    let (a, b) = (x[(k, i)], x[(k, j)]);
                    x[(k, i)] = c * a - s * b;
                    x[(k, j)] = s * a + c * b;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut order: Vec<(usize, f64)> = (0..cols).map(|j| (j, x.column(j).norm())).collect();
    order.sort_by(|a, b| b.1.total_cmp(&a.1));
    let top = order.first().map_or(0.0, |o| o.1);
    let tol = top * 1e-10 * gamma.nrows().max(gamma.ncols()) as f64;
    let kept: Vec<(usize, f64)> = order.iter().copied().filter(|o| o.1 > tol).collect();
    let basis = Matrix::from_fn(x.nrows(), kept.len(), |i, k| x[(i, kept[k].0)] / kept[k].1);
    (basis, order.into_iter().map(|o| o.1).collect())
}

/// Numerical rank from singular values.
pub fn oracle_rank(m: &Matrix) -> usize {
    row_space(m).0.ncols()
}

/// Random SPD matrix `B B'/n + I/2`.
pub fn random_spd(rng: &mut ChaCha8Rng, n: usize) -> Matrix {
    let b = gaussian(rng, n, n);
    let mut w = &b * b.transpose() / n as f64;
    for i in 0..n {
        w[(i, i)] += 0.5;
    }
    w
}

/// Constrained weighted least squares from the Lagrangian conditions,
/// `ỹ = ŷ − W V (V' W V)⁻¹ V' ŷ`, where the columns of `V` are an orthonormal
/// basis of the row space of `Γ`. Using `V'` in place of `Γ` leaves the
/// constraint set unchanged, absorbs redundant rows and keeps the solve well
/// conditioned. Original variable order.
pub fn lagrangian_oracle(gamma: &Matrix, w: &Matrix, y: &Matrix) -> Matrix {
    let (basis, _) = row_space(gamma);
    let wv = w * &basis;
    let inner = basis.transpose() * &wv;
    let lambda = inner
        .cholesky()
        .expect("V'WV is SPD")
        .solve(&(basis.transpose() * y));
    y - wv * lambda
}

/// `P W P'` for a matrix given in original order.
pub fn to_plan_cov(plan: &ReconciliationPlan, w: &Matrix) -> Matrix {
    let perm = plan.permutation();
    Matrix::from_fn(w.nrows(), w.ncols(), |a, b| w[(perm[a], perm[b])])
}

pub fn residuals_in_plan_order(plan: &ReconciliationPlan, e: &Matrix) -> ResidualMatrix {
    ResidualMatrix::new(plan.to_plan_order(e).unwrap()).unwrap()
}

/// Four hierarchies sharing a top, with the variable order used for the
/// reference partition.
pub const FOUR_HIERARCHIES: &str = "\
vars: Z, X, Y, A, B, C, D, E, F, G, H, I, AA, AB, CA, CB, CC, DA, DB, HA, HB, IA, IB, IC, \
AAA, AAB, DAA, DAB, DBA, DBB, HAA, HAB, HAC, IAA, IAB
Z = X + Y
X = A + B
X = C + D
Y = E + F + G
Y = H + I
A = AB + AAA + AAB
AA = AAA + AAB
C = CA + CB + CC
D = DAA + DAB + DBA + DBB
DA = DAA + DAB
DB = DBA + DBB
H = HA + HB
HA = HAA + HAB + HAC
I = IB + IC + IAA + IAB
IA = IAA + IAB
";

pub const FOUR_HIERARCHIES_REDUNDANT: &str = "\
A = AA + AB
D = DA + DB
I = IA + IB + IC
";

pub const CONSTRAINED: [&str; 15] = [
    "Z", "X", "Y", "A", "B", "C", "D", "E", "H", "I", "AA", "DA", "DB", "HA", "IA",
];
pub const FREE: [&str; 20] = [
    "F", "G", "AB", "CA", "CB", "CC", "HB", "IB", "IC", "AAA", "AAB", "DAA", "DAB", "DBA", "DBB",
    "HAA", "HAB", "HAC", "IAA", "IAB",
];

pub fn four_hierarchies_a() -> Matrix {
    let rows: [[f64; 20]; 15] = [
        [
            0., 0., 0., 1., 1., 1., 1., 1., 1., 0., 0., 1., 1., 1., 1., 1., 1., 1., 1., 1.,
        ],
        [
            0., 0., 0., 1., 1., 1., 0., 0., 0., 0., 0., 1., 1., 1., 1., 0., 0., 0., 0., 0.,
        ],
        [
            0., 0., 0., 0., 0., 0., 1., 1., 1., 0., 0., 0., 0., 0., 0., 1., 1., 1., 1., 1.,
        ],
        [
            0., 0., 1., 0., 0., 0., 0., 0., 0., 1., 1., 0., 0., 0., 0., 0., 0., 0., 0., 0.,
        ],
        [
            0., 0., -1., 1., 1., 1., 0., 0., 0., -1., -1., 1., 1., 1., 1., 0., 0., 0., 0., 0.,
        ],
        [
            0., 0., 0., 1., 1., 1., 0., 0., 0., 0., 0., 0., 0., 0., 0., 0., 0., 0., 0., 0.,
        ],
        [
            0., 0., 0., 0., 0., 0., 0., 0., 0., 0., 0., 1., 1., 1., 1., 0., 0., 0., 0., 0.,
        ],
        [
            -1., -1., 0., 0., 0., 0., 1., 1., 1., 0., 0., 0., 0., 0., 0., 1., 1., 1., 1., 1.,
        ],
        [
            0., 0., 0., 0., 0., 0., 1., 0., 0., 0., 0., 0., 0., 0., 0., 1., 1., 1., 0., 0.,
        ],
        [
            0., 0., 0., 0., 0., 0., 0., 1., 1., 0., 0., 0., 0., 0., 0., 0., 0., 0., 1., 1.,
        ],
        [
            0., 0., 0., 0., 0., 0., 0., 0., 0., 1., 1., 0., 0., 0., 0., 0., 0., 0., 0., 0.,
        ],
        [
            0., 0., 0., 0., 0., 0., 0., 0., 0., 0., 0., 1., 1., 0., 0., 0., 0., 0., 0., 0.,
        ],
        [
            0., 0., 0., 0., 0., 0., 0., 0., 0., 0., 0., 0., 0., 1., 1., 0., 0., 0., 0., 0.,
        ],
        [
            0., 0., 0., 0., 0., 0., 0., 0., 0., 0., 0., 0., 0., 0., 0., 1., 1., 1., 0., 0.,
        ],
        [
            0., 0., 0., 0., 0., 0., 0., 0., 0., 0., 0., 0., 0., 0., 0., 0., 0., 0., 1., 1.,
        ],
    ];
    Matrix::from_fn(15, 20, |i, j| rows[i][j])
}
