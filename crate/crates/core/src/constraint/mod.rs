//! Linear constraint systems and their reduction to a structural-like
//! representation.
//!
//! A [`ConstraintSystem`] holds the homogeneous constraints `Γ x = 0` over `n`
//! named variables. Reducing it (by [`reduce_rref`], [`reduce_qr`] or
//! [`reduce_direct`]) yields a [`ReconciliationPlan`]: a split of the
//! variables into constrained and free ones with `c = A u`, the
//! structural-like matrix `S = [A; I]` and the full-row-rank zero-constraint
//! matrix `C = [I  -A]`, both expressed in the permuted order
//! `y = P x = [c; u]`.

mod compose;
mod direct;
mod hierarchy;
pub mod io;
mod parse;
mod qr;
mod rref;

pub use compose::{compose_grouped, ComposeBlock};
pub use direct::reduce_direct;
pub use hierarchy::{from_hierarchy, HierarchySpec, Relation};
pub use parse::parse_constraints;
pub use qr::{pivoted_qr, reduce_qr, PivotedQr};
pub use rref::{reduce_rref, rref, Rref};

use std::collections::{HashMap, HashSet};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};

/// Default relative tolerance factor: `max(p, n) * eps`.
pub fn default_rel_tol(p: usize, n: usize) -> f64 {
    p.max(n) as f64 * f64::EPSILON
}

/// Homogeneous linear constraints `Γ x = 0`.
#[derive(Debug, Clone)]
pub struct ConstraintSystem {
    gamma: Matrix,
    var_names: Vec<String>,
    dropped_zero_rows: usize,
    warnings: Vec<String>,
}

impl ConstraintSystem {
    /// Builds a system, dropping all-zero rows of `gamma`.
    pub fn new(gamma: Matrix, var_names: Vec<String>) -> Result<Self> {
        let n = gamma.ncols();
        if var_names.len() != n {
            return Err(Error::Dimension(format!(
                "{} variable names for {} columns",
                var_names.len(),
                n
            )));
        }
        if n < 2 {
            return Err(Error::Invalid(
                "a constraint system needs at least two variables".into(),
            ));
        }
        let mut seen = HashSet::with_capacity(n);
        for name in &var_names {
            if !seen.insert(name.as_str()) {
                return Err(Error::DuplicateVariable(name.clone()));
            }
        }
        linalg::ensure_finite(&gamma, "constraint coefficients")?;

        let keep: Vec<usize> = (0..gamma.nrows())
            .filter(|&i| gamma.row(i).iter().any(|v| *v != 0.0))
            .collect();
        let dropped = gamma.nrows() - keep.len();
        if keep.is_empty() {
            return Err(Error::EmptySystem);
        }
        let mut warnings = Vec::new();
        if dropped > 0 {
            log::warn!("dropped {dropped} all-zero constraint row(s)");
            warnings.push(format!("dropped {dropped} all-zero constraint row(s)"));
        }
        let gamma = if dropped > 0 {
            linalg::select_rows(&gamma, &keep)
        } else {
            gamma
        };
        Ok(Self {
            gamma,
            var_names,
            dropped_zero_rows: dropped,
            warnings,
        })
    }

    pub fn gamma(&self) -> &Matrix {
        &self.gamma
    }

    pub fn var_names(&self) -> &[String] {
        &self.var_names
    }

    /// Number of constraint rows.
    pub fn p(&self) -> usize {
        self.gamma.nrows()
    }

    /// Number of variables.
    pub fn n(&self) -> usize {
        self.gamma.ncols()
    }

    pub fn dropped_zero_rows(&self) -> usize {
        self.dropped_zero_rows
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub(crate) fn push_warning(&mut self, w: String) {
        log::warn!("{w}");
        self.warnings.push(w);
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.var_names.iter().position(|v| v == name)
    }

    /// Appends rows to the system (rows are over the same variables).
    pub fn with_extra_rows(&self, rows: &Matrix) -> Result<Self> {
        if rows.ncols() != self.n() {
            return Err(Error::Dimension("extra rows have wrong width".into()));
        }
        let mut g = Matrix::zeros(self.p() + rows.nrows(), self.n());
        g.rows_mut(0, self.p()).copy_from(&self.gamma);
        g.rows_mut(self.p(), rows.nrows()).copy_from(rows);
        Self::new(g, self.var_names.clone())
    }
}

/// Split of the variable indices into constrained and free sets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct VariablePartition {
    pub constrained_idx: Vec<usize>,
    pub free_idx: Vec<usize>,
}

impl VariablePartition {
    pub fn new(constrained_idx: Vec<usize>, free_idx: Vec<usize>, n: usize) -> Result<Self> {
        let mut seen = vec![false; n];
        for &i in constrained_idx.iter().chain(free_idx.iter()) {
            if i >= n {
                return Err(Error::Invalid(format!("variable index {i} out of range")));
            }
            if seen[i] {
                return Err(Error::Invalid(format!("variable index {i} listed twice")));
            }
            seen[i] = true;
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::Invalid(
                "partition does not cover all variables".into(),
            ));
        }
        Ok(Self {
            constrained_idx,
            free_idx,
        })
    }

    /// Partition from a set of constrained indices; free = the rest, ascending.
    pub fn from_constrained(mut constrained_idx: Vec<usize>, n: usize) -> Result<Self> {
        constrained_idx.sort_unstable();
        let set: HashSet<usize> = constrained_idx.iter().copied().collect();
        let free_idx = (0..n).filter(|i| !set.contains(i)).collect();
        Self::new(constrained_idx, free_idx, n)
    }

    pub fn n_c(&self) -> usize {
        self.constrained_idx.len()
    }

    pub fn n_u(&self) -> usize {
        self.free_idx.len()
    }
}

/// Which reduction produced a plan.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ReductionMethod {
    Rref,
    Qr,
    Direct,
    Imported,
}

/// The structural-like representation derived from a constraint system.
///
/// All matrices are in plan order `y = P x`: the `n_c` constrained variables
/// first, followed by the `n_u` free ones.
#[derive(Debug, Clone)]
pub struct ReconciliationPlan {
    original_names: Vec<String>,
    permutation: Vec<usize>,
    lin_comb: Matrix,
    structural: Matrix,
    zero_constraints: Matrix,
    partition: VariablePartition,
    method: ReductionMethod,
}

impl ReconciliationPlan {
    /// Assembles a plan from a partition and the linear combination matrix
    /// `A` (rows follow `partition.constrained_idx`, columns `free_idx`).
    pub fn from_parts(
        original_names: Vec<String>,
        partition: VariablePartition,
        lin_comb: Matrix,
        method: ReductionMethod,
    ) -> Result<Self> {
        let n_c = partition.n_c();
        let n_u = partition.n_u();
        let n = n_c + n_u;
        if original_names.len() != n {
            return Err(Error::Dimension("plan names do not match partition".into()));
        }
        if lin_comb.nrows() != n_c || lin_comb.ncols() != n_u {
            return Err(Error::Dimension(format!(
                "A is {}x{}, expected {}x{}",
                lin_comb.nrows(),
                lin_comb.ncols(),
                n_c,
                n_u
            )));
        }
        linalg::ensure_finite(&lin_comb, "linear combination matrix")?;
        let mut structural = Matrix::zeros(n, n_u);
        structural.rows_mut(0, n_c).copy_from(&lin_comb);
        for j in 0..n_u {
            structural[(n_c + j, j)] = 1.0;
        }
        let mut zero_constraints = Matrix::zeros(n_c, n);
        for i in 0..n_c {
            zero_constraints[(i, i)] = 1.0;
        }
        zero_constraints
            .columns_mut(n_c, n_u)
            .copy_from(&(-&lin_comb));
        let permutation = partition
            .constrained_idx
            .iter()
            .chain(partition.free_idx.iter())
            .copied()
            .collect();
        Ok(Self {
            original_names,
            permutation,
            lin_comb,
            structural,
            zero_constraints,
            partition,
            method,
        })
    }

    /// Rebuilds a plan from exported names and `A`; plan order is taken as
    /// the original order.
    pub fn from_named(
        constrained: Vec<String>,
        free: Vec<String>,
        lin_comb: Matrix,
    ) -> Result<Self> {
        let n_c = constrained.len();
        let n_u = free.len();
        let names: Vec<String> = constrained.into_iter().chain(free).collect();
        let mut seen = HashSet::new();
        for nm in &names {
            if !seen.insert(nm.clone()) {
                return Err(Error::DuplicateVariable(nm.clone()));
            }
        }
        let partition =
            VariablePartition::new((0..n_c).collect(), (n_c..n_c + n_u).collect(), n_c + n_u)?;
        Self::from_parts(names, partition, lin_comb, ReductionMethod::Imported)
    }

    pub fn n(&self) -> usize {
        self.permutation.len()
    }

    pub fn n_c(&self) -> usize {
        self.partition.n_c()
    }

    pub fn n_u(&self) -> usize {
        self.partition.n_u()
    }

    /// `A` (n_c x n_u).
    pub fn lin_comb(&self) -> &Matrix {
        &self.lin_comb
    }

    /// `S = [A; I]` (n x n_u).
    pub fn structural(&self) -> &Matrix {
        &self.structural
    }

    /// `C = [I  -A]` (n_c x n).
    pub fn zero_constraints(&self) -> &Matrix {
        &self.zero_constraints
    }

    pub fn partition(&self) -> &VariablePartition {
        &self.partition
    }

    pub fn method(&self) -> ReductionMethod {
        self.method
    }

    /// `permutation[k]` is the original index of the k-th variable in plan order.
    pub fn permutation(&self) -> &[usize] {
        &self.permutation
    }

    pub fn is_identity_permutation(&self) -> bool {
        self.permutation.iter().enumerate().all(|(k, &i)| k == i)
    }

    /// Permutation matrix `P` with `y = P x`.
    pub fn permutation_matrix(&self) -> Matrix {
        let n = self.n();
        let mut p = Matrix::zeros(n, n);
        for (k, &i) in self.permutation.iter().enumerate() {
            p[(k, i)] = 1.0;
        }
        p
    }

    pub fn original_names(&self) -> &[String] {
        &self.original_names
    }

    /// Variable names in plan order.
    pub fn plan_names(&self) -> Vec<String> {
        self.permutation
            .iter()
            .map(|&i| self.original_names[i].clone())
            .collect()
    }

    pub fn constrained_names(&self) -> Vec<String> {
        self.partition
            .constrained_idx
            .iter()
            .map(|&i| self.original_names[i].clone())
            .collect()
    }

    pub fn free_names(&self) -> Vec<String> {
        self.partition
            .free_idx
            .iter()
            .map(|&i| self.original_names[i].clone())
            .collect()
    }

    /// Reorders the rows of `x` (original order) into plan order.
    pub fn to_plan_order(&self, x: &Matrix) -> Result<Matrix> {
        if x.nrows() != self.n() {
            return Err(Error::Dimension(format!(
                "{} rows, plan has {} variables",
                x.nrows(),
                self.n()
            )));
        }
        Ok(linalg::select_rows(x, &self.permutation))
    }

    /// Inverse of [`Self::to_plan_order`].
    pub fn to_original_order(&self, y: &Matrix) -> Result<Matrix> {
        if y.nrows() != self.n() {
            return Err(Error::Dimension(format!(
                "{} rows, plan has {} variables",
                y.nrows(),
                self.n()
            )));
        }
        let mut x = Matrix::zeros(y.nrows(), y.ncols());
        for (k, &i) in self.permutation.iter().enumerate() {
            x.row_mut(i).copy_from(&y.row(k));
        }
        Ok(x)
    }

    /// For each name in `names`, its position in plan order.
    pub fn align(&self, names: &[String]) -> Result<Vec<usize>> {
        if names.len() != self.n() {
            return Err(Error::Dimension(format!(
                "{} series supplied, plan has {}",
                names.len(),
                self.n()
            )));
        }
        let pos: HashMap<String, usize> = self
            .plan_names()
            .into_iter()
            .enumerate()
            .map(|(k, nm)| (nm, k))
            .collect();
        let mut seen = HashSet::new();
        names
            .iter()
            .map(|nm| {
                if !seen.insert(nm.as_str()) {
                    return Err(Error::DuplicateVariable(nm.clone()));
                }
                pos.get(nm)
                    .copied()
                    .ok_or_else(|| Error::UnknownVariable(nm.clone()))
            })
            .collect()
    }

    /// Rows of `data` labelled by `names`, reordered into plan order.
    pub fn rows_to_plan_order(&self, names: &[String], data: &Matrix) -> Result<Matrix> {
        let target = self.align(names)?;
        let mut out = Matrix::zeros(data.nrows(), data.ncols());
        for (r, &k) in target.iter().enumerate() {
            out.row_mut(k).copy_from(&data.row(r));
        }
        Ok(out)
    }

    /// Rows in plan order rearranged to follow `names`.
    pub fn rows_from_plan_order(&self, names: &[String], y: &Matrix) -> Result<Matrix> {
        let target = self.align(names)?;
        Ok(linalg::select_rows(y, &target))
    }

    /// `C P`: the zero constraints acting on the original variable order.
    pub fn constraints_original_order(&self) -> Matrix {
        let mut cp = Matrix::zeros(self.n_c(), self.n());
        for (k, &i) in self.permutation.iter().enumerate() {
            cp.column_mut(i).copy_from(&self.zero_constraints.column(k));
        }
        cp
    }

    /// `P' S`: a basis of the coherent subspace in original order.
    pub fn coherent_basis_original_order(&self) -> Matrix {
        self.to_original_order(&self.structural)
            .expect("structural matrix has n rows")
    }

    /// Max-abs of `Γ P' S`, scaled by `max|Γ| (1 + max|A|)`.
    pub fn relative_residual(&self, cs: &ConstraintSystem) -> f64 {
        let basis = self.coherent_basis_original_order();
        let r = cs.gamma() * basis;
        let scale = linalg::max_abs(cs.gamma()) * (1.0 + linalg::max_abs(&self.lin_comb));
        linalg::max_abs(&r) / scale.max(f64::MIN_POSITIVE)
    }

    /// Checks that the plan spans the null space of `cs`.
    pub(crate) fn verify_against(&self, cs: &ConstraintSystem) -> Result<()> {
        if self.n() != cs.n() {
            return Err(Error::Dimension(
                "plan and constraint system differ in n".into(),
            ));
        }
        let res = self.relative_residual(cs);
        let limit = 1e-8 * (cs.n() as f64).sqrt();
        if res.is_nan() || res > limit {
            return Err(Error::ToleranceCollapse(format!(
                "reduced constraints leave relative residual {res:.3e} (limit {limit:.1e}); \
                 pivots are indistinguishable from round-off, try a larger tolerance"
            )));
        }
        Ok(())
    }
}
