use super::{ConstraintSystem, ReconciliationPlan, ReductionMethod, VariablePartition};
use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};

/// Builds the plan for a caller-chosen partition when `Γ` has exactly
/// `n_c` non-redundant rows: `A = -Γ_c^{-1} Γ_u`, solved through an LU
/// factorization.
pub fn reduce_direct(
    cs: &ConstraintSystem,
    partition: &VariablePartition,
) -> Result<ReconciliationPlan> {
    let n = cs.n();
    let partition = VariablePartition::new(
        partition.constrained_idx.clone(),
        partition.free_idx.clone(),
        n,
    )?;
    if cs.p() != partition.n_c() {
        return Err(Error::Dimension(format!(
            "direct reduction needs one row per constrained variable ({} rows, {} constrained)",
            cs.p(),
            partition.n_c()
        )));
    }
    let gamma_c = linalg::select_columns(cs.gamma(), &partition.constrained_idx);
    let gamma_u = linalg::select_columns(cs.gamma(), &partition.free_idx);

    let singular = || {
        Error::Singular(
            "coefficients of the chosen constrained variables are singular; \
             pick another partition or use reduce_rref / reduce_qr"
                .into(),
        )
    };
    let lu = gamma_c.clone().lu();
    let u = lu.u();
    let umax = u.diagonal().amax();
    let umin = u
        .diagonal()
        .iter()
        .fold(f64::INFINITY, |m, v| m.min(v.abs()));
    if umax == 0.0 || umin <= umax * cs.n() as f64 * f64::EPSILON {
        return Err(singular());
    }
    let sol = lu.solve(&gamma_u).ok_or_else(singular)?;
    let a: Matrix = -sol;
    let plan = ReconciliationPlan::from_parts(
        cs.var_names().to_vec(),
        partition,
        a,
        ReductionMethod::Direct,
    )?;
    plan.verify_against(cs)?;
    Ok(plan)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraint::parse_constraints;

    #[test]
    fn two_variable_total() {
        let cs = parse_constraints("a = b").unwrap();
        let part = VariablePartition::from_constrained(vec![0], 2).unwrap();
        let plan = reduce_direct(&cs, &part).unwrap();
        assert!((plan.lin_comb()[(0, 0)] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn singular_partition_is_rejected() {
        // x0 and x1 appear only as x0 - x1, so {x0, x1} cannot both be constrained.
        let cs = parse_constraints("x0 - x1 + x2 = 0\n2 x0 - 2 x1 + x3 = 0").unwrap();
        let part = VariablePartition::from_constrained(vec![0, 1], 4).unwrap();
        assert!(matches!(reduce_direct(&cs, &part), Err(Error::Singular(_))));
    }

    #[test]
    fn row_count_must_match() {
        let cs = parse_constraints("a = b\na = c").unwrap();
        let part = VariablePartition::from_constrained(vec![0], 3).unwrap();
        assert!(matches!(
            reduce_direct(&cs, &part),
            Err(Error::Dimension(_))
        ));
    }
}
