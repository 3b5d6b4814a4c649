//! Reading and writing constraint systems and plans.
//!
//! * DSL text (see [`super::parse_constraints`]).
//! * Dense `Γ` CSV: a header row of variable names, then one row of
//!   coefficients per constraint.
//! * Plan JSON: `{"constrained": [...], "free": [...], "A": [[...], ...]}`.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{parse_constraints, ConstraintSystem, ReconciliationPlan};
use crate::error::{Error, Result};
use crate::linalg::Matrix;

pub fn read_gamma_csv<R: Read>(reader: R) -> Result<ConstraintSystem> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let names: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let mut values = Vec::new();
    let mut rows = 0;
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() != names.len() {
            return Err(Error::parse(
                k + 2,
                format!("expected {} fields", names.len()),
            ));
        }
        for field in rec.iter() {
            let v: f64 = field
                .parse()
                .map_err(|_| Error::parse(k + 2, format!("bad coefficient `{field}`")))?;
            values.push(v);
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(Error::EmptySystem);
    }
    ConstraintSystem::new(Matrix::from_row_slice(rows, names.len(), &values), names)
}

pub fn write_gamma_csv<W: Write>(cs: &ConstraintSystem, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(cs.var_names())?;
    for row in cs.gamma().row_iter() {
        wtr.write_record(row.iter().map(|v| v.to_string()))?;
    }
    wtr.flush()?;
    Ok(())
}

/// Loads a constraint system from a `.csv` (dense `Γ`) or any other file
/// (DSL text).
pub fn load_constraints(path: &Path) -> Result<ConstraintSystem> {
    let is_csv = path
        .extension()
        .map(|e| e.eq_ignore_ascii_case("csv"))
        .unwrap_or(false);
    if is_csv {
        read_gamma_csv(fs::File::open(path)?)
    } else {
        parse_constraints(&fs::read_to_string(path)?)
    }
}

/// Serialized form of a plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanExport {
    pub constrained: Vec<String>,
    pub free: Vec<String>,
    #[serde(rename = "A")]
    pub lin_comb: Vec<Vec<f64>>,
}

impl From<&ReconciliationPlan> for PlanExport {
    fn from(plan: &ReconciliationPlan) -> Self {
        let a = plan.lin_comb();
        Self {
            constrained: plan.constrained_names(),
            free: plan.free_names(),
            lin_comb: a.row_iter().map(|r| r.iter().copied().collect()).collect(),
        }
    }
}

impl PlanExport {
    pub fn into_plan(self) -> Result<ReconciliationPlan> {
        let n_c = self.constrained.len();
        let n_u = self.free.len();
        if self.lin_comb.len() != n_c || self.lin_comb.iter().any(|r| r.len() != n_u) {
            return Err(Error::Dimension(format!(
                "plan `A` must be {n_c}x{n_u} to match the name lists"
            )));
        }
        let flat: Vec<f64> = self.lin_comb.into_iter().flatten().collect();
        let a = Matrix::from_row_slice(n_c, n_u, &flat);
        ReconciliationPlan::from_named(self.constrained, self.free, a)
    }
}

pub fn write_plan_json<W: Write>(plan: &ReconciliationPlan, writer: W) -> Result<()> {
    serde_json::to_writer_pretty(writer, &PlanExport::from(plan))?;
    Ok(())
}

pub fn read_plan_json<R: Read>(reader: R) -> Result<ReconciliationPlan> {
    let export: PlanExport = serde_json::from_reader(reader)?;
    export.into_plan()
}
