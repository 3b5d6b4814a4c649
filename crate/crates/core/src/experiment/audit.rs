use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::constraint::{io as cio, ReconciliationPlan};
use crate::data;
use crate::error::{Error, Result};
use crate::linalg;
use crate::reconcile::coherence_residual;

/// Relative coherence bound applied to every audited file.
pub const AUDIT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Serialize)]
pub struct AuditFile {
    pub path: PathBuf,
    /// `max |C ỹ|`.
    pub residual: f64,
    /// `AUDIT_TOL (1 + max |ỹ|)`.
    pub bound: f64,
    pub ok: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct AuditReport {
    pub files: Vec<AuditFile>,
}

impl AuditReport {
    pub fn passed(&self) -> bool {
        self.files.iter().all(|f| f.ok)
    }

    pub fn failures(&self) -> impl Iterator<Item = &AuditFile> {
        self.files.iter().filter(|f| !f.ok)
    }
}

/// Re-reads the reconciled forecast files under `dir/forecasts` and checks
/// them against the constraints of `plan` (by default `dir/plan.json`).
/// Files of the base method (`*_base.csv`) are not expected to be coherent
/// and are skipped.
pub fn audit_dir(dir: &Path, plan: Option<&ReconciliationPlan>) -> Result<AuditReport> {
    let loaded;
    let plan = match plan {
        Some(p) => p,
        None => {
            loaded = cio::read_plan_json(fs::File::open(dir.join("plan.json"))?)?;
            &loaded
        }
    };
    let mut paths: Vec<PathBuf> = fs::read_dir(dir.join("forecasts"))?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    paths.retain(|p| {
        let name = p.file_name().and_then(|s| s.to_str()).unwrap_or("");
        name.ends_with(".csv") && !name.ends_with("_base.csv")
    });
    paths.sort();
    if paths.is_empty() {
        return Err(Error::Invalid(format!(
            "no reconciled forecast files under {}",
            dir.join("forecasts").display()
        )));
    }
    let mut files = Vec::with_capacity(paths.len());
    for path in paths {
        let table = data::read_forecast_csv(fs::File::open(&path)?)?;
        let y = plan.rows_to_plan_order(&table.names, &table.values)?;
        let residual = coherence_residual(plan, &y);
        let bound = AUDIT_TOL * (1.0 + linalg::max_abs(&y));
        files.push(AuditFile {
            path,
            residual,
            bound,
            ok: residual <= bound,
        });
    }
    Ok(AuditReport { files })
}
