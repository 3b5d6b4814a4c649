//! Bundled constraint structures and a generator of coherent synthetic data
//! for them.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::constraint::{
    compose_grouped, from_hierarchy, parse_constraints, reduce_qr, ComposeBlock, ConstraintSystem,
    HierarchySpec, Relation,
};
use crate::data::SeriesData;
use crate::error::{Error, Result};
use crate::linalg::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Structure {
    /// Two hierarchies sharing their top: `X = A1 + A2 + B`, `X = C + D`,
    /// `A = A1 + A2`.
    TwoHierGdp,
    /// Income and expenditure sides of GDP: 95 series, 33 constraints.
    Aus95,
    /// Euro-area expenditure/income/output accounts for 19 countries and
    /// their aggregate.
    Ea19,
}

impl Structure {
    pub fn as_str(self) -> &'static str {
        match self {
            Structure::TwoHierGdp => "two_hier_gdp",
            Structure::Aus95 => "aus95",
            Structure::Ea19 => "ea19",
        }
    }
}

impl fmt::Display for Structure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Structure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "two_hier_gdp" => Ok(Structure::TwoHierGdp),
            "aus95" => Ok(Structure::Aus95),
            "ea19" => Ok(Structure::Ea19),
            other => Err(Error::Invalid(format!(
                "unknown structure `{other}` (expected two_hier_gdp, aus95 or ea19)"
            ))),
        }
    }
}

/// A constraint system with named panels of series for reporting.
#[derive(Debug, Clone)]
pub struct StructureDef {
    pub system: ConstraintSystem,
    pub groups: Vec<(String, Vec<String>)>,
}

pub fn structure(tag: Structure) -> Result<StructureDef> {
    match tag {
        Structure::TwoHierGdp => two_hier_gdp(),
        Structure::Aus95 => aus95(),
        Structure::Ea19 => ea19(),
    }
}

fn all_group(cs: &ConstraintSystem) -> (String, Vec<String>) {
    ("All".to_string(), cs.var_names().to_vec())
}

fn two_hier_gdp() -> Result<StructureDef> {
    let system = parse_constraints(
        "vars: X, A, A1, A2, B, C, D\nX = A1 + A2 + B\nX = C + D\nA = A1 + A2\n",
    )?;
    let groups = vec![all_group(&system)];
    Ok(StructureDef { system, groups })
}

fn income_side() -> HierarchySpec {
    HierarchySpec::new(vec![
        Relation::sum("GDP", &["Tfi", "Tsi", "Sdi"]),
        Relation::sum("Tfi", &["TfiCoe", "TfiGos", "TfiGmi"]),
        Relation::sum("TfiCoe", &["TfiCoeWns", "TfiCoeEsc"]),
        Relation::sum("TfiGos", &["TfiGosCop", "TfiGosGvt", "TfiGosDwl"]),
        Relation::sum("TfiGosCop", &["TfiGosCopNfn", "TfiGosCopFin"]),
        Relation::sum("TfiGosCopNfn", &["TfiGosCopNfnPvt", "TfiGosCopNfnPub"]),
    ])
}

/// Expenditure-side tree with 27 aggregates (GDP included) over 53 bottom
/// series, generic names.
fn expenditure_side() -> HierarchySpec {
    let u = |k: usize| format!("ExpU{k:02}");
    let mut leaf = 0;
    let mut leaves = |k: usize| -> Vec<String> {
        (0..k)
            .map(|_| {
                leaf += 1;
                format!("ExpB{leaf:02}")
            })
            .collect()
    };
    let mut spec = HierarchySpec::default();
    spec.push(Relation::sum("GDP", &(1..=4).map(u).collect::<Vec<_>>()));
    for k in 1..=4 {
        let kids: Vec<String> = (0..3).map(|j| u(5 + 3 * (k - 1) + j)).collect();
        spec.push(Relation::sum(&u(k), &kids));
    }
    for k in 5..=14 {
        let mut kids = vec![u(k + 12)];
        kids.extend(leaves(2));
        spec.push(Relation::sum(&u(k), &kids));
    }
    for k in 15..=16 {
        spec.push(Relation::sum(&u(k), &leaves(3)));
    }
    for k in 17..=26 {
        let m = if k <= 23 { 3 } else { 2 };
        spec.push(Relation::sum(&u(k), &leaves(m)));
    }
    spec
}

fn aus95() -> Result<StructureDef> {
    let income = from_hierarchy(&income_side())?;
    let expenditure = from_hierarchy(&expenditure_side())?;
    let groups = vec![
        ("Income".to_string(), income.var_names().to_vec()),
        ("Expenditure".to_string(), expenditure.var_names().to_vec()),
    ];
    let system = compose_grouped(
        &[ComposeBlock::new(income), ComposeBlock::new(expenditure)],
        &["GDP".to_string()],
        &[],
    )?;
    let mut groups = groups;
    groups.push(all_group(&system));
    Ok(StructureDef { system, groups })
}

/// Country codes of the euro-area members, in the order used for columns.
pub const EA19_COUNTRIES: [&str; 19] = [
    "AT", "BE", "FI", "FR", "DE", "IE", "IT", "LU", "NL", "PT", "ES", "GR", "SI", "CY", "MT", "SK",
    "EE", "LV", "LT",
];

const EA_ENTITY: &str = "\
vars: GDP, P3, P3_S13, P31_S141_S15, P5G, P521_P53, P6, P7, B11, B111, B112, P3_P5, P3_P6, D1, D2X3, \
P31_S13, P32_S13, P31_S14, P31_S15, P51G, P52, P53, P61, P62, P71, P72, YA0, \
D11, D12, B2A3G, D2, D3, YA2, B1G, D21X31, YA1
GDP = P31_S13 + P32_S13 + P31_S14 + P31_S15 + P51G + P52 + P53 + P61 + P62 - P71 - P72 + YA0
P3 = P31_S13 + P32_S13 + P31_S14 + P31_S15
P3_S13 = P31_S13 + P32_S13
P31_S141_S15 = P31_S14 + P31_S15
P5G = P51G + P52 + P53
P521_P53 = P52 + P53
P6 = P61 + P62
P7 = P71 + P72
B11 = P61 + P62 - P71 - P72
B111 = P61 - P71
B112 = P62 - P72
P3_P5 = P31_S13 + P32_S13 + P31_S14 + P31_S15 + P51G + P52 + P53
P3_P6 = P31_S13 + P32_S13 + P31_S14 + P31_S15 + P51G + P52 + P53 + P61 + P62
GDP = D11 + D12 + B2A3G + D2 - D3 + YA2
D1 = D11 + D12
D2X3 = D2 - D3
GDP = B1G + D21X31 + YA1
";

const EA_BOTTOMS: [&str; 21] = [
    "P31_S13", "P32_S13", "P31_S14", "P31_S15", "P51G", "P52", "P53", "P61", "P62", "P71", "P72",
    "YA0", "D11", "D12", "B2A3G", "D2", "D3", "YA2", "B1G", "D21X31", "YA1",
];

/// Statistical-discrepancy series that are not published, per country.
fn ea19_nulls() -> Vec<String> {
    let mut out = Vec::new();
    for c in EA19_COUNTRIES {
        let missing: &[&str] = match c {
            "IE" => &[],
            "PT" => &["YA0", "YA2"],
            "FI" | "EE" | "AT" => &["YA2", "YA1"],
            _ => &["YA0", "YA1", "YA2"],
        };
        out.extend(missing.iter().map(|v| format!("{c}_{v}")));
    }
    out
}

/// The euro-area system before (`with_nulls = false`, 361 x 720) or after
/// removing the unpublished discrepancy series.
pub fn ea19_system(with_nulls: bool) -> Result<ConstraintSystem> {
    let entity = parse_constraints(EA_ENTITY)?;
    let mut blocks = vec![ComposeBlock::prefixed(entity.clone(), "EA_", &[])];

    let mut linking = String::new();
    for b in EA_BOTTOMS {
        let terms: Vec<String> = EA19_COUNTRIES.iter().map(|c| format!("{c}_{b}")).collect();
        linking.push_str(&format!("EA_{b} = {}\n", terms.join(" + ")));
    }
    blocks.push(ComposeBlock::new(parse_constraints(&linking)?));
    for c in EA19_COUNTRIES {
        blocks.push(ComposeBlock::prefixed(
            entity.clone(),
            &format!("{c}_"),
            &[],
        ));
    }

    let mut shared: Vec<String> = EA_BOTTOMS.iter().map(|b| format!("EA_{b}")).collect();
    for c in EA19_COUNTRIES {
        shared.extend(EA_BOTTOMS.iter().map(|b| format!("{c}_{b}")));
    }
    let nulls = if with_nulls { ea19_nulls() } else { Vec::new() };
    compose_grouped(&blocks, &shared, &nulls)
}

fn ea19() -> Result<StructureDef> {
    let system = ea19_system(true)?;
    let ea: Vec<String> = system
        .var_names()
        .iter()
        .filter(|n| n.starts_with("EA_"))
        .cloned()
        .collect();
    let countries: Vec<String> = system
        .var_names()
        .iter()
        .filter(|n| !n.starts_with("EA_"))
        .cloned()
        .collect();
    let groups = vec![
        ("EA".to_string(), ea),
        ("Countries".to_string(), countries),
        all_group(&system),
    ];
    Ok(StructureDef { system, groups })
}

const BURN_IN: usize = 50;
const COMMON_SHARE: f64 = 0.5;

/// Coherent data for `cs`: the free series (from a QR reduction) follow
/// stationary AR(1) processes `u_t = μ + φ(u_{t−1} − μ) + ε_t` whose
/// innovations share a common factor; the constrained series are `A u_t`.
pub fn synthesize_system(cs: &ConstraintSystem, t_obs: usize, seed: u64) -> Result<SeriesData> {
    if t_obs < 20 {
        return Err(Error::Insufficient(format!(
            "synthetic data needs at least 20 periods, got {t_obs}"
        )));
    }
    let plan = reduce_qr(cs, None)?;
    let n_u = plan.n_u();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mu: Vec<f64> = (0..n_u)
        .map(|_| 10.0 + 10.0 * rng.random::<f64>())
        .collect();
    let sigma: Vec<f64> = (0..n_u).map(|_| 0.5 + rng.random::<f64>()).collect();
    let phi: Vec<f64> = (0..n_u).map(|_| 0.3 + 0.5 * rng.random::<f64>()).collect();

    let mut u = Matrix::zeros(n_u, t_obs);
    let mut state = mu.clone();
    let a = COMMON_SHARE.sqrt();
    let b = (1.0 - COMMON_SHARE).sqrt();
    for t in 0..BURN_IN + t_obs {
        let common: f64 = rng.sample(StandardNormal);
        for j in 0..n_u {
            let z: f64 = rng.sample(StandardNormal);
            let eps = sigma[j] * (a * common + b * z);
            state[j] = mu[j] + phi[j] * (state[j] - mu[j]) + eps;
        }
        if t >= BURN_IN {
            for j in 0..n_u {
                u[(j, t - BURN_IN)] = state[j];
            }
        }
    }
    let y = plan.structural() * u;
    let x = plan.to_original_order(&y)?;
    let dates = (1..=t_obs).map(|t| format!("t{t:04}")).collect();
    SeriesData::new(dates, cs.var_names().to_vec(), x)
}

/// [`synthesize_system`] for a bundled structure.
pub fn synthesize(tag: Structure, t_obs: usize, seed: u64) -> Result<SeriesData> {
    synthesize_system(&structure(tag)?.system, t_obs, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraint::pivoted_qr;

    #[test]
    fn aus95_shape() {
        let def = structure(Structure::Aus95).unwrap();
        assert_eq!(def.system.p(), 33);
        assert_eq!(def.system.n(), 95);
        assert_eq!(pivoted_qr(def.system.gamma(), None).rank, 33);
        assert_eq!(def.groups[0].1.len(), 16);
        assert_eq!(def.groups[1].1.len(), 80);
    }

    #[test]
    fn ea19_template_shape() {
        let full = ea19_system(false).unwrap();
        assert_eq!((full.p(), full.n()), (361, 720));
        assert_eq!(ea19_nulls().len(), 50);
    }

    #[test]
    fn ea19_reduced_partition() {
        let cs = structure(Structure::Ea19).unwrap().system;
        assert_eq!(cs.n(), 670);
        let plan = reduce_qr(&cs, None).unwrap();
        assert_eq!(plan.n_u(), 311);
        assert_eq!(plan.n_c(), 359);
    }

    #[test]
    fn synthetic_data_is_coherent_and_seeded() {
        let d1 = synthesize(Structure::TwoHierGdp, 30, 9).unwrap();
        let d2 = synthesize(Structure::TwoHierGdp, 30, 9).unwrap();
        assert_eq!(d1, d2);
        let cs = structure(Structure::TwoHierGdp).unwrap().system;
        let r = cs.gamma() * &d1.values;
        for t in 0..30 {
            let scale = d1.values.column(t).amax();
            assert!(r.column(t).amax() <= 1e-9 * scale);
        }
        assert!(synthesize(Structure::TwoHierGdp, 10, 0).is_err());
    }

    #[test]
    fn structure_tags() {
        assert_eq!("aus95".parse::<Structure>().unwrap(), Structure::Aus95);
        assert!("aus96".parse::<Structure>().is_err());
    }
}
