use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::ConstraintSystem;
use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// `parent = Σ coef · child`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Relation {
    pub parent: String,
    pub children: Vec<(f64, String)>,
}

impl Relation {
    /// Relation with unit coefficients.
    pub fn sum<S: AsRef<str>>(parent: &str, children: &[S]) -> Self {
        Self {
            parent: parent.to_string(),
            children: children
                .iter()
                .map(|c| (1.0, c.as_ref().to_string()))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct HierarchySpec {
    pub relations: Vec<Relation>,
}

impl HierarchySpec {
    pub fn new(relations: Vec<Relation>) -> Self {
        Self { relations }
    }

    pub fn push(&mut self, rel: Relation) -> &mut Self {
        self.relations.push(rel);
        self
    }
}

/// Builds `Γ` from summation-type relations, one row per relation with `+1`
/// on the parent and `-coef` on each child.
///
/// Columns list every parent (in order of first appearance as a parent)
/// before the variables that only ever occur as children, so a genuine
/// hierarchy comes out in the familiar uppers-then-bottoms order.
pub fn from_hierarchy(spec: &HierarchySpec) -> Result<ConstraintSystem> {
    if spec.relations.is_empty() {
        return Err(Error::EmptySystem);
    }
    let mut names: Vec<String> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut add = |name: &str, names: &mut Vec<String>| {
        if !index.contains_key(name) {
            index.insert(name.to_string(), names.len());
            names.push(name.to_string());
        }
    };
    for rel in &spec.relations {
        add(&rel.parent, &mut names);
    }
    for rel in &spec.relations {
        if rel.children.is_empty() {
            return Err(Error::Invalid(format!(
                "relation for `{}` has no children",
                rel.parent
            )));
        }
        for (_, child) in &rel.children {
            add(child, &mut names);
        }
    }
    let col: HashMap<&str, usize> = names
        .iter()
        .enumerate()
        .map(|(i, n)| (n.as_str(), i))
        .collect();

    let mut gamma = Matrix::zeros(spec.relations.len(), names.len());
    let mut seen: HashSet<Vec<u64>> = HashSet::new();
    let mut duplicates = Vec::new();
    for (r, rel) in spec.relations.iter().enumerate() {
        gamma[(r, col[rel.parent.as_str()])] += 1.0;
        for (coef, child) in &rel.children {
            gamma[(r, col[child.as_str()])] -= coef;
        }
        let key: Vec<u64> = gamma.row(r).iter().map(|v| v.to_bits()).collect();
        if !seen.insert(key) {
            duplicates.push(rel.parent.clone());
        }
    }

    let mut cs = ConstraintSystem::new(gamma, names)?;
    for parent in duplicates {
        cs.push_warning(format!(
            "duplicate relation for `{parent}` kept as a redundant row"
        ));
    }
    Ok(cs)
}
