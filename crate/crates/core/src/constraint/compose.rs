use std::collections::{BTreeMap, HashMap, HashSet};

use super::ConstraintSystem;
use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// One block of a composite system, with an optional renaming of its local
/// variable names into the global namespace.
#[derive(Debug, Clone)]
pub struct ComposeBlock {
    pub system: ConstraintSystem,
    /// Local name -> global name; names not listed are used as they are.
    pub rename: BTreeMap<String, String>,
}

impl ComposeBlock {
    pub fn new(system: ConstraintSystem) -> Self {
        Self {
            system,
            rename: BTreeMap::new(),
        }
    }

    /// Prefixes every local name with `prefix` except those in `keep`.
    pub fn prefixed(system: ConstraintSystem, prefix: &str, keep: &[&str]) -> Self {
        let rename = system
            .var_names()
            .iter()
            .filter(|n| !keep.contains(&n.as_str()))
            .map(|n| (n.clone(), format!("{prefix}{n}")))
            .collect();
        Self { system, rename }
    }

    fn global_names(&self) -> Vec<String> {
        self.system
            .var_names()
            .iter()
            .map(|n| self.rename.get(n).cloned().unwrap_or_else(|| n.clone()))
            .collect()
    }
}

/// Stacks several constraint systems block-diagonally.
///
/// Variables listed in `shared` may appear in more than one block and are
/// merged into a single column; any other name clash is an error. Variables
/// listed in `nulls` are declared absent: their columns are removed before
/// anything else happens, and rows left without coefficients are dropped.
/// Columns follow order of first appearance across the blocks.
pub fn compose_grouped(
    blocks: &[ComposeBlock],
    shared: &[String],
    nulls: &[String],
) -> Result<ConstraintSystem> {
    if blocks.is_empty() {
        return Err(Error::EmptySystem);
    }
    let shared: HashSet<&str> = shared.iter().map(String::as_str).collect();
    let nulls: HashSet<&str> = nulls.iter().map(String::as_str).collect();

    let mut names: Vec<String> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut block_cols: Vec<Vec<usize>> = Vec::with_capacity(blocks.len());
    for block in blocks {
        let mut cols = Vec::new();
        for name in block.global_names() {
            let col = match index.get(&name) {
                Some(&c) if shared.contains(name.as_str()) => c,
                Some(_) => return Err(Error::DuplicateVariable(name)),
                None => {
                    index.insert(name.clone(), names.len());
                    names.push(name);
                    names.len() - 1
                }
            };
            cols.push(col);
        }
        block_cols.push(cols);
    }
    for null in &nulls {
        if !index.contains_key(*null) {
            return Err(Error::UnknownVariable(null.to_string()));
        }
    }

    let p: usize = blocks.iter().map(|b| b.system.p()).sum();
    let mut gamma = Matrix::zeros(p, names.len());
    let mut row0 = 0;
    for (block, cols) in blocks.iter().zip(&block_cols) {
        let g = block.system.gamma();
        for i in 0..g.nrows() {
            for (j, &c) in cols.iter().enumerate() {
                gamma[(row0 + i, c)] += g[(i, j)];
            }
        }
        row0 += g.nrows();
    }

    let keep: Vec<usize> = (0..names.len())
        .filter(|&j| !nulls.contains(names[j].as_str()))
        .collect();
    let gamma = Matrix::from_fn(p, keep.len(), |i, j| gamma[(i, keep[j])]);
    let names = keep.iter().map(|&j| names[j].clone()).collect();
    ConstraintSystem::new(gamma, names)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraint::parse_constraints;

    fn s(v: &[&str]) -> Vec<String> {
        v.iter().map(|x| x.to_string()).collect()
    }

    #[test]
    fn shared_top_is_merged() {
        let a = parse_constraints("T = a + b").unwrap();
        let b = parse_constraints("T = c + d").unwrap();
        let cs = compose_grouped(
            &[ComposeBlock::new(a), ComposeBlock::new(b)],
            &s(&["T"]),
            &[],
        )
        .unwrap();
        assert_eq!(cs.var_names(), s(&["T", "a", "b", "c", "d"]).as_slice());
        assert_eq!(cs.p(), 2);
    }

    #[test]
    fn undeclared_clash_is_an_error() {
        let a = parse_constraints("T = a + b").unwrap();
        let b = parse_constraints("T = a + d").unwrap();
        let err = compose_grouped(
            &[ComposeBlock::new(a), ComposeBlock::new(b)],
            &s(&["T"]),
            &[],
        )
        .unwrap_err();
        assert!(matches!(err, Error::DuplicateVariable(ref n) if n == "a"));
    }

    #[test]
    fn prefixing_separates_blocks() {
        let a = parse_constraints("T = a + b").unwrap();
        let blocks = vec![
            ComposeBlock::prefixed(a.clone(), "x_", &[]),
            ComposeBlock::prefixed(a, "y_", &[]),
        ];
        let cs = compose_grouped(&blocks, &[], &[]).unwrap();
        assert_eq!(cs.n(), 6);
        assert_eq!(cs.var_names()[3], "y_T");
    }

    #[test]
    fn null_columns_are_removed() {
        let a = parse_constraints("T = a + b + sd").unwrap();
        let cs = compose_grouped(&[ComposeBlock::new(a)], &[], &s(&["sd"])).unwrap();
        assert_eq!(cs.var_names(), s(&["T", "a", "b"]).as_slice());
        assert_eq!(cs.gamma().as_slice(), &[1.0, -1.0, -1.0]);
    }

    #[test]
    fn unknown_null_is_an_error() {
        let a = parse_constraints("T = a + b").unwrap();
        assert!(compose_grouped(&[ComposeBlock::new(a)], &[], &s(&["zz"])).is_err());
    }
}
