//! A tiny equation language for writing constraint systems by hand.
//!
//! ```text
//! # comments start with '#'
//! vars: X, A, A1, A2, B, C, D     (optional; fixes column order)
//! X = A1 + A2 + B
//! X = C + D
//! 2x1 - 4x2 - 8x3 + 6x4 + 3x5 = 0
//! ```
//!
//! Each equation becomes one row of `Γ` with everything moved to the left
//! hand side. Terms are `[sign] [coef] [*] var`; coefficients are plain
//! decimals. The only constant allowed is `0`.

use std::collections::HashMap;

use super::ConstraintSystem;
use crate::error::{Error, Result};
use crate::linalg::Matrix;

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Eq,
}

fn tokenize(line_no: usize, s: &str) -> Result<Vec<Token>> {
    let mut out = Vec::new();
    let chars: Vec<char> = s.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        match c {
            ' ' | '\t' | '\r' => i += 1,
            '+' => {
                out.push(Token::Plus);
                i += 1;
            }
            '-' => {
                out.push(Token::Minus);
                i += 1;
            }
            '*' => {
                out.push(Token::Star);
                i += 1;
            }
            '=' => {
                out.push(Token::Eq);
                i += 1;
            }
            c if c.is_ascii_digit() || c == '.' => {
                let start = i;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
                if i < chars.len() && chars[i] == '.' {
                    i += 1;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
                let text: String = chars[start..i].iter().collect();
                let v: f64 = text
                    .parse()
                    .map_err(|_| Error::parse(line_no, format!("bad number `{text}`")))?;
                out.push(Token::Num(v));
            }
            c if c.is_alphabetic() || c == '_' => {
                let start = i;
                while i < chars.len()
                    && (chars[i].is_alphanumeric() || chars[i] == '_' || chars[i] == '.')
                {
                    i += 1;
                }
                out.push(Token::Ident(chars[start..i].iter().collect()));
            }
            other => {
                return Err(Error::parse(line_no, format!("unknown token `{other}`")));
            }
        }
    }
    Ok(out)
}

/// Parses one side of an equation into `(coefficient, variable)` terms.
fn parse_side(line_no: usize, toks: &[Token]) -> Result<Vec<(f64, String)>> {
    if toks.is_empty() {
        return Err(Error::parse(line_no, "empty side of equation"));
    }
    let mut terms = Vec::new();
    let mut i = 0;
    let mut first = true;
    while i < toks.len() {
        let mut sign = 1.0;
        match toks[i] {
            Token::Plus => i += 1,
            Token::Minus => {
                sign = -1.0;
                i += 1;
            }
            _ if first => {}
            _ => return Err(Error::parse(line_no, "expected `+` or `-` between terms")),
        }
        first = false;
        let mut coef = 1.0;
        let mut saw_num = false;
        if let Some(Token::Num(v)) = toks.get(i) {
            coef = *v;
            saw_num = true;
            i += 1;
            if let Some(Token::Star) = toks.get(i) {
                i += 1;
                if !matches!(toks.get(i), Some(Token::Ident(_))) {
                    return Err(Error::parse(line_no, "expected variable after `*`"));
                }
            }
        }
        match toks.get(i) {
            Some(Token::Ident(name)) => {
                terms.push((sign * coef, name.clone()));
                i += 1;
            }
            _ if saw_num => {
                if coef != 0.0 {
                    return Err(Error::parse(
                        line_no,
                        "constraints are homogeneous; only the constant 0 is allowed",
                    ));
                }
            }
            Some(t) => return Err(Error::parse(line_no, format!("unexpected token {t:?}"))),
            None => return Err(Error::parse(line_no, "dangling sign")),
        }
    }
    Ok(terms)
}

fn parse_header(line_no: usize, rest: &str) -> Result<Vec<String>> {
    let mut names = Vec::new();
    for raw in rest.split(',') {
        let name = raw.trim();
        if name.is_empty() {
            return Err(Error::parse(line_no, "empty name in `vars:` header"));
        }
        match tokenize(line_no, name)?.as_slice() {
            [Token::Ident(id)] => {
                if names.contains(id) {
                    return Err(Error::DuplicateVariable(id.clone()));
                }
                names.push(id.clone());
            }
            _ => return Err(Error::parse(line_no, format!("bad variable name `{name}`"))),
        }
    }
    Ok(names)
}

/// Parses constraint-DSL source into a [`ConstraintSystem`].
pub fn parse_constraints(text: &str) -> Result<ConstraintSystem> {
    let mut header: Option<Vec<String>> = None;
    let mut equations: Vec<(usize, Vec<(f64, String)>)> = Vec::new();

    for (k, raw) in text.lines().enumerate() {
        let line_no = k + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix("vars:") {
            if header.is_some() {
                return Err(Error::parse(line_no, "more than one `vars:` header"));
            }
            header = Some(parse_header(line_no, rest)?);
            continue;
        }
        let toks = tokenize(line_no, line)?;
        let eq_pos: Vec<usize> = toks
            .iter()
            .enumerate()
            .filter(|(_, t)| **t == Token::Eq)
            .map(|(i, _)| i)
            .collect();
        if eq_pos.len() != 1 {
            return Err(Error::parse(line_no, "expected exactly one `=`"));
        }
        let lhs = parse_side(line_no, &toks[..eq_pos[0]])?;
        let rhs = parse_side(line_no, &toks[eq_pos[0] + 1..])?;
        let mut terms = lhs;
        terms.extend(rhs.into_iter().map(|(c, v)| (-c, v)));
        equations.push((line_no, terms));
    }

    if equations.is_empty() {
        return Err(Error::EmptySystem);
    }

    let declared = header.is_some();
    let mut names: Vec<String> = header.unwrap_or_default();
    let mut index: HashMap<String, usize> = names
        .iter()
        .enumerate()
        .map(|(i, n)| (n.clone(), i))
        .collect();
    for (_, terms) in &equations {
        for (_, v) in terms {
            if !index.contains_key(v) {
                if declared {
                    return Err(Error::UnknownVariable(v.clone()));
                }
                index.insert(v.clone(), names.len());
                names.push(v.clone());
            }
        }
    }

    let mut gamma = Matrix::zeros(equations.len(), names.len());
    for (row, (_, terms)) in equations.iter().enumerate() {
        for (c, v) in terms {
            gamma[(row, index[v])] += *c;
        }
    }
    ConstraintSystem::new(gamma, names)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(cs: &ConstraintSystem, i: usize) -> Vec<f64> {
        cs.gamma().row(i).iter().copied().collect()
    }

    #[test]
    fn two_hierarchies_sharing_a_top() {
        let cs = parse_constraints("X = A + B\nX = C + D\nA = A1 + A2").unwrap();
        assert_eq!(cs.var_names(), &["X", "A", "B", "C", "D", "A1", "A2"]);
        assert_eq!(row(&cs, 0), vec![1.0, -1.0, -1.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn header_fixes_column_order() {
        let src = "vars: X, A, A1, A2, B, C, D\nX = A1 + A2 + B\nX = C + D\nA = A1 + A2\n";
        let cs = parse_constraints(src).unwrap();
        assert_eq!(row(&cs, 0), vec![1.0, 0.0, -1.0, -1.0, -1.0, 0.0, 0.0]);
        assert_eq!(row(&cs, 1), vec![1.0, 0.0, 0.0, 0.0, 0.0, -1.0, -1.0]);
        assert_eq!(row(&cs, 2), vec![0.0, 1.0, -1.0, -1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn identity_constraint() {
        let cs = parse_constraints("a = b").unwrap();
        assert_eq!(row(&cs, 0), vec![1.0, -1.0]);
    }

    #[test]
    fn coefficients_with_and_without_star() {
        let cs = parse_constraints("2x1 - 4x2 - 8*x3 + 6 x4 + 3x5 = 0").unwrap();
        assert_eq!(row(&cs, 0), vec![2.0, -4.0, -8.0, 6.0, 3.0]);
        let cs = parse_constraints("y = 0.5 a - .25*b").unwrap();
        assert_eq!(row(&cs, 0), vec![1.0, -0.5, 0.25]);
    }

    #[test]
    fn comments_and_blank_lines() {
        let cs = parse_constraints("# header\n\n t = a + b  # trailing\n").unwrap();
        assert_eq!(cs.p(), 1);
        assert_eq!(cs.n(), 3);
    }

    #[test]
    fn repeated_variable_accumulates() {
        let cs = parse_constraints("a + a = b").unwrap();
        assert_eq!(row(&cs, 0), vec![2.0, -1.0]);
    }

    #[test]
    fn trivial_rows_are_dropped() {
        let cs = parse_constraints("a = a\na = b").unwrap();
        assert_eq!(cs.p(), 1);
        assert_eq!(cs.dropped_zero_rows(), 1);
    }

    #[test]
    fn unknown_token() {
        assert!(matches!(
            parse_constraints("a = b / 2"),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn duplicate_declaration() {
        assert!(matches!(
            parse_constraints("vars: a, b, a\na = b"),
            Err(Error::DuplicateVariable(_))
        ));
    }

    #[test]
    fn undeclared_variable_with_header() {
        assert!(matches!(
            parse_constraints("vars: a, b\na = c"),
            Err(Error::UnknownVariable(_))
        ));
    }

    #[test]
    fn empty_system() {
        assert!(matches!(
            parse_constraints("# nothing\n\n"),
            Err(Error::EmptySystem)
        ));
    }

    #[test]
    fn nonzero_constant_rejected() {
        assert!(parse_constraints("a = b + 3").is_err());
        assert!(parse_constraints("a - b = 0").is_ok());
    }

    #[test]
    fn two_equals_rejected() {
        assert!(parse_constraints("a = b = c").is_err());
    }
}
