//! Fixed-column MPS text.
//!
//! Fields start at the classic columns 2, 5, 15 and 25 and each data line
//! holds one entry. Names longer than eight characters push the following
//! fields right, so the reader splits on whitespace, like free-MPS readers
//! do. Integer columns sit between `'MARKER'` lines; binaries are integer
//! columns with a `BV` bound. A column with no nonzero gets an explicit zero
//! objective entry so that it survives a round trip.

use std::collections::HashMap;

use super::{finish_parse, num, parse_name, parse_num, LinearConstraint, MilpModel, Relation, VarKind, Variable};
use crate::error::{Error, Result};

const OBJ: &str = "obj";

fn entry(a: &str, b: &str, c: &str) -> String {
    format!("    {a:<8}  {b:<8}  {c:>12}\n")
}

fn bound(kind: &str, col: &str, value: Option<f64>) -> String {
    match value {
        Some(v) => format!(" {kind:<2} BND       {col:<8}  {:>12}\n", num(v)),
        None => format!(" {kind:<2} BND       {col}\n"),
    }
}

pub(super) fn write(m: &MilpModel) -> String {
    let mut out = String::from("NAME          PLACEMENT\nROWS\n");
    out.push_str(&format!(" N  {OBJ}\n"));
    for c in &m.constraints {
        let t = match c.relation {
            Relation::Le => "L",
            Relation::Eq => "E",
            Relation::Ge => "G",
        };
        out.push_str(&format!(" {t}  {}\n", c.name));
    }

    let mut by_col: Vec<Vec<(usize, f64)>> = vec![Vec::new(); m.variables.len()];
    for (r, c) in m.constraints.iter().enumerate() {
        for &(a, v) in &c.terms {
            by_col[v].push((r, a));
        }
    }
    let mut obj = vec![None; m.variables.len()];
    for &(a, v) in &m.objective {
        obj[v] = Some(a);
    }

    out.push_str("COLUMNS\n");
    let mut markers = 0;
    let mut in_int = false;
    for (j, v) in m.variables.iter().enumerate() {
        let int = v.kind != VarKind::Continuous;
        if int != in_int {
            let what = if int { "'INTORG'" } else { "'INTEND'" };
            out.push_str(&format!("    M{markers:<7}  'MARKER'                 {what}\n"));
            markers += 1;
            in_int = int;
        }
        let name = v.name.to_string();
        if obj[j].is_none() && by_col[j].is_empty() {
            out.push_str(&entry(&name, OBJ, "0"));
        }
        if let Some(a) = obj[j] {
            out.push_str(&entry(&name, OBJ, &num(a)));
        }
        for &(r, a) in &by_col[j] {
            out.push_str(&entry(&name, &m.constraints[r].name, &num(a)));
        }
    }
    if in_int {
        out.push_str(&format!("    M{markers:<7}  'MARKER'                 'INTEND'\n"));
    }

    out.push_str("RHS\n");
    for c in m.constraints.iter().filter(|c| c.rhs != 0.0) {
        out.push_str(&entry("RHS", &c.name, &num(c.rhs)));
    }

    out.push_str("BOUNDS\n");
    for v in &m.variables {
        let name = v.name.to_string();
        if v.kind == VarKind::Binary {
            out.push_str(&bound("BV", &name, None));
            continue;
        }
        match (v.lo, v.hi) {
            (lo, hi) if lo == f64::NEG_INFINITY && hi == f64::INFINITY => out.push_str(&bound("FR", &name, None)),
            (lo, hi) if lo == hi => out.push_str(&bound("FX", &name, Some(lo))),
            (lo, hi) => {
                if lo == f64::NEG_INFINITY {
                    out.push_str(&bound("MI", &name, None));
                } else if lo != 0.0 {
                    out.push_str(&bound("LO", &name, Some(lo)));
                }
                if hi != f64::INFINITY {
                    out.push_str(&bound("UP", &name, Some(hi)));
                }
            }
        }
    }
    out.push_str("ENDATA\n");
    out
}

#[derive(Clone, Copy, PartialEq)]
enum Section {
    Head,
    Rows,
    Columns,
    Rhs,
    Bounds,
    Ranges,
    End,
}

pub(super) fn parse(text: &str) -> Result<MilpModel> {
    let mut section = Section::Head;
    let mut objective_row: Option<String> = None;
    let mut rows: Vec<LinearConstraint> = Vec::new();
    let mut row_at: HashMap<String, usize> = HashMap::new();
    let mut cols: Vec<(String, VarKind, f64, f64, usize)> = Vec::new();
    let mut col_at: HashMap<String, usize> = HashMap::new();
    let mut objective: Vec<(f64, usize)> = Vec::new();
    let mut in_int = false;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() || raw.starts_with('*') {
            continue;
        }
        let f: Vec<&str> = raw.split_whitespace().collect();
        let err = |msg: String| Error::Parse { line, msg };
        if !raw.starts_with(' ') {
            section = match f[0].to_ascii_uppercase().as_str() {
                "NAME" => Section::Head,
                "ROWS" => Section::Rows,
                "COLUMNS" => Section::Columns,
                "RHS" => Section::Rhs,
                "BOUNDS" => Section::Bounds,
                "RANGES" => Section::Ranges,
                "ENDATA" => Section::End,
                other => return Err(err(format!("unknown section '{other}'"))),
            };
            continue;
        }
        match section {
            Section::Head => return Err(err("data before ROWS".into())),
            Section::End => return Err(err("data after ENDATA".into())),
            Section::Ranges => return Err(err("RANGES are not supported".into())),
            Section::Rows => {
                let [t, name] = f[..] else { return Err(err("expected a row type and name".into())) };
                let relation = match t.to_ascii_uppercase().as_str() {
                    "N" => {
                        if objective_row.is_none() {
                            objective_row = Some(name.to_string());
                        }
                        continue;
                    }
                    "L" => Relation::Le,
                    "E" => Relation::Eq,
                    "G" => Relation::Ge,
                    other => return Err(err(format!("unknown row type '{other}'"))),
                };
                if row_at.insert(name.to_string(), rows.len()).is_some() {
                    return Err(err(format!("row {name} declared twice")));
                }
                rows.push(LinearConstraint { name: name.to_string(), terms: Vec::new(), relation, rhs: 0.0 });
            }
            Section::Columns => {
                if f.len() >= 3 && f[1] == "'MARKER'" {
                    in_int = match f[2] {
                        "'INTORG'" => true,
                        "'INTEND'" => false,
                        other => return Err(err(format!("unknown marker {other}"))),
                    };
                    continue;
                }
                if f.len() != 3 && f.len() != 5 {
                    return Err(err("expected a column and one or two entries".into()));
                }
                let j = match col_at.get(f[0]) {
                    Some(&j) => j,
                    None => {
                        let kind = if in_int { VarKind::Integer } else { VarKind::Continuous };
                        col_at.insert(f[0].to_string(), cols.len());
                        cols.push((f[0].to_string(), kind, 0.0, f64::INFINITY, line));
                        cols.len() - 1
                    }
                };
                for pair in f[1..].chunks(2) {
                    let a = parse_num(pair[1], line)?;
                    if Some(pair[0]) == objective_row.as_deref() {
                        if a != 0.0 {
                            objective.push((a, j));
                        }
                    } else {
                        let r = *row_at.get(pair[0]).ok_or_else(|| err(format!("unknown row {}", pair[0])))?;
                        rows[r].terms.push((a, j));
                    }
                }
            }
            Section::Rhs => {
                if f.len() != 3 && f.len() != 5 {
                    return Err(err("expected a set name and one or two entries".into()));
                }
                for pair in f[1..].chunks(2) {
                    if Some(pair[0]) == objective_row.as_deref() {
                        continue;
                    }
                    let r = *row_at.get(pair[0]).ok_or_else(|| err(format!("unknown row {}", pair[0])))?;
                    rows[r].rhs = parse_num(pair[1], line)?;
                }
            }
            Section::Bounds => {
                if f.len() < 3 {
                    return Err(err("expected a bound type, set and column".into()));
                }
                let j = *col_at.get(f[2]).ok_or_else(|| err(format!("unknown column {}", f[2])))?;
                let value = || f.get(3).ok_or_else(|| err("missing bound value".into())).and_then(|v| parse_num(v, line));
                let c = &mut cols[j];
                match f[0].to_ascii_uppercase().as_str() {
                    "UP" => c.3 = value()?,
                    "LO" => c.2 = value()?,
                    "FX" => {
                        let v = value()?;
                        c.2 = v;
                        c.3 = v;
                    }
                    "MI" => c.2 = f64::NEG_INFINITY,
                    "PL" => c.3 = f64::INFINITY,
                    "FR" => {
                        c.2 = f64::NEG_INFINITY;
                        c.3 = f64::INFINITY;
                    }
                    "BV" => {
                        c.1 = VarKind::Binary;
                        c.2 = 0.0;
                        c.3 = 1.0;
                    }
                    other => return Err(err(format!("unknown bound type '{other}'"))),
                }
            }
        }
    }
    if section != Section::End {
        return Err(Error::Parse { line: text.lines().count(), msg: "missing ENDATA".into() });
    }
    let variables = cols
        .into_iter()
        .map(|(n, kind, lo, hi, line)| Ok(Variable { name: parse_name(&n, line)?, kind, lo, hi }))
        .collect::<Result<Vec<_>>>()?;
    finish_parse(variables, rows, objective)
}
