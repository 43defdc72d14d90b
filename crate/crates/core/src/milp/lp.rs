//! CPLEX-style LP text.
//!
//! Layout written: a comment line, `Minimize` with an `obj:` row,
//! `Subject To` with one named row per constraint, `Bounds` with one line per
//! variable in model order, then `Generals`, `Binaries` and `End`. Rows wrap
//! at 78 columns; continuation lines start with three spaces. Coefficients of
//! one are omitted. The reader also takes `\` comments anywhere, unnamed
//! objectives, any line breaks inside rows and the usual section aliases.

use std::collections::HashMap;

use super::{finish_parse, num, parse_name, parse_num, LinearConstraint, MilpModel, Relation, VarKind, Variable};
use crate::error::{Error, Result};

const WIDTH: usize = 78;

fn term(c: f64, name: &str, first: bool) -> String {
    let (sign, a) = if c < 0.0 { ("-", -c) } else { ("+", c) };
    let body = if a == 1.0 { name.to_string() } else { format!("{} {name}", num(a)) };
    match (first, sign) {
        (true, "+") => body,
        _ => format!("{sign} {body}"),
    }
}

fn wrapped(out: &mut String, head: &str, pieces: &[String]) {
    let mut line = String::from(head);
    for p in pieces {
        if line.len() > head.len() && line.len() + 1 + p.len() > WIDTH {
            out.push_str(&line);
            out.push('\n');
            line = String::from("  ");
        }
        line.push(' ');
        line.push_str(p);
    }
    out.push_str(&line);
    out.push('\n');
}

fn expr(m: &MilpModel, terms: &[(f64, usize)]) -> Vec<String> {
    terms.iter().enumerate().map(|(k, &(c, v))| term(c, &m.variables[v].name.to_string(), k == 0)).collect()
}

pub(super) fn write(m: &MilpModel) -> String {
    let mut out = String::from("\\ power-minimizing placement model\nMinimize\n");
    wrapped(&mut out, " obj:", &expr(m, &m.objective));
    out.push_str("Subject To\n");
    for c in &m.constraints {
        let mut pieces = expr(m, &c.terms);
        pieces.push(format!("{} {}", c.relation.as_str(), num(c.rhs)));
        wrapped(&mut out, &format!(" {}:", c.name), &pieces);
    }
    out.push_str("Bounds\n");
    for v in &m.variables {
        let name = v.name.to_string();
        let line = match (v.kind, v.lo, v.hi) {
            (VarKind::Binary, _, _) => format!(" 0 <= {name} <= 1"),
            (_, lo, hi) if lo == f64::NEG_INFINITY && hi == f64::INFINITY => format!(" {name} free"),
            (_, lo, hi) if hi == f64::INFINITY => format!(" {name} >= {}", num(lo)),
            (_, lo, hi) => format!(" {} <= {name} <= {}", num(lo), num(hi)),
        };
        out.push_str(&line);
        out.push('\n');
    }
    for (kind, title) in [(VarKind::Integer, "Generals"), (VarKind::Binary, "Binaries")] {
        let names: Vec<String> =
            m.variables.iter().filter(|v| v.kind == kind).map(|v| v.name.to_string()).collect();
        if !names.is_empty() {
            out.push_str(title);
            out.push('\n');
            wrapped(&mut out, "", &names);
        }
    }
    out.push_str("End\n");
    out
}

#[derive(Clone, Copy, PartialEq)]
enum Section {
    None,
    Objective,
    Rows,
    Bounds,
    Generals,
    Binaries,
    End,
}

fn section_of(line: &str) -> Option<Section> {
    let key = line.split_whitespace().collect::<Vec<_>>().join(" ").to_ascii_lowercase();
    Some(match key.as_str() {
        "minimize" | "minimise" | "minimum" | "min" => Section::Objective,
        "subject to" | "such that" | "st" | "s.t." => Section::Rows,
        "bounds" | "bound" => Section::Bounds,
        "generals" | "general" | "gen" | "integers" => Section::Generals,
        "binaries" | "binary" | "bin" => Section::Binaries,
        "end" => Section::End,
        _ => return None,
    })
}

fn is_relation(t: &str) -> Option<Relation> {
    match t {
        "<=" | "=<" | "<" => Some(Relation::Le),
        ">=" | "=>" | ">" => Some(Relation::Ge),
        "=" => Some(Relation::Eq),
        _ => None,
    }
}

fn is_number(t: &str) -> bool {
    t.starts_with(|c: char| c.is_ascii_digit() || matches!(c, '.' | '-' | '+'))
        || matches!(t.to_ascii_lowercase().as_str(), "inf" | "infinity")
}

type Tokens<'a> = [(&'a str, usize)];

/// Terms up to the first relation; returns them and the index after.
fn terms<'a>(tokens: &Tokens<'a>) -> Result<(Vec<(f64, &'a str)>, usize)> {
    let mut out = Vec::new();
    let mut sign = 1.0;
    let mut coef: Option<f64> = None;
    for (k, &(t, line)) in tokens.iter().enumerate() {
        if is_relation(t).is_some() {
            if coef.is_some() || sign < 0.0 {
                return Err(Error::Parse { line, msg: "dangling coefficient".into() });
            }
            return Ok((out, k));
        }
        match t {
            "+" => {}
            "-" => sign = -sign,
            _ if is_number(t) && coef.is_none() => coef = Some(parse_num(t, line)?),
            _ => {
                out.push((sign * coef.unwrap_or(1.0), t));
                sign = 1.0;
                coef = None;
            }
        }
    }
    if let Some(&(_, line)) = tokens.last() {
        if coef.is_some() || sign < 0.0 {
            return Err(Error::Parse { line, msg: "dangling coefficient".into() });
        }
    }
    Ok((out, tokens.len()))
}

pub(super) fn parse(text: &str) -> Result<MilpModel> {
    let mut section = Section::None;
    let mut objective: Vec<(&str, usize)> = Vec::new();
    let mut rows: Vec<(&str, usize)> = Vec::new();
    let mut bounds: Vec<(Vec<&str>, usize)> = Vec::new();
    let mut generals: Vec<(&str, usize)> = Vec::new();
    let mut binaries: Vec<(&str, usize)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('\\').next().unwrap_or("");
        if content.trim().is_empty() {
            continue;
        }
        if let Some(s) = section_of(content) {
            if s == Section::End {
                section = Section::End;
                continue;
            }
            section = s;
            continue;
        }
        if content.trim().eq_ignore_ascii_case("maximize") || content.trim().eq_ignore_ascii_case("maximise") {
            return Err(Error::Parse { line, msg: "only minimization models are read".into() });
        }
        let tokens = content.split_whitespace().map(|t| (t, line));
        match section {
            Section::Objective => objective.extend(tokens),
            Section::Rows => rows.extend(tokens),
            Section::Bounds => bounds.push((content.split_whitespace().collect(), line)),
            Section::Generals => generals.extend(tokens),
            Section::Binaries => binaries.extend(tokens),
            Section::None => return Err(Error::Parse { line, msg: "text before the objective".into() }),
            Section::End => return Err(Error::Parse { line, msg: "text after End".into() }),
        }
    }

    // Variable order: bounds first, then first appearance elsewhere.
    let mut order: Vec<(String, usize)> = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();
    let mut lo_hi: HashMap<String, (f64, f64)> = HashMap::new();
    let mut note = |name: &str, line: usize, order: &mut Vec<(String, usize)>| {
        if !seen.contains_key(name) {
            seen.insert(name.to_string(), order.len());
            order.push((name.to_string(), line));
        }
    };
    for (t, line) in &bounds {
        let (name, lo, hi) = match t.as_slice() {
            [n, f] if f.eq_ignore_ascii_case("free") => (*n, f64::NEG_INFINITY, f64::INFINITY),
            [a, r1, n, r2, b] if is_relation(r1) == Some(Relation::Le) && is_relation(r2) == Some(Relation::Le) => {
                (*n, parse_num(a, *line)?, parse_num(b, *line)?)
            }
            [n, r, v] if !is_number(n) => {
                let v = parse_num(v, *line)?;
                let (lo, hi) = lo_hi.get(*n).copied().unwrap_or((0.0, f64::INFINITY));
                match is_relation(r) {
                    Some(Relation::Ge) => (*n, v, hi),
                    Some(Relation::Le) => (*n, lo, v),
                    Some(Relation::Eq) => (*n, v, v),
                    None => return Err(Error::Parse { line: *line, msg: format!("bad bound '{}'", t.join(" ")) }),
                }
            }
            [v, r, n] => {
                let v = parse_num(v, *line)?;
                let (lo, hi) = lo_hi.get(*n).copied().unwrap_or((0.0, f64::INFINITY));
                match is_relation(r) {
                    Some(Relation::Le) => (*n, v, hi),
                    Some(Relation::Ge) => (*n, lo, v),
                    Some(Relation::Eq) => (*n, v, v),
                    None => return Err(Error::Parse { line: *line, msg: format!("bad bound '{}'", t.join(" ")) }),
                }
            }
            _ => return Err(Error::Parse { line: *line, msg: format!("bad bound '{}'", t.join(" ")) }),
        };
        note(name, *line, &mut order);
        lo_hi.insert(name.to_string(), (lo, hi));
    }

    let objective = match objective.first() {
        Some((t, _)) if t.ends_with(':') => &objective[1..],
        _ => &objective[..],
    };
    let (obj_terms, used) = terms(objective)?;
    if used != objective.len() {
        return Err(Error::Parse { line: objective[used].1, msg: "relation in the objective".into() });
    }
    for &(_, n) in &obj_terms {
        note(n, 0, &mut order);
    }

    let mut parsed_rows = Vec::new();
    let mut k = 0;
    while k < rows.len() {
        let (head, line) = rows[k];
        let Some(name) = head.strip_suffix(':').filter(|n| !n.is_empty()) else {
            return Err(Error::Parse { line, msg: format!("expected a row name, found '{head}'") });
        };
        k += 1;
        let (row_terms, rel_at) = terms(&rows[k..])?;
        let Some(&(rel, rel_line)) = rows.get(k + rel_at) else {
            return Err(Error::Parse { line, msg: format!("row {name} has no relation") });
        };
        let relation = is_relation(rel).expect("stopped at a relation");
        let mut j = k + rel_at + 1;
        let mut sign = 1.0;
        while let Some(&(t, _)) = rows.get(j).filter(|(t, _)| *t == "-" || *t == "+") {
            if t == "-" {
                sign = -sign;
            }
            j += 1;
        }
        let Some(&(rhs, _)) = rows.get(j) else {
            return Err(Error::Parse { line: rel_line, msg: format!("row {name} has no right-hand side") });
        };
        let rhs = sign * parse_num(rhs, rel_line)?;
        for &(_, n) in &row_terms {
            note(n, line, &mut order);
        }
        parsed_rows.push((name.to_string(), row_terms, relation, rhs, line));
        k = j + 1;
    }
    for &(n, line) in generals.iter().chain(&binaries) {
        note(n, line, &mut order);
    }

    let mut kinds: HashMap<&str, VarKind> = HashMap::new();
    for &(n, _) in &generals {
        kinds.insert(n, VarKind::Integer);
    }
    for &(n, _) in &binaries {
        kinds.insert(n, VarKind::Binary);
    }
    let mut variables = Vec::with_capacity(order.len());
    for (n, line) in &order {
        let kind = kinds.get(n.as_str()).copied().unwrap_or(VarKind::Continuous);
        let (lo, hi) = match kind {
            VarKind::Binary => (0.0, 1.0),
            _ => lo_hi.get(n).copied().unwrap_or((0.0, f64::INFINITY)),
        };
        variables.push(Variable { name: parse_name(n, *line)?, kind, lo, hi });
    }
    let index = |n: &str| seen[n];
    let objective = obj_terms.into_iter().map(|(c, n)| (c, index(n))).collect();
    let constraints = parsed_rows
        .into_iter()
        .map(|(name, t, relation, rhs, _)| LinearConstraint {
            name,
            terms: t.into_iter().map(|(c, n)| (c, index(n))).collect(),
            relation,
            rhs,
        })
        .collect();
    finish_parse(variables, constraints, objective)
}
