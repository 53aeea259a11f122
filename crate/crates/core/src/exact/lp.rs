//! LP text format: writer for [`MilpModel`] and a reader for the subset the
//! writer produces (objective, constraints, bounds, general and binary
//! sections, backslash comments).

use std::fmt::Write as _;
use std::io;

use thiserror::Error;

use super::milp::{MilpModel, Sense, VarKind};

const TERMS_PER_LINE: usize = 8;

#[derive(Debug, Error, PartialEq)]
#[error("line {line}: {msg}")]
pub struct LpError {
    pub line: usize,
    pub msg: String,
}

fn fmt_num(x: f64) -> String {
    if x == x.trunc() && x.abs() < 1e15 {
        format!("{}", x as i64)
    } else {
        format!("{x:?}")
    }
}

fn write_terms(out: &mut String, terms: &[(usize, f64)], model: &MilpModel) {
    for (i, &(v, c)) in terms.iter().enumerate() {
        if i > 0 && i % TERMS_PER_LINE == 0 {
            out.push_str("\n   ");
        }
        let sign = if c < 0.0 { "-" } else { "+" };
        if i == 0 && sign == "+" {
            let _ = write!(out, " {} {}", fmt_num(c), model.variables[v].name);
        } else {
            let _ = write!(out, " {sign} {} {}", fmt_num(c.abs()), model.variables[v].name);
        }
    }
}

/// Renders `model` as LP text. Output depends only on the model.
pub fn lp_string(model: &MilpModel) -> String {
    let mut out = String::new();
    out.push_str("\\ multi-stage edge server upgrade model\n");
    for n in &model.notes {
        let _ = writeln!(out, "\\ {n}");
    }
    out.push_str("Maximize\n obj:");
    write_terms(&mut out, &model.objective, model);
    out.push_str("\nSubject To\n");
    for r in &model.rows {
        let _ = write!(out, " {}:", r.name);
        if r.terms.is_empty() {
            // Keeps the row syntactically valid; it is a constant comparison.
            if let Some(v) = model.variables.first() {
                let _ = write!(out, " 0 {}", v.name);
            }
        }
        write_terms(&mut out, &r.terms, model);
        let _ = writeln!(out, " {} {}", r.sense.symbol(), fmt_num(r.rhs));
    }
    out.push_str("Bounds\n");
    for v in &model.variables {
        if v.lower == v.upper {
            let _ = writeln!(out, " {} = {}", v.name, fmt_num(v.lower));
        } else {
            let _ = writeln!(out, " {} <= {} <= {}", fmt_num(v.lower), v.name, fmt_num(v.upper));
        }
    }
    for (title, kind) in [("General", VarKind::Integer), ("Binary", VarKind::Binary)] {
        let names: Vec<&str> = model.variables.iter().filter(|v| v.kind == kind).map(|v| v.name.as_str()).collect();
        if names.is_empty() {
            continue;
        }
        let _ = writeln!(out, "{title}");
        for chunk in names.chunks(TERMS_PER_LINE) {
            let _ = writeln!(out, " {}", chunk.join(" "));
        }
    }
    out.push_str("End\n");
    out
}

pub fn emit_lp<W: io::Write>(model: &MilpModel, mut out: W) -> io::Result<()> {
    out.write_all(lp_string(model).as_bytes())
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LpRow {
    pub name: String,
    pub terms: Vec<(String, f64)>,
    pub sense: Option<Sense>,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LpFile {
    pub maximize: bool,
    pub objective: Vec<(String, f64)>,
    pub rows: Vec<LpRow>,
    /// (name, lower, upper)
    pub bounds: Vec<(String, f64, f64)>,
    pub generals: Vec<String>,
    pub binaries: Vec<String>,
}

#[derive(Clone, Copy, PartialEq)]
enum Section {
    None,
    Objective,
    Constraints,
    Bounds,
    General,
    Binary,
    End,
}

fn section_of(line: &str) -> Option<Section> {
    Some(match line.to_ascii_lowercase().as_str() {
        "maximize" | "maximise" | "max" => Section::Objective,
        "minimize" | "minimise" | "min" => Section::Objective,
        "subject to" | "such that" | "st" | "s.t." => Section::Constraints,
        "bounds" | "bound" => Section::Bounds,
        "general" | "generals" | "gen" => Section::General,
        "binary" | "binaries" | "bin" => Section::Binary,
        "end" => Section::End,
        _ => return None,
    })
}

fn number(tok: &str, line: usize) -> Result<f64, LpError> {
    let v = match tok.to_ascii_lowercase().as_str() {
        "inf" | "+inf" | "infinity" | "+infinity" => f64::INFINITY,
        "-inf" | "-infinity" => f64::NEG_INFINITY,
        _ => tok.parse().map_err(|_| LpError { line, msg: format!("expected a number, found {tok:?}") })?,
    };
    if v.is_nan() {
        return Err(LpError { line, msg: "NaN is not a valid number".into() });
    }
    Ok(v)
}

fn is_name(tok: &str) -> bool {
    tok.chars().next().is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
        && tok.chars().all(|c| c.is_ascii_alphanumeric() || "_.[]".contains(c))
}

/// Parses a linear expression `[+|-] [coef] name ...`.
fn parse_terms(tokens: &[&str], line: usize) -> Result<Vec<(String, f64)>, LpError> {
    let mut out = Vec::new();
    let mut sign = 1.0;
    let mut coef: Option<f64> = None;
    for &tok in tokens {
        match tok {
            "+" => sign = 1.0,
            "-" => sign = -sign,
            _ if is_name(tok) => {
                out.push((tok.to_string(), sign * coef.take().unwrap_or(1.0)));
                sign = 1.0;
            }
            _ => {
                if coef.is_some() {
                    return Err(LpError { line, msg: format!("two coefficients in a row at {tok:?}") });
                }
                coef = Some(number(tok, line)?);
            }
        }
    }
    if coef.is_some() {
        return Err(LpError { line, msg: "dangling coefficient".into() });
    }
    Ok(out)
}

fn parse_sense(tok: &str) -> Option<Sense> {
    match tok {
        "<=" | "=<" | "<" => Some(Sense::Le),
        ">=" | "=>" | ">" => Some(Sense::Ge),
        "=" => Some(Sense::Eq),
        _ => None,
    }
}

/// Splits `name: body` into the label and the rest.
fn split_label(text: &str) -> (Option<&str>, &str) {
    match text.find(':') {
        Some(i) => (Some(text[..i].trim()), &text[i + 1..]),
        None => (None, text),
    }
}

fn finish_row(buf: &mut Option<(String, Vec<String>, usize)>, file: &mut LpFile) -> Result<(), LpError> {
    let Some((name, toks, line)) = buf.take() else { return Ok(()) };
    let toks: Vec<&str> = toks.iter().map(String::as_str).collect();
    let Some(pos) = toks.iter().position(|t| parse_sense(t).is_some()) else {
        return Err(LpError { line, msg: format!("constraint {name:?} has no relation") });
    };
    if pos + 2 != toks.len() {
        return Err(LpError { line, msg: format!("constraint {name:?} needs exactly one right-hand side") });
    }
    let terms = parse_terms(&toks[..pos], line)?;
    let rhs = number(toks[pos + 1], line)?;
    file.rows.push(LpRow { name, terms, sense: parse_sense(toks[pos]), rhs });
    Ok(())
}

pub fn parse_lp(text: &str) -> Result<LpFile, LpError> {
    let mut file = LpFile::default();
    let mut section = Section::None;
    let mut row: Option<(String, Vec<String>, usize)> = None;
    let mut objective: Vec<String> = Vec::new();

    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('\\').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(s) = section_of(content) {
            if section == Section::Constraints {
                finish_row(&mut row, &mut file)?;
            }
            if s == Section::Objective {
                file.maximize = content.to_ascii_lowercase().starts_with("max");
            }
            section = s;
            continue;
        }
        let toks: Vec<&str> = content.split_whitespace().collect();
        match section {
            Section::None | Section::End => {
                return Err(LpError { line, msg: format!("text outside any section: {content:?}") })
            }
            Section::Objective => {
                let (_, body) = split_label(content);
                objective.extend(body.split_whitespace().map(String::from));
            }
            Section::Constraints => {
                let (label, body) = split_label(content);
                if let Some(name) = label {
                    finish_row(&mut row, &mut file)?;
                    if !is_name(name) {
                        return Err(LpError { line, msg: format!("bad constraint name {name:?}") });
                    }
                    row = Some((name.to_string(), Vec::new(), line));
                } else if row.is_none() {
                    row = Some((format!("r{}", file.rows.len() + 1), Vec::new(), line));
                }
                if let Some((_, t, _)) = row.as_mut() {
                    t.extend(body.split_whitespace().map(String::from));
                }
            }
            Section::Bounds => file.bounds.push(parse_bound(&toks, line)?),
            Section::General => file.generals.extend(names(&toks, line)?),
            Section::Binary => file.binaries.extend(names(&toks, line)?),
        }
    }
    if section == Section::Constraints {
        finish_row(&mut row, &mut file)?;
    }
    let toks: Vec<&str> = objective.iter().map(String::as_str).collect();
    file.objective = parse_terms(&toks, 0)?;
    Ok(file)
}

fn names(toks: &[&str], line: usize) -> Result<Vec<String>, LpError> {
    toks.iter()
        .map(|t| if is_name(t) { Ok(t.to_string()) } else { Err(LpError { line, msg: format!("bad variable name {t:?}") }) })
        .collect()
}

fn parse_bound(toks: &[&str], line: usize) -> Result<(String, f64, f64), LpError> {
    let err = || LpError { line, msg: format!("unsupported bound {:?}", toks.join(" ")) };
    match toks {
        [lo, "<=", name, "<=", hi] if is_name(name) => Ok((name.to_string(), number(lo, line)?, number(hi, line)?)),
        [name, "=", v] if is_name(name) => {
            let v = number(v, line)?;
            Ok((name.to_string(), v, v))
        }
        [name, "<=", hi] if is_name(name) => Ok((name.to_string(), 0.0, number(hi, line)?)),
        [name, ">=", lo] if is_name(name) => Ok((name.to_string(), number(lo, line)?, f64::INFINITY)),
        [name, free] if is_name(name) && free.eq_ignore_ascii_case("free") => {
            Ok((name.to_string(), f64::NEG_INFINITY, f64::INFINITY))
        }
        _ => Err(err()),
    }
}
