//! LP-format text export, plus a minimal reference parser used to validate
//! round-trips and to hand models to external solvers.

use super::model::{MilpModel, Sense, VarKind};
use super::MilpError;

/// Supported export formats.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExportFormat {
    LpText,
}

/// Emits the model in CPLEX LP text format. Variables are named `x{j}` and
/// constraints `c{i}` in declaration order, so the output is deterministic.
pub fn export_model(model: &MilpModel, format: ExportFormat) -> Result<String, MilpError> {
    match format {
        ExportFormat::LpText => {}
    }
    let mut out = String::new();
    out.push_str("\\ generated by polytree\n");
    out.push_str("Minimize\n obj:");
    if model.objective.terms.is_empty() && model.objective.constant == 0.0 {
        out.push_str(" 0 x0");
        if model.vars.is_empty() {
            // A truly empty model still needs a syntactically valid objective.
            out = out.trim_end_matches(" 0 x0").to_string();
        }
    } else {
        for &(v, c) in &model.objective.terms {
            push_term(&mut out, c, v.index());
        }
        if model.objective.constant != 0.0 {
            out.push_str(&format!(
                " {} {}",
                if model.objective.constant >= 0.0 { "+" } else { "-" },
                fmt_num(model.objective.constant.abs())
            ));
        }
    }
    out.push('\n');
    out.push_str("Subject To\n");
    for (i, c) in model.constrs.iter().enumerate() {
        out.push_str(&format!(" c{}:", i));
        if c.expr.terms.is_empty() {
            out.push_str(" 0 x0");
        }
        for &(v, coef) in &c.expr.terms {
            push_term(&mut out, coef, v.index());
        }
        let op = match c.sense {
            Sense::Le => "<=",
            Sense::Eq => "=",
        };
        out.push_str(&format!(" {} {}\n", op, fmt_num(c.rhs)));
    }
    out.push_str("Bounds\n");
    for (j, v) in model.vars.iter().enumerate() {
        let name = format!("x{}", j);
        match (v.lo.is_finite(), v.hi.is_finite()) {
            (true, true) => out.push_str(&format!(" {} <= {} <= {}\n", fmt_num(v.lo), name, fmt_num(v.hi))),
            (true, false) => out.push_str(&format!(" {} >= {}\n", name, fmt_num(v.lo))),
            (false, true) => out.push_str(&format!(" {} <= {}\n", name, fmt_num(v.hi))),
            (false, false) => out.push_str(&format!(" {} free\n", name)),
        }
    }
    let binaries: Vec<String> = model
        .vars
        .iter()
        .enumerate()
        .filter(|(_, v)| v.kind == VarKind::Binary)
        .map(|(j, _)| format!("x{}", j))
        .collect();
    if !binaries.is_empty() {
        out.push_str("Binary\n ");
        out.push_str(&binaries.join(" "));
        out.push('\n');
    }
    out.push_str("End\n");
    Ok(out)
}

fn push_term(out: &mut String, coef: f64, idx: usize) {
    let sign = if coef >= 0.0 { "+" } else { "-" };
    out.push_str(&format!(" {} {} x{}", sign, fmt_num(coef.abs()), idx));
}

fn fmt_num(v: f64) -> String {
    // Shortest round-trip representation keeps the export bit-faithful.
    format!("{}", v)
}

/// Parsed LP-format model: dense rows over the declared variable set.
#[derive(Debug, Default, PartialEq)]
pub struct ParsedLp {
    pub n_vars: usize,
    pub objective: Vec<(usize, f64)>,
    pub objective_constant: f64,
    pub rows: Vec<(Vec<(usize, f64)>, Sense, f64)>,
    pub bounds: Vec<(f64, f64)>,
    pub binaries: Vec<usize>,
}

/// Minimal LP-format reader for `x{j}`-named files as produced by
/// [`export_model`]. Intended as a reference re-import, not a general parser.
pub fn parse_lp_text(text: &str) -> Result<ParsedLp, MilpError> {
    #[derive(PartialEq)]
    enum Section {
        Preamble,
        Objective,
        Constraints,
        Bounds,
        Binary,
        Done,
    }
    let mut section = Section::Preamble;
    let mut parsed = ParsedLp::default();
    let mut max_var = None::<usize>;
    let mut pending = String::new();
    let mut touch = |parsed: &mut ParsedLp, max_var: &mut Option<usize>, j: usize| {
        *max_var = Some(max_var.map_or(j, |m: usize| m.max(j)));
        if parsed.bounds.len() <= j {
            parsed.bounds.resize(j + 1, (0.0, f64::INFINITY));
        }
    };
    for raw in text.lines() {
        let line = raw.split('\\').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let lower = line.to_ascii_lowercase();
        let new_section = match lower.as_str() {
            "minimize" | "min" => Some(Section::Objective),
            "subject to" | "st" | "s.t." => Some(Section::Constraints),
            "bounds" => Some(Section::Bounds),
            "binary" | "binaries" => Some(Section::Binary),
            "end" => Some(Section::Done),
            _ => None,
        };
        if let Some(s) = new_section {
            if matches!(section, Section::Constraints) && !pending.is_empty() {
                parse_row(&pending, &mut parsed, &mut max_var, &mut touch)?;
                pending.clear();
            }
            section = s;
            continue;
        }
        match section {
            Section::Preamble | Section::Done => {}
            Section::Objective => {
                let body = line.split_once(':').map(|(_, b)| b).unwrap_or(line);
                let (terms, constant) = parse_linear(body, &mut parsed, &mut max_var, &mut touch)?;
                parsed.objective.extend(terms);
                parsed.objective_constant += constant;
            }
            Section::Constraints => {
                pending.push(' ');
                pending.push_str(line);
                if line.contains("<=") || line.contains(">=") || line.contains('=') {
                    parse_row(&pending, &mut parsed, &mut max_var, &mut touch)?;
                    pending.clear();
                }
            }
            Section::Bounds => {
                parse_bound(line, &mut parsed, &mut max_var, &mut touch)?;
            }
            Section::Binary => {
                for tok in line.split_whitespace() {
                    let j = var_index(tok)?;
                    touch(&mut parsed, &mut max_var, j);
                    parsed.binaries.push(j);
                    parsed.bounds[j] = (0.0, 1.0);
                }
            }
        }
    }
    parsed.n_vars = max_var.map_or(0, |m| m + 1);
    Ok(parsed)
}

fn var_index(tok: &str) -> Result<usize, MilpError> {
    tok.strip_prefix('x')
        .and_then(|s| s.parse::<usize>().ok())
        .ok_or(MilpError::UnsupportedFormat)
}

type Touch = dyn FnMut(&mut ParsedLp, &mut Option<usize>, usize);

fn parse_linear(
    body: &str,
    parsed: &mut ParsedLp,
    max_var: &mut Option<usize>,
    touch: &mut Touch,
) -> Result<(Vec<(usize, f64)>, f64), MilpError> {
    let mut terms = Vec::new();
    let mut constant = 0.0;
    let mut sign = 1.0;
    let mut coef: Option<f64> = None;
    for tok in body.split_whitespace() {
        match tok {
            "+" => {
                if let Some(c) = coef.take() {
                    constant += sign * c;
                }
                sign = 1.0;
            }
            "-" => {
                if let Some(c) = coef.take() {
                    constant += sign * c;
                }
                sign = -1.0;
            }
            t if t.starts_with('x') => {
                let j = var_index(t)?;
                touch(parsed, max_var, j);
                terms.push((j, sign * coef.take().unwrap_or(1.0)));
                sign = 1.0;
            }
            t => {
                let v: f64 = t.parse().map_err(|_| MilpError::UnsupportedFormat)?;
                if let Some(c) = coef.take() {
                    constant += sign * c;
                    sign = 1.0;
                }
                coef = Some(v);
            }
        }
    }
    if let Some(c) = coef {
        constant += sign * c;
    }
    Ok((terms, constant))
}

fn parse_row(
    line: &str,
    parsed: &mut ParsedLp,
    max_var: &mut Option<usize>,
    touch: &mut Touch,
) -> Result<(), MilpError> {
    let body = line.split_once(':').map(|(_, b)| b).unwrap_or(line);
    let (op, sense) = if body.contains("<=") {
        ("<=", Sense::Le)
    } else if body.contains(">=") {
        (">=", Sense::Le) // normalized by negation below
    } else {
        ("=", Sense::Eq)
    };
    let (lhs, rhs) = body.split_once(op).ok_or(MilpError::UnsupportedFormat)?;
    let (mut terms, constant) = parse_linear(lhs, parsed, max_var, touch)?;
    let rhs: f64 = rhs.trim().parse().map_err(|_| MilpError::UnsupportedFormat)?;
    let mut rhs = rhs - constant;
    if op == ">=" {
        for t in &mut terms {
            t.1 = -t.1;
        }
        rhs = -rhs;
    }
    parsed.rows.push((terms, sense, rhs));
    Ok(())
}

fn parse_bound(
    line: &str,
    parsed: &mut ParsedLp,
    max_var: &mut Option<usize>,
    touch: &mut Touch,
) -> Result<(), MilpError> {
    let toks: Vec<&str> = line.split_whitespace().collect();
    match toks.as_slice() {
        [name, "free"] => {
            let j = var_index(name)?;
            touch(parsed, max_var, j);
            parsed.bounds[j] = (f64::NEG_INFINITY, f64::INFINITY);
        }
        [lo, "<=", name, "<=", hi] => {
            let j = var_index(name)?;
            touch(parsed, max_var, j);
            parsed.bounds[j] = (
                lo.parse().map_err(|_| MilpError::UnsupportedFormat)?,
                hi.parse().map_err(|_| MilpError::UnsupportedFormat)?,
            );
        }
        [name, ">=", lo] => {
            let j = var_index(name)?;
            touch(parsed, max_var, j);
            parsed.bounds[j].0 = lo.parse().map_err(|_| MilpError::UnsupportedFormat)?;
            parsed.bounds[j].1 = f64::INFINITY;
        }
        [name, "<=", hi] => {
            let j = var_index(name)?;
            touch(parsed, max_var, j);
            parsed.bounds[j].0 = f64::NEG_INFINITY;
            parsed.bounds[j].1 = hi.parse().map_err(|_| MilpError::UnsupportedFormat)?;
        }
        _ => return Err(MilpError::UnsupportedFormat),
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::milp::model::{LinExpr, MilpModel};

    #[test]
    fn single_variable_has_bound_line() {
        let mut m = MilpModel::new();
        let x = m.add_variable(-1.0, 2.0).unwrap();
        m.set_objective(LinExpr::var(x)).unwrap();
        let text = export_model(&m, ExportFormat::LpText).unwrap();
        assert!(text.contains("-1 <= x0 <= 2"));
    }

    #[test]
    fn empty_model_is_minimal_valid_file() {
        let m = MilpModel::new();
        let text = export_model(&m, ExportFormat::LpText).unwrap();
        assert!(text.contains("Minimize"));
        assert!(text.contains("End"));
        let parsed = parse_lp_text(&text).unwrap();
        assert_eq!(parsed.n_vars, 0);
        assert!(parsed.rows.is_empty());
    }

    #[test]
    fn round_trip_reproduces_constraint_matrix() {
        let mut m = MilpModel::new();
        let a = m.add_binary().unwrap();
        let b = m.add_binary().unwrap();
        let x = m.add_variable(-0.5, 3.5).unwrap();
        let mut e = LinExpr::new();
        e.add_term(a, 1.0).add_term(b, 1.0).add_term(x, -0.25);
        m.add_le(e, 1.0).unwrap();
        let mut e2 = LinExpr::new();
        e2.add_term(x, 2.0).add_term(a, -1.0);
        m.add_eq(e2, 0.75).unwrap();
        let mut obj = LinExpr::new();
        obj.add_term(a, -3.0).add_term(b, -2.0).add_term(x, 0.1);
        m.set_objective(obj).unwrap();

        let text = export_model(&m, ExportFormat::LpText).unwrap();
        let parsed = parse_lp_text(&text).unwrap();
        assert_eq!(parsed.n_vars, 3);
        assert_eq!(parsed.rows.len(), 2);
        assert_eq!(parsed.binaries, vec![0, 1]);
        // Dense compare of the constraint matrix.
        for (row, (terms, sense, rhs)) in m.constrs.iter().zip(&parsed.rows) {
            assert_eq!(row.sense, *sense);
            assert!((row.rhs - rhs).abs() < 1e-12);
            let mut dense_a = vec![0.0; 3];
            for &(v, c) in &row.expr.terms {
                dense_a[v.index()] += c;
            }
            let mut dense_b = vec![0.0; 3];
            for &(j, c) in terms {
                dense_b[j] += c;
            }
            assert_eq!(dense_a, dense_b);
        }
        assert_eq!(parsed.bounds[2], (-0.5, 3.5));
    }
}
