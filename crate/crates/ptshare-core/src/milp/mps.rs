//! Free-format MPS export and a matching reader.
//!
//! Binaries are declared with `BV` bound entries rather than integer markers.
//! A constant objective term is written as the negated RHS of the objective
//! row, the usual convention for solvers that accept it.

use std::fmt::Write as _;

use super::model::{Model, Sense, VarKind};
use crate::error::{Error, Result};

const OBJ_ROW: &str = "OBJ";

fn check_name(name: &str) -> Result<()> {
    if name.is_empty() || name.chars().any(char::is_whitespace) || name == OBJ_ROW {
        return Err(Error::Model(format!("name `{name}` cannot be written to MPS")));
    }
    Ok(())
}

/// Writes `model` in free MPS. Numbers use the shortest round-trip decimal
/// form, so output is byte-deterministic and re-reads exactly.
pub fn write_mps(model: &Model) -> Result<String> {
    for v in &model.vars {
        check_name(&v.name)?;
    }
    for c in &model.cons {
        check_name(&c.name)?;
    }
    let mut by_col: Vec<Vec<(usize, f64)>> = vec![Vec::new(); model.num_vars()];
    for (i, c) in model.cons.iter().enumerate() {
        for &(j, a) in &c.coeffs {
            by_col[j].push((i, a));
        }
    }
    let mut out = String::new();
    let name = if model.name.is_empty() { "MODEL" } else { &model.name };
    writeln!(out, "NAME {}", name.replace(char::is_whitespace, "_")).unwrap();
    out.push_str("ROWS\n");
    writeln!(out, " N {OBJ_ROW}").unwrap();
    for c in &model.cons {
        let t = match c.sense {
            Sense::Le => "L",
            Sense::Ge => "G",
            Sense::Eq => "E",
        };
        writeln!(out, " {t} {}", c.name).unwrap();
    }
    out.push_str("COLUMNS\n");
    for (j, v) in model.vars.iter().enumerate() {
        let c = model.objective[j];
        if c != 0.0 {
            writeln!(out, " {} {OBJ_ROW} {c:?}", v.name).unwrap();
        }
        for &(i, a) in &by_col[j] {
            writeln!(out, " {} {} {a:?}", v.name, model.cons[i].name).unwrap();
        }
        if c == 0.0 && by_col[j].is_empty() {
            writeln!(out, " {} {OBJ_ROW} 0.0", v.name).unwrap();
        }
    }
    out.push_str("RHS\n");
    if model.obj_offset != 0.0 {
        writeln!(out, " RHS {OBJ_ROW} {:?}", -model.obj_offset).unwrap();
    }
    for c in &model.cons {
        if c.rhs != 0.0 {
            writeln!(out, " RHS {} {:?}", c.name, c.rhs).unwrap();
        }
    }
    out.push_str("BOUNDS\n");
    for v in &model.vars {
        let (l, h) = (v.lower, v.upper);
        if v.kind == VarKind::Binary {
            writeln!(out, " BV BND {}", v.name).unwrap();
            if l == h {
                writeln!(out, " FX BND {} {l:?}", v.name).unwrap();
            }
            continue;
        }
        if l == h {
            writeln!(out, " FX BND {} {l:?}", v.name).unwrap();
            continue;
        }
        match (l.is_finite(), h.is_finite()) {
            (false, false) => writeln!(out, " FR BND {}", v.name).unwrap(),
            (false, true) => {
                writeln!(out, " MI BND {}", v.name).unwrap();
                writeln!(out, " UP BND {} {h:?}", v.name).unwrap();
            }
            (true, _) => {
                if l != 0.0 {
                    writeln!(out, " LO BND {} {l:?}", v.name).unwrap();
                }
                if h.is_finite() {
                    writeln!(out, " UP BND {} {h:?}", v.name).unwrap();
                }
            }
        }
    }
    out.push_str("ENDATA\n");
    Ok(out)
}

#[derive(Clone, Copy, PartialEq)]
enum Section {
    None,
    Rows,
    Columns,
    Rhs,
    Bounds,
}

fn num(tok: &str, line: usize) -> Result<f64> {
    tok.parse::<f64>()
        .map_err(|_| Error::Parse(format!("MPS line {line}: bad number `{tok}`")))
}

/// Reads free MPS as produced by [`write_mps`] (and the common subset of
/// other writers: N/L/G/E rows, RHS, LO/UP/FX/FR/MI/PL/BV bounds).
pub fn read_mps(text: &str) -> Result<Model> {
    let mut model = Model::new("MODEL");
    let mut section = Section::None;
    let mut obj_name = String::new();
    let mut rows: Vec<(String, Sense)> = Vec::new();
    let mut row_index = std::collections::HashMap::new();
    let mut entries: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut rhs: Vec<f64> = Vec::new();
    let mut var_index = std::collections::HashMap::new();
    for (ln, raw) in text.lines().enumerate() {
        let ln = ln + 1;
        let line = raw.trim_end();
        if line.trim().is_empty() || line.starts_with('*') {
            continue;
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        if !raw.starts_with(' ') && !raw.starts_with('\t') {
            section = match toks[0] {
                "NAME" => {
                    if let Some(n) = toks.get(1) {
                        model.name = (*n).to_string();
                    }
                    Section::None
                }
                "ROWS" => Section::Rows,
                "COLUMNS" => Section::Columns,
                "RHS" => Section::Rhs,
                "BOUNDS" => Section::Bounds,
                "ENDATA" => break,
                other => {
                    return Err(Error::Parse(format!(
                        "MPS line {ln}: unsupported section `{other}`"
                    )))
                }
            };
            continue;
        }
        let bad = || Error::Parse(format!("MPS line {ln}: malformed entry"));
        match section {
            Section::Rows => {
                if toks.len() != 2 {
                    return Err(bad());
                }
                let sense = match toks[0] {
                    "N" => {
                        if obj_name.is_empty() {
                            obj_name = toks[1].to_string();
                        }
                        continue;
                    }
                    "L" => Sense::Le,
                    "G" => Sense::Ge,
                    "E" => Sense::Eq,
                    _ => return Err(bad()),
                };
                row_index.insert(toks[1].to_string(), rows.len());
                rows.push((toks[1].to_string(), sense));
                entries.push(Vec::new());
                rhs.push(0.0);
            }
            Section::Columns => {
                if toks.len() != 3 && toks.len() != 5 {
                    return Err(bad());
                }
                let j = match var_index.get(toks[0]) {
                    Some(&j) => j,
                    None => {
                        let j = model.cont(toks[0], 0.0, f64::INFINITY)?;
                        var_index.insert(toks[0].to_string(), j);
                        j
                    }
                };
                for pair in toks[1..].chunks(2) {
                    let v = num(pair[1], ln)?;
                    if pair[0] == obj_name {
                        model.add_objective(j, v);
                    } else {
                        let i = *row_index.get(pair[0]).ok_or_else(|| {
                            Error::Parse(format!("MPS line {ln}: unknown row `{}`", pair[0]))
                        })?;
                        entries[i].push((j, v));
                    }
                }
            }
            Section::Rhs => {
                if toks.len() != 3 && toks.len() != 5 {
                    return Err(bad());
                }
                for pair in toks[1..].chunks(2) {
                    let v = num(pair[1], ln)?;
                    if pair[0] == obj_name {
                        model.obj_offset = -v;
                    } else {
                        let i = *row_index.get(pair[0]).ok_or_else(|| {
                            Error::Parse(format!("MPS line {ln}: unknown row `{}`", pair[0]))
                        })?;
                        rhs[i] = v;
                    }
                }
            }
            Section::Bounds => {
                if toks.len() < 3 {
                    return Err(bad());
                }
                let j = *var_index.get(toks[2]).ok_or_else(|| {
                    Error::Parse(format!("MPS line {ln}: unknown column `{}`", toks[2]))
                })?;
                let value = || -> Result<f64> { num(toks.get(3).ok_or_else(bad)?, ln) };
                let v = &mut model.vars[j];
                match toks[0] {
                    "LO" => v.lower = value()?,
                    "UP" => v.upper = value()?,
                    "FX" => {
                        let x = value()?;
                        v.lower = x;
                        v.upper = x;
                    }
                    "FR" => {
                        v.lower = f64::NEG_INFINITY;
                        v.upper = f64::INFINITY;
                    }
                    "MI" => v.lower = f64::NEG_INFINITY,
                    "PL" => v.upper = f64::INFINITY,
                    "BV" => {
                        v.kind = VarKind::Binary;
                        v.lower = 0.0;
                        v.upper = 1.0;
                    }
                    other => {
                        return Err(Error::Parse(format!(
                            "MPS line {ln}: unsupported bound type `{other}`"
                        )))
                    }
                }
            }
            Section::None => return Err(bad()),
        }
    }
    for (i, (name, sense)) in rows.into_iter().enumerate() {
        model.add_constraint(name, &entries[i], sense, rhs[i])?;
    }
    for v in &model.vars {
        if v.lower > v.upper {
            return Err(Error::Parse(format!("MPS column `{}` has crossed bounds", v.name)));
        }
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Model {
        let mut m = Model::new("sample");
        let x = m.cont("x", -1.5, 4.0).unwrap();
        let y = m.cont("y", f64::NEG_INFINITY, f64::INFINITY).unwrap();
        let z = m.binary("z", 1).unwrap();
        let w = m.cont("w", 0.0, f64::INFINITY).unwrap();
        m.add_constraint("r1", &[(x, 1.0), (y, 0.1)], Sense::Le, 3.0).unwrap();
        m.add_constraint("r2", &[(y, 1.0), (z, -2.5)], Sense::Eq, 0.0).unwrap();
        m.add_constraint("r3", &[(w, 1.0), (x, 1.0)], Sense::Ge, 1.0 / 3.0).unwrap();
        m.set_objective(x, 2.0);
        m.set_objective(z, -0.7);
        m.obj_offset = 12.25;
        m
    }

    #[test]
    fn round_trip_is_exact() {
        let m = sample();
        let text = write_mps(&m).unwrap();
        assert!(text.contains(" BV BND z\n"));
        let back = read_mps(&text).unwrap();
        assert_eq!(back.num_vars(), m.num_vars());
        assert_eq!(back.num_cons(), m.num_cons());
        for (a, b) in m.vars.iter().zip(&back.vars) {
            assert_eq!(a.name, b.name);
            assert_eq!(a.kind, b.kind);
            assert_eq!(a.lower, b.lower);
            assert_eq!(a.upper, b.upper);
        }
        for (a, b) in m.cons.iter().zip(&back.cons) {
            assert_eq!(a.coeffs, b.coeffs);
            assert_eq!(a.rhs, b.rhs);
            assert_eq!(a.sense, b.sense);
        }
        assert_eq!(m.objective, back.objective);
        assert_eq!(m.obj_offset, back.obj_offset);
        assert_eq!(write_mps(&back).unwrap().replace("NAME sample", ""), text.replace("NAME sample", ""));
    }

    #[test]
    fn rejects_names_with_spaces() {
        let mut m = Model::new("s");
        m.cont("bad name", 0.0, 1.0).unwrap();
        assert!(write_mps(&m).is_err());
    }

    #[test]
    fn unknown_row_is_an_error() {
        let text = "NAME t\nROWS\n N OBJ\nCOLUMNS\n x r9 1.0\nENDATA\n";
        assert!(read_mps(text).is_err());
    }
}
