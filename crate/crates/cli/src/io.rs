//! Pattern and curve file formats.
//!
//! Pattern files are whitespace-separated text: `#` comments, one
//! `window x0 x1 y0 y1` header, then one `x y [mark]` line per point.
//! Curve files are CSV with header `r,obs,sim1,...,simS`.

use std::fmt::Write as _;
use std::path::Path;

use genvtest::{FunctionalSample, Grid, Point, PointPattern, Window};

use crate::CliError;

fn parse_num(tok: &str, line: usize, what: &str) -> Result<f64, CliError> {
    let v: f64 = tok
        .parse()
        .map_err(|_| CliError::parse(line, format!("{what} {tok:?} is not a number")))?;
    if !v.is_finite() {
        return Err(CliError::parse(line, format!("{what} {tok:?} is not finite")));
    }
    Ok(v)
}

pub fn parse_pattern(text: &str) -> Result<PointPattern, CliError> {
    let mut window = None;
    let mut points = Vec::new();
    let mut marks = Vec::new();
    let mut marked = None;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.trim();
        if content.is_empty() || content.starts_with('#') {
            continue;
        }
        let toks: Vec<&str> = content.split_whitespace().collect();
        let Some(w) = window else {
            if toks[0] != "window" || toks.len() != 5 {
                return Err(CliError::parse(line, "expected header `window x0 x1 y0 y1`"));
            }
            let v = toks[1..]
                .iter()
                .map(|t| parse_num(t, line, "window bound"))
                .collect::<Result<Vec<_>, _>>()?;
            window = Some(Window::new(v[0], v[1], v[2], v[3]).map_err(|e| CliError::parse(line, e.to_string()))?);
            continue;
        };
        let has_mark = match toks.len() {
            2 => false,
            3 => true,
            n => return Err(CliError::parse(line, format!("expected `x y [mark]`, found {n} fields"))),
        };
        if *marked.get_or_insert(has_mark) != has_mark {
            return Err(CliError::parse(line, "mark column present on some lines only"));
        }
        let p = Point::new(parse_num(toks[0], line, "x")?, parse_num(toks[1], line, "y")?);
        if !w.contains(&p) {
            return Err(CliError::parse(line, format!("point ({}, {}) lies outside the window", p.x, p.y)));
        }
        points.push(p);
        if has_mark {
            marks.push(parse_num(toks[2], line, "mark")?);
        }
    }
    let window = window.ok_or_else(|| CliError::parse(0, "missing `window` header"))?;
    let pattern = PointPattern::new(points, window)?;
    Ok(if marked == Some(true) { pattern.with_marks(marks)? } else { pattern })
}

pub fn ingest_pattern(path: &Path) -> Result<PointPattern, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_pattern(&text).map_err(|e| e.in_file(path))
}

/// Text form accepted by [`parse_pattern`]; numbers round-trip exactly.
pub fn emit_pattern(pattern: &PointPattern) -> String {
    let w = pattern.window();
    let mut out = format!("window {} {} {} {}\n", w.x0, w.x1, w.y0, w.y1);
    for (i, p) in pattern.points().iter().enumerate() {
        match pattern.marks() {
            Some(m) => writeln!(out, "{} {} {}", p.x, p.y, m[i]),
            None => writeln!(out, "{} {}", p.x, p.y),
        }
        .expect("writing to a String");
    }
    out
}

pub fn parse_curves(text: &str) -> Result<FunctionalSample, CliError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let header = rdr.headers().map_err(|e| CliError::parse(1, e.to_string()))?.clone();
    if header.len() < 3 || &header[0] != "r" || &header[1] != "obs" {
        return Err(CliError::parse(1, "expected header `r,obs,sim1,...`"));
    }
    let n_curves = header.len() - 1;
    let mut r = Vec::new();
    let mut rows: Vec<Vec<f64>> = vec![Vec::new(); n_curves];
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            CliError::parse(line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        r.push(parse_num(&rec[0], line, "r")?);
        for (c, row) in rows.iter_mut().enumerate() {
            row.push(parse_num(&rec[c + 1], line, &header[c + 1])?);
        }
    }
    if let Some(k) = r.windows(2).position(|w| w[1] <= w[0]) {
        return Err(CliError::parse(k + 3, "r values must be strictly increasing"));
    }
    let grid = Grid::new(r).map_err(|e| CliError::parse(2, e.to_string()))?;
    Ok(FunctionalSample::from_rows(grid, rows)?)
}

pub fn ingest_curves(path: &Path) -> Result<FunctionalSample, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_curves(&text).map_err(|e| e.in_file(path))
}

/// Curves CSV for [`parse_curves`].
pub fn emit_curves(sample: &FunctionalSample) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["r".to_string(), "obs".to_string()];
    header.extend((1..=sample.n_sim()).map(|i| format!("sim{i}")));
    w.write_record(&header).expect("in-memory write");
    for (j, r) in sample.grid().values().iter().enumerate() {
        let mut rec = vec![r.to_string()];
        rec.extend(sample.curves().map(|c| c[j].to_string()));
        w.write_record(&rec).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ascii")
}

/// Envelope table: `r,lower,central,upper,observed`.
pub fn emit_envelope(
    grid: &Grid,
    lower: &[f64],
    central: Option<&[f64]>,
    upper: &[f64],
    observed: &[f64],
) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["r", "lower", "central", "upper", "observed"]).expect("in-memory write");
    for (j, r) in grid.values().iter().enumerate() {
        let central = central.map_or(String::new(), |c| c[j].to_string());
        w.write_record([r.to_string(), lower[j].to_string(), central, upper[j].to_string(), observed[j].to_string()])
            .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ascii")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_point() {
        let p = parse_pattern("# demo\nwindow 0 1 0 1\n0.5 0.5\n").unwrap();
        assert_eq!(p.len(), 1);
        assert!(p.marks().is_none());
    }

    #[test]
    fn inconsistent_marks_report_line() {
        let err = parse_pattern("window 0 1 0 1\n0.1 0.1 2\n\n0.2 0.2\n").unwrap_err();
        assert!(matches!(err, CliError::Parse { line: 4, .. }), "{err}");
    }

    #[test]
    fn outside_point_and_bad_header() {
        assert!(matches!(parse_pattern("window 0 1 0 1\n1.5 0.5\n"), Err(CliError::Parse { line: 2, .. })));
        assert!(matches!(parse_pattern("0.5 0.5\n"), Err(CliError::Parse { line: 1, .. })));
        assert!(matches!(parse_pattern("window 0 1 0 1\n0.5 abc\n"), Err(CliError::Parse { line: 2, .. })));
        assert!(parse_pattern("# nothing\n").is_err());
    }

    #[test]
    fn curves_basic_and_errors() {
        let s = parse_curves("r,obs,sim1,sim2\n0.1,1,2,3\n0.2,2,3,4\n0.3,3,4,5\n").unwrap();
        assert_eq!((s.n_sim(), s.n_points()), (2, 3));
        assert_eq!(s.observed(), &[1.0, 2.0, 3.0]);
        assert!(matches!(
            parse_curves("r,obs,sim1\n0.2,1,2\n0.1,1,2\n"),
            Err(CliError::Parse { line: 3, .. })
        ));
        assert!(matches!(parse_curves("r,obs,sim1\n0.1,1,2\n0.2,1\n"), Err(CliError::Parse { line: 3, .. })));
        assert!(matches!(parse_curves("r,obs,sim1\n0.1,1,inf\n"), Err(CliError::Parse { line: 2, .. })));
        assert!(parse_curves("x,obs,sim1\n0.1,1,2\n").is_err());
    }
}
