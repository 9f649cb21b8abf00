use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use obstacle_ridge::{Dataset, PointSet};
use serde::Serialize;

use crate::CliError;

fn reader(path: &Path) -> Result<csv::Reader<File>, CliError> {
    let file = File::open(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(true)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(file))
}

/// Number of leading `x1..xd` columns, and whether a `y` column follows.
fn covariate_columns(path: &Path, headers: &csv::StringRecord) -> Result<(usize, bool), CliError> {
    let d = headers.iter().take_while(|h| h.starts_with('x')).count();
    for (j, h) in headers.iter().take(d).enumerate() {
        if h != format!("x{}", j + 1) {
            return Err(CliError::Input(format!(
                "{}: column {} is named {h:?}, expected \"x{}\"",
                path.display(),
                j + 1,
                j + 1
            )));
        }
    }
    let rest: Vec<&str> = headers.iter().skip(d).collect();
    match rest.as_slice() {
        [] => Ok((d, false)),
        ["y"] => Ok((d, true)),
        _ => Err(CliError::Input(format!(
            "{}: unexpected columns after x1..x{d}: {rest:?}",
            path.display()
        ))),
    }
}

fn parse_rows(path: &Path, rdr: &mut csv::Reader<File>, width: usize) -> Result<Vec<Vec<f64>>, CliError> {
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| CliError::Input(format!("{}: row {line}: {e}", path.display())))?;
        if rec.len() != width {
            return Err(CliError::Input(format!(
                "{}: row {line} has {} fields, expected {width}",
                path.display(),
                rec.len()
            )));
        }
        let row = rec
            .iter()
            .enumerate()
            .map(|(j, f)| match f.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(CliError::Input(format!(
                    "{}: row {line}, column {}: {f:?} is not a finite number",
                    path.display(),
                    j + 1
                ))),
            })
            .collect::<Result<Vec<f64>, _>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(CliError::Input(format!("{}: no data rows", path.display())));
    }
    Ok(rows)
}

pub fn read_dataset(path: &Path, expected_d: Option<usize>) -> Result<Dataset, CliError> {
    let mut rdr = reader(path)?;
    let headers = rdr
        .headers()
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?
        .clone();
    if headers.is_empty() {
        return Err(CliError::Input(format!("{}: empty file", path.display())));
    }
    let (d, has_y) = covariate_columns(path, &headers)?;
    if !has_y || d == 0 {
        return Err(CliError::Input(format!(
            "{}: header must be x1,...,xd,y",
            path.display()
        )));
    }
    if let Some(e) = expected_d.filter(|&e| e != d) {
        return Err(CliError::Input(format!(
            "{}: data has dimension {d}, --d is {e}",
            path.display()
        )));
    }
    let rows = parse_rows(path, &mut rdr, d + 1)?;
    let y = rows.iter().map(|r| r[d]).collect();
    let x: Vec<f64> = rows.iter().flat_map(|r| r[..d].iter().copied()).collect();
    Dataset::new(PointSet::new(d, x)?, y).map_err(CliError::from)
}

pub fn read_queries(path: &Path) -> Result<PointSet, CliError> {
    let mut rdr = reader(path)?;
    let headers = rdr
        .headers()
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?
        .clone();
    if headers.is_empty() {
        return Err(CliError::Input(format!("{}: empty file", path.display())));
    }
    let (d, has_y) = covariate_columns(path, &headers)?;
    if d == 0 {
        return Err(CliError::Input(format!(
            "{}: header must start with x1",
            path.display()
        )));
    }
    let rows = parse_rows(path, &mut rdr, d + has_y as usize)?;
    let x: Vec<f64> = rows.iter().flat_map(|r| r[..d].iter().copied()).collect();
    PointSet::new(d, x).map_err(CliError::from)
}

/// Opens `path`, or stdout when `None`.
pub fn sink(path: Option<&Path>) -> Result<Box<dyn Write>, CliError> {
    Ok(match path {
        Some(p) => {
            Box::new(BufWriter::new(File::create(p).map_err(|e| {
                CliError::Input(format!("cannot create {}: {e}", p.display()))
            })?))
        }
        None => Box::new(BufWriter::new(io::stdout())),
    })
}

/// Writes the configuration echo as `#`-prefixed comment lines.
pub fn write_config_comment(w: &mut dyn Write, config: &impl Serialize) -> Result<(), CliError> {
    let json = serde_json::to_string(config).map_err(|e| CliError::Internal(e.to_string()))?;
    writeln!(w, "# config: {json}")?;
    Ok(())
}

pub fn write_json(w: &mut dyn Write, value: &impl Serialize) -> Result<(), CliError> {
    serde_json::to_writer_pretty(&mut *w, value).map_err(|e| CliError::Internal(e.to_string()))?;
    writeln!(w)?;
    Ok(())
}
