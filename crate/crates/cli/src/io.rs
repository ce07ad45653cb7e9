//! Delimiter-separated numeric file ingestion and curve export.
//!
//! Sample and score files are UTF-8 text with a header row, one draw per
//! line, comma- or tab-delimited (the header decides which). A column named
//! `chain` marks draws as MCMC output and carries integer chain ids; every
//! other column is a parameter coordinate. Cells must parse as finite
//! numbers; rejections name the data row and column.

use std::path::Path;

use nalgebra::DMatrix;

use fd_sense_core::{PrecomputedScores, SampleOrigin, SampleSet};

use crate::report::Curve;
use crate::{CliError, CliResult};

struct ParsedTable {
    header: Vec<String>,
    rows: Vec<Vec<f64>>,
    chain_col: Option<usize>,
    chain_ids: Vec<u32>,
}

fn parse_table(path: &Path) -> CliResult<ParsedTable> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header_line = lines
        .next()
        .ok_or_else(|| CliError::Config(format!("{}: file is empty", path.display())))?;
    let delimiter = if header_line.contains('\t') {
        '\t'
    } else {
        ','
    };
    let header: Vec<String> = header_line
        .split(delimiter)
        .map(|s| s.trim().to_string())
        .collect();
    if header.iter().any(|h| h.is_empty()) {
        return Err(CliError::Config(format!(
            "{}: header has an empty column name",
            path.display()
        )));
    }
    let chain_col = header.iter().position(|h| h == "chain");

    let mut rows = Vec::new();
    let mut chain_ids = Vec::new();
    for (line_idx, line) in lines.enumerate() {
        let row_no = line_idx + 1; // 1-based data row
        let cells: Vec<&str> = line.split(delimiter).map(str::trim).collect();
        if cells.len() != header.len() {
            return Err(CliError::Config(format!(
                "{}: row {row_no} has {} cells, header has {}",
                path.display(),
                cells.len(),
                header.len()
            )));
        }
        let mut row = Vec::with_capacity(header.len());
        for (col_idx, cell) in cells.iter().enumerate() {
            if Some(col_idx) == chain_col {
                let id: u32 = cell.parse().map_err(|_| {
                    CliError::Config(format!(
                        "{}: non-integer chain id \"{cell}\" at row {row_no}, column {} (\"chain\")",
                        path.display(),
                        col_idx + 1
                    ))
                })?;
                chain_ids.push(id);
                continue;
            }
            let value: f64 = cell.parse().map_err(|_| {
                CliError::Config(format!(
                    "{}: non-numeric cell \"{cell}\" at row {row_no}, column {} (\"{}\")",
                    path.display(),
                    col_idx + 1,
                    header[col_idx]
                ))
            })?;
            if !value.is_finite() {
                return Err(CliError::Config(format!(
                    "{}: non-finite cell \"{cell}\" at row {row_no}, column {} (\"{}\")",
                    path.display(),
                    col_idx + 1,
                    header[col_idx]
                )));
            }
            row.push(value);
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(CliError::Config(format!(
            "{}: no data rows after the header",
            path.display()
        )));
    }
    Ok(ParsedTable {
        header,
        rows,
        chain_col,
        chain_ids,
    })
}

fn to_matrix(table: &ParsedTable) -> DMatrix<f64> {
    let m = table.rows.len();
    let d = table.rows[0].len();
    DMatrix::from_fn(m, d, |i, j| table.rows[i][j])
}

/// Loads reference-posterior draws. Presence of a `chain` column marks the
/// draws as MCMC output.
pub fn load_samples(path: &Path) -> CliResult<SampleSet> {
    let table = parse_table(path)?;
    if table.rows[0].is_empty() {
        return Err(CliError::Config(format!(
            "{}: file has no parameter columns",
            path.display()
        )));
    }
    let draws = to_matrix(&table);
    let (origin, chains) = if table.chain_col.is_some() {
        (SampleOrigin::Mcmc, Some(table.chain_ids.clone()))
    } else {
        (SampleOrigin::Iid, None)
    };
    SampleSet::with_chains(draws, origin, chains)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// Loads a score matrix and checks it against the expected shape.
pub fn load_score_matrix(
    path: &Path,
    expected_m: usize,
    expected_d: usize,
) -> CliResult<PrecomputedScores> {
    let table = parse_table(path)?;
    if table.chain_col.is_some() {
        return Err(CliError::Config(format!(
            "{}: score matrices must not carry a chain column",
            path.display()
        )));
    }
    let m = table.rows.len();
    let d = table.rows[0].len();
    if m != expected_m {
        return Err(CliError::Config(format!(
            "{}: shape mismatch: expected m={expected_m}, found {m}",
            path.display()
        )));
    }
    if d != expected_d {
        return Err(CliError::Config(format!(
            "{}: shape mismatch: expected d={expected_d}, found {d}",
            path.display()
        )));
    }
    let label = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "scores".to_string());
    PrecomputedScores::new(to_matrix(&table), label)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// Writes curves as comma-separated text: two columns per curve, named
/// `{name}` (the hyperparameter grid) and `{name}_fd`. All curves must have
/// the same number of points. Values use the shortest round-trip decimal
/// form, so re-ingesting reproduces them bitwise.
pub fn export_curves(curves: &[Curve], path: &Path) -> CliResult<()> {
    if curves.is_empty() {
        return Err(CliError::Config("no curves requested".into()));
    }
    let n = curves[0].points.len();
    if curves.iter().any(|c| c.points.len() != n) {
        return Err(CliError::Config(
            "curves have differing point counts and cannot share one file".into(),
        ));
    }
    let mut out = String::new();
    let header: Vec<String> = curves
        .iter()
        .flat_map(|c| [c.name.clone(), format!("{}_fd", c.name)])
        .collect();
    out.push_str(&header.join(","));
    out.push('\n');
    for i in 0..n {
        let row: Vec<String> = curves
            .iter()
            .flat_map(|c| [format!("{}", c.points[i][0]), format!("{}", c.points[i][1])])
            .collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// Reads back a curves file written by [`export_curves`].
pub fn import_curves(path: &Path) -> CliResult<Vec<Curve>> {
    let table = parse_table(path)?;
    if table.header.len() % 2 != 0 {
        return Err(CliError::Config(format!(
            "{}: curve files need an even number of columns",
            path.display()
        )));
    }
    let mut curves = Vec::new();
    for pair in 0..table.header.len() / 2 {
        let name = table.header[2 * pair].clone();
        let points = table
            .rows
            .iter()
            .map(|r| [r[2 * pair], r[2 * pair + 1]])
            .collect();
        curves.push(Curve { name, points });
    }
    Ok(curves)
}
