//! Plain-text grid files: a `# nx ny x0 y0 hx hy` header followed by `ny`
//! lines of `nx` comma-separated values (one line per fixed y).

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::GridSpec;

/// Fixed 17-significant-digit formatting so repeated runs write identical bytes.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn grid_header(grid: &GridSpec) -> String {
    format!("# {} {} {} {} {} {}", grid.nx, grid.ny, grid.x0, grid.y0, grid.hx, grid.hy)
}

pub fn parse_grid_header(line: &str) -> Result<GridSpec> {
    let body = line
        .trim()
        .strip_prefix('#')
        .ok_or_else(|| Error::Parse(format!("expected '# nx ny x0 y0 hx hy' header, got {line:?}")))?;
    let fields: Vec<&str> = body.split_whitespace().collect();
    if fields.len() < 6 {
        return Err(Error::Parse(format!("grid header needs 6 fields, got {}", fields.len())));
    }
    let count = |s: &str| s.parse::<usize>().map_err(|e| Error::Parse(format!("{s:?}: {e}")));
    let real = |s: &str| s.parse::<f64>().map_err(|e| Error::Parse(format!("{s:?}: {e}")));
    GridSpec::new(
        real(fields[2])?,
        real(fields[3])?,
        count(fields[0])?,
        count(fields[1])?,
        real(fields[4])?,
        real(fields[5])?,
    )
}

pub fn format_grid_values(grid: &GridSpec, values: &[f64]) -> String {
    let mut out = grid_header(grid);
    out.push('\n');
    for j in 0..grid.ny {
        for i in 0..grid.nx {
            if i > 0 {
                out.push(',');
            }
            out.push_str(&fmt_f64(values[grid.index(i, j)]));
        }
        out.push('\n');
    }
    out
}

pub fn write_grid_values(path: &Path, grid: &GridSpec, values: &[f64]) -> Result<()> {
    fs::write(path, format_grid_values(grid, values))?;
    Ok(())
}

pub fn parse_grid_values(text: &str) -> Result<(GridSpec, Vec<f64>)> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| Error::Parse("empty grid file".into()))?;
    let grid = parse_grid_header(header)?;
    let mut values = Vec::with_capacity(grid.len());
    let mut rows = 0;
    for line in lines {
        rows += 1;
        let before = values.len();
        for tok in line.split(',') {
            let tok = tok.trim();
            values.push(tok.parse::<f64>().map_err(|e| Error::Parse(format!("{tok:?}: {e}")))?);
        }
        if values.len() - before != grid.nx {
            return Err(Error::Parse(format!(
                "row {rows} has {} values, expected {}",
                values.len() - before,
                grid.nx
            )));
        }
    }
    if rows != grid.ny {
        return Err(Error::Parse(format!("expected {} rows, found {rows}", grid.ny)));
    }
    Ok((grid, values))
}

pub fn read_grid_values(path: &Path) -> Result<(GridSpec, Vec<f64>)> {
    parse_grid_values(&fs::read_to_string(path)?)
}

/// One real per line or comma separated; `#` lines are comments.
pub fn parse_value_list(text: &str) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        for tok in line.split(',').map(str::trim).filter(|t| !t.is_empty()) {
            out.push(tok.parse::<f64>().map_err(|e| Error::Parse(format!("{tok:?}: {e}")))?);
        }
    }
    Ok(out)
}

pub fn join_values(values: impl IntoIterator<Item = f64>) -> String {
    let mut s = String::new();
    for (k, v) in values.into_iter().enumerate() {
        if k > 0 {
            s.push(',');
        }
        let _ = write!(s, "{}", fmt_f64(v));
    }
    s
}
