//! ESRI ASCII grids.
//!
//! Canonical form written by [`write_raster`]:
//!
//! ```text
//! ncols 3
//! nrows 2
//! xllcorner 0
//! yllcorner 0
//! cellsize 100
//! NODATA_value -9999
//! 0 1 2
//! -9999 4 5
//! ```

use std::path::Path;

use super::{fmt_num, read_text, write_text};
use crate::error::{Error, Result};
use crate::geo::{Grid, SettlementRaster};

pub const DEFAULT_NODATA: f64 = -9999.0;

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        line,
        msg: msg.into(),
    }
}

fn header_number(line: usize, key: &str, value: &str) -> Result<f64> {
    let v: f64 = value
        .parse()
        .map_err(|_| parse_err(line, format!("`{key}` value `{value}` is not a number")))?;
    if !v.is_finite() {
        return Err(parse_err(line, format!("`{key}` must be finite")));
    }
    Ok(v)
}

fn header_count(line: usize, key: &str, value: &str) -> Result<usize> {
    let n: usize = value.parse().map_err(|_| {
        parse_err(
            line,
            format!("`{key}` value `{value}` is not a positive integer"),
        )
    })?;
    if n == 0 {
        return Err(parse_err(line, format!("`{key}` must be positive")));
    }
    Ok(n)
}

/// Parses an ESRI ASCII grid. Header keys are case-insensitive; the corner
/// or centre form of the origin is accepted. Cells equal to the nodata
/// value become `None`; other negative or non-finite cells are rejected.
pub fn parse_raster(text: &str) -> Result<SettlementRaster> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (mut ncols, mut nrows, mut cell) = (None, None, None);
    let (mut x, mut y, mut centre_x, mut centre_y) = (None, None, false, false);
    let mut nodata = None;
    let mut first_data = None;
    for (no, line) in lines.by_ref() {
        let mut parts = line.split_whitespace();
        let Some(key) = parts.next() else {
            return Err(parse_err(no, "blank line inside the header"));
        };
        if key.parse::<f64>().is_ok() {
            first_data = Some((no, line));
            break;
        }
        let value = parts
            .next()
            .ok_or_else(|| parse_err(no, format!("header key `{key}` has no value")))?;
        if parts.next().is_some() {
            return Err(parse_err(
                no,
                format!("header key `{key}` has more than one value"),
            ));
        }
        let slot_taken = |taken: bool| {
            if taken {
                Err(parse_err(no, format!("duplicate header key `{key}`")))
            } else {
                Ok(())
            }
        };
        match key.to_ascii_lowercase().as_str() {
            "ncols" => {
                slot_taken(ncols.is_some())?;
                ncols = Some(header_count(no, key, value)?);
            }
            "nrows" => {
                slot_taken(nrows.is_some())?;
                nrows = Some(header_count(no, key, value)?);
            }
            "xllcorner" | "xllcenter" => {
                slot_taken(x.is_some())?;
                centre_x = key.eq_ignore_ascii_case("xllcenter");
                x = Some(header_number(no, key, value)?);
            }
            "yllcorner" | "yllcenter" => {
                slot_taken(y.is_some())?;
                centre_y = key.eq_ignore_ascii_case("yllcenter");
                y = Some(header_number(no, key, value)?);
            }
            "cellsize" => {
                slot_taken(cell.is_some())?;
                let c = header_number(no, key, value)?;
                if c <= 0.0 {
                    return Err(parse_err(no, "`cellsize` must be positive"));
                }
                cell = Some(c);
            }
            "nodata_value" => {
                slot_taken(nodata.is_some())?;
                nodata = Some(header_number(no, key, value)?);
            }
            _ => return Err(parse_err(no, format!("unknown header key `{key}`"))),
        }
    }
    let missing = |k: &str| {
        parse_err(
            first_data.map_or(text.lines().count(), |d| d.0),
            format!("header lacks `{k}`"),
        )
    };
    let ncols = ncols.ok_or_else(|| missing("ncols"))?;
    let nrows = nrows.ok_or_else(|| missing("nrows"))?;
    let cell = cell.ok_or_else(|| missing("cellsize"))?;
    let mut x = x.ok_or_else(|| missing("xllcorner"))?;
    let mut y = y.ok_or_else(|| missing("yllcorner"))?;
    if centre_x {
        x -= cell / 2.0;
    }
    if centre_y {
        y -= cell / 2.0;
    }
    let grid = Grid::new(ncols, nrows, cell, x, y).map_err(|e| parse_err(1, e.to_string()))?;
    let cells = ncols
        .checked_mul(nrows)
        .filter(|&n| n <= text.len())
        .ok_or_else(|| parse_err(1, format!("{ncols} x {nrows} cells cannot fit in the file")))?;
    let mut values = Vec::with_capacity(cells);
    let mut row = 0;
    for (no, line) in first_data.into_iter().chain(lines) {
        if line.trim().is_empty() {
            if row == nrows {
                continue;
            }
            return Err(parse_err(no, format!("blank line at data row {}", row + 1)));
        }
        if row == nrows {
            return Err(parse_err(no, format!("more than {nrows} data rows")));
        }
        row += 1;
        let before = values.len();
        for tok in line.split_whitespace() {
            let v: f64 = tok
                .parse()
                .map_err(|_| parse_err(no, format!("cell `{tok}` in row {row} is not a number")))?;
            if Some(v) == nodata {
                values.push(None);
            } else if !v.is_finite() || v < 0.0 {
                return Err(parse_err(
                    no,
                    format!("cell `{tok}` in row {row} is not a nonnegative count"),
                ));
            } else {
                values.push(Some(v));
            }
            if values.len() - before > ncols {
                break;
            }
        }
        let got = values.len() - before;
        if got > ncols {
            return Err(parse_err(
                no,
                format!("row {row} has more than {ncols} values"),
            ));
        }
        if got < ncols {
            return Err(parse_err(
                no,
                format!("row {row} has {got} values, expected {ncols}"),
            ));
        }
    }
    if row != nrows {
        return Err(parse_err(
            text.lines().count(),
            format!("found {row} data rows, expected {nrows}"),
        ));
    }
    SettlementRaster::new(grid, values)
}

/// Canonical ESRI ASCII text with `NODATA_value -9999`.
pub fn write_raster(raster: &SettlementRaster) -> String {
    let g = &raster.grid;
    let mut out = format!(
        "ncols {}\nnrows {}\nxllcorner {}\nyllcorner {}\ncellsize {}\nNODATA_value {}\n",
        g.ncols,
        g.nrows,
        fmt_num(g.origin_x),
        fmt_num(g.origin_y),
        fmt_num(g.cell_size_m),
        fmt_num(DEFAULT_NODATA)
    );
    for row in raster.values.chunks(g.ncols) {
        let cells: Vec<String> = row
            .iter()
            .map(|v| fmt_num(v.unwrap_or(DEFAULT_NODATA)))
            .collect();
        out.push_str(&cells.join(" "));
        out.push('\n');
    }
    out
}

pub fn load_raster(path: &Path) -> Result<SettlementRaster> {
    parse_raster(&read_text(path)?)
}

pub fn save_raster(raster: &SettlementRaster, path: &Path) -> Result<()> {
    write_text(path, &write_raster(raster))
}
