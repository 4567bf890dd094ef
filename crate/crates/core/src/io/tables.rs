//! CSV tables: BTS sites, covariates, weight matrices, aggregates and study
//! metrics.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use super::{fmt_num, read_text, write_text};
use crate::error::{Error, Result};
use crate::geo::{AreaId, Site};
use crate::mapping::{AreaCovariates, AreaWeights, CovariateTable, Scheme, WeightMatrix};
use crate::propagation::{AntennaSpec, BtsId};
use crate::simulation::round::{env_label, parse_env_label, Metric, MetricRecord};
use crate::simulation::study::TallyRow;

/// Row-numbered schema error; `row` counts data rows from 1.
fn row_err(row: usize, msg: impl std::fmt::Display) -> Error {
    Error::Schema(format!("row {row}: {msg}"))
}

fn reader(text: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes())
}

fn headers(rdr: &mut csv::Reader<&[u8]>) -> Result<Vec<String>> {
    let h = rdr
        .headers()
        .map_err(|e| Error::Schema(format!("header: {e}")))?;
    Ok(h.iter().map(str::to_owned).collect())
}

fn records(
    rdr: csv::Reader<&[u8]>,
    width: usize,
) -> impl Iterator<Item = Result<(usize, csv::StringRecord)>> + '_ {
    rdr.into_records().enumerate().map(move |(i, r)| {
        let row = i + 1;
        let r = r.map_err(|e| row_err(row, e))?;
        if r.len() != width {
            return Err(row_err(
                row,
                format!("{} fields, expected {width}", r.len()),
            ));
        }
        Ok((row, r))
    })
}

fn number(row: usize, col: &str, s: &str) -> Result<f64> {
    let v: f64 = s
        .parse()
        .map_err(|_| row_err(row, format!("`{col}` value `{s}` is not a number")))?;
    if !v.is_finite() {
        return Err(row_err(row, format!("`{col}` must be finite")));
    }
    Ok(v)
}

fn bts_id(row: usize, s: &str) -> Result<BtsId> {
    s.parse()
        .map_err(|_| row_err(row, format!("bts_id `{s}` is not a nonnegative integer")))
}

fn optional_number(row: usize, col: &str, s: &str) -> Result<Option<f64>> {
    if s.is_empty() {
        Ok(None)
    } else {
        number(row, col, s).map(Some)
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) || s.trim() != s {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_owned()
    }
}

const TECH_COLUMNS: [&str; 3] = ["height_m", "freq_mhz", "power_dbm"];

/// Technical columns of one BTS row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BtsTech {
    pub height_m: f64,
    pub freq_mhz: f64,
    pub power_dbm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BtsRecord {
    pub bts_id: BtsId,
    pub x: f64,
    pub y: f64,
    pub tech: Option<BtsTech>,
}

/// BTS sites as read from CSV, in file order.
#[derive(Debug, Clone, PartialEq)]
pub struct BtsTable {
    pub records: Vec<BtsRecord>,
}

impl BtsTable {
    /// True when the file had no technical columns and specifications must
    /// be synthesised.
    pub fn needs_synthesis(&self) -> bool {
        self.records.iter().any(|r| r.tech.is_none())
    }

    pub fn sites(&self) -> Vec<Site> {
        self.records
            .iter()
            .map(|r| Site {
                bts_id: r.bts_id,
                x: r.x,
                y: r.y,
            })
            .collect()
    }

    pub fn specs(&self) -> Result<Vec<AntennaSpec>> {
        self.records
            .iter()
            .map(|r| {
                let t = r.tech.ok_or_else(|| {
                    Error::Config(format!("bts {} has no technical specification", r.bts_id))
                })?;
                Ok(AntennaSpec {
                    bts_id: r.bts_id,
                    x: r.x,
                    y: r.y,
                    height_m: t.height_m,
                    freq_mhz: t.freq_mhz,
                    power_dbm: t.power_dbm,
                })
            })
            .collect()
    }
}

/// Parses `bts_id,x,y[,height_m,freq_mhz,power_dbm]`. Technical columns are
/// all present or all absent.
pub fn parse_bts_csv(text: &str) -> Result<BtsTable> {
    let mut rdr = reader(text);
    let h = headers(&mut rdr)?;
    let with_tech = match h.len() {
        3 => false,
        6 => true,
        _ => {
            return Err(Error::Schema(format!(
                "bts header must be `bts_id,x,y` optionally followed by `{}`, got `{}`",
                TECH_COLUMNS.join(","),
                h.join(",")
            )))
        }
    };
    let expected: Vec<&str> = ["bts_id", "x", "y"]
        .into_iter()
        .chain(TECH_COLUMNS.into_iter().filter(|_| with_tech))
        .collect();
    if h != expected {
        return Err(Error::Schema(format!(
            "bts header must be `{}`, got `{}`",
            expected.join(","),
            h.join(",")
        )));
    }
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for rec in records(rdr, h.len()) {
        let (row, r) = rec?;
        let id = bts_id(row, &r[0])?;
        if !seen.insert(id) {
            return Err(row_err(row, format!("duplicate bts_id {id}")));
        }
        let x = number(row, "x", &r[1])?;
        let y = number(row, "y", &r[2])?;
        let tech = if with_tech {
            let t = BtsTech {
                height_m: number(row, "height_m", &r[3])?,
                freq_mhz: number(row, "freq_mhz", &r[4])?,
                power_dbm: number(row, "power_dbm", &r[5])?,
            };
            let spec = AntennaSpec {
                bts_id: id,
                x,
                y,
                height_m: t.height_m,
                freq_mhz: t.freq_mhz,
                power_dbm: t.power_dbm,
            };
            spec.validate().map_err(|e| row_err(row, e))?;
            Some(t)
        } else {
            None
        };
        out.push(BtsRecord {
            bts_id: id,
            x,
            y,
            tech,
        });
    }
    Ok(BtsTable { records: out })
}

pub fn write_bts_csv(specs: &[AntennaSpec]) -> String {
    let mut out = String::from("bts_id,x,y,height_m,freq_mhz,power_dbm\n");
    for s in specs {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            s.bts_id,
            fmt_num(s.x),
            fmt_num(s.y),
            fmt_num(s.height_m),
            fmt_num(s.freq_mhz),
            fmt_num(s.power_dbm)
        ));
    }
    out
}

pub fn load_bts_csv(path: &Path) -> Result<BtsTable> {
    parse_bts_csv(&read_text(path)?)
}

/// Parses `bts_id,<name>...`; empty cells are missing values.
pub fn parse_covariates_csv(text: &str) -> Result<CovariateTable> {
    let mut rdr = reader(text);
    let h = headers(&mut rdr)?;
    if h.first().map(String::as_str) != Some("bts_id") || h.len() < 2 {
        return Err(Error::Schema(
            "covariate header must be `bts_id` followed by at least one column".into(),
        ));
    }
    let names: Vec<String> = h[1..].to_vec();
    if let Some(n) = names.iter().find(|n| n.is_empty()) {
        return Err(Error::Schema(format!("empty covariate name `{n}`")));
    }
    if names.iter().collect::<HashSet<_>>().len() != names.len() {
        return Err(Error::Schema("duplicate covariate names".into()));
    }
    let mut table = CovariateTable::new(names.clone());
    for rec in records(rdr, h.len()) {
        let (row, r) = rec?;
        let id = bts_id(row, &r[0])?;
        let values = names
            .iter()
            .enumerate()
            .map(|(c, n)| optional_number(row, n, &r[c + 1]))
            .collect::<Result<Vec<_>>>()?;
        table.insert(id, values).map_err(|e| row_err(row, e))?;
    }
    Ok(table)
}

pub fn write_covariates_csv(table: &CovariateTable) -> String {
    let mut out = std::iter::once("bts_id".to_owned())
        .chain(table.names.iter().map(|n| csv_field(n)))
        .collect::<Vec<_>>()
        .join(",");
    out.push('\n');
    for (id, values) in table.rows() {
        out.push_str(&id.to_string());
        for v in values {
            out.push(',');
            if let Some(v) = v {
                out.push_str(&fmt_num(*v));
            }
        }
        out.push('\n');
    }
    out
}

pub fn load_covariates_csv(path: &Path) -> Result<CovariateTable> {
    parse_covariates_csv(&read_text(path)?)
}

/// `area_id,bts_id,weight` sorted by (area, bts). An area without coverage
/// is a single row with empty `bts_id` and `weight`.
pub fn write_weights_csv(m: &WeightMatrix) -> String {
    let mut out = String::from("area_id,bts_id,weight\n");
    for row in &m.rows {
        let id = csv_field(&row.area_id.0);
        match &row.weights {
            None => out.push_str(&format!("{id},,\n")),
            Some(ws) => {
                for (b, w) in ws {
                    out.push_str(&format!("{id},{b},{}\n", fmt_num(*w)));
                }
            }
        }
    }
    out
}

/// Tolerance on the row sums of a loaded weight matrix.
pub const ROW_SUM_TOLERANCE: f64 = 1e-9;

/// Inverse of [`write_weights_csv`]. Rows must be sorted, weights positive
/// and each covered area's weights must sum to one.
pub fn parse_weights_csv(text: &str, scheme: Scheme) -> Result<WeightMatrix> {
    let mut rdr = reader(text);
    let h = headers(&mut rdr)?;
    if h != ["area_id", "bts_id", "weight"] {
        return Err(Error::Schema(format!(
            "weights header must be `area_id,bts_id,weight`, got `{}`",
            h.join(",")
        )));
    }
    let mut rows: Vec<AreaWeights> = Vec::new();
    for rec in records(rdr, 3) {
        let (row, r) = rec?;
        let area = AreaId(r[0].to_owned());
        if area.0.is_empty() {
            return Err(row_err(row, "empty area_id"));
        }
        let entry = match (&r[1], &r[2]) {
            ("", "") => None,
            ("", _) | (_, "") => {
                return Err(row_err(
                    row,
                    "bts_id and weight must both be set or both empty",
                ))
            }
            (b, w) => {
                let w = number(row, "weight", w)?;
                if !(w > 0.0 && w <= 1.0 + ROW_SUM_TOLERANCE) {
                    return Err(row_err(row, format!("weight {w} outside (0, 1]")));
                }
                Some((bts_id(row, b)?, w))
            }
        };
        match rows.last_mut() {
            Some(last) if last.area_id == area => match (&mut last.weights, entry) {
                (Some(ws), Some((b, w))) => {
                    if ws.last().is_some_and(|(prev, _)| *prev >= b) {
                        return Err(row_err(
                            row,
                            format!("bts {b} out of order in area `{area}`"),
                        ));
                    }
                    ws.push((b, w));
                }
                _ => {
                    return Err(row_err(
                        row,
                        format!("area `{area}` mixes coverage and no-coverage rows"),
                    ));
                }
            },
            last => {
                if last.is_some_and(|l| l.area_id > area) {
                    return Err(row_err(row, format!("area `{area}` out of order")));
                }
                rows.push(AreaWeights {
                    area_id: area,
                    weights: entry.map(|e| vec![e]),
                });
            }
        }
    }
    for r in &rows {
        if let Some(ws) = &r.weights {
            let sum: f64 = ws.iter().map(|(_, w)| w).sum();
            if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                return Err(Error::Schema(format!(
                    "weights of area `{}` sum to {sum}",
                    r.area_id
                )));
            }
        }
    }
    Ok(WeightMatrix {
        scheme,
        rows,
        dropped_bts: Vec::new(),
    })
}

pub fn load_weights_csv(path: &Path, scheme: Scheme) -> Result<WeightMatrix> {
    parse_weights_csv(&read_text(path)?, scheme)
}

pub fn save_weights_csv(m: &WeightMatrix, path: &Path) -> Result<()> {
    write_text(path, &write_weights_csv(m))
}

/// `area_id,<name>...` with empty cells for missing values.
pub fn write_aggregates_csv(a: &AreaCovariates) -> String {
    let mut out = std::iter::once("area_id".to_owned())
        .chain(a.names.iter().map(|n| csv_field(n)))
        .collect::<Vec<_>>()
        .join(",");
    out.push('\n');
    for (id, values) in &a.rows {
        out.push_str(&csv_field(&id.0));
        for v in values {
            out.push(',');
            if let Some(v) = v {
                out.push_str(&fmt_num(*v));
            }
        }
        out.push('\n');
    }
    out
}

pub fn parse_aggregates_csv(text: &str) -> Result<AreaCovariates> {
    let mut rdr = reader(text);
    let h = headers(&mut rdr)?;
    if h.first().map(String::as_str) != Some("area_id") || h.len() < 2 {
        return Err(Error::Schema(
            "aggregate header must be `area_id` followed by columns".into(),
        ));
    }
    let names = h[1..].to_vec();
    let mut rows = Vec::new();
    let mut seen = HashSet::new();
    for rec in records(rdr, h.len()) {
        let (row, r) = rec?;
        let id = AreaId(r[0].to_owned());
        if !seen.insert(id.clone()) {
            return Err(row_err(row, format!("duplicate area_id `{id}`")));
        }
        let values = names
            .iter()
            .enumerate()
            .map(|(c, n)| optional_number(row, n, &r[c + 1]))
            .collect::<Result<Vec<_>>>()?;
        rows.push((id, values));
    }
    Ok(AreaCovariates { names, rows })
}

pub const METRICS_HEADER: &str = "round,scheme,metric,env_class,value";

/// Per-round study metrics; missing values are empty cells.
pub fn write_metrics_csv(records: &[MetricRecord]) -> String {
    let mut out = format!("{METRICS_HEADER}\n");
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.round,
            r.scheme,
            r.metric,
            env_label(r.env),
            r.value.map(fmt_num).unwrap_or_default()
        ));
    }
    out
}

pub fn parse_metrics_csv(text: &str) -> Result<Vec<MetricRecord>> {
    let mut rdr = reader(text);
    let h = headers(&mut rdr)?;
    if h.join(",") != METRICS_HEADER {
        return Err(Error::Schema(format!(
            "metrics header must be `{METRICS_HEADER}`"
        )));
    }
    let mut out = Vec::new();
    for rec in records(rdr, 5) {
        let (row, r) = rec?;
        out.push(MetricRecord {
            round: r[0]
                .parse()
                .map_err(|_| row_err(row, format!("round `{}` is not an integer", &r[0])))?,
            scheme: r[1].parse().map_err(|e| row_err(row, e))?,
            metric: r[2].parse().map_err(|e| row_err(row, e))?,
            env: parse_env_label(&r[3]).map_err(|e| row_err(row, e))?,
            value: optional_number(row, "value", &r[4])?,
        });
    }
    Ok(out)
}

pub const TALLY_HEADER: &str = "scheme,metric,win_pct";

pub fn write_tally_csv(rows: &[TallyRow]) -> String {
    let mut out = format!("{TALLY_HEADER}\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{}\n",
            r.scheme,
            r.metric,
            fmt_num(r.win_pct)
        ));
    }
    out
}

pub fn parse_tally_csv(text: &str) -> Result<Vec<TallyRow>> {
    let mut rdr = reader(text);
    let h = headers(&mut rdr)?;
    if h.join(",") != TALLY_HEADER {
        return Err(Error::Schema(format!(
            "tally header must be `{TALLY_HEADER}`"
        )));
    }
    let mut out = Vec::new();
    for rec in records(rdr, 3) {
        let (row, r) = rec?;
        let metric: Metric = r[1].parse().map_err(|e| row_err(row, e))?;
        out.push(TallyRow {
            scheme: r[0].parse().map_err(|e| row_err(row, e))?,
            metric,
            win_pct: number(row, "win_pct", &r[2])?,
        });
    }
    Ok(out)
}

/// Entries of a weight matrix keyed by (area, bts), for comparisons.
pub fn weight_entries(m: &WeightMatrix) -> BTreeMap<(AreaId, BtsId), f64> {
    m.entries().map(|(a, b, w)| ((a.clone(), b), w)).collect()
}
