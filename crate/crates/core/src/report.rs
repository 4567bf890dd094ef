//! Summary tables and box plots of a finished study.
//!
//! Every table is written twice: as CSV and as an aligned text block in
//! `report.txt`. Means are over the rounds where a metric has a value.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::io::fmt_num;
use crate::io::output::OutputSet;
use crate::mapping::Scheme;
use crate::propagation::EnvClass;
use crate::simulation::round::{env_label, Metric, MetricRecord};
use crate::simulation::study::{tally, TallyRow, TALLY_METRICS};

/// Digits after the decimal point in text tables.
const TEXT_DECIMALS: usize = 3;

pub const ENVS: [Option<EnvClass>; 4] = [
    None,
    Some(EnvClass::Urban),
    Some(EnvClass::Suburban),
    Some(EnvClass::Rural),
];

/// Values of one series across rounds, in round order.
pub fn series(
    records: &[MetricRecord],
    scheme: Scheme,
    metric: Metric,
    env: Option<EnvClass>,
) -> Vec<f64> {
    records
        .iter()
        .filter(|r| r.scheme == scheme && r.metric == metric && r.env == env)
        .filter_map(|r| r.value)
        .collect()
}

pub fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

/// Number of distinct rounds in `records`.
pub fn round_count(records: &[MetricRecord]) -> usize {
    records
        .iter()
        .map(|r| r.round)
        .collect::<BTreeSet<_>>()
        .len()
}

fn schemes_present(records: &[MetricRecord]) -> Vec<Scheme> {
    Scheme::ALL
        .into_iter()
        .filter(|s| records.iter().any(|r| r.scheme == *s))
        .collect()
}

/// A rectangular table with a header row.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub title: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<Option<f64>>>,
    pub labels: Vec<String>,
}

impl Table {
    pub fn to_csv(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for (label, row) in self.labels.iter().zip(&self.rows) {
            out.push_str(label);
            for v in row {
                out.push(',');
                if let Some(v) = v {
                    out.push_str(&fmt_num(*v));
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn to_text(&self) -> String {
        let cells: Vec<Vec<String>> = self
            .labels
            .iter()
            .zip(&self.rows)
            .map(|(l, row)| {
                std::iter::once(l.clone())
                    .chain(row.iter().map(|v| match v {
                        Some(v) => format!("{v:.TEXT_DECIMALS$}"),
                        None => "-".to_owned(),
                    }))
                    .collect()
            })
            .collect();
        let widths: Vec<usize> = (0..self.header.len())
            .map(|c| {
                cells
                    .iter()
                    .map(|r| r[c].len())
                    .chain([self.header[c].len()])
                    .max()
                    .unwrap_or(0)
            })
            .collect();
        let line = |row: &[String]| {
            let mut s = String::new();
            for (c, cell) in row.iter().enumerate() {
                if c == 0 {
                    let _ = write!(s, "{cell:<w$}", w = widths[c]);
                } else {
                    let _ = write!(s, "  {cell:>w$}", w = widths[c]);
                }
            }
            s.push('\n');
            s
        };
        let mut out = format!("{}\n", self.title);
        out.push_str(&line(&self.header));
        let rule: usize = widths.iter().sum::<usize>() + 2 * (widths.len() - 1);
        out.push_str(&"-".repeat(rule));
        out.push('\n');
        for r in &cells {
            out.push_str(&line(r));
        }
        out
    }
}

/// Win percentages per estimator and tallied metric.
pub fn tally_table(rows: &[TallyRow]) -> Table {
    let metrics: Vec<Metric> = TALLY_METRICS.iter().map(|(m, _)| *m).collect();
    let schemes: Vec<Scheme> = Scheme::ESTIMATORS
        .into_iter()
        .filter(|s| rows.iter().any(|r| r.scheme == *s))
        .collect();
    Table {
        title: "Share of rounds won (%)".into(),
        header: std::iter::once("scheme".to_owned())
            .chain(metrics.iter().map(|m| m.to_string()))
            .collect(),
        rows: schemes
            .iter()
            .map(|s| {
                metrics
                    .iter()
                    .map(|m| {
                        rows.iter()
                            .find(|r| r.scheme == *s && r.metric == *m)
                            .map(|r| r.win_pct)
                    })
                    .collect()
            })
            .collect(),
        labels: schemes.iter().map(|s| s.to_string()).collect(),
    }
}

/// Mean overlap by environment class of the true serving BTS.
pub fn overlap_table(records: &[MetricRecord], metric: Metric) -> Table {
    let schemes = schemes_present(records);
    Table {
        title: format!("Mean {metric} by environment"),
        header: std::iter::once("scheme".to_owned())
            .chain(ENVS.iter().map(|e| env_label(*e).to_owned()))
            .collect(),
        rows: schemes
            .iter()
            .map(|s| {
                ENVS.iter()
                    .map(|e| mean(&series(records, *s, metric, *e)))
                    .collect()
            })
            .collect(),
        labels: schemes.iter().map(|s| s.to_string()).collect(),
    }
}

/// Mean correlation, bias and RMSE of area estimates on all, urban and rural
/// areas, plus the common-support set.
pub fn prediction_table(records: &[MetricRecord]) -> Table {
    let schemes = schemes_present(records);
    let cols: [(Metric, Option<EnvClass>, &str); 12] = [
        (Metric::Rho, None, "rho"),
        (Metric::Bias, None, "bias"),
        (Metric::Rmse, None, "rmse"),
        (Metric::Rho, Some(EnvClass::Urban), "rho_urban"),
        (Metric::Bias, Some(EnvClass::Urban), "bias_urban"),
        (Metric::Rmse, Some(EnvClass::Urban), "rmse_urban"),
        (Metric::Rho, Some(EnvClass::Rural), "rho_rural"),
        (Metric::Bias, Some(EnvClass::Rural), "bias_rural"),
        (Metric::Rmse, Some(EnvClass::Rural), "rmse_rural"),
        (Metric::RhoCommon, None, "rho_common"),
        (Metric::BiasCommon, None, "bias_common"),
        (Metric::RmseCommon, None, "rmse_common"),
    ];
    Table {
        title: "Mean prediction quality of area estimates".into(),
        header: std::iter::once("scheme".to_owned())
            .chain(cols.iter().map(|c| c.2.to_owned()))
            .collect(),
        rows: schemes
            .iter()
            .map(|s| {
                cols.iter()
                    .map(|(m, e, _)| mean(&series(records, *s, *m, *e)))
                    .collect()
            })
            .collect(),
        labels: schemes.iter().map(|s| s.to_string()).collect(),
    }
}

/// Quantile with linear interpolation between order statistics.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Five-number summary with whiskers at the furthest points within 1.5 IQR.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxStats {
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub whisker_lo: f64,
    pub whisker_hi: f64,
    pub outliers: Vec<f64>,
}

pub fn box_stats(values: &[f64]) -> Option<BoxStats> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let (q1, median, q3) = (quantile(&v, 0.25), quantile(&v, 0.5), quantile(&v, 0.75));
    let (lo_fence, hi_fence) = (q1 - 1.5 * (q3 - q1), q3 + 1.5 * (q3 - q1));
    let inside = || {
        v.iter()
            .copied()
            .filter(|x| (lo_fence..=hi_fence).contains(x))
    };
    Some(BoxStats {
        q1,
        median,
        q3,
        whisker_lo: inside().next().unwrap_or(q1),
        whisker_hi: inside().next_back().unwrap_or(q3),
        outliers: v
            .iter()
            .copied()
            .filter(|x| !(lo_fence..=hi_fence).contains(x))
            .collect(),
    })
}

const PANEL_W: f64 = 320.0;
const PANEL_H: f64 = 280.0;
const MARGIN_L: f64 = 52.0;
const MARGIN_T: f64 = 30.0;
const MARGIN_B: f64 = 60.0;
const TICKS: usize = 5;

fn px(v: f64) -> String {
    format!("{v:.2}")
}

fn panel(out: &mut String, x0: f64, title: &str, data: &[(Scheme, Vec<f64>)]) {
    let all: Vec<f64> = data.iter().flat_map(|(_, v)| v.iter().copied()).collect();
    let (mut lo, mut hi) = all
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| {
            (a.min(x), b.max(x))
        });
    if !lo.is_finite() {
        (lo, hi) = (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        (lo, hi) = (lo - 0.5, hi + 0.5);
    }
    let pad = 0.05 * (hi - lo);
    let (lo, hi) = (lo - pad, hi + pad);
    let plot_h = PANEL_H - MARGIN_T - MARGIN_B;
    let plot_w = PANEL_W - MARGIN_L - 10.0;
    let y = |v: f64| MARGIN_T + plot_h * (hi - v) / (hi - lo);
    let _ = writeln!(
        out,
        r#"<g transform="translate({},0)"><text x="{}" y="18" text-anchor="middle" font-weight="bold">{title}</text>"#,
        px(x0),
        px(MARGIN_L + plot_w / 2.0)
    );
    let _ = writeln!(
        out,
        r##"<rect x="{}" y="{}" width="{}" height="{}" fill="none" stroke="#444"/>"##,
        px(MARGIN_L),
        px(MARGIN_T),
        px(plot_w),
        px(plot_h)
    );
    for t in 0..TICKS {
        let v = lo + (hi - lo) * t as f64 / (TICKS - 1) as f64;
        let _ = writeln!(
            out,
            r##"<line x1="{0}" x2="{1}" y1="{2}" y2="{2}" stroke="#ddd"/><text x="{3}" y="{4}" text-anchor="end" font-size="10">{v:.3}</text>"##,
            px(MARGIN_L),
            px(MARGIN_L + plot_w),
            px(y(v)),
            px(MARGIN_L - 4.0),
            px(y(v) + 3.0)
        );
    }
    let slot = plot_w / data.len().max(1) as f64;
    for (i, (scheme, values)) in data.iter().enumerate() {
        let cx = MARGIN_L + slot * (i as f64 + 0.5);
        let half = slot * 0.3;
        let _ = writeln!(
            out,
            r#"<text transform="translate({},{}) rotate(-40)" text-anchor="end" font-size="11">{scheme}</text>"#,
            px(cx),
            px(MARGIN_T + plot_h + 12.0)
        );
        let Some(b) = box_stats(values) else { continue };
        let _ = writeln!(
            out,
            r##"<line x1="{0}" x2="{0}" y1="{1}" y2="{2}" stroke="#222"/><line x1="{0}" x2="{0}" y1="{3}" y2="{4}" stroke="#222"/>"##,
            px(cx),
            px(y(b.whisker_hi)),
            px(y(b.q3)),
            px(y(b.q1)),
            px(y(b.whisker_lo))
        );
        let _ = writeln!(
            out,
            r##"<rect x="{0}" y="{1}" width="{2}" height="{3}" fill="#9ecae1" stroke="#222"/><line x1="{4}" x2="{5}" y1="{6}" y2="{6}" stroke="#000" stroke-width="2"/>"##,
            px(cx - half),
            px(y(b.q3)),
            px(2.0 * half),
            px((y(b.q1) - y(b.q3)).max(0.5)),
            px(cx - half),
            px(cx + half),
            px(y(b.median))
        );
        for o in &b.outliers {
            let _ = writeln!(
                out,
                r##"<circle cx="{}" cy="{}" r="2" fill="none" stroke="#222"/>"##,
                px(cx),
                px(y(*o))
            );
        }
    }
    out.push_str("</g>\n");
}

/// Box plots of correlation, bias and RMSE over rounds, one box per scheme.
pub fn boxplots_svg(records: &[MetricRecord]) -> String {
    let schemes = schemes_present(records);
    let panels = [
        (Metric::Rho, "Correlation"),
        (Metric::Bias, "Bias"),
        (Metric::Rmse, "RMSE"),
    ];
    let width = PANEL_W * panels.len() as f64;
    let mut out = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\" font-family=\"sans-serif\" font-size=\"12\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n",
        w = px(width),
        h = px(PANEL_H)
    );
    for (i, (metric, title)) in panels.iter().enumerate() {
        let data: Vec<(Scheme, Vec<f64>)> = schemes
            .iter()
            .map(|s| (*s, series(records, *s, *metric, None)))
            .collect();
        panel(&mut out, PANEL_W * i as f64, title, &data);
    }
    out.push_str("</svg>\n");
    out
}

/// Renders every table and plot of a study. The tally is recounted from
/// `records`; a supplied `tally` that disagrees is an error.
pub fn build_report(records: &[MetricRecord], supplied: Option<&[TallyRow]>) -> Result<OutputSet> {
    if records.is_empty() {
        return Err(Error::Data("study has no per-round records".into()));
    }
    let rounds = round_count(records);
    let recount = tally(records, rounds);
    if let Some(t) = supplied {
        let same = t.len() == recount.len()
            && t.iter().zip(&recount).all(|(a, b)| {
                a.scheme == b.scheme && a.metric == b.metric && (a.win_pct - b.win_pct).abs() < 1e-9
            });
        if !same {
            return Err(Error::Mismatch(
                "tally.csv disagrees with the recount from metrics_rounds.csv".into(),
            ));
        }
    }
    let tables = [
        ("table_tally.csv", tally_table(&recount)),
        (
            "table_geo_overlap.csv",
            overlap_table(records, Metric::GeoOverlap),
        ),
        (
            "table_settlement_overlap.csv",
            overlap_table(records, Metric::SettlementOverlap),
        ),
        ("table_prediction.csv", prediction_table(records)),
    ];
    let mut out = OutputSet::new();
    let mut text = format!("Rounds: {rounds}\n");
    for (name, table) in tables {
        text.push('\n');
        text.push_str(&table.to_text());
        out.add(name, table.to_csv())?;
    }
    out.add("report.txt", text)?;
    out.add("boxplots.svg", boxplots_svg(records))?;
    Ok(out)
}
