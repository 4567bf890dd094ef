//! Area x BTS weight matrices under the five mapping schemes and aggregation
//! of BTS-level covariates to statistical areas.
//!
//! Geometric schemes (point-to-polygon, voronoi, augmented voronoi) produce
//! area weights directly. Propagation schemes (best server, inverse signal
//! strength) first produce per-settlement weights, which are averaged over
//! the covered settlements of each area:
//!
//! ```text
//! w[t][j] = sum_{i in t, covered} c_i * w[i][j] / sum_{i in t, covered} c_i
//! ```
//!
//! where `c_i` is 1 for plain settlements or an auxiliary count (population,
//! device counts) after [`refine_weights`].

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::{
    AreaId, Assignment, Grid, Settlement, SettlementRaster, Site, StatAreaSet, ZoneRaster,
};
use crate::propagation::{AntennaSpec, BtsId, EnvClass, RssField};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Scheme {
    #[serde(rename = "benchmark")]
    Benchmark,
    #[serde(rename = "p2p")]
    P2p,
    #[serde(rename = "voronoi")]
    Voronoi,
    #[serde(rename = "aug-voronoi")]
    AugVoronoi,
    #[serde(rename = "bsa")]
    Bsa,
    #[serde(rename = "idw")]
    Idw,
}

impl Scheme {
    /// The five estimation schemes in tie-break order.
    pub const ESTIMATORS: [Scheme; 5] = [
        Scheme::P2p,
        Scheme::Voronoi,
        Scheme::AugVoronoi,
        Scheme::Bsa,
        Scheme::Idw,
    ];

    pub const ALL: [Scheme; 6] = [
        Scheme::Benchmark,
        Scheme::P2p,
        Scheme::Voronoi,
        Scheme::AugVoronoi,
        Scheme::Bsa,
        Scheme::Idw,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::Benchmark => "benchmark",
            Scheme::P2p => "p2p",
            Scheme::Voronoi => "voronoi",
            Scheme::AugVoronoi => "aug-voronoi",
            Scheme::Bsa => "bsa",
            Scheme::Idw => "idw",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scheme::ALL
            .into_iter()
            .find(|sc| sc.as_str() == s)
            .ok_or_else(|| Error::Schema(format!("unknown scheme `{s}`")))
    }
}

/// Weights of one statistical area.
#[derive(Debug, Clone, PartialEq)]
pub struct AreaWeights {
    pub area_id: AreaId,
    /// `None` when the area has no coverage; otherwise nonzero weights
    /// sorted by bts id.
    pub weights: Option<Vec<(BtsId, f64)>>,
}

impl AreaWeights {
    pub fn is_covered(&self) -> bool {
        self.weights.is_some()
    }
}

/// Sparse area x BTS weights, rows sorted by area id.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    pub scheme: Scheme,
    pub rows: Vec<AreaWeights>,
    /// BTS that fell outside every area (point-to-polygon only).
    pub dropped_bts: Vec<BtsId>,
}

impl WeightMatrix {
    /// Normalises raw per-area sums into a matrix. Areas whose sums are all
    /// zero are flagged no-coverage.
    fn from_raw(scheme: Scheme, raw: BTreeMap<AreaId, BTreeMap<BtsId, f64>>) -> Self {
        let rows = raw
            .into_iter()
            .map(|(area_id, row)| {
                let total: f64 = row.values().sum();
                let weights = (total > 0.0).then(|| {
                    row.into_iter()
                        .filter(|(_, w)| *w > 0.0)
                        .map(|(b, w)| (b, w / total))
                        .collect()
                });
                AreaWeights { area_id, weights }
            })
            .collect();
        WeightMatrix {
            scheme,
            rows,
            dropped_bts: Vec::new(),
        }
    }

    pub fn row(&self, area_id: &AreaId) -> Option<&AreaWeights> {
        self.rows
            .binary_search_by(|r| r.area_id.cmp(area_id))
            .ok()
            .map(|i| &self.rows[i])
    }

    pub fn covered_count(&self) -> usize {
        self.rows.iter().filter(|r| r.is_covered()).count()
    }

    pub fn no_coverage_count(&self) -> usize {
        self.rows.len() - self.covered_count()
    }

    /// `(area, bts, weight)` triples in (area, bts) order.
    pub fn entries(&self) -> impl Iterator<Item = (&AreaId, BtsId, f64)> {
        self.rows.iter().flat_map(|r| {
            r.weights
                .iter()
                .flatten()
                .map(move |&(b, w)| (&r.area_id, b, w))
        })
    }
}

fn empty_rows(zones: &ZoneRaster) -> BTreeMap<AreaId, BTreeMap<BtsId, f64>> {
    zones
        .ids
        .iter()
        .map(|id| (id.clone(), BTreeMap::new()))
        .collect()
}

/// Point-to-polygon: each BTS counts fully towards the area containing it,
/// normalised over the BTS of that area.
pub fn weights_p2p(sites: &[Site], areas: &StatAreaSet, grid: Option<&Grid>) -> WeightMatrix {
    let mut raw: BTreeMap<AreaId, BTreeMap<BtsId, f64>> = areas
        .ids()
        .map(|id| (id.clone(), BTreeMap::new()))
        .collect();
    let mut dropped = Vec::new();
    for s in sites {
        match areas.area_containing(s.x, s.y, grid) {
            Some(a) => {
                raw.get_mut(&areas.areas()[a].id)
                    .expect("area present")
                    .insert(s.bts_id, 1.0);
            }
            None => dropped.push(s.bts_id),
        }
    }
    if !dropped.is_empty() {
        log::warn!(
            "{} bts outside every statistical area were dropped",
            dropped.len()
        );
    }
    let mut m = WeightMatrix::from_raw(Scheme::P2p, raw);
    m.dropped_bts = dropped;
    m
}

fn tile_weights(
    scheme: Scheme,
    assignment: &Assignment,
    zones: &ZoneRaster,
    include: impl Fn(usize) -> bool,
) -> Result<WeightMatrix> {
    if assignment.len() != zones.grid.len() {
        return Err(Error::Mismatch(format!(
            "assignment has {} pixels, zones {}",
            assignment.len(),
            zones.grid.len()
        )));
    }
    let mut counts = vec![HashMap::<u32, usize>::new(); zones.len()];
    for (p, label) in assignment.labels.iter().enumerate() {
        let (Some(z), Some(l)) = (zones.zone_of(p), label) else {
            continue;
        };
        if include(p) {
            *counts[z].entry(*l).or_insert(0) += 1;
        }
    }
    let mut raw = empty_rows(zones);
    for (z, c) in counts.into_iter().enumerate() {
        let row = raw.get_mut(&zones.ids[z]).expect("zone present");
        for (l, n) in c {
            row.insert(assignment.bts_ids[l as usize], n as f64);
        }
    }
    Ok(WeightMatrix::from_raw(scheme, raw))
}

/// Voronoi: share of each area's pixels falling in each tile.
pub fn weights_voronoi(assignment: &Assignment, zones: &ZoneRaster) -> Result<WeightMatrix> {
    tile_weights(Scheme::Voronoi, assignment, zones, |_| true)
}

/// Augmented voronoi: share of each area's settlement pixels in each tile.
pub fn weights_aug_voronoi(
    assignment: &Assignment,
    settlements: &SettlementRaster,
    zones: &ZoneRaster,
) -> Result<WeightMatrix> {
    if !settlements.grid.same_shape(&zones.grid) {
        return Err(Error::Mismatch(
            "settlement raster is on a different grid".into(),
        ));
    }
    tile_weights(Scheme::AugVoronoi, assignment, zones, |p| {
        settlements.is_settlement(p)
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PixelScheme {
    Bsa,
    Idw,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IdwParams {
    /// Exponent on `|P_rx|`.
    pub s: f64,
    /// Number of strongest live links blended per settlement.
    pub k: usize,
}

impl Default for IdwParams {
    fn default() -> Self {
        IdwParams { s: 2.0, k: 5 }
    }
}

impl IdwParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.s >= 0.0 && self.s.is_finite()) {
            return Err(Error::Range {
                param: "s",
                value: self.s,
                valid: ">= 0",
            });
        }
        if self.k == 0 {
            return Err(Error::Range {
                param: "k",
                value: 0.0,
                valid: ">= 1",
            });
        }
        Ok(())
    }
}

/// Links with `|P_rx|` below this are clamped before exponentiation.
pub const MIN_ABS_RSS_DBM: f64 = 1.0;

#[derive(Debug, Clone, PartialEq)]
pub struct PixelRow {
    pub pixel: usize,
    /// Contribution of the pixel to its area; 1 unless refined.
    pub count: f64,
    /// Empty when the pixel is uncovered. Sorted by bts id.
    pub weights: Vec<(BtsId, f64)>,
}

/// Per-settlement BTS weights.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelWeights {
    pub scheme: PixelScheme,
    pub idw: Option<IdwParams>,
    pub dead_threshold_dbm: f64,
    pub rows: Vec<PixelRow>,
}

impl PixelWeights {
    /// Averages pixel weights over the covered pixels of each area.
    pub fn area_weights(&self, zones: &ZoneRaster, scheme: Scheme) -> WeightMatrix {
        let mut raw = empty_rows(zones);
        for row in &self.rows {
            if row.weights.is_empty() || row.count == 0.0 {
                continue;
            }
            let Some(z) = zones.zone_of(row.pixel) else {
                continue;
            };
            let area = raw.get_mut(&zones.ids[z]).expect("zone present");
            for &(b, w) in &row.weights {
                *area.entry(b).or_insert(0.0) += row.count * w;
            }
        }
        WeightMatrix::from_raw(scheme, raw)
    }

    pub fn uncovered(&self) -> usize {
        self.rows.iter().filter(|r| r.weights.is_empty()).count()
    }

    /// Serving antenna per row: the largest weight, ties to the lowest id.
    pub fn argmax(&self) -> Vec<Option<BtsId>> {
        self.rows
            .iter()
            .map(|r| {
                r.weights
                    .iter()
                    .fold(None::<(BtsId, f64)>, |best, &(b, w)| match best {
                        Some((_, bw)) if bw >= w => best,
                        _ => Some((b, w)),
                    })
                    .map(|(b, _)| b)
            })
            .collect()
    }
}

fn check_rows_match(rss: &RssField, settlements: &[Settlement]) -> Result<()> {
    if rss.pixel_ids().len() != settlements.len()
        || rss
            .pixel_ids()
            .iter()
            .zip(settlements)
            .any(|(&id, s)| id != s.pixel as u64)
    {
        return Err(Error::Mismatch(
            "rss field rows do not match the settlement list".into(),
        ));
    }
    Ok(())
}

/// Best-server assignment of every receiver row of `rss`; rows without a
/// live link stay unlabelled.
pub fn best_server(rss: &RssField) -> Assignment {
    let labels = (0..rss.pixel_ids().len())
        .map(|i| rss.strongest_live(i, 1).first().map(|&(j, _)| j as u32))
        .collect();
    Assignment {
        bts_ids: rss.bts_ids().to_vec(),
        labels,
    }
}

/// Best server: each settlement is served by its strongest live link.
pub fn weights_bsa(
    rss: &RssField,
    settlements: &[Settlement],
    zones: &ZoneRaster,
) -> Result<(PixelWeights, WeightMatrix)> {
    check_rows_match(rss, settlements)?;
    let rows = settlements
        .iter()
        .enumerate()
        .map(|(i, s)| PixelRow {
            pixel: s.pixel,
            count: 1.0,
            weights: rss
                .strongest_live(i, 1)
                .into_iter()
                .map(|(j, _)| (rss.bts_ids()[j], 1.0))
                .collect(),
        })
        .collect();
    let pw = PixelWeights {
        scheme: PixelScheme::Bsa,
        idw: None,
        dead_threshold_dbm: rss.dead_threshold_dbm(),
        rows,
    };
    let wm = pw.area_weights(zones, Scheme::Bsa);
    Ok((pw, wm))
}

/// Inverse signal strength weights `|P_rx|^-s` over the `k` strongest live
/// links of each settlement.
pub fn idw_link_weights(links: &[(BtsId, f64)], s: f64) -> Vec<(BtsId, f64)> {
    if links.is_empty() {
        return Vec::new();
    }
    // relative to the smallest magnitude so the largest v is exactly 1
    let logs: Vec<f64> = links
        .iter()
        .map(|&(_, p)| p.abs().max(MIN_ABS_RSS_DBM).ln())
        .collect();
    let min_log = logs.iter().copied().fold(f64::INFINITY, f64::min);
    let v: Vec<f64> = logs.iter().map(|l| (-s * (l - min_log)).exp()).collect();
    let total: f64 = v.iter().sum();
    let mut out: Vec<(BtsId, f64)> = links
        .iter()
        .zip(v)
        .map(|(&(b, _), v)| (b, v / total))
        .collect();
    out.sort_by_key(|(b, _)| *b);
    out
}

pub fn weights_idw(
    rss: &RssField,
    settlements: &[Settlement],
    zones: &ZoneRaster,
    params: IdwParams,
) -> Result<(PixelWeights, WeightMatrix)> {
    params.validate()?;
    check_rows_match(rss, settlements)?;
    if let Some(kept) = rss.retained_per_pixel() {
        if kept < params.k.min(rss.bts_ids().len()) {
            return Err(Error::Config(format!(
                "rss field retains {kept} links per pixel, idw needs k = {}",
                params.k
            )));
        }
    }
    let rows = settlements
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let links: Vec<(BtsId, f64)> = rss
                .strongest_live(i, params.k)
                .into_iter()
                .map(|(j, v)| (rss.bts_ids()[j], v))
                .collect();
            PixelRow {
                pixel: s.pixel,
                count: 1.0,
                weights: idw_link_weights(&links, params.s),
            }
        })
        .collect();
    let pw = PixelWeights {
        scheme: PixelScheme::Idw,
        idw: Some(params),
        dead_threshold_dbm: rss.dead_threshold_dbm(),
        rows,
    };
    let wm = pw.area_weights(zones, Scheme::Idw);
    Ok((pw, wm))
}

/// Scales each pixel's contribution by an auxiliary count on the same grid.
pub fn refine_weights(
    pixel_weights: &PixelWeights,
    auxiliary: &SettlementRaster,
    grid: &Grid,
) -> Result<PixelWeights> {
    if !auxiliary.grid.same_shape(grid) {
        return Err(Error::Mismatch(
            "auxiliary raster is on a different grid".into(),
        ));
    }
    let mut out = pixel_weights.clone();
    for row in &mut out.rows {
        let aux = auxiliary.value_or_zero(row.pixel);
        if !(aux >= 0.0 && aux.is_finite()) {
            return Err(Error::Data(format!(
                "auxiliary value {aux} at pixel {} is not a nonnegative count",
                row.pixel
            )));
        }
        row.count *= aux;
    }
    Ok(out)
}

/// BTS-level covariates; values may be explicitly missing.
#[derive(Debug, Clone, PartialEq)]
pub struct CovariateTable {
    pub names: Vec<String>,
    rows: BTreeMap<BtsId, Vec<Option<f64>>>,
}

impl CovariateTable {
    pub fn new(names: Vec<String>) -> Self {
        CovariateTable {
            names,
            rows: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, bts: BtsId, values: Vec<Option<f64>>) -> Result<()> {
        if values.len() != self.names.len() {
            return Err(Error::Schema(format!(
                "bts {bts}: {} values for {} covariates",
                values.len(),
                self.names.len()
            )));
        }
        if self.rows.insert(bts, values).is_some() {
            return Err(Error::Schema(format!("duplicate bts_id {bts}")));
        }
        Ok(())
    }

    pub fn get(&self, bts: BtsId) -> Option<&[Option<f64>]> {
        self.rows.get(&bts).map(Vec::as_slice)
    }

    pub fn rows(&self) -> impl Iterator<Item = (BtsId, &[Option<f64>])> {
        self.rows.iter().map(|(b, v)| (*b, v.as_slice()))
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Statistic {
    Mean,
    Median,
}

impl FromStr for Statistic {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(Statistic::Mean),
            "median" => Ok(Statistic::Median),
            other => Err(Error::Schema(format!("unknown statistic `{other}`"))),
        }
    }
}

/// What to do with a weighted BTS whose covariate cell is empty.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MissingPolicy {
    /// Fail with [`Error::MissingCovariate`].
    Strict,
    /// Drop the BTS from that covariate and renormalise the remaining
    /// weights; the area is missing if nothing remains.
    Renormalize,
}

/// Area-level covariates, rows in weight-matrix order.
#[derive(Debug, Clone, PartialEq)]
pub struct AreaCovariates {
    pub names: Vec<String>,
    pub rows: Vec<(AreaId, Vec<Option<f64>>)>,
}

impl AreaCovariates {
    pub fn column(&self, name: &str) -> Option<Vec<(AreaId, Option<f64>)>> {
        let c = self.names.iter().position(|n| n == name)?;
        Some(self.rows.iter().map(|(a, v)| (a.clone(), v[c])).collect())
    }
}

/// Lower weighted median: the smallest value whose cumulative weight
/// reaches half the total.
pub fn weighted_median(values: &[(f64, f64)]) -> Option<f64> {
    let mut v: Vec<(f64, f64)> = values.iter().copied().filter(|(_, w)| *w > 0.0).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total: f64 = v.iter().map(|(_, w)| w).sum();
    let mut acc = 0.0;
    for (x, w) in &v {
        acc += w;
        if acc >= 0.5 * total * (1.0 - 1e-12) {
            return Some(*x);
        }
    }
    v.last().map(|(x, _)| *x)
}

/// Weighted mean (or weighted median) of BTS covariates per area.
pub fn aggregate(
    weights: &WeightMatrix,
    covariates: &CovariateTable,
    statistic: Statistic,
    policy: MissingPolicy,
) -> Result<AreaCovariates> {
    let ncov = covariates.names.len();
    let mut rows = Vec::with_capacity(weights.rows.len());
    for area in &weights.rows {
        let Some(ws) = &area.weights else {
            rows.push((area.area_id.clone(), vec![None; ncov]));
            continue;
        };
        let mut cells = Vec::with_capacity(ncov);
        for c in 0..ncov {
            let mut pairs = Vec::with_capacity(ws.len());
            for &(b, w) in ws {
                let values = covariates.get(b).ok_or(Error::MissingCovariate(b))?;
                match values[c] {
                    Some(v) => pairs.push((v, w)),
                    None if policy == MissingPolicy::Strict => {
                        return Err(Error::MissingCovariate(b))
                    }
                    None => {}
                }
            }
            let total: f64 = pairs.iter().map(|(_, w)| w).sum();
            let cell = if pairs.is_empty() || total <= 0.0 {
                None
            } else {
                match statistic {
                    Statistic::Mean => Some(pairs.iter().map(|(v, w)| v * w).sum::<f64>() / total),
                    Statistic::Median => weighted_median(&pairs),
                }
            };
            cells.push(cell);
        }
        rows.push((area.area_id.clone(), cells));
    }
    Ok(AreaCovariates {
        names: covariates.names.clone(),
        rows,
    })
}

/// Urbanity per area from site density: more than one BTS per km^2 is
/// urban, the least dense half (by density, then area id) is rural, the rest
/// suburban. Urban wins over rural.
pub fn classify_areas_by_bts_density(
    areas: &StatAreaSet,
    sites: &[Site],
    grid: Option<&Grid>,
) -> Result<Vec<(AreaId, EnvClass)>> {
    let mut counts = vec![0usize; areas.len()];
    for s in sites {
        if let Some(a) = areas.area_containing(s.x, s.y, grid) {
            counts[a] += 1;
        }
    }
    let mut density = Vec::with_capacity(areas.len());
    for (i, area) in areas.areas().iter().enumerate() {
        let km2 = areas.area_km2(i, grid)?;
        if !(km2 > 0.0) {
            return Err(Error::Geometry(format!("area `{}` has zero size", area.id)));
        }
        density.push(counts[i] as f64 / km2);
    }
    let mut order: Vec<usize> = (0..areas.len()).collect();
    order.sort_by(|&a, &b| {
        density[a]
            .total_cmp(&density[b])
            .then_with(|| areas.areas()[a].id.cmp(&areas.areas()[b].id))
    });
    let n_rural = areas.len() / 2;
    let mut classes = vec![EnvClass::Suburban; areas.len()];
    for &i in &order[..n_rural] {
        classes[i] = EnvClass::Rural;
    }
    for (i, d) in density.iter().enumerate() {
        if *d > 1.0 {
            classes[i] = EnvClass::Urban;
        }
    }
    Ok(areas
        .areas()
        .iter()
        .zip(classes)
        .map(|(a, c)| (a.id.clone(), c))
        .collect())
}

/// Technical assumptions used when real BTS specifications are unknown.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NaiveProfile {
    pub height_m: f64,
    pub power_dbm: f64,
    pub urban_freq_mhz: f64,
    pub other_freq_mhz: f64,
}

impl Default for NaiveProfile {
    fn default() -> Self {
        NaiveProfile {
            height_m: 30.0,
            power_dbm: 45.0,
            urban_freq_mhz: 2100.0,
            other_freq_mhz: 900.0,
        }
    }
}

/// Environment class of each site, taken from the area containing it. Sites
/// outside all areas are rural.
pub fn site_classes(
    sites: &[Site],
    areas: &StatAreaSet,
    classes: &[(AreaId, EnvClass)],
    grid: Option<&Grid>,
) -> Result<Vec<EnvClass>> {
    let lookup: HashMap<&AreaId, EnvClass> = classes.iter().map(|(a, c)| (a, *c)).collect();
    let mut envs = Vec::with_capacity(sites.len());
    let mut outside = 0;
    for s in sites {
        let env = match areas.area_containing(s.x, s.y, grid) {
            Some(a) => {
                let id = &areas.areas()[a].id;
                *lookup
                    .get(id)
                    .ok_or_else(|| Error::Config(format!("no class for area `{id}`")))?
            }
            None => {
                outside += 1;
                EnvClass::Rural
            }
        };
        envs.push(env);
    }
    if outside > 0 {
        log::warn!("{outside} bts outside every area treated as rural");
    }
    Ok(envs)
}

/// Guessed specifications for every site, plus the environment class used
/// for its links.
pub fn synthesize_naive_specs(
    sites: &[Site],
    areas: &StatAreaSet,
    classes: &[(AreaId, EnvClass)],
    grid: Option<&Grid>,
    profile: &NaiveProfile,
) -> Result<(Vec<AntennaSpec>, Vec<EnvClass>)> {
    let envs = site_classes(sites, areas, classes, grid)?;
    Ok((naive_specs(sites, &envs, profile)?, envs))
}

/// Naive specifications for sites whose env class is already known.
pub fn naive_specs(
    sites: &[Site],
    classes: &[EnvClass],
    profile: &NaiveProfile,
) -> Result<Vec<AntennaSpec>> {
    if sites.len() != classes.len() {
        return Err(Error::Mismatch(format!(
            "{} env classes for {} sites",
            classes.len(),
            sites.len()
        )));
    }
    Ok(sites
        .iter()
        .zip(classes)
        .map(|(s, env)| AntennaSpec {
            bts_id: s.bts_id,
            x: s.x,
            y: s.y,
            height_m: profile.height_m,
            freq_mhz: if *env == EnvClass::Urban {
                profile.urban_freq_mhz
            } else {
                profile.other_freq_mhz
            },
            power_dbm: profile.power_dbm,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::{AreaGeometry, StatArea};

    fn two_areas() -> (Grid, StatAreaSet) {
        let g = Grid::new(4, 2, 1000.0, 0.0, 0.0).unwrap();
        let set = StatAreaSet::new(vec![
            StatArea {
                id: "A".into(),
                geometry: AreaGeometry::Mask(vec![0, 1, 4, 5]),
            },
            StatArea {
                id: "B".into(),
                geometry: AreaGeometry::Mask(vec![2, 3, 6, 7]),
            },
        ])
        .unwrap();
        (g, set)
    }

    fn site(id: u32, x: f64, y: f64) -> Site {
        Site {
            bts_id: BtsId(id),
            x,
            y,
        }
    }

    #[test]
    fn p2p_two_in_one_area() {
        let (g, areas) = two_areas();
        let m = weights_p2p(
            &[site(1, 500.0, 500.0), site(2, 1500.0, 1500.0)],
            &areas,
            Some(&g),
        );
        assert_eq!(
            m.rows[0].weights,
            Some(vec![(BtsId(1), 0.5), (BtsId(2), 0.5)])
        );
        assert_eq!(m.rows[1].weights, None);
    }

    #[test]
    fn p2p_drops_outside_sites() {
        let (g, areas) = two_areas();
        let m = weights_p2p(
            &[site(1, 500.0, 500.0), site(9, -50.0, 0.0)],
            &areas,
            Some(&g),
        );
        assert_eq!(m.dropped_bts, vec![BtsId(9)]);
        assert_eq!(m.covered_count(), 1);
    }

    #[test]
    fn idw_hand_values() {
        let w = idw_link_weights(&[(BtsId(1), -50.0), (BtsId(2), -100.0)], 1.0);
        assert!((w[0].1 - 2.0 / 3.0).abs() < 1e-12);
        assert!((w[1].1 - 1.0 / 3.0).abs() < 1e-12);
        let w = idw_link_weights(&[(BtsId(1), -50.0), (BtsId(2), -100.0)], 8.0);
        assert!((w[0].1 - 1.0 / (1.0 + 0.5f64.powi(8))).abs() < 1e-12);
        assert!((w[0].1 - 0.99611).abs() < 1e-5);
    }

    #[test]
    fn idw_zero_exponent_is_uniform() {
        let w = idw_link_weights(
            &[(BtsId(3), -60.0), (BtsId(1), -80.0), (BtsId(2), -105.0)],
            0.0,
        );
        for (_, v) in &w {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
        assert_eq!(
            w.iter().map(|x| x.0).collect::<Vec<_>>(),
            [BtsId(1), BtsId(2), BtsId(3)]
        );
    }

    #[test]
    fn idw_guards_near_zero_rss() {
        let w = idw_link_weights(&[(BtsId(1), 0.0), (BtsId(2), -0.5), (BtsId(3), -2.0)], 2.0);
        assert!(w.iter().all(|(_, v)| v.is_finite()));
        assert!((w[0].1 - w[1].1).abs() < 1e-15);
        assert!((w[0].1 - 4.0 / 9.0).abs() < 1e-12);
    }

    #[test]
    fn idw_rejects_bad_params() {
        assert!(IdwParams { s: -1.0, k: 3 }.validate().is_err());
        assert!(IdwParams { s: 1.0, k: 0 }.validate().is_err());
    }

    #[test]
    fn aggregation_arithmetic() {
        let wm = WeightMatrix {
            scheme: Scheme::Voronoi,
            rows: vec![AreaWeights {
                area_id: "A".into(),
                weights: Some(vec![(BtsId(1), 0.7), (BtsId(2), 0.3)]),
            }],
            dropped_bts: vec![],
        };
        let mut cov = CovariateTable::new(vec!["r".into()]);
        cov.insert(BtsId(1), vec![Some(1.0)]).unwrap();
        cov.insert(BtsId(2), vec![Some(0.0)]).unwrap();
        let out = aggregate(&wm, &cov, Statistic::Mean, MissingPolicy::Strict).unwrap();
        assert!((out.rows[0].1[0].unwrap() - 0.7).abs() < 1e-15);
        let med = aggregate(&wm, &cov, Statistic::Median, MissingPolicy::Strict).unwrap();
        assert_eq!(med.rows[0].1[0], Some(1.0));
    }

    #[test]
    fn missing_covariate_names_bts() {
        let wm = WeightMatrix {
            scheme: Scheme::P2p,
            rows: vec![AreaWeights {
                area_id: "A".into(),
                weights: Some(vec![(BtsId(4), 1.0)]),
            }],
            dropped_bts: vec![],
        };
        let cov = CovariateTable::new(vec!["r".into()]);
        let err = aggregate(&wm, &cov, Statistic::Mean, MissingPolicy::Renormalize).unwrap_err();
        assert!(matches!(err, Error::MissingCovariate(BtsId(4))));
        assert!(err.to_string().contains('4'));
    }

    #[test]
    fn empty_cell_policy() {
        let wm = WeightMatrix {
            scheme: Scheme::P2p,
            rows: vec![AreaWeights {
                area_id: "A".into(),
                weights: Some(vec![(BtsId(1), 0.25), (BtsId(2), 0.75)]),
            }],
            dropped_bts: vec![],
        };
        let mut cov = CovariateTable::new(vec!["r".into()]);
        cov.insert(BtsId(1), vec![Some(0.2)]).unwrap();
        cov.insert(BtsId(2), vec![None]).unwrap();
        assert!(aggregate(&wm, &cov, Statistic::Mean, MissingPolicy::Strict).is_err());
        let out = aggregate(&wm, &cov, Statistic::Mean, MissingPolicy::Renormalize).unwrap();
        assert_eq!(out.rows[0].1[0], Some(0.2));
    }

    #[test]
    fn no_coverage_yields_missing() {
        let (g, areas) = two_areas();
        let m = weights_p2p(&[site(1, 500.0, 500.0)], &areas, Some(&g));
        let mut cov = CovariateTable::new(vec!["a".into(), "b".into()]);
        cov.insert(BtsId(1), vec![Some(1.0), Some(2.0)]).unwrap();
        let out = aggregate(&m, &cov, Statistic::Mean, MissingPolicy::Strict).unwrap();
        assert_eq!(out.rows[1].1, vec![None, None]);
    }

    #[test]
    fn weighted_median_cases() {
        assert_eq!(
            weighted_median(&[(3.0, 0.2), (1.0, 0.2), (2.0, 0.6)]),
            Some(2.0)
        );
        assert_eq!(weighted_median(&[(1.0, 0.5), (2.0, 0.5)]), Some(1.0));
        assert_eq!(weighted_median(&[]), None);
    }

    #[test]
    fn duplicate_covariate_rejected() {
        let mut cov = CovariateTable::new(vec!["r".into()]);
        cov.insert(BtsId(1), vec![Some(1.0)]).unwrap();
        assert!(cov.insert(BtsId(1), vec![Some(2.0)]).is_err());
    }

    #[test]
    fn density_classes() {
        // four 1 km^2 areas
        let g = Grid::new(4, 1, 1000.0, 0.0, 0.0).unwrap();
        let areas = StatAreaSet::new(
            (0..4)
                .map(|i| StatArea {
                    id: AreaId(format!("a{i}")),
                    geometry: AreaGeometry::Mask(vec![i]),
                })
                .collect(),
        )
        .unwrap();
        let sites = [
            site(1, 100.0, 500.0),
            site(2, 200.0, 500.0),
            site(3, 1500.0, 500.0),
        ];
        let classes = classify_areas_by_bts_density(&areas, &sites, Some(&g)).unwrap();
        let c: Vec<EnvClass> = classes.iter().map(|x| x.1).collect();
        // densities 2, 1, 0, 0 -> a0 urban, a2/a3 rural, a1 suburban
        assert_eq!(
            c,
            [
                EnvClass::Urban,
                EnvClass::Suburban,
                EnvClass::Rural,
                EnvClass::Rural
            ]
        );
    }

    #[test]
    fn naive_specs_follow_area_class() {
        let (g, areas) = two_areas();
        let classes = vec![
            (AreaId::from("A"), EnvClass::Urban),
            (AreaId::from("B"), EnvClass::Rural),
        ];
        let (specs, envs) = synthesize_naive_specs(
            &[
                site(1, 500.0, 500.0),
                site(2, 3500.0, 500.0),
                site(3, 9000.0, 0.0),
            ],
            &areas,
            &classes,
            Some(&g),
            &NaiveProfile::default(),
        )
        .unwrap();
        let got: Vec<(f64, f64, f64)> = specs
            .iter()
            .map(|s| (s.height_m, s.freq_mhz, s.power_dbm))
            .collect();
        assert_eq!(
            got,
            [
                (30.0, 2100.0, 45.0),
                (30.0, 900.0, 45.0),
                (30.0, 900.0, 45.0)
            ]
        );
        assert_eq!(envs, [EnvClass::Urban, EnvClass::Rural, EnvClass::Rural]);
    }
}
