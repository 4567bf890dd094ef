//! Raster grids, settlement extraction, rasterised voronoi tiles, polygon
//! rasterisation and zonal counting.

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::propagation::{BtsId, RxPoint};

/// A north-up raster grid. Row 0 is the top row; `origin` is the lower-left
/// corner of the lower-left cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub ncols: usize,
    pub nrows: usize,
    pub cell_size_m: f64,
    pub origin_x: f64,
    pub origin_y: f64,
}

impl Grid {
    pub fn new(
        ncols: usize,
        nrows: usize,
        cell_size_m: f64,
        origin_x: f64,
        origin_y: f64,
    ) -> Result<Self> {
        let grid = Grid {
            ncols,
            nrows,
            cell_size_m,
            origin_x,
            origin_y,
        };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        if self.ncols == 0 || self.nrows == 0 {
            return Err(Error::Config(
                "grid must have at least one row and column".into(),
            ));
        }
        if !(self.cell_size_m > 0.0 && self.cell_size_m.is_finite()) {
            return Err(Error::Range {
                param: "cell_size_m",
                value: self.cell_size_m,
                valid: "> 0",
            });
        }
        if !(self.origin_x.is_finite() && self.origin_y.is_finite()) {
            return Err(Error::Config("grid origin must be finite".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.ncols * self.nrows
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, row: usize, col: usize) -> usize {
        row * self.ncols + col
    }

    pub fn row_col(&self, index: usize) -> (usize, usize) {
        (index / self.ncols, index % self.ncols)
    }

    pub fn center_rc(&self, row: usize, col: usize) -> (f64, f64) {
        (
            self.origin_x + (col as f64 + 0.5) * self.cell_size_m,
            self.origin_y + (self.nrows as f64 - row as f64 - 0.5) * self.cell_size_m,
        )
    }

    pub fn center(&self, index: usize) -> (f64, f64) {
        let (r, c) = self.row_col(index);
        self.center_rc(r, c)
    }

    /// Pixel containing a point; points on the upper/right grid edge are
    /// outside.
    pub fn locate(&self, x: f64, y: f64) -> Option<usize> {
        let fc = (x - self.origin_x) / self.cell_size_m;
        let fr = self.nrows as f64 - (y - self.origin_y) / self.cell_size_m;
        if !(fc >= 0.0 && fr > 0.0) {
            return None;
        }
        let c = fc.floor() as usize;
        let r = fr.ceil() as usize - 1;
        (c < self.ncols && r < self.nrows).then(|| self.index(r, c))
    }

    pub fn cell_area_m2(&self) -> f64 {
        self.cell_size_m * self.cell_size_m
    }

    pub fn same_shape(&self, other: &Grid) -> bool {
        self == other
    }

    /// Receiver points at every pixel centre.
    pub fn rx_points(&self) -> Vec<RxPoint> {
        (0..self.len())
            .map(|i| {
                let (x, y) = self.center(i);
                RxPoint { id: i as u64, x, y }
            })
            .collect()
    }
}

/// Per-pixel counts on a grid: population, settlement flags or any other
/// nonnegative auxiliary count.
#[derive(Debug, Clone, PartialEq)]
pub struct SettlementRaster {
    pub grid: Grid,
    /// Row-major values; `None` marks nodata.
    pub values: Vec<Option<f64>>,
}

impl SettlementRaster {
    pub fn new(grid: Grid, values: Vec<Option<f64>>) -> Result<Self> {
        grid.validate()?;
        if values.len() != grid.len() {
            return Err(Error::Config(format!(
                "raster has {} values for a {}x{} grid",
                values.len(),
                grid.ncols,
                grid.nrows
            )));
        }
        Ok(SettlementRaster { grid, values })
    }

    pub fn from_counts(grid: Grid, counts: &[f64]) -> Result<Self> {
        Self::new(grid, counts.iter().map(|&v| Some(v)).collect())
    }

    pub fn is_settlement(&self, index: usize) -> bool {
        matches!(self.values[index], Some(v) if v >= 1.0)
    }

    pub fn settlement_count(&self) -> usize {
        (0..self.values.len())
            .filter(|&i| self.is_settlement(i))
            .count()
    }

    /// Value at a pixel with nodata read as zero.
    pub fn value_or_zero(&self, index: usize) -> f64 {
        self.values[index].unwrap_or(0.0)
    }
}

/// An inhabited pixel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Settlement {
    /// Row-major pixel index, stable across runs.
    pub pixel: usize,
    pub x: f64,
    pub y: f64,
    pub count: f64,
}

impl Settlement {
    pub fn rx_point(&self) -> RxPoint {
        RxPoint {
            id: self.pixel as u64,
            x: self.x,
            y: self.y,
        }
    }
}

/// Every pixel with value >= 1 that is not nodata, in row-major order.
pub fn extract_settlements(raster: &SettlementRaster) -> Vec<Settlement> {
    let out: Vec<Settlement> = (0..raster.values.len())
        .filter(|&i| raster.is_settlement(i))
        .map(|i| {
            let (x, y) = raster.grid.center(i);
            Settlement {
                pixel: i,
                x,
                y,
                count: raster.value_or_zero(i),
            }
        })
        .collect();
    if out.is_empty() {
        log::warn!("raster contains no settlement pixels");
    }
    out
}

/// Statistical area identifier.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AreaId(pub String);

impl fmt::Display for AreaId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for AreaId {
    fn from(s: &str) -> Self {
        AreaId(s.to_owned())
    }
}

/// A closed ring, first vertex repeated at the end.
pub type Ring = Vec<(f64, f64)>;

#[derive(Debug, Clone, PartialEq)]
pub enum AreaGeometry {
    /// Sorted row-major pixel indices on the analysis grid.
    Mask(Vec<usize>),
    /// Polygons, each a list of rings; membership is even-odd over all rings.
    Polygons(Vec<Vec<Ring>>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct StatArea {
    pub id: AreaId,
    pub geometry: AreaGeometry,
}

/// Statistical areas with unique ids, in input order.
#[derive(Debug, Clone, PartialEq)]
pub struct StatAreaSet {
    areas: Vec<StatArea>,
}

impl StatAreaSet {
    pub fn new(areas: Vec<StatArea>) -> Result<Self> {
        let mut seen = HashSet::new();
        for a in &areas {
            if !seen.insert(&a.id) {
                return Err(Error::Schema(format!("duplicate area_id `{}`", a.id)));
            }
        }
        Ok(StatAreaSet { areas })
    }

    pub fn areas(&self) -> &[StatArea] {
        &self.areas
    }

    pub fn len(&self) -> usize {
        self.areas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.areas.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &AreaId> {
        self.areas.iter().map(|a| &a.id)
    }

    /// Rasterises every area onto `grid`; fails if two areas claim the same
    /// pixel.
    pub fn zones(&self, grid: &Grid) -> Result<ZoneRaster> {
        let mut zone = vec![NO_ZONE; grid.len()];
        let mut sizes = Vec::with_capacity(self.areas.len());
        for (z, area) in self.areas.iter().enumerate() {
            let mask = match &area.geometry {
                AreaGeometry::Mask(m) => {
                    if let Some(&p) = m.iter().find(|&&p| p >= grid.len()) {
                        return Err(Error::Geometry(format!(
                            "area `{}` references pixel {p} outside the grid",
                            area.id
                        )));
                    }
                    m.clone()
                }
                AreaGeometry::Polygons(polys) => {
                    let mut all = Vec::new();
                    for rings in polys {
                        all.extend(polygon_to_mask(rings, grid)?);
                    }
                    all.sort_unstable();
                    all.dedup();
                    all
                }
            };
            let mut size = 0;
            for p in mask {
                if zone[p] != NO_ZONE && zone[p] != z as u32 {
                    return Err(Error::Geometry(format!(
                        "areas `{}` and `{}` overlap at pixel {p}",
                        self.areas[zone[p] as usize].id, area.id
                    )));
                }
                if zone[p] == NO_ZONE {
                    size += 1;
                }
                zone[p] = z as u32;
            }
            sizes.push(size);
        }
        Ok(ZoneRaster {
            grid: *grid,
            zone,
            ids: self.areas.iter().map(|a| a.id.clone()).collect(),
            sizes,
        })
    }

    /// Index of the area containing a point. Polygons are tested exactly,
    /// masks through the pixel holding the point.
    pub fn area_containing(&self, x: f64, y: f64, grid: Option<&Grid>) -> Option<usize> {
        let pixel = grid.and_then(|g| g.locate(x, y));
        self.areas.iter().position(|a| match &a.geometry {
            AreaGeometry::Mask(m) => pixel.is_some_and(|p| m.binary_search(&p).is_ok()),
            AreaGeometry::Polygons(polys) => polys.iter().any(|rings| point_in_rings(x, y, rings)),
        })
    }

    /// Area in km^2: polygon area (first ring outer, others holes) or mask
    /// pixel count times cell area.
    pub fn area_km2(&self, index: usize, grid: Option<&Grid>) -> Result<f64> {
        let area = &self.areas[index];
        let m2 = match &area.geometry {
            AreaGeometry::Mask(m) => {
                let g = grid.ok_or_else(|| {
                    Error::Geometry(format!(
                        "area `{}` is a mask but no grid was given",
                        area.id
                    ))
                })?;
                m.len() as f64 * g.cell_area_m2()
            }
            AreaGeometry::Polygons(polys) => polys
                .iter()
                .map(|rings| {
                    let mut it = rings.iter();
                    let outer = it.next().map_or(0.0, |r| ring_area(r).abs());
                    outer - it.map(|r| ring_area(r).abs()).sum::<f64>()
                })
                .sum(),
        };
        Ok(m2 / 1e6)
    }
}

pub const NO_ZONE: u32 = u32::MAX;

/// Per-pixel zone index of a rasterised [`StatAreaSet`].
#[derive(Debug, Clone, PartialEq)]
pub struct ZoneRaster {
    pub grid: Grid,
    /// Zone index per pixel, [`NO_ZONE`] outside every area.
    pub zone: Vec<u32>,
    pub ids: Vec<AreaId>,
    /// Pixel count per zone.
    pub sizes: Vec<usize>,
}

impl ZoneRaster {
    pub fn zone_of(&self, pixel: usize) -> Option<usize> {
        let z = self.zone[pixel];
        (z != NO_ZONE).then_some(z as usize)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// Serving BTS per pixel (or per settlement), or uncovered.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    /// Known antennas; labels index into this list.
    pub bts_ids: Vec<BtsId>,
    pub labels: Vec<Option<u32>>,
}

impl Assignment {
    pub fn new(bts_ids: Vec<BtsId>, labels: Vec<Option<u32>>) -> Result<Self> {
        if let Some(bad) = labels
            .iter()
            .flatten()
            .find(|&&l| l as usize >= bts_ids.len())
        {
            return Err(Error::Mismatch(format!(
                "label {bad} references no known antenna"
            )));
        }
        Ok(Assignment { bts_ids, labels })
    }

    pub fn bts_of(&self, index: usize) -> Option<BtsId> {
        self.labels[index].map(|l| self.bts_ids[l as usize])
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn covered(&self) -> usize {
        self.labels.iter().filter(|l| l.is_some()).count()
    }

    /// Number of labelled entries per antenna.
    pub fn label_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.bts_ids.len()];
        for l in self.labels.iter().flatten() {
            counts[*l as usize] += 1;
        }
        counts
    }
}

/// A BTS location used by the geometric schemes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Site {
    pub bts_id: BtsId,
    pub x: f64,
    pub y: f64,
}

/// Index of the nearest site; equal distances go to the lowest bts id.
pub fn nearest_site(sites: &[Site], x: f64, y: f64) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (j, s) in sites.iter().enumerate() {
        let dx = x - s.x;
        let dy = y - s.y;
        let d = dx * dx + dy * dy;
        if d < best_d || (d == best_d && s.bts_id < sites[best].bts_id) {
            best = j;
            best_d = d;
        }
    }
    best
}

/// Labels every pixel with its nearest site (rasterised voronoi tiles).
pub fn voronoi_assign(grid: &Grid, sites: &[Site]) -> Result<Assignment> {
    if sites.is_empty() {
        return Err(Error::Config(
            "voronoi assignment needs at least one site".into(),
        ));
    }
    let labels = (0..grid.len())
        .into_par_iter()
        .map(|i| {
            let (x, y) = grid.center(i);
            Some(nearest_site(sites, x, y) as u32)
        })
        .collect();
    Ok(Assignment {
        bts_ids: sites.iter().map(|s| s.bts_id).collect(),
        labels,
    })
}

/// Same tiles evaluated only at the given points.
pub fn voronoi_assign_points(points: &[RxPoint], sites: &[Site]) -> Result<Assignment> {
    if sites.is_empty() {
        return Err(Error::Config(
            "voronoi assignment needs at least one site".into(),
        ));
    }
    Ok(Assignment {
        bts_ids: sites.iter().map(|s| s.bts_id).collect(),
        labels: points
            .par_iter()
            .map(|p| Some(nearest_site(sites, p.x, p.y) as u32))
            .collect(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ZonalRow {
    pub area_id: AreaId,
    /// `None` counts pixels left uncovered by the assignment.
    pub label: Option<BtsId>,
    pub count: f64,
}

/// Counts (or weighted sums) of pixels per (area, label), sorted by area
/// then label with uncovered first. Pixels whose weight is zero are skipped.
pub fn zonal_count(
    assignment: &Assignment,
    zones: &ZoneRaster,
    weights: Option<&[f64]>,
) -> Result<Vec<ZonalRow>> {
    if assignment.len() != zones.grid.len() {
        return Err(Error::Mismatch(format!(
            "assignment has {} pixels, zones {}",
            assignment.len(),
            zones.grid.len()
        )));
    }
    if let Some(w) = weights {
        if w.len() != zones.grid.len() {
            return Err(Error::Mismatch(
                "weight raster does not match the grid".into(),
            ));
        }
    }
    let mut seen = HashSet::new();
    for id in &zones.ids {
        if !seen.insert(id) {
            return Err(Error::Schema(format!("duplicate area_id `{id}`")));
        }
    }
    let mut table: BTreeMap<(&AreaId, Option<BtsId>), f64> = BTreeMap::new();
    for (p, label) in assignment.labels.iter().enumerate() {
        let Some(z) = zones.zone_of(p) else { continue };
        let w = weights.map_or(1.0, |w| w[p]);
        if w == 0.0 {
            continue;
        }
        let bts = label.map(|l| assignment.bts_ids[l as usize]);
        *table.entry((&zones.ids[z], bts)).or_insert(0.0) += w;
    }
    Ok(table
        .into_iter()
        .map(|((area_id, label), count)| ZonalRow {
            area_id: area_id.clone(),
            label,
            count,
        })
        .collect())
}

fn check_ring(ring: &Ring) -> Result<()> {
    if ring.len() < 4 {
        return Err(Error::Geometry(format!(
            "ring has {} vertices, need at least 4",
            ring.len()
        )));
    }
    if ring.first() != ring.last() {
        return Err(Error::Geometry("ring is not closed".into()));
    }
    if ring.iter().any(|(x, y)| !(x.is_finite() && y.is_finite())) {
        return Err(Error::Geometry("ring has non-finite vertices".into()));
    }
    Ok(())
}

fn ring_area(ring: &Ring) -> f64 {
    ring.windows(2)
        .map(|w| w[0].0 * w[1].1 - w[1].0 * w[0].1)
        .sum::<f64>()
        / 2.0
}

/// Even-odd point-in-polygon test over all rings.
pub fn point_in_rings(x: f64, y: f64, rings: &[Ring]) -> bool {
    let mut inside = false;
    for ring in rings {
        for w in ring.windows(2) {
            let (x1, y1) = w[0];
            let (x2, y2) = w[1];
            if (y1 > y) != (y2 > y) {
                let xi = x1 + (y - y1) / (y2 - y1) * (x2 - x1);
                if x < xi {
                    inside = !inside;
                }
            }
        }
    }
    inside
}

/// Pixels whose centre lies inside the polygon under the even-odd rule.
/// Scanline fill; returns sorted row-major indices.
pub fn polygon_to_mask(rings: &[Ring], grid: &Grid) -> Result<Vec<usize>> {
    for ring in rings {
        check_ring(ring)?;
    }
    let mut mask = Vec::new();
    let mut crossings = Vec::new();
    for r in 0..grid.nrows {
        let (_, cy) = grid.center_rc(r, 0);
        crossings.clear();
        for ring in rings {
            for w in ring.windows(2) {
                let (x1, y1) = w[0];
                let (x2, y2) = w[1];
                if (y1 > cy) != (y2 > cy) {
                    crossings.push(x1 + (cy - y1) / (y2 - y1) * (x2 - x1));
                }
            }
        }
        if crossings.is_empty() {
            continue;
        }
        crossings.sort_by(f64::total_cmp);
        // centre is inside iff an odd number of crossings lies strictly to
        // its right, i.e. it falls in [x_2k, x_2k+1)
        for pair in crossings.chunks_exact(2) {
            let first = ((pair[0] - grid.origin_x) / grid.cell_size_m - 0.5)
                .ceil()
                .max(0.0);
            let last = ((pair[1] - grid.origin_x) / grid.cell_size_m - 0.5).ceil();
            let (first, last) = (first as i64, (last as i64).min(grid.ncols as i64));
            for c in first..last {
                let c = c as usize;
                // guard against rounding at the pair edges
                let (cx, _) = grid.center_rc(r, c);
                if cx >= pair[0] && cx < pair[1] {
                    mask.push(grid.index(r, c));
                }
            }
            // one-pixel slack either side for floating point boundary cases
            for c in [first - 1, last] {
                if c >= 0 && (c as usize) < grid.ncols {
                    let (cx, _) = grid.center_rc(r, c as usize);
                    if cx >= pair[0] && cx < pair[1] {
                        mask.push(grid.index(r, c as usize));
                    }
                }
            }
        }
    }
    mask.sort_unstable();
    mask.dedup();
    Ok(mask)
}

/// Outline of a pixel mask as one rectangle ring per horizontal run.
pub fn mask_outline(mask: &[usize], grid: &Grid) -> Vec<Ring> {
    let mut sorted = mask.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let mut rings = Vec::new();
    let mut i = 0;
    while i < sorted.len() {
        let (r, c0) = grid.row_col(sorted[i]);
        let mut c1 = c0;
        while i + 1 < sorted.len()
            && sorted[i + 1] == sorted[i] + 1
            && grid.row_col(sorted[i + 1]).0 == r
        {
            i += 1;
            c1 += 1;
        }
        let x0 = grid.origin_x + c0 as f64 * grid.cell_size_m;
        let x1 = grid.origin_x + (c1 + 1) as f64 * grid.cell_size_m;
        let y1 = grid.origin_y + (grid.nrows - r) as f64 * grid.cell_size_m;
        let y0 = y1 - grid.cell_size_m;
        rings.push(vec![(x0, y0), (x1, y0), (x1, y1), (x0, y1), (x0, y0)]);
        i += 1;
    }
    rings
}
