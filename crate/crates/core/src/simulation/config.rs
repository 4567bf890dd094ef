use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::{AreaGeometry, AreaId, Grid, StatArea, StatAreaSet};

/// Synthetic country parameters. Pixel units unless stated otherwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub ncols: usize,
    pub nrows: usize,
    pub cell_size_m: f64,
    pub population: u64,
    /// Share of the population drawn around the city centre.
    pub urban_share: f64,
    pub layout: LayoutConfig,
    /// Standard deviation of the city's bivariate normal, in pixels.
    pub urban_sd_px: f64,
    pub rural: RuralConfig,
    pub uninhabited: PixelRect,
    pub poverty: PovertyConfig,
    pub bts: BtsConfig,
    pub rx_height_m: f64,
    pub kmeans_max_iter: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            ncols: 1000,
            nrows: 1000,
            cell_size_m: 100.0,
            population: 1_000_000,
            urban_share: 0.5,
            layout: LayoutConfig::default(),
            // variance of 50 km^2 at 100 m pixels
            urban_sd_px: 70.710_678_118_654_76,
            rural: RuralConfig::default(),
            uninhabited: PixelRect {
                col: 700,
                row: 100,
                ncols: 150,
                nrows: 150,
            },
            poverty: PovertyConfig::default(),
            bts: BtsConfig::default(),
            rx_height_m: 1.0,
            kmeans_max_iter: 50,
        }
    }
}

/// Square blocks tile the grid; the city occupies a square of blocks split
/// into `urban_split x urban_split` small areas, every other block is one
/// rural area.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LayoutConfig {
    pub block_px: usize,
    /// Top-left block of the city as `[col, row]`.
    pub urban_block: [usize; 2],
    pub urban_span_blocks: usize,
    pub urban_split: usize,
}

impl Default for LayoutConfig {
    fn default() -> Self {
        LayoutConfig {
            block_px: 200,
            urban_block: [0, 0],
            urban_span_blocks: 1,
            urban_split: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RuralConfig {
    pub clusters: usize,
    /// Share of the rural population living in clusters; the rest is
    /// spread uniformly over the inhabitable rural region.
    pub cluster_share: f64,
    /// Per-cluster standard deviation is drawn uniformly from this range.
    pub cluster_sd_px: [f64; 2],
}

impl Default for RuralConfig {
    fn default() -> Self {
        RuralConfig {
            clusters: 8,
            cluster_share: 0.5,
            // around twice the city's deviation (four times its variance)
            cluster_sd_px: [100.0, 180.0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PixelRect {
    pub col: usize,
    pub row: usize,
    pub ncols: usize,
    pub nrows: usize,
}

impl PixelRect {
    pub fn contains(&self, row: usize, col: usize) -> bool {
        row >= self.row
            && row < self.row + self.nrows
            && col >= self.col
            && col < self.col + self.ncols
    }

    fn overlaps(&self, other: &PixelRect) -> bool {
        self.col < other.col + other.ncols
            && other.col < self.col + self.ncols
            && self.row < other.row + other.nrows
            && other.row < self.row + self.nrows
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PovertyConfig {
    /// Edge of the square pixel blocks sharing one mean rate.
    pub block_px: usize,
    pub sigma: f64,
}

impl Default for PovertyConfig {
    fn default() -> Self {
        PovertyConfig {
            block_px: 4,
            sigma: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BtsConfig {
    /// Inhabitants per BTS for the urban draw.
    pub urban_inhabitants_per_bts: f64,
    pub rural_inhabitants_per_bts: f64,
    pub height_m: [f64; 2],
    /// Rural masts draw heights from this upper sub-range.
    pub rural_height_m: [f64; 2],
    pub urban_freqs_mhz: Vec<f64>,
    pub rural_freqs_mhz: Vec<f64>,
    pub power_dbm: [f64; 2],
    /// Share of BTS with the smallest clusters classed urban.
    pub urban_quantile: f64,
    /// Share of BTS with the largest clusters classed rural.
    pub rural_quantile: f64,
}

impl Default for BtsConfig {
    fn default() -> Self {
        BtsConfig {
            urban_inhabitants_per_bts: 5000.0,
            rural_inhabitants_per_bts: 10000.0,
            height_m: [15.0, 60.0],
            rural_height_m: [37.5, 60.0],
            urban_freqs_mhz: vec![900.0, 2100.0],
            rural_freqs_mhz: vec![900.0],
            power_dbm: [40.0, 47.0],
            urban_quantile: 0.5,
            rural_quantile: 0.05,
        }
    }
}

fn range_ok(r: [f64; 2]) -> bool {
    r[0].is_finite() && r[1].is_finite() && r[0] <= r[1]
}

impl SimConfig {
    pub fn grid(&self) -> Grid {
        Grid {
            ncols: self.ncols,
            nrows: self.nrows,
            cell_size_m: self.cell_size_m,
            origin_x: 0.0,
            origin_y: 0.0,
        }
    }

    pub fn urban_rect(&self) -> PixelRect {
        let l = &self.layout;
        PixelRect {
            col: l.urban_block[0] * l.block_px,
            row: l.urban_block[1] * l.block_px,
            ncols: l.urban_span_blocks * l.block_px,
            nrows: l.urban_span_blocks * l.block_px,
        }
    }

    /// Number of BTS placed in the city and in the countryside.
    pub fn bts_counts(&self) -> (usize, usize) {
        let n_urban = self.urban_population() as f64;
        let n_rural = (self.population - self.urban_population()) as f64;
        (
            (n_urban / self.bts.urban_inhabitants_per_bts).round() as usize,
            (n_rural / self.bts.rural_inhabitants_per_bts).round() as usize,
        )
    }

    pub fn urban_population(&self) -> u64 {
        (self.population as f64 * self.urban_share).round() as u64
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_owned()));
        self.grid().validate()?;
        let l = &self.layout;
        if l.block_px == 0 || !self.ncols.is_multiple_of(l.block_px) || !self.nrows.is_multiple_of(l.block_px) {
            return bad("layout.block_px must divide the grid dimensions");
        }
        if l.urban_span_blocks == 0
            || l.urban_block[0] + l.urban_span_blocks > self.ncols / l.block_px
            || l.urban_block[1] + l.urban_span_blocks > self.nrows / l.block_px
        {
            return bad("urban blocks fall outside the grid");
        }
        if l.urban_split == 0 || !(l.urban_span_blocks * l.block_px).is_multiple_of(l.urban_split) {
            return bad("layout.urban_split must divide the city edge");
        }
        let u = &self.uninhabited;
        if u.col + u.ncols > self.ncols || u.row + u.nrows > self.nrows {
            return bad("uninhabited zone falls outside the grid");
        }
        if u.ncols > 0 && u.nrows > 0 && u.overlaps(&self.urban_rect()) {
            return bad("uninhabited zone must lie in the rural region");
        }
        if self.population == 0 {
            return bad("population must be positive");
        }
        if !(0.0..=1.0).contains(&self.urban_share) {
            return bad("urban_share must be in [0, 1]");
        }
        if !(self.urban_sd_px > 0.0) {
            return bad("urban_sd_px must be positive");
        }
        if !(0.0..=1.0).contains(&self.rural.cluster_share) {
            return bad("rural.cluster_share must be in [0, 1]");
        }
        if self.rural.cluster_share > 0.0 && self.rural.clusters == 0 {
            return bad("rural.clusters must be positive when cluster_share > 0");
        }
        if !range_ok(self.rural.cluster_sd_px) || !(self.rural.cluster_sd_px[0] > 0.0) {
            return bad("rural.cluster_sd_px must be a positive range");
        }
        if self.poverty.block_px == 0 || !(self.poverty.sigma >= 0.0) {
            return bad("poverty block must be nonempty and sigma nonnegative");
        }
        let b = &self.bts;
        if !(b.urban_inhabitants_per_bts > 0.0 && b.rural_inhabitants_per_bts > 0.0) {
            return bad("inhabitants per bts must be positive");
        }
        if !range_ok(b.height_m) || !range_ok(b.rural_height_m) || !range_ok(b.power_dbm) {
            return bad("bts ranges must be nonempty");
        }
        if b.height_m[0] <= 0.0 || b.rural_height_m[0] <= 0.0 {
            return bad("bts heights must be positive");
        }
        if b.urban_freqs_mhz.is_empty() || b.rural_freqs_mhz.is_empty() {
            return bad("bts frequency lists must be nonempty");
        }
        if b.urban_freqs_mhz
            .iter()
            .chain(&b.rural_freqs_mhz)
            .any(|f| !(30.0..=3000.0).contains(f))
        {
            return bad("bts frequencies must lie in [30, 3000] MHz");
        }
        if !(0.0..=1.0).contains(&b.urban_quantile)
            || !(0.0..=1.0).contains(&b.rural_quantile)
            || b.urban_quantile + b.rural_quantile > 1.0
        {
            return bad("env quantiles must be shares summing to at most 1");
        }
        if !(1.0..=10.0).contains(&self.rx_height_m) {
            return bad("rx_height_m must be in [1, 10]");
        }
        let (ku, kr) = self.bts_counts();
        if ku + kr == 0 {
            return bad("configuration places no bts");
        }
        Ok(())
    }

    /// Number of city areas; they come first in [`SimConfig::areas`].
    pub fn urban_area_count(&self) -> usize {
        self.layout.urban_split * self.layout.urban_split
    }

    /// Statistical areas: city areas `U01..` then rural blocks `R01..`, each
    /// in row-major order.
    pub fn areas(&self) -> StatAreaSet {
        let l = &self.layout;
        let city = self.urban_rect();
        let sub = city.ncols / l.urban_split;
        let mut areas = Vec::new();
        let rect_mask = |r: PixelRect| -> Vec<usize> {
            (r.row..r.row + r.nrows)
                .flat_map(|row| (r.col..r.col + r.ncols).map(move |c| row * self.ncols + c))
                .collect()
        };
        let mut n = 0;
        for sr in 0..l.urban_split {
            for sc in 0..l.urban_split {
                n += 1;
                areas.push(StatArea {
                    id: AreaId(format!("U{n:02}")),
                    geometry: AreaGeometry::Mask(rect_mask(PixelRect {
                        col: city.col + sc * sub,
                        row: city.row + sr * sub,
                        ncols: sub,
                        nrows: sub,
                    })),
                });
            }
        }
        let mut n = 0;
        for br in 0..self.nrows / l.block_px {
            for bc in 0..self.ncols / l.block_px {
                let rect = PixelRect {
                    col: bc * l.block_px,
                    row: br * l.block_px,
                    ncols: l.block_px,
                    nrows: l.block_px,
                };
                if rect.overlaps(&city) {
                    continue;
                }
                n += 1;
                areas.push(StatArea {
                    id: AreaId(format!("R{n:02}")),
                    geometry: AreaGeometry::Mask(rect_mask(rect)),
                });
            }
        }
        StatAreaSet::new(areas).expect("generated ids are unique")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_layout_has_sixteen_urban_and_twentyfour_rural_areas() {
        let cfg = SimConfig::default();
        cfg.validate().unwrap();
        let areas = cfg.areas();
        let urban = areas.ids().filter(|a| a.0.starts_with('U')).count();
        assert_eq!((urban, areas.len() - urban), (16, 24));
        let zones = areas.zones(&cfg.grid()).unwrap();
        assert!(zones.zone.iter().all(|&z| z != crate::geo::NO_ZONE));
        assert_eq!(zones.sizes[0], 50 * 50);
        assert_eq!(zones.sizes[16], 200 * 200);
    }

    #[test]
    fn default_bts_counts() {
        assert_eq!(SimConfig::default().bts_counts(), (100, 50));
    }

    #[test]
    fn rejects_lake_in_city() {
        let mut cfg = SimConfig::default();
        cfg.uninhabited = PixelRect {
            col: 10,
            row: 10,
            ncols: 10,
            nrows: 10,
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn rejects_non_tiling_layout() {
        let mut cfg = SimConfig::default();
        cfg.layout.block_px = 300;
        assert!(cfg.validate().is_err());
    }
}
