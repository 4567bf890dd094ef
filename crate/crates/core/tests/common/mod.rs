//! Random small mapping instances and brute-force oracles, shared by the
//! mapping tests and the acceptance run.
#![allow(dead_code)]

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use covmap::geo::{
    extract_settlements, voronoi_assign, AreaGeometry, AreaId, Grid, Settlement, SettlementRaster,
    Site, StatArea, StatAreaSet, ZoneRaster,
};
use covmap::mapping::{
    aggregate, weights_aug_voronoi, weights_bsa, weights_idw, weights_p2p, weights_voronoi,
    CovariateTable, IdwParams, MissingPolicy, Statistic, WeightMatrix,
};
use covmap::propagation::{
    rss_field, AntennaSpec, BtsId, EnvClass, LinkEnv, RssField, RssOptions, VariationSpec,
};

pub struct Instance {
    pub grid: Grid,
    pub specs: Vec<AntennaSpec>,
    pub envs: Vec<EnvClass>,
    pub areas: StatAreaSet,
    pub zones: ZoneRaster,
    pub raster: SettlementRaster,
    pub settlements: Vec<Settlement>,
    pub field: RssField,
}

impl Instance {
    pub fn sites(&self) -> Vec<Site> {
        self.specs
            .iter()
            .map(|s| Site {
                bts_id: s.bts_id,
                x: s.x,
                y: s.y,
            })
            .collect()
    }
}

/// Grid up to 30 x 30, up to 8 BTS, up to 4 areas tiling the grid.
pub fn random_instance(seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ncols = rng.random_range(3..=30);
    let nrows = rng.random_range(3..=30);
    let cell = 100.0;
    let grid = Grid::new(ncols, nrows, cell, 0.0, 0.0).unwrap();
    let (w, h) = (ncols as f64 * cell, nrows as f64 * cell);

    let nbts = rng.random_range(1..=8);
    let mut ids: Vec<u32> = (1..=40).collect();
    let specs: Vec<AntennaSpec> = (0..nbts)
        .map(|_| {
            let id = ids.swap_remove(rng.random_range(0..ids.len()));
            AntennaSpec {
                bts_id: BtsId(id),
                x: rng.random_range(0.0..w),
                y: rng.random_range(0.0..h),
                height_m: rng.random_range(15.0..60.0),
                freq_mhz: if rng.random_bool(0.5) { 900.0 } else { 1800.0 },
                power_dbm: rng.random_range(38.0..47.0),
            }
        })
        .collect();
    let envs: Vec<EnvClass> = (0..nbts)
        .map(|_| EnvClass::ALL[rng.random_range(0..3)])
        .collect();

    let nareas = rng.random_range(1..=4);
    let anchors: Vec<usize> = (0..nareas)
        .map(|_| rng.random_range(0..grid.len()))
        .collect();
    let mut masks = vec![Vec::new(); nareas];
    for p in 0..grid.len() {
        let (r, c) = grid.row_col(p);
        let a = (0..nareas)
            .min_by_key(|&a| {
                let (ar, ac) = grid.row_col(anchors[a]);
                (r.abs_diff(ar).pow(2) + c.abs_diff(ac).pow(2), a)
            })
            .unwrap();
        masks[a].push(p);
    }
    let areas = StatAreaSet::new(
        masks
            .into_iter()
            .enumerate()
            .map(|(a, m)| StatArea {
                id: AreaId(format!("A{a}")),
                geometry: AreaGeometry::Mask(m),
            })
            .collect(),
    )
    .unwrap();
    let zones = areas.zones(&grid).unwrap();

    let counts: Vec<f64> = (0..grid.len())
        .map(|_| {
            if rng.random_bool(0.4) {
                f64::from(rng.random_range(1u32..50))
            } else {
                0.0
            }
        })
        .collect();
    let raster = SettlementRaster::from_counts(grid, &counts).unwrap();
    let settlements = extract_settlements(&raster);
    let points: Vec<_> = settlements.iter().map(Settlement::rx_point).collect();
    let opts = RssOptions {
        variation: VariationSpec::normal(0.0, 6.0),
        seed,
        ..RssOptions::default()
    };
    let field = rss_field(&specs, &points, LinkEnv::Transmitter(&envs), &opts).unwrap();
    Instance {
        grid,
        specs,
        envs,
        areas,
        zones,
        raster,
        settlements,
        field,
    }
}

pub fn all_weights(inst: &Instance) -> Vec<WeightMatrix> {
    let sites = inst.sites();
    let tiles = voronoi_assign(&inst.grid, &sites).unwrap();
    vec![
        weights_p2p(&sites, &inst.areas, Some(&inst.grid)),
        weights_voronoi(&tiles, &inst.zones).unwrap(),
        weights_aug_voronoi(&tiles, &inst.raster, &inst.zones).unwrap(),
        weights_bsa(&inst.field, &inst.settlements, &inst.zones)
            .unwrap()
            .1,
        weights_idw(
            &inst.field,
            &inst.settlements,
            &inst.zones,
            IdwParams::default(),
        )
        .unwrap()
        .1,
    ]
}

pub fn check_row_sums(m: &WeightMatrix) -> Result<(), String> {
    for r in &m.rows {
        if let Some(ws) = &r.weights {
            let sum: f64 = ws.iter().map(|(_, w)| w).sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(format!("{}: area {} sums to {sum}", m.scheme, r.area_id));
            }
        }
    }
    Ok(())
}

fn normalise(counts: BTreeMap<AreaId, BTreeMap<BtsId, f64>>) -> BTreeMap<(AreaId, BtsId), f64> {
    let mut out = BTreeMap::new();
    for (a, row) in counts {
        let total: f64 = row.values().sum();
        for (b, n) in row {
            out.insert((a.clone(), b), n / total);
        }
    }
    out
}

fn entries(m: &WeightMatrix) -> BTreeMap<(AreaId, BtsId), f64> {
    m.entries().map(|(a, b, w)| ((a.clone(), b), w)).collect()
}

/// Nearest site by explicit distance comparison, ties to the lowest id.
pub fn brute_voronoi(inst: &Instance) -> BTreeMap<(AreaId, BtsId), f64> {
    let mut counts: BTreeMap<AreaId, BTreeMap<BtsId, f64>> = BTreeMap::new();
    for p in 0..inst.grid.len() {
        let (x, y) = inst.grid.center(p);
        let best = inst
            .specs
            .iter()
            .map(|s| ((s.x - x).hypot(s.y - y), s.bts_id))
            .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
            .unwrap()
            .1;
        let Some(z) = inst.zones.zone_of(p) else {
            continue;
        };
        *counts
            .entry(inst.zones.ids[z].clone())
            .or_default()
            .entry(best)
            .or_insert(0.0) += 1.0;
    }
    normalise(counts)
}

/// Strongest live link per settlement read from the dense field.
pub fn argmax_rss(inst: &Instance) -> Vec<Option<(BtsId, bool)>> {
    let ids = inst.field.bts_ids();
    (0..inst.settlements.len())
        .map(|i| {
            let live: Vec<(BtsId, f64)> = (0..ids.len())
                .filter_map(|j| inst.field.get(i, j).map(|v| (ids[j], v)))
                .filter(|(_, v)| !inst.field.is_dead(*v))
                .collect();
            let best = live
                .iter()
                .copied()
                .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)))?;
            let unique = live.iter().filter(|(_, v)| *v == best.1).count() == 1;
            Some((best.0, unique))
        })
        .collect()
}

pub fn brute_bsa(inst: &Instance) -> BTreeMap<(AreaId, BtsId), f64> {
    let mut counts: BTreeMap<AreaId, BTreeMap<BtsId, f64>> = BTreeMap::new();
    for (s, best) in inst.settlements.iter().zip(argmax_rss(inst)) {
        let (Some((b, _)), Some(z)) = (best, inst.zones.zone_of(s.pixel)) else {
            continue;
        };
        *counts
            .entry(inst.zones.ids[z].clone())
            .or_default()
            .entry(b)
            .or_insert(0.0) += 1.0;
    }
    normalise(counts)
}

/// Every weight-matrix property of one instance.
pub fn check_weight_properties(inst: &Instance) -> Result<(), String> {
    for m in all_weights(inst) {
        check_row_sums(&m)?;
    }
    let sites = inst.sites();
    let tiles = voronoi_assign(&inst.grid, &sites).unwrap();
    let voronoi = weights_voronoi(&tiles, &inst.zones).unwrap();
    if entries(&voronoi) != brute_voronoi(inst) {
        return Err("voronoi differs from the nearest-site oracle".into());
    }
    let (bsa_px, bsa) = weights_bsa(&inst.field, &inst.settlements, &inst.zones).unwrap();
    if entries(&bsa) != brute_bsa(inst) {
        return Err("bsa differs from the argmax oracle".into());
    }
    let (flat, _) = weights_idw(
        &inst.field,
        &inst.settlements,
        &inst.zones,
        IdwParams { s: 0.0, k: 5 },
    )
    .unwrap();
    for row in &flat.rows {
        let n = row.weights.len() as f64;
        if row.weights.iter().any(|(_, w)| (w - 1.0 / n).abs() > 1e-12) {
            return Err(format!("idw s=0 not uniform at pixel {}", row.pixel));
        }
    }
    let (sharp, _) = weights_idw(
        &inst.field,
        &inst.settlements,
        &inst.zones,
        IdwParams { s: 16.0, k: 5 },
    )
    .unwrap();
    let oracle = argmax_rss(inst);
    for ((row, best), bsa_row) in sharp.argmax().iter().zip(&oracle).zip(bsa_px.argmax()) {
        if let Some((b, true)) = best {
            if *row != Some(*b) || bsa_row != Some(*b) {
                return Err(format!("idw s=16 argmax {row:?} differs from bsa {b}"));
            }
        }
    }
    Ok(())
}

/// Random BTS covariates with some missing cells.
pub fn random_covariates(inst: &Instance, seed: u64) -> CovariateTable {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xA5A5);
    let mut t = CovariateTable::new(vec!["x".into(), "constant".into()]);
    for s in &inst.specs {
        let x = (!rng.random_bool(0.15)).then(|| rng.random_range(-5.0..5.0));
        t.insert(s.bts_id, vec![x, Some(2.5)]).unwrap();
    }
    t
}

/// Weighted mean by a plain loop over the weight entries.
pub fn scalar_mean(
    m: &WeightMatrix,
    cov: &CovariateTable,
    col: usize,
) -> Vec<(AreaId, Option<f64>)> {
    m.rows
        .iter()
        .map(|r| {
            let mut num = 0.0;
            let mut den = 0.0;
            for &(b, w) in r.weights.iter().flatten() {
                if let Some(v) = cov.get(b).unwrap()[col] {
                    num += w * v;
                    den += w;
                }
            }
            (r.area_id.clone(), (den > 0.0).then(|| num / den))
        })
        .collect()
}

/// Convexity, constant identity and the scalar oracle for every scheme.
pub fn check_aggregation(inst: &Instance, seed: u64) -> Result<(), String> {
    let cov = random_covariates(inst, seed);
    for m in all_weights(inst) {
        let agg = aggregate(&m, &cov, Statistic::Mean, MissingPolicy::Renormalize)
            .map_err(|e| e.to_string())?;
        let oracle = scalar_mean(&m, &cov, 0);
        for (((id, cells), (oid, o)), row) in agg.rows.iter().zip(&oracle).zip(&m.rows) {
            assert_eq!(id, oid);
            match (cells[0], o) {
                (Some(v), Some(o)) if (v - o).abs() <= 1e-12 => {}
                (None, None) => {}
                other => return Err(format!("{}: area {id} mean {other:?}", m.scheme)),
            }
            let support: Vec<f64> = row
                .weights
                .iter()
                .flatten()
                .filter_map(|(b, _)| cov.get(*b).unwrap()[0])
                .collect();
            if let Some(v) = cells[0] {
                let lo = support.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = support.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                if v < lo - 1e-12 || v > hi + 1e-12 {
                    return Err(format!(
                        "{}: area {id} mean {v} outside [{lo}, {hi}]",
                        m.scheme
                    ));
                }
            }
            if row.is_covered() && cells[1].is_none_or(|c| (c - 2.5).abs() > 1e-12) {
                return Err(format!(
                    "{}: constant covariate gives {:?}",
                    m.scheme, cells[1]
                ));
            }
        }
    }
    Ok(())
}
