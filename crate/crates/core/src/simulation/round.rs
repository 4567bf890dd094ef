//! One simulation round: true coverage, the five mapping schemes and their
//! metrics.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use super::metrics::{
    geographic_overlap, prediction_metrics, settlement_overlap, ByEnv, Coverage, PredictionMetrics,
    SettlementEstimate,
};
use super::world::SyntheticWorld;
use crate::error::{Error, Result};
use crate::geo::{voronoi_assign, AreaId, Assignment, Grid, Settlement, ZoneRaster};
use crate::io::config::ConfigDocument;
use crate::mapping::{
    aggregate, best_server, naive_specs, weights_aug_voronoi, weights_bsa, weights_idw,
    weights_p2p, weights_voronoi, CovariateTable, MissingPolicy, PixelRow, PixelScheme,
    PixelWeights, Scheme, Statistic, WeightMatrix,
};
use crate::propagation::{rss_field_strongest, EnvClass, LinkEnv, RssOptions, VariationSpec};

/// Name of the simulated BTS-level covariate.
pub const POVERTY: &str = "poverty";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Metric {
    GeoOverlap,
    SettlementOverlap,
    Rho,
    Bias,
    Rmse,
    N,
    RhoCommon,
    BiasCommon,
    RmseCommon,
    NCommon,
    UncoveredShare,
}

impl Metric {
    pub const ALL: [Metric; 11] = [
        Metric::GeoOverlap,
        Metric::SettlementOverlap,
        Metric::Rho,
        Metric::Bias,
        Metric::Rmse,
        Metric::N,
        Metric::RhoCommon,
        Metric::BiasCommon,
        Metric::RmseCommon,
        Metric::NCommon,
        Metric::UncoveredShare,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::GeoOverlap => "geo_overlap",
            Metric::SettlementOverlap => "settlement_overlap",
            Metric::Rho => "rho",
            Metric::Bias => "bias",
            Metric::Rmse => "rmse",
            Metric::N => "n",
            Metric::RhoCommon => "rho_common",
            Metric::BiasCommon => "bias_common",
            Metric::RmseCommon => "rmse_common",
            Metric::NCommon => "n_common",
            Metric::UncoveredShare => "uncovered_share",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Metric::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Schema(format!("unknown metric `{s}`")))
    }
}

/// Environment scope of a metric value; `None` is the total.
pub fn env_label(env: Option<EnvClass>) -> &'static str {
    env.map_or("total", EnvClass::as_str)
}

pub fn parse_env_label(s: &str) -> Result<Option<EnvClass>> {
    if s == "total" {
        Ok(None)
    } else {
        s.parse().map(Some)
    }
}

/// One cell of the per-round table.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRecord {
    pub round: usize,
    pub scheme: Scheme,
    pub metric: Metric,
    pub env: Option<EnvClass>,
    pub value: Option<f64>,
}

/// True serving antennas and the quantities derived from them.
#[derive(Debug, Clone, PartialEq)]
pub struct TrueCoverage {
    /// Best server of every grid pixel.
    pub pixels: Assignment,
    /// Best server (home location) of every settlement.
    pub settlements: Assignment,
    /// Population-weighted poverty of each BTS's home-located settlements.
    pub covariates: CovariateTable,
    /// Population-weighted poverty of each area's settlements.
    pub area_rates: Vec<(AreaId, Option<f64>)>,
}

/// Restricts a pixel assignment to the settlement pixels.
pub fn at_settlements(pixels: &Assignment, settlements: &[Settlement]) -> Assignment {
    Assignment {
        bts_ids: pixels.bts_ids.clone(),
        labels: settlements.iter().map(|s| pixels.labels[s.pixel]).collect(),
    }
}

/// `R_j`: population-weighted mean poverty of the settlements served by
/// each BTS; BTS serving nobody get a missing value.
pub fn bts_poverty(
    served: &Assignment,
    settlements: &[Settlement],
    poverty: &[f64],
) -> Result<CovariateTable> {
    let nb = served.bts_ids.len();
    let mut num = vec![0.0; nb];
    let mut den = vec![0.0; nb];
    for ((l, s), p) in served.labels.iter().zip(settlements).zip(poverty) {
        if let Some(l) = l {
            num[*l as usize] += s.count * p;
            den[*l as usize] += s.count;
        }
    }
    let mut table = CovariateTable::new(vec![POVERTY.to_owned()]);
    for (j, &b) in served.bts_ids.iter().enumerate() {
        table.insert(b, vec![(den[j] > 0.0).then(|| num[j] / den[j])])?;
    }
    Ok(table)
}

/// Population-weighted mean poverty per zone.
pub fn area_poverty(
    zones: &ZoneRaster,
    settlements: &[Settlement],
    poverty: &[f64],
) -> Vec<(AreaId, Option<f64>)> {
    let mut num = vec![0.0; zones.len()];
    let mut den = vec![0.0; zones.len()];
    for (s, p) in settlements.iter().zip(poverty) {
        if let Some(z) = zones.zone_of(s.pixel) {
            num[z] += s.count * p;
            den[z] += s.count;
        }
    }
    let mut rates: Vec<(AreaId, Option<f64>)> = zones
        .ids
        .iter()
        .enumerate()
        .map(|(z, id)| (id.clone(), (den[z] > 0.0).then(|| num[z] / den[z])))
        .collect();
    rates.sort_by(|a, b| a.0.cmp(&b.0));
    rates
}

/// Best-server coverage under the true specs with variation disabled.
pub fn true_coverage(
    world: &SyntheticWorld,
    grid: &Grid,
    zones: &ZoneRaster,
    opts: &RssOptions,
) -> Result<TrueCoverage> {
    let field = rss_field_strongest(
        &world.network.specs,
        &grid.rx_points(),
        LinkEnv::Transmitter(&world.network.env),
        opts,
        1,
    )?;
    let pixels = best_server(&field);
    let settlements = at_settlements(&pixels, &world.settlements);
    let covariates = bts_poverty(&settlements, &world.settlements, &world.poverty)?;
    let area_rates = area_poverty(zones, &world.settlements, &world.poverty);
    Ok(TrueCoverage {
        pixels,
        settlements,
        covariates,
        area_rates,
    })
}

/// Settlement weights from hard serving assignments.
fn serving_weights(
    scheme: PixelScheme,
    served: &Assignment,
    settlements: &[Settlement],
    dead: f64,
) -> PixelWeights {
    PixelWeights {
        scheme,
        idw: None,
        dead_threshold_dbm: dead,
        rows: settlements
            .iter()
            .zip(&served.labels)
            .map(|(s, l)| PixelRow {
                pixel: s.pixel,
                count: 1.0,
                weights: l
                    .map(|l| (served.bts_ids[l as usize], 1.0))
                    .into_iter()
                    .collect(),
            })
            .collect(),
    }
}

/// Everything one round produced for one scheme.
#[derive(Debug, Clone)]
pub struct SchemeResult {
    pub scheme: Scheme,
    pub weights: WeightMatrix,
    pub estimates: Vec<(AreaId, Option<f64>)>,
    pub geo: ByEnv,
    pub settlement: ByEnv,
    /// Share of settlements without a live link, propagation schemes only.
    pub uncovered_share: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct RoundOutcome {
    pub round: usize,
    pub seed: u64,
    pub truth: Vec<(AreaId, Option<f64>)>,
    /// Benchmark first, then the estimators in [`Scheme::ESTIMATORS`] order.
    pub schemes: Vec<SchemeResult>,
    pub records: Vec<MetricRecord>,
}

/// Builds a fresh world from `seed` and evaluates every scheme on it.
pub fn simulate_round(doc: &ConfigDocument, round: usize, seed: u64) -> Result<RoundOutcome> {
    let cfg = &doc.simulation;
    let grid = cfg.grid();
    let world = SyntheticWorld::generate(cfg, seed)?;
    let zones = world.areas.zones(&grid)?;
    let sites = world.network.sites();
    let opts = RssOptions {
        rx_height_m: cfg.rx_height_m,
        variation: VariationSpec::DISABLED,
        dead_threshold_dbm: doc.schemes.dead_threshold_dbm,
        seed,
    };
    let truth = true_coverage(&world, &grid, &zones, &opts)?;
    let dead = doc.schemes.dead_threshold_dbm;
    let settlement_zone: Vec<Option<usize>> = world
        .settlements
        .iter()
        .map(|s| zones.zone_of(s.pixel))
        .collect();
    let true_env = &world.network.env;

    let estimate = |w: &WeightMatrix| -> Result<Vec<(AreaId, Option<f64>)>> {
        let agg = aggregate(
            w,
            &truth.covariates,
            Statistic::Mean,
            MissingPolicy::Renormalize,
        )?;
        Ok(agg.column(POVERTY).expect("poverty column"))
    };
    let mut results = Vec::with_capacity(Scheme::ALL.len());

    // benchmark
    let bench_w = serving_weights(
        PixelScheme::Bsa,
        &truth.settlements,
        &world.settlements,
        dead,
    )
    .area_weights(&zones, Scheme::Benchmark);
    results.push(SchemeResult {
        scheme: Scheme::Benchmark,
        estimates: estimate(&bench_w)?,
        weights: bench_w,
        geo: geographic_overlap(
            &Coverage::Tiles(&truth.pixels),
            &truth.pixels,
            Some(true_env),
        )?,
        settlement: settlement_overlap(
            &SettlementEstimate::Serving(&truth.settlements),
            &truth.settlements,
            Some(true_env),
        )?,
        uncovered_share: Some(uncovered_share(&truth.settlements)),
    });

    // point to polygon
    let p2p_w = weights_p2p(&sites, &world.areas, Some(&grid));
    let site_zone: Vec<Option<usize>> = sites
        .iter()
        .map(|s| grid.locate(s.x, s.y).and_then(|p| zones.zone_of(p)))
        .collect();
    let mut zone_bts = vec![Vec::new(); zones.len()];
    for (j, z) in site_zone.iter().enumerate() {
        if let Some(z) = z {
            zone_bts[*z].push(j);
        }
    }
    results.push(SchemeResult {
        scheme: Scheme::P2p,
        estimates: estimate(&p2p_w)?,
        weights: p2p_w,
        geo: geographic_overlap(
            &Coverage::AreaOfSite {
                zones: &zones,
                site_zone: &site_zone,
            },
            &truth.pixels,
            Some(true_env),
        )?,
        settlement: settlement_overlap(
            &SettlementEstimate::AreaShare {
                zone_bts: &zone_bts,
                settlement_zone: &settlement_zone,
            },
            &truth.settlements,
            Some(true_env),
        )?,
        uncovered_share: None,
    });

    // voronoi tessellations
    let tiles = voronoi_assign(&grid, &sites)?;
    let tiles_at = at_settlements(&tiles, &world.settlements);
    let geo = geographic_overlap(&Coverage::Tiles(&tiles), &truth.pixels, Some(true_env))?;
    let settlement = settlement_overlap(
        &SettlementEstimate::Serving(&tiles_at),
        &truth.settlements,
        Some(true_env),
    )?;
    for (scheme, w) in [
        (Scheme::Voronoi, weights_voronoi(&tiles, &zones)?),
        (
            Scheme::AugVoronoi,
            weights_aug_voronoi(&tiles, &world.population.raster(), &zones)?,
        ),
    ] {
        results.push(SchemeResult {
            scheme,
            estimates: estimate(&w)?,
            weights: w,
            geo,
            settlement,
            uncovered_share: None,
        });
    }

    // naive propagation
    // naive specs keep the cluster-derived env class of each site, which
    // follows from public settlement data, and guess everything else
    let naive_env = world.network.env.clone();
    let naive_specs = naive_specs(&sites, &naive_env, &doc.naive)?;
    let idw = doc.schemes.idw;
    let field = rss_field_strongest(
        &naive_specs,
        &grid.rx_points(),
        LinkEnv::Transmitter(&naive_env),
        &opts,
        idw.k.max(1),
    )?;
    let naive_pixels = best_server(&field);
    let rows: Vec<usize> = world.settlements.iter().map(|s| s.pixel).collect();
    let field = field.select_rows(&rows)?;
    drop(rows);
    let naive_at = best_server(&field);
    let geo = geographic_overlap(
        &Coverage::Tiles(&naive_pixels),
        &truth.pixels,
        Some(true_env),
    )?;
    let settlement = settlement_overlap(
        &SettlementEstimate::Serving(&naive_at),
        &truth.settlements,
        Some(true_env),
    )?;
    let (_, bsa_w) = weights_bsa(&field, &world.settlements, &zones)?;
    let (_, idw_w) = weights_idw(&field, &world.settlements, &zones, idw)?;
    for w in [bsa_w, idw_w] {
        results.push(SchemeResult {
            scheme: w.scheme,
            estimates: estimate(&w)?,
            weights: w,
            geo,
            settlement,
            uncovered_share: Some(uncovered_share(&naive_at)),
        });
    }

    let records = round_records(
        round,
        &truth.area_rates,
        &results,
        cfg.urban_area_count(),
        &zones,
    );
    Ok(RoundOutcome {
        round,
        seed,
        truth: truth.area_rates,
        schemes: results,
        records,
    })
}

fn uncovered_share(a: &Assignment) -> f64 {
    if a.is_empty() {
        0.0
    } else {
        (a.len() - a.covered()) as f64 / a.len() as f64
    }
}

fn push_metrics(
    out: &mut Vec<MetricRecord>,
    round: usize,
    scheme: Scheme,
    env: Option<EnvClass>,
    m: &PredictionMetrics,
    common: bool,
) {
    let [rho, bias, rmse, n] = if common {
        [
            Metric::RhoCommon,
            Metric::BiasCommon,
            Metric::RmseCommon,
            Metric::NCommon,
        ]
    } else {
        [Metric::Rho, Metric::Bias, Metric::Rmse, Metric::N]
    };
    for (metric, value) in [
        (rho, m.rho),
        (bias, m.bias),
        (rmse, m.rmse),
        (n, Some(m.n as f64)),
    ] {
        out.push(MetricRecord {
            round,
            scheme,
            metric,
            env,
            value,
        });
    }
}

fn round_records(
    round: usize,
    truth: &[(AreaId, Option<f64>)],
    results: &[SchemeResult],
    urban_areas: usize,
    zones: &ZoneRaster,
) -> Vec<MetricRecord> {
    let urban: HashSet<AreaId> = zones.ids[..urban_areas].iter().cloned().collect();
    let rural: HashSet<AreaId> = zones.ids[urban_areas..].iter().cloned().collect();
    let truth_known: HashSet<&AreaId> = truth
        .iter()
        .filter(|(_, v)| v.is_some())
        .map(|(a, _)| a)
        .collect();
    let common: HashSet<AreaId> = zones
        .ids
        .iter()
        .filter(|a| truth_known.contains(a))
        .filter(|a| {
            results
                .iter()
                .all(|r| r.estimates.iter().any(|(id, v)| id == *a && v.is_some()))
        })
        .cloned()
        .collect();
    let mut out = Vec::new();
    for r in results {
        for (metric, by_env) in [
            (Metric::GeoOverlap, &r.geo),
            (Metric::SettlementOverlap, &r.settlement),
        ] {
            out.push(MetricRecord {
                round,
                scheme: r.scheme,
                metric,
                env: None,
                value: by_env.total,
            });
            for env in EnvClass::ALL {
                out.push(MetricRecord {
                    round,
                    scheme: r.scheme,
                    metric,
                    env: Some(env),
                    value: by_env.get(env),
                });
            }
        }
        push_metrics(
            &mut out,
            round,
            r.scheme,
            None,
            &prediction_metrics(&r.estimates, truth, None),
            false,
        );
        push_metrics(
            &mut out,
            round,
            r.scheme,
            Some(EnvClass::Urban),
            &prediction_metrics(&r.estimates, truth, Some(&urban)),
            false,
        );
        push_metrics(
            &mut out,
            round,
            r.scheme,
            Some(EnvClass::Rural),
            &prediction_metrics(&r.estimates, truth, Some(&rural)),
            false,
        );
        push_metrics(
            &mut out,
            round,
            r.scheme,
            None,
            &prediction_metrics(&r.estimates, truth, Some(&common)),
            true,
        );
        if let Some(u) = r.uncovered_share {
            out.push(MetricRecord {
                round,
                scheme: r.scheme,
                metric: Metric::UncoveredShare,
                env: None,
                value: Some(u),
            });
        }
    }
    out
}
