//! Synthetic country: population, poverty, BTS network and true coverage.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use super::config::SimConfig;
use crate::error::{Error, Result};
use crate::geo::{extract_settlements, Grid, Settlement, SettlementRaster, Site, StatAreaSet};
use crate::propagation::{AntennaSpec, BtsId, EnvClass};

/// Independent random stream for one generation step of one round.
pub fn stream(seed: u64, step: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(step);
    rng
}

pub(crate) const STREAM_POPULATION: u64 = 1;
pub(crate) const STREAM_POVERTY: u64 = 2;
pub(crate) const STREAM_BTS: u64 = 3;

/// Pixel counts of individuals.
#[derive(Debug, Clone, PartialEq)]
pub struct Population {
    pub grid: Grid,
    pub counts: Vec<u32>,
    /// Pixels inside the city rectangle.
    pub city: super::config::PixelRect,
}

impl Population {
    pub fn total(&self) -> u64 {
        self.counts.iter().map(|&c| u64::from(c)).sum()
    }

    pub fn raster(&self) -> SettlementRaster {
        SettlementRaster {
            grid: self.grid,
            values: self.counts.iter().map(|&c| Some(f64::from(c))).collect(),
        }
    }

    pub fn in_city(&self, pixel: usize) -> bool {
        let (r, c) = self.grid.row_col(pixel);
        self.city.contains(r, c)
    }
}

const MAX_REJECTIONS: usize = 10_000;

fn draw_pixel(
    cfg: &SimConfig,
    rng: &mut ChaCha8Rng,
    mut propose: impl FnMut(&mut ChaCha8Rng) -> (f64, f64),
    allow_city: bool,
) -> Result<usize> {
    let city = cfg.urban_rect();
    for _ in 0..MAX_REJECTIONS {
        let (cf, rf) = propose(rng);
        if !(cf >= 0.0 && rf >= 0.0) {
            continue;
        }
        let (c, r) = (cf as usize, rf as usize);
        if c >= cfg.ncols || r >= cfg.nrows || cfg.uninhabited.contains(r, c) {
            continue;
        }
        if !allow_city && city.contains(r, c) {
            continue;
        }
        return Ok(r * cfg.ncols + c);
    }
    Err(Error::Config(
        "population draws keep landing outside the inhabitable region".into(),
    ))
}

/// Distributes `cfg.population` individuals: the urban share around the
/// city centre, the rest over rural clusters and a uniform background.
/// Draws that land off-grid or in the uninhabited zone are redrawn.
pub fn gen_population(cfg: &SimConfig, seed: u64) -> Result<Population> {
    cfg.validate()?;
    let mut rng = stream(seed, STREAM_POPULATION);
    let mut counts = vec![0u32; cfg.ncols * cfg.nrows];
    let city = cfg.urban_rect();
    let (cx, cy) = (
        city.col as f64 + city.ncols as f64 / 2.0,
        city.row as f64 + city.nrows as f64 / 2.0,
    );
    let n_urban = cfg.urban_population();
    let n_rural = cfg.population - n_urban;

    for _ in 0..n_urban {
        let p = draw_pixel(
            cfg,
            &mut rng,
            |r| {
                let zx: f64 = StandardNormal.sample(r);
                let zy: f64 = StandardNormal.sample(r);
                (cx + cfg.urban_sd_px * zx, cy + cfg.urban_sd_px * zy)
            },
            true,
        )?;
        counts[p] += 1;
    }

    let uniform = |r: &mut ChaCha8Rng| {
        (
            r.random::<f64>() * cfg.ncols as f64,
            r.random::<f64>() * cfg.nrows as f64,
        )
    };
    let mut centers = Vec::with_capacity(cfg.rural.clusters);
    for _ in 0..cfg.rural.clusters {
        let p = draw_pixel(cfg, &mut rng, uniform, false)?;
        let (r, c) = (p / cfg.ncols, p % cfg.ncols);
        let [lo, hi] = cfg.rural.cluster_sd_px;
        let sd = lo + (hi - lo) * rng.random::<f64>();
        centers.push((c as f64 + 0.5, r as f64 + 0.5, sd));
    }
    let n_clustered = if centers.is_empty() {
        0
    } else {
        (n_rural as f64 * cfg.rural.cluster_share).round() as u64
    };
    for _ in 0..n_clustered {
        let (x, y, sd) = centers[rng.random_range(0..centers.len())];
        let p = draw_pixel(
            cfg,
            &mut rng,
            |r| {
                let zx: f64 = StandardNormal.sample(r);
                let zy: f64 = StandardNormal.sample(r);
                (x + sd * zx, y + sd * zy)
            },
            false,
        )?;
        counts[p] += 1;
    }
    for _ in n_clustered..n_rural {
        let p = draw_pixel(cfg, &mut rng, uniform, false)?;
        counts[p] += 1;
    }
    Ok(Population {
        grid: cfg.grid(),
        counts,
        city,
    })
}

/// Mean poverty of each `block_px` square: `U(0,1) * (1 - d / d_max)` with
/// `d` the block's population density. Blocks run row-major; edge blocks
/// may be partial.
pub fn poverty_block_means(
    pop: &Population,
    block_px: usize,
    rng: &mut ChaCha8Rng,
) -> (usize, Vec<f64>) {
    let g = &pop.grid;
    let bcols = g.ncols.div_ceil(block_px);
    let brows = g.nrows.div_ceil(block_px);
    let mut total = vec![0.0f64; bcols * brows];
    let mut cells = vec![0.0f64; bcols * brows];
    for (p, &c) in pop.counts.iter().enumerate() {
        let (r, col) = g.row_col(p);
        let b = (r / block_px) * bcols + col / block_px;
        total[b] += f64::from(c);
        cells[b] += 1.0;
    }
    let density: Vec<f64> = total.iter().zip(&cells).map(|(t, n)| t / n).collect();
    let max = density.iter().copied().fold(0.0, f64::max);
    let means = density
        .iter()
        .map(|d| {
            let u: f64 = rng.random();
            let norm = if max > 0.0 { d / max } else { 0.0 };
            u * (1.0 - norm)
        })
        .collect();
    (bcols, means)
}

/// Poverty rate per settlement: `N(mu_block, sigma)` clamped to `[0, 1]`.
pub fn assign_poverty(
    pop: &Population,
    settlements: &[Settlement],
    cfg: &SimConfig,
    seed: u64,
) -> Vec<f64> {
    let mut rng = stream(seed, STREAM_POVERTY);
    let block = cfg.poverty.block_px;
    let (bcols, means) = poverty_block_means(pop, block, &mut rng);
    settlements
        .iter()
        .map(|s| {
            let (r, c) = pop.grid.row_col(s.pixel);
            let mu = means[(r / block) * bcols + c / block];
            let draw = if cfg.poverty.sigma > 0.0 {
                Normal::new(mu, cfg.poverty.sigma)
                    .expect("valid sigma")
                    .sample(&mut rng)
            } else {
                mu
            };
            draw.clamp(0.0, 1.0)
        })
        .collect()
}

/// Result of population-weighted k-means.
#[derive(Debug, Clone, PartialEq)]
pub struct Clustering {
    pub centroids: Vec<(f64, f64)>,
    /// Cluster index of each input point.
    pub labels: Vec<usize>,
}

impl Clustering {
    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.centroids.len()];
        for &l in &self.labels {
            s[l] += 1;
        }
        s
    }
}

fn nearest(centroids: &[(f64, f64)], (x, y): (f64, f64)) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, &(cx, cy)) in centroids.iter().enumerate() {
        let d = (x - cx) * (x - cx) + (y - cy) * (y - cy);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn sample_weighted(weights: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let total: f64 = weights.iter().sum();
    let mut target = rng.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        target -= w;
        if target < 0.0 && *w > 0.0 {
            return i;
        }
    }
    weights.iter().rposition(|w| *w > 0.0).unwrap_or(0)
}

/// Lloyd's algorithm on weighted points with k-means++ seeding.
pub fn weighted_kmeans(
    points: &[(f64, f64)],
    weights: &[f64],
    k: usize,
    max_iter: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Clustering> {
    if k == 0 || k > points.len() {
        return Err(Error::Config(format!(
            "cannot place {k} clusters on {} settlements",
            points.len()
        )));
    }
    let mut centroids = vec![points[sample_weighted(weights, rng)]];
    let mut d2: Vec<f64> = points.iter().map(|&p| nearest(&centroids, p).1).collect();
    while centroids.len() < k {
        let score: Vec<f64> = d2.iter().zip(weights).map(|(d, w)| d * w).collect();
        let next = if score.iter().any(|s| *s > 0.0) {
            points[sample_weighted(&score, rng)]
        } else {
            // every point already sits on a centroid
            points[sample_weighted(weights, rng)]
        };
        centroids.push(next);
        for (d, &p) in d2.iter_mut().zip(points) {
            let dn = (p.0 - next.0).powi(2) + (p.1 - next.1).powi(2);
            if dn < *d {
                *d = dn;
            }
        }
    }
    let mut labels = vec![usize::MAX; points.len()];
    for _ in 0..max_iter.max(1) {
        let mut changed = false;
        for (l, &p) in labels.iter_mut().zip(points) {
            let j = nearest(&centroids, p).0;
            if *l != j {
                *l = j;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut acc = vec![(0.0, 0.0, 0.0); k];
        for ((&l, &(x, y)), &w) in labels.iter().zip(points).zip(weights) {
            acc[l].0 += w * x;
            acc[l].1 += w * y;
            acc[l].2 += w;
        }
        for (c, (sx, sy, sw)) in centroids.iter_mut().zip(acc) {
            if sw > 0.0 {
                *c = (sx / sw, sy / sw);
            }
        }
    }
    Ok(Clustering { centroids, labels })
}

/// Moves each centroid onto the nearest still-free point.
pub fn snap_to_points(centroids: &[(f64, f64)], points: &[(f64, f64)]) -> Vec<usize> {
    let mut taken = vec![false; points.len()];
    centroids
        .iter()
        .map(|&(cx, cy)| {
            let mut best = (usize::MAX, f64::INFINITY);
            for (i, &(x, y)) in points.iter().enumerate() {
                if taken[i] {
                    continue;
                }
                let d = (x - cx).powi(2) + (y - cy).powi(2);
                if d < best.1 {
                    best = (i, d);
                }
            }
            taken[best.0] = true;
            best.0
        })
        .collect()
}

/// Env classes from cluster sizes: the `floor(q_urban * k)` smallest
/// clusters are urban, the `ceil(q_rural * k)` largest rural, ties by id.
pub fn classify_by_cluster_size(
    ids: &[BtsId],
    sizes: &[usize],
    urban_quantile: f64,
    rural_quantile: f64,
) -> Vec<EnvClass> {
    let k = ids.len();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| sizes[a].cmp(&sizes[b]).then(ids[a].cmp(&ids[b])));
    let n_urban = ((urban_quantile * k as f64) + 1e-9).floor() as usize;
    let n_rural =
        (((rural_quantile * k as f64) - 1e-9).ceil().max(0.0) as usize).min(k - n_urban.min(k));
    let mut classes = vec![EnvClass::Suburban; k];
    for &i in &order[..n_urban.min(k)] {
        classes[i] = EnvClass::Urban;
    }
    for &i in &order[k - n_rural..] {
        classes[i] = EnvClass::Rural;
    }
    classes
}

/// True network: specs and env class per BTS, plus whether it was placed
/// in the city.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub specs: Vec<AntennaSpec>,
    pub env: Vec<EnvClass>,
    pub in_city: Vec<bool>,
    pub cluster_sizes: Vec<usize>,
}

impl Network {
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

fn uniform_in(range: [f64; 2], rng: &mut ChaCha8Rng) -> f64 {
    range[0] + (range[1] - range[0]) * rng.random::<f64>()
}

/// Clusters settlements of the city and of the countryside separately,
/// snaps centroids to settlements and draws technical specs.
pub fn place_bts(
    pop: &Population,
    settlements: &[Settlement],
    cfg: &SimConfig,
    seed: u64,
) -> Result<Network> {
    let mut rng = stream(seed, STREAM_BTS);
    let (k_urban, k_rural) = cfg.bts_counts();
    let mut specs = Vec::with_capacity(k_urban + k_rural);
    let mut in_city = Vec::with_capacity(k_urban + k_rural);
    let mut sizes = Vec::with_capacity(k_urban + k_rural);
    let cs = cfg.cell_size_m;
    for (city, k) in [(true, k_urban), (false, k_rural)] {
        if k == 0 {
            continue;
        }
        let members: Vec<&Settlement> = settlements
            .iter()
            .filter(|s| pop.in_city(s.pixel) == city)
            .collect();
        let points: Vec<(f64, f64)> = members.iter().map(|s| (s.x / cs, s.y / cs)).collect();
        let weights: Vec<f64> = members.iter().map(|s| s.count).collect();
        let clustering = weighted_kmeans(&points, &weights, k, cfg.kmeans_max_iter, &mut rng)
            .map_err(|e| match e {
                Error::Config(m) => Error::Config(format!(
                    "{} region: {m}",
                    if city { "urban" } else { "rural" }
                )),
                other => other,
            })?;
        let snapped = snap_to_points(&clustering.centroids, &points);
        sizes.extend(clustering.sizes());
        for idx in snapped {
            let s = members[idx];
            let (heights, freqs) = if city {
                (cfg.bts.height_m, &cfg.bts.urban_freqs_mhz)
            } else {
                (cfg.bts.rural_height_m, &cfg.bts.rural_freqs_mhz)
            };
            let height_m = uniform_in(heights, &mut rng);
            let freq_mhz = freqs[rng.random_range(0..freqs.len())];
            let power_dbm = uniform_in(cfg.bts.power_dbm, &mut rng);
            specs.push(AntennaSpec {
                bts_id: BtsId(specs.len() as u32 + 1),
                x: s.x,
                y: s.y,
                height_m,
                freq_mhz,
                power_dbm,
            });
            in_city.push(city);
        }
    }
    let ids: Vec<BtsId> = specs.iter().map(|s| s.bts_id).collect();
    let env =
        classify_by_cluster_size(&ids, &sizes, cfg.bts.urban_quantile, cfg.bts.rural_quantile);
    Ok(Network {
        specs,
        env,
        in_city,
        cluster_sizes: sizes,
    })
}

/// Everything generated for one round before any scheme runs.
#[derive(Debug, Clone)]
pub struct SyntheticWorld {
    pub population: Population,
    pub settlements: Vec<Settlement>,
    pub poverty: Vec<f64>,
    pub areas: StatAreaSet,
    pub network: Network,
}

impl SyntheticWorld {
    pub fn generate(cfg: &SimConfig, seed: u64) -> Result<Self> {
        let population = gen_population(cfg, seed)?;
        let settlements = extract_settlements(&population.raster());
        let poverty = assign_poverty(&population, &settlements, cfg, seed);
        let network = place_bts(&population, &settlements, cfg, seed)?;
        Ok(SyntheticWorld {
            population,
            settlements,
            poverty,
            areas: cfg.areas(),
            network,
        })
    }
}
