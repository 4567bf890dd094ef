//! Median path loss under the CEPT extended Hata model, shadow-fading
//! variation, simplified link budgets and received-signal-strength fields.
//!
//! The extended Hata model covers 30-3000 MHz, link distances up to 100 km,
//! transmitter heights of 30-200 m and receiver heights of 1-10 m. It has a
//! free-space regime below 40 m, the Hata regime above 100 m (urban,
//! suburban and open/rural corrections, four frequency bands, a distance
//! exponent correction above 20 km) and a log-distance interpolation in
//! between. The Hata regime is floored at free-space loss.
//!
//! Transmitters below 30 m are accepted: the `13.82 log h` and slope terms
//! use `max(30, h)` and the `b(h)` correction carries the remaining penalty.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Below this distance links are evaluated in free space.
const FREE_SPACE_LIMIT_KM: f64 = 0.04;
/// Above this distance the Hata expressions apply.
const HATA_LIMIT_KM: f64 = 0.1;
const MAX_DISTANCE_KM: f64 = 100.0;
/// Links are never evaluated closer than 1 m; co-located receivers
/// (a transmitter on a pixel centre) are pushed out to this distance.
pub const MIN_LINK_KM: f64 = 0.001;

pub const DEFAULT_DEAD_THRESHOLD_DBM: f64 = -110.0;

/// Site identifier of a base transmitter station.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BtsId(pub u32);

impl fmt::Display for BtsId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl FromStr for BtsId {
    type Err = std::num::ParseIntError;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        s.trim().parse().map(BtsId)
    }
}

/// Propagation environment of a link.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnvClass {
    Urban,
    Suburban,
    Rural,
}

impl EnvClass {
    pub const ALL: [EnvClass; 3] = [EnvClass::Urban, EnvClass::Suburban, EnvClass::Rural];

    pub fn as_str(self) -> &'static str {
        match self {
            EnvClass::Urban => "urban",
            EnvClass::Suburban => "suburban",
            EnvClass::Rural => "rural",
        }
    }
}

impl fmt::Display for EnvClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EnvClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "urban" => Ok(EnvClass::Urban),
            "suburban" => Ok(EnvClass::Suburban),
            "rural" => Ok(EnvClass::Rural),
            other => Err(Error::Schema(format!(
                "unknown environment class `{other}`"
            ))),
        }
    }
}

/// One BTS modelled as an omnidirectional antenna. Coordinates are planar
/// meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AntennaSpec {
    pub bts_id: BtsId,
    pub x: f64,
    pub y: f64,
    pub height_m: f64,
    pub freq_mhz: f64,
    pub power_dbm: f64,
}

impl AntennaSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.x.is_finite() && self.y.is_finite()) {
            return Err(Error::Config(format!(
                "bts {}: non-finite coordinates",
                self.bts_id
            )));
        }
        if !(self.height_m > 0.0 && self.height_m.is_finite()) {
            return Err(Error::Range {
                param: "height_m",
                value: self.height_m,
                valid: "> 0",
            });
        }
        check_frequency(self.freq_mhz)?;
        if !self.power_dbm.is_finite() {
            return Err(Error::Range {
                param: "power_dbm",
                value: self.power_dbm,
                valid: "finite",
            });
        }
        Ok(())
    }
}

/// Receiver-side parameters of a single link.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkParams {
    pub distance_km: f64,
    pub rx_height_m: f64,
    pub env: EnvClass,
}

/// Shadow-fading term, normal in the dB domain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VariationSpec {
    pub enabled: bool,
    pub mu_db: f64,
    pub sigma_db: f64,
}

impl VariationSpec {
    pub const DISABLED: VariationSpec = VariationSpec {
        enabled: false,
        mu_db: 0.0,
        sigma_db: 0.0,
    };

    pub fn normal(mu_db: f64, sigma_db: f64) -> Self {
        VariationSpec {
            enabled: true,
            mu_db,
            sigma_db,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.mu_db.is_finite() {
            return Err(Error::Range {
                param: "mu_db",
                value: self.mu_db,
                valid: "finite",
            });
        }
        if !(self.sigma_db >= 0.0 && self.sigma_db.is_finite()) {
            return Err(Error::Range {
                param: "sigma_db",
                value: self.sigma_db,
                valid: ">= 0",
            });
        }
        Ok(())
    }
}

impl Default for VariationSpec {
    fn default() -> Self {
        Self::DISABLED
    }
}

fn check_frequency(freq_mhz: f64) -> Result<()> {
    if (30.0..=3000.0).contains(&freq_mhz) {
        Ok(())
    } else {
        Err(Error::Range {
            param: "freq_mhz",
            value: freq_mhz,
            valid: "[30, 3000]",
        })
    }
}

fn check_rx_height(rx_height_m: f64) -> Result<()> {
    if (1.0..=10.0).contains(&rx_height_m) {
        Ok(())
    } else {
        Err(Error::Range {
            param: "rx_height_m",
            value: rx_height_m,
            valid: "[1, 10]",
        })
    }
}

/// Extended Hata evaluated for one transmitter/receiver/environment triple,
/// with all distance-independent terms folded in.
#[derive(Debug, Clone, Copy)]
pub struct HataModel {
    freq_mhz: f64,
    tx_height_m: f64,
    /// `(h_tx - h_rx)^2 / 10^6` in km^2.
    height_gap_km2: f64,
    /// `32.4 + 20 log f`.
    free_space_const: f64,
    /// Everything in the Hata regime except the distance term.
    hata_const: f64,
    /// `44.9 - 6.55 log max(30, h_tx)`.
    slope: f64,
    /// Coefficient of the distance exponent correction above 20 km.
    alpha_coef: f64,
    loss_at_free_space_limit: f64,
    loss_at_hata_limit: f64,
}

impl HataModel {
    pub fn new(freq_mhz: f64, tx_height_m: f64, rx_height_m: f64, env: EnvClass) -> Result<Self> {
        check_frequency(freq_mhz)?;
        check_rx_height(rx_height_m)?;
        if !(tx_height_m > 0.0 && tx_height_m.is_finite()) {
            return Err(Error::Range {
                param: "height_m",
                value: tx_height_m,
                valid: "> 0",
            });
        }
        let f = freq_mhz;
        let log_f = f.log10();
        let hb = tx_height_m;
        let hm = rx_height_m;
        let hb_eff = hb.max(30.0);

        let a_hm = (1.1 * log_f - 0.7) * hm.min(10.0) - (1.56 * log_f - 0.8)
            + (20.0 * (hm / 10.0).log10()).max(0.0);
        let b_hb = (20.0 * (hb / 30.0).log10()).min(0.0);

        let band = if f <= 150.0 {
            69.6 + 26.2 * 150f64.log10() - 20.0 * (150.0 / f).log10()
        } else if f <= 1500.0 {
            69.6 + 26.2 * log_f
        } else if f <= 2000.0 {
            46.3 + 33.9 * log_f
        } else {
            46.3 + 33.9 * 2000f64.log10() + 10.0 * (f / 2000.0).log10()
        };

        let f_corr = f.clamp(150.0, 2000.0).log10();
        let env_corr = match env {
            EnvClass::Urban => 0.0,
            EnvClass::Suburban => -2.0 * (f.clamp(150.0, 2000.0) / 28.0).log10().powi(2) - 5.4,
            EnvClass::Rural => -4.78 * f_corr * f_corr + 18.33 * f_corr - 40.94,
        };

        let mut model = HataModel {
            freq_mhz: f,
            tx_height_m: hb,
            height_gap_km2: (hb - hm).powi(2) / 1e6,
            free_space_const: 32.4 + 20.0 * log_f,
            hata_const: band - 13.82 * hb_eff.log10() - a_hm - b_hb + env_corr,
            slope: 44.9 - 6.55 * hb_eff.log10(),
            alpha_coef: 0.14 + 1.87e-4 * f + 1.07e-3 * hb,
            loss_at_free_space_limit: 0.0,
            loss_at_hata_limit: 0.0,
        };
        model.loss_at_free_space_limit = model.free_space(FREE_SPACE_LIMIT_KM);
        model.loss_at_hata_limit = model.hata(HATA_LIMIT_KM);
        Ok(model)
    }

    pub fn for_link(spec: &AntennaSpec, rx_height_m: f64, env: EnvClass) -> Result<Self> {
        Self::new(spec.freq_mhz, spec.height_m, rx_height_m, env)
    }

    pub fn freq_mhz(&self) -> f64 {
        self.freq_mhz
    }

    pub fn tx_height_m(&self) -> f64 {
        self.tx_height_m
    }

    fn free_space(&self, d_km: f64) -> f64 {
        self.free_space_const + 10.0 * (d_km * d_km + self.height_gap_km2).log10()
    }

    fn hata(&self, d_km: f64) -> f64 {
        let log_d = d_km.log10();
        let distance_term = if d_km <= 20.0 {
            log_d
        } else {
            let alpha = 1.0 + self.alpha_coef * (d_km / 20.0).log10().powf(0.8);
            log_d.powf(alpha)
        };
        let loss = self.hata_const + self.slope * distance_term;
        loss.max(self.free_space(d_km))
    }

    /// Median path loss in dB. `d_km` must already be validated.
    pub fn loss_unchecked(&self, d_km: f64) -> f64 {
        if d_km <= FREE_SPACE_LIMIT_KM {
            self.free_space(d_km)
        } else if d_km >= HATA_LIMIT_KM {
            self.hata(d_km)
        } else {
            let t = (d_km.log10() - FREE_SPACE_LIMIT_KM.log10())
                / (HATA_LIMIT_KM.log10() - FREE_SPACE_LIMIT_KM.log10());
            self.loss_at_free_space_limit
                + t * (self.loss_at_hata_limit - self.loss_at_free_space_limit)
        }
    }

    pub fn loss(&self, d_km: f64) -> Result<f64> {
        if !(d_km > 0.0 && d_km <= MAX_DISTANCE_KM) {
            return Err(Error::Range {
                param: "distance_km",
                value: d_km,
                valid: "(0, 100]",
            });
        }
        Ok(self.loss_unchecked(d_km))
    }
}

/// Deterministic median path loss in dB for one link.
pub fn path_loss_median(spec: &AntennaSpec, link: &LinkParams) -> Result<f64> {
    HataModel::for_link(spec, link.rx_height_m, link.env)?.loss(link.distance_km)
}

/// One draw of the path-loss variation term in dB.
pub fn path_loss_variation<R: Rng + ?Sized>(vspec: &VariationSpec, rng: &mut R) -> f64 {
    if !vspec.enabled {
        return 0.0;
    }
    if vspec.sigma_db == 0.0 {
        return vspec.mu_db;
    }
    Normal::new(vspec.mu_db, vspec.sigma_db)
        .expect("validated variation spec")
        .sample(rng)
}

/// Received power under the simplified link budget (all gains and losses
/// other than path loss are zero).
pub fn link_budget(power_dbm: f64, loss_db: f64) -> f64 {
    power_dbm - loss_db
}

/// A receiver location: settlement pixel id and planar centre in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RxPoint {
    pub id: u64,
    pub x: f64,
    pub y: f64,
}

/// Where the environment class of a link comes from.
#[derive(Debug, Clone, Copy)]
pub enum LinkEnv<'a> {
    /// One class per receiver point.
    Receiver(&'a [EnvClass]),
    /// One class per antenna, applied to all of its links.
    Transmitter(&'a [EnvClass]),
    /// The same class everywhere.
    Uniform(EnvClass),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RssOptions {
    pub rx_height_m: f64,
    pub variation: VariationSpec,
    pub dead_threshold_dbm: f64,
    pub seed: u64,
}

impl Default for RssOptions {
    fn default() -> Self {
        RssOptions {
            rx_height_m: 1.0,
            variation: VariationSpec::DISABLED,
            dead_threshold_dbm: DEFAULT_DEAD_THRESHOLD_DBM,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum RssStorage {
    /// Row-major `pixels x antennas`.
    Dense(Vec<f64>),
    /// Per pixel, the strongest links sorted by descending RSS (ties by
    /// ascending bts id). Row `i` spans `offsets[i]..offsets[i + 1]`.
    Strongest {
        offsets: Vec<usize>,
        links: Vec<(u32, f64)>,
    },
}

/// Received signal strength in dBm for every (receiver, antenna) pair, or for
/// the strongest few antennas per receiver.
#[derive(Debug, Clone, PartialEq)]
pub struct RssField {
    pixel_ids: Vec<u64>,
    bts_ids: Vec<BtsId>,
    dead_threshold_dbm: f64,
    storage: RssStorage,
}

impl RssField {
    /// Builds a dense field from a row-major matrix.
    pub fn from_dense(
        pixel_ids: Vec<u64>,
        bts_ids: Vec<BtsId>,
        rss_dbm: Vec<f64>,
        dead_threshold_dbm: f64,
    ) -> Result<Self> {
        if rss_dbm.len() != pixel_ids.len() * bts_ids.len() {
            return Err(Error::Config(format!(
                "rss matrix has {} values, expected {} x {}",
                rss_dbm.len(),
                pixel_ids.len(),
                bts_ids.len()
            )));
        }
        if let Some(v) = rss_dbm.iter().find(|v| !v.is_finite()) {
            return Err(Error::Data(format!("non-finite rss value {v}")));
        }
        Ok(RssField {
            pixel_ids,
            bts_ids,
            dead_threshold_dbm,
            storage: RssStorage::Dense(rss_dbm),
        })
    }

    pub fn pixel_ids(&self) -> &[u64] {
        &self.pixel_ids
    }

    pub fn bts_ids(&self) -> &[BtsId] {
        &self.bts_ids
    }

    pub fn dead_threshold_dbm(&self) -> f64 {
        self.dead_threshold_dbm
    }

    pub fn is_dense(&self) -> bool {
        matches!(self.storage, RssStorage::Dense(_))
    }

    pub fn is_dead(&self, rss_dbm: f64) -> bool {
        rss_dbm < self.dead_threshold_dbm
    }

    /// RSS of the link between receiver row `pixel` and antenna column
    /// `antenna`, if stored.
    pub fn get(&self, pixel: usize, antenna: usize) -> Option<f64> {
        match &self.storage {
            RssStorage::Dense(values) => {
                let n = self.bts_ids.len();
                (pixel < self.pixel_ids.len() && antenna < n).then(|| values[pixel * n + antenna])
            }
            RssStorage::Strongest { offsets, links } => links[offsets[pixel]..offsets[pixel + 1]]
                .iter()
                .find(|(j, _)| *j as usize == antenna)
                .map(|&(_, v)| v),
        }
    }

    /// Up to `k` live links of a receiver, strongest first; equal RSS is
    /// ordered by ascending bts id.
    pub fn strongest_live(&self, pixel: usize, k: usize) -> Vec<(usize, f64)> {
        let mut out: Vec<(usize, f64)> = match &self.storage {
            RssStorage::Dense(values) => {
                let n = self.bts_ids.len();
                let row = &values[pixel * n..(pixel + 1) * n];
                let mut live: Vec<(usize, f64)> = row
                    .iter()
                    .enumerate()
                    .filter(|(_, v)| !self.is_dead(**v))
                    .map(|(j, &v)| (j, v))
                    .collect();
                live.sort_by(|a, b| self.link_order(*a, *b));
                live
            }
            RssStorage::Strongest { offsets, links } => links[offsets[pixel]..offsets[pixel + 1]]
                .iter()
                .filter(|(_, v)| !self.is_dead(*v))
                .map(|&(j, v)| (j as usize, v))
                .collect(),
        };
        out.truncate(k);
        out
    }

    /// Number of links retained per receiver, `None` when dense.
    pub fn retained_per_pixel(&self) -> Option<usize> {
        match &self.storage {
            RssStorage::Dense(_) => None,
            RssStorage::Strongest { offsets, .. } => offsets.windows(2).map(|w| w[1] - w[0]).max(),
        }
    }

    fn link_order(&self, a: (usize, f64), b: (usize, f64)) -> std::cmp::Ordering {
        b.1.total_cmp(&a.1)
            .then_with(|| self.bts_ids[a.0].cmp(&self.bts_ids[b.0]))
    }

    /// Field restricted to the given receiver rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Result<RssField> {
        if let Some(&r) = rows.iter().find(|&&r| r >= self.pixel_ids.len()) {
            return Err(Error::Mismatch(format!(
                "row {r} outside a field of {} receivers",
                self.pixel_ids.len()
            )));
        }
        let storage = match &self.storage {
            RssStorage::Dense(values) => {
                let n = self.bts_ids.len();
                let mut out = Vec::with_capacity(rows.len() * n);
                for &r in rows {
                    out.extend_from_slice(&values[r * n..(r + 1) * n]);
                }
                RssStorage::Dense(out)
            }
            RssStorage::Strongest { offsets, links } => {
                let mut new_offsets = Vec::with_capacity(rows.len() + 1);
                new_offsets.push(0);
                let mut new_links = Vec::new();
                for &r in rows {
                    new_links.extend_from_slice(&links[offsets[r]..offsets[r + 1]]);
                    new_offsets.push(new_links.len());
                }
                RssStorage::Strongest {
                    offsets: new_offsets,
                    links: new_links,
                }
            }
        };
        Ok(RssField {
            pixel_ids: rows.iter().map(|&r| self.pixel_ids[r]).collect(),
            bts_ids: self.bts_ids.clone(),
            dead_threshold_dbm: self.dead_threshold_dbm,
            storage,
        })
    }

    /// Adds `offset_db` to every stored value.
    pub fn shifted(&self, offset_db: f64) -> RssField {
        let mut out = self.clone();
        match &mut out.storage {
            RssStorage::Dense(values) => values.iter_mut().for_each(|v| *v += offset_db),
            RssStorage::Strongest { links, .. } => {
                links.iter_mut().for_each(|(_, v)| *v += offset_db)
            }
        }
        out
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of the variation stream for one link.
pub fn link_seed(seed: u64, pixel_id: u64, bts_id: BtsId) -> u64 {
    splitmix64(seed ^ splitmix64(pixel_id ^ splitmix64(u64::from(bts_id.0) << 1 | 1)))
}

struct LinkEvaluator<'a> {
    specs: &'a [AntennaSpec],
    env: LinkEnv<'a>,
    opts: RssOptions,
    /// Indexed `[antenna][env]` for transmitter/uniform env, `[antenna][env]`
    /// for receiver env as well (three models per antenna).
    models: Vec<[HataModel; 3]>,
}

impl<'a> LinkEvaluator<'a> {
    fn new(
        specs: &'a [AntennaSpec],
        n_points: usize,
        env: LinkEnv<'a>,
        opts: RssOptions,
    ) -> Result<Self> {
        if specs.is_empty() {
            return Err(Error::Config("rss field needs at least one antenna".into()));
        }
        opts.variation.validate()?;
        check_rx_height(opts.rx_height_m)?;
        match env {
            LinkEnv::Receiver(classes) if classes.len() != n_points => {
                return Err(Error::Config(format!(
                    "{} receiver env labels for {} points",
                    classes.len(),
                    n_points
                )))
            }
            LinkEnv::Transmitter(classes) if classes.len() != specs.len() => {
                return Err(Error::Config(format!(
                    "{} antenna env labels for {} antennas",
                    classes.len(),
                    specs.len()
                )))
            }
            _ => {}
        }
        let mut seen = std::collections::HashSet::new();
        for spec in specs {
            spec.validate()?;
            if !seen.insert(spec.bts_id) {
                return Err(Error::Config(format!("duplicate bts id {}", spec.bts_id)));
            }
        }
        let models = specs
            .iter()
            .map(|s| {
                Ok([
                    HataModel::for_link(s, opts.rx_height_m, EnvClass::Urban)?,
                    HataModel::for_link(s, opts.rx_height_m, EnvClass::Suburban)?,
                    HataModel::for_link(s, opts.rx_height_m, EnvClass::Rural)?,
                ])
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(LinkEvaluator {
            specs,
            env,
            opts,
            models,
        })
    }

    fn env_index(env: EnvClass) -> usize {
        match env {
            EnvClass::Urban => 0,
            EnvClass::Suburban => 1,
            EnvClass::Rural => 2,
        }
    }

    #[inline]
    fn rss(&self, point_idx: usize, point: &RxPoint, antenna: usize) -> f64 {
        let spec = &self.specs[antenna];
        let env = match self.env {
            LinkEnv::Receiver(c) => c[point_idx],
            LinkEnv::Transmitter(c) => c[antenna],
            LinkEnv::Uniform(e) => e,
        };
        let dx = point.x - spec.x;
        let dy = point.y - spec.y;
        let d_km = ((dx * dx + dy * dy).sqrt() / 1000.0).clamp(MIN_LINK_KM, MAX_DISTANCE_KM);
        let mut loss = self.models[antenna][Self::env_index(env)].loss_unchecked(d_km);
        if self.opts.variation.enabled {
            let mut rng =
                ChaCha8Rng::seed_from_u64(link_seed(self.opts.seed, point.id, spec.bts_id));
            loss += path_loss_variation(&self.opts.variation, &mut rng);
        }
        link_budget(spec.power_dbm, loss)
    }
}

/// Full RSS matrix for every receiver point and antenna.
///
/// Distances are planar, clamped to `[MIN_LINK_KM, 100 km]`. Variation draws
/// come from a per-link stream seeded by `(seed, pixel id, bts id)`, so the
/// result does not depend on evaluation order.
pub fn rss_field(
    specs: &[AntennaSpec],
    points: &[RxPoint],
    env: LinkEnv<'_>,
    opts: &RssOptions,
) -> Result<RssField> {
    let eval = LinkEvaluator::new(specs, points.len(), env, *opts)?;
    let n = specs.len();
    let mut values = vec![0.0; points.len() * n];
    values
        .par_chunks_mut(n)
        .zip(points.par_iter().enumerate())
        .for_each(|(row, (i, p))| {
            for (j, v) in row.iter_mut().enumerate() {
                *v = eval.rss(i, p, j);
            }
        });
    Ok(RssField {
        pixel_ids: points.iter().map(|p| p.id).collect(),
        bts_ids: specs.iter().map(|s| s.bts_id).collect(),
        dead_threshold_dbm: opts.dead_threshold_dbm,
        storage: RssStorage::Dense(values),
    })
}

/// Like [`rss_field`] but keeps only the `keep` strongest links of each
/// receiver (dead ones included). Memory is `O(points * keep)`.
pub fn rss_field_strongest(
    specs: &[AntennaSpec],
    points: &[RxPoint],
    env: LinkEnv<'_>,
    opts: &RssOptions,
    keep: usize,
) -> Result<RssField> {
    if keep == 0 {
        return Err(Error::Config(
            "must retain at least one link per point".into(),
        ));
    }
    let eval = LinkEvaluator::new(specs, points.len(), env, *opts)?;
    let keep = keep.min(specs.len());
    let order = |a: &(u32, f64), b: &(u32, f64)| {
        b.1.total_cmp(&a.1)
            .then_with(|| specs[a.0 as usize].bts_id.cmp(&specs[b.0 as usize].bts_id))
    };
    let rows: Vec<Vec<(u32, f64)>> = points
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let mut best: Vec<(u32, f64)> = Vec::with_capacity(keep + 1);
            for j in 0..specs.len() {
                let cand = (j as u32, eval.rss(i, p, j));
                if best.len() == keep {
                    if order(&cand, &best[keep - 1]).is_ge() {
                        continue;
                    }
                    best.pop();
                }
                let pos = best.partition_point(|b| order(b, &cand).is_lt());
                best.insert(pos, cand);
            }
            best
        })
        .collect();
    let mut offsets = Vec::with_capacity(points.len() + 1);
    offsets.push(0);
    let mut links = Vec::with_capacity(points.len() * keep);
    for row in rows {
        links.extend(row);
        offsets.push(links.len());
    }
    Ok(RssField {
        pixel_ids: points.iter().map(|p| p.id).collect(),
        bts_ids: specs.iter().map(|s| s.bts_id).collect(),
        dead_threshold_dbm: opts.dead_threshold_dbm,
        storage: RssStorage::Strongest { offsets, links },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn antenna(id: u32, x: f64, y: f64) -> AntennaSpec {
        AntennaSpec {
            bts_id: BtsId(id),
            x,
            y,
            height_m: 30.0,
            freq_mhz: 900.0,
            power_dbm: 43.0,
        }
    }

    #[test]
    fn frequency_out_of_range_names_parameter() {
        let mut spec = antenna(1, 0.0, 0.0);
        spec.freq_mhz = 3500.0;
        let link = LinkParams {
            distance_km: 1.0,
            rx_height_m: 1.0,
            env: EnvClass::Urban,
        };
        let err = path_loss_median(&spec, &link).unwrap_err();
        assert!(matches!(
            err,
            Error::Range {
                param: "freq_mhz",
                ..
            }
        ));
    }

    #[test]
    fn distance_out_of_range() {
        let spec = antenna(1, 0.0, 0.0);
        for d in [0.0, -1.0, 100.5, f64::NAN] {
            let link = LinkParams {
                distance_km: d,
                rx_height_m: 1.0,
                env: EnvClass::Rural,
            };
            assert!(matches!(
                path_loss_median(&spec, &link),
                Err(Error::Range {
                    param: "distance_km",
                    ..
                })
            ));
        }
    }

    #[test]
    fn short_links_are_continuous_at_regime_edges() {
        let m = HataModel::new(900.0, 30.0, 1.0, EnvClass::Urban).unwrap();
        let eps = 1e-9;
        assert!((m.loss_unchecked(0.04) - m.loss_unchecked(0.04 + eps)).abs() < 1e-4);
        assert!((m.loss_unchecked(0.1) - m.loss_unchecked(0.1 - eps)).abs() < 1e-4);
    }

    #[test]
    fn low_masts_pay_height_penalty() {
        let tall = HataModel::new(900.0, 30.0, 1.0, EnvClass::Urban).unwrap();
        let short = HataModel::new(900.0, 15.0, 1.0, EnvClass::Urban).unwrap();
        let gap = short.loss_unchecked(2.0) - tall.loss_unchecked(2.0);
        assert!((gap - 20.0 * 2f64.log10()).abs() < 1e-9);
    }

    #[test]
    fn empty_antenna_list_is_config_error() {
        let pts = [RxPoint {
            id: 0,
            x: 0.0,
            y: 0.0,
        }];
        let err = rss_field(
            &[],
            &pts,
            LinkEnv::Uniform(EnvClass::Rural),
            &RssOptions::default(),
        );
        assert!(matches!(err, Err(Error::Config(_))));
    }

    #[test]
    fn strongest_storage_agrees_with_dense() {
        let specs = [
            antenna(3, 0.0, 0.0),
            antenna(1, 2000.0, 0.0),
            antenna(2, 900.0, 1500.0),
        ];
        let pts: Vec<RxPoint> = (0..20)
            .map(|i| RxPoint {
                id: i,
                x: (i as f64) * 137.0,
                y: (i as f64 * 71.0) % 900.0,
            })
            .collect();
        let opts = RssOptions::default();
        let env = LinkEnv::Uniform(EnvClass::Suburban);
        let dense = rss_field(&specs, &pts, env, &opts).unwrap();
        let top = rss_field_strongest(&specs, &pts, env, &opts, 2).unwrap();
        assert_eq!(top.retained_per_pixel(), Some(2));
        for i in 0..pts.len() {
            assert_eq!(dense.strongest_live(i, 2), top.strongest_live(i, 2));
        }
    }

    #[test]
    fn env_class_strings() {
        for env in EnvClass::ALL {
            assert_eq!(env.as_str().parse::<EnvClass>().unwrap(), env);
            assert_eq!(
                serde_json::to_string(&env).unwrap(),
                format!("\"{}\"", env.as_str())
            );
        }
        assert!("Urban".parse::<EnvClass>().is_err());
    }
}
