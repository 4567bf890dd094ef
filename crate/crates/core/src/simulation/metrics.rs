//! Coverage overlap and prediction accuracy of a mapping scheme against the
//! true network.

use std::collections::{HashMap, HashSet};

use crate::error::{Error, Result};
use crate::geo::{AreaId, Assignment, ZoneRaster};
use crate::propagation::{BtsId, EnvClass};

/// A metric overall and split by environment class.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ByEnv {
    pub total: Option<f64>,
    pub urban: Option<f64>,
    pub suburban: Option<f64>,
    pub rural: Option<f64>,
}

impl ByEnv {
    pub fn get(&self, env: EnvClass) -> Option<f64> {
        match env {
            EnvClass::Urban => self.urban,
            EnvClass::Suburban => self.suburban,
            EnvClass::Rural => self.rural,
        }
    }
}

#[derive(Default, Clone, Copy)]
struct Mean {
    sum: f64,
    n: usize,
}

impl Mean {
    fn push(&mut self, v: f64) {
        self.sum += v;
        self.n += 1;
    }

    fn get(&self) -> Option<f64> {
        (self.n > 0).then(|| self.sum / self.n as f64)
    }
}

fn env_slot(env: EnvClass) -> usize {
    match env {
        EnvClass::Urban => 0,
        EnvClass::Suburban => 1,
        EnvClass::Rural => 2,
    }
}

fn collect(total: Mean, parts: [Mean; 3]) -> ByEnv {
    ByEnv {
        total: total.get(),
        urban: parts[0].get(),
        suburban: parts[1].get(),
        rural: parts[2].get(),
    }
}

/// Estimated coverage area of each BTS on the grid.
#[derive(Debug, Clone, Copy)]
pub enum Coverage<'a> {
    /// One serving BTS per pixel (voronoi tiles, best-server areas).
    Tiles(&'a Assignment),
    /// Each BTS covers the whole statistical area containing it
    /// (point-to-polygon). `site_zone` is indexed like the truth's bts list.
    AreaOfSite {
        zones: &'a ZoneRaster,
        site_zone: &'a [Option<usize>],
    },
}

fn id_index(truth: &Assignment) -> HashMap<BtsId, usize> {
    truth
        .bts_ids
        .iter()
        .enumerate()
        .map(|(i, &b)| (b, i))
        .collect()
}

/// Maps estimated labels onto the truth's bts indices; the two id sets
/// must be identical.
fn relabel(est: &Assignment, truth: &Assignment) -> Result<Vec<u32>> {
    let index = id_index(truth);
    let map = est
        .bts_ids
        .iter()
        .map(|b| {
            index
                .get(b)
                .map(|&i| i as u32)
                .ok_or_else(|| Error::Mismatch(format!("bts {b} is unknown to the truth")))
        })
        .collect::<Result<Vec<u32>>>()?;
    let est_ids: HashSet<&BtsId> = est.bts_ids.iter().collect();
    if let Some(b) = truth.bts_ids.iter().find(|b| !est_ids.contains(b)) {
        return Err(Error::Mismatch(format!(
            "bts {b} is missing from the estimate"
        )));
    }
    Ok(map)
}

/// Per-BTS intersection over union of estimated and true coverage pixels,
/// averaged over BTS (BTS with an empty union are skipped). Split by the
/// true env class of each BTS.
pub fn geographic_overlap(
    estimated: &Coverage<'_>,
    truth: &Assignment,
    classes: Option<&[EnvClass]>,
) -> Result<ByEnv> {
    let nb = truth.bts_ids.len();
    if let Some(c) = classes {
        if c.len() != nb {
            return Err(Error::Mismatch(
                "one env class per true bts required".into(),
            ));
        }
    }
    let true_size = truth.label_counts();
    let mut est_size = vec![0usize; nb];
    let mut inter = vec![0usize; nb];
    match estimated {
        Coverage::Tiles(est) => {
            if est.len() != truth.len() {
                return Err(Error::Mismatch(format!(
                    "estimate covers {} pixels, truth {}",
                    est.len(),
                    truth.len()
                )));
            }
            let map = relabel(est, truth)?;
            for (e, t) in est.labels.iter().zip(&truth.labels) {
                if let Some(e) = e {
                    let e = map[*e as usize];
                    est_size[e as usize] += 1;
                    if *t == Some(e) {
                        inter[e as usize] += 1;
                    }
                }
            }
        }
        Coverage::AreaOfSite { zones, site_zone } => {
            if site_zone.len() != nb || zones.grid.len() != truth.len() {
                return Err(Error::Mismatch("site zones do not match the truth".into()));
            }
            for (j, z) in site_zone.iter().enumerate() {
                if let Some(z) = z {
                    est_size[j] = zones.sizes[*z];
                }
            }
            for (p, t) in truth.labels.iter().enumerate() {
                if let Some(t) = t {
                    let j = *t as usize;
                    if site_zone[j].is_some() && zones.zone_of(p) == site_zone[j] {
                        inter[j] += 1;
                    }
                }
            }
        }
    }
    let mut total = Mean::default();
    let mut parts = [Mean::default(); 3];
    for j in 0..nb {
        let union = est_size[j] + true_size[j] - inter[j];
        if union == 0 {
            continue;
        }
        let iou = inter[j] as f64 / union as f64;
        total.push(iou);
        if let Some(c) = classes {
            parts[env_slot(c[j])].push(iou);
        }
    }
    Ok(collect(total, parts))
}

/// Estimated serving BTS of each settlement.
#[derive(Debug, Clone, Copy)]
pub enum SettlementEstimate<'a> {
    /// One label per settlement.
    Serving(&'a Assignment),
    /// Every BTS of the settlement's area shares it equally
    /// (point-to-polygon). `zone_bts` lists truth bts indices per zone and
    /// `settlement_zone` the zone of each settlement.
    AreaShare {
        zone_bts: &'a [Vec<usize>],
        settlement_zone: &'a [Option<usize>],
    },
}

/// Share of settlements whose estimated serving BTS is the true one. Shared
/// assignments count fractionally; settlements uncovered in truth match only
/// an uncovered estimate. Split by the env class of the true serving BTS.
pub fn settlement_overlap(
    estimated: &SettlementEstimate<'_>,
    truth: &Assignment,
    classes: Option<&[EnvClass]>,
) -> Result<ByEnv> {
    let mut total = Mean::default();
    let mut parts = [Mean::default(); 3];
    let mut push = |t: Option<u32>, m: f64| {
        total.push(m);
        if let (Some(t), Some(c)) = (t, classes) {
            parts[env_slot(c[t as usize])].push(m);
        }
    };
    match estimated {
        SettlementEstimate::Serving(est) => {
            if est.len() != truth.len() {
                return Err(Error::Mismatch(format!(
                    "estimate has {} settlements, truth {}",
                    est.len(),
                    truth.len()
                )));
            }
            let map = relabel(est, truth)?;
            for (e, t) in est.labels.iter().zip(&truth.labels) {
                let e = e.map(|e| map[e as usize]);
                push(*t, if e == *t { 1.0 } else { 0.0 });
            }
        }
        SettlementEstimate::AreaShare {
            zone_bts,
            settlement_zone,
        } => {
            if settlement_zone.len() != truth.len() {
                return Err(Error::Mismatch(
                    "settlement zones do not match the truth".into(),
                ));
            }
            for (z, t) in settlement_zone.iter().zip(&truth.labels) {
                let serving: &[usize] = z.map_or(&[], |z| zone_bts[z].as_slice());
                let m = match t {
                    None => f64::from(u8::from(serving.is_empty())),
                    Some(t) if serving.contains(&(*t as usize)) => 1.0 / serving.len() as f64,
                    Some(_) => 0.0,
                };
                push(*t, m);
            }
        }
    }
    Ok(collect(total, parts))
}

/// Hard-assignment convenience form of [`settlement_overlap`].
pub fn settlement_overlap_share(estimated: &Assignment, truth: &Assignment) -> Result<f64> {
    Ok(
        settlement_overlap(&SettlementEstimate::Serving(estimated), truth, None)?
            .total
            .unwrap_or(0.0),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PredictionMetrics {
    /// Pearson correlation; `None` if fewer than two pairs or a constant
    /// series.
    pub rho: Option<f64>,
    /// Mean of `estimate - truth`.
    pub bias: Option<f64>,
    pub rmse: Option<f64>,
    pub n: usize,
}

/// Correlation, bias and RMSE over the areas where both series are
/// present, optionally restricted to `subset`.
pub fn prediction_metrics(
    estimated: &[(AreaId, Option<f64>)],
    truth: &[(AreaId, Option<f64>)],
    subset: Option<&HashSet<AreaId>>,
) -> PredictionMetrics {
    let truth: HashMap<&AreaId, f64> = truth
        .iter()
        .filter_map(|(a, v)| v.map(|v| (a, v)))
        .collect();
    let pairs: Vec<(f64, f64)> = estimated
        .iter()
        .filter(|(a, _)| subset.is_none_or(|s| s.contains(a)))
        .filter_map(|(a, e)| Some((((*e)?), *truth.get(a)?)))
        .collect();
    pearson_bias_rmse(&pairs)
}

/// Metrics of `(estimate, truth)` pairs.
pub fn pearson_bias_rmse(pairs: &[(f64, f64)]) -> PredictionMetrics {
    let n = pairs.len();
    if n == 0 {
        return PredictionMetrics::default();
    }
    let nf = n as f64;
    let bias = pairs.iter().map(|(e, t)| e - t).sum::<f64>() / nf;
    let rmse = (pairs.iter().map(|(e, t)| (e - t) * (e - t)).sum::<f64>() / nf).sqrt();
    let rho = if n >= 2 {
        let me = pairs.iter().map(|p| p.0).sum::<f64>() / nf;
        let mt = pairs.iter().map(|p| p.1).sum::<f64>() / nf;
        let (mut see, mut stt, mut set) = (0.0, 0.0, 0.0);
        for (e, t) in pairs {
            see += (e - me) * (e - me);
            stt += (t - mt) * (t - mt);
            set += (e - me) * (t - mt);
        }
        (see > 0.0 && stt > 0.0).then(|| (set / (see * stt).sqrt()).clamp(-1.0, 1.0))
    } else {
        None
    };
    PredictionMetrics {
        rho,
        bias: Some(bias),
        rmse: Some(rmse),
        n,
    }
}
