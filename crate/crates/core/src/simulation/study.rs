//! Repeated rounds and the best-scheme tally.

use rayon::prelude::*;

use super::round::{simulate_round, Metric, MetricRecord};
use crate::error::{Error, Result};
use crate::io::config::ConfigDocument;
use crate::mapping::Scheme;

/// Metrics tallied per round and whether larger values win.
pub const TALLY_METRICS: [(Metric, Goal); 5] = [
    (Metric::GeoOverlap, Goal::Max),
    (Metric::SettlementOverlap, Goal::Max),
    (Metric::RhoCommon, Goal::Max),
    (Metric::BiasCommon, Goal::MinAbs),
    (Metric::RmseCommon, Goal::Min),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Goal {
    Max,
    Min,
    MinAbs,
}

impl Goal {
    /// Score where larger is better; missing values rank last.
    fn score(self, v: Option<f64>) -> f64 {
        match (self, v) {
            (_, None) => f64::NEG_INFINITY,
            (_, Some(v)) if v.is_nan() => f64::NEG_INFINITY,
            (Goal::Max, Some(v)) => v,
            (Goal::Min, Some(v)) => -v,
            (Goal::MinAbs, Some(v)) => -v.abs(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TallyRow {
    pub scheme: Scheme,
    pub metric: Metric,
    pub win_pct: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyResult {
    pub rounds: usize,
    /// Sorted by round, then scheme, metric and env order.
    pub records: Vec<MetricRecord>,
    pub tally: Vec<TallyRow>,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of round `round` under master seed `seed`.
pub fn round_seed(seed: u64, round: usize) -> u64 {
    splitmix64(seed ^ splitmix64(round as u64))
}

/// Winner of one round for one metric among the estimators; ties go to the
/// earlier scheme in [`Scheme::ESTIMATORS`].
pub fn round_winner(records: &[MetricRecord], metric: Metric, goal: Goal) -> Scheme {
    let value = |s: Scheme| {
        records
            .iter()
            .find(|r| r.scheme == s && r.metric == metric && r.env.is_none())
            .and_then(|r| r.value)
    };
    let mut best = Scheme::ESTIMATORS[0];
    let mut best_score = goal.score(value(best));
    for s in &Scheme::ESTIMATORS[1..] {
        let score = goal.score(value(*s));
        if score > best_score {
            best = *s;
            best_score = score;
        }
    }
    best
}

/// Percentage of rounds each estimator wins, per tallied metric.
pub fn tally(records: &[MetricRecord], rounds: usize) -> Vec<TallyRow> {
    let mut wins = vec![[0usize; TALLY_METRICS.len()]; Scheme::ESTIMATORS.len()];
    let mut start = 0;
    while start < records.len() {
        let round = records[start].round;
        let end = start
            + records[start..]
                .iter()
                .take_while(|r| r.round == round)
                .count();
        for (m, (metric, goal)) in TALLY_METRICS.iter().enumerate() {
            let w = round_winner(&records[start..end], *metric, *goal);
            let i = Scheme::ESTIMATORS
                .iter()
                .position(|s| *s == w)
                .expect("estimator");
            wins[i][m] += 1;
        }
        start = end;
    }
    let mut out = Vec::new();
    for (i, scheme) in Scheme::ESTIMATORS.iter().enumerate() {
        for (m, (metric, _)) in TALLY_METRICS.iter().enumerate() {
            out.push(TallyRow {
                scheme: *scheme,
                metric: *metric,
                win_pct: if rounds == 0 {
                    0.0
                } else {
                    100.0 * wins[i][m] as f64 / rounds as f64
                },
            });
        }
    }
    out
}

/// Runs `doc.rounds` independent rounds on the current rayon pool.
pub fn run_study(doc: &ConfigDocument) -> Result<StudyResult> {
    doc.validate()?;
    let outcomes: Vec<Vec<MetricRecord>> = (0..doc.rounds)
        .into_par_iter()
        .map(|round| {
            let seed = round_seed(doc.seed, round);
            let out = simulate_round(doc, round, seed).map_err(|e| Error::Round {
                round,
                seed,
                source: Box::new(e),
            })?;
            log::info!("round {round} done (seed {seed})");
            Ok(out.records)
        })
        .collect::<Result<_>>()?;
    let records: Vec<MetricRecord> = outcomes.into_iter().flatten().collect();
    let tally = tally(&records, doc.rounds);
    Ok(StudyResult {
        rounds: doc.rounds,
        records,
        tally,
    })
}
