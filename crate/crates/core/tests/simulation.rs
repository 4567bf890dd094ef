use covmap::io::config::ConfigDocument;
use covmap::mapping::Scheme;
use covmap::propagation::EnvClass;
use covmap::simulation::config::PixelRect;
use covmap::simulation::round::{simulate_round, Metric};
use covmap::simulation::study::{round_seed, run_study};
use covmap::simulation::world::SyntheticWorld;

/// A 6 km square country with 15 masts; one round takes milliseconds.
fn tiny() -> ConfigDocument {
    let mut doc = ConfigDocument::default();
    doc.seed = 77;
    doc.rounds = 3;
    let s = &mut doc.simulation;
    s.ncols = 60;
    s.nrows = 60;
    s.population = 6000;
    s.layout.block_px = 20;
    s.layout.urban_split = 2;
    s.urban_sd_px = 7.0;
    s.rural.clusters = 3;
    s.rural.cluster_sd_px = [5.0, 10.0];
    s.uninhabited = PixelRect {
        col: 40,
        row: 0,
        ncols: 10,
        nrows: 10,
    };
    s.bts.urban_inhabitants_per_bts = 300.0;
    s.bts.rural_inhabitants_per_bts = 600.0;
    doc.validate().unwrap();
    doc
}

#[test]
fn world_matches_its_configuration() {
    let doc = tiny();
    let cfg = &doc.simulation;
    let w = SyntheticWorld::generate(cfg, 5).unwrap();
    assert_eq!(w.population.total(), cfg.population);
    let settled: f64 = w.settlements.iter().map(|s| s.count).sum();
    assert_eq!(settled, cfg.population as f64);
    let grid = cfg.grid();
    for s in &w.settlements {
        let (r, c) = grid.row_col(s.pixel);
        assert!(
            !cfg.uninhabited.contains(r, c),
            "settlement in the uninhabited zone"
        );
    }
    let (ku, kr) = cfg.bts_counts();
    assert_eq!((ku, kr), (10, 5));
    let n = w.network.specs.len();
    assert_eq!(n, ku + kr);
    assert_eq!(w.network.in_city.iter().filter(|c| **c).count(), ku);
    let ids: Vec<u32> = w.network.specs.iter().map(|s| s.bts_id.0).collect();
    assert_eq!(ids, (1..=n as u32).collect::<Vec<_>>());
    // every mast sits on a settlement
    for s in &w.network.specs {
        let p = grid.locate(s.x, s.y).unwrap();
        assert!(w.settlements.iter().any(|t| t.pixel == p));
    }
    let count = |e| w.network.env.iter().filter(|x| **x == e).count();
    assert_eq!((count(EnvClass::Urban), count(EnvClass::Rural)), (7, 1));
    assert_eq!(w.poverty.len(), w.settlements.len());
    assert!(w.poverty.iter().all(|p| (0.0..=1.0).contains(p)));
    // 4 city areas plus the 8 rural blocks around them
    assert_eq!(w.areas.len(), 12);
}

#[test]
fn worlds_are_reproducible() {
    let cfg = tiny().simulation;
    assert_eq!(
        SyntheticWorld::generate(&cfg, 9).unwrap().network,
        SyntheticWorld::generate(&cfg, 9).unwrap().network
    );
    assert_ne!(
        SyntheticWorld::generate(&cfg, 9).unwrap().population,
        SyntheticWorld::generate(&cfg, 10).unwrap().population
    );
}

#[test]
fn benchmark_agrees_with_itself() {
    let doc = tiny();
    let out = simulate_round(&doc, 0, 3).unwrap();
    let order: Vec<Scheme> = out.schemes.iter().map(|s| s.scheme).collect();
    assert_eq!(order[0], Scheme::Benchmark);
    assert_eq!(&order[1..], Scheme::ESTIMATORS);
    let bench = &out.schemes[0];
    assert_eq!(bench.geo.total, Some(1.0));
    assert_eq!(bench.settlement.total, Some(1.0));
    for s in &out.schemes {
        for v in [s.geo.total, s.settlement.total].into_iter().flatten() {
            assert!((0.0..=1.0).contains(&v), "{:?}: {v}", s.scheme);
        }
    }
}

#[test]
fn study_is_independent_of_thread_count() {
    let doc = tiny();
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| run_study(&doc).unwrap())
    };
    let a = run(1);
    assert_eq!(a, run(3));
    assert_eq!(a.rounds, 3);
    let first = simulate_round(&doc, 0, round_seed(doc.seed, 0)).unwrap();
    let round0: Vec<_> = a.records.iter().filter(|r| r.round == 0).cloned().collect();
    assert_eq!(round0, first.records);
}

#[test]
fn tally_shares_sum_to_one_hundred() {
    let study = run_study(&tiny()).unwrap();
    let mut metrics: Vec<Metric> = study.tally.iter().map(|t| t.metric).collect();
    metrics.sort();
    metrics.dedup();
    assert!(metrics.contains(&Metric::SettlementOverlap));
    for m in metrics {
        let rows: Vec<_> = study.tally.iter().filter(|t| t.metric == m).collect();
        assert_eq!(rows.len(), Scheme::ESTIMATORS.len());
        let total: f64 = rows.iter().map(|t| t.win_pct).sum();
        assert!((total - 100.0).abs() < 1e-9, "{m}: {total}");
    }
}

#[test]
fn round_seeds_differ() {
    let seeds: std::collections::BTreeSet<u64> = (0..1000).map(|r| round_seed(1, r)).collect();
    assert_eq!(seeds.len(), 1000);
    assert_ne!(round_seed(1, 0), round_seed(2, 0));
}
