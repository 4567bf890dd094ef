use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use covmap::geo::voronoi_assign;
use covmap::io::config::{load_config, ConfigDocument};
use covmap::io::geojson::load_areas;
use covmap::io::output::{verify_manifest, MANIFEST};
use covmap::io::raster::load_raster;
use covmap::io::tables::{load_bts_csv, parse_aggregates_csv, write_weights_csv};
use covmap::mapping::weights_voronoi;
use covmap::simulation::config::PixelRect;

fn covmap(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_covmap"))
        .args(args)
        .output()
        .unwrap()
}

fn ok(args: &[&str]) {
    let out = covmap(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn fails(args: &[&str]) -> String {
    let out = covmap(args);
    assert_eq!(out.status.code(), Some(1), "{args:?} should fail");
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.starts_with("error: "), "{err}");
    err
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn tiny_config(dir: &Path) -> PathBuf {
    let mut doc = ConfigDocument::default();
    doc.seed = 5;
    doc.rounds = 3;
    let c = &mut doc.simulation;
    c.ncols = 60;
    c.nrows = 60;
    c.population = 6000;
    c.layout.block_px = 20;
    c.layout.urban_split = 2;
    c.urban_sd_px = 7.0;
    c.rural.clusters = 3;
    c.rural.cluster_sd_px = [5.0, 10.0];
    c.uninhabited = PixelRect {
        col: 40,
        row: 0,
        ncols: 10,
        nrows: 10,
    };
    c.bts.urban_inhabitants_per_bts = 300.0;
    c.bts.rural_inhabitants_per_bts = 600.0;
    let p = dir.join("tiny.json");
    std::fs::write(&p, doc.to_json()).unwrap();
    p
}

fn dir_bytes(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().into_string().unwrap(),
                std::fs::read(e.path()).unwrap(),
            )
        })
        .collect()
}

#[test]
fn simulate_is_reproducible_across_thread_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny_config(tmp.path());
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    ok(&[
        "simulate",
        "--config",
        s(&cfg),
        "--out",
        s(&a),
        "--jobs",
        "1",
    ]);
    ok(&[
        "simulate",
        "--config",
        s(&cfg),
        "--out",
        s(&b),
        "--jobs",
        "4",
    ]);
    let files = dir_bytes(&a);
    assert_eq!(files, dir_bytes(&b));
    for f in [
        "config.json",
        "metrics_rounds.csv",
        "tally.csv",
        "boxplots.svg",
        MANIFEST,
    ] {
        assert!(files.contains_key(f), "{f} missing");
    }
    assert!(verify_manifest(&a).unwrap().is_empty());
    // overrides land in the recorded configuration
    let c = tmp.path().join("c");
    ok(&[
        "simulate",
        "--config",
        s(&cfg),
        "--out",
        s(&c),
        "--rounds",
        "1",
        "--seed",
        "8",
    ]);
    let doc = load_config(&c.join("config.json")).unwrap();
    assert_eq!((doc.rounds, doc.seed), (1, 8));
}

#[test]
fn bad_invocations_fail_with_a_message() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    let err = fails(&[
        "simulate",
        "--config",
        "/nonexistent/c.json",
        "--out",
        s(&out),
    ]);
    assert!(err.contains("/nonexistent/c.json"), "{err}");
    let cfg = tiny_config(tmp.path());
    fails(&[
        "simulate",
        "--config",
        s(&cfg),
        "--out",
        s(&out),
        "--jobs",
        "0",
    ]);
    let err = fails(&["report", "--study", s(tmp.path()), "--out", s(&out)]);
    assert!(err.contains("metrics_rounds.csv"), "{err}");
    // clap rejects the benchmark as a weights scheme
    assert_eq!(
        covmap(&["weights", "--scheme", "benchmark"]).status.code(),
        Some(2)
    );
}

#[test]
fn real_data_workflow_on_a_snapshot() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny_config(tmp.path());
    let sim = tmp.path().join("sim");
    ok(&[
        "simulate",
        "--config",
        s(&cfg),
        "--out",
        s(&sim),
        "--rounds",
        "2",
        "--snapshot",
    ]);
    let bts = sim.join("snapshot_bts.csv");
    let areas = sim.join("snapshot_areas.geojson");
    let raster = sim.join("snapshot_settlements.asc");
    let cov = sim.join("snapshot_covariates.csv");
    let inputs = [
        "--bts",
        s(&bts),
        "--areas",
        s(&areas),
        "--raster",
        s(&raster),
    ];

    for scheme in ["p2p", "voronoi", "aug-voronoi", "bsa", "idw"] {
        let out = tmp.path().join(scheme);
        let mut args = vec!["weights", "--scheme", scheme, "--out", s(&out)];
        args.extend(inputs);
        ok(&args);
        let w = out.join(format!("weights_{scheme}.csv"));
        assert!(verify_manifest(&out).unwrap().is_empty());
        let agg = out.join("agg.csv");
        ok(&[
            "aggregate",
            "--weights",
            s(&w),
            "--covariates",
            s(&cov),
            "--out",
            s(&agg),
        ]);
        let table = parse_aggregates_csv(&std::fs::read_to_string(&agg).unwrap()).unwrap();
        assert_eq!(table.rows.len(), 12, "{scheme}");
    }

    // the command writes what the library computes
    let r = load_raster(&raster).unwrap();
    let set = load_areas(&areas).unwrap();
    let sites = load_bts_csv(&bts).unwrap().sites();
    let lib = weights_voronoi(
        &voronoi_assign(&r.grid, &sites).unwrap(),
        &set.zones(&r.grid).unwrap(),
    )
    .unwrap();
    let cli = std::fs::read_to_string(tmp.path().join("voronoi/weights_voronoi.csv")).unwrap();
    assert_eq!(cli, write_weights_csv(&lib));

    let idw = load_config(&tmp.path().join("idw/config.json")).unwrap();
    assert_eq!((idw.schemes.idw.s, idw.schemes.idw.k), (2.0, 5));
    assert_eq!(idw.schemes.dead_threshold_dbm, -110.0);

    let mut bad = vec!["weights", "--scheme", "voronoi", "--s", "3", "--out", "x"];
    bad.extend(inputs);
    let err = fails(&bad);
    assert!(err.contains("idw only"), "{err}");

    let cover = tmp.path().join("coverage");
    let mut args = vec!["coverage", "--out", s(&cover)];
    args.extend(inputs);
    ok(&args);
    let summary: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(cover.join("coverage_summary.json")).unwrap(),
    )
    .unwrap();
    assert!(summary["settlements"].as_u64().unwrap() > 0);
}

#[test]
fn reports_regenerate_identically_and_recount_the_tally() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny_config(tmp.path());
    let sim = tmp.path().join("sim");
    ok(&["simulate", "--config", s(&cfg), "--out", s(&sim)]);
    let r1 = tmp.path().join("r1");
    let r2 = tmp.path().join("r2");
    ok(&["report", "--study", s(&sim), "--out", s(&r1)]);
    ok(&["report", "--study", s(&sim), "--out", s(&r2)]);
    let files = dir_bytes(&r1);
    assert_eq!(files, dir_bytes(&r2));
    assert_eq!(
        files["boxplots.svg"],
        std::fs::read(sim.join("boxplots.svg")).unwrap()
    );
    for f in [
        "table_tally.csv",
        "table_geo_overlap.csv",
        "table_settlement_overlap.csv",
        "table_prediction.csv",
        "report.txt",
    ] {
        assert!(files.contains_key(f), "{f} missing");
    }

    // a tally that disagrees with the per-round metrics is refused
    let tally = sim.join("tally.csv");
    let text = std::fs::read_to_string(&tally).unwrap();
    let mut lines: Vec<String> = text.lines().map(str::to_owned).collect();
    let last = lines.len() - 1;
    let (head, _) = lines[last].rsplit_once(',').unwrap();
    lines[last] = format!("{head},123");
    std::fs::write(&tally, lines.join("\n") + "\n").unwrap();
    fails(&["report", "--study", s(&sim), "--out", s(&r1)]);
}
