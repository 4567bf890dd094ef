//! Replays the checked-in fuzz seeds through the same round-trip checks the
//! fuzz targets make, so regressions show up without a fuzzing toolchain.

use std::path::PathBuf;

use covmap::io::config::ConfigDocument;
use covmap::io::geojson::{parse_areas, write_areas};
use covmap::io::raster::{parse_raster, write_raster};
use covmap::io::tables::{
    parse_aggregates_csv, parse_bts_csv, parse_covariates_csv, parse_metrics_csv, parse_tally_csv,
    parse_weights_csv, write_aggregates_csv, write_covariates_csv, write_metrics_csv,
    write_weights_csv,
};
use covmap::mapping::Scheme;

fn seeds(target: &str) -> Vec<(String, String)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fuzz/corpus")
        .join(target);
    let mut out: Vec<(String, String)> = std::fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| {
            let p = e.unwrap().path();
            (
                p.display().to_string(),
                std::fs::read_to_string(&p).unwrap(),
            )
        })
        .collect();
    out.sort();
    assert!(!out.is_empty(), "no seeds for {target}");
    out
}

/// Asserts that `write . parse` is a fixed point on its own output and
/// returns how many seeds parsed.
fn stable<T>(
    target: &str,
    parse: impl Fn(&str) -> Option<T>,
    write: impl Fn(&T) -> String,
) -> usize {
    let mut ok = 0;
    for (name, text) in seeds(target) {
        if let Some(v) = parse(&text) {
            let canonical = write(&v);
            let again =
                parse(&canonical).unwrap_or_else(|| panic!("{name}: canonical form rejected"));
            assert_eq!(write(&again), canonical, "{name}");
            ok += 1;
        }
    }
    ok
}

#[test]
fn raster_seeds() {
    assert!(stable("raster", |t| parse_raster(t).ok(), write_raster) >= 2);
}

#[test]
fn weights_seeds() {
    let n = stable(
        "weights_csv",
        |t| parse_weights_csv(t, Scheme::Voronoi).ok(),
        write_weights_csv,
    );
    assert!(n >= 2);
}

#[test]
fn covariates_seeds() {
    assert!(
        stable(
            "covariates_csv",
            |t| parse_covariates_csv(t).ok(),
            write_covariates_csv
        ) >= 1
    );
}

#[test]
fn aggregates_seeds() {
    assert!(
        stable(
            "aggregates_csv",
            |t| parse_aggregates_csv(t).ok(),
            write_aggregates_csv
        ) >= 1
    );
}

#[test]
fn metrics_seeds() {
    assert!(
        stable(
            "metrics_csv",
            |t| parse_metrics_csv(t).ok(),
            |r| write_metrics_csv(r)
        ) >= 1
    );
}

#[test]
fn config_seeds() {
    let n = stable(
        "config",
        |t| ConfigDocument::from_json(t).ok(),
        |d| {
            let _ = d.validate();
            d.to_json()
        },
    );
    assert_eq!(n, 3);
}

#[test]
fn geojson_seeds() {
    for (name, text) in seeds("geojson") {
        let set = parse_areas(&text).unwrap_or_else(|e| panic!("{name}: {e}"));
        let out = write_areas(&set, None).unwrap();
        assert_eq!(parse_areas(&out).unwrap(), set, "{name}");
    }
}

#[test]
fn bts_seeds_parse_or_fail_cleanly() {
    let mut parsed = 0;
    for (_, text) in seeds("bts_csv") {
        if let Ok(t) = parse_bts_csv(&text) {
            let _ = t.specs();
            let _ = t.sites();
            parsed += 1;
        }
    }
    // the duplicate-id seed is there to be rejected
    assert_eq!(parsed, 2);
}

#[test]
fn tally_seeds() {
    for (name, text) in seeds("tally_csv") {
        parse_tally_csv(&text).unwrap_or_else(|e| panic!("{name}: {e}"));
    }
}
