use approx::assert_relative_eq;
use proptest::prelude::*;

use covmap::propagation::{
    link_budget, path_loss_median, rss_field, rss_field_strongest, AntennaSpec, BtsId, EnvClass,
    HataModel, LinkEnv, LinkParams, RssOptions, RxPoint, VariationSpec,
};

/// (freq MHz, distance km, tx height m, rx height m, env, loss dB) from the
/// Python oracle in `tests/oracles/hata.py`.
const GOLDEN: [(f64, f64, f64, f64, EnvClass, f64); 10] = [
    (900.0, 3.0, 30.0, 1.0, EnvClass::Rural, 116.14639886139449),
    (900.0, 1.0, 30.0, 1.0, EnvClass::Urban, 127.84628956142666),
    (900.0, 1.0, 30.0, 1.0, EnvClass::Suburban, 117.9036823131842),
    (2100.0, 2.0, 45.0, 1.5, EnvClass::Urban, 145.7769440312798),
    (
        1800.0,
        5.0,
        60.0,
        1.0,
        EnvClass::Suburban,
        144.78148305318678,
    ),
    (900.0, 30.0, 50.0, 1.0, EnvClass::Rural, 147.94479565235935),
    (900.0, 2.0, 15.0, 1.0, EnvClass::Urban, 144.47062765790153),
    (900.0, 0.02, 30.0, 1.0, EnvClass::Urban, 62.4225680037738),
    (900.0, 0.07, 30.0, 1.0, EnvClass::Rural, 69.31508177122973),
    (100.0, 4.0, 40.0, 2.0, EnvClass::Urban, 120.98607806623637),
];

fn spec(id: u32, x: f64, y: f64, height_m: f64, freq_mhz: f64, power_dbm: f64) -> AntennaSpec {
    AntennaSpec {
        bts_id: BtsId(id),
        x,
        y,
        height_m,
        freq_mhz,
        power_dbm,
    }
}

#[test]
fn matches_independent_oracle() {
    for (f, d, hb, hm, env, want) in GOLDEN {
        let got = HataModel::new(f, hb, hm, env).unwrap().loss(d).unwrap();
        assert_relative_eq!(got, want, max_relative = 1e-12);
    }
}

#[test]
fn rural_anchor_link() {
    let s = spec(1, 0.0, 0.0, 30.0, 900.0, 43.0);
    let link = LinkParams {
        distance_km: 3.0,
        rx_height_m: 1.0,
        env: EnvClass::Rural,
    };
    let loss = path_loss_median(&s, &link).unwrap();
    assert!((loss - 118.0).abs() <= 3.0, "{loss}");
    let rss = link_budget(s.power_dbm, loss);
    assert!((rss + 75.0).abs() <= 3.0, "{rss}");
}

#[test]
fn out_of_band_frequency_is_rejected() {
    assert!(HataModel::new(5000.0, 30.0, 1.0, EnvClass::Urban).is_err());
    assert!(HataModel::new(900.0, -1.0, 1.0, EnvClass::Urban).is_err());
}

#[test]
fn strongest_field_agrees_with_dense_field() {
    let specs = [
        spec(4, 0.0, 0.0, 30.0, 900.0, 43.0),
        spec(2, 2000.0, 0.0, 45.0, 1800.0, 46.0),
        spec(9, 0.0, 3000.0, 20.0, 900.0, 40.0),
    ];
    let envs = [EnvClass::Urban, EnvClass::Rural, EnvClass::Suburban];
    let points: Vec<RxPoint> = (0..25)
        .map(|i| RxPoint {
            id: i,
            x: (i % 5) as f64 * 700.0,
            y: (i / 5) as f64 * 700.0,
        })
        .collect();
    let opts = RssOptions {
        variation: VariationSpec::normal(0.0, 6.0),
        seed: 11,
        ..RssOptions::default()
    };
    let dense = rss_field(&specs, &points, LinkEnv::Transmitter(&envs), &opts).unwrap();
    let strong =
        rss_field_strongest(&specs, &points, LinkEnv::Transmitter(&envs), &opts, 2).unwrap();
    for p in 0..points.len() {
        let mut all: Vec<(usize, f64)> = (0..specs.len())
            .map(|j| (j, dense.get(p, j).unwrap()))
            .collect();
        all.sort_by(|a, b| b.1.total_cmp(&a.1));
        all.retain(|(_, v)| !dense.is_dead(*v));
        all.truncate(2);
        assert_eq!(strong.strongest_live(p, 2), all, "pixel {p}");
    }
}

#[test]
fn variation_depends_on_link_not_order() {
    let specs = [
        spec(1, 0.0, 0.0, 30.0, 900.0, 43.0),
        spec(2, 900.0, 0.0, 30.0, 900.0, 43.0),
    ];
    let pts = [
        RxPoint {
            id: 5,
            x: 100.0,
            y: 100.0,
        },
        RxPoint {
            id: 8,
            x: 400.0,
            y: -300.0,
        },
    ];
    let opts = RssOptions {
        variation: VariationSpec::normal(0.0, 8.0),
        seed: 3,
        ..RssOptions::default()
    };
    let env = LinkEnv::Uniform(EnvClass::Urban);
    let a = rss_field(&specs, &pts, env, &opts).unwrap();
    let rev = [pts[1], pts[0]];
    let b = rss_field(&specs, &rev, env, &opts).unwrap();
    for j in 0..2 {
        assert_eq!(a.get(0, j), b.get(1, j));
        assert_eq!(a.get(1, j), b.get(0, j));
    }
    let c = rss_field(&specs, &pts, env, &RssOptions { seed: 4, ..opts }).unwrap();
    assert_ne!(a.get(0, 0), c.get(0, 0));
}

proptest! {
    #[test]
    fn loss_grows_with_distance(
        f in 150.0f64..2000.0,
        hb in 15.0f64..200.0,
        hm in 1.0f64..10.0,
        d in 0.001f64..33.0,
        step in 1.001f64..3.0,
        env in prop::sample::select(vec![EnvClass::Urban, EnvClass::Suburban, EnvClass::Rural]),
    ) {
        let m = HataModel::new(f, hb, hm, env).unwrap();
        prop_assert!(m.loss(d * step).unwrap() >= m.loss(d).unwrap() - 1e-9);
    }

    #[test]
    fn open_land_never_loses_more_than_urban(
        f in 150.0f64..2000.0,
        hb in 15.0f64..200.0,
        d in 0.2f64..50.0,
    ) {
        let urban = HataModel::new(f, hb, 1.5, EnvClass::Urban).unwrap().loss(d).unwrap();
        let sub = HataModel::new(f, hb, 1.5, EnvClass::Suburban).unwrap().loss(d).unwrap();
        let rural = HataModel::new(f, hb, 1.5, EnvClass::Rural).unwrap().loss(d).unwrap();
        prop_assert!(rural <= sub + 1e-9 && sub <= urban + 1e-9);
    }

    #[test]
    fn never_below_free_space(f in 150.0f64..2000.0, hb in 15.0f64..200.0, d in 0.001f64..80.0) {
        let m = HataModel::new(f, hb, 1.0, EnvClass::Rural).unwrap();
        let fs = 32.4 + 20.0 * f.log10() + 10.0 * (d * d + (hb - 1.0).powi(2) / 1e6).log10();
        prop_assert!(m.loss(d).unwrap() >= fs - 1e-9);
    }
}
