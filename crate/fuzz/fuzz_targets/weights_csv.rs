#![no_main]
use covmap::io::tables::{parse_weights_csv, write_weights_csv};
use covmap::mapping::Scheme;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(m) = parse_weights_csv(text, Scheme::Voronoi) {
        let canonical = write_weights_csv(&m);
        let again = parse_weights_csv(&canonical, Scheme::Voronoi).expect("canonical weights parse");
        assert_eq!(write_weights_csv(&again), canonical);
    }
});
