#![no_main]
use covmap::io::geojson::{parse_areas, write_areas};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(set) = parse_areas(text) {
        let out = write_areas(&set, None).expect("polygon areas need no grid");
        assert_eq!(parse_areas(&out).expect("written areas parse"), set);
    }
});
