#![no_main]
use covmap::io::raster::{parse_raster, write_raster};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(r) = parse_raster(text) {
        let canonical = write_raster(&r);
        let again = parse_raster(&canonical).expect("canonical raster parses");
        assert_eq!(write_raster(&again), canonical);
    }
});
