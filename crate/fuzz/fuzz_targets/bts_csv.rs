#![no_main]
use covmap::io::tables::parse_bts_csv;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(t) = parse_bts_csv(text) {
            let _ = t.specs();
            let _ = t.sites();
        }
    }
});
