#![no_main]
use covmap::io::tables::parse_tally_csv;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = parse_tally_csv(text);
    }
});
