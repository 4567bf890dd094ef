#![no_main]
use covmap::io::tables::{parse_aggregates_csv, write_aggregates_csv};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(a) = parse_aggregates_csv(text) {
        let canonical = write_aggregates_csv(&a);
        assert_eq!(write_aggregates_csv(&parse_aggregates_csv(&canonical).unwrap()), canonical);
    }
});
