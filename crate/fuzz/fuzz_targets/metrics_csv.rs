#![no_main]
use covmap::io::tables::{parse_metrics_csv, write_metrics_csv};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(r) = parse_metrics_csv(text) {
        let canonical = write_metrics_csv(&r);
        assert_eq!(write_metrics_csv(&parse_metrics_csv(&canonical).unwrap()), canonical);
    }
});
