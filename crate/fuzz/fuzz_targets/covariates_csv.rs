#![no_main]
use covmap::io::tables::{parse_covariates_csv, write_covariates_csv};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(t) = parse_covariates_csv(text) {
        let canonical = write_covariates_csv(&t);
        let again = parse_covariates_csv(&canonical).expect("canonical covariates parse");
        assert_eq!(write_covariates_csv(&again), canonical);
    }
});
