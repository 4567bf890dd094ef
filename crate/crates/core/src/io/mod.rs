//! File formats: configuration, rasters, CSV tables, GeoJSON areas and
//! output manifests. Writers are deterministic: fixed ordering, LF line
//! endings and numbers printed with [`fmt_num`].

pub mod config;
pub mod geojson;
pub mod output;
pub mod raster;
pub mod tables;

use std::path::Path;

use crate::error::{Error, Result};

/// Significant digits of every number written to a text artifact.
pub const SIG_DIGITS: usize = 12;

/// Formats `v` with 12 significant digits, trailing zeros removed. Plain
/// notation for exponents in `[-5, 12)`, scientific otherwise. `-0` prints
/// as `0`.
pub fn fmt_num(v: f64) -> String {
    if v == 0.0 {
        return "0".to_owned();
    }
    if !v.is_finite() {
        return v.to_string();
    }
    let sci = format!("{:.*e}", SIG_DIGITS - 1, v);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..SIG_DIGITS as i32).contains(&exp) {
        let decimals = (SIG_DIGITS as i32 - 1 - exp).max(0) as usize;
        trim_zeros(format!("{v:.decimals$}"))
    } else {
        format!("{}e{exp}", trim_zeros(mantissa.to_owned()))
    }
}

fn trim_zeros(s: String) -> String {
    if !s.contains('.') {
        return s;
    }
    let t = s.trim_end_matches('0').trim_end_matches('.');
    if t == "-0" {
        "0".to_owned()
    } else {
        t.to_owned()
    }
}

/// `v` after a write/read cycle through [`fmt_num`].
pub fn round_sig(v: f64) -> f64 {
    fmt_num(v).parse().expect("formatted number parses")
}

pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twelve_significant_digits() {
        assert_eq!(fmt_num(1.0), "1");
        assert_eq!(fmt_num(-0.0), "0");
        assert_eq!(fmt_num(0.1 + 0.2), "0.3");
        assert_eq!(fmt_num(1.0 / 3.0), "0.333333333333");
        assert_eq!(fmt_num(2.0 / 3.0), "0.666666666667");
        assert_eq!(fmt_num(123456.5), "123456.5");
        assert_eq!(fmt_num(-9999.0), "-9999");
        assert_eq!(fmt_num(1e15), "1e15");
        assert_eq!(fmt_num(1.25e-7), "1.25e-7");
        assert_eq!(fmt_num(0.00012), "0.00012");
        assert_eq!(fmt_num(-1e-9), "-1e-9");
    }

    #[test]
    fn formatting_is_idempotent() {
        for v in [0.1, 1.0 / 7.0, 123.456789012345, 9.99999999999999e-6, 5e300] {
            let once = fmt_num(v);
            assert_eq!(fmt_num(once.parse().unwrap()), once);
        }
    }
}
