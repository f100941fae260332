#![no_main]

use libfuzzer_sys::fuzz_target;
use stochrelax::cli::{parse_box_spec, parse_counts, parse_point};

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        if let Ok(b) = parse_box_spec(s) {
            assert!(b.iter().all(|iv| iv.lo() <= iv.hi()));
        }
        if let Ok(c) = parse_counts(s) {
            assert!(c.iter().all(|&n| n > 0));
        }
        if let Ok(p) = parse_point(s) {
            assert!(p.iter().all(|v| v.is_finite()));
        }
    }
});
