#![no_main]

use libfuzzer_sys::fuzz_target;
use mdslab::io::labels::{format_labels, parse_labels};

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        if let Ok(rows) = parse_labels(s) {
            assert_eq!(parse_labels(&format_labels(&rows)).expect("printed labels parse"), rows);
        }
    }
});
