#![no_main]

use libfuzzer_sys::fuzz_target;
use mdslab::io::RunConfig;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        if let Ok(c) = RunConfig::parse(s) {
            assert_eq!(RunConfig::parse(&c.to_text()).expect("printed config parses"), c);
        }
    }
});
