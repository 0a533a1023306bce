#![no_main]

use libfuzzer_sys::fuzz_target;
use splap::config::{parse_config, serialize_config};

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(cfg) = parse_config(text) {
            // anything that parses must serialize and reparse to itself
            let reparsed =
                parse_config(&serialize_config(&cfg)).expect("serialized config failed to reparse");
            assert_eq!(cfg, reparsed, "config round trip changed the value");
        }
    }
});
