#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = savgo_harness::parse_config(text) {
        // Anything accepted must echo to a document that parses back to the
        // same effective config.
        let back = savgo_harness::parse_config(&savgo_harness::echo(&cfg)).expect("echo parses");
        assert_eq!(back, cfg.effective());
    }
});
