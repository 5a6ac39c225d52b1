#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(rows) = savgo_harness::parse_metrics(data) else { return };
    assert!(rows.windows(2).all(|w| w[0].step <= w[1].step));
    let text: String = rows.iter().map(|r| savgo_harness::metrics_io::format_row(r).join(",") + "\n").collect();
    let header = savgo_core::trainer::METRICS_HEADER.join(",");
    let again = savgo_harness::parse_metrics(format!("{header}\n{text}").as_bytes()).expect("reformatted rows parse");
    assert_eq!(again.len(), rows.len());
});
