#![no_main]

use libfuzzer_sys::fuzz_target;
use savgo_harness::{parse_list, Axis, AxisValue};

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else { return };
    if let Ok(v) = parse_list::<u64>(s) {
        let joined = v.iter().map(u64::to_string).collect::<Vec<_>>().join(",");
        assert_eq!(parse_list::<u64>(&joined).unwrap(), v);
    }
    let _ = parse_list::<f64>(s);
    for axis in [Axis::Lambda, Axis::K, Axis::Variant, Axis::Seed] {
        let _ = AxisValue::parse_list(axis, s);
    }
});
