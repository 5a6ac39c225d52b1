#![no_main]

use libfuzzer_sys::fuzz_target;
use savgo_core::numerics::checkpoint;

fuzz_target!(|data: &[u8]| {
    if let Ok(net) = checkpoint::decode(data) {
        let bytes = checkpoint::encode(&net);
        let again = checkpoint::decode(&bytes).expect("re-encoded checkpoint decodes");
        assert_eq!(checkpoint::encode(&again), bytes);
    }
});
