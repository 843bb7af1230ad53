#![no_main]

use libfuzzer_sys::fuzz_target;
use mdslab::io::TensorContainer;
use mdslab::nn::load_checkpoint;

fuzz_target!(|data: &[u8]| {
    if let Ok(t) = TensorContainer::from_bytes(data) {
        if let Ok((model, params)) = load_checkpoint(&t) {
            assert_eq!(params.len(), model.param_count());
        }
    }
});
