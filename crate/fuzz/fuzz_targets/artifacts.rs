#![no_main]

// Decoders that sit on top of the container: ADC frames, crops and
// spectrograms.
use libfuzzer_sys::fuzz_target;
use mdslab::io::TensorContainer;
use mdslab::mds::ReducedMds;
use mdslab::rva::BboxCube;
use mdslab::scene::frames_from_container;

fuzz_target!(|data: &[u8]| {
    if let Ok(t) = TensorContainer::from_bytes(data) {
        let _ = frames_from_container(&t);
        let _ = BboxCube::from_container(&t);
        let _ = ReducedMds::from_container(&t);
    }
});
