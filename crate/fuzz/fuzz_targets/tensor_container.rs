#![no_main]

use libfuzzer_sys::fuzz_target;
use mdslab::io::TensorContainer;

fuzz_target!(|data: &[u8]| {
    if let Ok(t) = TensorContainer::from_bytes(data) {
        // anything accepted must re-encode and decode to the same value
        let bytes = t.to_bytes().expect("decoded containers re-encode");
        let back = TensorContainer::from_bytes(&bytes).expect("re-encoded bytes decode");
        assert_eq!(back.shape, t.shape);
        assert_eq!(back.axes, t.axes);
        assert_eq!(back.attrs, t.attrs);
    }
});
