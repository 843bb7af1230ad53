#![no_main]

use libfuzzer_sys::fuzz_target;
use mdslab::scene::Scene;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        if let Ok(scene) = Scene::parse(s) {
            let again = Scene::parse(&scene.to_text()).expect("printed scene parses");
            assert_eq!(again.tracks.len(), scene.tracks.len());
        }
    }
});
