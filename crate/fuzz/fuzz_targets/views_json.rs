#![no_main]

use libfuzzer_sys::fuzz_target;
use normcarve::ViewSet;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(views) = ViewSet::from_json(text) {
        let again = ViewSet::from_json(&views.to_json()).expect("serialized views parse");
        assert_eq!(again.len(), views.len());
    }
});
