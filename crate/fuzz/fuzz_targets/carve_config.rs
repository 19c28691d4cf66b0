#![no_main]

use libfuzzer_sys::fuzz_target;
use normcarve::carving::CarveConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = CarveConfig::from_json(text) {
        let again = CarveConfig::from_json(&cfg.to_json()).expect("serialized config parses");
        assert_eq!(again, cfg);
    }
});
