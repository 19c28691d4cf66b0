#![no_main]

use libfuzzer_sys::fuzz_target;
use normcarve::oracle::PerturbSpec;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(spec) = PerturbSpec::from_json(text) {
        let again = PerturbSpec::from_json(&spec.to_json()).expect("serialized spec parses");
        assert_eq!(again, spec);
    }
});
