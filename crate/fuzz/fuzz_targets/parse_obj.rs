#![no_main]

use libfuzzer_sys::fuzz_target;
use normcarve::io::{parse_obj, write_obj};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(mesh) = parse_obj(text) {
        mesh.validate().expect("parsed mesh is valid");
        let again = parse_obj(&write_obj(&mesh)).expect("written mesh parses");
        assert_eq!(again.faces, mesh.faces);
    }
});
