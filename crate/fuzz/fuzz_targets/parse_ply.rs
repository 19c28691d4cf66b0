#![no_main]

use libfuzzer_sys::fuzz_target;
use normcarve::io::{parse_ply, write_ply};

fuzz_target!(|data: &[u8]| {
    if let Ok(mesh) = parse_ply(data) {
        mesh.validate().expect("parsed mesh is valid");
        let again = parse_ply(&write_ply(&mesh)).expect("written mesh parses");
        assert_eq!(again.faces, mesh.faces);
    }
});
