#![no_main]

use libfuzzer_sys::fuzz_target;
use normcarve::io::{decode_nfr, encode_nfr};

fuzz_target!(|data: &[u8]| {
    if let Ok((header, image)) = decode_nfr(data) {
        let (_, back) = decode_nfr(&encode_nfr(&header.name, &image)).expect("re-encoded map decodes");
        assert_eq!(back.width, image.width);
        assert_eq!(back.height, image.height);
    }
});
