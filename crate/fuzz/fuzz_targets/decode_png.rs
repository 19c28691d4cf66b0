#![no_main]

use libfuzzer_sys::fuzz_target;
use normcarve::io::{decode_png, encode_png};

fuzz_target!(|data: &[u8]| {
    if let Ok(image) = decode_png(data) {
        let bytes = encode_png(&image).expect("decoded image encodes");
        let back = decode_png(&bytes).expect("encoded image decodes");
        assert_eq!(back.quantized_u8(), image.quantized_u8());
    }
});
