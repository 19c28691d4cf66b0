//! 8-bit PNG maps.

use crate::error::{Error, Result};
use crate::image::Image;

pub fn encode_png(image: &Image) -> Result<Vec<u8>> {
    let color = match image.channels {
        1 => png::ColorType::Grayscale,
        2 => png::ColorType::GrayscaleAlpha,
        3 => png::ColorType::Rgb,
        4 => png::ColorType::Rgba,
        c => return Err(Error::DimensionMismatch(format!("png cannot hold {c} channels"))),
    };
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, image.width as u32, image.height as u32);
        enc.set_color(color);
        enc.set_depth(png::BitDepth::Eight);
        let mut w = enc.write_header().map_err(|e| Error::Parse(e.to_string()))?;
        w.write_image_data(&image.quantized_u8())
            .map_err(|e| Error::Parse(e.to_string()))?;
    }
    Ok(out)
}

pub fn decode_png(bytes: &[u8]) -> Result<Image> {
    let mut dec = png::Decoder::new(std::io::Cursor::new(bytes));
    dec.set_transformations(png::Transformations::normalize_to_color8());
    let mut reader = dec.read_info().map_err(|e| Error::Parse(e.to_string()))?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| Error::Parse("png: image too large".into()))?;
    let mut buf = vec![0u8; size];
    let info = reader.next_frame(&mut buf).map_err(|e| Error::Parse(e.to_string()))?;
    let channels = info.color_type.samples();
    buf.truncate(info.buffer_size());
    Image::from_u8(info.width as usize, info.height as usize, channels, &buf)
}
