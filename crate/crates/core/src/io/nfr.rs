//! `.nfr` float maps: `u32` little-endian header length, a JSON header,
//! then `height * width * channels` little-endian `f32` samples.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::views::SCHEMA_VERSION;

const MAX_HEADER: usize = 1 << 16;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NfrHeader {
    pub schema_version: u32,
    pub name: String,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

pub fn encode_nfr(name: &str, image: &Image) -> Vec<u8> {
    let header = NfrHeader {
        schema_version: SCHEMA_VERSION,
        name: name.to_string(),
        height: image.height,
        width: image.width,
        channels: image.channels,
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::with_capacity(4 + json.len() + image.data.len() * 4);
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for v in &image.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_nfr(bytes: &[u8]) -> Result<(NfrHeader, Image)> {
    let len_bytes: [u8; 4] = bytes
        .get(..4)
        .ok_or_else(|| Error::Parse("nfr: truncated length".into()))?
        .try_into()
        .unwrap();
    let hlen = u32::from_le_bytes(len_bytes) as usize;
    if hlen > MAX_HEADER {
        return Err(Error::Parse("nfr: header too long".into()));
    }
    let json = bytes
        .get(4..4 + hlen)
        .ok_or_else(|| Error::Parse("nfr: truncated header".into()))?;
    let header: NfrHeader = serde_json::from_slice(json)?;
    if header.schema_version != SCHEMA_VERSION {
        return Err(Error::SchemaVersion {
            found: header.schema_version,
            expected: SCHEMA_VERSION,
        });
    }
    let count = header
        .height
        .checked_mul(header.width)
        .and_then(|n| n.checked_mul(header.channels))
        .ok_or_else(|| Error::Parse("nfr: size overflow".into()))?;
    let body = &bytes[4 + hlen..];
    if count.checked_mul(4) != Some(body.len()) {
        return Err(Error::Parse(format!(
            "nfr: expected {count} samples, found {} bytes",
            body.len()
        )));
    }
    let data = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let image = Image::from_data(header.width, header.height, header.channels, data)?;
    Ok((header, image))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let img = Image::from_data(3, 2, 1, vec![0.1, -0.0, 1e-30, f32::MAX, 0.5, 0.25]).unwrap();
        let (h, back) = decode_nfr(&encode_nfr("mask_0", &img)).unwrap();
        assert_eq!(h.name, "mask_0");
        assert_eq!(back.data.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                   img.data.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    }

    #[test]
    fn rejects_malformed() {
        let img = Image::new(2, 2, 3);
        let mut b = encode_nfr("n", &img);
        b.pop();
        assert!(decode_nfr(&b).is_err());
        assert!(decode_nfr(&[1, 0]).is_err());
        let header = br#"{"schema_version":1,"name":"x","height":4294967296,"width":4294967296,"channels":9}"#;
        let mut b = (header.len() as u32).to_le_bytes().to_vec();
        b.extend_from_slice(header);
        assert!(decode_nfr(&b).is_err());
    }
}
