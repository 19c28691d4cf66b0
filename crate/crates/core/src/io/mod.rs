//! File formats at the engine boundary: meshes (OBJ, PLY), float maps
//! (`.nfr`) and 8-bit PNG maps.

mod nfr;
mod obj;
mod ply;
mod png;

use std::fs;
use std::io::Write;
use std::path::Path;

pub use self::nfr::{decode_nfr, encode_nfr, NfrHeader};
pub use self::obj::{parse_obj, write_obj};
pub use self::ply::{parse_ply, write_ply};
pub use self::png::{decode_png, encode_png};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::mesh::TriangleMesh;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum MeshFormat {
    #[default]
    Ply,
    Obj,
}

impl MeshFormat {
    pub fn from_path(path: &Path) -> Result<Self> {
        match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
            Some("ply") => Ok(Self::Ply),
            Some("obj") => Ok(Self::Obj),
            _ => Err(Error::Parse(format!("unknown mesh extension: {}", path.display()))),
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            Self::Ply => "ply",
            Self::Obj => "obj",
        }
    }
}

/// Map storage for observation bundles.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum MapFormat {
    #[default]
    Nfr,
    Png,
}

impl MapFormat {
    pub fn extension(self) -> &'static str {
        match self {
            Self::Nfr => "nfr",
            Self::Png => "png",
        }
    }
}

pub fn load_mesh(path: &Path) -> Result<TriangleMesh> {
    let bytes = fs::read(path)?;
    match MeshFormat::from_path(path)? {
        MeshFormat::Ply => parse_ply(&bytes),
        MeshFormat::Obj => parse_obj(&String::from_utf8_lossy(&bytes)),
    }
}

pub fn save_mesh(path: &Path, mesh: &TriangleMesh) -> Result<()> {
    let bytes = match MeshFormat::from_path(path)? {
        MeshFormat::Ply => write_ply(mesh),
        MeshFormat::Obj => write_obj(mesh).into_bytes(),
    };
    write_atomic(path, &bytes)
}

/// Loads a `.nfr` or `.png` map, chosen by extension.
pub fn load_map(path: &Path) -> Result<Image> {
    let bytes = fs::read(path)?;
    match path.extension().and_then(|e| e.to_str()) {
        Some("nfr") => Ok(decode_nfr(&bytes)?.1),
        Some("png") => decode_png(&bytes),
        _ => Err(Error::Parse(format!("unknown map extension: {}", path.display()))),
    }
}

pub fn save_map(path: &Path, name: &str, image: &Image) -> Result<()> {
    let bytes = match path.extension().and_then(|e| e.to_str()) {
        Some("nfr") => encode_nfr(name, image),
        Some("png") => encode_png(image)?,
        _ => return Err(Error::Parse(format!("unknown map extension: {}", path.display()))),
    };
    write_atomic(path, &bytes)
}

/// Writes through a sibling temporary file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenes;

    #[test]
    fn mesh_files_round_trip_by_extension() {
        let dir = tempfile::tempdir().unwrap();
        let mesh = scenes::icosphere(1);
        for name in ["a.ply", "a.obj"] {
            let p = dir.path().join(name);
            save_mesh(&p, &mesh).unwrap();
            let back = load_mesh(&p).unwrap();
            assert_eq!(back.faces, mesh.faces);
            assert!(back.vertices.iter().zip(&mesh.vertices).all(|(a, b)| (a - b).norm() < 1e-12));
        }
        assert!(save_mesh(&dir.path().join("a.stl"), &mesh).is_err());
    }

    #[test]
    fn maps_round_trip_by_extension() {
        let dir = tempfile::tempdir().unwrap();
        let img = Image::from_data(2, 1, 3, vec![0.0, 0.5, 1.0, 0.25, 0.75, 0.125]).unwrap();
        let p = dir.path().join("m.nfr");
        save_map(&p, "m", &img).unwrap();
        assert_eq!(load_map(&p).unwrap(), img);
        let p = dir.path().join("m.png");
        save_map(&p, "m", &img).unwrap();
        let back = load_map(&p).unwrap();
        assert!(back.data.iter().zip(&img.data).all(|(a, b)| (a - b).abs() <= 0.5 / 255.0 + 1e-7));
    }
}
