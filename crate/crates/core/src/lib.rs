//! Multi-view normal-map carving of textured triangle meshes.

pub mod appearance;
pub mod carving;
pub mod error;
pub mod image;
pub mod io;
pub mod kdtree;
pub mod mesh;
pub mod metrics;
pub mod optim;
pub mod oracle;
pub mod pipeline;
pub mod raster;
pub mod scenes;
pub mod views;

pub use error::{Error, Result};
pub use image::Image;
pub use mesh::{TriangleMesh, Vec3};
pub use views::{Observation, OrthoCamera, View, ViewSet};
