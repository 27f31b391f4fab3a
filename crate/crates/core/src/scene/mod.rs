//! Scene parameters, cameras, textures, lighting and the on-disk formats.

pub mod camera;
pub mod envmap;
pub mod image;
pub mod params;
pub mod texture;

pub use camera::{read_cameras, write_cameras, Camera, CameraRecord, Projection};
pub use envmap::{EnvMap, EnvSample, ENV_HEIGHT, ENV_WIDTH};
pub use image::ImageBuffer;
pub use params::{init_scene, SceneParams};
pub use texture::{Footprint, Texture2D};
