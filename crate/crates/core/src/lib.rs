//! Hybrid inverse rendering: soft-rasterized silhouettes recover geometry,
//! then a differentiable path tracer recovers SVBRDF textures and lighting.

pub mod dataset;
pub mod error;
pub mod geom;
pub mod gradcheck;
pub mod losses;
pub mod math;
pub mod metrics;
pub mod optim;
pub mod pbrt;
pub mod scene;
pub mod softras;
pub mod synth;

pub use error::{Error, Result};
