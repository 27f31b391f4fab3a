//! Physically based forward renderer and its parameter gradients.

pub mod brdf;
pub mod bvh;
pub mod integrator;
pub mod sampler;

pub use brdf::{eval_brdf, material_at, pdf_brdf, sample_brdf, BrdfSample, Material};
pub use bvh::{brute_force_intersect, intersect_triangle, Bvh, Hit};
pub use integrator::{render, render_backward, render_backward_with, render_with, ParamGrads, RenderConfig, SceneGeometry, Strategy};
pub use sampler::PixelSampler;
