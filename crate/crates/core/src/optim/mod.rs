//! Adam and the two optimization phases.

pub mod adam;
pub mod geometry;
pub mod history;
pub mod pipeline;
pub mod reflectance;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use geometry::{mask_iou, optimize_geometry, GeometryConfig, GeometryResult, MaskView};
pub use history::{LossHistory, LossRecord};
pub use reflectance::{optimize_reflectance, texel_view_counts, ImageView, Logits, ReflectanceConfig, ReflectanceResult};
pub use pipeline::{defaults_snapshot, render_eval, run_pipeline, Overrides, Phases, PipelineOutput, PipelineReport, SceneConfig};
