//! Dense per-point grasp annotation synthesis for cluttered bin picking.

pub mod camera;
pub mod collision;
pub mod dataset;
pub mod encoding;
pub mod geom;
pub mod grasp;
pub mod labeler;
pub mod object;
pub mod ply;
pub mod quality;
pub mod sampler;
pub mod scene;
