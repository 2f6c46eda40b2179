//! Height-field rain simulation and image-space water/rain compositing.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod fields;
pub mod image;
pub mod math;
pub mod pfm;
pub mod pipeline;
pub mod protocol;
pub mod rain;
pub mod rain_render;
pub mod scene;
pub mod shading;
pub mod swe;
pub mod synthetic;
pub mod water_view;

pub use error::{Error, Result, SceneError};
