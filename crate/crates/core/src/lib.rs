//! Volumetric importance sampling built around transmittance estimators.
//!
//! An estimator turns a ray into a piecewise-linear transmittance profile
//! `T(t)`. Because the rendering CDF is `F(t) = 1 − T(t)`, inverse-sampling
//! that profile places samples where the ray actually deposits colour. The
//! crate provides four estimators (uniform, occupancy grid, coarse density,
//! and grid + coarse density combined), packed interval samples, filtering,
//! alpha compositing and a brute-force quadrature reference.

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod estimator;
pub mod field;
pub mod geometry;
pub mod pipeline;
pub mod render;
pub mod sampler;

pub use estimator::{
    AnyEstimator, CombinedEstimator, EstimatorKind, OccupancyConfig, OccupancyGrid, PdfEstimator,
    TransmittanceEstimator, TransmittanceProfile, UniformEstimator,
};
pub use field::{DensityField, RadianceField, Rgb};
pub use geometry::{Aabb, ContractionMapping, MappingKind, Ray, Vec3};
pub use pipeline::PipelineState;
pub use render::{oracle_render, psnr, render, Image, RenderOutput};
pub use sampler::{filter_by_transmittance, sample, PackedSamples, SampleInterval, SamplerConfig};
