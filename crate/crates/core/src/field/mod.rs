//! Queryable density and radiance fields.
//!
//! The sampling layer only ever sees these traits, so analytic scenes and
//! baked voxel grids are interchangeable.

mod analytic;
mod voxel;

pub use analytic::{CompositeScene, Primitive, SceneDescription, SceneError};
pub use voxel::{bake, bake_radiance, VoxelField, VoxelFormatError, VOX3_HEADER_LEN, VOX3_MAGIC};

use crate::geometry::Vec3;

pub type Rgb = [f64; 3];

pub const BLACK: Rgb = [0.0, 0.0, 0.0];

/// σ(x), in inverse world units.
pub trait DensityField: Send + Sync {
    fn density(&self, x: Vec3) -> f64;
}

/// (σ, c)(x, d). The density component must equal [`DensityField::density`].
pub trait RadianceField: DensityField {
    fn radiance(&self, x: Vec3, dir: Vec3) -> (f64, Rgb);
}

impl<T: DensityField + ?Sized> DensityField for &T {
    fn density(&self, x: Vec3) -> f64 {
        (**self).density(x)
    }
}

impl<T: DensityField + ?Sized> DensityField for std::sync::Arc<T> {
    fn density(&self, x: Vec3) -> f64 {
        (**self).density(x)
    }
}

impl<T: RadianceField + ?Sized> RadianceField for &T {
    fn radiance(&self, x: Vec3, dir: Vec3) -> (f64, Rgb) {
        (**self).radiance(x, dir)
    }
}

impl<T: RadianceField + ?Sized> RadianceField for std::sync::Arc<T> {
    fn radiance(&self, x: Vec3, dir: Vec3) -> (f64, Rgb) {
        (**self).radiance(x, dir)
    }
}

/// A field that is zero everywhere.
#[derive(Debug, Clone, Copy, Default)]
pub struct EmptyField;

impl DensityField for EmptyField {
    fn density(&self, _x: Vec3) -> f64 {
        0.0
    }
}

impl RadianceField for EmptyField {
    fn radiance(&self, _x: Vec3, _dir: Vec3) -> (f64, Rgb) {
        (0.0, BLACK)
    }
}
