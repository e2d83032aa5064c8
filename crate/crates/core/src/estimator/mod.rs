//! Transmittance estimators.
//!
//! Every estimator reduces to one thing: a piecewise-linear
//! [`TransmittanceProfile`] per ray. Inverse-sampling `F = 1 − T` is then
//! importance sampling for the rendering integral, whatever produced T.

mod combined;
mod occupancy;
mod pdf;
mod profile;
mod uniform;

pub use combined::CombinedEstimator;
pub use occupancy::{GridSidecar, OccupancyConfig, OccupancyGrid};
pub use pdf::PdfEstimator;
pub use profile::TransmittanceProfile;
pub use uniform::{UniformEstimator, CONTRACTED_SEGMENTS};

use rand::RngCore;
use thiserror::Error;

use crate::field::DensityField;
use crate::geometry::Ray;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimatorError {
    #[error("invalid transmittance profile: {0}")]
    Profile(String),
    #[error("invalid estimator configuration: {0}")]
    Config(String),
}

pub trait TransmittanceEstimator: Send + Sync {
    fn estimate(&self, ray: &Ray) -> TransmittanceProfile;

    /// Marching step Δt: when set, sample counts are limited to
    /// `ceil(support_length / Δt)`.
    fn march_step(&self) -> Option<f64> {
        None
    }

    /// The update rule `T^{k-1} ↦ T^k`. Returns whether anything changed;
    /// estimators without state keep the default no-op.
    fn update(&mut self, _field: &dyn DensityField, _rng: &mut dyn RngCore) -> bool {
        false
    }
}

impl<E: TransmittanceEstimator + ?Sized> TransmittanceEstimator for Box<E> {
    fn estimate(&self, ray: &Ray) -> TransmittanceProfile {
        (**self).estimate(ray)
    }

    fn march_step(&self) -> Option<f64> {
        (**self).march_step()
    }

    fn update(&mut self, field: &dyn DensityField, rng: &mut dyn RngCore) -> bool {
        (**self).update(field, rng)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    Uniform,
    Occupancy,
    Pdf,
    Combined,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 4] = [
        EstimatorKind::Uniform,
        EstimatorKind::Occupancy,
        EstimatorKind::Pdf,
        EstimatorKind::Combined,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::Uniform => "uniform",
            EstimatorKind::Occupancy => "occupancy",
            EstimatorKind::Pdf => "pdf",
            EstimatorKind::Combined => "combined",
        }
    }
}

impl std::fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for EstimatorKind {
    type Err = EstimatorError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        EstimatorKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| EstimatorError::Config(format!("unknown estimator kind '{s}'")))
    }
}

/// Any of the built-in estimators behind one type.
#[derive(Debug, Clone)]
pub enum AnyEstimator {
    Uniform(UniformEstimator),
    Occupancy(OccupancyGrid),
    Pdf(PdfEstimator),
    Combined(CombinedEstimator),
}

impl AnyEstimator {
    pub fn kind(&self) -> EstimatorKind {
        match self {
            AnyEstimator::Uniform(_) => EstimatorKind::Uniform,
            AnyEstimator::Occupancy(_) => EstimatorKind::Occupancy,
            AnyEstimator::Pdf(_) => EstimatorKind::Pdf,
            AnyEstimator::Combined(_) => EstimatorKind::Combined,
        }
    }

    pub fn grid(&self) -> Option<&OccupancyGrid> {
        match self {
            AnyEstimator::Occupancy(g) => Some(g),
            AnyEstimator::Combined(c) => Some(&c.grid),
            _ => None,
        }
    }

    fn inner(&self) -> &dyn TransmittanceEstimator {
        match self {
            AnyEstimator::Uniform(e) => e,
            AnyEstimator::Occupancy(e) => e,
            AnyEstimator::Pdf(e) => e,
            AnyEstimator::Combined(e) => e,
        }
    }
}

impl TransmittanceEstimator for AnyEstimator {
    fn estimate(&self, ray: &Ray) -> TransmittanceProfile {
        self.inner().estimate(ray)
    }

    fn march_step(&self) -> Option<f64> {
        self.inner().march_step()
    }

    fn update(&mut self, field: &dyn DensityField, rng: &mut dyn RngCore) -> bool {
        match self {
            AnyEstimator::Uniform(e) => e.update(field, rng),
            AnyEstimator::Occupancy(e) => e.update(field, rng),
            AnyEstimator::Pdf(e) => e.update(field, rng),
            AnyEstimator::Combined(e) => e.update(field, rng),
        }
    }
}
