use std::fmt;
use std::sync::Arc;

use super::{EstimatorError, TransmittanceEstimator, TransmittanceProfile};
use crate::field::DensityField;
use crate::geometry::{ContractionMapping, MappingKind, Ray};

/// Coarse-density estimator: σ from `source` at `n_coarse + 1` breakpoints,
/// `T(tᵢ) = exp(−Σ_{j<i} σ(tⱼ)·δⱼ)`.
///
/// `source` plays the part of a proposal model; any density field works,
/// typically a low-resolution bake of the scene.
#[derive(Clone)]
pub struct PdfEstimator {
    source: Arc<dyn DensityField>,
    n_coarse: usize,
    mapping: MappingKind,
}

impl fmt::Debug for PdfEstimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PdfEstimator")
            .field("n_coarse", &self.n_coarse)
            .field("mapping", &self.mapping)
            .finish_non_exhaustive()
    }
}

impl PdfEstimator {
    pub fn new(source: Arc<dyn DensityField>, n_coarse: usize) -> Result<Self, EstimatorError> {
        if n_coarse < 2 {
            return Err(EstimatorError::Config(format!(
                "n_coarse must be at least 2, got {n_coarse}"
            )));
        }
        Ok(Self {
            source,
            n_coarse,
            mapping: MappingKind::Identity,
        })
    }

    pub fn with_mapping(mut self, mapping: MappingKind) -> Self {
        self.mapping = mapping;
        self
    }

    pub fn n_coarse(&self) -> usize {
        self.n_coarse
    }

    pub fn mapping(&self) -> MappingKind {
        self.mapping
    }

    pub fn source(&self) -> &Arc<dyn DensityField> {
        &self.source
    }

    pub(crate) fn sigma_at(&self, ray: &Ray, t: f64) -> f64 {
        self.source.density(ray.at(t)).max(0.0)
    }
}

/// Extends `bp`/`tr` with the segments over `points`, accumulating optical
/// depth in `depth`. The first point is assumed already present.
pub(crate) fn accumulate(
    pdf: &PdfEstimator,
    ray: &Ray,
    points: &[f64],
    depth: &mut f64,
    bp: &mut Vec<f64>,
    tr: &mut Vec<f64>,
) {
    for w in points.windows(2) {
        let (t0, t1) = (w[0], w[1]);
        *depth += pdf.sigma_at(ray, t0) * (t1 - t0);
        bp.push(t1);
        tr.push((-*depth).exp());
    }
}

impl TransmittanceEstimator for PdfEstimator {
    fn estimate(&self, ray: &Ray) -> TransmittanceProfile {
        let (t_near, t_far) = (ray.t_near(), ray.t_far());
        let mapping = ContractionMapping::new(self.mapping, t_near, t_far)
            .or_else(|_| ContractionMapping::identity(t_near, t_far))
            .expect("ray range is a valid identity mapping");
        let n = self.n_coarse;
        let mut points: Vec<f64> = Vec::with_capacity(n + 1);
        for i in 0..=n {
            let t = mapping.contract(i as f64 / n as f64).expect("s in [0, 1]");
            if points.last().is_some_and(|&last| t <= last) {
                continue;
            }
            points.push(t);
        }
        let mut bp = vec![points[0]];
        let mut tr = vec![1.0];
        let mut depth = 0.0;
        accumulate(self, ray, &points, &mut depth, &mut bp, &mut tr);
        TransmittanceProfile::new(bp, tr).expect("exp-accumulated profile is valid")
    }
}
