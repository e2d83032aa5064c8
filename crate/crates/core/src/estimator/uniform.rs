use super::{TransmittanceEstimator, TransmittanceProfile};
use crate::geometry::{ContractionMapping, MappingKind, Ray};

/// Breakpoints used when the uniform profile is linear in s rather than t.
pub const CONTRACTED_SEGMENTS: usize = 64;

/// No knowledge of the scene: T falls linearly from 1 at `t_near` to 0 at
/// `t_far`. With a reciprocal-depth mapping the fall is linear in s instead.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct UniformEstimator {
    pub mapping: MappingKind,
}

impl UniformEstimator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_mapping(mapping: MappingKind) -> Self {
        Self { mapping }
    }
}

impl TransmittanceEstimator for UniformEstimator {
    fn estimate(&self, ray: &Ray) -> TransmittanceProfile {
        let (t_near, t_far) = (ray.t_near(), ray.t_far());
        let mapping = match self.mapping {
            MappingKind::Identity => None,
            MappingKind::ReciprocalDepth => ContractionMapping::reciprocal(t_near, t_far).ok(),
        };
        let Some(mapping) = mapping else {
            return TransmittanceProfile::new(vec![t_near, t_far], vec![1.0, 0.0])
                .expect("linear profile is valid");
        };
        let m = CONTRACTED_SEGMENTS;
        let mut bp = Vec::with_capacity(m + 1);
        let mut tr = Vec::with_capacity(m + 1);
        for i in 0..=m {
            let s = i as f64 / m as f64;
            let t = mapping.contract(s).expect("s in [0, 1]");
            if bp.last().is_some_and(|&last| t <= last) {
                continue;
            }
            bp.push(t);
            tr.push(1.0 - s);
        }
        *tr.last_mut().unwrap() = 0.0;
        TransmittanceProfile::new(bp, tr).expect("contracted uniform profile is valid")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vec3;

    #[test]
    fn linear_profile() {
        let r = Ray::new(Vec3::ZERO, Vec3::new(0.0, 0.0, 1.0), 2.0, 6.0).unwrap();
        let p = UniformEstimator::new().estimate(&r);
        assert_eq!(p.breakpoints(), &[2.0, 6.0]);
        assert_eq!(p.transmittance(), &[1.0, 0.0]);
        assert_eq!(p.eval(4.0), 0.5);
    }

    #[test]
    fn contracted_profile_is_linear_in_s() {
        let r = Ray::new(Vec3::ZERO, Vec3::new(0.0, 0.0, 1.0), 1.0, 1000.0).unwrap();
        let p = UniformEstimator::with_mapping(MappingKind::ReciprocalDepth).estimate(&r);
        let m = ContractionMapping::reciprocal(1.0, 1000.0).unwrap();
        assert_eq!(p.t_enter(), 1.0);
        assert_eq!(p.t_exit(), 1000.0);
        let t_half = m.contract(0.5).unwrap();
        assert!((p.eval(t_half) - 0.5).abs() < 1e-12);
        // half the mass lies before t ≈ 2, far denser than linear-in-t
        assert!(t_half < 2.1);
    }

    #[test]
    fn contracted_falls_back_without_positive_near() {
        let r = Ray::new(Vec3::ZERO, Vec3::new(0.0, 0.0, 1.0), 0.0, 10.0).unwrap();
        let p = UniformEstimator::with_mapping(MappingKind::ReciprocalDepth).estimate(&r);
        assert_eq!(p.breakpoints(), &[0.0, 10.0]);
    }
}
