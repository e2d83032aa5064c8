//! Inverse-transform sampling from transmittance profiles into packed
//! interval samples, and transmittance-based filtering of those samples.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimator::{TransmittanceEstimator, TransmittanceProfile};
use crate::field::DensityField;
use crate::geometry::Ray;

/// Filtering threshold on entering transmittance.
pub const DEFAULT_FILTER_THRESHOLD: f64 = 1e-4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SamplerError {
    #[error("invalid sampler configuration: {0}")]
    Config(String),
    #[error("packed samples violate their layout: {0}")]
    Layout(String),
    #[error("{rays} rays given for {packed} packed rays")]
    RayCount { rays: usize, packed: usize },
}

/// One sample: the segment `[t0, t1]` of ray `ray_id`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleInterval {
    pub t0: f64,
    pub t1: f64,
    pub ray_id: usize,
}

impl SampleInterval {
    pub fn mid(&self) -> f64 {
        0.5 * (self.t0 + self.t1)
    }

    pub fn width(&self) -> f64 {
        self.t1 - self.t0
    }
}

/// Start and count of one ray's samples inside the packed buffer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RaySpan {
    pub start: usize,
    pub count: usize,
}

/// All rays' intervals concatenated, plus a per-ray `(start, count)` index.
/// Rays may own any number of samples, including none.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PackedSamples {
    intervals: Vec<SampleInterval>,
    ray_index: Vec<RaySpan>,
}

impl PackedSamples {
    /// Packs per-ray interval lists; ray `i`'s intervals get `ray_id = i`.
    pub fn pack(per_ray: Vec<Vec<(f64, f64)>>) -> Self {
        let total = per_ray.iter().map(Vec::len).sum();
        let mut intervals = Vec::with_capacity(total);
        let mut ray_index = Vec::with_capacity(per_ray.len());
        for (ray_id, list) in per_ray.into_iter().enumerate() {
            ray_index.push(RaySpan {
                start: intervals.len(),
                count: list.len(),
            });
            intervals.extend(
                list.into_iter()
                    .map(|(t0, t1)| SampleInterval { t0, t1, ray_id }),
            );
        }
        Self {
            intervals,
            ray_index,
        }
    }

    /// Builds from raw parts, checking every layout invariant.
    pub fn from_parts(
        intervals: Vec<SampleInterval>,
        ray_index: Vec<RaySpan>,
    ) -> Result<Self, SamplerError> {
        let p = Self {
            intervals,
            ray_index,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), SamplerError> {
        let mut expected_start = 0;
        for (ray_id, span) in self.ray_index.iter().enumerate() {
            if span.start != expected_start {
                return Err(SamplerError::Layout(format!(
                    "ray {ray_id} starts at {} but the prefix sum is {expected_start}",
                    span.start
                )));
            }
            expected_start += span.count;
            let Some(slice) = self.intervals.get(span.start..span.start + span.count) else {
                return Err(SamplerError::Layout(format!(
                    "ray {ray_id} runs past the buffer"
                )));
            };
            for (k, s) in slice.iter().enumerate() {
                if s.ray_id != ray_id {
                    return Err(SamplerError::Layout(format!(
                        "interval {} is tagged ray {} inside ray {ray_id}",
                        span.start + k,
                        s.ray_id
                    )));
                }
                if !(s.t0.is_finite() && s.t1.is_finite() && s.t0 < s.t1) {
                    return Err(SamplerError::Layout(format!(
                        "interval {} has t0 = {}, t1 = {}",
                        span.start + k,
                        s.t0,
                        s.t1
                    )));
                }
            }
            if let Some(k) = slice.windows(2).position(|w| w[1].t0 < w[0].t1) {
                return Err(SamplerError::Layout(format!(
                    "ray {ray_id}: intervals {} and {} overlap or are out of order",
                    span.start + k,
                    span.start + k + 1
                )));
            }
        }
        if expected_start != self.intervals.len() {
            return Err(SamplerError::Layout(format!(
                "index covers {expected_start} intervals, buffer holds {}",
                self.intervals.len()
            )));
        }
        Ok(())
    }

    pub fn intervals(&self) -> &[SampleInterval] {
        &self.intervals
    }

    pub fn ray_index(&self) -> &[RaySpan] {
        &self.ray_index
    }

    pub fn num_rays(&self) -> usize {
        self.ray_index.len()
    }

    pub fn len(&self) -> usize {
        self.intervals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    pub fn ray(&self, ray_id: usize) -> &[SampleInterval] {
        let s = self.ray_index[ray_id];
        &self.intervals[s.start..s.start + s.count]
    }

    pub fn unpack(&self) -> Vec<Vec<(f64, f64)>> {
        (0..self.num_rays())
            .map(|r| self.ray(r).iter().map(|s| (s.t0, s.t1)).collect())
            .collect()
    }

    pub fn mean_per_ray(&self) -> f64 {
        if self.ray_index.is_empty() {
            0.0
        } else {
            self.len() as f64 / self.num_rays() as f64
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerConfig {
    /// Per-ray sample budget N.
    pub n_samples: usize,
    pub stratified: bool,
    pub filter_threshold: f64,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            n_samples: 64,
            stratified: true,
            filter_threshold: DEFAULT_FILTER_THRESHOLD,
            seed: 0,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<(), SamplerError> {
        if self.n_samples == 0 {
            return Err(SamplerError::Config("n_samples must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.filter_threshold) {
            return Err(SamplerError::Config(format!(
                "filter threshold must lie in [0, 1), got {}",
                self.filter_threshold
            )));
        }
        Ok(())
    }
}

/// Counter-based stream for one ray: depends only on `(seed, ray_id)`.
pub fn ray_rng(seed: u64, ray_id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(ray_id);
    rng
}

/// Inverts `F(t) = u · F(t_exit)` for each (ascending) `u`.
pub fn invert_uniforms(profile: &TransmittanceProfile, us: &[f64]) -> Vec<f64> {
    us.iter().filter_map(|&u| profile.inverse_cdf(u)).collect()
}

/// Stratified `uᵢ = (i + ξᵢ)/n` from a caller-supplied `ξ` source.
pub fn stratified_uniforms(n: usize, mut xi: impl FnMut() -> f64) -> Vec<f64> {
    (0..n).map(|i| (i as f64 + xi()) / n as f64).collect()
}

/// Draws up to `n` ascending sample positions from the profile. Empty when
/// the profile carries no opacity.
pub fn inverse_transform_sample(
    profile: &TransmittanceProfile,
    n: usize,
    stratified: bool,
    rng: &mut dyn RngCore,
) -> Vec<f64> {
    if n == 0 || !(profile.total_opacity() > 0.0) {
        return Vec::new();
    }
    let us = if stratified {
        stratified_uniforms(n, || rng.random::<f64>())
    } else {
        let mut us: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        us.sort_by(f64::total_cmp);
        us
    };
    invert_uniforms(profile, &us)
}

/// Turns ascending sample points into non-overlapping intervals.
///
/// Within each connected piece of the profile's support, boundaries sit at
/// midpoints between neighbouring samples and the outermost boundaries snap
/// to the ends of the piece. Intervals therefore tile exactly the region the
/// samples were drawn from and never reach into skipped space.
pub fn fence(profile: &TransmittanceProfile, points: &[f64]) -> Vec<(f64, f64)> {
    let support = profile.support();
    let mut out = Vec::with_capacity(points.len());
    let mut i = 0;
    while i < points.len() {
        let c = support
            .partition_point(|s| s.0 <= points[i])
            .saturating_sub(1);
        let (a, b) = support[c];
        let mut j = i + 1;
        while j < points.len() && (c + 1 >= support.len() || points[j] < support[c + 1].0) {
            j += 1;
        }
        let group = &points[i..j];
        let mut lo = a;
        for (k, &p) in group.iter().enumerate() {
            let hi = match group.get(k + 1) {
                Some(&next) => (0.5 * (p + next)).clamp(a, b),
                None => b,
            };
            if hi > lo {
                out.push((lo, hi));
                lo = hi;
            }
        }
        i = j;
    }
    out
}

/// Per-ray sample count: N, or fewer when a marching step is set.
pub fn samples_for(
    estimator: &dyn TransmittanceEstimator,
    profile: &TransmittanceProfile,
    budget: usize,
) -> usize {
    match estimator.march_step() {
        Some(dt) if dt > 0.0 => {
            let steps = (profile.support_length() / dt).ceil();
            budget.min((steps as usize).max(1))
        }
        _ => budget,
    }
}

/// Samples one ray: estimate, draw, fence.
pub fn sample_ray(
    ray: &Ray,
    ray_id: usize,
    estimator: &dyn TransmittanceEstimator,
    config: &SamplerConfig,
) -> Vec<(f64, f64)> {
    let profile = estimator.estimate(ray);
    let n = samples_for(estimator, &profile, config.n_samples);
    let mut rng = ray_rng(config.seed, ray_id as u64);
    let points = inverse_transform_sample(&profile, n, config.stratified, &mut rng);
    fence(&profile, &points)
}

/// Samples every ray in parallel and packs the result. Output is identical
/// for any thread count.
pub fn sample(
    rays: &[Ray],
    estimator: &dyn TransmittanceEstimator,
    config: &SamplerConfig,
) -> Result<PackedSamples, SamplerError> {
    config.validate()?;
    let per_ray: Vec<Vec<(f64, f64)>> = rays
        .par_iter()
        .enumerate()
        .map(|(i, ray)| sample_ray(ray, i, estimator, config))
        .collect();
    Ok(PackedSamples::pack(per_ray))
}

/// Drops every interval whose entering transmittance
/// `Π_{j<i} exp(−σ(midⱼ)·δⱼ)` is below `threshold`. Survivors keep their order.
pub fn filter_by_transmittance(
    samples: &PackedSamples,
    rays: &[Ray],
    density: &dyn DensityField,
    threshold: f64,
) -> Result<PackedSamples, SamplerError> {
    if rays.len() != samples.num_rays() {
        return Err(SamplerError::RayCount {
            rays: rays.len(),
            packed: samples.num_rays(),
        });
    }
    let per_ray: Vec<Vec<(f64, f64)>> = rays
        .par_iter()
        .enumerate()
        .map(|(r, ray)| {
            let mut transmittance = 1.0f64;
            let mut kept = Vec::new();
            for s in samples.ray(r) {
                if transmittance < threshold {
                    break;
                }
                kept.push((s.t0, s.t1));
                let sigma = density.density(ray.at(s.mid()));
                transmittance *= (-sigma * s.width()).exp();
            }
            kept
        })
        .collect();
    Ok(PackedSamples::pack(per_ray))
}
