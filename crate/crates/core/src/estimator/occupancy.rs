//! Occupancy grid: cached densities refreshed by EMA, binarized with a
//! conservative threshold and traversed cell-by-cell to find occupied spans.

use bitvec::prelude::*;
use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use super::{EstimatorError, TransmittanceEstimator, TransmittanceProfile};
use crate::field::{DensityField, VoxelField};
use crate::geometry::{ray_aabb_intersect, Aabb, Ray, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OccupancyConfig {
    /// Cells per axis (grid is `resolution³`).
    pub resolution: usize,
    /// Binarization threshold τ on raw density.
    pub threshold: f64,
    /// EMA decay γ.
    pub ema_decay: f64,
    /// Marching step Δt; 0 disables the sample-count floor.
    pub march_step: f64,
    /// Jitter of the per-cell EMA probe as a fraction of the cell size.
    pub jitter: f64,
}

impl Default for OccupancyConfig {
    fn default() -> Self {
        Self {
            resolution: 64,
            threshold: 0.01,
            ema_decay: 0.95,
            march_step: 0.0,
            jitter: 1.0,
        }
    }
}

impl OccupancyConfig {
    pub fn validate(&self) -> Result<(), EstimatorError> {
        let bad = |msg: String| Err(EstimatorError::Config(msg));
        if self.resolution == 0 || self.resolution > 1024 {
            return bad(format!(
                "grid resolution must be in 1..=1024, got {}",
                self.resolution
            ));
        }
        if !(self.threshold >= 0.0 && self.threshold.is_finite()) {
            return bad(format!(
                "threshold must be finite and non-negative, got {}",
                self.threshold
            ));
        }
        if !(self.ema_decay >= 0.0 && self.ema_decay < 1.0) {
            return bad(format!(
                "EMA decay must lie in [0, 1), got {}",
                self.ema_decay
            ));
        }
        if !(self.march_step >= 0.0 && self.march_step.is_finite()) {
            return bad(format!(
                "march step must be finite and non-negative, got {}",
                self.march_step
            ));
        }
        if !(0.0..=1.0).contains(&self.jitter) {
            return bad(format!("jitter must lie in [0, 1], got {}", self.jitter));
        }
        Ok(())
    }
}

/// Scalar state that travels next to a `.vox3` dump of the cached densities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSidecar {
    pub threshold: f64,
    pub ema_decay: f64,
    pub march_step: f64,
    pub jitter: f64,
    pub update_counter: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyGrid {
    config: OccupancyConfig,
    bounds: Aabb,
    cell_size: Vec3,
    cached: Vec<f64>,
    bits: BitVec,
    update_counter: u64,
}

impl OccupancyGrid {
    /// Cold grid: all cached densities 0, all bits clear.
    pub fn new(config: OccupancyConfig, bounds: Aabb) -> Result<Self, EstimatorError> {
        config.validate()?;
        let l = config.resolution;
        let n = l * l * l;
        Ok(Self {
            config,
            bounds,
            cell_size: bounds.extent() / l as f64,
            cached: vec![0.0; n],
            bits: bitvec![0; n],
            update_counter: 0,
        })
    }

    pub fn config(&self) -> &OccupancyConfig {
        &self.config
    }

    pub fn bounds(&self) -> &Aabb {
        &self.bounds
    }

    pub fn resolution(&self) -> usize {
        self.config.resolution
    }

    pub fn threshold(&self) -> f64 {
        self.config.threshold
    }

    pub fn update_counter(&self) -> u64 {
        self.update_counter
    }

    pub fn cached_density(&self) -> &[f64] {
        &self.cached
    }

    pub fn occupancy_bits(&self) -> &BitSlice {
        &self.bits
    }

    pub fn cell_count(&self) -> usize {
        self.cached.len()
    }

    /// Replaces the cached densities and re-binarizes.
    pub fn set_cached_density(&mut self, cached: Vec<f64>) -> Result<(), EstimatorError> {
        if cached.len() != self.cell_count() {
            return Err(EstimatorError::Config(format!(
                "expected {} cached densities, got {}",
                self.cell_count(),
                cached.len()
            )));
        }
        if cached.iter().any(|c| !(c.is_finite() && *c >= 0.0)) {
            return Err(EstimatorError::Config(
                "cached densities must be finite and non-negative".into(),
            ));
        }
        self.cached = cached;
        self.binarize();
        Ok(())
    }

    pub fn set_threshold(&mut self, threshold: f64) -> Result<(), EstimatorError> {
        let mut c = self.config;
        c.threshold = threshold;
        c.validate()?;
        self.config = c;
        Ok(())
    }

    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        let l = self.config.resolution;
        i + l * (j + l * k)
    }

    pub fn cell_center(&self, i: usize, j: usize, k: usize) -> Vec3 {
        let min = self.bounds.min();
        Vec3::new(
            min.x + (i as f64 + 0.5) * self.cell_size.x,
            min.y + (j as f64 + 0.5) * self.cell_size.y,
            min.z + (k as f64 + 0.5) * self.cell_size.z,
        )
    }

    /// Nearest (containing) cell of a point, or `None` outside the bounds.
    pub fn cell_of(&self, p: Vec3) -> Option<[usize; 3]> {
        if !self.bounds.contains(p) {
            return None;
        }
        let min = self.bounds.min();
        let l = self.config.resolution;
        let mut idx = [0usize; 3];
        for (a, slot) in idx.iter_mut().enumerate() {
            let u = ((p[a] - min[a]) / self.cell_size[a]).floor();
            *slot = (u.max(0.0) as usize).min(l - 1);
        }
        Some(idx)
    }

    pub fn is_occupied(&self, p: Vec3) -> bool {
        self.cell_of(p)
            .map(|[i, j, k]| self.bits[self.index(i, j, k)])
            .unwrap_or(false)
    }

    /// `bits[i] = cached[i] > τ`.
    pub fn binarize(&mut self) {
        let tau = self.config.threshold;
        for (mut bit, &c) in self.bits.iter_mut().zip(&self.cached) {
            *bit = c > tau;
        }
    }

    /// One EMA refresh: every cell is probed once at its (jittered) centre,
    /// `cached ← γ·cached + (1 − γ)·σ(probe)`, then the grid is re-binarized.
    ///
    /// Cells are visited x-fastest and each consumes three uniforms from
    /// `rng`, regardless of the jitter setting.
    pub fn update_ema(&mut self, field: &dyn DensityField, rng: &mut dyn RngCore) {
        let l = self.config.resolution;
        let gamma = self.config.ema_decay;
        let jitter = self.config.jitter;
        let size = self.cell_size;
        for k in 0..l {
            for j in 0..l {
                for i in 0..l {
                    let center = self.cell_center(i, j, k);
                    let mut offset = [0.0; 3];
                    for (a, o) in offset.iter_mut().enumerate() {
                        let u: f64 = rng.random();
                        *o = (u - 0.5) * jitter * size[a];
                    }
                    let probe = center + Vec3::from(offset);
                    let idx = self.index(i, j, k);
                    self.cached[idx] =
                        gamma * self.cached[idx] + (1.0 - gamma) * field.density(probe);
                }
            }
        }
        self.binarize();
        self.update_counter += 1;
    }

    /// `max |cached − σ(centre)|` over all cells.
    pub fn max_cell_error(&self, field: &dyn DensityField) -> f64 {
        let l = self.config.resolution;
        let mut worst: f64 = 0.0;
        for k in 0..l {
            for j in 0..l {
                for i in 0..l {
                    let truth = field.density(self.cell_center(i, j, k));
                    worst = worst.max((self.cached[self.index(i, j, k)] - truth).abs());
                }
            }
        }
        worst
    }

    pub fn occupied_fraction(&self) -> f64 {
        self.bits.count_ones() as f64 / self.cell_count() as f64
    }

    /// Occupied `(t_start, t_end)` spans of the ray, found by stepping from
    /// cell boundary to cell boundary. Adjacent occupied cells merge.
    pub fn traverse(&self, ray: &Ray) -> Vec<(f64, f64)> {
        let mut spans: Vec<(f64, f64)> = Vec::new();
        let Some((t_enter, t_exit)) = ray_aabb_intersect(ray, &self.bounds) else {
            return spans;
        };
        let l = self.config.resolution as i64;
        let min = self.bounds.min();
        let o = ray.origin();
        let d = ray.direction();
        let entry = ray.at(t_enter);

        let mut idx = [0i64; 3];
        let mut step = [0i64; 3];
        let mut t_next = [f64::INFINITY; 3];
        let boundary_t = |a: usize, cell: i64, s: i64| -> f64 {
            let face = if s > 0 { cell + 1 } else { cell };
            (min[a] + face as f64 * self.cell_size[a] - o[a]) / d[a]
        };
        for a in 0..3 {
            let u = ((entry[a] - min[a]) / self.cell_size[a]).floor() as i64;
            idx[a] = u.clamp(0, l - 1);
            if d[a] > 0.0 {
                step[a] = 1;
            } else if d[a] < 0.0 {
                step[a] = -1;
            }
            if step[a] != 0 {
                t_next[a] = boundary_t(a, idx[a], step[a]);
            }
        }

        let mut t = t_enter;
        loop {
            let a = if t_next[0] <= t_next[1] && t_next[0] <= t_next[2] {
                0
            } else if t_next[1] <= t_next[2] {
                1
            } else {
                2
            };
            let t_end = t_next[a].min(t_exit);
            if t_end > t {
                let cell = self.index(idx[0] as usize, idx[1] as usize, idx[2] as usize);
                if self.bits[cell] {
                    match spans.last_mut() {
                        Some(last) if last.1 == t => last.1 = t_end,
                        _ => spans.push((t, t_end)),
                    }
                }
                t = t_end;
            }
            if t_next[a] >= t_exit {
                break;
            }
            idx[a] += step[a];
            if idx[a] < 0 || idx[a] >= l {
                break;
            }
            t_next[a] = boundary_t(a, idx[a], step[a]);
        }
        spans
    }

    /// Cached densities as a `.vox3` field plus the scalar sidecar.
    pub fn to_voxel_field(&self) -> (VoxelField, GridSidecar) {
        let l = self.config.resolution;
        let field = VoxelField::new(
            [l, l, l],
            self.bounds,
            self.cached.iter().map(|&c| c as f32).collect(),
            None,
        )
        .expect("grid state is always a valid voxel field");
        let sidecar = GridSidecar {
            threshold: self.config.threshold,
            ema_decay: self.config.ema_decay,
            march_step: self.config.march_step,
            jitter: self.config.jitter,
            update_counter: self.update_counter,
        };
        (field, sidecar)
    }

    /// Inverse of [`Self::to_voxel_field`]. Cached values come back at `f32`
    /// precision.
    pub fn from_voxel_field(
        field: &VoxelField,
        sidecar: &GridSidecar,
    ) -> Result<Self, EstimatorError> {
        let [nx, ny, nz] = field.resolution();
        if nx != ny || ny != nz {
            return Err(EstimatorError::Config(format!(
                "occupancy grids are cubic, got {nx}x{ny}x{nz}"
            )));
        }
        let config = OccupancyConfig {
            resolution: nx,
            threshold: sidecar.threshold,
            ema_decay: sidecar.ema_decay,
            march_step: sidecar.march_step,
            jitter: sidecar.jitter,
        };
        let mut grid = Self::new(config, *field.bounds())?;
        grid.set_cached_density(field.densities().iter().map(|&d| d as f64).collect())?;
        grid.update_counter = sidecar.update_counter;
        Ok(grid)
    }

    /// Piecewise-linear profile: T falls linearly with occupied length
    /// traversed and stays flat across skipped space.
    pub fn profile(&self, ray: &Ray) -> TransmittanceProfile {
        let spans = self.traverse(ray);
        occupancy_profile(ray, &spans)
    }
}

pub(crate) fn occupancy_profile(ray: &Ray, spans: &[(f64, f64)]) -> TransmittanceProfile {
    let total: f64 = spans.iter().map(|(a, b)| b - a).sum();
    if spans.is_empty() || !(total > 0.0) {
        return TransmittanceProfile::trivial(ray.t_near(), ray.t_far());
    }
    let mut bp = vec![ray.t_near()];
    let mut tr = vec![1.0];
    let mut covered = 0.0;
    for (n, &(a, b)) in spans.iter().enumerate() {
        if a > *bp.last().unwrap() {
            bp.push(a);
            tr.push(*tr.last().unwrap());
        }
        covered += b - a;
        let value = if n + 1 == spans.len() {
            0.0
        } else {
            (1.0 - covered / total).max(0.0)
        };
        if b > *bp.last().unwrap() {
            bp.push(b);
            tr.push(value);
        } else {
            *tr.last_mut().unwrap() = value;
        }
    }
    if ray.t_far() > *bp.last().unwrap() {
        bp.push(ray.t_far());
        tr.push(0.0);
    }
    TransmittanceProfile::new(bp, tr).expect("occupancy profile is valid by construction")
}

impl TransmittanceEstimator for OccupancyGrid {
    fn estimate(&self, ray: &Ray) -> TransmittanceProfile {
        self.profile(ray)
    }

    fn march_step(&self) -> Option<f64> {
        (self.config.march_step > 0.0).then_some(self.config.march_step)
    }

    fn update(&mut self, field: &dyn DensityField, rng: &mut dyn RngCore) -> bool {
        self.update_ema(field, rng);
        true
    }
}
