//! Estimate → sample → filter → render → (periodically) update, as one call.

use std::sync::Arc;

use thiserror::Error;

use crate::estimator::TransmittanceEstimator;
use crate::field::RadianceField;
use crate::geometry::Ray;
use crate::render::{render, RenderError, RenderOutput};
use crate::sampler::{
    filter_by_transmittance, ray_rng, sample, PackedSamples, SamplerConfig, SamplerError,
};

pub const DEFAULT_UPDATE_EVERY: u64 = 16;

/// Stream id reserved for estimator updates so they never share a stream
/// with a ray.
const UPDATE_STREAM: u64 = u64::MAX;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Sampler(#[from] SamplerError),
    #[error(transparent)]
    Render(#[from] RenderError),
}

/// Everything one step produced.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    pub render: RenderOutput,
    pub samples: PackedSamples,
    pub samples_before_filter: usize,
    pub updated: bool,
}

pub struct PipelineState<E> {
    estimator: E,
    config: SamplerConfig,
    field: Arc<dyn RadianceField>,
    /// `None` freezes the estimator.
    update_every: Option<u64>,
    step: u64,
    updates: u64,
}

impl<E: TransmittanceEstimator> PipelineState<E> {
    pub fn new(
        estimator: E,
        config: SamplerConfig,
        field: Arc<dyn RadianceField>,
    ) -> Result<Self, PipelineError> {
        config.validate()?;
        Ok(Self {
            estimator,
            config,
            field,
            update_every: Some(DEFAULT_UPDATE_EVERY),
            step: 0,
            updates: 0,
        })
    }

    /// Update cadence; `None` or `Some(0)` disables updates.
    pub fn with_update_every(mut self, every: Option<u64>) -> Self {
        self.update_every = every.filter(|&n| n > 0);
        self
    }

    pub fn estimator(&self) -> &E {
        &self.estimator
    }

    pub fn estimator_mut(&mut self) -> &mut E {
        &mut self.estimator
    }

    pub fn into_estimator(self) -> E {
        self.estimator
    }

    pub fn config(&self) -> &SamplerConfig {
        &self.config
    }

    /// Steps taken so far (k).
    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Updates that actually changed the estimator.
    pub fn update_count(&self) -> u64 {
        self.updates
    }

    /// Sampler configuration used at step `k`: the base seed offset by `k`.
    pub fn config_for_step(&self, k: u64) -> SamplerConfig {
        SamplerConfig {
            seed: self.config.seed.wrapping_add(k),
            ..self.config
        }
    }

    pub fn step(&mut self, rays: &[Ray]) -> Result<StepOutput, PipelineError> {
        let k = self.step;
        let cfg = self.config_for_step(k);
        let raw = sample(rays, &self.estimator, &cfg)?;
        let samples_before_filter = raw.len();
        let kept = filter_by_transmittance(&raw, rays, self.field.as_ref(), cfg.filter_threshold)?;
        let out = render(&kept, rays, self.field.as_ref())?;

        let mut updated = false;
        if let Some(n) = self.update_every {
            if (k + 1).is_multiple_of(n) {
                let mut rng = ray_rng(cfg.seed, UPDATE_STREAM);
                updated = self.estimator.update(self.field.as_ref(), &mut rng);
                if updated {
                    self.updates += 1;
                }
            }
        }
        self.step += 1;
        Ok(StepOutput {
            render: out,
            samples: kept,
            samples_before_filter,
            updated,
        })
    }
}
