//! Scene loading, estimator construction and the shared render path used by
//! every subcommand.

use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use anyhow::{bail, ensure, Context, Result};
use serde::Serialize;
use volest::estimator::{
    AnyEstimator, CombinedEstimator, EstimatorKind, OccupancyGrid, PdfEstimator, UniformEstimator,
};
use volest::field::{bake, RadianceField, SceneDescription, VoxelField};
use volest::geometry::{Aabb, MappingKind, Ray};
use volest::pipeline::PipelineState;
use volest::render::{oracle_render_all, psnr, Image, RenderOutput};
use volest::sampler::{ray_rng, PackedSamples};

use crate::camera::generate_rays;
use crate::config::{EstimatorConfig, SceneConfig};

/// Quadrature intervals per ray for the reference image in reported stats.
pub const ORACLE_QUAD: usize = 4096;

/// Far limit for unbounded scenes.
pub const UNBOUNDED_FAR: f64 = 1e4;

/// RNG stream for grid warm-up and simulated updates.
const WARMUP_STREAM: u64 = u64::MAX - 1;

pub struct Scene {
    pub field: Arc<dyn RadianceField>,
    pub bounds: Aabb,
}

impl Scene {
    /// Loads a `.vox3` file, or otherwise an analytic scene JSON.
    pub fn load(path: &Path) -> Result<Self> {
        if path.extension().is_some_and(|e| e == "vox3") {
            let vox =
                VoxelField::load(path).with_context(|| format!("loading {}", path.display()))?;
            let bounds = *vox.bounds();
            Ok(Self {
                field: Arc::new(vox),
                bounds,
            })
        } else {
            let desc = SceneDescription::load(path)?;
            Ok(Self::analytic(&desc))
        }
    }

    pub fn analytic(desc: &SceneDescription) -> Self {
        Self {
            field: Arc::new(desc.scene()),
            bounds: desc.bounds,
        }
    }
}

/// Runs `cfg.warmup` EMA updates from a cold grid.
pub fn warm_grid(scene: &Scene, cfg: &EstimatorConfig) -> Result<OccupancyGrid> {
    let mut grid = OccupancyGrid::new(cfg.occupancy(), scene.bounds)?;
    let mut rng = ray_rng(cfg.seed, WARMUP_STREAM);
    for _ in 0..cfg.warmup {
        grid.update_ema(&scene.field, &mut rng);
    }
    Ok(grid)
}

pub fn build_estimator(
    scene: &Scene,
    cfg: &EstimatorConfig,
    mapping: MappingKind,
) -> Result<AnyEstimator> {
    cfg.validate()?;
    let pdf = || -> Result<PdfEstimator> {
        let r = cfg.coarse_resolution;
        let coarse = bake(&scene.field, [r, r, r], scene.bounds)?;
        Ok(PdfEstimator::new(Arc::new(coarse), cfg.n_coarse)?.with_mapping(mapping))
    };
    Ok(match cfg.kind {
        EstimatorKind::Uniform => AnyEstimator::Uniform(UniformEstimator::with_mapping(mapping)),
        EstimatorKind::Occupancy => AnyEstimator::Occupancy(warm_grid(scene, cfg)?),
        EstimatorKind::Pdf => AnyEstimator::Pdf(pdf()?),
        EstimatorKind::Combined => {
            AnyEstimator::Combined(CombinedEstimator::new(warm_grid(scene, cfg)?, pdf()?))
        }
    })
}

/// A loaded scene with its camera rays, ready to render repeatedly.
pub struct Setup {
    pub scene: Scene,
    pub config: SceneConfig,
    pub rays: Vec<Ray>,
    pub mapping: MappingKind,
}

impl Setup {
    pub fn load(config: SceneConfig) -> Result<Self> {
        config.validate()?;
        let scene = Scene::load(&config.scene)?;
        Self::new(scene, config)
    }

    pub fn new(scene: Scene, config: SceneConfig) -> Result<Self> {
        config.camera.validate()?;
        let (t_far, mapping) = if config.unbounded {
            (UNBOUNDED_FAR, MappingKind::ReciprocalDepth)
        } else {
            let far = config
                .t_far
                .unwrap_or_else(|| farthest_corner(&scene.bounds, &config));
            (far, MappingKind::Identity)
        };
        ensure!(
            t_far > config.t_near,
            "t_near {} lies beyond the far limit {t_far}",
            config.t_near
        );
        let rays = generate_rays(&config.camera, config.t_near, t_far)?;
        Ok(Self {
            scene,
            config,
            rays,
            mapping,
        })
    }

    pub fn width(&self) -> usize {
        self.config.camera.width
    }

    pub fn height(&self) -> usize {
        self.config.camera.height
    }

    /// Reference image from `n_quad` intervals per ray, equal in the same
    /// coordinate the estimators sample in.
    pub fn oracle(&self, n_quad: usize) -> Image {
        self.to_image(&oracle_render_all(
            &self.rays,
            &self.scene.field,
            n_quad,
            self.mapping,
        ))
    }

    pub fn render(&self, cfg: &EstimatorConfig) -> Result<RenderReport> {
        let start = Instant::now();
        let estimator = build_estimator(&self.scene, cfg, self.mapping)?;
        self.render_with(estimator, cfg, start)
    }

    /// Renders with an already-built estimator; timing starts at `start`.
    pub fn render_with(
        &self,
        estimator: AnyEstimator,
        cfg: &EstimatorConfig,
        start: Instant,
    ) -> Result<RenderReport> {
        let mut state = PipelineState::new(estimator, cfg.sampler(), self.scene.field.clone())?
            .with_update_every(None);
        let step = state.step(&self.rays)?;
        let wall_time = start.elapsed();
        Ok(RenderReport {
            image: self.to_image(&step.render),
            output: step.render,
            samples: step.samples,
            samples_before_filter: step.samples_before_filter,
            wall_time,
            estimator: state.into_estimator(),
            n_samples: cfg.n_samples,
        })
    }

    /// Composites premultiplied colours over the background.
    pub fn to_image(&self, out: &RenderOutput) -> Image {
        let bg = self.config.background;
        let pixels = out
            .colors
            .iter()
            .zip(&out.opacities)
            .map(|(c, &a)| std::array::from_fn(|i| c[i] + (1.0 - a) * bg[i]))
            .collect();
        Image::new(self.width(), self.height(), pixels).expect("one pixel per ray")
    }
}

fn farthest_corner(bounds: &Aabb, config: &SceneConfig) -> f64 {
    let (lo, hi) = (bounds.min(), bounds.max());
    let p = config.camera.position;
    let dx = (p.x - lo.x).abs().max((p.x - hi.x).abs());
    let dy = (p.y - lo.y).abs().max((p.y - hi.y).abs());
    let dz = (p.z - lo.z).abs().max((p.z - hi.z).abs());
    (dx * dx + dy * dy + dz * dz).sqrt()
}

pub struct RenderReport {
    pub image: Image,
    pub output: RenderOutput,
    /// Post-filter samples.
    pub samples: PackedSamples,
    pub samples_before_filter: usize,
    /// Estimator construction plus sampling and rendering.
    pub wall_time: Duration,
    pub estimator: AnyEstimator,
    pub n_samples: usize,
}

/// The stats line printed by `render`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RenderStats {
    pub estimator: EstimatorKind,
    pub n_samples: usize,
    pub rays: usize,
    pub psnr: f64,
    pub mean_samples_before_filter: f64,
    pub mean_samples_per_ray: f64,
    pub wall_time_ms: Option<f64>,
}

impl RenderReport {
    pub fn stats(&self, oracle: &Image, timing: bool) -> Result<RenderStats> {
        let rays = self.samples.num_rays();
        Ok(RenderStats {
            estimator: self.estimator.kind(),
            n_samples: self.n_samples,
            rays,
            psnr: psnr(&self.image, oracle)?,
            mean_samples_before_filter: self.samples_before_filter as f64 / rays.max(1) as f64,
            mean_samples_per_ray: self.samples.mean_per_ray(),
            wall_time_ms: timing.then_some(self.wall_time.as_secs_f64() * 1e3),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct UpdateRow {
    pub k: usize,
    pub max_cell_error: f64,
    pub occupied_fraction: f64,
}

/// `steps` EMA updates from a cold grid; row 0 is the cold grid itself.
pub fn simulate_updates(
    scene: &Scene,
    cfg: &EstimatorConfig,
    steps: usize,
) -> Result<Vec<UpdateRow>> {
    if cfg.kind != EstimatorKind::Occupancy {
        bail!(
            "simulate-updates needs the occupancy estimator, got {}",
            cfg.kind
        );
    }
    cfg.validate()?;
    let mut grid = OccupancyGrid::new(cfg.occupancy(), scene.bounds)?;
    let mut rng = ray_rng(cfg.seed, WARMUP_STREAM);
    let mut rows = Vec::with_capacity(steps + 1);
    for k in 0..=steps {
        if k > 0 {
            grid.update_ema(&scene.field, &mut rng);
        }
        rows.push(UpdateRow {
            k,
            max_cell_error: grid.max_cell_error(&scene.field),
            occupied_fraction: grid.occupied_fraction(),
        });
    }
    Ok(rows)
}
