//! Scene and estimator configuration, shared by flags and `--config` files.

use std::path::PathBuf;

use anyhow::{bail, ensure, Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use volest::estimator::{EstimatorKind, OccupancyConfig};
use volest::field::Rgb;
use volest::geometry::Vec3;
use volest::sampler::{SamplerConfig, DEFAULT_FILTER_THRESHOLD};

/// Pinhole camera.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Camera {
    pub position: Vec3,
    pub look_at: Vec3,
    pub up: Vec3,
    /// Vertical field of view in degrees.
    pub fov_deg: f64,
    pub width: usize,
    pub height: usize,
}

impl Default for Camera {
    fn default() -> Self {
        Self {
            position: Vec3::new(0.0, 0.0, 4.0),
            look_at: Vec3::ZERO,
            up: Vec3::new(0.0, 1.0, 0.0),
            fov_deg: 40.0,
            width: 64,
            height: 64,
        }
    }
}

impl Camera {
    pub fn validate(&self) -> Result<()> {
        ensure!(
            self.fov_deg > 0.0 && self.fov_deg < 180.0,
            "camera fov_deg must lie in (0, 180), got {}",
            self.fov_deg
        );
        ensure!(
            self.width >= 1 && self.height >= 1,
            "camera resolution must be at least 1x1, got {}x{}",
            self.width,
            self.height
        );
        ensure!(
            self.position.is_finite() && self.look_at.is_finite() && self.up.is_finite(),
            "camera vectors must be finite"
        );
        let forward = self.look_at - self.position;
        ensure!(
            forward.length() > 0.0,
            "camera look_at coincides with its position"
        );
        ensure!(
            forward.normalized().cross(self.up).length() > 1e-9,
            "camera up vector is parallel to the viewing direction"
        );
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneConfig {
    /// Analytic scene JSON, or a `.vox3` voxel file.
    pub scene: PathBuf,
    pub camera: Camera,
    pub t_near: f64,
    /// Defaults to the distance from the camera to the farthest corner of the
    /// scene bounds.
    pub t_far: Option<f64>,
    /// Samples in reciprocal depth out to a far cap instead of a finite `t_far`.
    pub unbounded: bool,
    pub background: Rgb,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            scene: PathBuf::new(),
            camera: Camera::default(),
            t_near: 0.0,
            t_far: None,
            unbounded: false,
            background: [0.0; 3],
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        ensure!(!self.scene.as_os_str().is_empty(), "no scene file given");
        self.camera.validate()?;
        ensure!(
            self.t_near >= 0.0 && self.t_near.is_finite(),
            "t_near must be finite and non-negative, got {}",
            self.t_near
        );
        if let Some(far) = self.t_far {
            ensure!(
                far.is_finite() && far > self.t_near,
                "t_far must be finite and greater than t_near, got {far}"
            );
        }
        if self.unbounded {
            ensure!(self.t_near > 0.0, "unbounded scenes need t_near > 0");
            ensure!(
                self.t_far.is_none(),
                "t_far cannot be combined with unbounded"
            );
        }
        ensure!(
            self.background.iter().all(|c| c.is_finite()),
            "background must be finite"
        );
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorConfig {
    pub kind: EstimatorKind,

    /// Grid resolution L (occupancy, combined).
    pub resolution: usize,
    /// Binarization threshold τ.
    pub threshold: f64,
    /// EMA decay γ.
    pub ema_decay: f64,
    /// Marching step Δt; 0 disables it.
    pub march_step: f64,
    pub jitter: f64,
    /// EMA updates run before rendering (W).
    pub warmup: usize,

    /// Per-axis resolution of the baked coarse density (pdf, combined).
    pub coarse_resolution: usize,
    pub n_coarse: usize,

    /// Per-ray sample budget N.
    pub n_samples: usize,
    pub stratified: bool,
    pub filter_threshold: f64,
    pub seed: u64,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        let occ = OccupancyConfig::default();
        let smp = SamplerConfig::default();
        Self {
            kind: EstimatorKind::Uniform,
            resolution: occ.resolution,
            threshold: occ.threshold,
            ema_decay: occ.ema_decay,
            march_step: occ.march_step,
            jitter: occ.jitter,
            warmup: 16,
            coarse_resolution: 32,
            n_coarse: 64,
            n_samples: smp.n_samples,
            stratified: smp.stratified,
            filter_threshold: DEFAULT_FILTER_THRESHOLD,
            seed: smp.seed,
        }
    }
}

impl EstimatorConfig {
    pub fn occupancy(&self) -> OccupancyConfig {
        OccupancyConfig {
            resolution: self.resolution,
            threshold: self.threshold,
            ema_decay: self.ema_decay,
            march_step: self.march_step,
            jitter: self.jitter,
        }
    }

    pub fn sampler(&self) -> SamplerConfig {
        SamplerConfig {
            n_samples: self.n_samples,
            stratified: self.stratified,
            filter_threshold: self.filter_threshold,
            seed: self.seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.sampler().validate()?;
        if matches!(
            self.kind,
            EstimatorKind::Occupancy | EstimatorKind::Combined
        ) {
            self.occupancy().validate()?;
        }
        if matches!(self.kind, EstimatorKind::Pdf | EstimatorKind::Combined) {
            ensure!(
                self.coarse_resolution >= 2,
                "coarse_resolution must be at least 2, got {}",
                self.coarse_resolution
            );
            ensure!(
                self.n_coarse >= 2,
                "n_coarse must be at least 2, got {}",
                self.n_coarse
            );
        }
        Ok(())
    }
}

/// Overwrites `base` with every key of `patch`, recursing into objects.
pub fn merge(base: &mut Value, patch: &Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                merge(b.entry(k.clone()).or_insert(Value::Null), v);
            }
        }
        (b, p) => *b = p.clone(),
    }
}

/// Applies a JSON patch object to a config, then checks it still parses.
pub fn patched<T>(config: &T, patch: &Map<String, Value>) -> Result<T>
where
    T: Serialize + for<'de> Deserialize<'de>,
{
    let mut value = serde_json::to_value(config)?;
    merge(&mut value, &Value::Object(patch.clone()));
    serde_json::from_value(value).context("invalid configuration")
}

/// Contents of a `--config` file: either section may be omitted.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(default)]
    pub scene: Map<String, Value>,
    #[serde(default)]
    pub estimator: Map<String, Value>,
    /// Only read by `sweep`.
    #[serde(default)]
    pub sweep: Option<Value>,
}

impl ConfigFile {
    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut file: ConfigFile =
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        // Scene paths in a config file are relative to the file itself.
        if let (Some(Value::String(s)), Some(dir)) = (file.scene.get("scene"), path.parent()) {
            let p = PathBuf::from(s);
            if p.is_relative() {
                let joined = dir.join(p).to_string_lossy().into_owned();
                file.scene.insert("scene".into(), Value::String(joined));
            }
        }
        Ok(file)
    }
}

/// Parses `x,y,z`.
pub fn parse_vec3(s: &str) -> Result<Vec3> {
    let [x, y, z] = parse_triple(s)?;
    Ok(Vec3::new(x, y, z))
}

/// Parses `r,g,b`.
pub fn parse_rgb(s: &str) -> Result<Rgb> {
    parse_triple(s)
}

fn parse_triple(s: &str) -> Result<[f64; 3]> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        bail!("expected three comma-separated numbers, got '{s}'");
    }
    let mut out = [0.0; 3];
    for (o, p) in out.iter_mut().zip(parts) {
        *o = p
            .parse()
            .with_context(|| format!("'{p}' is not a number"))?;
    }
    Ok(out)
}
