use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{DensityField, RadianceField, Rgb, BLACK};
use crate::geometry::{Aabb, Vec3};

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("reading scene {path}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parsing scene JSON")]
    Json(#[from] serde_json::Error),
    #[error("invalid primitive #{index}: {reason}")]
    Invalid { index: usize, reason: String },
}

/// One analytic density primitive with a constant colour.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Primitive {
    ConstantBox {
        #[serde(rename = "box")]
        aabb: Aabb,
        sigma: f64,
        #[serde(default = "white")]
        color: Rgb,
    },
    /// Hard-edged ball: σ₀ for ‖x − c‖ ≤ r.
    Sphere {
        center: Vec3,
        radius: f64,
        sigma: f64,
        #[serde(default = "white")]
        color: Rgb,
    },
    /// σ₀·exp(−‖x − μ‖² / 2w²).
    GaussianBlob {
        mean: Vec3,
        width: f64,
        sigma: f64,
        #[serde(default = "white")]
        color: Rgb,
    },
}

fn white() -> Rgb {
    [1.0, 1.0, 1.0]
}

impl Primitive {
    pub fn color(&self) -> Rgb {
        match self {
            Primitive::ConstantBox { color, .. }
            | Primitive::Sphere { color, .. }
            | Primitive::GaussianBlob { color, .. } => *color,
        }
    }

    fn validate(&self) -> Result<(), String> {
        let (sigma, color) = match self {
            Primitive::ConstantBox { sigma, color, .. } => (*sigma, *color),
            Primitive::Sphere {
                radius,
                sigma,
                color,
                ..
            } => {
                if !(*radius > 0.0 && radius.is_finite()) {
                    return Err(format!("radius must be positive, got {radius}"));
                }
                (*sigma, *color)
            }
            Primitive::GaussianBlob {
                width,
                sigma,
                color,
                ..
            } => {
                if !(*width > 0.0 && width.is_finite()) {
                    return Err(format!("width must be positive, got {width}"));
                }
                (*sigma, *color)
            }
        };
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(format!(
                "sigma must be finite and non-negative, got {sigma}"
            ));
        }
        if color.iter().any(|c| !(0.0..=1.0).contains(c)) {
            return Err(format!(
                "color components must lie in [0, 1], got {color:?}"
            ));
        }
        Ok(())
    }
}

impl DensityField for Primitive {
    fn density(&self, x: Vec3) -> f64 {
        match self {
            Primitive::ConstantBox { aabb, sigma, .. } => {
                if aabb.contains(x) {
                    *sigma
                } else {
                    0.0
                }
            }
            Primitive::Sphere {
                center,
                radius,
                sigma,
                ..
            } => {
                if (x - *center).length_squared() <= radius * radius {
                    *sigma
                } else {
                    0.0
                }
            }
            Primitive::GaussianBlob {
                mean, width, sigma, ..
            } => sigma * (-(x - *mean).length_squared() / (2.0 * width * width)).exp(),
        }
    }
}

impl RadianceField for Primitive {
    fn radiance(&self, x: Vec3, _dir: Vec3) -> (f64, Rgb) {
        let s = self.density(x);
        if s > 0.0 {
            (s, self.color())
        } else {
            (0.0, BLACK)
        }
    }
}

/// Max-combination of primitives. The colour is that of the primitive with
/// the largest density at the query point (first one wins ties).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CompositeScene {
    primitives: Vec<Primitive>,
}

impl CompositeScene {
    pub fn new(primitives: Vec<Primitive>) -> Result<Self, SceneError> {
        for (index, p) in primitives.iter().enumerate() {
            p.validate()
                .map_err(|reason| SceneError::Invalid { index, reason })?;
        }
        Ok(Self { primitives })
    }

    pub fn primitives(&self) -> &[Primitive] {
        &self.primitives
    }
}

impl DensityField for CompositeScene {
    fn density(&self, x: Vec3) -> f64 {
        self.primitives
            .iter()
            .map(|p| p.density(x))
            .fold(0.0, f64::max)
    }
}

impl RadianceField for CompositeScene {
    fn radiance(&self, x: Vec3, _dir: Vec3) -> (f64, Rgb) {
        let mut best = (0.0, BLACK);
        for p in &self.primitives {
            let s = p.density(x);
            if s > best.0 {
                best = (s, p.color());
            }
        }
        best
    }
}

/// JSON scene file: scene bounds plus a primitive list.
///
/// ```json
/// { "bounds": { "min": [-1.5, -1.5, -1.5], "max": [1.5, 1.5, 1.5] },
///   "primitives": [
///     { "type": "gaussian_blob", "mean": [0, 0, 0], "width": 0.3, "sigma": 8, "color": [1, 0.5, 0.2] } ] }
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneDescription {
    pub bounds: Aabb,
    pub primitives: Vec<Primitive>,
}

impl SceneDescription {
    pub fn from_json(text: &str) -> Result<Self, SceneError> {
        let desc: SceneDescription = serde_json::from_str(text)?;
        // validates primitives
        CompositeScene::new(desc.primitives.clone())?;
        Ok(desc)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, SceneError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| SceneError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scene serialization cannot fail")
    }

    pub fn scene(&self) -> CompositeScene {
        CompositeScene {
            primitives: self.primitives.clone(),
        }
    }
}
