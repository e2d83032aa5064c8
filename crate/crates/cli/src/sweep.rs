//! Hyperparameter sweeps: a grid, random draws, or random draws crossed with
//! a grid, each row rendered and scored against one shared oracle image.

use std::io::Write;

use anyhow::{bail, ensure, Context, Result};
use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Number, Value};
use volest::estimator::EstimatorKind;
use volest::sampler::ray_rng;

use crate::config::{patched, EstimatorConfig};
use crate::harness::Setup;
use crate::output::csv_writer;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    /// Master seed; falls back to the estimator's `seed`.
    #[serde(default)]
    pub seed: Option<u64>,
    /// Estimator fields shared by every row.
    #[serde(default)]
    pub base: Map<String, Value>,
    /// Field name to list of values; the last field varies fastest.
    #[serde(default)]
    pub grid: Map<String, Value>,
    #[serde(default)]
    pub random: Option<RandomSpec>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomSpec {
    pub count: usize,
    pub params: Map<String, Value>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
enum ParamSpec {
    Choices {
        choices: Vec<Value>,
    },
    Range {
        min: Number,
        max: Number,
        #[serde(default)]
        log: bool,
    },
}

impl ParamSpec {
    fn draw(&self, name: &str, rng: &mut impl Rng) -> Result<Value> {
        match self {
            ParamSpec::Choices { choices } => {
                ensure!(
                    !choices.is_empty(),
                    "random parameter '{name}' has no choices"
                );
                Ok(choices[rng.random_range(0..choices.len())].clone())
            }
            ParamSpec::Range { min, max, log } => {
                let integer = min.is_u64() && max.is_u64();
                let (lo, hi) = (
                    min.as_f64().unwrap_or(f64::NAN),
                    max.as_f64().unwrap_or(f64::NAN),
                );
                ensure!(
                    lo <= hi,
                    "random parameter '{name}' has min {lo} > max {hi}"
                );
                ensure!(
                    !log || lo > 0.0,
                    "log-uniform parameter '{name}' needs min > 0"
                );
                let x = match (integer, *log) {
                    (true, false) => {
                        return Ok(Value::from(
                            rng.random_range(min.as_u64().unwrap()..=max.as_u64().unwrap()),
                        ))
                    }
                    (_, true) => (rng.random_range(lo.ln()..=hi.ln())).exp(),
                    (false, false) => rng.random_range(lo..=hi),
                };
                if integer {
                    Ok(Value::from(x.round().clamp(lo, hi) as u64))
                } else {
                    Ok(Number::from_f64(x)
                        .map(Value::Number)
                        .unwrap_or(Value::Null))
                }
            }
        }
    }
}

/// One row of parameter overrides per configuration, in spec order.
pub fn expand(spec: &SweepSpec, master_seed: u64) -> Result<Vec<Map<String, Value>>> {
    let draws = match &spec.random {
        None => vec![Map::new()],
        Some(r) => {
            ensure!(r.count > 0, "random sweep has count 0");
            let params: Vec<(&String, ParamSpec)> = r
                .params
                .iter()
                .map(|(k, v)| {
                    serde_json::from_value(v.clone())
                        .map(|p| (k, p))
                        .with_context(|| {
                            format!(
                                "random parameter '{k}': expected {{choices}} or {{min, max, log}}"
                            )
                        })
                })
                .collect::<Result<_>>()?;
            (0..r.count)
                .map(|i| {
                    let mut rng = ray_rng(master_seed, i as u64);
                    params
                        .iter()
                        .map(|(k, p)| Ok(((*k).clone(), p.draw(k, &mut rng)?)))
                        .collect::<Result<Map<_, _>>>()
                })
                .collect::<Result<_>>()?
        }
    };

    let mut points = vec![Map::new()];
    for (name, values) in &spec.grid {
        let Value::Array(values) = values else {
            bail!("grid parameter '{name}' must be a list of values");
        };
        ensure!(!values.is_empty(), "grid parameter '{name}' has no values");
        points = points
            .into_iter()
            .flat_map(|p| {
                values.iter().map(move |v| {
                    let mut q = p.clone();
                    q.insert(name.clone(), v.clone());
                    q
                })
            })
            .collect();
    }

    if spec.random.is_none() && spec.grid.is_empty() {
        bail!("empty sweep: give a grid, random draws, or both");
    }
    Ok(draws
        .iter()
        .flat_map(|d| {
            points.iter().map(move |g| {
                let mut row = d.clone();
                row.extend(g.clone());
                row
            })
        })
        .collect())
}

/// Fully resolved estimator configuration of every row.
pub fn row_configs(base: &EstimatorConfig, spec: &SweepSpec) -> Result<Vec<EstimatorConfig>> {
    let master_seed = spec.seed.unwrap_or(base.seed);
    let shared = patched(
        &EstimatorConfig {
            seed: master_seed,
            ..base.clone()
        },
        &spec.base,
    )
    .context("sweep base")?;
    expand(spec, master_seed)?
        .iter()
        .enumerate()
        .map(|(i, params)| {
            let cfg = patched(&shared, params).with_context(|| format!("sweep row {i}"))?;
            cfg.validate().with_context(|| format!("sweep row {i}"))?;
            Ok(cfg)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub row: usize,
    pub kind: EstimatorKind,
    pub n_samples: usize,
    pub stratified: bool,
    pub filter_threshold: f64,
    pub seed: u64,
    pub resolution: usize,
    pub threshold: f64,
    pub ema_decay: f64,
    pub march_step: f64,
    pub jitter: f64,
    pub warmup: usize,
    pub coarse_resolution: usize,
    pub n_coarse: usize,
    pub psnr: f64,
    pub mean_samples_before_filter: f64,
    pub mean_samples_per_ray: f64,
    /// Empty when timing is off.
    pub wall_time_ms: Option<f64>,
}

/// Renders every row in order against an oracle of `oracle_quad` intervals.
pub fn run_sweep(
    setup: &Setup,
    base: &EstimatorConfig,
    spec: &SweepSpec,
    oracle_quad: usize,
    timing: bool,
) -> Result<Vec<SweepRow>> {
    let configs = row_configs(base, spec)?;
    let oracle = setup.oracle(oracle_quad);
    configs
        .iter()
        .enumerate()
        .map(|(row, cfg)| {
            let stats = setup
                .render(cfg)
                .and_then(|r| r.stats(&oracle, timing))
                .with_context(|| format!("sweep row {row}"))?;
            Ok(SweepRow {
                row,
                kind: cfg.kind,
                n_samples: cfg.n_samples,
                stratified: cfg.stratified,
                filter_threshold: cfg.filter_threshold,
                seed: cfg.seed,
                resolution: cfg.resolution,
                threshold: cfg.threshold,
                ema_decay: cfg.ema_decay,
                march_step: cfg.march_step,
                jitter: cfg.jitter,
                warmup: cfg.warmup,
                coarse_resolution: cfg.coarse_resolution,
                n_coarse: cfg.n_coarse,
                psnr: stats.psnr,
                mean_samples_before_filter: stats.mean_samples_before_filter,
                mean_samples_per_ray: stats.mean_samples_per_ray,
                wall_time_ms: stats.wall_time_ms,
            })
        })
        .collect()
}

pub fn write_sweep_csv(rows: &[SweepRow], out: impl Write) -> Result<()> {
    let mut w = csv_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(json: &str) -> SweepSpec {
        serde_json::from_str(json).unwrap()
    }

    #[test]
    fn grid_is_a_cartesian_product_in_spec_order() {
        let s = spec(r#"{"grid": {"kind": ["uniform", "occupancy"], "n_samples": [8, 16, 32]}}"#);
        let rows = expand(&s, 0).unwrap();
        assert_eq!(rows.len(), 6);
        assert_eq!(rows[0]["kind"], "uniform");
        assert_eq!(rows[1]["n_samples"], 16);
        assert_eq!(rows[3]["kind"], "occupancy");
        assert_eq!(rows[3]["n_samples"], 8);
    }

    #[test]
    fn empty_sweeps_are_rejected() {
        assert!(expand(&spec("{}"), 0).is_err());
        assert!(expand(&spec(r#"{"grid": {"n_samples": []}}"#), 0).is_err());
        assert!(expand(&spec(r#"{"random": {"count": 0, "params": {}}}"#), 0).is_err());
    }

    #[test]
    fn random_draws_are_reproducible_and_in_range() {
        let s = spec(
            r#"{"random": {"count": 20, "params": {
                "n_samples": {"min": 8, "max": 128},
                "threshold": {"min": 0.001, "max": 0.1, "log": true},
                "kind": {"choices": ["uniform", "occupancy"]}
            }}, "grid": {"stratified": [true, false]}}"#,
        );
        let a = expand(&s, 7).unwrap();
        assert_eq!(a.len(), 40);
        assert_eq!(a, expand(&s, 7).unwrap());
        assert_ne!(a, expand(&s, 8).unwrap());
        for row in &a {
            let n = row["n_samples"].as_u64().unwrap();
            assert!((8..=128).contains(&n));
            let t = row["threshold"].as_f64().unwrap();
            assert!((0.001..=0.1).contains(&t));
        }
        // each draw is shared by both grid points
        assert_eq!(a[0]["n_samples"], a[1]["n_samples"]);
    }

    #[test]
    fn rows_resolve_to_validated_configs() {
        let base = EstimatorConfig::default();
        let s =
            spec(r#"{"seed": 3, "base": {"kind": "occupancy"}, "grid": {"n_samples": [4, 0]}}"#);
        let err = row_configs(&base, &s).unwrap_err();
        assert!(format!("{err:#}").contains("row 1"));
        let s =
            spec(r#"{"seed": 3, "base": {"kind": "occupancy"}, "grid": {"n_samples": [4, 8]}}"#);
        let cfgs = row_configs(&base, &s).unwrap();
        assert!(cfgs
            .iter()
            .all(|c| c.seed == 3 && c.kind == EstimatorKind::Occupancy));
        let s = spec(r#"{"grid": {"nonsense": [1]}}"#);
        assert!(row_configs(&base, &s).is_err());
    }
}
