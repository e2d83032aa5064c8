//! Harness behind the `volest` binary: camera rays, configuration, scene
//! loading, rendering with stats, sweeps and EMA update simulation.

pub mod camera;
pub mod config;
pub mod harness;
pub mod output;
pub mod sweep;

pub use camera::generate_rays;
pub use config::{Camera, ConfigFile, EstimatorConfig, SceneConfig};
pub use harness::{
    build_estimator, simulate_updates, warm_grid, RenderReport, RenderStats, Scene, Setup,
    UpdateRow, ORACLE_QUAD, UNBOUNDED_FAR,
};
pub use output::{write_ppm, write_samples_csv, write_updates_csv};
pub use sweep::{run_sweep, write_sweep_csv, SweepRow, SweepSpec};
