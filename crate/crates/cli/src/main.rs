use std::fs::File;
use std::io::{BufWriter, IsTerminal, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use volest::estimator::EstimatorKind;
use volest_cli::config::{parse_rgb, parse_vec3, patched};
use volest_cli::{
    run_sweep, simulate_updates, write_ppm, write_samples_csv, write_sweep_csv, write_updates_csv,
    ConfigFile, EstimatorConfig, Scene, SceneConfig, Setup, SweepSpec, ORACLE_QUAD,
};

#[derive(Parser)]
#[command(
    name = "volest",
    version,
    about = "Transmittance-estimator sampling and volume rendering"
)]
struct Cli {
    /// Worker threads (default: all cores). Output does not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a scene to a PPM image and print JSON stats.
    Render {
        #[command(flatten)]
        common: Common,
        /// Output image (P6 PPM).
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long, default_value_t = ORACLE_QUAD)]
        oracle_quad: usize,
        /// Report null wall time so output is reproducible.
        #[arg(long)]
        no_timing: bool,
    },
    /// Render one row per configuration of a sweep and write a CSV.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Sweep spec JSON; may instead be given as `sweep` in --config.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long, default_value_t = ORACLE_QUAD)]
        oracle_quad: usize,
        /// Leave wall_time_ms empty so output is reproducible.
        #[arg(long)]
        no_timing: bool,
    },
    /// Run EMA updates from a cold occupancy grid and log convergence.
    SimulateUpdates {
        #[command(flatten)]
        common: Common,
        /// Number of updates after the cold start.
        #[arg(long, default_value_t = 50)]
        steps: usize,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Write the post-filter samples of a render as CSV.
    DumpSamples {
        #[command(flatten)]
        common: Common,
        #[arg(short, long)]
        output: PathBuf,
    },
}

#[derive(Args)]
struct Common {
    /// JSON file with optional `scene` and `estimator` objects; overrides flags.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    scene: SceneArgs,
    #[command(flatten)]
    estimator: EstimatorArgs,
}

#[derive(Args)]
struct SceneArgs {
    /// Analytic scene JSON or `.vox3` file.
    #[arg(long)]
    scene: Option<PathBuf>,
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    height: Option<usize>,
    /// Vertical field of view in degrees.
    #[arg(long)]
    fov: Option<f64>,
    /// Camera position `x,y,z`.
    #[arg(long, value_parser = parse_vec3, allow_hyphen_values = true)]
    position: Option<volest::geometry::Vec3>,
    #[arg(long, value_parser = parse_vec3, allow_hyphen_values = true)]
    look_at: Option<volest::geometry::Vec3>,
    #[arg(long, value_parser = parse_vec3, allow_hyphen_values = true)]
    up: Option<volest::geometry::Vec3>,
    #[arg(long)]
    t_near: Option<f64>,
    #[arg(long)]
    t_far: Option<f64>,
    #[arg(long)]
    unbounded: bool,
    /// Background colour `r,g,b`.
    #[arg(long, value_parser = parse_rgb)]
    background: Option<[f64; 3]>,
}

#[derive(Args)]
struct EstimatorArgs {
    /// uniform, occupancy, pdf or combined.
    #[arg(long)]
    estimator: Option<EstimatorKind>,
    /// Samples per ray (N).
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    no_stratified: bool,
    #[arg(long)]
    filter_threshold: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Occupancy grid resolution (L).
    #[arg(long)]
    grid_resolution: Option<usize>,
    /// Occupancy threshold (tau).
    #[arg(long)]
    tau: Option<f64>,
    /// EMA decay (gamma).
    #[arg(long)]
    ema_decay: Option<f64>,
    /// Marching step; 0 disables it.
    #[arg(long)]
    march_step: Option<f64>,
    #[arg(long)]
    jitter: Option<f64>,
    /// EMA updates before rendering (W).
    #[arg(long)]
    warmup: Option<usize>,
    #[arg(long)]
    coarse_resolution: Option<usize>,
    #[arg(long)]
    n_coarse: Option<usize>,
}

macro_rules! set {
    ($dst:expr, $src:expr) => {
        if let Some(v) = $src {
            $dst = v;
        }
    };
}

impl Common {
    fn resolve(&self) -> Result<(SceneConfig, EstimatorConfig, ConfigFile)> {
        let s = &self.scene;
        let mut scene = SceneConfig::default();
        set!(scene.scene, s.scene.clone());
        set!(scene.camera.width, s.width);
        set!(scene.camera.height, s.height);
        set!(scene.camera.fov_deg, s.fov);
        set!(scene.camera.position, s.position);
        set!(scene.camera.look_at, s.look_at);
        set!(scene.camera.up, s.up);
        set!(scene.t_near, s.t_near);
        scene.t_far = s.t_far;
        scene.unbounded = s.unbounded;
        set!(scene.background, s.background);

        let e = &self.estimator;
        let mut est = EstimatorConfig::default();
        set!(est.kind, e.estimator);
        set!(est.n_samples, e.samples);
        est.stratified = !e.no_stratified;
        set!(est.filter_threshold, e.filter_threshold);
        set!(est.seed, e.seed);
        set!(est.resolution, e.grid_resolution);
        set!(est.threshold, e.tau);
        set!(est.ema_decay, e.ema_decay);
        set!(est.march_step, e.march_step);
        set!(est.jitter, e.jitter);
        set!(est.warmup, e.warmup);
        set!(est.coarse_resolution, e.coarse_resolution);
        set!(est.n_coarse, e.n_coarse);

        let file = match &self.config {
            Some(path) => ConfigFile::load(path)?,
            None => ConfigFile::default(),
        };
        let scene = patched(&scene, &file.scene).context("config file `scene` section")?;
        let est = patched(&est, &file.estimator).context("config file `estimator` section")?;
        scene.validate()?;
        est.validate()?;
        Ok((scene, est, file))
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Render {
            common,
            output,
            oracle_quad,
            no_timing,
        } => {
            let (scene, est, _) = common.resolve()?;
            let setup = Setup::load(scene)?;
            let report = setup.render(&est)?;
            let oracle = setup.oracle(oracle_quad);
            let stats = report.stats(&oracle, !no_timing)?;
            write_ppm(&report.image, create(&output)?)?;
            println!("{}", serde_json::to_string(&stats)?);
        }
        Command::Sweep {
            common,
            spec,
            output,
            oracle_quad,
            no_timing,
        } => {
            let (scene, est, file) = common.resolve()?;
            let spec: SweepSpec = match (spec, file.sweep) {
                (Some(path), _) => {
                    let text = std::fs::read_to_string(&path)
                        .with_context(|| format!("reading {}", path.display()))?;
                    serde_json::from_str(&text)
                        .with_context(|| format!("parsing {}", path.display()))?
                }
                (None, Some(v)) => {
                    serde_json::from_value(v).context("config file `sweep` section")?
                }
                (None, None) => {
                    anyhow::bail!("sweep needs --spec or a `sweep` section in --config")
                }
            };
            let setup = Setup::load(scene)?;
            let rows = run_sweep(&setup, &est, &spec, oracle_quad, !no_timing)?;
            write_sweep_csv(&rows, create(&output)?)?;
        }
        Command::SimulateUpdates {
            common,
            steps,
            output,
        } => {
            let (scene_cfg, est, _) = common.resolve()?;
            if est.kind != EstimatorKind::Occupancy {
                return Err(UsageError(format!(
                    "simulate-updates needs --estimator occupancy, got {}",
                    est.kind
                ))
                .into());
            }
            let scene = Scene::load(&scene_cfg.scene)?;
            let rows = simulate_updates(&scene, &est, steps)?;
            write_updates_csv(&rows, create(&output)?)?;
        }
        Command::DumpSamples { common, output } => {
            let (scene, est, _) = common.resolve()?;
            let setup = Setup::load(scene)?;
            let report = setup.render(&est)?;
            let mut out = create(&output)?;
            write_samples_csv(&report.samples, &mut out)?;
            out.flush()?;
        }
    }
    Ok(())
}

#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            eprintln!("{}: {e}", label());
            return ExitCode::from(2);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}: {e:#}", label());
            if e.is::<UsageError>() {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}

fn label() -> &'static str {
    if std::env::var_os("NO_COLOR").is_none() && std::io::stderr().is_terminal() {
        "\x1b[1;31merror\x1b[0m"
    } else {
        "error"
    }
}
