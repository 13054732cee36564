use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use skimap::dump::{self, tile_dump, voxel_dump};
use skimap::{Point, SkiMap, VoxelKey};

use crate::bench::{self, BenchOptions};
use crate::build;
use crate::config::RunConfig;
use crate::error::CliError;
use crate::framelog;
use crate::grid2d::Grid2D;
use crate::query::{self, Query};
use crate::scenes::{self, LogOptions, Scene};

#[derive(Debug, Parser)]
#[command(name = "skimap", version, about = "Sparse voxel maps on a tree of skip lists")]
pub struct Cli {
    #[command(flatten)]
    pub overrides: ConfigArgs,
    #[command(subcommand)]
    pub command: Command,
}

/// Run configuration flags. They override values from `--config`.
#[derive(Debug, Args, Default)]
pub struct ConfigArgs {
    /// TOML file with run configuration fields.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Voxel side in meters.
    #[arg(long, global = true)]
    pub resolution: Option<f64>,
    /// Skip list depth: one value for all levels or three for x,y,z.
    #[arg(long, global = true, value_delimiter = ',', num_args = 1..=3)]
    pub depths: Option<Vec<usize>>,
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Frames (re-)integrated per cycle.
    #[arg(long, global = true)]
    pub batch_bound: Option<usize>,
    /// Detect the floor in the first frame and keep ground points as tiles.
    #[arg(long, global = true)]
    pub ground_tracking: bool,
    /// Drop obstacle points above this height (meters, ground frame).
    #[arg(long, global = true)]
    pub ceiling: Option<f64>,
    #[arg(long, global = true)]
    pub ground_threshold: Option<f64>,
    #[arg(long, global = true)]
    pub ground_min_inliers: Option<usize>,
    /// Drop out-of-range points instead of failing.
    #[arg(long, global = true)]
    pub skip_out_of_bounds: bool,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
}

impl ConfigArgs {
    pub fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut c = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(r) = self.resolution {
            c.resolution = r;
        }
        if let Some(d) = &self.depths {
            c.depths = match d.as_slice() {
                [all] => [*all; 3],
                [x, y, z] => [*x, *y, *z],
                _ => return Err(CliError::Usage("--depths takes one or three values".into())),
            };
        }
        if let Some(w) = self.workers {
            c.workers = w;
        }
        if let Some(b) = self.batch_bound {
            c.batch_bound = b;
        }
        c.ground_tracking |= self.ground_tracking;
        if self.ceiling.is_some() {
            c.ceiling = self.ceiling;
        }
        if let Some(t) = self.ground_threshold {
            c.ground_threshold = t;
        }
        if let Some(n) = self.ground_min_inliers {
            c.ground_min_inliers = n;
        }
        c.skip_out_of_bounds |= self.skip_out_of_bounds;
        if let Some(s) = self.seed {
            c.seed = s;
        }
        c.validate()?;
        Ok(c)
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Replay a frame log into a map; writes map.voxels, map.tiles and stats.json.
    Build {
        /// Frame log (defaults to `input` from the config).
        log: Option<PathBuf>,
        /// Output directory (defaults to `output` from the config).
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Query a voxel dump.
    Query {
        voxels: PathBuf,
        #[arg(long)]
        tiles: Option<PathBuf>,
        #[command(subcommand)]
        kind: QueryKind,
    },
    /// Export the 2D navigability grid as PGM plus a JSON sidecar.
    Export2d {
        /// Voxel dump to export.
        #[arg(long, conflicts_with = "log", required_unless_present = "log")]
        voxels: Option<PathBuf>,
        #[arg(long, requires = "voxels")]
        tiles: Option<PathBuf>,
        /// Build from a frame log instead of loading dumps.
        #[arg(long)]
        log: Option<PathBuf>,
        /// PGM path; the sidecar goes next to it with a `.json` extension.
        #[arg(short, long)]
        output: PathBuf,
        /// Also write the full-3D projection grid here, for comparison.
        #[arg(long)]
        oracle: Option<PathBuf>,
    },
    /// Time SkiMap, a dense grid and an octree; sweep skip list depths.
    Bench {
        #[arg(long, default_value_t = 100_000)]
        points: usize,
        #[arg(long, value_delimiter = ',')]
        scenes: Option<Vec<Scene>>,
        #[arg(long, value_delimiter = ',')]
        resolutions: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',')]
        sweep_depths: Option<Vec<usize>>,
        /// Radius queries per scene.
        #[arg(long, default_value_t = 100)]
        queries: usize,
        #[arg(long, value_enum, default_value_t = Suite::All)]
        suite: Suite,
        /// CSV path (stdout if omitted).
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Generate a synthetic scene as a frame log.
    Gen {
        scene: Scene,
        #[arg(long, default_value_t = 10_000)]
        points: usize,
        #[arg(long, default_value_t = 10)]
        frames: usize,
        /// Drift the live poses and append OPT corrections.
        #[arg(long)]
        optimized: bool,
        /// Live-pose drift amplitude (meters and radians).
        #[arg(long, default_value_t = 0.1)]
        drift: f64,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
pub enum QueryKind {
    /// Voxels whose centers lie within RADIUS meters of (X, Y, Z).
    #[command(allow_negative_numbers = true)]
    Radius { x: f64, y: f64, z: f64, radius: f64 },
    /// Voxels within ± (HX, HY, HZ) indices of (IX, IY, IZ).
    #[command(allow_negative_numbers = true)]
    Box {
        ix: i16,
        iy: i16,
        iz: i16,
        hx: u32,
        hy: u32,
        hz: u32,
    },
    /// One voxel, or `miss`.
    #[command(allow_negative_numbers = true)]
    Cell { ix: i16, iy: i16, iz: i16 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Suite {
    Structures,
    Depth,
    All,
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::io(&format!("cannot read {}", path.display()), e))
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::io(&format!("cannot write {}", path.display()), e))
}

fn emit(out: &mut dyn Write, text: &str) -> Result<(), CliError> {
    out.write_all(text.as_bytes())
        .map_err(|e| CliError::io("cannot write output", e))
}

fn load_map(config: &RunConfig, voxels: &Path, tiles: Option<&Path>) -> Result<SkiMap, CliError> {
    let v = read(voxels)?;
    let t = tiles.map(read).transpose()?;
    Ok(dump::load(config.map_config(), &v, t.as_deref())?)
}

fn build_from_log(config: &RunConfig, log: &Path) -> Result<build::BuildOutcome, CliError> {
    let records = framelog::parse(&read(log)?).map_err(|e| CliError::Data(format!("{}: {e}", log.display())))?;
    build::replay(&records, config)
}

/// Parses `args` (program name first) and runs the command, writing normal
/// output to `out`.
pub fn run<I, T>(args: I, out: &mut dyn Write) -> Result<(), CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => return emit(out, &e.render().to_string()),
        Err(e) => return Err(CliError::Usage(e.render().to_string())),
    };
    let mut config = cli.overrides.resolve()?;
    match cli.command {
        Command::Build { log, output } => {
            if log.is_some() {
                config.input = log;
            }
            if output.is_some() {
                config.output = output;
            }
            let log = config
                .input
                .clone()
                .ok_or_else(|| CliError::Usage("build needs a frame log".into()))?;
            let dir = config
                .output
                .clone()
                .ok_or_else(|| CliError::Usage("build needs an output directory (-o)".into()))?;
            let outcome = build_from_log(&config, &log)?;
            fs::create_dir_all(&dir).map_err(|e| CliError::io(&format!("cannot create {}", dir.display()), e))?;
            write(&dir.join("map.voxels"), &voxel_dump(&outcome.map))?;
            write(&dir.join("map.tiles"), &tile_dump(&outcome.map))?;
            let stats = serde_json::to_string_pretty(&outcome.stats).expect("stats serialize");
            write(&dir.join("stats.json"), &stats)?;
            emit(
                out,
                &format!(
                    "{} frames, {} voxels, {} tiles, {} bytes\n",
                    outcome.stats.frames, outcome.stats.voxels, outcome.stats.tiles, outcome.stats.bytes
                ),
            )
        }
        Command::Query { voxels, tiles, kind } => {
            let query = match kind {
                QueryKind::Radius { x, y, z, radius } => Query::Radius {
                    center: Point::new(x, y, z),
                    radius,
                },
                QueryKind::Box { ix, iy, iz, hx, hy, hz } => Query::Box {
                    center: VoxelKey::new(ix, iy, iz),
                    half: [hx, hy, hz],
                },
                QueryKind::Cell { ix, iy, iz } => Query::Cell {
                    key: VoxelKey::new(ix, iy, iz),
                },
            };
            let map = load_map(&config, &voxels, tiles.as_deref())?;
            emit(out, &query::run(&map, &query)?)
        }
        Command::Export2d {
            voxels,
            tiles,
            log,
            output,
            oracle,
        } => {
            let map = match (voxels, log) {
                (Some(v), _) => load_map(&config, &v, tiles.as_deref())?,
                (None, Some(l)) => build_from_log(&config, &l)?.map,
                (None, None) => return Err(CliError::Usage("export2d needs --voxels or --log".into())),
            };
            let grid = Grid2D::from_visit_2d(&map);
            write(&output, &grid.to_pgm())?;
            let image = output
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default();
            let meta = serde_json::to_string_pretty(&grid.metadata(&image, &config)).expect("metadata serializes");
            write(&output.with_extension("json"), &meta)?;
            let mut summary = format!("{} x {} cells", grid.width, grid.height);
            if let Some(path) = oracle {
                let reference = Grid2D::projection_oracle(&map);
                write(&path, &reference.to_pgm())?;
                summary.push_str(if reference == grid {
                    ", oracle: match"
                } else {
                    ", oracle: differs"
                });
            }
            summary.push('\n');
            emit(out, &summary)
        }
        Command::Bench {
            points,
            scenes,
            resolutions,
            sweep_depths,
            queries,
            suite,
            output,
        } => {
            let defaults = BenchOptions::default();
            let options = BenchOptions {
                scenes: scenes.unwrap_or(defaults.scenes),
                resolutions: resolutions.unwrap_or(defaults.resolutions),
                depths: sweep_depths.unwrap_or(defaults.depths),
                points,
                queries,
                structures: suite != Suite::Depth,
                depth_sweep: suite != Suite::Structures,
            };
            if let Some(r) = options.resolutions.iter().find(|r| !(**r > 0.0)) {
                return Err(CliError::Usage(format!("resolutions must be positive, got {r}")));
            }
            if let Some(d) = options.depths.iter().find(|d| !(1..=skimap::skiplist::MAX_LEVEL_CAP).contains(*d)) {
                return Err(CliError::Usage(format!("sweep depth {d} out of range")));
            }
            let rows = bench::run(&options, &config)?;
            let csv = bench::to_csv(&rows, &config);
            match output {
                Some(path) => write(&path, &csv),
                None => emit(out, &csv),
            }
        }
        Command::Gen {
            scene,
            points,
            frames,
            optimized,
            drift,
            output,
        } => {
            if frames == 0 {
                return Err(CliError::Usage("--frames must be positive".into()));
            }
            if !(drift >= 0.0 && drift.is_finite()) {
                return Err(CliError::Usage(format!("--drift must be non-negative, got {drift}")));
            }
            let world = scene.generate(points, config.seed);
            let options = LogOptions {
                frames,
                optimized,
                drift,
            };
            let mut log = format!(
                "# scene: {scene} points: {points} frames: {frames} optimized: {optimized}\n# config: {}\n",
                config.to_json()
            );
            log.push_str(&scenes::frame_log(&world, options, config.seed));
            match output {
                Some(path) => write(&path, &log),
                None => emit(out, &log),
            }
        }
    }
}
