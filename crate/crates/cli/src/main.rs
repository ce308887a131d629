//! `primsdf` command-line front end.
//!
//! Exit codes: 0 success, 1 I/O or solver failure, 2 invalid input (bad
//! flags, corrupt files, invalid primitives), 3 empty input or result,
//! 4 mesh not watertight. stdout carries only machine-readable output.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use primsdf::io::{self, TriangleMesh};
use primsdf::metrics::{self, Reference};
use primsdf::{par, MarchingConfig, Point3, VoxelGrid};

#[derive(Parser)]
#[command(name = "primsdf", version, about = "Superquadric abstraction of signed distance grids")]
struct Cli {
    #[command(subcommand)]
    command: Option<Command>,

    #[command(flatten)]
    config: ConfigArgs,

    /// Worker threads; 0 uses every core.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    /// Print the effective configuration as JSON and exit.
    #[arg(long, global = true)]
    print_config: bool,

    /// Progress messages on stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
}

#[derive(Args)]
struct ConfigArgs {
    #[arg(long, global = true, default_value_t = 1.3)]
    truncation_ratio: f64,
    #[arg(long, global = true, default_value_t = 0.8)]
    alpha: f64,
    #[arg(long = "nc", global = true, default_value_t = 5)]
    n_c: usize,
    #[arg(long, global = true, default_value_t = 0.1)]
    gamma: f64,
    #[arg(long, global = true, default_value_t = 0.01)]
    termination_ratio: f64,
    #[arg(long, global = true, default_value_t = 0.01)]
    p0: f64,
    #[arg(long, global = true, default_value_t = 3.5)]
    activation_ratio: f64,
    #[arg(long, global = true, default_value_t = 40)]
    max_iters: usize,
    #[arg(long, global = true, default_value_t = 1e-3)]
    rel_tol: f64,
    /// EM iterations spent on each relabelled restart candidate; 0 disables
    /// restarts.
    #[arg(long, global = true, default_value_t = 10)]
    restart_iters: usize,
    #[arg(long, global = true)]
    no_axis_restarts: bool,
    #[arg(long, global = true)]
    no_dual_restarts: bool,
    #[arg(long, global = true, default_value_t = 0.05)]
    sigma2_floor_ratio: f64,
    #[arg(long, global = true, default_value_t = 60)]
    lm_max_iters: usize,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
}

impl ConfigArgs {
    fn to_config(&self) -> MarchingConfig {
        MarchingConfig {
            truncation_ratio: self.truncation_ratio,
            alpha: self.alpha,
            n_c: self.n_c,
            gamma: self.gamma,
            termination_ratio: self.termination_ratio,
            p0: self.p0,
            activation_ratio: self.activation_ratio,
            max_iters: self.max_iters,
            rel_tol: self.rel_tol,
            restart_iters: self.restart_iters,
            axis_restarts: !self.no_axis_restarts,
            dual_restarts: !self.no_dual_restarts,
            sigma2_floor_ratio: self.sigma2_floor_ratio,
            lm_max_iters: self.lm_max_iters,
            seed: self.seed,
        }
    }
}

#[derive(Args)]
struct GridArgs {
    /// Grid size, `N` or `NX,NY,NZ`.
    #[arg(long, value_parser = parse_dims, default_value = "64")]
    dims: [usize; 3],
    /// World position of voxel (0, 0, 0), `X,Y,Z`.
    #[arg(long, value_parser = parse_point, allow_hyphen_values = true)]
    origin: Option<Point3>,
    #[arg(long)]
    spacing: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Abstract an SDF grid (MPSF or text) into superquadrics.
    Abstract {
        input: PathBuf,
        /// Primitive JSON array; stdout when omitted.
        #[arg(short, long)]
        out: Option<PathBuf>,
        /// Full result with per-primitive diagnostics.
        #[arg(long)]
        diagnostics: Option<PathBuf>,
    },
    /// Sample the SDF of a primitive JSON array on a grid. Without
    /// `--origin`/`--spacing` the grid spans [-1, 1] along its longest axis.
    Gen {
        primitives: PathBuf,
        #[command(flatten)]
        grid: GridArgs,
        #[arg(short, long)]
        out: PathBuf,
        /// Write the text format instead of MPSF.
        #[arg(long)]
        text: bool,
    },
    /// Score predicted primitives against a reference; report JSON on stdout.
    Eval {
        prediction: PathBuf,
        #[arg(long, group = "truth", required_unless_present_any = ["truth_mesh", "truth_primitives"])]
        truth_sdf: Option<PathBuf>,
        #[arg(long, group = "truth")]
        truth_mesh: Option<PathBuf>,
        #[arg(long, group = "truth")]
        truth_primitives: Option<PathBuf>,
        /// Lattice resolution for IoU.
        #[arg(long, default_value_t = metrics::DEFAULT_GRID_N)]
        grid_n: usize,
        /// Surface sampling spacing; defaults to the grid spacing of an SDF
        /// reference and 0.01 otherwise.
        #[arg(long)]
        spacing: Option<f64>,
    },
    /// Convert a closed triangle mesh (OBJ) to an SDF grid. Without
    /// `--origin`/`--spacing` the grid covers the mesh with a 10% margin.
    Mesh2sdf {
        mesh: PathBuf,
        #[command(flatten)]
        grid: GridArgs,
        #[arg(short, long)]
        out: PathBuf,
        #[arg(long)]
        text: bool,
    },
    /// Write surface samples of a primitive union as `x y z` lines.
    Sample {
        primitives: PathBuf,
        #[arg(long, default_value_t = 0.01)]
        spacing: f64,
        /// stdout when omitted.
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
}

fn parse_dims(s: &str) -> Result<[usize; 3], String> {
    let parts: Vec<usize> = s
        .split(',')
        .map(|p| p.trim().parse::<usize>().map_err(|e| format!("{p:?}: {e}")))
        .collect::<Result<_, _>>()?;
    match parts[..] {
        [n] => Ok([n; 3]),
        [x, y, z] => Ok([x, y, z]),
        _ => Err("expected N or NX,NY,NZ".into()),
    }
}

fn parse_point(s: &str) -> Result<Point3, String> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("{p:?}: {e}")))
        .collect::<Result<_, _>>()?;
    match parts[..] {
        [v] => Ok(Point3::repeat(v)),
        [x, y, z] => Ok(Point3::new(x, y, z)),
        _ => Err("expected V or X,Y,Z".into()),
    }
}

/// Grid placement, falling back to a cube of side `2 * half` around
/// `center` sampled by the largest dimension.
fn placement(grid: &GridArgs, center: Point3, half: f64) -> (Point3, f64) {
    let n = grid.dims.iter().copied().max().unwrap_or(1).max(2);
    let spacing = grid.spacing.unwrap_or(2.0 * half / (n - 1) as f64);
    let origin = grid.origin.unwrap_or_else(|| {
        let extent = Point3::from_fn(|a, _| (grid.dims[a].max(1) - 1) as f64 * spacing);
        center - extent / 2.0
    });
    (origin, spacing)
}

fn require_input(path: &Path) -> anyhow::Result<()> {
    if !path.is_file() {
        return Err(primsdf::Error::Io(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!("{} is not a readable file", path.display()),
        ))
        .into());
    }
    Ok(())
}

fn require_output(path: &Path) -> anyhow::Result<()> {
    let parent = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    if !parent.is_dir() {
        return Err(primsdf::Error::Io(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!("output directory {} does not exist", parent.display()),
        ))
        .into());
    }
    Ok(())
}

/// Writes to stdout; a reader that went away early is not an error.
fn stdout(text: &str) -> anyhow::Result<()> {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    match writeln!(out, "{}", text.trim_end()).and_then(|_| out.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(primsdf::Error::Io(e).into()),
        _ => Ok(()),
    }
}

fn emit(out: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match out {
        Some(p) => fs::write(p, text).map_err(primsdf::Error::Io).with_context(|| format!("writing {}", p.display())),
        None => stdout(text),
    }
}

fn store(grid: &VoxelGrid, out: &Path, text: bool) -> anyhow::Result<()> {
    if text {
        io::store_sdf_text(grid, out)?;
    } else {
        io::store_sdf(grid, out)?;
    }
    Ok(())
}

/// `Some(code)` for outcomes that are not errors but still fail the run.
fn run(cli: &Cli) -> anyhow::Result<Option<u8>> {
    let config = cli.config.to_config();
    config.validate()?;
    if cli.print_config {
        stdout(&serde_json::to_string_pretty(&config)?)?;
        return Ok(None);
    }
    let Some(command) = &cli.command else {
        bail!(primsdf::Error::InvalidArgument("a subcommand is required".into()));
    };
    match command {
        Command::Abstract { input, out, diagnostics } => {
            require_input(input)?;
            for p in out.iter().chain(diagnostics) {
                require_output(p)?;
            }
            let grid = io::load_sdf(input).with_context(|| format!("loading {}", input.display()))?;
            if cli.verbose {
                eprintln!("loaded {:?} grid, spacing {}", grid.dims(), grid.spacing());
            }
            let interior = grid.values().iter().any(|&v| v <= 0.0);
            if !interior {
                eprintln!("warning: the SDF has no interior voxels; writing an empty primitive list");
            }
            let result = primsdf::march(&grid, &config)?;
            if cli.verbose {
                eprintln!(
                    "{} primitives in {} rounds ({} removed) in {:.2?}",
                    result.primitives.len(),
                    result.rounds,
                    result.removed,
                    result.wall_time
                );
            }
            emit(out.as_deref(), &io::primitives_to_json(&result.primitives))?;
            if let Some(d) = diagnostics {
                emit(Some(d), &serde_json::to_string_pretty(&result)?)?;
            }
            if interior && result.primitives.is_empty() {
                eprintln!("error: no primitive survived although the SDF has an interior");
                return Ok(Some(3));
            }
        }
        Command::Gen { primitives, grid, out, text } => {
            require_input(primitives)?;
            require_output(out)?;
            let prims = io::load_primitives(primitives)?;
            let (origin, spacing) = placement(grid, Point3::zeros(), 1.0);
            let sdf = io::gen_superquadric_sdf(&prims, grid.dims, origin, spacing)?;
            store(&sdf, out, *text)?;
            if cli.verbose {
                eprintln!("wrote {:?} grid to {}", sdf.dims(), out.display());
            }
        }
        Command::Eval {
            prediction,
            truth_sdf,
            truth_mesh,
            truth_primitives,
            grid_n,
            spacing,
        } => {
            require_input(prediction)?;
            for p in [truth_sdf, truth_mesh, truth_primitives].into_iter().flatten() {
                require_input(p)?;
            }
            let pred = io::load_primitives(prediction)?;
            let report = if let Some(p) = truth_sdf {
                let g = io::load_sdf(p)?;
                let s = spacing.unwrap_or(g.spacing());
                metrics::evaluate(&pred, Reference::Sdf(&g), s, *grid_n, config.seed)?
            } else if let Some(p) = truth_mesh {
                let m = TriangleMesh::load_obj(p)?;
                metrics::evaluate(&pred, Reference::Mesh(&m), spacing.unwrap_or(0.01), *grid_n, config.seed)?
            } else if let Some(p) = truth_primitives {
                let t = io::load_primitives(p)?;
                metrics::evaluate(&pred, Reference::Primitives(&t), spacing.unwrap_or(0.01), *grid_n, config.seed)?
            } else {
                bail!(primsdf::Error::InvalidArgument("a truth source is required".into()));
            };
            stdout(&serde_json::to_string(&report)?)?;
        }
        Command::Mesh2sdf { mesh, grid, out, text } => {
            require_input(mesh)?;
            require_output(out)?;
            let m = TriangleMesh::load_obj(mesh)?;
            let (lo, hi) = m.vertices().iter().fold(
                (Point3::repeat(f64::INFINITY), Point3::repeat(f64::NEG_INFINITY)),
                |(lo, hi), v| (lo.inf(v), hi.sup(v)),
            );
            let half = 0.5 * (hi - lo).max() * 1.1;
            let (origin, spacing) = placement(grid, (lo + hi) / 2.0, half);
            let sdf = io::mesh_to_sdf(&m, grid.dims, origin, spacing)?;
            store(&sdf, out, *text)?;
            if cli.verbose {
                eprintln!("wrote {:?} grid to {}", sdf.dims(), out.display());
            }
        }
        Command::Sample { primitives, spacing, out } => {
            require_input(primitives)?;
            if let Some(o) = out {
                require_output(o)?;
            }
            let prims = io::load_primitives(primitives)?;
            let points = metrics::predicted_surface_points(&prims, *spacing, config.seed)?;
            emit(out.as_deref(), &points.to_xyz())?;
        }
    }
    Ok(None)
}

fn exit_code(err: &anyhow::Error) -> u8 {
    use primsdf::Error as E;
    match err.chain().find_map(|e| e.downcast_ref::<E>()) {
        Some(E::Io(_)) | Some(E::Solver { .. }) | Some(E::Initialization(_)) => 1,
        Some(E::Empty(_)) => 3,
        Some(E::NotWatertight { .. }) => 4,
        Some(_) => 2,
        None if err.chain().any(|e| e.is::<std::io::Error>()) => 1,
        None => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match par::with_threads(cli.threads, || run(&cli)) {
        Ok(None) => ExitCode::SUCCESS,
        Ok(Some(code)) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
