//! Command-line runner: expansions, cluster sweeps, noise studies, and
//! oracle tables, emitted as plot-ready CSV/JSON.
//!
//! Exit codes: 0 success, 2 usage error, 3 numerical failure under
//! `--strict`. A `--config` file supplies key=value defaults for any
//! long flag; explicit flags win.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Mutex;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use tfim_nlce::io::{
    read_reference_csv, write_noise_csv, write_sweep_csv, Checkpoint, CheckpointRecord,
};
use tfim_nlce::lattice::Cluster;
use tfim_nlce::model::TfimParams;
use tfim_nlce::nlce::{
    assemble, build_plan, run_nlce, ClusterDiagnostic, Lattice, NlceConfig, NlceResult, SolverKind,
};
use tfim_nlce::ansatz::Tying;
use tfim_nlce::noise::{scaling_study, NoiseScaling, NoiseStudyConfig};
use tfim_nlce::optimize::{solve_cluster, GridSolve, LayerRule, SolveOptions};
use tfim_nlce::quadrature::exact_chain_energy;
use tfim_nlce::reference::{ed_ground_energy, square_reference};

#[derive(Parser)]
#[command(name = "tfim-nlce", version, about = "TFIM linked-cluster expansion runner")]
struct Cli {
    /// key=value file supplying defaults for any long flag of the
    /// invoked command.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Directory for emitted files.
    #[arg(long, global = true, env = "TFIM_NLCE_OUTDIR", value_name = "DIR")]
    outdir: Option<PathBuf>,
    /// Worker threads for cluster solves (default: all cores).
    #[arg(long, global = true, value_name = "K")]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Enumerate the cluster plan and write it as JSON.
    Clusters(ClustersArgs),
    /// Solve one cluster over a coupling grid.
    Solve(SolveArgs),
    /// Run a full expansion and write per-order estimates.
    Nlce(NlceArgs),
    /// Monte Carlo noise propagation vs truncation order.
    Noise(NoiseArgs),
    /// Reference tables: exact chain energies, square-lattice constants.
    Oracle(OracleArgs),
}

#[derive(Args)]
struct ClustersArgs {
    /// chain | square
    #[arg(long)]
    lattice: Option<String>,
    #[arg(long, value_name = "N")]
    n_max: Option<usize>,
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long)]
    lx: Option<usize>,
    #[arg(long)]
    ly: Option<usize>,
    /// ed | vqe
    #[arg(long)]
    solver: Option<String>,
    #[command(flatten)]
    grid: GridArgs,
    #[command(flatten)]
    vqe: VqeArgs,
    /// csv | json
    #[arg(long)]
    format: Option<String>,
    /// Exit 3 when any grid point fails to converge.
    #[arg(long)]
    strict: bool,
}

#[derive(Args)]
struct NlceArgs {
    /// chain | square
    #[arg(long)]
    lattice: Option<String>,
    #[arg(long, value_name = "N")]
    n_max: Option<usize>,
    /// ed | vqe | hybrid
    #[arg(long)]
    solver: Option<String>,
    /// Clusters up to this many sites use ED under --solver hybrid.
    #[arg(long, value_name = "N")]
    ed_max_sites: Option<usize>,
    #[command(flatten)]
    grid: GridArgs,
    #[command(flatten)]
    vqe: VqeArgs,
    /// `exact` (chain only) or a CSV of (J/h, energy) pairs; adds a
    /// rel_error column.
    #[arg(long, value_name = "REF")]
    reference: Option<String>,
    /// JSONL store; completed (cluster, grid point) solves are reused.
    #[arg(long, value_name = "FILE")]
    checkpoint: Option<PathBuf>,
    /// Exit 3 when any cluster fails to converge.
    #[arg(long)]
    strict: bool,
}

#[derive(Args)]
struct NoiseArgs {
    /// chain | square
    #[arg(long)]
    lattice: Option<String>,
    /// Comma-separated truncation orders, e.g. 4,8,12.
    #[arg(long, value_name = "LIST")]
    orders: Option<String>,
    /// Comma-separated subset of constant,sqrtn,linearn (default all).
    #[arg(long, value_name = "LIST")]
    modes: Option<String>,
    #[arg(long, value_name = "S")]
    sigma: Option<f64>,
    #[arg(long, value_name = "N")]
    samples: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Coupling J/h (default: the lattice's critical point).
    #[arg(long, value_name = "J")]
    at: Option<f64>,
}

#[derive(Args)]
struct OracleArgs {
    /// chain | square
    #[arg(long)]
    lattice: Option<String>,
    #[command(flatten)]
    grid: GridArgs,
}

/// Coupling grid: a range or a single point.
#[derive(Args)]
struct GridArgs {
    /// start:stop[:step] in J/h (step defaults to 0.02).
    #[arg(long, value_name = "RANGE")]
    grid: Option<String>,
    /// Single coupling J/h.
    #[arg(long, value_name = "J")]
    at: Option<f64>,
}

/// Variational pipeline knobs shared by solve and nlce.
#[derive(Args)]
struct VqeArgs {
    /// Fixed layer count (default: ceil(N/2) per cluster).
    #[arg(long, value_name = "L")]
    layers: Option<usize>,
    /// Signed offset from ceil(N/2), e.g. -1.
    #[arg(long, value_name = "K", allow_hyphen_values = true)]
    layers_offset: Option<isize>,
    /// pointgroup | translational | none
    #[arg(long)]
    tying: Option<String>,
    /// Coupling where the periodic seed bridges onto the cluster.
    #[arg(long, value_name = "J")]
    bridge: Option<f64>,
    /// Extra optimizer runs from perturbations of the best point.
    #[arg(long, value_name = "R")]
    restarts: Option<usize>,
    #[arg(long, value_name = "X")]
    restart_scale: Option<f64>,
    /// Iteration budget per optimizer run.
    #[arg(long, value_name = "N")]
    max_iters: Option<usize>,
    /// Convergence threshold on the gradient infinity norm.
    #[arg(long, value_name = "G")]
    grad_tol: Option<f64>,
}

enum Failure {
    /// Bad flags, bad config, bad file contents the user pointed at.
    Usage(String),
    /// Solver non-convergence surfaced by --strict.
    Numerical(String),
    /// Underlying I/O or solver error.
    Other(tfim_nlce::Error),
}

impl From<tfim_nlce::Error> for Failure {
    fn from(e: tfim_nlce::Error) -> Self {
        Failure::Other(e)
    }
}

fn usage<T>(msg: impl Into<String>) -> Result<T, Failure> {
    Err(Failure::Usage(msg.into()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        // Ignored if a pool already exists (tests call run twice).
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global();
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Numerical(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
        Err(Failure::Other(e)) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let config = match &cli.config {
        Some(path) => load_config(path)?,
        None => BTreeMap::new(),
    };
    let outdir = cli
        .outdir
        .clone()
        .or_else(|| config.get("outdir").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&outdir).map_err(tfim_nlce::Error::from)?;

    match cli.command {
        Command::Clusters(a) => cmd_clusters(a, &config, &outdir),
        Command::Solve(a) => cmd_solve(a, &config, &outdir),
        Command::Nlce(a) => cmd_nlce(a, &config, &outdir),
        Command::Noise(a) => cmd_noise(a, &config, &outdir),
        Command::Oracle(a) => cmd_oracle(a, &config, &outdir),
    }
}

// ---- config file -------------------------------------------------------

fn load_config(path: &Path) -> Result<BTreeMap<String, String>, Failure> {
    let text = fs::read_to_string(path)
        .map_err(|e| Failure::Usage(format!("cannot read config {}: {e}", path.display())))?;
    let mut map = BTreeMap::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return usage(format!(
                "config line {}: expected key=value, got {line:?}",
                idx + 1
            ));
        };
        map.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(map)
}

/// Flag value with config-file fallback: explicit flags win.
fn resolve<T: Clone>(
    flag: &Option<T>,
    config: &BTreeMap<String, String>,
    key: &str,
    parse: impl Fn(&str) -> Result<T, String>,
) -> Result<Option<T>, Failure> {
    if let Some(v) = flag {
        return Ok(Some(v.clone()));
    }
    match config.get(key) {
        Some(raw) => parse(raw)
            .map(Some)
            .map_err(|e| Failure::Usage(format!("config {key}={raw}: {e}"))),
        None => Ok(None),
    }
}

/// Same, for string flags carrying a domain value that needs parsing
/// wherever it came from.
fn resolve_parsed<T>(
    flag: &Option<String>,
    config: &BTreeMap<String, String>,
    key: &str,
    parse: impl Fn(&str) -> Result<T, String>,
) -> Result<Option<T>, Failure> {
    let raw = flag.clone().or_else(|| config.get(key).cloned());
    match raw {
        Some(s) => parse(&s)
            .map(Some)
            .map_err(|e| Failure::Usage(format!("{key} {s:?}: {e}"))),
        None => Ok(None),
    }
}

fn parse_num<T: std::str::FromStr>(s: &str) -> Result<T, String>
where
    T::Err: std::fmt::Display,
{
    s.parse().map_err(|e| format!("{e}"))
}

fn required<T>(v: Option<T>, what: &str) -> Result<T, Failure> {
    v.ok_or_else(|| Failure::Usage(format!("missing required option {what}")))
}

// ---- shared parsing ----------------------------------------------------

fn parse_lattice(name: &str) -> Result<Lattice, String> {
    match name {
        "chain" => Ok(Lattice::Chain),
        "square" => Ok(Lattice::Square),
        other => Err(format!("unsupported lattice {other:?} (chain | square)")),
    }
}

fn parse_tying(name: &str) -> Result<Tying, String> {
    match name {
        "pointgroup" => Ok(Tying::PointGroup),
        "translational" => Ok(Tying::Translational),
        "none" => Ok(Tying::None),
        other => Err(format!(
            "unknown tying {other:?} (pointgroup | translational | none)"
        )),
    }
}

fn parse_mode(name: &str) -> Result<NoiseScaling, String> {
    match name {
        "constant" => Ok(NoiseScaling::Constant),
        "sqrtn" => Ok(NoiseScaling::SqrtN),
        "linearn" => Ok(NoiseScaling::LinearN),
        other => Err(format!(
            "unknown noise mode {other:?} (constant | sqrtn | linearn)"
        )),
    }
}

/// Inclusive ascending grid from `start:stop[:step]`.
fn parse_grid_range(spec: &str) -> Result<Vec<f64>, String> {
    let parts: Vec<&str> = spec.split(':').collect();
    let (start, stop, step) = match parts.as_slice() {
        [a, b] => (a, b, None),
        [a, b, s] => (a, b, Some(*s)),
        _ => return Err("expected start:stop[:step]".into()),
    };
    let start: f64 = start.parse().map_err(|e| format!("start: {e}"))?;
    let stop: f64 = stop.parse().map_err(|e| format!("stop: {e}"))?;
    let step: f64 = match step {
        Some(s) => s.parse().map_err(|e| format!("step: {e}"))?,
        None => 0.02,
    };
    if !(step > 0.0) {
        return Err("grid step must be > 0".into());
    }
    if stop < start {
        return Err("grid stop must be >= start".into());
    }
    let count = ((stop - start) / step + 0.5).floor() as usize + 1;
    let mut grid: Vec<f64> = (0..count).map(|i| start + i as f64 * step).collect();
    while grid.last().is_some_and(|&j| j > stop + 1e-9 * step) {
        grid.pop();
    }
    Ok(grid)
}

impl GridArgs {
    fn resolve(&self, config: &BTreeMap<String, String>) -> Result<Vec<f64>, Failure> {
        let range = resolve(&self.grid, config, "grid", |s| Ok(s.to_string()))?;
        let at = resolve(&self.at, config, "at", parse_num::<f64>)?;
        match (range, at) {
            (Some(_), Some(_)) => usage("--grid and --at are mutually exclusive"),
            (Some(spec), None) => {
                parse_grid_range(&spec).map_err(|e| Failure::Usage(format!("--grid {spec}: {e}")))
            }
            (None, Some(j)) => Ok(vec![j]),
            (None, None) => usage("supply --grid start:stop[:step] or --at J"),
        }
    }
}

impl VqeArgs {
    fn resolve(&self, config: &BTreeMap<String, String>) -> Result<SolveOptions<f64>, Failure> {
        let layers = resolve(&self.layers, config, "layers", parse_num::<usize>)?;
        let offset = resolve(&self.layers_offset, config, "layers-offset", parse_num::<isize>)?;
        let layer_rule = match (layers, offset) {
            (Some(_), Some(_)) => {
                return usage("--layers and --layers-offset are mutually exclusive")
            }
            (Some(l), None) => LayerRule::Fixed(l),
            (None, Some(k)) => LayerRule::Offset(k),
            (None, None) => LayerRule::Auto,
        };
        let tying = resolve_parsed(&self.tying, config, "tying", parse_tying)?
            .unwrap_or(Tying::PointGroup);
        let mut opts = SolveOptions::<f64> {
            tying,
            layers: layer_rule,
            ..SolveOptions::default()
        };
        if let Some(b) = resolve(&self.bridge, config, "bridge", parse_num::<f64>)? {
            opts.bridge_coupling = b;
        }
        if let Some(r) = resolve(&self.restarts, config, "restarts", parse_num::<usize>)? {
            opts.optim.restarts = r;
        }
        if let Some(x) = resolve(&self.restart_scale, config, "restart-scale", parse_num::<f64>)? {
            opts.optim.restart_scale = x;
        }
        if let Some(n) = resolve(&self.max_iters, config, "max-iters", parse_num::<usize>)? {
            opts.optim.max_iter = n;
        }
        if let Some(g) = resolve(&self.grad_tol, config, "grad-tol", parse_num::<f64>)? {
            opts.optim.gradient_tolerance = g;
        }
        Ok(opts)
    }

    fn describe(opts: &SolveOptions<f64>) -> serde_json::Value {
        let layers = match opts.layers {
            LayerRule::Auto => serde_json::json!("auto"),
            LayerRule::Fixed(l) => serde_json::json!(l),
            LayerRule::Offset(k) => serde_json::json!(format!("auto{k:+}")),
        };
        serde_json::json!({
            "layers": layers,
            "tying": format!("{:?}", opts.tying).to_lowercase(),
            "bridge": opts.bridge_coupling,
            "restarts": opts.optim.restarts,
            "restart_scale": opts.optim.restart_scale,
        })
    }
}

// ---- clusters ----------------------------------------------------------

fn cmd_clusters(
    args: ClustersArgs,
    config: &BTreeMap<String, String>,
    outdir: &Path,
) -> Result<(), Failure> {
    let lattice = required(
        resolve_parsed(&args.lattice, config, "lattice", parse_lattice)?,
        "--lattice",
    )?;
    let n_max = required(resolve(&args.n_max, config, "n-max", parse_num)?, "--n-max")?;
    if n_max < 1 {
        return usage("--n-max must be at least 1");
    }
    let plan = build_plan(lattice, n_max)?;

    println!("cluster  sites  weight  subclusters");
    for e in plan.entries() {
        println!(
            "{:>2}x{:<5} {:>5} {:>7} {:>12}",
            e.shape.0,
            e.shape.1,
            e.n_sites(),
            e.weight,
            e.subclusters.len()
        );
    }

    let name = format!("plan_{}_{}.json", lattice_name(lattice), n_max);
    let path = outdir.join(name);
    let doc = serde_json::json!({
        "config": {"lattice": lattice_name(lattice), "n_max": n_max, "seed": null},
        "plan": plan,
    });
    fs::write(&path, serde_json::to_string_pretty(&doc).map_err(tfim_nlce::Error::from)?)
        .map_err(tfim_nlce::Error::from)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn lattice_name(lattice: Lattice) -> &'static str {
    match lattice {
        Lattice::Chain => "chain",
        Lattice::Square => "square",
    }
}

// ---- solve -------------------------------------------------------------

fn cmd_solve(
    args: SolveArgs,
    config: &BTreeMap<String, String>,
    outdir: &Path,
) -> Result<(), Failure> {
    let lx = required(resolve(&args.lx, config, "lx", parse_num)?, "--lx")?;
    let ly = required(resolve(&args.ly, config, "ly", parse_num)?, "--ly")?;
    let solver = required(
        resolve(&args.solver, config, "solver", |s| Ok(s.to_string()))?,
        "--solver",
    )?;
    let grid = args.grid.resolve(config)?;
    let opts = args.vqe.resolve(config)?;
    let format = resolve(&args.format, config, "format", |s| Ok(s.to_string()))?
        .unwrap_or_else(|| "csv".into());
    let strict = args.strict || config.get("strict").is_some_and(|v| v.as_str() == "true");

    let cluster = Cluster::open(lx, ly)?;
    let (records, layers) = match solver.as_str() {
        "ed" => {
            let records = grid
                .iter()
                .map(|&j| {
                    Ok(GridSolve {
                        j_over_h: j,
                        energy: ed_ground_energy(&cluster, TfimParams::new(j, 1.0))?,
                        grad_norm: 0.0,
                        iterations: 0,
                        converged: true,
                        theta: Vec::new(),
                    })
                })
                .collect::<Result<Vec<_>, tfim_nlce::Error>>()?;
            (records, 0)
        }
        "vqe" => {
            let layers = opts.layers.layers(&cluster);
            (solve_cluster(&cluster, &grid, &opts)?, layers)
        }
        other => return usage(format!("unknown solver {other:?} (ed | vqe)")),
    };

    let run_config = serde_json::json!({
        "command": "solve",
        "lx": lx, "ly": ly, "solver": solver,
        "grid": grid,
        "vqe": VqeArgs::describe(&opts),
        "seed": null,
    });
    let stem = format!("sweep_{lx}x{ly}_{solver}");
    match format.as_str() {
        "csv" => {
            let path = outdir.join(format!("{stem}.csv"));
            write_sweep_csv(&path, &run_config, (lx, ly), layers, &records)?;
            println!("wrote {}", path.display());
        }
        "json" => {
            let path = outdir.join(format!("{stem}.json"));
            let doc = serde_json::json!({"config": run_config, "records": records});
            fs::write(
                &path,
                serde_json::to_string_pretty(&doc).map_err(tfim_nlce::Error::from)?,
            )
            .map_err(tfim_nlce::Error::from)?;
            println!("wrote {}", path.display());
        }
        other => return usage(format!("unknown format {other:?} (csv | json)")),
    }

    let bad = records.iter().filter(|r| !r.converged).count();
    println!("points {} non-converged {bad}", records.len());
    if strict && bad > 0 {
        return Err(Failure::Numerical(format!(
            "{bad} grid points failed to converge"
        )));
    }
    Ok(())
}

// ---- nlce --------------------------------------------------------------

fn cmd_nlce(
    args: NlceArgs,
    config: &BTreeMap<String, String>,
    outdir: &Path,
) -> Result<(), Failure> {
    let lattice = required(
        resolve_parsed(&args.lattice, config, "lattice", parse_lattice)?,
        "--lattice",
    )?;
    let n_max = required(resolve(&args.n_max, config, "n-max", parse_num)?, "--n-max")?;
    if n_max < 1 {
        return usage("--n-max must be at least 1");
    }
    let solver_name = resolve(&args.solver, config, "solver", |s| Ok(s.to_string()))?
        .unwrap_or_else(|| "ed".into());
    let ed_max_sites = resolve(&args.ed_max_sites, config, "ed-max-sites", parse_num)?;
    let solver = match solver_name.as_str() {
        "ed" => SolverKind::Ed,
        "vqe" => SolverKind::Vqe,
        "hybrid" => SolverKind::Hybrid {
            ed_max_sites: required(ed_max_sites, "--ed-max-sites (with --solver hybrid)")?,
        },
        other => return usage(format!("unknown solver {other:?} (ed | vqe | hybrid)")),
    };
    let grid = args.grid.resolve(config)?;
    let solve = args.vqe.resolve(config)?;
    let reference = resolve(&args.reference, config, "reference", |s| Ok(s.to_string()))?;
    let checkpoint = resolve(&args.checkpoint, config, "checkpoint", |s| {
        Ok(PathBuf::from(s))
    })?;
    let strict = args.strict || config.get("strict").is_some_and(|v| v.as_str() == "true");

    // Resolve the reference before the long solve.
    let reference_at = match reference.as_deref() {
        None => None,
        Some("exact") => {
            if lattice != Lattice::Chain {
                return usage(
                    "--reference exact is chain-only; supply a reference CSV for 2D error columns",
                );
            }
            let refs = grid
                .iter()
                .map(|&j| exact_chain_energy(j, 1.0))
                .collect::<Result<Vec<f64>, _>>()?;
            Some(refs)
        }
        Some(path) => {
            let pairs = read_reference_csv::<f64>(Path::new(path))?;
            let refs = grid
                .iter()
                .map(|&j| {
                    pairs
                        .iter()
                        .find(|(jr, _)| (jr - j).abs() < 1e-9)
                        .map(|&(_, e)| e)
                        .ok_or_else(|| {
                            Failure::Usage(format!("reference file has no entry for J/h = {j}"))
                        })
                })
                .collect::<Result<Vec<f64>, Failure>>()?;
            Some(refs)
        }
    };

    let cfg = NlceConfig {
        solver,
        solve,
        ed_check_max_sites: 14,
    };
    let result = match &checkpoint {
        None => run_nlce(lattice, n_max, &grid, &cfg)?,
        Some(path) => nlce_with_checkpoint(lattice, n_max, &grid, &cfg, path)?,
    };

    let run_config = serde_json::json!({
        "command": "nlce",
        "lattice": lattice_name(lattice), "n_max": n_max,
        "solver": solver_name, "ed_max_sites": ed_max_sites,
        "grid": grid,
        "vqe": VqeArgs::describe(&cfg.solve),
        "reference": reference,
        "seed": null,
    });

    let stem = format!("nlce_{}_{}_{}", lattice_name(lattice), n_max, solver_name);
    let csv_path = outdir.join(format!("{stem}.csv"));
    write_nlce_csv_with_errors(&csv_path, &run_config, &result, reference_at.as_deref())?;
    println!("wrote {}", csv_path.display());
    let json_path = outdir.join(format!("{stem}.json"));
    tfim_nlce::io::write_nlce_json(&json_path, &run_config, &result)?;
    println!("wrote {}", json_path.display());

    let bad: Vec<_> = result
        .diagnostics
        .iter()
        .filter(|d| !d.converged)
        .map(|d| format!("{}x{}", d.shape.0, d.shape.1))
        .collect();
    println!(
        "clusters {} non-converged {}",
        result.diagnostics.len(),
        bad.len()
    );
    for shape in result.flagged_clusters() {
        println!(
            "warning: {}x{} exceeds ED by more than 1e-6",
            shape.0, shape.1
        );
    }
    if strict && !bad.is_empty() {
        return Err(Failure::Numerical(format!(
            "clusters failed to converge: {}",
            bad.join(", ")
        )));
    }
    Ok(())
}

/// The series CSV, with a rel_error column when a reference is given.
fn write_nlce_csv_with_errors(
    path: &Path,
    config: &serde_json::Value,
    result: &NlceResult<f64>,
    reference_at: Option<&[f64]>,
) -> Result<(), Failure> {
    match reference_at {
        None => tfim_nlce::io::write_nlce_csv(path, config, result)?,
        Some(refs) => {
            use std::io::Write as _;
            let solver = match result.solver {
                SolverKind::Ed => "ed",
                SolverKind::Vqe => "vqe",
                SolverKind::Hybrid { .. } => "hybrid",
            };
            let mut w = std::io::BufWriter::new(
                fs::File::create(path).map_err(tfim_nlce::Error::from)?,
            );
            let io_err = tfim_nlce::Error::from;
            writeln!(w, "# config: {config}").map_err(io_err)?;
            writeln!(w, "order,j_over_h,energy_per_site,solver,rel_error").map_err(io_err)?;
            for (k, row) in result.per_order.iter().enumerate() {
                for ((&j, &e), &r) in result.grid.iter().zip(row).zip(refs) {
                    let rel = ((e - r) / r).abs();
                    writeln!(w, "{},{},{},{},{:e}", k + 1, j, e, solver, rel).map_err(io_err)?;
                }
            }
            w.flush().map_err(io_err)?;
        }
    }
    Ok(())
}

/// Expansion run backed by the JSONL store: clusters whose whole grid
/// is on file replay instantly; everything else is solved and recorded
/// point by point through a single writer.
fn nlce_with_checkpoint(
    lattice: Lattice,
    n_max: usize,
    grid: &[f64],
    cfg: &NlceConfig<f64>,
    path: &Path,
) -> Result<NlceResult<f64>, Failure> {
    let plan = build_plan(lattice, n_max)?;
    let store = Mutex::new(Checkpoint::<f64>::open(path)?);
    let mut cached = 0usize;

    // Replay decisions are made up front so the parallel phase only
    // sees work that actually needs solving.
    let todo: Vec<bool> = plan
        .entries()
        .iter()
        .map(|e| !store.lock().unwrap().covers(e.shape, grid))
        .collect();

    let solved: Vec<(Vec<f64>, ClusterDiagnostic<f64>)> = plan
        .entries()
        .par_iter()
        .zip(&todo)
        .map(|(entry, &needs_solve)| {
            let (a, b) = entry.shape;
            let n = entry.n_sites();
            let use_ed = match cfg.solver {
                SolverKind::Ed => true,
                SolverKind::Vqe => false,
                SolverKind::Hybrid { ed_max_sites } => n <= ed_max_sites,
            };
            let cluster = Cluster::open(a, b)?;

            let records: Vec<GridSolve<f64>> = if !needs_solve {
                let store = store.lock().unwrap();
                grid.iter()
                    .map(|&j| {
                        let r = store.get((a, b), j).expect("covered shape");
                        GridSolve {
                            j_over_h: j,
                            energy: r.energy,
                            grad_norm: r.grad_norm,
                            iterations: r.iterations,
                            converged: r.converged,
                            theta: r.theta.clone(),
                        }
                    })
                    .collect()
            } else if use_ed {
                grid.iter()
                    .map(|&j| {
                        Ok(GridSolve {
                            j_over_h: j,
                            energy: ed_ground_energy(&cluster, TfimParams::new(j, 1.0))?,
                            grad_norm: 0.0,
                            iterations: 0,
                            converged: true,
                            theta: Vec::new(),
                        })
                    })
                    .collect::<Result<_, tfim_nlce::Error>>()?
            } else {
                solve_cluster(&cluster, grid, &cfg.solve)?
            };

            if needs_solve {
                let mut store = store.lock().unwrap();
                for r in &records {
                    store.put(CheckpointRecord {
                        lx: a,
                        ly: b,
                        j_over_h: r.j_over_h,
                        energy: r.energy,
                        grad_norm: r.grad_norm,
                        iterations: r.iterations,
                        converged: r.converged,
                        theta: r.theta.clone(),
                    })?;
                }
            }

            let vqe_excess = if !use_ed && n <= cfg.ed_check_max_sites {
                let mut excess = f64::NEG_INFINITY;
                for r in &records {
                    let ed = ed_ground_energy(&cluster, TfimParams::new(r.j_over_h, 1.0))?;
                    excess = excess.max(r.energy - ed);
                }
                Some(excess)
            } else {
                None
            };
            Ok((
                records.iter().map(|r| r.energy).collect(),
                ClusterDiagnostic {
                    shape: entry.shape,
                    solver: if use_ed { "ed" } else { "vqe" }.into(),
                    converged: records.iter().all(|r| r.converged),
                    worst_grad_norm: records.iter().fold(0.0f64, |m, r| m.max(r.grad_norm)),
                    vqe_excess,
                },
            ))
        })
        .collect::<Result<_, tfim_nlce::Error>>()?;

    for &needs_solve in &todo {
        if !needs_solve {
            cached += 1;
        }
    }
    println!("cached {cached}/{} clusters", plan.entries().len());

    let (energies, diagnostics) = solved.into_iter().unzip();
    Ok(assemble(&plan, grid, cfg.solver, energies, diagnostics)?)
}

// ---- noise -------------------------------------------------------------

fn cmd_noise(
    args: NoiseArgs,
    config: &BTreeMap<String, String>,
    outdir: &Path,
) -> Result<(), Failure> {
    let lattice = required(
        resolve_parsed(&args.lattice, config, "lattice", parse_lattice)?,
        "--lattice",
    )?;
    let orders_spec = required(
        resolve(&args.orders, config, "orders", |s| Ok(s.to_string()))?,
        "--orders",
    )?;
    let orders = orders_spec
        .split(',')
        .map(|s| s.trim().parse::<usize>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| Failure::Usage(format!("--orders {orders_spec}: {e}")))?;
    let modes = match resolve(&args.modes, config, "modes", |s| Ok(s.to_string()))? {
        Some(spec) => spec
            .split(',')
            .map(|s| parse_mode(s.trim()))
            .collect::<Result<Vec<_>, _>>()
            .map_err(Failure::Usage)?,
        None => vec![
            NoiseScaling::Constant,
            NoiseScaling::SqrtN,
            NoiseScaling::LinearN,
        ],
    };
    let mut cfg = NoiseStudyConfig::<f64>::default();
    if let Some(s) = resolve(&args.sigma, config, "sigma", parse_num)? {
        cfg.sigma = s;
    }
    if let Some(n) = resolve(&args.samples, config, "samples", parse_num)? {
        cfg.n_samples = n;
    }
    if let Some(s) = resolve(&args.seed, config, "seed", parse_num)? {
        cfg.seed = s;
    }
    let j = resolve(&args.at, config, "at", parse_num)?.unwrap_or(match lattice {
        Lattice::Chain => 1.0,
        Lattice::Square => 0.328,
    });

    let rows = scaling_study(lattice, j, &orders, &modes, &cfg)?;
    let run_config = serde_json::json!({
        "command": "noise",
        "lattice": lattice_name(lattice),
        "orders": orders, "j_over_h": j,
        "modes": modes.iter().map(|m| m.label()).collect::<Vec<_>>(),
        "sigma": cfg.sigma, "samples": cfg.n_samples, "seed": cfg.seed,
    });
    let path = outdir.join(format!("noise_{}.csv", lattice_name(lattice)));
    write_noise_csv(&path, &run_config, &rows)?;
    println!("wrote {}", path.display());
    Ok(())
}

// ---- oracle ------------------------------------------------------------

fn cmd_oracle(
    args: OracleArgs,
    config: &BTreeMap<String, String>,
    outdir: &Path,
) -> Result<(), Failure> {
    let lattice = required(
        resolve_parsed(&args.lattice, config, "lattice", parse_lattice)?,
        "--lattice",
    )?;
    match lattice {
        Lattice::Chain => {
            let grid = args.grid.resolve(config)?;
            let path = outdir.join("oracle_chain.csv");
            let rows = grid
                .iter()
                .map(|&j| Ok((j, exact_chain_energy(j, 1.0)?)))
                .collect::<Result<Vec<(f64, f64)>, tfim_nlce::Error>>()?;
            let run_config = serde_json::json!({
                "command": "oracle", "lattice": "chain", "grid": grid, "seed": null,
            });
            use std::io::Write as _;
            let mut w = std::io::BufWriter::new(
                fs::File::create(&path).map_err(tfim_nlce::Error::from)?,
            );
            writeln!(w, "# config: {run_config}").map_err(tfim_nlce::Error::from)?;
            writeln!(w, "j_over_h,energy_per_site").map_err(tfim_nlce::Error::from)?;
            for (j, e) in &rows {
                writeln!(w, "{j},{e}").map_err(tfim_nlce::Error::from)?;
                println!("{j:8.4}  {e:.12}");
            }
            w.flush().map_err(tfim_nlce::Error::from)?;
            println!("wrote {}", path.display());
        }
        Lattice::Square => {
            // Single paper-sourced constant; no closed form exists.
            let j = 0.328;
            let e = square_reference::<f64>(j).expect("shipped reference point");
            println!("{j:8.4}  {e:.12}  (series-extrapolation reference)");
        }
    }
    Ok(())
}
