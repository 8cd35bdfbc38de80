use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use derm_core::driver::{flatten, DermConfig, Flattening, Method};
use derm_core::io::{self, Colormap};
use derm_core::metrics::{compare_methods, MethodResults, DEFAULT_BIN_WIDTH};
use derm_core::report::{run_report, RunReport};
use derm_core::suite::synthetic_suite;
use derm_core::surface::{Plaque, SyntheticCarotid};
use derm_core::{Error, ErrorKind};

const EXIT_CODES: &str = "\
Exit codes:
  0  success
  2  usage error (bad flags or arguments)
  3  I/O error or missing input file
  4  invalid input surface (ingestion)
  5  invalid parameter or configuration
  6  numerical failure (solver non-convergence, non-positive density)
  7  topology failure (fold, missing or ambiguous contour intersection)
  8  compared runs cover different mesh sets
  9  degenerate surface cell

Every flag can also be set through an environment variable named DERM_<FLAG>,
for example DERM_NMAX=200 or DERM_GRID_COLS_CCA=97.";

#[derive(Parser)]
#[command(name = "derm", version, about = "Area-preserving flattening of carotid surfaces onto an L-shaped template", after_help = EXIT_CODES)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write synthetic bifurcated vessel meshes.
    #[command(after_help = EXIT_CODES)]
    Generate(GenerateArgs),
    /// Flatten one or more meshes and write maps, reports and figures.
    #[command(after_help = EXIT_CODES)]
    Flatten(FlattenArgs),
    /// Compare the reports of two or more flatten runs over the same meshes.
    #[command(after_help = EXIT_CODES)]
    Compare(CompareArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum MeshFormat {
    Json,
    Csv,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, env = "DERM_SEED", default_value_t = 1)]
    seed: u64,
    /// Number of plaques, taken in order from the built-in catalog.
    #[arg(long, env = "DERM_PLAQUES", default_value_t = 0)]
    plaques: usize,
    #[arg(long, env = "DERM_CCA_SLICES", default_value_t = 54)]
    cca_slices: usize,
    #[arg(long, env = "DERM_ICA_SLICES", default_value_t = 45)]
    ica_slices: usize,
    #[arg(long, env = "DERM_POINTS", default_value_t = 96)]
    points: usize,
    /// Write the ten-mesh synthetic suite into --out (a directory) instead.
    #[arg(long)]
    suite: bool,
    #[arg(long, value_enum, env = "DERM_FORMAT", default_value = "json")]
    format: MeshFormat,
    /// Output file (JSON), slice directory (CSV) or suite directory.
    #[arg(long, env = "DERM_OUT")]
    out: PathBuf,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Emit {
    Csv,
    Json,
    Svg,
    Trace,
}

#[derive(Args)]
struct FlattenArgs {
    /// Mesh JSON files, CSV slice directories, or directories of mesh JSON files.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    #[arg(long, env = "DERM_METHOD", default_value = "derm")]
    method: Method,
    #[arg(long, env = "DERM_H", default_value_t = 1.0)]
    h: f64,
    #[arg(long, env = "DERM_NMAX", default_value_t = 500)]
    nmax: usize,
    #[arg(long, env = "DERM_C", default_value_t = 0.01)]
    c: f64,
    #[arg(long, env = "DERM_EPS", default_value_t = 1e-3)]
    eps: f64,
    /// Nodes per CCA row of the template.
    #[arg(long, env = "DERM_GRID_COLS_CCA", default_value_t = 97)]
    grid_cols_cca: usize,
    /// Nodes per ICA row of the template.
    #[arg(long, env = "DERM_GRID_COLS_ICA", default_value_t = 55)]
    grid_cols_ica: usize,
    /// Length scale of the corner diffusivity bump (default: square root of the template area).
    #[arg(long, env = "DERM_KAPPA_SCALE")]
    kappa_scale: Option<f64>,
    /// Dump the reference map every this many iterations (with --emit trace).
    #[arg(long, env = "DERM_CHECKPOINT_EVERY")]
    checkpoint_every: Option<usize>,
    #[arg(long, env = "DERM_BIN_WIDTH", default_value_t = DEFAULT_BIN_WIDTH)]
    bin_width: f64,
    /// Meshes processed concurrently.
    #[arg(long, env = "DERM_JOBS", default_value_t = 1)]
    jobs: usize,
    #[arg(long, env = "DERM_EMIT", value_enum, value_delimiter = ',', default_value = "csv,json")]
    emit: Vec<Emit>,
    #[arg(long, env = "DERM_OUT")]
    out: PathBuf,
}

#[derive(Args)]
struct CompareArgs {
    /// Flatten output directories or report files; the first is the reference.
    #[arg(required = true, num_args = 2..)]
    runs: Vec<PathBuf>,
    #[arg(long, env = "DERM_OUT")]
    out: PathBuf,
}

enum Failure {
    Core(Error),
    Mismatch(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Core(e) => write!(f, "{e}"),
            Failure::Mismatch(m) => f.write_str(m),
        }
    }
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Mismatch(_) => 8,
            Failure::Core(e) => match e.kind() {
                ErrorKind::Io => 3,
                ErrorKind::Ingestion => 4,
                ErrorKind::Parameter => 5,
                ErrorKind::Numerical => 6,
                ErrorKind::Topology => 7,
                ErrorKind::Degenerate => 9,
            },
        }
    }
}

type Outcome<T> = std::result::Result<T, Failure>;

fn create_dir(dir: &Path) -> Outcome<()> {
    fs::create_dir_all(dir).map_err(|e| Error::Io { path: dir.to_path_buf(), source: e }.into())
}

const PLAQUE_CATALOG: [Plaque; 4] = [
    Plaque { z: 4.0, angle: 0.0, amplitude: 3.0, radius: 4.0 },
    Plaque { z: -10.0, angle: std::f64::consts::FRAC_PI_2, amplitude: 3.0, radius: 5.0 },
    Plaque { z: 10.0, angle: std::f64::consts::PI, amplitude: 3.5, radius: 4.0 },
    Plaque { z: -30.0, angle: -std::f64::consts::FRAC_PI_2, amplitude: 4.0, radius: 6.0 },
];

fn write_mesh(path: &Path, mesh: &derm_core::QuadSurfaceMesh, format: MeshFormat) -> Outcome<()> {
    match format {
        MeshFormat::Json => io::write_mesh_json(path, mesh)?,
        MeshFormat::Csv => io::write_mesh_csv_dir(path, mesh)?,
    }
    Ok(())
}

fn cmd_generate(args: GenerateArgs) -> Outcome<()> {
    if args.suite {
        create_dir(&args.out)?;
        for (name, mesh) in synthetic_suite()? {
            let path = match args.format {
                MeshFormat::Json => args.out.join(format!("{name}.json")),
                MeshFormat::Csv => args.out.join(&name),
            };
            write_mesh(&path, &mesh, args.format)?;
        }
        return Ok(());
    }
    if args.plaques > PLAQUE_CATALOG.len() {
        return Err(Error::Parameter(format!("at most {} plaques are available", PLAQUE_CATALOG.len())).into());
    }
    let plaques = PLAQUE_CATALOG[..args.plaques].to_vec();
    let mesh = SyntheticCarotid::new(args.seed, args.cca_slices, args.ica_slices, args.points)
        .with_plaques(plaques)
        .build()?;
    if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    write_mesh(&args.out, &mesh, args.format)
}

/// Expands directories of mesh JSON files; CSV slice directories stay whole.
fn collect_meshes(inputs: &[PathBuf]) -> Outcome<Vec<(String, PathBuf)>> {
    let mut out = Vec::new();
    for input in inputs {
        if !input.exists() {
            return Err(Error::Io {
                path: input.clone(),
                source: std::io::Error::new(std::io::ErrorKind::NotFound, "input not found"),
            }
            .into());
        }
        let stem = |p: &Path| p.file_stem().map_or_else(|| "mesh".to_string(), |s| s.to_string_lossy().into_owned());
        if input.is_dir() {
            let mut entries: Vec<PathBuf> = fs::read_dir(input)
                .map_err(|e| Error::Io { path: input.clone(), source: e })?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .collect();
            entries.sort();
            let jsons: Vec<PathBuf> = entries.iter().filter(|p| p.extension().is_some_and(|x| x == "json")).cloned().collect();
            if jsons.is_empty() {
                out.push((stem(input), input.clone()));
            } else {
                out.extend(jsons.into_iter().map(|p| (stem(&p), p)));
            }
        } else {
            out.push((stem(input), input.clone()));
        }
    }
    Ok(out)
}

fn emit_artifacts(args: &FlattenArgs, name: &str, result: &Flattening, report: &RunReport) -> Outcome<()> {
    let out = &args.out;
    let config = &report.config;
    if args.emit.contains(&Emit::Json) {
        io::write_json(&out.join(format!("{name}.report.json")), report)?;
    }
    if args.emit.contains(&Emit::Csv) {
        io::write_map_csv(&out.join(format!("{name}.map.csv")), &result.map, config)?;
        io::write_als_csv(&out.join(format!("{name}.als.csv")), &result.als, config)?;
        io::write_histogram_csv(
            &out.join(format!("{name}.histogram.csv")),
            &[(result.method.name(), &report.distortion.histogram)],
            config,
        )?;
    }
    if args.emit.contains(&Emit::Svg) {
        let d = &report.distortion;
        let limit = d.values().fold(0.0_f64, |m, v| m.max(v.abs()));
        let svg = io::map_svg(&result.map, &d.d, Colormap::Diverging { limit }, &format!("{name} d ({})", result.method), config)?;
        io::write_text(&out.join(format!("{name}.d.svg")), &svg)?;
        let vwt = io::cell_vwt(&result.map);
        let (lo, hi) = vwt.iter().flatten().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        let svg = io::map_svg(&result.map, &vwt, Colormap::Sequential { lo, hi }, &format!("{name} VWT ({})", result.method), config)?;
        io::write_text(&out.join(format!("{name}.vwt.svg")), &svg)?;
    }
    if args.emit.contains(&Emit::Trace) {
        let records = result.outcome.as_ref().map_or(&[][..], |o| &o.records[..]);
        io::write_trace_csv(&out.join(format!("{name}.trace.csv")), records, config)?;
        for (n, xi) in &result.checkpoints {
            io::write_xi_csv(&out.join(format!("{name}.xi_{n:04}.csv")), result.als.domain(), xi, config)?;
        }
    }
    Ok(())
}

fn flatten_one(args: &FlattenArgs, config: &DermConfig, name: &str, path: &Path) -> Outcome<RunReport> {
    let mesh = io::read_mesh(path)?;
    let result = flatten(&mesh, args.method, config)?;
    let report = run_report(name, &result, config, args.bin_width)?;
    emit_artifacts(args, name, &result, &report)?;
    Ok(report)
}

fn cmd_flatten(args: FlattenArgs) -> Outcome<()> {
    let config = DermConfig {
        epsilon: args.eps,
        n_max: args.nmax,
        c: args.c,
        h: args.h,
        columns_cca: args.grid_cols_cca,
        columns_ica: args.grid_cols_ica,
        kappa_scale: args.kappa_scale,
        checkpoint_every: args.checkpoint_every,
    };
    config.validate()?;
    if args.jobs == 0 {
        return Err(Error::Parameter("--jobs must be at least 1".into()).into());
    }
    let meshes = collect_meshes(&args.inputs)?;
    create_dir(&args.out)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.jobs)
        .build()
        .map_err(|e| Error::Parameter(e.to_string()))?;
    let results: Vec<Outcome<RunReport>> =
        pool.install(|| meshes.par_iter().map(|(name, path)| flatten_one(&args, &config, name, path)).collect());

    let mut summary = Vec::new();
    let mut first_failure = None;
    for ((name, _), result) in meshes.iter().zip(results) {
        match result {
            Ok(report) => {
                let d = &report.distortion;
                println!(
                    "{name}: {} iterations={} mean|d|={:.6} overlap={:.3e}",
                    args.method, report.iterations, d.mean_abs_d, d.overlap
                );
                summary.push(serde_json::json!({
                    "mesh": name,
                    "method": args.method,
                    "iterations": report.iterations,
                    "termination": report.termination,
                    "final_ratio": report.final_ratio,
                    "mean_abs_d": d.mean_abs_d,
                    "overlap": d.overlap,
                    "folded_cells": d.folded_cells.len(),
                }));
            }
            Err(e) => {
                eprintln!("{name}: error: {e}");
                first_failure.get_or_insert(e);
            }
        }
    }
    if args.emit.contains(&Emit::Json) {
        io::write_json(
            &args.out.join("summary.json"),
            &serde_json::json!({ "method": args.method, "config": config, "meshes": summary }),
        )?;
    }
    match first_failure {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

fn load_reports(path: &Path) -> Outcome<Vec<RunReport>> {
    if !path.exists() {
        return Err(Error::Io {
            path: path.to_path_buf(),
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "run output not found"),
        }
        .into());
    }
    let files: Vec<PathBuf> = if path.is_dir() {
        let mut files: Vec<PathBuf> = fs::read_dir(path)
            .map_err(|e| Error::Io { path: path.to_path_buf(), source: e })?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.to_string_lossy().ends_with(".report.json"))
            .collect();
        files.sort();
        files
    } else {
        vec![path.to_path_buf()]
    };
    if files.is_empty() {
        return Err(Error::Ingestion(format!("{}: no *.report.json files", path.display())).into());
    }
    Ok(files.iter().map(|f| io::read_json(f)).collect::<Result<_, _>>()?)
}

fn cmd_compare(args: CompareArgs) -> Outcome<()> {
    let mut results = Vec::new();
    for (k, run) in args.runs.iter().enumerate() {
        let reports = load_reports(run)?;
        let method = reports[0].config.method.name();
        let label = if results.iter().any(|r: &MethodResults| r.method == method) {
            format!("{method}#{}", k + 1)
        } else {
            method.to_string()
        };
        let meshes: BTreeMap<String, _> = reports.into_iter().map(|r| (r.mesh, r.distortion)).collect();
        results.push(MethodResults { method: label, meshes });
    }
    let comparison = compare_methods(&results).map_err(|e| match e {
        Error::Parameter(m) => Failure::Mismatch(m),
        other => Failure::Core(other),
    })?;
    create_dir(&args.out)?;
    let runs: Vec<String> = args.runs.iter().map(|p| p.display().to_string()).collect();
    let config = serde_json::json!({ "runs": runs, "methods": comparison.methods });
    io::write_json(&args.out.join("compare.json"), &serde_json::json!({ "config": config, "comparison": comparison }))?;

    let mut header = vec!["mesh".to_string()];
    for m in &comparison.methods {
        header.push(format!("mean_abs_d_{m}"));
    }
    for m in &comparison.methods[1..] {
        header.push(format!("reduction_percent_{m}"));
    }
    for m in &comparison.methods {
        header.push(format!("overlap_{m}"));
    }
    let rows = comparison.rows.iter().map(|row| {
        let mut r = vec![row.mesh.clone()];
        r.extend(row.mean_abs_d.iter().map(|v| v.to_string()));
        r.extend(row.reduction_percent[1..].iter().map(|v| v.map_or_else(String::new, |v| v.to_string())));
        r.extend(row.overlap.iter().map(|v| v.to_string()));
        r
    });
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    io::write_csv(&args.out.join("compare.csv"), Some(&config), &header, rows)?;
    let hists: Vec<(&str, _)> = comparison.methods.iter().map(String::as_str).zip(&comparison.histograms).collect();
    io::write_histogram_csv(&args.out.join("histogram.csv"), &hists, &config)?;

    for row in &comparison.rows {
        let reductions: Vec<String> = comparison.methods[1..]
            .iter()
            .zip(&row.reduction_percent[1..])
            .map(|(m, r)| format!("{m} {}", r.map_or_else(|| "n/a".into(), |r| format!("{r:.1}%"))))
            .collect();
        println!("{}: {}", row.mesh, reductions.join(", "));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate(a) => cmd_generate(a),
        Command::Flatten(a) => cmd_flatten(a),
        Command::Compare(a) => cmd_compare(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}

