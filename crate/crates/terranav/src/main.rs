//! Command-line front end: terrain generation, feature tracking, single-pair
//! estimation, closed-loop simulation, and plot-data emission.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use terranav::problem::{ProblemFile, ResultFile};
use terranav::{asc, flow_csv, pgm, report, scenario};
use terranav_core::estimator::{solve, EstimationProblem};
use terranav_core::flow::{
    chain_tracks, detect_corners, seed_regular_grid, KernelWindow, TrackConfig,
};
use terranav_core::sim::run_closed_loop;
use terranav_core::terrain::{generate_synthetic_dtm, TerrainSpec};

#[derive(Parser)]
#[command(
    name = "terranav",
    version,
    about = "Terrain-relative vision navigation toolkit"
)]
struct Cli {
    /// Override the seed carried by the generated terrain or the scenario.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Print progress diagnostics to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
    /// Output file (generate-terrain, track, estimate) or prefix
    /// (simulate, plot-data).
    #[arg(short, long, global = true)]
    output: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic DTM and write it as an ESRI ASCII grid.
    GenerateTerrain(GenerateTerrainArgs),
    /// Track features across two or more PGM frames and write a flow CSV.
    Track(TrackArgs),
    /// Estimate pose and ego-motion from a flow CSV, a DTM and a problem JSON.
    Estimate(EstimateArgs),
    /// Run the closed-loop navigation scenario, optionally Monte Carlo.
    Simulate(SimulateArgs),
    /// Turn a run-report CSV into plot-ready columnar text files.
    PlotData(PlotDataArgs),
}

#[derive(Args)]
struct GenerateTerrainArgs {
    /// flat | ramp | sinusoidal | fractal
    #[arg(long)]
    kind: String,
    /// Relief amplitude, meters.
    #[arg(long)]
    amplitude: f64,
    /// Characteristic horizontal scale, meters.
    #[arg(long)]
    wavelength: f64,
    /// Grid cells east-west.
    #[arg(long, default_value_t = 257)]
    width: usize,
    /// Grid cells north-south.
    #[arg(long, default_value_t = 257)]
    height: usize,
    /// Cell spacing, meters.
    #[arg(long, default_value_t = 30.0)]
    cell_size: f64,
    /// World x of the south-west cell center.
    #[arg(long, default_value_t = 0.0)]
    origin_x: f64,
    /// World y of the south-west cell center.
    #[arg(long, default_value_t = 0.0)]
    origin_y: f64,
}

#[derive(Args)]
struct TrackArgs {
    /// Two or more PGM frames in temporal order.
    #[arg(required = true, num_args = 2..)]
    images: Vec<PathBuf>,
    /// grid | corners
    #[arg(long, default_value = "grid")]
    seeding: String,
    /// Points per side for grid seeding.
    #[arg(long, default_value_t = 17)]
    grid_n: usize,
    /// Border margin for grid seeding, pixels.
    #[arg(long, default_value_t = 16.0)]
    margin: f64,
    /// Maximum detections for corner seeding.
    #[arg(long, default_value_t = 400)]
    max_corners: usize,
    /// Minimum corner score for corner seeding.
    #[arg(long, default_value_t = 1e-4)]
    min_score: f64,
    /// Non-maximum-suppression spacing for corner seeding, pixels.
    #[arg(long, default_value_t = 20.0)]
    min_spacing: f64,
    /// Pyramid levels.
    #[arg(long, default_value_t = 4)]
    levels: usize,
    /// Tracking window radius, pixels.
    #[arg(long, default_value_t = 7)]
    window_radius: usize,
    /// Gaussian window sigma, pixels.
    #[arg(long, default_value_t = 3.5)]
    sigma: f64,
    /// Use a flat binary window instead of the Gaussian.
    #[arg(long)]
    binary_window: bool,
    /// Iteration cap per pyramid level.
    #[arg(long, default_value_t = 30)]
    max_iters: usize,
    /// Per-level convergence threshold, pixels.
    #[arg(long, default_value_t = 0.01)]
    eps: f64,
    /// Flows longer than this are marked lost, pixels.
    #[arg(long)]
    max_flow: Option<f64>,
}

#[derive(Args)]
struct EstimateArgs {
    /// Flow CSV from `track` (or exported by the simulator).
    #[arg(long)]
    flow: PathBuf,
    /// ESRI ASCII grid DTM.
    #[arg(long)]
    dtm: PathBuf,
    /// Problem JSON: intrinsics, initial guess, solver settings.
    #[arg(long)]
    problem: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    /// Scenario JSON.
    #[arg(long)]
    scenario: PathBuf,
    /// Run this many seeds (config seed, config seed + 1, ...) and write an
    /// aggregate JSON.
    #[arg(long)]
    monte_carlo: Option<usize>,
}

#[derive(Args)]
struct PlotDataArgs {
    /// Run-report CSV written by `simulate`.
    #[arg(long)]
    report: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn require_output(output: &Option<PathBuf>) -> Result<&Path> {
    output
        .as_deref()
        .ok_or_else(|| anyhow!("--output is required for this command"))
}

fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::GenerateTerrain(args) => cmd_generate_terrain(&cli, args),
        Command::Track(args) => cmd_track(&cli, args),
        Command::Estimate(args) => cmd_estimate(&cli, args),
        Command::Simulate(args) => cmd_simulate(&cli, args),
        Command::PlotData(args) => cmd_plot_data(&cli, args),
    }
}

fn cmd_generate_terrain(cli: &Cli, args: &GenerateTerrainArgs) -> Result<()> {
    let output = require_output(&cli.output)?;
    let spec = TerrainSpec {
        kind: scenario::parse_terrain_kind(&args.kind)?,
        amplitude: args.amplitude,
        wavelength: args.wavelength,
        seed: cli.seed.unwrap_or(0),
        width: args.width,
        height: args.height,
        cell_size: args.cell_size,
        origin_x: args.origin_x,
        origin_y: args.origin_y,
    };
    let dtm = generate_synthetic_dtm(&spec).context("terrain generation failed")?;
    asc::write_dtm(output, &dtm)
        .with_context(|| format!("writing {}", output.display()))?;
    println!(
        "wrote {}: {} x {} cells at {} m, elevation {:.3} .. {:.3} m",
        output.display(),
        dtm.width(),
        dtm.height(),
        dtm.cell_size(),
        dtm.min_elevation(),
        dtm.max_elevation()
    );
    Ok(())
}

fn cmd_track(cli: &Cli, args: &TrackArgs) -> Result<()> {
    let output = require_output(&cli.output)?;
    let mut frames = Vec::with_capacity(args.images.len());
    for path in &args.images {
        let img = pgm::read_image(path).with_context(|| format!("reading {}", path.display()))?;
        if let Some(first) = frames.first() {
            let first: &terranav_core::GrayImage = first;
            if (img.width(), img.height()) != (first.width(), first.height()) {
                bail!(
                    "{}: dimensions {}x{} differ from the first frame's {}x{}",
                    path.display(),
                    img.width(),
                    img.height(),
                    first.width(),
                    first.height()
                );
            }
        }
        frames.push(img);
    }
    let first = &frames[0];

    let window = if args.binary_window {
        KernelWindow::binary(args.window_radius)?
    } else {
        KernelWindow::gaussian(args.window_radius, args.sigma)?
    };
    let seeds = match args.seeding.as_str() {
        "grid" => seed_regular_grid(first.width(), first.height(), args.grid_n, args.margin)?,
        "corners" => {
            let corners = detect_corners(
                first,
                &window,
                args.max_corners,
                args.min_score,
                args.min_spacing,
            );
            if cli.verbose {
                eprintln!("detected {} corners", corners.len());
            }
            corners
        }
        other => bail!("unknown seeding mode {other:?} (expected grid|corners)"),
    };
    if seeds.is_empty() {
        bail!("no seed points (corner detection found nothing)");
    }

    let config = TrackConfig {
        levels: args.levels,
        window,
        max_iters: args.max_iters,
        eps: args.eps,
        max_flow_px: args.max_flow.unwrap_or(f64::INFINITY),
    };
    let features = chain_tracks(&frames, &seeds, &config)?;
    let tracked = features.iter().filter(|f| f.is_tracked()).count();
    flow_csv::write_features(output, &features)
        .with_context(|| format!("writing {}", output.display()))?;
    println!(
        "tracked {tracked} / {} features across {} frames -> {}",
        features.len(),
        frames.len(),
        output.display()
    );
    Ok(())
}

fn cmd_estimate(cli: &Cli, args: &EstimateArgs) -> Result<()> {
    let output = require_output(&cli.output)?;
    let features = flow_csv::read_features(&args.flow)?;
    let dtm = asc::read_dtm(&args.dtm)?;
    let problem_file: ProblemFile = terranav::problem::read_problem(&args.problem)?;
    let intrinsics = problem_file.intrinsics.to_core()?;
    let initial_guess = problem_file.initial_guess.to_core();
    let solver = problem_file.solver.to_core();

    let tracked = features.iter().filter(|f| f.is_tracked()).count();
    if cli.verbose {
        eprintln!(
            "{} features ({} tracked), DTM {}x{} cells",
            features.len(),
            tracked,
            dtm.width(),
            dtm.height()
        );
    }
    let problem = EstimationProblem::new(&dtm, intrinsics, features, initial_guess)
        .map_err(|e| anyhow!("{e}"))?;
    // Non-convergence is a reported outcome, not a failure.
    let result = solve(&problem, &solver).map_err(|e| anyhow!("{e}"))?;
    let result_file = ResultFile::from_core(&result);
    terranav::problem::write_result(output, &result_file)?;

    let theta = &result_file.theta;
    println!(
        "position ({:.3}, {:.3}, {:.3}) m, attitude ({:.4}, {:.4}, {:.4}) deg",
        theta.position_m[0],
        theta.position_m[1],
        theta.position_m[2],
        theta.attitude_deg[0],
        theta.attitude_deg[1],
        theta.attitude_deg[2]
    );
    println!(
        "motion ({:.3}, {:.3}, {:.3}) m, rotation ({:.4}, {:.4}, {:.4}) deg",
        theta.translation_m[0],
        theta.translation_m[1],
        theta.translation_m[2],
        theta.rotation_deg[0],
        theta.rotation_deg[1],
        theta.rotation_deg[2]
    );
    println!(
        "converged: {} ({}, {} iterations, objective {:.3e})",
        result_file.converged, result_file.method_used, result_file.iterations, result_file.objective
    );
    Ok(())
}

fn cmd_simulate(cli: &Cli, args: &SimulateArgs) -> Result<()> {
    let prefix = require_output(&cli.output)?;
    let mut config = scenario::read_scenario(&args.scenario)?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }

    match args.monte_carlo {
        None => {
            let run = run_closed_loop(&config).map_err(|e| anyhow!("{e}"))?;
            let report_path = suffixed(prefix, "_report.csv");
            let summary_path = suffixed(prefix, "_summary.json");
            report::write_report_csv(&report_path, &run)?;
            report::write_summary_json(&summary_path, &run)?;
            report::write_track_csv(&suffixed(prefix, "_track.csv"), &run)?;
            println!(
                "{} epochs ({} failed): vision max error {:.3} m / {:.4} deg, \
                 dead-reckoned max error {:.3} m / {:.4} deg",
                run.epochs.len(),
                run.failed_epochs,
                run.vision_summary.max_position_error,
                run.vision_summary.max_angle_error_deg,
                run.propagated_summary.max_position_error,
                run.propagated_summary.max_angle_error_deg
            );
            println!("wrote {} and {}", report_path.display(), summary_path.display());
        }
        Some(n) => {
            if n == 0 {
                bail!("--monte-carlo needs at least one seed");
            }
            let base = config.seed;
            let mut max_pos = Vec::with_capacity(n);
            let mut max_ang = Vec::with_capacity(n);
            let mut failed = 0usize;
            for k in 0..n {
                config.seed = base + k as u64;
                let run = run_closed_loop(&config).map_err(|e| anyhow!("seed {}: {e}", config.seed))?;
                let tag = format!("_seed{:03}", k);
                report::write_report_csv(&suffixed(prefix, &format!("{tag}_report.csv")), &run)?;
                report::write_summary_json(&suffixed(prefix, &format!("{tag}_summary.json")), &run)?;
                report::write_track_csv(&suffixed(prefix, &format!("{tag}_track.csv")), &run)?;
                if cli.verbose {
                    eprintln!(
                        "seed {}: max {:.3} m / {:.4} deg ({} failed epochs)",
                        config.seed,
                        run.vision_summary.max_position_error,
                        run.vision_summary.max_angle_error_deg,
                        run.failed_epochs
                    );
                }
                max_pos.push(run.vision_summary.max_position_error);
                max_ang.push(run.vision_summary.max_angle_error_deg);
                failed += run.failed_epochs;
            }
            let aggregate = serde_json::json!({
                "seeds": n,
                "base_seed": base,
                "failed_epochs_total": failed,
                "median_max_position_error_m": median(&mut max_pos.clone()),
                "p95_max_position_error_m": percentile(&mut max_pos.clone(), 0.95),
                "median_max_angle_error_deg": median(&mut max_ang.clone()),
                "p95_max_angle_error_deg": percentile(&mut max_ang.clone(), 0.95),
            });
            let aggregate_path = suffixed(prefix, "_aggregate.json");
            std::fs::write(&aggregate_path, serde_json::to_string_pretty(&aggregate)?)?;
            println!(
                "{n} seeds: median max position error {:.3} m, median max angle error {:.4} deg",
                median(&mut max_pos.clone()),
                median(&mut max_ang.clone())
            );
            println!("wrote {}", aggregate_path.display());
        }
    }
    Ok(())
}

fn cmd_plot_data(cli: &Cli, args: &PlotDataArgs) -> Result<()> {
    let prefix = require_output(&cli.output)?;
    let rows = report::read_report_csv(&args.report)?;
    report::write_plot_data(prefix, &rows)?;
    println!(
        "wrote {} and {} ({} epochs)",
        report::plot_path(prefix, "trajectories").display(),
        report::plot_path(prefix, "errors").display(),
        rows.len()
    );
    Ok(())
}

fn suffixed(prefix: &Path, suffix: &str) -> PathBuf {
    let mut name = prefix.file_name().unwrap_or_default().to_os_string();
    name.push(suffix);
    prefix.with_file_name(name)
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

fn percentile(values: &mut [f64], q: f64) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let idx = ((values.len() as f64 * q).ceil() as usize).clamp(1, values.len()) - 1;
    values[idx]
}
