use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dfrc_core::adversary::{
    exact_cell_posterior, observe_precoder, reconstruct_beampattern, static_filter_cell_mass, total_variation,
    CellAggregation,
};
use dfrc_core::harness::{
    emit_results, read_config, run_experiment, trace_run, write_beampattern_csv, write_json, write_particles_csv,
    ExperimentConfig, Placement, SweepAxis, SweepParameter,
};
use dfrc_core::rng::derive_seed;
use dfrc_core::scene::{build_grid, AngleGrid, Point};
use dfrc_core::Error;
use serde_json::json;

#[derive(Parser)]
#[command(name = "dfrc", version, about = "DFRC precoder design and target-location privacy experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Design one precoder and dump its beampattern.
    Design(Common),
    /// Run one particle-filter attack with start and end particle clouds.
    Attack(Common),
    /// Run the full Monte Carlo experiment.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Also write beampattern and particle traces for run 0.
        #[arg(long)]
        trace: bool,
    },
    /// Compare the particle filter with the exact cell posterior on a small grid.
    Oracle {
        #[command(flatten)]
        common: Common,
        /// Cells per side of the square oracle grid.
        #[arg(long, default_value_t = 4)]
        cells: usize,
        /// Filter steps with the static likelihood table.
        #[arg(long, default_value_t = 10)]
        steps: usize,
        #[arg(long, default_value_t = 500)]
        seeds: u64,
    },
}

fn parse_point(s: &str) -> Result<Point, String> {
    let (x, y) = s.split_once(',').ok_or_else(|| format!("expected `x,y`, got `{s}`"))?;
    let num = |v: &str| v.trim().parse::<f64>().map_err(|e| format!("`{v}`: {e}"));
    Ok(Point::new(num(x)?, num(y)?))
}

fn parse_points(s: &str) -> Result<Vec<Point>, String> {
    s.split(';').map(parse_point).collect()
}

fn parse_extent(s: &str) -> Result<(f64, f64), String> {
    parse_point(s).map(|p| (p.x, p.y))
}

fn parse_sweep(s: &str) -> Result<SweepAxis, String> {
    let (name, values) = s.split_once('=').ok_or_else(|| format!("expected `name=v1,v2,...`, got `{s}`"))?;
    let parameter: SweepParameter = name.trim().parse().map_err(|e: Error| e.to_string())?;
    let values = values
        .split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|e| format!("`{v}`: {e}")))
        .collect::<Result<_, _>>()?;
    Ok(SweepAxis { parameter, values })
}

fn parse_placement(s: &str) -> Result<Placement, String> {
    match s {
        "fixed" => Ok(Placement::Fixed),
        "random" => Ok(Placement::Random),
        _ => Err(format!("expected `fixed` or `random`, got `{s}`")),
    }
}

fn parse_aggregation(s: &str) -> Result<CellAggregation, String> {
    match s {
        "sum" => Ok(CellAggregation::Sum),
        "mean" => Ok(CellAggregation::Mean),
        _ => Err(format!("expected `sum` or `mean`, got `{s}`")),
    }
}

/// Config source plus per-field overrides.
#[derive(Args)]
struct Common {
    /// JSON experiment config; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Built-in starting point when no config file is given.
    #[arg(long, default_value = "desk", value_parser = ["desk", "paper"])]
    preset: String,
    #[arg(long, env = "DFRC_OUTPUT_DIR", default_value = "dfrc-output")]
    output_dir: PathBuf,
    /// Worker threads for independent runs (default: all cores).
    #[arg(long)]
    workers: Option<usize>,
    /// Run index for `design` and `attack`.
    #[arg(long, default_value_t = 0)]
    run: usize,

    #[arg(long, value_parser = parse_placement)]
    placement: Option<Placement>,
    /// `x,y` in meters.
    #[arg(long, value_parser = parse_point, allow_hyphen_values = true)]
    bs_position: Option<Point>,
    /// `x1,y1;x2,y2;...` in meters.
    #[arg(long, value_parser = parse_points, allow_hyphen_values = true)]
    user_positions: Option<Vec<Point>>,
    #[arg(long)]
    adversary_index: Option<usize>,
    #[arg(long, value_parser = parse_point, allow_hyphen_values = true)]
    target_position: Option<Point>,
    /// `width,height` in meters.
    #[arg(long, value_parser = parse_extent)]
    extent: Option<(f64, f64)>,
    #[arg(long)]
    cell_size: Option<f64>,
    #[arg(long)]
    num_tx: Option<usize>,
    #[arg(long)]
    num_rx: Option<usize>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    p_t: Option<f64>,
    #[arg(long)]
    path_loss_exponent: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    gamma_db: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    sigma_k_sq_dbm: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    sigma_sq_dbm: Option<f64>,
    #[arg(long)]
    beam_width: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    particles: Option<usize>,
    #[arg(long)]
    observations: Option<usize>,
    #[arg(long, value_parser = parse_aggregation)]
    aggregation: Option<CellAggregation>,
    #[arg(long)]
    confidence_threshold: Option<f64>,
    #[arg(long)]
    angle_threshold: Option<f64>,
    #[arg(long)]
    num_runs: Option<usize>,
    #[arg(long)]
    root_seed: Option<u64>,
    /// `name=v1,v2,...`; repeat for a cartesian product. Replaces the config's sweep.
    #[arg(long, value_parser = parse_sweep, allow_hyphen_values = true)]
    sweep: Vec<SweepAxis>,
}

macro_rules! override_fields {
    ($cfg:ident, $args:ident, $($field:ident),*) => {
        $(if let Some(v) = $args.$field.clone() { $cfg.$field = v; })*
    };
}

impl Common {
    fn resolve(&self) -> Result<ExperimentConfig, Error> {
        let mut cfg = match &self.config {
            Some(path) => read_config(path)?,
            None if self.preset == "paper" => ExperimentConfig::paper(),
            None => ExperimentConfig::desk(),
        };
        let args = self;
        override_fields!(
            cfg, args, placement, bs_position, user_positions, adversary_index, target_position, extent, cell_size,
            num_tx, num_rx, delta, p_t, path_loss_exponent, gamma_db, sigma_k_sq_dbm, sigma_sq_dbm, beam_width,
            epsilon, max_iters, particles, observations, aggregation, confidence_threshold, angle_threshold,
            num_runs, root_seed
        );
        if !self.sweep.is_empty() {
            cfg.sweep = self.sweep.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn design(args: &Common) -> Result<serde_json::Value, Error> {
    let cfg = args.resolve()?;
    let trace = trace_run(&ExperimentConfig { observations: 0, ..cfg }, args.run)?;
    let dir = &args.output_dir;
    std::fs::create_dir_all(dir)?;
    write_json(&dir.join("design.json"), &json!({ "scenario": trace.scenario, "solution": trace.solution }))?;
    write_beampattern_csv(&dir.join("beampattern.csv"), &trace.beampattern)?;
    Ok(json!({
        "theta_target": trace.scenario.theta_target()?,
        "iterations": trace.solution.objective_trace.len(),
        "converged": trace.solution.converged,
        "objective": trace.solution.objective_trace.last(),
    }))
}

fn attack(args: &Common) -> Result<serde_json::Value, Error> {
    let cfg = args.resolve()?;
    let trace = trace_run(&cfg, args.run)?;
    let dir = &args.output_dir;
    std::fs::create_dir_all(dir)?;
    write_json(&dir.join("attack.json"), &trace)?;
    write_beampattern_csv(&dir.join("beampattern.csv"), &trace.beampattern)?;
    write_particles_csv(&dir.join("particles.csv"), &trace.particles, &cfg.grid()?)?;
    Ok(serde_json::to_value(&trace.outcome)?)
}

fn sweep(args: &Common, with_trace: bool) -> Result<serde_json::Value, Error> {
    let cfg = args.resolve()?;
    let report = run_experiment(&cfg, args.workers)?;
    let trace = if with_trace { Some(trace_run(&cfg, 0)?) } else { None };
    emit_results(&report, trace.as_ref(), &args.output_dir)?;
    Ok(serde_json::to_value(&report.stats)?)
}

/// Static likelihoods from the noiseless beampattern of run `args.run` on a
/// `cells x cells` grid over the search area.
fn oracle(args: &Common, cells: usize, steps: usize, seeds: u64) -> Result<serde_json::Value, Error> {
    let cfg = args.resolve()?;
    if cells == 0 || cfg.extent.0 != cfg.extent.1 {
        return Err(Error::Config("oracle needs a square search area and at least one cell".into()));
    }
    let trace = trace_run(&ExperimentConfig { observations: 0, ..cfg.clone() }, args.run)?;
    let grid = build_grid(cfg.extent, cfg.extent.0 / cells as f64, cfg.bs_position)?;
    let obs = observe_precoder(&trace.solution, 0.0, 0, 0)?;
    let table = reconstruct_beampattern(&obs, &grid, &AngleGrid::standard(), cfg.delta)?;
    let n = grid.num_cells();
    let exact = exact_cell_posterior(&vec![table.likelihood.clone(); steps], &vec![1.0 / n as f64; n])?;
    let mut mean = vec![0.0; n];
    for s in 0..seeds {
        let mass = static_filter_cell_mass(
            &table,
            &grid,
            cfg.particles,
            steps,
            cfg.aggregation,
            derive_seed(cfg.root_seed, "oracle", s),
        )?;
        mean.iter_mut().zip(mass).for_each(|(a, m)| *a += m / seeds as f64);
    }
    let result = json!({
        "cells": n,
        "steps": steps,
        "seeds": seeds,
        "particles": cfg.particles,
        "likelihood": table.likelihood,
        "exact": exact,
        "particle_filter": mean,
        "total_variation": total_variation(&mean, &exact),
    });
    std::fs::create_dir_all(&args.output_dir)?;
    write_json(&args.output_dir.join("oracle.json"), &result)?;
    Ok(result)
}

fn error_record(kind: &str, message: &str) -> String {
    json!({ "error": kind, "message": message }).to_string()
}

fn output_dir(command: &Command) -> &Path {
    match command {
        Command::Design(c) | Command::Attack(c) => &c.output_dir,
        Command::Sweep { common, .. } | Command::Oracle { common, .. } => &common.output_dir,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprintln!("{}", error_record("UsageError", e.to_string().trim()));
            return ExitCode::from(2);
        }
    };
    let result = match &cli.command {
        Command::Design(c) => design(c),
        Command::Attack(c) => attack(c),
        Command::Sweep { common, trace } => sweep(common, *trace),
        Command::Oracle {
            common,
            cells,
            steps,
            seeds,
        } => oracle(common, *cells, *steps, *seeds),
    };
    match result {
        Ok(summary) => {
            println!("{}", json!({ "output_dir": output_dir(&cli.command), "result": summary }));
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", error_record(e.kind(), &e.to_string()));
            ExitCode::from(if matches!(e, Error::Config(_) | Error::Serde(_)) { 2 } else { 1 })
        }
    }
}
