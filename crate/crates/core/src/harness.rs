//! Seeded Monte Carlo experiments: configuration, the run driver, outcome
//! aggregation and the files written for plotting.
//!
//! Every run draws its placement, channels, design start and attack noise from
//! seeds derived from `(root_seed, run index)`. Sweep points inside one run
//! reuse those streams, so points differ only in the swept parameter.

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adversary::{
    classify, observe_precoder, run_particle_filter_traced, CellAggregation, EstimationOutcome, FilterConfig, FilterRun,
    OutcomeLabel, Thresholds,
};
use crate::error::{Error, Result};
use crate::precoder::{beampattern, design_precoder, DesignOptions, PrecoderSolution};
use crate::rng::{derive_seed, rng_from_seed};
use crate::scene::{build_grid, generate_channels, AngleGrid, GridWorld, Point, Scenario};

pub fn dbm_to_watts(x: f64) -> f64 {
    10f64.powf((x - 30.0) / 10.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Placement {
    /// Users and target stay where the config puts them.
    Fixed,
    /// Users and target are redrawn uniformly per run, outside the BS cell.
    Random,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    Observations,
    SigmaSqDbm,
    GammaDb,
    NumTx,
    NumRx,
    Particles,
}

impl SweepParameter {
    pub fn name(self) -> &'static str {
        match self {
            SweepParameter::Observations => "observations",
            SweepParameter::SigmaSqDbm => "sigma_sq_dbm",
            SweepParameter::GammaDb => "gamma_db",
            SweepParameter::NumTx => "num_tx",
            SweepParameter::NumRx => "num_rx",
            SweepParameter::Particles => "particles",
        }
    }

    fn is_count(self) -> bool {
        matches!(
            self,
            SweepParameter::Observations | SweepParameter::NumTx | SweepParameter::NumRx | SweepParameter::Particles
        )
    }
}

impl std::str::FromStr for SweepParameter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [
            SweepParameter::Observations,
            SweepParameter::SigmaSqDbm,
            SweepParameter::GammaDb,
            SweepParameter::NumTx,
            SweepParameter::NumRx,
            SweepParameter::Particles,
        ]
        .into_iter()
        .find(|p| p.name() == s)
        .ok_or_else(|| Error::Config(format!("unknown sweep parameter `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepAxis {
    pub parameter: SweepParameter,
    pub values: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSetting {
    pub parameter: SweepParameter,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub placement: Placement,
    pub bs_position: Point,
    /// Fixed user positions; with random placement only the count is used.
    pub user_positions: Vec<Point>,
    /// 1-based.
    pub adversary_index: usize,
    pub target_position: Point,
    pub extent: (f64, f64),
    pub cell_size: f64,
    pub num_tx: usize,
    pub num_rx: usize,
    pub delta: f64,
    pub p_t: f64,
    pub path_loss_exponent: f64,
    pub gamma_db: f64,
    pub sigma_k_sq_dbm: f64,
    pub sigma_sq_dbm: f64,
    pub beam_width: f64,
    pub epsilon: f64,
    pub max_iters: usize,
    pub particles: usize,
    pub observations: usize,
    pub aggregation: CellAggregation,
    pub confidence_threshold: f64,
    pub angle_threshold: f64,
    pub num_runs: usize,
    pub root_seed: u64,
    /// Axes combined as a cartesian product, first axis slowest.
    #[serde(default)]
    pub sweep: Vec<SweepAxis>,
}

impl ExperimentConfig {
    /// Desk-scale setting with the fixed placement used for the noise and SINR sweeps.
    pub fn desk() -> Self {
        Self {
            placement: Placement::Fixed,
            bs_position: Point::new(0.0, 0.0),
            user_positions: vec![Point::new(800.0, 100.0), Point::new(750.0, 300.0)],
            adversary_index: 1,
            target_position: Point::new(550.0, 400.0),
            extent: (1000.0, 1000.0),
            cell_size: 100.0,
            num_tx: 8,
            num_rx: 2,
            delta: 0.5,
            p_t: 1.0,
            path_loss_exponent: 3.0,
            gamma_db: 12.0,
            sigma_k_sq_dbm: -100.0,
            sigma_sq_dbm: -10.0,
            beam_width: 10.0,
            epsilon: 0.01,
            max_iters: 20,
            particles: 200,
            observations: 300,
            aggregation: CellAggregation::Sum,
            confidence_threshold: 0.9,
            angle_threshold: 10.0,
            num_runs: 100,
            root_seed: 1,
            sweep: Vec::new(),
        }
    }

    /// Full-size setting: 20 antennas, 4-antenna users, 500 particles, 1500 observations, 1000 runs.
    pub fn paper() -> Self {
        Self {
            placement: Placement::Random,
            num_tx: 20,
            num_rx: 4,
            particles: 500,
            observations: 1500,
            num_runs: 1000,
            ..Self::desk()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.num_runs == 0 {
            return bad("num_runs must be at least 1".into());
        }
        if self.particles == 0 {
            return bad("particles must be at least 1".into());
        }
        if !(self.sigma_sq_dbm.is_finite() && self.sigma_k_sq_dbm.is_finite() && self.gamma_db.is_finite()) {
            return bad("gamma_db, sigma_sq_dbm and sigma_k_sq_dbm must be finite".into());
        }
        if !(0.0..=1.0).contains(&self.confidence_threshold) || !(self.angle_threshold > 0.0) {
            return bad("thresholds out of range".into());
        }
        let mut seen = Vec::new();
        for axis in &self.sweep {
            if seen.contains(&axis.parameter) {
                return bad(format!("sweep axis `{}` given twice", axis.parameter.name()));
            }
            seen.push(axis.parameter);
            if axis.values.is_empty() {
                return bad(format!("sweep axis `{}` has no values", axis.parameter.name()));
            }
            for &v in &axis.values {
                if !v.is_finite() || (axis.parameter.is_count() && (v < 0.0 || v.fract() != 0.0)) {
                    return bad(format!("invalid value {v} for `{}`", axis.parameter.name()));
                }
            }
        }
        build_grid(self.extent, self.cell_size, self.bs_position)?;
        for point in self.sweep_points() {
            point.config.scenario_at(&self.user_positions, self.target_position)?.validate()?;
            if point.config.particles == 0 {
                return bad("particles must be at least 1".into());
            }
        }
        Ok(())
    }

    fn apply(&mut self, setting: SweepSetting) {
        let v = setting.value;
        match setting.parameter {
            SweepParameter::Observations => self.observations = v as usize,
            SweepParameter::SigmaSqDbm => self.sigma_sq_dbm = v,
            SweepParameter::GammaDb => self.gamma_db = v,
            SweepParameter::NumTx => self.num_tx = v as usize,
            SweepParameter::NumRx => self.num_rx = v as usize,
            SweepParameter::Particles => self.particles = v as usize,
        }
    }

    /// Cartesian product of the sweep axes; a config without axes is one point.
    pub fn sweep_points(&self) -> Vec<SweepPoint> {
        let mut points = vec![SweepPoint {
            settings: Vec::new(),
            config: ExperimentConfig {
                sweep: Vec::new(),
                ..self.clone()
            },
        }];
        for axis in &self.sweep {
            points = points
                .into_iter()
                .flat_map(|p| {
                    axis.values.iter().map(move |&value| {
                        let setting = SweepSetting {
                            parameter: axis.parameter,
                            value,
                        };
                        let mut next = p.clone();
                        next.settings.push(setting);
                        next.config.apply(setting);
                        next
                    })
                })
                .collect();
        }
        points
    }

    pub fn grid(&self) -> Result<GridWorld> {
        build_grid(self.extent, self.cell_size, self.bs_position)
    }

    fn scenario_at(&self, users: &[Point], target: Point) -> Result<Scenario> {
        Ok(Scenario {
            bs_position: self.bs_position,
            user_positions: users.to_vec(),
            adversary_index: self.adversary_index,
            target_position: target,
            num_tx: self.num_tx,
            num_rx: self.num_rx,
            delta: self.delta,
            p_t: self.p_t,
            sigma_k_sq: dbm_to_watts(self.sigma_k_sq_dbm),
            path_loss_exponent: self.path_loss_exponent,
            extent: self.extent,
        })
    }

    /// Placement of run `run`: the configured one, or a fresh draw.
    pub fn placement_for_run(&self, run: usize) -> Result<(Vec<Point>, Point)> {
        match self.placement {
            Placement::Fixed => Ok((self.user_positions.clone(), self.target_position)),
            Placement::Random => {
                let grid = self.grid()?;
                let mut rng = rng_from_seed(derive_seed(self.run_seed(run), "placement", 0));
                let users = (0..self.user_positions.len())
                    .map(|_| grid.sample_excluding_cell_of(self.bs_position, &mut rng))
                    .collect();
                Ok((users, grid.sample_excluding_cell_of(self.bs_position, &mut rng)))
            }
        }
    }

    pub fn scenario_for_run(&self, run: usize) -> Result<Scenario> {
        let (users, target) = self.placement_for_run(run)?;
        self.scenario_at(&users, target)
    }

    pub fn run_seed(&self, run: usize) -> u64 {
        derive_seed(self.root_seed, "run", run as u64)
    }

    pub fn design_options(&self) -> DesignOptions {
        DesignOptions {
            gamma_db: self.gamma_db,
            epsilon: self.epsilon,
            max_iters: self.max_iters,
            beam_width: self.beam_width,
            ..DesignOptions::default()
        }
    }

    pub fn filter_config(&self) -> FilterConfig {
        FilterConfig {
            particles: self.particles,
            observations: self.observations,
            sigma_sq: dbm_to_watts(self.sigma_sq_dbm),
            aggregation: self.aggregation,
        }
    }

    pub fn thresholds(&self) -> Thresholds {
        Thresholds {
            confidence: self.confidence_threshold,
            angle_deg: self.angle_threshold,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub settings: Vec<SweepSetting>,
    pub config: ExperimentConfig,
}

/// One run at one sweep point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run: usize,
    pub point: usize,
    pub seed: u64,
    pub theta_target: f64,
    pub design_iterations: usize,
    pub converged: bool,
    pub outcome: Option<EstimationOutcome>,
    /// Error tag for runs without an estimate.
    pub excluded: Option<String>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LabelCounts {
    pub detection: usize,
    pub false_alarm: usize,
    pub miss_detection: usize,
    pub undetection: usize,
}

impl LabelCounts {
    fn add(&mut self, label: OutcomeLabel) {
        match label {
            OutcomeLabel::Detection => self.detection += 1,
            OutcomeLabel::FalseAlarm => self.false_alarm += 1,
            OutcomeLabel::MissDetection => self.miss_detection += 1,
            OutcomeLabel::Undetection => self.undetection += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.detection + self.false_alarm + self.miss_detection + self.undetection
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LabelPercentages {
    pub detection: f64,
    pub false_alarm: f64,
    pub miss_detection: f64,
    pub undetection: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointStats {
    pub settings: Vec<SweepSetting>,
    /// Runs with an estimate.
    pub runs: usize,
    pub counts: LabelCounts,
    /// Share of `runs`; all zero when no run produced an estimate.
    pub percentages: LabelPercentages,
    pub mean_confidence: f64,
    pub mean_angle_error: f64,
    pub infeasible: usize,
    pub failed: usize,
}

impl PointStats {
    pub fn percentage(&self, label: OutcomeLabel) -> f64 {
        match label {
            OutcomeLabel::Detection => self.percentages.detection,
            OutcomeLabel::FalseAlarm => self.percentages.false_alarm,
            OutcomeLabel::MissDetection => self.percentages.miss_detection,
            OutcomeLabel::Undetection => self.percentages.undetection,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateStats {
    pub points: Vec<PointStats>,
}

/// Reduces run records (in any order) to per-point statistics, in run-index order.
pub fn aggregate(points: &[SweepPoint], records: &[RunRecord]) -> AggregateStats {
    let mut sorted: Vec<&RunRecord> = records.iter().collect();
    sorted.sort_by_key(|r| (r.point, r.run));
    let points = points
        .iter()
        .enumerate()
        .map(|(p, point)| {
            let mut counts = LabelCounts::default();
            let (mut conf, mut err, mut infeasible, mut failed) = (0.0, 0.0, 0, 0);
            for rec in sorted.iter().filter(|r| r.point == p) {
                match (&rec.outcome, rec.excluded.as_deref()) {
                    (Some(o), _) => {
                        counts.add(o.label);
                        conf += o.confidence;
                        err += o.angle_error;
                    }
                    (None, Some("InfeasibleQoS")) => infeasible += 1,
                    (None, _) => failed += 1,
                }
            }
            let n = counts.total();
            let pct = |c: usize| if n == 0 { 0.0 } else { 100.0 * c as f64 / n as f64 };
            let mean = |s: f64| if n == 0 { 0.0 } else { s / n as f64 };
            PointStats {
                settings: point.settings.clone(),
                runs: n,
                counts,
                percentages: LabelPercentages {
                    detection: pct(counts.detection),
                    false_alarm: pct(counts.false_alarm),
                    miss_detection: pct(counts.miss_detection),
                    undetection: pct(counts.undetection),
                },
                mean_confidence: mean(conf),
                mean_angle_error: mean(err),
                infeasible,
                failed,
            }
        })
        .collect();
    AggregateStats { points }
}

/// Config echo, aggregate statistics and every run record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub stats: AggregateStats,
    pub runs: Vec<RunRecord>,
}

fn aborts(e: &Error) -> bool {
    matches!(e, Error::Config(_) | Error::Shape(_) | Error::DegeneratePlacement(_) | Error::Io(_))
}

fn precoder_key(c: &ExperimentConfig) -> (usize, usize, u64) {
    (c.num_tx, c.num_rx, c.gamma_db.to_bits())
}

struct Prepared {
    scenario: Scenario,
    solution: Result<PrecoderSolution>,
}

fn prepare(config: &ExperimentConfig, users: &[Point], target: Point, run_seed: u64) -> Result<Prepared> {
    let scenario = config.scenario_at(users, target)?;
    let channels = generate_channels(&scenario, derive_seed(run_seed, "channels", 0))?;
    let solution = match design_precoder(&scenario, &channels, &config.design_options(), derive_seed(run_seed, "design", 0)) {
        Err(e) if aborts(&e) => return Err(e),
        s => s,
    };
    Ok(Prepared { scenario, solution })
}

fn execute_run(base: &ExperimentConfig, points: &[SweepPoint], run: usize) -> Result<Vec<RunRecord>> {
    let seed = base.run_seed(run);
    let (users, target) = base.placement_for_run(run)?;
    let grid = base.grid()?;
    let angles = AngleGrid::standard();
    let attack_seed = derive_seed(seed, "attack", 0);
    // Only antenna counts and the SINR threshold change the precoder.
    let mut cache: Vec<((usize, usize, u64), Prepared)> = Vec::new();
    let mut records = Vec::with_capacity(points.len());
    for (p, point) in points.iter().enumerate() {
        let cfg = &point.config;
        let key = precoder_key(cfg);
        let idx = match cache.iter().position(|(k, _)| *k == key) {
            Some(i) => i,
            None => {
                cache.push((key, prepare(cfg, &users, target, seed)?));
                cache.len() - 1
            }
        };
        let prepared = &cache[idx].1;
        let theta = prepared.scenario.theta_target()?;
        let mut record = RunRecord {
            run,
            point: p,
            seed,
            theta_target: theta,
            design_iterations: 0,
            converged: false,
            outcome: None,
            excluded: None,
        };
        match &prepared.solution {
            Ok(sol) => {
                record.design_iterations = sol.objective_trace.len();
                record.converged = sol.converged;
                let attack =
                    run_particle_filter_traced(sol, &grid, &angles, cfg.delta, &cfg.filter_config(), attack_seed)
                        .and_then(|r| classify(&r.last, &grid, theta, &cfg.thresholds()));
                match attack {
                    Ok(o) => record.outcome = Some(o),
                    Err(e) if aborts(&e) => return Err(e),
                    Err(e) => record.excluded = Some(e.kind().to_string()),
                }
            }
            Err(e) => record.excluded = Some(e.kind().to_string()),
        }
        records.push(record);
    }
    Ok(records)
}

/// Runs every (run, sweep point) pair; `workers = None` uses the global thread pool.
///
/// The result does not depend on the worker count.
pub fn run_experiment(config: &ExperimentConfig, workers: Option<usize>) -> Result<ExperimentReport> {
    config.validate()?;
    let points = config.sweep_points();
    let work = || -> Result<Vec<RunRecord>> {
        let per_run = (0..config.num_runs)
            .into_par_iter()
            .map(|r| execute_run(config, &points, r))
            .collect::<Result<Vec<_>>>()?;
        Ok(per_run.into_iter().flatten().collect())
    };
    let runs = match workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(format!("cannot start {n} workers: {e}")))?
            .install(work)?,
        None => work()?,
    };
    let stats = aggregate(&points, &runs);
    Ok(ExperimentReport {
        config: config.clone(),
        stats,
        runs,
    })
}

/// Transmit beampattern and one noisy reconstruction on the 0..90 degree grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BeampatternCurves {
    pub angles: Vec<f64>,
    pub transmit: Vec<f64>,
    pub reconstructed: Vec<f64>,
}

impl BeampatternCurves {
    pub fn new(solution: &PrecoderSolution, sigma_sq: f64, delta: f64, rng_seed: u64) -> Result<Self> {
        let angles: Vec<f64> = AngleGrid::standard().angles().collect();
        let obs = observe_precoder(solution, sigma_sq, rng_seed, 1)?;
        let r_tilde = obs.w_tilde.gram();
        Ok(Self {
            transmit: angles.iter().map(|&t| beampattern(&solution.r, t, delta)).collect(),
            reconstructed: angles.iter().map(|&t| beampattern(&r_tilde, t, delta)).collect(),
            angles,
        })
    }
}

/// Everything needed to redraw one attack: the beampatterns and the particle clouds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackTrace {
    pub run: usize,
    pub scenario: Scenario,
    pub solution: PrecoderSolution,
    pub beampattern: BeampatternCurves,
    pub particles: FilterRun,
    pub outcome: EstimationOutcome,
}

/// Replays run `run` at the first sweep point with full traces.
pub fn trace_run(config: &ExperimentConfig, run: usize) -> Result<AttackTrace> {
    config.validate()?;
    let point = config.sweep_points().swap_remove(0).config;
    let seed = point.run_seed(run);
    let (users, target) = point.placement_for_run(run)?;
    let prepared = prepare(&point, &users, target, seed)?;
    let solution = prepared.solution?;
    let grid = point.grid()?;
    let attack_seed = derive_seed(seed, "attack", 0);
    let filter = point.filter_config();
    let particles =
        run_particle_filter_traced(&solution, &grid, &AngleGrid::standard(), point.delta, &filter, attack_seed)?;
    let theta = prepared.scenario.theta_target()?;
    let outcome = classify(&particles.last, &grid, theta, &point.thresholds())?;
    let beampattern = BeampatternCurves::new(
        &solution,
        filter.sigma_sq,
        point.delta,
        derive_seed(attack_seed, "noise", 0),
    )?;
    Ok(AttackTrace {
        run,
        scenario: prepared.scenario,
        solution,
        beampattern,
        particles,
        outcome,
    })
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    Ok(csv::Writer::from_writer(fs::File::create(path)?))
}

pub fn write_summary_csv(path: &Path, stats: &AggregateStats) -> Result<()> {
    let mut w = csv_writer(path)?;
    let axes: Vec<&str> = stats
        .points
        .first()
        .map(|p| p.settings.iter().map(|s| s.parameter.name()).collect())
        .unwrap_or_default();
    let mut header: Vec<&str> = vec!["point"];
    header.extend(&axes);
    header.extend([
        "runs",
        "detection",
        "false_alarm",
        "miss_detection",
        "undetection",
        "detection_pct",
        "false_alarm_pct",
        "miss_detection_pct",
        "undetection_pct",
        "mean_confidence",
        "mean_angle_error",
        "infeasible",
        "failed",
    ]);
    w.write_record(&header)?;
    for (i, p) in stats.points.iter().enumerate() {
        let mut row = vec![i.to_string()];
        row.extend(p.settings.iter().map(|s| s.value.to_string()));
        let c = p.counts;
        let q = p.percentages;
        row.extend(
            [c.detection, c.false_alarm, c.miss_detection, c.undetection]
                .iter()
                .map(|v| v.to_string()),
        );
        row.insert(1 + axes.len(), p.runs.to_string());
        row.extend(
            [q.detection, q.false_alarm, q.miss_detection, q.undetection, p.mean_confidence, p.mean_angle_error]
                .iter()
                .map(|v| v.to_string()),
        );
        row.push(p.infeasible.to_string());
        row.push(p.failed.to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_beampattern_csv(path: &Path, curves: &BeampatternCurves) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["angle_deg", "transmit", "reconstructed"])?;
    for ((a, t), r) in curves.angles.iter().zip(&curves.transmit).zip(&curves.reconstructed) {
        w.write_record([a.to_string(), t.to_string(), r.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Particle clouds at `t = 0` and `t = T`, one row per particle.
pub fn write_particles_csv(path: &Path, run: &FilterRun, grid: &GridWorld) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["generation", "x", "y", "weight", "cell"])?;
    for set in [&run.initial, &run.last] {
        for (p, q) in set.positions.iter().zip(&set.weights) {
            let cell = grid.cell_index(*p).map_or(String::new(), |n| n.to_string());
            w.write_record([set.generation.to_string(), p.x.to_string(), p.y.to_string(), q.to_string(), cell])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn read_report(path: &Path) -> Result<ExperimentReport> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

pub fn read_config(path: &Path) -> Result<ExperimentConfig> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

/// Writes `summary.csv` and `results.json` into `dir`, plus `beampattern.csv`
/// and `particles.csv` when a trace is given.
pub fn emit_results(report: &ExperimentReport, trace: Option<&AttackTrace>, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_summary_csv(&dir.join("summary.csv"), &report.stats)?;
    write_json(&dir.join("results.json"), report)?;
    if let Some(t) = trace {
        write_beampattern_csv(&dir.join("beampattern.csv"), &t.beampattern)?;
        write_particles_csv(&dir.join("particles.csv"), &t.particles, &report.config.grid()?)?;
    }
    Ok(())
}
