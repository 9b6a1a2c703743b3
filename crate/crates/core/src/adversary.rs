//! The internal adversary: it sees noisy copies of `W = [W_c | W_r]`, rebuilds
//! the transmit beampattern, and runs a grid particle filter over the search
//! area to find the radar target's azimuth.
//!
//! Every particle inside cell `n` shares the likelihood `1 - exp(-B_n)`, where
//! `B_n` is the reconstructed beampattern at the angle-grid sample nearest to
//! the cell's midpoint azimuth. Resampling happens every step: cells are drawn
//! multinomially from per-cell aggregated weights and each new particle is
//! placed uniformly inside its drawn cell.

use rand::distributions::{Distribution, WeightedIndex};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{ComplexMatrix, HermitianMatrix};
use crate::precoder::PrecoderSolution;
use crate::rng::{derive_seed, rng_from_seed};
use crate::scene::{complex_gaussian, steering_vector, AngleGrid, GridWorld, Point};

/// One noisy copy of the stacked precoder.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrecoderObservation {
    /// `M_T x (K + M_T)`.
    pub w_tilde: ComplexMatrix,
    pub sigma_sq: f64,
    pub index: u64,
}

/// `[W_c + N_c, W_r + N_r]` with i.i.d. CN(0, sigma_sq) noise, fresh for every `index`.
pub fn observe_precoder(solution: &PrecoderSolution, sigma_sq: f64, rng_seed: u64, index: u64) -> Result<PrecoderObservation> {
    if !(sigma_sq >= 0.0) {
        return Err(Error::Config(format!("observation noise power must be >= 0, got {sigma_sq}")));
    }
    let w = solution.precoder();
    let w_tilde = if sigma_sq == 0.0 {
        w
    } else {
        let mut rng = rng_from_seed(derive_seed(rng_seed, "observation", index));
        let noisy = w.matrix().map(|z| z + complex_gaussian(&mut rng, sigma_sq));
        ComplexMatrix::new(noisy)?
    };
    Ok(PrecoderObservation {
        w_tilde,
        sigma_sq,
        index,
    })
}

/// Per-cell reconstructed beampattern and the likelihood derived from it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellLikelihoodTable {
    pub beampattern: Vec<f64>,
    pub likelihood: Vec<f64>,
}

impl CellLikelihoodTable {
    /// `likelihood_n = 1 - exp(-B_n)`, with `B_n` clipped below at zero.
    pub fn from_beampattern(beampattern: Vec<f64>) -> Self {
        let beampattern: Vec<f64> = beampattern.into_iter().map(|b| b.max(0.0)).collect();
        let likelihood = beampattern.iter().map(|b| -(-b).exp_m1()).collect();
        Self {
            beampattern,
            likelihood,
        }
    }

    /// Table with prescribed likelihoods in `[0, 1)`; the matching `B_n` is back-solved.
    pub fn from_likelihoods(likelihood: &[f64]) -> Result<Self> {
        if let Some(bad) = likelihood.iter().find(|l| !(0.0..1.0).contains(*l)) {
            return Err(Error::Config(format!("likelihood {bad} outside [0, 1)")));
        }
        Ok(Self::from_beampattern(likelihood.iter().map(|l| -(-l).ln_1p()).collect()))
    }

    pub fn len(&self) -> usize {
        self.likelihood.len()
    }

    pub fn is_empty(&self) -> bool {
        self.likelihood.is_empty()
    }
}

/// Steering vectors of each cell's nearest angle-grid sample, built once per grid.
#[derive(Clone, Debug)]
pub struct CellProbe {
    steering: Vec<ComplexMatrix>,
    /// Matched angle-grid sample per cell (degrees).
    pub matched_angles: Vec<f64>,
}

impl CellProbe {
    pub fn new(grid: &GridWorld, angle_grid: &AngleGrid, num_tx: usize, delta: f64) -> Self {
        let matched_angles: Vec<f64> = grid
            .cells
            .iter()
            .map(|c| angle_grid.angle(angle_grid.nearest_index(c.angle)))
            .collect();
        let steering = matched_angles.iter().map(|&t| steering_vector(t, num_tx, delta)).collect();
        Self {
            steering,
            matched_angles,
        }
    }

    /// `B_n = a^H(theta_n) R~ a(theta_n)` with `R~ = W~ W~^H`.
    pub fn table(&self, obs: &PrecoderObservation) -> Result<CellLikelihoodTable> {
        let m = obs.w_tilde.nrows();
        if self.steering.first().is_some_and(|a| a.nrows() != m) {
            return Err(Error::Shape(format!(
                "observation has {m} antennas, probe expects {}",
                self.steering[0].nrows()
            )));
        }
        let r_tilde: HermitianMatrix = obs.w_tilde.gram();
        Ok(CellLikelihoodTable::from_beampattern(
            self.steering.iter().map(|a| r_tilde.quadratic_form(a.matrix())).collect(),
        ))
    }
}

pub fn reconstruct_beampattern(
    obs: &PrecoderObservation,
    grid: &GridWorld,
    angle_grid: &AngleGrid,
    delta: f64,
) -> Result<CellLikelihoodTable> {
    CellProbe::new(grid, angle_grid, obs.w_tilde.nrows(), delta).table(obs)
}

/// Particle positions with normalized importance weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParticleSet {
    pub positions: Vec<Point>,
    pub weights: Vec<f64>,
    pub generation: usize,
}

impl ParticleSet {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    fn cells(&self, grid: &GridWorld) -> Result<Vec<usize>> {
        self.positions
            .iter()
            .map(|&p| {
                grid.cell_index(p).ok_or_else(|| {
                    Error::DegeneratePlacement(format!("particle ({}, {}) outside the search area", p.x, p.y))
                })
            })
            .collect()
    }

    /// Particle count per cell.
    pub fn occupancy(&self, grid: &GridWorld) -> Result<Vec<usize>> {
        let mut counts = vec![0; grid.num_cells()];
        for n in self.cells(grid)? {
            counts[n] += 1;
        }
        Ok(counts)
    }

    /// Total weight per cell.
    pub fn cell_mass(&self, grid: &GridWorld) -> Result<Vec<f64>> {
        let mut mass = vec![0.0; grid.num_cells()];
        for (n, w) in self.cells(grid)?.into_iter().zip(&self.weights) {
            mass[n] += w;
        }
        Ok(mass)
    }
}

pub fn init_particles(grid: &GridWorld, m: usize, rng_seed: u64) -> Result<ParticleSet> {
    if m == 0 {
        return Err(Error::Config("need at least one particle".into()));
    }
    let mut rng = rng_from_seed(rng_seed);
    Ok(ParticleSet {
        positions: (0..m).map(|_| grid.sample_uniform(&mut rng)).collect(),
        weights: vec![1.0 / m as f64; m],
        generation: 0,
    })
}

/// `q_i <- likelihood(cell(i)) * q_i`, then renormalized.
pub fn update_weights(particles: &ParticleSet, table: &CellLikelihoodTable, grid: &GridWorld) -> Result<ParticleSet> {
    if table.len() != grid.num_cells() {
        return Err(Error::Shape(format!("{} likelihoods for {} cells", table.len(), grid.num_cells())));
    }
    let cells = particles.cells(grid)?;
    let mut weights: Vec<f64> = cells
        .iter()
        .zip(&particles.weights)
        .map(|(&n, &w)| table.likelihood[n] * w)
        .collect();
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return Err(Error::DegenerateLikelihood);
    }
    weights.iter_mut().for_each(|w| *w /= total);
    Ok(ParticleSet {
        positions: particles.positions.clone(),
        weights,
        generation: particles.generation,
    })
}

/// How resident particle weights are pooled into a cell's resampling weight.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellAggregation {
    /// Sum of resident weights (the cell's posterior mass).
    #[default]
    Sum,
    /// Arithmetic mean of resident weights.
    Mean,
}

/// Multinomial cell resampling; every new particle gets weight `1/M`.
pub fn resample(
    particles: &ParticleSet,
    grid: &GridWorld,
    aggregation: CellAggregation,
    rng_seed: u64,
) -> Result<ParticleSet> {
    let m = particles.len();
    let mass = particles.cell_mass(grid)?;
    let cell_weights: Vec<f64> = match aggregation {
        CellAggregation::Sum => mass,
        CellAggregation::Mean => {
            let counts = particles.occupancy(grid)?;
            mass.iter()
                .zip(&counts)
                .map(|(&w, &c)| if c == 0 { 0.0 } else { w / c as f64 })
                .collect()
        }
    };
    let dist = WeightedIndex::new(&cell_weights).map_err(|_| Error::DegenerateLikelihood)?;
    let mut rng = rng_from_seed(rng_seed);
    let positions = (0..m)
        .map(|_| {
            let n = dist.sample(&mut rng);
            grid.sample_in_cell(n, &mut rng)
        })
        .collect();
    Ok(ParticleSet {
        positions,
        weights: vec![1.0 / m as f64; m],
        generation: particles.generation,
    })
}

/// Particle filter settings for one attack.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FilterConfig {
    pub particles: usize,
    pub observations: usize,
    pub sigma_sq: f64,
    #[serde(default)]
    pub aggregation: CellAggregation,
}

/// Start and end particle clouds of one attack.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FilterRun {
    pub initial: ParticleSet,
    pub last: ParticleSet,
}

fn filter_loop(
    grid: &GridWorld,
    config: &FilterConfig,
    rng_seed: u64,
    mut table_at: impl FnMut(u64) -> Result<CellLikelihoodTable>,
) -> Result<FilterRun> {
    let initial = init_particles(grid, config.particles, derive_seed(rng_seed, "init", 0))?;
    let mut current = initial.clone();
    for t in 1..=config.observations as u64 {
        let table = table_at(t)?;
        let weighted = update_weights(&current, &table, grid)?;
        current = resample(&weighted, grid, config.aggregation, derive_seed(rng_seed, "resample", t))?;
        current.generation = t as usize;
    }
    Ok(FilterRun { initial, last: current })
}

/// Full attack against a fixed precoder solution, keeping the initial cloud.
pub fn run_particle_filter_traced(
    solution: &PrecoderSolution,
    grid: &GridWorld,
    angle_grid: &AngleGrid,
    delta: f64,
    config: &FilterConfig,
    rng_seed: u64,
) -> Result<FilterRun> {
    let probe = CellProbe::new(grid, angle_grid, solution.num_tx(), delta);
    let noise_seed = derive_seed(rng_seed, "noise", 0);
    filter_loop(grid, config, rng_seed, |t| {
        let obs = observe_precoder(solution, config.sigma_sq, noise_seed, t)?;
        probe.table(&obs)
    })
}

pub fn run_particle_filter(
    solution: &PrecoderSolution,
    grid: &GridWorld,
    angle_grid: &AngleGrid,
    delta: f64,
    config: &FilterConfig,
    rng_seed: u64,
) -> Result<ParticleSet> {
    run_particle_filter_traced(solution, grid, angle_grid, delta, config, rng_seed).map(|r| r.last)
}

/// Filter driven by one fixed likelihood table for `steps` steps; returns the
/// cell mass right after the last weight update, before that step's resampling.
pub fn static_filter_cell_mass(
    table: &CellLikelihoodTable,
    grid: &GridWorld,
    particles: usize,
    steps: usize,
    aggregation: CellAggregation,
    rng_seed: u64,
) -> Result<Vec<f64>> {
    if steps == 0 {
        return init_particles(grid, particles, derive_seed(rng_seed, "init", 0))?.cell_mass(grid);
    }
    let config = FilterConfig {
        particles,
        observations: steps - 1,
        sigma_sq: 0.0,
        aggregation,
    };
    let run = filter_loop(grid, &config, rng_seed, |_| Ok(table.clone()))?;
    update_weights(&run.last, table, grid)?.cell_mass(grid)
}

/// Exact cell posterior for a static target: `prior_n * prod_t likelihood_t(n)`, normalized.
///
/// Works in log space so long sequences do not underflow.
pub fn exact_cell_posterior(tables: &[Vec<f64>], prior: &[f64]) -> Result<Vec<f64>> {
    let n = prior.len();
    if tables.iter().any(|t| t.len() != n) {
        return Err(Error::Shape("likelihood tables must match the prior length".into()));
    }
    let log_post: Vec<f64> = (0..n)
        .map(|i| prior[i].ln() + tables.iter().map(|t| t[i].ln()).sum::<f64>())
        .collect();
    let top = log_post.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !top.is_finite() {
        return Err(Error::DegenerateLikelihood);
    }
    let unnorm: Vec<f64> = log_post.iter().map(|l| (l - top).exp()).collect();
    let z: f64 = unnorm.iter().sum();
    Ok(unnorm.into_iter().map(|v| v / z).collect())
}

pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OutcomeLabel {
    Detection,
    FalseAlarm,
    MissDetection,
    Undetection,
}

impl OutcomeLabel {
    pub const ALL: [OutcomeLabel; 4] = [
        OutcomeLabel::Detection,
        OutcomeLabel::FalseAlarm,
        OutcomeLabel::MissDetection,
        OutcomeLabel::Undetection,
    ];

    /// Confident and within the angle threshold, or any of the three failure modes.
    pub fn from_measures(confidence: f64, angle_error: f64, thresholds: &Thresholds) -> Self {
        let confident = confidence >= thresholds.confidence;
        let close = angle_error < thresholds.angle_deg;
        match (confident, close) {
            (true, true) => OutcomeLabel::Detection,
            (true, false) => OutcomeLabel::FalseAlarm,
            (false, true) => OutcomeLabel::MissDetection,
            (false, false) => OutcomeLabel::Undetection,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub confidence: f64,
    pub angle_deg: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            confidence: 0.9,
            angle_deg: 10.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimationOutcome {
    pub label: OutcomeLabel,
    /// Share of particles in the most-occupied cell.
    pub confidence: f64,
    /// Midpoint azimuth of the most-occupied cell (degrees).
    pub estimated_angle: f64,
    pub angle_error: f64,
    pub cell: usize,
}

/// Scores the final cloud; ties for the most-occupied cell go to the lowest cell index.
pub fn classify(
    particles: &ParticleSet,
    grid: &GridWorld,
    theta_target: f64,
    thresholds: &Thresholds,
) -> Result<EstimationOutcome> {
    if particles.is_empty() {
        return Err(Error::Config("cannot classify an empty particle set".into()));
    }
    let counts = particles.occupancy(grid)?;
    let (cell, &count) = counts
        .iter()
        .enumerate()
        .rev()
        .max_by_key(|(_, &c)| c)
        .expect("grid has cells");
    let confidence = count as f64 / particles.len() as f64;
    let estimated_angle = grid.cells[cell].angle;
    let angle_error = (estimated_angle - theta_target).abs();
    Ok(EstimationOutcome {
        label: OutcomeLabel::from_measures(confidence, angle_error, thresholds),
        confidence,
        estimated_angle,
        angle_error,
        cell,
    })
}
