//! Joint radar-communication transmit precoder design.
//!
//! The design alternates between (1) a relaxed covariance solve with the
//! receive beamformers held fixed, (2) extraction of the communication and
//! radar precoders from the returned covariances, and (3) an MMSE update of
//! the receive beamformers, until the relative change of the beampattern
//! objective drops below `epsilon`.

mod sdr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

pub use sdr::{BeamObjective, SdrSolution};

use crate::error::{Error, Result};
use crate::numerics::{psd_sqrt_scaled, ComplexMatrix, HermitianMatrix, C64};
use crate::rng::rng_from_seed;
use crate::scene::{complex_gaussian, steering_vector, AngleGrid, ChannelSet, Scenario};

/// How the samples of the angle grid count in the least-squares fit.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridWeighting {
    /// Every sample counts once.
    Uniform,
    /// Sample `theta_l` counts `cos(theta_l)`, the width it covers in `sin(theta)`,
    /// so samples crowded near endfire do not dominate the fit.
    #[default]
    Aperture,
}

impl GridWeighting {
    pub fn weight(self, theta_deg: f64) -> f64 {
        match self {
            GridWeighting::Uniform => 1.0,
            GridWeighting::Aperture => theta_deg.to_radians().cos().max(0.0),
        }
    }
}

/// Indicator beam of width `beam_width` centred on `beam_center`, sampled on `angles`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DesiredBeampattern {
    pub values: Vec<f64>,
    pub angles: AngleGrid,
    /// Fit weight per sample.
    pub weights: Vec<f64>,
    pub beam_center: f64,
    pub beam_width: f64,
}

impl DesiredBeampattern {
    pub fn with_weighting(mut self, weighting: GridWeighting) -> Self {
        self.weights = self.angles.angles().map(|t| weighting.weight(t)).collect();
        self
    }
}

pub fn desired_beampattern(theta_target: f64, beam_width: f64, angle_grid: &AngleGrid) -> Result<DesiredBeampattern> {
    if !(beam_width > 0.0) {
        return Err(Error::Config(format!("beam width must be positive, got {beam_width}")));
    }
    let half = beam_width / 2.0;
    let values = angle_grid
        .angles()
        .map(|t| if (t - theta_target).abs() <= half + 1e-9 { 1.0 } else { 0.0 })
        .collect();
    Ok(DesiredBeampattern {
        values,
        angles: angle_grid.clone(),
        weights: Vec::new(),
        beam_center: theta_target,
        beam_width,
    }
    .with_weighting(GridWeighting::default()))
}

/// `a(theta)^H R a(theta)`, clipped below at zero.
pub fn beampattern(r: &HermitianMatrix, theta_deg: f64, delta: f64) -> f64 {
    let a = steering_vector(theta_deg, r.dim(), delta);
    r.quadratic_form(a.matrix()).max(0.0)
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

/// Result of the alternating design.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrecoderSolution {
    /// `M_T x K`, one column per user.
    pub w_c: ComplexMatrix,
    /// `M_T x M_T`.
    pub w_r: ComplexMatrix,
    pub r: HermitianMatrix,
    pub r_k: Vec<HermitianMatrix>,
    /// `N_R x 1` each.
    pub receive_beamformers: Vec<ComplexMatrix>,
    pub alpha: f64,
    pub objective_trace: Vec<f64>,
    pub converged: bool,
}

impl PrecoderSolution {
    /// `W = [W_c | W_r]`.
    pub fn precoder(&self) -> ComplexMatrix {
        self.w_c.hstack(&self.w_r).expect("W_c and W_r share M_T rows")
    }

    pub fn num_tx(&self) -> usize {
        self.w_c.nrows()
    }
}

fn check_user(k: usize, w_c: &ComplexMatrix, channels: &ChannelSet) -> Result<()> {
    if k >= channels.num_users() || k >= w_c.ncols() {
        return Err(Error::Shape(format!(
            "user {k} out of range ({} channels, {} precoder columns)",
            channels.num_users(),
            w_c.ncols()
        )));
    }
    if channels.h[k].ncols() != w_c.nrows() {
        return Err(Error::Shape(format!(
            "channel has {} columns but precoder has {} rows",
            channels.h[k].ncols(),
            w_c.nrows()
        )));
    }
    Ok(())
}

/// SINR of user `k` (0-based) for explicit precoders and receive beamformer.
pub fn sinr_with(
    k: usize,
    w_c: &ComplexMatrix,
    w_r: &ComplexMatrix,
    u: &ComplexMatrix,
    channels: &ChannelSet,
    sigma_k_sq: f64,
) -> Result<f64> {
    check_user(k, w_c, channels)?;
    let u_norm = u.matrix().norm_squared();
    if u_norm == 0.0 {
        return Err(Error::DegenerateBeamformer(k));
    }
    let uh_h = u.matrix().adjoint() * channels.h[k].matrix();
    let comm = &uh_h * w_c.matrix();
    let radar = &uh_h * w_r.matrix();
    let signal = comm[(0, k)].norm_sqr();
    let interference: f64 = comm.iter().enumerate().filter(|(i, _)| *i != k).map(|(_, z)| z.norm_sqr()).sum::<f64>()
        + radar.iter().map(|z| z.norm_sqr()).sum::<f64>();
    Ok(signal / (interference + sigma_k_sq * u_norm))
}

/// SINR of user `k` (0-based) under the solution's own receive beamformers.
pub fn sinr(k: usize, solution: &PrecoderSolution, channels: &ChannelSet, sigma_k_sq: f64) -> Result<f64> {
    let u = solution
        .receive_beamformers
        .get(k)
        .ok_or_else(|| Error::Shape(format!("no receive beamformer for user {k}")))?;
    sinr_with(k, &solution.w_c, &solution.w_r, u, channels, sigma_k_sq)
}

/// Relaxed covariance solve with fixed receive beamformers; `gamma` is linear.
pub fn solve_sdr_step(
    channels: &ChannelSet,
    receive_beamformers: &[ComplexMatrix],
    desired: &DesiredBeampattern,
    scenario: &Scenario,
    gamma: f64,
) -> Result<SdrSolution> {
    let objective = BeamObjective::new(desired, scenario.num_tx, scenario.delta);
    sdr::solve(&objective, channels, receive_beamformers, scenario, gamma)
}

/// `w_k = (u_k^H H_k R_k H_k^H u_k)^(-1/2) R_k H_k^H u_k`, stacked as `W_c`.
pub fn extract_communication_precoder(
    r_k: &[HermitianMatrix],
    channels: &ChannelSet,
    receive_beamformers: &[ComplexMatrix],
) -> Result<ComplexMatrix> {
    let k_users = r_k.len();
    if channels.num_users() != k_users || receive_beamformers.len() != k_users {
        return Err(Error::Shape("user count mismatch between R_k, channels and beamformers".into()));
    }
    let m = r_k.first().map_or(0, HermitianMatrix::dim);
    let mut w_c = DMatrix::<C64>::zeros(m, k_users);
    for (k, ((rk, h), u)) in r_k.iter().zip(&channels.h).zip(receive_beamformers).enumerate() {
        let g = h.matrix().adjoint() * u.matrix();
        let rg = rk.matrix() * &g;
        let quad = (g.adjoint() * &rg)[(0, 0)].re;
        let scale = rk.matrix().norm() * g.norm_squared();
        if !(quad > 1e-14 * scale) || !quad.is_finite() {
            return Err(Error::RankDeficientUser(k));
        }
        w_c.set_column(k, &(rg / C64::new(quad.sqrt(), 0.0)).column(0));
    }
    ComplexMatrix::new(w_c)
}

/// `W_r = sqrt(R - W_c W_c^H)` through the eigenvalue-clipping square root.
///
/// The clipping threshold is taken relative to `R`, so a residual that is pure
/// rounding noise yields `W_r = 0`.
pub fn extract_radar_precoder(r: &HermitianMatrix, w_c: &ComplexMatrix) -> Result<ComplexMatrix> {
    let residual = r.sub(&w_c.gram());
    psd_sqrt_scaled(&residual, r.matrix().norm()).map_err(|e| match e {
        Error::NotPositiveSemidefinite(v) => Error::ResidualNotPsd(v),
        other => other,
    })
}

/// MMSE receive beamformers `u_k = (H_k (W W^H - w_k w_k^H) H_k^H + sigma^2 I)^(-1) H_k w_k`.
pub fn update_receive_beamformers(
    w_c: &ComplexMatrix,
    w_r: &ComplexMatrix,
    channels: &ChannelSet,
    sigma_k_sq: f64,
) -> Result<Vec<ComplexMatrix>> {
    if !(sigma_k_sq > 0.0) {
        return Err(Error::Config("MMSE update needs sigma_k^2 > 0".into()));
    }
    let total = w_c.gram().matrix() + w_r.gram().matrix();
    (0..channels.num_users())
        .map(|k| {
            check_user(k, w_c, channels)?;
            let h = channels.h[k].matrix();
            let wk = DMatrix::from_column_slice(w_c.nrows(), 1, w_c.column(k).as_slice());
            let interference = &total - &wk * wk.adjoint();
            let n_r = h.nrows();
            let cov = h * interference * h.adjoint() + DMatrix::<C64>::identity(n_r, n_r) * C64::new(sigma_k_sq, 0.0);
            let rhs = h * &wk;
            let u = cov.lu().solve(&rhs).ok_or(Error::DegenerateBeamformer(k))?;
            ComplexMatrix::new(u)
        })
        .collect()
}

/// Knobs of the alternating design.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DesignOptions {
    pub gamma_db: f64,
    pub epsilon: f64,
    pub max_iters: usize,
    pub beam_width: f64,
    pub angle_grid: AngleGrid,
    pub weighting: GridWeighting,
}

impl Default for DesignOptions {
    fn default() -> Self {
        Self {
            gamma_db: 12.0,
            epsilon: 0.01,
            max_iters: 20,
            beam_width: 10.0,
            angle_grid: AngleGrid::design(),
            weighting: GridWeighting::default(),
        }
    }
}

fn random_unit_beamformers(channels: &ChannelSet, seed: u64) -> Result<Vec<ComplexMatrix>> {
    let mut rng = rng_from_seed(seed);
    channels
        .h
        .iter()
        .map(|h| {
            let v = DMatrix::from_fn(h.nrows(), 1, |_, _| complex_gaussian(&mut rng, 1.0));
            let n = v.norm();
            ComplexMatrix::new(v / C64::new(n, 0.0))
        })
        .collect()
}

/// Upper bound on any user SINR under the per-antenna power constraint:
/// `g^H R g <= P_t |g|^2` for `g = H^H u` and `|g| <= sigma_max(H) |u|`.
fn sinr_ceiling(h: &ComplexMatrix, p_t: f64, sigma_sq: f64) -> f64 {
    let top = h.gram().eigenvalues().into_iter().fold(0.0, f64::max);
    p_t * top / sigma_sq
}

struct Iterate {
    w_c: ComplexMatrix,
    w_r: ComplexMatrix,
    r: HermitianMatrix,
    r_k: Vec<HermitianMatrix>,
    alpha: f64,
    objective: f64,
}

/// Alternating design of `W_c`, `W_r` and the receive beamformers.
///
/// Each covariance solve starts from receive beamformers for which the previous
/// iterate is still feasible, so the objective can only go down; if the conic
/// solver's tolerance would register an increase the previous iterate is kept.
pub fn design_precoder(
    scenario: &Scenario,
    channels: &ChannelSet,
    options: &DesignOptions,
    rng_seed: u64,
) -> Result<PrecoderSolution> {
    scenario.validate()?;
    if channels.num_users() != scenario.num_users() {
        return Err(Error::Shape("channel count differs from user count".into()));
    }
    if options.max_iters == 0 {
        return Err(Error::Config("max_iters must be at least 1".into()));
    }
    let gamma = db_to_linear(options.gamma_db);
    if channels.h.iter().any(|h| sinr_ceiling(h, scenario.p_t, scenario.sigma_k_sq) < gamma) {
        return Err(Error::InfeasibleQos);
    }
    let theta_target = scenario.theta_target()?;
    let desired =
        desired_beampattern(theta_target, options.beam_width, &options.angle_grid)?.with_weighting(options.weighting);
    let objective = BeamObjective::new(&desired, scenario.num_tx, scenario.delta);

    let mut u = random_unit_beamformers(channels, rng_seed)?;
    let mut best: Option<Iterate> = None;
    let mut trace = Vec::new();
    let mut converged = false;

    for _ in 0..options.max_iters {
        let step = sdr::solve(&objective, channels, &u, scenario, gamma)?;
        let w_c = extract_communication_precoder(&step.r_k, channels, &u)?;
        let w_r = extract_radar_precoder(&step.r, &w_c)?;
        let r = w_c.gram().add(&w_r.gram());
        let (phi, alpha) = objective.evaluate(&r);
        let r_k = step.r_k.iter().map(|rk| rk.clip_to_psd()).collect::<Result<Vec<_>>>()?;
        let candidate = Iterate {
            w_c,
            w_r,
            r,
            r_k,
            alpha,
            objective: phi,
        };
        let current = match best.take() {
            Some(prev) if prev.objective <= candidate.objective => prev,
            _ => candidate,
        };
        trace.push(current.objective);
        u = update_receive_beamformers(&current.w_c, &current.w_r, channels, scenario.sigma_k_sq)?;
        best = Some(current);
        if let [.., before, last] = trace[..] {
            let change = (last - before).abs();
            if change <= options.epsilon * last.abs() || (last == 0.0 && before == 0.0) {
                converged = true;
                break;
            }
        }
    }

    let it = best.expect("at least one iteration ran");
    Ok(PrecoderSolution {
        w_c: it.w_c,
        w_r: it.w_r,
        r: it.r,
        r_k: it.r_k,
        receive_beamformers: u,
        alpha: it.alpha,
        objective_trace: trace,
        converged,
    })
}
