//! Node geometry, steering vectors, Rayleigh channels and the adversary's search grid.
//!
//! The search area is the rectangle `[0, extent_x] x [0, extent_y]` with the
//! base station normally at the corner `(0, 0)`, so every azimuth seen from the
//! BS falls in `[0°, 90°]`. Angles are degrees at every public boundary.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{ComplexMatrix, C64};
use crate::rng::rng_from_seed;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Azimuth of `point` seen from `bs`, measured from the positive x-axis.
pub fn angle_of(point: Point, bs: Point) -> Result<f64> {
    if point == bs {
        return Err(Error::DegeneratePlacement(format!(
            "point ({}, {}) coincides with the base station",
            point.x, point.y
        )));
    }
    Ok((point.y - bs.y).atan2(point.x - bs.x).to_degrees())
}

/// ULA response `a(theta)` with entries `exp(j 2 pi m delta sin(theta))`, as an `m_t x 1` column.
pub fn steering_vector(theta_deg: f64, m_t: usize, delta: f64) -> ComplexMatrix {
    let phase = 2.0 * std::f64::consts::PI * delta * theta_deg.to_radians().sin();
    ComplexMatrix::new(DMatrix::from_fn(m_t, 1, |m, _| C64::from_polar(1.0, phase * m as f64)))
        .expect("unit-modulus entries are finite")
}

/// Base station, users, target and radio parameters of one scenario.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub bs_position: Point,
    pub user_positions: Vec<Point>,
    /// 1-based index into `user_positions`.
    pub adversary_index: usize,
    pub target_position: Point,
    pub num_tx: usize,
    pub num_rx: usize,
    /// Antenna spacing in wavelengths.
    pub delta: f64,
    /// Total transmit power (linear).
    pub p_t: f64,
    /// Receiver noise power at each user (W).
    pub sigma_k_sq: f64,
    pub path_loss_exponent: f64,
    /// Side lengths of the search area (m).
    pub extent: (f64, f64),
}

impl Scenario {
    pub fn num_users(&self) -> usize {
        self.user_positions.len()
    }

    /// Target azimuth seen from the BS (degrees).
    pub fn theta_target(&self) -> Result<f64> {
        angle_of(self.target_position, self.bs_position)
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.num_users();
        if k == 0 {
            return Err(Error::Config("at least one user is required".into()));
        }
        if self.num_tx == 0 || self.num_rx == 0 {
            return Err(Error::Config("antenna counts must be positive".into()));
        }
        if k * self.num_rx > self.num_tx {
            return Err(Error::Config(format!(
                "K * N_R = {} exceeds M_T = {}",
                k * self.num_rx,
                self.num_tx
            )));
        }
        if self.adversary_index == 0 || self.adversary_index > k {
            return Err(Error::Config(format!("adversary index {} outside [1, {k}]", self.adversary_index)));
        }
        if !(self.p_t > 0.0 && self.sigma_k_sq > 0.0 && self.delta > 0.0) {
            return Err(Error::Config("P_t, sigma_k^2 and delta must be positive".into()));
        }
        let inside = |p: &Point| p.x >= 0.0 && p.y >= 0.0 && p.x <= self.extent.0 && p.y <= self.extent.1;
        for p in self.user_positions.iter().chain([&self.target_position, &self.bs_position]) {
            if !inside(p) {
                return Err(Error::Config(format!("position ({}, {}) outside the search area", p.x, p.y)));
            }
        }
        self.theta_target()?;
        Ok(())
    }
}

/// Per-user channel matrices `H_k`, each `N_R x M_T`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelSet {
    pub h: Vec<ComplexMatrix>,
}

impl ChannelSet {
    pub fn num_users(&self) -> usize {
        self.h.len()
    }

    /// Multiplies every channel by `c`.
    pub fn scaled(&self, c: C64) -> ChannelSet {
        ChannelSet {
            h: self.h.iter().map(|h| ComplexMatrix::new(h.matrix() * c).expect("finite")).collect(),
        }
    }
}

/// One circularly-symmetric complex Gaussian sample of the given variance.
pub(crate) fn complex_gaussian<R: Rng>(rng: &mut R, variance: f64) -> C64 {
    let sd = (variance / 2.0).sqrt();
    let n = Normal::new(0.0, 1.0).expect("unit normal");
    C64::new(sd * n.sample(rng), sd * n.sample(rng))
}

/// Rayleigh block-fading channels with per-entry variance `d_k^(-alpha)` (1 m reference).
pub fn generate_channels(scenario: &Scenario, rng_seed: u64) -> Result<ChannelSet> {
    let mut rng = rng_from_seed(rng_seed);
    let mut h = Vec::with_capacity(scenario.num_users());
    for (k, user) in scenario.user_positions.iter().enumerate() {
        let d = user.distance(&scenario.bs_position);
        if d == 0.0 {
            return Err(Error::DegeneratePlacement(format!("user {} sits on the base station", k + 1)));
        }
        let variance = d.powf(-scenario.path_loss_exponent);
        h.push(ComplexMatrix::from_fn(scenario.num_rx, scenario.num_tx, |_, _| {
            complex_gaussian(&mut rng, variance)
        })?);
    }
    Ok(ChannelSet { h })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub center: Point,
    /// Midpoint azimuth seen from the BS (degrees).
    pub angle: f64,
    /// Midpoint distance from the BS (m).
    pub radius: f64,
}

/// Square cells covering `[0, extent_x] x [0, extent_y]`, indexed row-major from the origin.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridWorld {
    pub extent: (f64, f64),
    pub cell_size: f64,
    pub cols: usize,
    pub rows: usize,
    pub cells: Vec<Cell>,
}

fn whole_cells(extent: f64, cell: f64) -> Option<usize> {
    let n = extent / cell;
    let r = n.round();
    (r >= 1.0 && (n - r).abs() < 1e-9).then_some(r as usize)
}

pub fn build_grid(extent: (f64, f64), cell_size: f64, bs: Point) -> Result<GridWorld> {
    if !(cell_size > 0.0) {
        return Err(Error::Config("cell size must be positive".into()));
    }
    let (Some(cols), Some(rows)) = (whole_cells(extent.0, cell_size), whole_cells(extent.1, cell_size)) else {
        return Err(Error::Config(format!(
            "extent {}x{} is not a whole multiple of cell size {cell_size}",
            extent.0, extent.1
        )));
    };
    let mut cells = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            let center = Point::new((c as f64 + 0.5) * cell_size, (r as f64 + 0.5) * cell_size);
            cells.push(Cell {
                center,
                angle: angle_of(center, bs)?,
                radius: center.distance(&bs),
            });
        }
    }
    Ok(GridWorld {
        extent,
        cell_size,
        cols,
        rows,
        cells,
    })
}

impl GridWorld {
    pub fn num_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn contains(&self, p: Point) -> bool {
        p.x >= 0.0 && p.y >= 0.0 && p.x <= self.extent.0 && p.y <= self.extent.1
    }

    /// Cell containing `p`; points on the far boundary belong to the last row/column.
    pub fn cell_index(&self, p: Point) -> Option<usize> {
        if !self.contains(p) {
            return None;
        }
        let c = ((p.x / self.cell_size) as usize).min(self.cols - 1);
        let r = ((p.y / self.cell_size) as usize).min(self.rows - 1);
        Some(r * self.cols + c)
    }

    /// Lower-left corner of cell `n`.
    pub fn cell_origin(&self, n: usize) -> Point {
        Point::new((n % self.cols) as f64 * self.cell_size, (n / self.cols) as f64 * self.cell_size)
    }

    pub fn sample_in_cell<R: Rng>(&self, n: usize, rng: &mut R) -> Point {
        let o = self.cell_origin(n);
        Point::new(
            o.x + rng.gen::<f64>() * self.cell_size,
            o.y + rng.gen::<f64>() * self.cell_size,
        )
    }

    pub fn sample_uniform<R: Rng>(&self, rng: &mut R) -> Point {
        Point::new(rng.gen::<f64>() * self.extent.0, rng.gen::<f64>() * self.extent.1)
    }

    /// Uniform point in the search area outside the cell that holds `bs`.
    pub fn sample_excluding_cell_of<R: Rng>(&self, bs: Point, rng: &mut R) -> Point {
        let bs_cell = self.cell_index(bs);
        loop {
            let p = self.sample_uniform(rng);
            if self.cell_index(p) != bs_cell {
                return p;
            }
        }
    }
}

/// Uniform azimuth samples `start, start + step, ...` up to and including `end`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AngleGrid {
    pub start: f64,
    pub step: f64,
    pub len: usize,
}

impl AngleGrid {
    pub fn uniform(start: f64, end: f64, step: f64) -> Result<Self> {
        if !(step > 0.0) || end < start {
            return Err(Error::Config(format!("bad angle grid [{start}, {end}] step {step}")));
        }
        let len = ((end - start) / step + 1e-9).floor() as usize + 1;
        Ok(Self { start, step, len })
    }

    /// 0° to 90° at 0.1°, L = 901.
    pub fn standard() -> Self {
        Self::uniform(0.0, 90.0, 0.1).expect("valid")
    }

    /// -90° to 90° at 0.1°: the whole visible region of the array, so the
    /// least-squares fit cannot park power at unsampled negative angles.
    pub fn design() -> Self {
        Self::uniform(-90.0, 90.0, 0.1).expect("valid")
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn angle(&self, l: usize) -> f64 {
        self.start + l as f64 * self.step
    }

    pub fn angles(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len).map(|l| self.angle(l))
    }

    /// Index of the sample nearest to `theta`; exact ties go to the smaller angle.
    pub fn nearest_index(&self, theta: f64) -> usize {
        let pos = (theta - self.start) / self.step;
        if pos <= 0.0 {
            return 0;
        }
        let lo = (pos.floor() as usize).min(self.len - 1);
        let hi = (lo + 1).min(self.len - 1);
        if (theta - self.angle(lo)).abs() <= (self.angle(hi) - theta).abs() {
            lo
        } else {
            hi
        }
    }
}
