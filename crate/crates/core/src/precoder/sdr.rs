//! Conic form of the relaxed beampattern-matching problem for fixed receive beamformers.
//!
//! Decision vector: `[R_0, R_1, ..., R_K, y]` with `R_0 = R - sum R_k` the radar
//! residual, so every PSD cone acts on a single block and `R` is the sum of all
//! blocks. Each Hermitian `M x M` block is stored as `M^2` reals. In block-local index `i * M + j`: `i == j` holds the diagonal,
//! `i < j` holds `Re X_ij`, and `i > j` holds `Im X_ji`.
//!
//! The scale `alpha` is eliminated in closed form, which leaves a convex
//! quadratic in `R`: `b^T (W - W d d^T W / d^T W d) b` with `b_l = a_l^H R a_l`
//! and `W` the per-sample fit weights.
//! A ULA beampattern sees `R` only through its `2M - 1` real diagonal sums
//! (`s_0`, `Re s_d`, `Im s_d` for `s_d = sum_i R_{i, i+d}`), so the quadratic is
//! posed on those sums as extra variables `y`, which keeps the KKT system sparse.
//! Complex PSD constraints go through the real embedding
//! `[[Re X, -Im X], [Im X, Re X]]`, vectorized as Clarabel's scaled upper triangle.

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettings, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};
use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::numerics::{ComplexMatrix, HermitianMatrix, C64};
use crate::scene::{steering_vector, ChannelSet, Scenario};

use super::DesiredBeampattern;

/// Variable layout of one Hermitian block.
#[derive(Clone, Copy, Debug)]
pub(crate) struct HermitianLayout {
    m: usize,
}

impl HermitianLayout {
    pub(crate) fn new(m: usize) -> Self {
        Self { m }
    }

    pub(crate) fn len(&self) -> usize {
        self.m * self.m
    }

    /// `(index, coefficient)` such that `Re X_ij = coefficient * v[index]`.
    fn re(&self, i: usize, j: usize) -> (usize, f64) {
        if i <= j {
            (i * self.m + j, 1.0)
        } else {
            (j * self.m + i, 1.0)
        }
    }

    /// `(index, coefficient)` such that `Im X_ij = coefficient * v[index]`; zero on the diagonal.
    fn im(&self, i: usize, j: usize) -> Option<(usize, f64)> {
        match i.cmp(&j) {
            std::cmp::Ordering::Equal => None,
            std::cmp::Ordering::Less => Some((j * self.m + i, 1.0)),
            std::cmp::Ordering::Greater => Some((i * self.m + j, -1.0)),
        }
    }

    /// Coefficients `c` with `g^H X g = c . v`.
    pub(crate) fn quadratic_form(&self, g: &[C64]) -> Vec<f64> {
        let m = self.m;
        let mut c = vec![0.0; m * m];
        for i in 0..m {
            c[i * m + i] = g[i].norm_sqr();
            for j in (i + 1)..m {
                let z = g[i].conj() * g[j];
                c[i * m + j] = 2.0 * z.re;
                c[j * m + i] = -2.0 * z.im;
            }
        }
        c
    }

    /// Rows of `G` with `y = G v`: trace, then `Re s_d`, `Im s_d` for `d = 1..M`.
    pub(crate) fn diagonal_sums(&self) -> Vec<Vec<usize>> {
        let m = self.m;
        let mut rows = vec![(0..m).map(|i| i * m + i).collect()];
        for d in 1..m {
            rows.push((0..m - d).map(|i| i * m + i + d).collect());
            rows.push((0..m - d).map(|i| (i + d) * m + i).collect());
        }
        rows
    }

    pub(crate) fn to_matrix(&self, v: &[f64]) -> DMatrix<C64> {
        let m = self.m;
        DMatrix::from_fn(m, m, |i, j| {
            let (ri, rc) = self.re(i, j);
            let im = self.im(i, j).map_or(0.0, |(k, c)| c * v[k]);
            C64::new(rc * v[ri], im)
        })
    }

    /// Sparse row `(index, coefficient)` terms of entry `(p, q)` of the real embedding.
    fn embedding_terms(&self, p: usize, q: usize) -> Option<(usize, f64)> {
        let m = self.m;
        let (i, j) = (p % m, q % m);
        match (p < m, q < m) {
            (true, true) | (false, false) => Some(self.re(i, j)),
            (true, false) => self.im(i, j).map(|(k, c)| (k, -c)),
            (false, true) => self.im(i, j),
        }
    }
}

/// The alpha-eliminated least-squares beampattern objective, precomputed per design.
#[derive(Clone, Debug)]
pub struct BeamObjective {
    layout: HermitianLayout,
    /// `B^T (W - W d d^T W / d^T W d) B`, where row `l` of `B` maps the diagonal
    /// sums to `a_l^H R a_l` and `W` holds the sample weights.
    gram: DMatrix<f64>,
    steering: Vec<ComplexMatrix>,
    desired: Vec<f64>,
    weights: Vec<f64>,
}

impl BeamObjective {
    pub fn new(desired: &DesiredBeampattern, m_t: usize, delta: f64) -> Self {
        let layout = HermitianLayout::new(m_t);
        let steering: Vec<ComplexMatrix> = desired.angles.angles().map(|t| steering_vector(t, m_t, delta)).collect();
        let mut c = beam_basis(&desired.angles.angles().collect::<Vec<_>>(), m_t, delta);
        let mut d = nalgebra::DVector::from_column_slice(&desired.values);
        for (l, w) in desired.weights.iter().enumerate() {
            c.row_mut(l).scale_mut(w.sqrt());
            d[l] *= w.sqrt();
        }
        let mut gram = c.transpose() * &c;
        let dd = d.dot(&d);
        if dd > 0.0 {
            let ctd = c.transpose() * &d;
            gram -= (&ctd * ctd.transpose()) / dd;
        }
        Self {
            layout,
            gram,
            steering,
            desired: desired.values.clone(),
            weights: desired.weights.clone(),
        }
    }

    /// Objective value and optimal scale for a given covariance, evaluated from `R` directly.
    pub fn evaluate(&self, r: &HermitianMatrix) -> (f64, f64) {
        let b: Vec<f64> = self.steering.iter().map(|a| r.quadratic_form(a.matrix()).max(0.0)).collect();
        let w = &self.weights;
        let dd: f64 = self.desired.iter().zip(w).map(|(d, w)| w * d * d).sum();
        let alpha = if dd > 0.0 {
            self.desired.iter().zip(&b).zip(w).map(|((d, b), w)| w * d * b).sum::<f64>() / dd
        } else {
            0.0
        };
        let phi = self
            .desired
            .iter()
            .zip(&b)
            .zip(w)
            .map(|((d, b), w)| w * (alpha * d - b).powi(2))
            .sum();
        (phi, alpha)
    }
}

/// `B[l] = [1, 2 cos(phi_l d), -2 sin(phi_l d), ...]` with `phi_l = 2 pi delta sin(theta_l)`.
pub(crate) fn beam_basis(angles: &[f64], m_t: usize, delta: f64) -> DMatrix<f64> {
    let mut b = DMatrix::<f64>::zeros(angles.len(), 2 * m_t - 1);
    for (l, t) in angles.iter().enumerate() {
        let phi = 2.0 * std::f64::consts::PI * delta * t.to_radians().sin();
        b[(l, 0)] = 1.0;
        for d in 1..m_t {
            let (sin, cos) = (phi * d as f64).sin_cos();
            b[(l, 2 * d - 1)] = 2.0 * cos;
            b[(l, 2 * d)] = -2.0 * sin;
        }
    }
    b
}

/// Output of one relaxed transmit-covariance solve.
#[derive(Clone, Debug)]
pub struct SdrSolution {
    pub r: HermitianMatrix,
    pub r_k: Vec<HermitianMatrix>,
    pub alpha: f64,
    pub objective: f64,
}

struct Triplets {
    rows: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
    b: Vec<f64>,
}

impl Triplets {
    fn push(&mut self, row: usize, col: usize, val: f64) {
        if val != 0.0 {
            self.rows.push(row);
            self.cols.push(col);
            self.vals.push(val);
        }
    }
}

pub(crate) fn solve(
    objective: &BeamObjective,
    channels: &ChannelSet,
    receive_beamformers: &[ComplexMatrix],
    scenario: &Scenario,
    gamma: f64,
) -> Result<SdrSolution> {
    let layout = objective.layout;
    let m = layout.m;
    let k_users = channels.num_users();
    if receive_beamformers.len() != k_users {
        return Err(Error::Shape(format!(
            "{} receive beamformers for {k_users} users",
            receive_beamformers.len()
        )));
    }
    let block = layout.len();
    let sums = layout.diagonal_sums();
    let y0 = block * (k_users + 1);
    let n = y0 + sums.len();
    let l = objective.steering.len() as f64;

    // P: upper triangle of 2 Q / L on the diagonal sums.
    let (mut pi, mut pj, mut pv) = (Vec::new(), Vec::new(), Vec::new());
    for col in 0..sums.len() {
        for row in 0..=col {
            let v = objective.gram[(row, col)];
            if v != 0.0 {
                pi.push(y0 + row);
                pj.push(y0 + col);
                pv.push(2.0 * v / l);
            }
        }
    }
    let p = CscMatrix::new_from_triplets(n, n, pi, pj, pv);
    let q = vec![0.0; n];

    let mut a = Triplets {
        rows: Vec::new(),
        cols: Vec::new(),
        vals: Vec::new(),
        b: Vec::new(),
    };
    let mut row = 0;

    let blocks = k_users + 1;

    // [R]_mm = P_t / M
    for i in 0..m {
        for blk in 0..blocks {
            a.push(row, blk * block + i * m + i, 1.0);
        }
        a.b.push(scenario.p_t / m as f64);
        row += 1;
    }

    // y = G vec(R)
    for (t, idx) in sums.iter().enumerate() {
        a.push(row, y0 + t, 1.0);
        for blk in 0..blocks {
            for &i in idx {
                a.push(row, blk * block + i, -1.0);
            }
        }
        a.b.push(0.0);
        row += 1;
    }

    // (1 + 1/gamma) g^H R_k g - g^H R g >= sigma^2 |u|^2, rows scaled by 1/|g|^2;
    // in block terms R_k carries -1/gamma and every other block +1.
    for (k, (h, u)) in channels.h.iter().zip(receive_beamformers).enumerate() {
        if h.nrows() != u.nrows() || h.ncols() != m {
            return Err(Error::Shape(format!("user {k}: channel {:?} vs beamformer {:?}", h.shape(), u.shape())));
        }
        let g = h.matrix().adjoint() * u.matrix();
        let g_norm = g.norm_squared();
        let u_norm = u.matrix().norm_squared();
        if !(g_norm > 0.0) || !(u_norm > 0.0) {
            return Err(Error::DegenerateBeamformer(k));
        }
        let coeffs = layout.quadratic_form(g.as_slice());
        for (idx, c) in coeffs.iter().enumerate() {
            let c = c / g_norm;
            for blk in 0..blocks {
                let w = if blk == k + 1 { -c / gamma } else { c };
                a.push(row, blk * block + idx, w);
            }
        }
        a.b.push(-scenario.sigma_k_sq * u_norm / g_norm);
        row += 1;
    }

    // embed(R_b) >= 0 for every block
    let dim = 2 * m;
    let sqrt2 = std::f64::consts::SQRT_2;
    for blk in 0..blocks {
        for q in 0..dim {
            for p in 0..=q {
                if let Some((idx, c)) = layout.embedding_terms(p, q) {
                    let scale = if p == q { 1.0 } else { sqrt2 };
                    a.push(row, blk * block + idx, -scale * c);
                }
                a.b.push(0.0);
                row += 1;
            }
        }
    }

    let mut cones = vec![SupportedConeT::ZeroConeT(m + sums.len()), SupportedConeT::NonnegativeConeT(k_users)];
    cones.extend(std::iter::repeat(SupportedConeT::PSDTriangleConeT(dim)).take(k_users + 1));

    let a_mat = CscMatrix::new_from_triplets(row, n, a.rows, a.cols, a.vals);
    let settings = DefaultSettings {
        verbose: false,
        direct_solve_method: "faer".into(),
        max_iter: 400,
        tol_gap_abs: 1e-10,
        tol_gap_rel: 1e-10,
        tol_feas: 1e-10,
        ..DefaultSettings::default()
    };
    let mut solver = DefaultSolver::new(&p, &q, &a_mat, &a.b, &cones, settings)
        .map_err(|e| Error::Solver(e.to_string()))?;
    solver.solve();
    match solver.solution.status {
        SolverStatus::Solved | SolverStatus::AlmostSolved => {}
        SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => return Err(Error::InfeasibleQos),
        other => return Err(Error::Solver(format!("{other:?}"))),
    }
    let x = &solver.solution.x;
    let r_k = (1..=k_users)
        .map(|k| HermitianMatrix::new(layout.to_matrix(&x[k * block..(k + 1) * block])))
        .collect::<Result<Vec<_>>>()?;
    let r = r_k
        .iter()
        .fold(HermitianMatrix::new(layout.to_matrix(&x[..block]))?, |acc, rk| acc.add(rk));
    let (objective_value, alpha) = objective.evaluate(&r);
    Ok(SdrSolution {
        r,
        r_k,
        alpha,
        objective: objective_value,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_hermitian(m: usize, seed: u64) -> (Vec<f64>, DMatrix<C64>) {
        let layout = HermitianLayout::new(m);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v: Vec<f64> = (0..layout.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let x = layout.to_matrix(&v);
        (v, x)
    }

    #[test]
    fn layout_round_trips_hermitian_entries() {
        let (_, x) = random_hermitian(4, 1);
        assert!((&x - x.adjoint()).norm() == 0.0);
    }

    #[test]
    fn quadratic_form_coefficients_match_direct_evaluation() {
        let m = 5;
        let layout = HermitianLayout::new(m);
        let (v, x) = random_hermitian(m, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g: Vec<C64> = (0..m).map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
        let gv = DMatrix::from_column_slice(m, 1, &g);
        let direct = (gv.adjoint() * &x * &gv)[(0, 0)].re;
        let via: f64 = layout.quadratic_form(&g).iter().zip(&v).map(|(c, v)| c * v).sum();
        assert!((direct - via).abs() < 1e-12);
    }

    #[test]
    fn diagonal_sums_reproduce_the_beampattern() {
        let m = 6;
        let layout = HermitianLayout::new(m);
        let (v, x) = random_hermitian(m, 5);
        let y: Vec<f64> = layout.diagonal_sums().iter().map(|idx| idx.iter().map(|&i| v[i]).sum()).collect();
        let angles = [0.0, 12.5, 47.3, 90.0, -30.0];
        let b = beam_basis(&angles, m, 0.5);
        for (l, &t) in angles.iter().enumerate() {
            let a = steering_vector(t, m, 0.5);
            let direct = (a.matrix().adjoint() * &x * a.matrix())[(0, 0)].re;
            let via: f64 = (0..y.len()).map(|c| b[(l, c)] * y[c]).sum();
            assert!((direct - via).abs() < 1e-12, "{t}: {direct} vs {via}");
        }
    }

    #[test]
    fn compressed_gram_matches_direct_evaluation() {
        let m = 5;
        let layout = HermitianLayout::new(m);
        let grid = crate::scene::AngleGrid::uniform(-90.0, 90.0, 0.5).unwrap();
        let desired = super::super::desired_beampattern(63.0, 10.0, &grid).unwrap();
        let obj = BeamObjective::new(&desired, m, 0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let f = DMatrix::from_fn(m, 3, |_, _| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        let r = HermitianMatrix::new(&f * f.adjoint()).unwrap();
        let mut v = vec![0.0; layout.len()];
        for i in 0..m {
            for j in 0..m {
                let (ri, _) = layout.re(i, j);
                v[ri] = r[(i, j)].re;
                if let Some((ii, c)) = layout.im(i, j) {
                    v[ii] = c * r[(i, j)].im;
                }
            }
        }
        let y: Vec<f64> = layout.diagonal_sums().iter().map(|idx| idx.iter().map(|&i| v[i]).sum()).collect();
        let quad: f64 = (0..y.len()).flat_map(|a| (0..y.len()).map(move |b| (a, b))).map(|(a, b)| y[a] * obj.gram[(a, b)] * y[b]).sum();

        // Weighted least squares written out with the best scale found by brute force.
        let b: Vec<f64> = grid.angles().map(|t| {
            let a = steering_vector(t, m, 0.5);
            (a.matrix().adjoint() * r.matrix() * a.matrix())[(0, 0)].re
        }).collect();
        let cost = |alpha: f64| -> f64 {
            desired.values.iter().zip(&b).zip(&desired.weights).map(|((d, b), w)| w * (alpha * d - b).powi(2)).sum()
        };
        let (phi, alpha) = obj.evaluate(&r);
        assert!((quad - phi).abs() < 1e-9 * phi.max(1.0), "{quad} vs {phi}");
        assert!((cost(alpha) - phi).abs() < 1e-9 * phi.max(1.0));
        assert!(cost(alpha + 1e-3) > phi && cost(alpha - 1e-3) > phi);
    }

    #[test]
    fn embedding_terms_reproduce_real_embedding() {
        let m = 3;
        let layout = HermitianLayout::new(m);
        let (v, x) = random_hermitian(m, 4);
        let h = HermitianMatrix::new(x).unwrap();
        let e = crate::numerics::complex_to_real_embedding(&h);
        for q in 0..2 * m {
            for p in 0..=q {
                let got = layout.embedding_terms(p, q).map_or(0.0, |(i, c)| c * v[i]);
                assert!((got - e[(p, q)]).abs() < 1e-15, "({p},{q})");
            }
        }
    }
}
