//! Dense complex linear algebra shared by every other module.
//!
//! [`ComplexMatrix`] and [`HermitianMatrix`] are thin validated wrappers over
//! `nalgebra::DMatrix<Complex64>`. The eigen-decomposition itself comes from
//! nalgebra's Hermitian solver; this module adds the PSD tolerance policy, the
//! eigenvalue-clipping square root and the real symmetric embedding used to
//! hand complex PSD constraints to a real conic solver.

use std::ops::Deref;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Eigenvalues below `-PSD_TOL * max|lambda|` reject PSD membership; values in
/// `[-PSD_TOL * max|lambda|, PSD_TOL * max|lambda|)` are clipped to zero.
pub const PSD_TOL: f64 = 1e-7;

/// Element-wise tolerance for the Hermitian check, scaled by `max(1, max|a_ij|)`.
pub const HERMITIAN_TOL: f64 = 1e-9;

/// Dense complex matrix with finite entries.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexMatrix(DMatrix<C64>);

impl ComplexMatrix {
    pub fn new(m: DMatrix<C64>) -> Result<Self> {
        if m.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
            Ok(Self(m))
        } else {
            Err(Error::NonFinite)
        }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self(DMatrix::zeros(rows, cols))
    }

    pub fn identity(n: usize) -> Self {
        Self(DMatrix::identity(n, n))
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl FnMut(usize, usize) -> C64) -> Result<Self> {
        Self::new(DMatrix::from_fn(rows, cols, f))
    }

    pub fn from_diagonal(d: &[f64]) -> Self {
        let n = d.len();
        Self(DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                C64::new(d[i], 0.0)
            } else {
                C64::new(0.0, 0.0)
            }
        }))
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<C64> {
        self.0
    }

    pub fn conj_transpose(&self) -> Self {
        Self(self.0.adjoint())
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.0.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// `A A^H`, Hermitian by construction.
    pub fn gram(&self) -> HermitianMatrix {
        let g = &self.0 * self.0.adjoint();
        HermitianMatrix(hermitize(g))
    }

    /// Horizontal concatenation `[self | other]`.
    pub fn hstack(&self, other: &ComplexMatrix) -> Result<Self> {
        if self.nrows() != other.nrows() {
            return Err(Error::Shape(format!(
                "cannot stack {} rows beside {} rows",
                self.nrows(),
                other.nrows()
            )));
        }
        let (r, c1, c2) = (self.nrows(), self.ncols(), other.ncols());
        Ok(Self(DMatrix::from_fn(r, c1 + c2, |i, j| {
            if j < c1 {
                self.0[(i, j)]
            } else {
                other.0[(i, j - c1)]
            }
        })))
    }
}

impl Deref for ComplexMatrix {
    type Target = DMatrix<C64>;
    fn deref(&self) -> &DMatrix<C64> {
        &self.0
    }
}

#[derive(Serialize, Deserialize)]
struct MatrixRecord {
    rows: usize,
    cols: usize,
    /// Column-major real parts.
    re: Vec<f64>,
    /// Column-major imaginary parts.
    im: Vec<f64>,
}

impl Serialize for ComplexMatrix {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        MatrixRecord {
            rows: self.nrows(),
            cols: self.ncols(),
            re: self.0.iter().map(|z| z.re).collect(),
            im: self.0.iter().map(|z| z.im).collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for ComplexMatrix {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let rec = MatrixRecord::deserialize(d)?;
        let n = rec.rows * rec.cols;
        if rec.re.len() != n || rec.im.len() != n {
            return Err(D::Error::custom("entry count does not match rows x cols"));
        }
        let m = DMatrix::from_iterator(
            rec.rows,
            rec.cols,
            rec.re.iter().zip(&rec.im).map(|(&re, &im)| C64::new(re, im)),
        );
        ComplexMatrix::new(m).map_err(D::Error::custom)
    }
}

/// Square complex matrix equal to its conjugate transpose.
#[derive(Clone, Debug, PartialEq)]
pub struct HermitianMatrix(DMatrix<C64>);

impl HermitianMatrix {
    /// Validates Hermitian symmetry and stores the exactly symmetrized matrix.
    pub fn new(m: DMatrix<C64>) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::Shape(format!(
                "Hermitian matrix must be square, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        let m = ComplexMatrix::new(m)?.into_inner();
        let scale = m.iter().map(|z| z.norm()).fold(1.0_f64, f64::max);
        let mut worst = 0.0_f64;
        for i in 0..m.nrows() {
            for j in i..m.ncols() {
                worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
            }
        }
        if worst > HERMITIAN_TOL * scale {
            return Err(Error::NotHermitian(worst));
        }
        Ok(Self(hermitize(m)))
    }

    pub fn zeros(n: usize) -> Self {
        Self(DMatrix::zeros(n, n))
    }

    pub fn identity(n: usize) -> Self {
        Self(DMatrix::identity(n, n))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.0
    }

    pub fn to_complex(&self) -> ComplexMatrix {
        ComplexMatrix(self.0.clone())
    }

    /// Ascending eigenvalues.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = SymmetricEigen::new(self.0.clone()).eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    pub fn is_psd(&self) -> bool {
        let ev = self.eigenvalues();
        ev.first().map_or(true, |&lo| lo >= -psd_threshold(&ev))
    }

    /// Projects onto the PSD cone by clipping eigenvalues below the PSD tolerance to zero.
    pub fn clip_to_psd(&self) -> Result<Self> {
        let f = psd_sqrt(self)?;
        Ok(f.gram())
    }

    /// `v^H A v` for a column vector `v`.
    pub fn quadratic_form(&self, v: &DMatrix<C64>) -> f64 {
        (v.adjoint() * &self.0 * v)[(0, 0)].re
    }

    pub fn sub(&self, other: &HermitianMatrix) -> HermitianMatrix {
        HermitianMatrix(&self.0 - &other.0)
    }

    pub fn add(&self, other: &HermitianMatrix) -> HermitianMatrix {
        HermitianMatrix(&self.0 + &other.0)
    }
}

impl Deref for HermitianMatrix {
    type Target = DMatrix<C64>;
    fn deref(&self) -> &DMatrix<C64> {
        &self.0
    }
}

impl Serialize for HermitianMatrix {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_complex().serialize(s)
    }
}

impl<'de> Deserialize<'de> for HermitianMatrix {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let m = ComplexMatrix::deserialize(d)?;
        HermitianMatrix::new(m.into_inner()).map_err(D::Error::custom)
    }
}

fn hermitize(m: DMatrix<C64>) -> DMatrix<C64> {
    let adj = m.adjoint();
    (m + adj).map(|z| z * 0.5)
}

fn psd_threshold(eigenvalues: &[f64]) -> f64 {
    PSD_TOL * eigenvalues.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

pub fn conj_transpose(a: &ComplexMatrix) -> ComplexMatrix {
    a.conj_transpose()
}

pub fn min_eigenvalue(a: &HermitianMatrix) -> f64 {
    a.eigenvalues().first().copied().unwrap_or(0.0)
}

/// Returns `F` with `F F^H = A` after clipping small negative eigenvalues.
///
/// Built from the eigen-decomposition, so rank-deficient inputs are fine. `F`
/// is `V diag(sqrt(lambda))`, i.e. unique only up to a right unitary factor.
pub fn psd_sqrt(a: &HermitianMatrix) -> Result<ComplexMatrix> {
    psd_sqrt_scaled(a, 0.0)
}

/// [`psd_sqrt`] with the tolerance taken relative to `max(scale, max|lambda|)`.
pub fn psd_sqrt_scaled(a: &HermitianMatrix, scale: f64) -> Result<ComplexMatrix> {
    let eig = SymmetricEigen::new(a.0.clone());
    let ev: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    let tol = psd_threshold(&ev).max(PSD_TOL * scale);
    if let Some(&lo) = ev.iter().min_by(|x, y| x.total_cmp(y)) {
        if lo < -tol {
            return Err(Error::NotPositiveSemidefinite(lo));
        }
    }
    let mut f = eig.eigenvectors;
    for (j, &lambda) in ev.iter().enumerate() {
        let s = if lambda < tol { 0.0 } else { lambda.sqrt() };
        f.column_mut(j).scale_mut(s);
    }
    ComplexMatrix::new(f)
}

/// `[[Re A, -Im A], [Im A, Re A]]`.
pub fn complex_to_real_embedding(a: &HermitianMatrix) -> DMatrix<f64> {
    let n = a.dim();
    DMatrix::from_fn(2 * n, 2 * n, |p, q| {
        let z = a.0[(p % n, q % n)];
        match (p < n, q < n) {
            (true, true) | (false, false) => z.re,
            (true, false) => -z.im,
            (false, true) => z.im,
        }
    })
}

/// `‖a - b‖_F <= max(abs_tol, rel_tol * ‖b‖_F)`.
pub fn approx_eq(a: &DMatrix<C64>, b: &DMatrix<C64>, abs_tol: f64, rel_tol: f64) -> bool {
    if a.shape() != b.shape() {
        return false;
    }
    let diff = (a - b).iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let scale = b.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    diff <= abs_tol.max(rel_tol * scale)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> ComplexMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ComplexMatrix::from_fn(rows, cols, |_, _| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).unwrap()
    }

    #[test]
    fn conj_transpose_examples() {
        let i3 = ComplexMatrix::identity(3);
        assert_eq!(conj_transpose(&i3), i3);

        let a = ComplexMatrix::new(DMatrix::from_element(1, 1, c(0.0, 1.0))).unwrap();
        assert_eq!(conj_transpose(&a)[(0, 0)], c(0.0, -1.0));

        let b = random_matrix(2, 3, 1);
        let bh = conj_transpose(&b);
        assert_eq!(bh.shape(), (3, 2));
        assert_eq!(conj_transpose(&bh), b);
    }

    #[test]
    fn rejects_non_finite_entries() {
        let m = DMatrix::from_element(2, 2, c(f64::NAN, 0.0));
        assert!(matches!(ComplexMatrix::new(m), Err(Error::NonFinite)));
    }

    #[test]
    fn min_eigenvalue_examples() {
        assert!((min_eigenvalue(&HermitianMatrix::identity(4)) - 1.0).abs() < 1e-12);
        let d = HermitianMatrix::new(ComplexMatrix::from_diagonal(&[2.0, 0.0]).into_inner()).unwrap();
        assert!(min_eigenvalue(&d).abs() < 1e-12);
        let g = random_matrix(3, 3, 2).gram();
        assert!(min_eigenvalue(&g) >= -1e-10);
    }

    #[test]
    fn non_hermitian_is_rejected() {
        let mut m = DMatrix::<C64>::identity(2, 2);
        m[(0, 1)] = c(1.0, 0.0);
        assert!(matches!(HermitianMatrix::new(m), Err(Error::NotHermitian(_))));
        let mut m = DMatrix::<C64>::identity(2, 2);
        m[(0, 0)] = c(1.0, 0.5);
        assert!(matches!(HermitianMatrix::new(m), Err(Error::NotHermitian(_))));
    }

    #[test]
    fn psd_sqrt_examples() {
        let i3 = HermitianMatrix::identity(3);
        let f = psd_sqrt(&i3).unwrap();
        assert!(approx_eq(f.gram().matrix(), i3.matrix(), 1e-12, 0.0));

        let d = HermitianMatrix::new(ComplexMatrix::from_diagonal(&[4.0, 1.0]).into_inner()).unwrap();
        let f = psd_sqrt(&d).unwrap();
        assert!(approx_eq(f.gram().matrix(), d.matrix(), 1e-12, 0.0));
        // up to a unitary factor the root is diag(2, 1): column norms sorted are {1, 2}
        let mut norms: Vec<f64> = (0..2).map(|j| f.column(j).norm()).collect();
        norms.sort_by(f64::total_cmp);
        assert!((norms[0] - 1.0).abs() < 1e-12 && (norms[1] - 2.0).abs() < 1e-12);

        let a = random_matrix(5, 5, 3).gram();
        let f = psd_sqrt(&a).unwrap();
        let diff = (f.gram().matrix() - a.matrix()).norm();
        assert!(diff < 1e-8, "residual {diff}");
    }

    #[test]
    fn psd_sqrt_handles_rank_deficiency_and_rejects_indefinite() {
        let a = random_matrix(4, 2, 4).gram();
        let f = psd_sqrt(&a).unwrap();
        assert!(approx_eq(f.gram().matrix(), a.matrix(), 1e-10, 1e-10));

        let d = HermitianMatrix::new(ComplexMatrix::from_diagonal(&[1.0, -0.5]).into_inner()).unwrap();
        assert!(matches!(psd_sqrt(&d), Err(Error::NotPositiveSemidefinite(_))));

        // tiny negative eigenvalue inside tolerance is clipped
        let d = HermitianMatrix::new(ComplexMatrix::from_diagonal(&[1.0, -1e-9]).into_inner()).unwrap();
        let f = psd_sqrt(&d).unwrap();
        assert!(f.gram()[(1, 1)].norm() == 0.0);
    }

    #[test]
    fn embedding_examples() {
        let a = HermitianMatrix::new(DMatrix::from_element(1, 1, c(2.0, 0.0))).unwrap();
        assert_eq!(complex_to_real_embedding(&a), DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 2.0]));

        let n = 3;
        assert_eq!(
            complex_to_real_embedding(&HermitianMatrix::identity(n)),
            DMatrix::<f64>::identity(2 * n, 2 * n)
        );

        let a = HermitianMatrix::new(DMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(0.0, 1.0), c(0.0, -1.0), c(0.0, 0.0)]))
            .unwrap();
        let e = complex_to_real_embedding(&a);
        let mut ev: Vec<f64> = SymmetricEigen::new(e).eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        for (got, want) in ev.iter().zip([-1.0, -1.0, 1.0, 1.0]) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn serde_round_trip() {
        let a = random_matrix(2, 3, 9);
        let s = serde_json::to_string(&a).unwrap();
        let back: ComplexMatrix = serde_json::from_str(&s).unwrap();
        assert_eq!(a, back);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn matrix_strategy(max_dim: usize) -> impl Strategy<Value = ComplexMatrix> {
            (1..=max_dim, 1..=max_dim).prop_flat_map(|(r, c)| {
                prop::collection::vec((-10.0..10.0f64, -10.0..10.0f64), r * c).prop_map(move |v| {
                    ComplexMatrix::new(DMatrix::from_iterator(r, c, v.into_iter().map(|(a, b)| C64::new(a, b))))
                        .unwrap()
                })
            })
        }

        proptest! {
            #[test]
            fn double_adjoint_is_identity(a in matrix_strategy(6)) {
                prop_assert_eq!(conj_transpose(&conj_transpose(&a)), a);
            }

            #[test]
            fn gram_matrices_are_psd_and_roots_reconstruct(g in matrix_strategy(6)) {
                let a = g.gram();
                prop_assert!(min_eigenvalue(&a) >= -1e-10 * (1.0 + a.norm()));
                let f = psd_sqrt(&a).unwrap();
                let err = (f.gram().matrix() - a.matrix()).norm();
                prop_assert!(err <= 1e-8 * a.norm().max(1.0), "err {}", err);
            }

            #[test]
            fn embedding_doubles_the_spectrum(g in matrix_strategy(5), shift in -5.0..5.0f64) {
                let mut m = g.gram().matrix().clone();
                for i in 0..m.nrows() { m[(i, i)] -= C64::new(shift * 10.0, 0.0); }
                let a = HermitianMatrix::new(m).unwrap();
                let mut want: Vec<f64> = a.eigenvalues().into_iter().flat_map(|v| [v, v]).collect();
                want.sort_by(f64::total_cmp);
                let mut got: Vec<f64> = SymmetricEigen::new(complex_to_real_embedding(&a)).eigenvalues.iter().copied().collect();
                got.sort_by(f64::total_cmp);
                let scale = want.iter().fold(1.0f64, |s, v| s.max(v.abs()));
                for (x, y) in got.iter().zip(&want) {
                    prop_assert!((x - y).abs() <= 1e-9 * scale);
                }
            }
        }
    }
}
