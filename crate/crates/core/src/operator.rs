//! Sectorial matrices and their analytic semigroups.
//!
//! A [`SectorialOperator`] is a dense complex `d x d` matrix `A` whose spectrum
//! sits in the open right half-plane. The semigroup `e^{-tA}` is evaluated
//! through cached eigen-data when available and through the Padé matrix
//! exponential otherwise.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, expm1_c, phi1_neg_c, CMatrix, CVector, C64};

/// An element of the finite-dimensional Hilbert space.
pub type HVector = CVector;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorKind {
    Diagonalizable,
    SelfAdjoint,
    General,
}

/// Eigen-decomposition `A = V diag(values) V^-1`.
#[derive(Clone, Debug)]
pub struct SpectralData {
    vectors: CMatrix,
    values: Vec<C64>,
    inverse: CMatrix,
}

impl SpectralData {
    pub fn vectors(&self) -> &CMatrix {
        &self.vectors
    }

    pub fn values(&self) -> &[C64] {
        &self.values
    }

    pub fn inverse(&self) -> &CMatrix {
        &self.inverse
    }

    fn reconstruct(&self) -> CMatrix {
        let diag = CMatrix::from_diagonal(&CVector::from_row_slice(&self.values));
        &self.vectors * diag * &self.inverse
    }
}

#[derive(Clone, Debug)]
pub struct SectorialOperator {
    matrix: CMatrix,
    sector_angle: f64,
    spectral: Option<SpectralData>,
    kind: OperatorKind,
}

const MAX_BASIS_CONDITION: f64 = 1e10;
const HERMITIAN_TOL: f64 = 1e-12;

fn sector_angle_of(values: &[C64]) -> Result<f64> {
    let mut angle = 0.0f64;
    for z in values {
        if !(z.re.is_finite() && z.im.is_finite()) || z.re <= 0.0 || z.arg().abs() >= PI / 2.0 {
            return Err(Error::NotSectorial { re: z.re, im: z.im });
        }
        angle = angle.max(z.arg().abs());
    }
    Ok(angle)
}

fn entry_scale(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(1.0, f64::max)
}

fn hermitian_defect(m: &CMatrix) -> f64 {
    (m - m.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

fn is_hermitian(m: &CMatrix) -> bool {
    hermitian_defect(m) <= HERMITIAN_TOL * entry_scale(m)
}

impl SectorialOperator {
    /// `A = V diag(eigenvalues) V^-1` with the decomposition cached. Classed as
    /// self-adjoint when the reconstructed matrix is Hermitian.
    pub fn make_diagonalizable(vectors: CMatrix, eigenvalues: &[C64]) -> Result<Self> {
        let d = vectors.nrows();
        if d == 0 || vectors.ncols() != d {
            return Err(Error::InvalidParameter(format!(
                "eigenvector matrix must be square and nonempty, got {}x{}",
                vectors.nrows(),
                vectors.ncols()
            )));
        }
        if eigenvalues.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: eigenvalues.len() });
        }
        let sector_angle = sector_angle_of(eigenvalues)?;
        let cond = linalg::condition_number(&vectors);
        if !(cond < MAX_BASIS_CONDITION) {
            return Err(Error::SingularBasis(cond));
        }
        let inverse = vectors
            .clone()
            .try_inverse()
            .ok_or(Error::SingularBasis(f64::INFINITY))?;
        let spectral = SpectralData { vectors, values: eigenvalues.to_vec(), inverse };
        let matrix = spectral.reconstruct();
        let kind = if is_hermitian(&matrix) { OperatorKind::SelfAdjoint } else { OperatorKind::Diagonalizable };
        Ok(Self { matrix, sector_angle, spectral: Some(spectral), kind })
    }

    /// `(1/h^2) tridiag(-1, 2, -1)`, with its sine eigenbasis cached.
    pub fn make_discrete_laplacian(d: usize, h: f64) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidParameter("laplacian dimension must be >= 1".into()));
        }
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::InvalidParameter(format!("mesh width must be positive, got {h}")));
        }
        let inv_h2 = 1.0 / (h * h);
        let matrix = CMatrix::from_fn(d, d, |i, j| {
            let v = match i.abs_diff(j) {
                0 => 2.0 * inv_h2,
                1 => -inv_h2,
                _ => 0.0,
            };
            C64::new(v, 0.0)
        });
        let m = (d + 1) as f64;
        let norm = (2.0 / m).sqrt();
        let vectors = CMatrix::from_fn(d, d, |j, k| {
            C64::new(norm * (((j + 1) * (k + 1)) as f64 * PI / m).sin(), 0.0)
        });
        let values: Vec<C64> = (1..=d)
            .map(|k| {
                let s = (k as f64 * PI / (2.0 * m)).sin();
                C64::new(4.0 * inv_h2 * s * s, 0.0)
            })
            .collect();
        let inverse = vectors.transpose();
        Ok(Self {
            matrix,
            sector_angle: 0.0,
            spectral: Some(SpectralData { vectors, values, inverse }),
            kind: OperatorKind::SelfAdjoint,
        })
    }

    pub fn scalar(lambda: C64) -> Result<Self> {
        Self::make_diagonalizable(CMatrix::identity(1, 1), &[lambda])
    }

    /// Hermitian positive definite matrix, diagonalized by a unitary basis.
    pub fn from_hermitian(matrix: CMatrix) -> Result<Self> {
        let d = matrix.nrows();
        if d == 0 || matrix.ncols() != d {
            return Err(Error::InvalidParameter("matrix must be square and nonempty".into()));
        }
        let asym = hermitian_defect(&matrix);
        if asym > HERMITIAN_TOL * entry_scale(&matrix) {
            return Err(Error::NotHermitian(asym));
        }
        let sym = (&matrix + matrix.adjoint()).map(|z| z * 0.5);
        let eig = sym.clone().symmetric_eigen();
        let values: Vec<C64> = eig.eigenvalues.iter().map(|&v| C64::new(v, 0.0)).collect();
        sector_angle_of(&values)?;
        let vectors = eig.eigenvectors;
        let inverse = vectors.adjoint();
        Ok(Self {
            matrix: sym,
            sector_angle: 0.0,
            spectral: Some(SpectralData { vectors, values, inverse }),
            kind: OperatorKind::SelfAdjoint,
        })
    }

    /// Arbitrary sectorial matrix; the semigroup goes through the matrix exponential.
    pub fn from_matrix(matrix: CMatrix) -> Result<Self> {
        let d = matrix.nrows();
        if d == 0 || matrix.ncols() != d {
            return Err(Error::InvalidParameter("matrix must be square and nonempty".into()));
        }
        let values = schur_eigenvalues(&matrix);
        let sector_angle = sector_angle_of(&values)?;
        Ok(Self { matrix, sector_angle, spectral: None, kind: OperatorKind::General })
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn kind(&self) -> OperatorKind {
        self.kind
    }

    pub fn sector_angle(&self) -> f64 {
        self.sector_angle
    }

    pub fn spectral(&self) -> Option<&SpectralData> {
        self.spectral.as_ref()
    }

    pub fn is_self_adjoint(&self) -> bool {
        self.kind == OperatorKind::SelfAdjoint
    }

    /// Eigenvalues, from the cache or from a Schur decomposition.
    pub fn eigenvalues(&self) -> Vec<C64> {
        match &self.spectral {
            Some(s) => s.values.clone(),
            None => schur_eigenvalues(&self.matrix),
        }
    }

    /// Smallest real part over the spectrum.
    pub fn min_re_eigenvalue(&self) -> f64 {
        self.eigenvalues().iter().map(|z| z.re).fold(f64::INFINITY, f64::min)
    }

    /// Condition number of the cached eigenbasis (1 without a cache).
    pub fn basis_condition(&self) -> f64 {
        match &self.spectral {
            Some(s) => linalg::condition_number(&s.vectors),
            None => 1.0,
        }
    }

    pub fn operator_norm(&self) -> f64 {
        linalg::norm_2(&self.matrix)
    }

    /// The adjoint `A*`, reusing the eigen-data `A* = V^-* diag(conj) V^*`.
    pub fn adjoint(&self) -> Self {
        let spectral = self.spectral.as_ref().map(|s| SpectralData {
            vectors: s.inverse.adjoint(),
            values: s.values.iter().map(|z| z.conj()).collect(),
            inverse: s.vectors.adjoint(),
        });
        Self {
            matrix: self.matrix.adjoint(),
            sector_angle: self.sector_angle,
            spectral,
            kind: self.kind,
        }
    }

    /// `cA` for `c > 0`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::InvalidParameter(format!("scale must be positive, got {c}")));
        }
        let spectral = self.spectral.as_ref().map(|s| SpectralData {
            vectors: s.vectors.clone(),
            values: s.values.iter().map(|z| z * c).collect(),
            inverse: s.inverse.clone(),
        });
        Ok(Self {
            matrix: self.matrix.map(|z| z * c),
            sector_angle: self.sector_angle,
            spectral,
            kind: self.kind,
        })
    }

    /// Same matrix with the eigen-cache dropped, forcing the dense path.
    pub fn without_spectral_data(&self) -> Self {
        Self {
            matrix: self.matrix.clone(),
            sector_angle: self.sector_angle,
            spectral: None,
            kind: OperatorKind::General,
        }
    }

    pub(crate) fn check_dim(&self, h: &HVector) -> Result<()> {
        if h.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: h.len() });
        }
        Ok(())
    }

    /// `e^{-tA} h`.
    pub fn semigroup_apply(&self, t: f64, h: &HVector) -> Result<HVector> {
        self.check_dim(h)?;
        if !(t >= 0.0) {
            return Err(Error::InvalidParameter(format!("time must be nonnegative, got {t}")));
        }
        if t == 0.0 {
            return Ok(h.clone());
        }
        Ok(self.apply_function(h, |z| (-t * z).exp(), || linalg::expm(&self.matrix.map(|z| -t * z))))
    }

    /// The semigroup as a matrix.
    pub fn semigroup_matrix(&self, t: f64) -> CMatrix {
        match &self.spectral {
            Some(s) => eigen_matrix(s, |z| (-t * z).exp()),
            None => linalg::expm(&self.matrix.map(|z| -t * z)),
        }
    }

    /// `(I - e^{-delta A}) h`, the exact integral of `A e^{-tau A} h` over `[0, delta]`.
    pub fn local_kernel_integral(&self, delta: f64, h: &HVector) -> Result<HVector> {
        self.check_dim(h)?;
        if !(delta > 0.0) {
            return Err(Error::InvalidParameter(format!("step must be positive, got {delta}")));
        }
        let frame = self.frame();
        let x = frame.to_work(h);
        let y = frame.cell_primitive(delta).apply(&x);
        Ok(frame.back_from_work(&y))
    }

    /// `A^power e^{-tau A} h`.
    pub fn apply_power_exp(&self, power: u32, tau: f64, h: &HVector) -> HVector {
        match &self.spectral {
            Some(s) => eigen_apply(s, h, |z| z.powu(power) * (-tau * z).exp()),
            None => {
                let mut y = if tau == 0.0 {
                    h.clone()
                } else {
                    linalg::expm(&self.matrix.map(|z| -tau * z)) * h
                };
                for _ in 0..power {
                    y = &self.matrix * y;
                }
                y
            }
        }
    }

    fn apply_function<F, G>(&self, h: &HVector, scalar: F, dense: G) -> HVector
    where
        F: Fn(C64) -> C64,
        G: FnOnce() -> CMatrix,
    {
        match &self.spectral {
            Some(s) => eigen_apply(s, h, scalar),
            None => dense() * h,
        }
    }

    pub(crate) fn frame(&self) -> Frame<'_> {
        match &self.spectral {
            Some(s) => Frame::Eigen(s),
            None => Frame::Dense(&self.matrix),
        }
    }
}

fn schur_eigenvalues(m: &CMatrix) -> Vec<C64> {
    let t = m.clone().schur().unpack().1;
    (0..t.nrows()).map(|i| t[(i, i)]).collect()
}

fn eigen_apply<F: Fn(C64) -> C64>(s: &SpectralData, h: &HVector, f: F) -> HVector {
    let mut coeffs = &s.inverse * h;
    for (c, &z) in coeffs.iter_mut().zip(&s.values) {
        *c *= f(z);
    }
    &s.vectors * coeffs
}

fn eigen_matrix<F: Fn(C64) -> C64>(s: &SpectralData, f: F) -> CMatrix {
    let mut scaled = s.vectors.clone();
    for (j, &z) in s.values.iter().enumerate() {
        let fz = f(z);
        scaled.column_mut(j).iter_mut().for_each(|c| *c *= fz);
    }
    scaled * &s.inverse
}

/// Working coordinates for the time-stepping kernels: eigen-coordinates when
/// the decomposition is cached (all step operators become diagonal), the
/// standard basis otherwise.
pub(crate) enum Frame<'a> {
    Eigen(&'a SpectralData),
    Dense(&'a CMatrix),
}

/// A linear map in working coordinates.
pub(crate) enum Step {
    Diag(CVector),
    Full(CMatrix),
}

impl Step {
    pub(crate) fn apply(&self, x: &CVector) -> CVector {
        match self {
            Step::Diag(d) => d.component_mul(x),
            Step::Full(m) => m * x,
        }
    }
}

impl<'a> Frame<'a> {
    pub(crate) fn to_work(&self, h: &HVector) -> CVector {
        match self {
            Frame::Eigen(s) => &s.inverse * h,
            Frame::Dense(_) => h.clone(),
        }
    }

    pub(crate) fn back_from_work(&self, x: &CVector) -> HVector {
        match self {
            Frame::Eigen(s) => &s.vectors * x,
            Frame::Dense(_) => x.clone(),
        }
    }

    /// `e^{-tau A}`.
    pub(crate) fn propagator(&self, tau: f64) -> Step {
        match self {
            Frame::Eigen(s) => Step::Diag(CVector::from_iterator(
                s.values.len(),
                s.values.iter().map(|&z| (-tau * z).exp()),
            )),
            Frame::Dense(a) => Step::Full(linalg::expm(&a.map(|z| -tau * z))),
        }
    }

    /// `I - e^{-delta A}`.
    pub(crate) fn cell_primitive(&self, delta: f64) -> Step {
        self.cell_pair(delta).1
    }

    /// `(e^{-delta A}, I - e^{-delta A})` from one evaluation.
    pub(crate) fn cell_pair(&self, delta: f64) -> (Step, Step) {
        match self {
            Frame::Eigen(s) => {
                let n = s.values.len();
                let prop = CVector::from_iterator(n, s.values.iter().map(|&z| (-delta * z).exp()));
                let prim =
                    CVector::from_iterator(n, s.values.iter().map(|&z| -expm1_c(-delta * z)));
                (Step::Diag(prop), Step::Diag(prim))
            }
            Frame::Dense(a) => {
                let n = a.nrows();
                let m = a.map(|z| -delta * z);
                let mut big = CMatrix::zeros(2 * n, 2 * n);
                big.view_mut((0, 0), (n, n)).copy_from(&m);
                big.view_mut((0, n), (n, n)).copy_from(&CMatrix::identity(n, n));
                let e = linalg::expm(&big);
                let prop = e.view((0, 0), (n, n)).into_owned();
                let phi = e.view((0, n), (n, n)).into_owned();
                // I - e^{-delta A} = (delta A) phi_1(-delta A)
                let prim = a.map(|z| delta * z) * phi;
                (Step::Full(prop), Step::Full(prim))
            }
        }
    }

    /// `int_0^delta e^{-tau A} d tau`.
    pub(crate) fn integrated_propagator(&self, delta: f64) -> Step {
        match self {
            Frame::Eigen(s) => Step::Diag(CVector::from_iterator(
                s.values.len(),
                s.values.iter().map(|&z| delta * phi1_neg_c(delta * z)),
            )),
            Frame::Dense(a) => Step::Full(linalg::phi1(&a.map(|z| -delta * z)).map(|z| z * delta)),
        }
    }

    /// Eigenvalues when working in eigen-coordinates.
    pub(crate) fn values(&self) -> Option<&[C64]> {
        match self {
            Frame::Eigen(s) => Some(&s.values),
            Frame::Dense(_) => None,
        }
    }
}
