//! Dense complex linear algebra helpers.
//!
//! The matrix exponential is the scaling-and-squaring method with diagonal
//! Padé approximants of degree 3, 5, 7, 9 or 13, picked from the 1-norm of
//! the argument (Higham, "The scaling and squaring method for the matrix
//! exponential revisited", 2005).

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

const THETA_3: f64 = 1.495_585_217_958_292e-2;
const THETA_5: f64 = 2.539_398_330_063_23e-1;
const THETA_7: f64 = 9.504_178_996_162_932e-1;
const THETA_9: f64 = 2.097_847_961_257_068;
const THETA_13: f64 = 5.371_920_351_148_152;

const PADE_3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const PADE_5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const PADE_7: [f64; 8] = [
    17_297_280.0,
    8_648_640.0,
    1_995_840.0,
    277_200.0,
    25_200.0,
    1_512.0,
    56.0,
    1.0,
];
const PADE_9: [f64; 10] = [
    17_643_225_600.0,
    8_821_612_800.0,
    2_075_673_600.0,
    302_702_400.0,
    30_270_240.0,
    2_162_160.0,
    110_880.0,
    3_960.0,
    90.0,
    1.0,
];
const PADE_13: [f64; 14] = [
    64_764_752_532_480_000.0,
    32_382_376_266_240_000.0,
    7_771_770_303_897_600.0,
    1_187_353_796_428_800.0,
    129_060_195_264_000.0,
    10_559_470_521_600.0,
    670_442_572_800.0,
    33_522_128_640.0,
    1_323_241_920.0,
    40_840_800.0,
    960_960.0,
    16_380.0,
    182.0,
    1.0,
];

/// Induced 1-norm (max column sum).
pub fn norm_1(m: &CMatrix) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Spectral norm (largest singular value).
pub fn norm_2(m: &CMatrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .cloned()
        .fold(0.0, f64::max)
}

/// 2-norm condition number; infinite for singular matrices.
pub fn condition_number(m: &CMatrix) -> f64 {
    let sv = m.clone().svd(false, false).singular_values;
    let max = sv.iter().cloned().fold(0.0, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

fn scaled_identity(n: usize, c: f64) -> CMatrix {
    CMatrix::from_diagonal_element(n, n, C64::new(c, 0.0))
}

fn scale(m: &CMatrix, c: f64) -> CMatrix {
    m.map(|z| z * c)
}

/// Numerator/denominator pieces `(U, V)` of the degree-m diagonal Padé
/// approximant, so that `exp(A) ~ (V - U)^-1 (V + U)`.
fn pade_uv(a: &CMatrix, coeffs: &[f64]) -> (CMatrix, CMatrix) {
    let n = a.nrows();
    let a2 = a * a;
    if coeffs.len() == 14 {
        let b = coeffs;
        let a4 = &a2 * &a2;
        let a6 = &a4 * &a2;
        let inner_u = &a6 * (scale(&a6, b[13]) + scale(&a4, b[11]) + scale(&a2, b[9]))
            + scale(&a6, b[7])
            + scale(&a4, b[5])
            + scale(&a2, b[3])
            + scaled_identity(n, b[1]);
        let u = a * inner_u;
        let v = &a6 * (scale(&a6, b[12]) + scale(&a4, b[10]) + scale(&a2, b[8]))
            + scale(&a6, b[6])
            + scale(&a4, b[4])
            + scale(&a2, b[2])
            + scaled_identity(n, b[0]);
        return (u, v);
    }
    // Low degrees: accumulate even powers directly.
    let mut odd = scaled_identity(n, coeffs[1]);
    let mut even = scaled_identity(n, coeffs[0]);
    let mut power = CMatrix::identity(n, n);
    let mut k = 2;
    while k < coeffs.len() {
        power = &power * &a2;
        even += scale(&power, coeffs[k]);
        if k + 1 < coeffs.len() {
            odd += scale(&power, coeffs[k + 1]);
        }
        k += 2;
    }
    (a * odd, even)
}

/// Matrix exponential by scaling and squaring.
pub fn expm(a: &CMatrix) -> CMatrix {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "expm requires a square matrix");
    if n == 0 {
        return CMatrix::zeros(0, 0);
    }
    if n == 1 {
        return CMatrix::from_element(1, 1, a[(0, 0)].exp());
    }
    let norm = norm_1(a);
    let (coeffs, squarings): (&[f64], i32) = if norm <= THETA_3 {
        (&PADE_3, 0)
    } else if norm <= THETA_5 {
        (&PADE_5, 0)
    } else if norm <= THETA_7 {
        (&PADE_7, 0)
    } else if norm <= THETA_9 {
        (&PADE_9, 0)
    } else {
        let s = (norm / THETA_13).log2().ceil().max(0.0) as i32;
        (&PADE_13, s)
    };
    let scaled = scale(a, 0.5f64.powi(squarings));
    let (u, v) = pade_uv(&scaled, coeffs);
    let denom = &v - &u;
    let numer = &v + &u;
    let mut r = denom
        .lu()
        .solve(&numer)
        .expect("Pade denominator is nonsingular for arguments within theta");
    for _ in 0..squarings {
        r = &r * &r;
    }
    r
}

/// `phi_1(M) = (exp(M) - I) M^-1`, read off the top-right block of the
/// exponential of `[[M, I], [0, 0]]`. No inverse of `M` is formed.
pub fn phi1(m: &CMatrix) -> CMatrix {
    let n = m.nrows();
    let mut big = CMatrix::zeros(2 * n, 2 * n);
    big.view_mut((0, 0), (n, n)).copy_from(m);
    big.view_mut((0, n), (n, n))
        .copy_from(&CMatrix::identity(n, n));
    let e = expm(&big);
    e.view((0, n), (n, n)).into_owned()
}

/// `e^z - 1` without cancellation for small `|z|`.
pub fn expm1_c(z: C64) -> C64 {
    let (x, y) = (z.re, z.im);
    if x < -745.0 {
        return C64::new(-1.0, 0.0);
    }
    let half_sin = (0.5 * y).sin();
    let re = x.exp_m1() * y.cos() - 2.0 * half_sin * half_sin;
    let im = x.exp() * y.sin();
    C64::new(re, im)
}

/// `(1 - e^{-z}) / z`, the integral of `e^{-tau z}` over `[0, 1]`.
pub fn phi1_neg_c(z: C64) -> C64 {
    if z.norm() < 1e-8 {
        // 1 - z/2 + z^2/6
        C64::new(1.0, 0.0) - z * 0.5 + z * z / 6.0
    } else {
        -expm1_c(-z) / z
    }
}

pub fn vec_norm(v: &CVector) -> f64 {
    v.norm()
}

/// Inner product linear in the first slot, `<x, y> = sum x_i conj(y_i)`.
pub fn inner(x: &CVector, y: &CVector) -> C64 {
    x.iter().zip(y.iter()).map(|(a, b)| a * b.conj()).sum()
}

pub fn random_vector<R: Rng>(rng: &mut R, dim: usize) -> CVector {
    CVector::from_fn(dim, |_, _| {
        C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
    })
}

pub fn random_unit_vector<R: Rng>(rng: &mut R, dim: usize) -> CVector {
    let v = random_vector(rng, dim);
    let n = v.norm();
    v / C64::new(n, 0.0)
}

pub fn random_matrix<R: Rng>(rng: &mut R, n: usize) -> CMatrix {
    CMatrix::from_fn(n, n, |_, _| {
        C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
    })
}

/// Unitary factor of a QR factorization of a random complex matrix.
pub fn random_unitary<R: Rng>(rng: &mut R, n: usize) -> CMatrix {
    random_matrix(rng, n).qr().q()
}
