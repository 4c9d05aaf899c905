//! Independent references for the balayage and endpoint identities: closed
//! forms for scalar operators and a tensor Gauss-Legendre evaluation of the
//! double integrals for the discrete Laplacian, computed in its eigenbasis.

use std::f64::consts::PI;
use std::sync::Arc;

use maxreg_core::balayage::zero_balayage_input;
use maxreg_core::linalg::{CVector, C64};
use maxreg_core::maxreg::{backward_fast, forward_fast};
use maxreg_core::verify::{
    balayage_backward_sides, balayage_forward_sides, endpoint_backward_parts, endpoint_forward_sides,
};
use maxreg_core::{GridFunction, SectorialOperator, TimeGrid};
use nalgebra::DMatrix;

fn acceptance_grid() -> Arc<TimeGrid> {
    Arc::new(TimeGrid::new(1e-4, 1e3, 2000).unwrap())
}

fn one() -> CVector {
    CVector::from_element(1, C64::new(1.0, 0.0))
}

fn factorial(n: u32) -> f64 {
    (1..=n).map(f64::from).product()
}

/// Library values carry the `O(h^2)` error of the cell model, `h` the log step
/// (`h^2 ~ 7e-5` on the acceptance grid).
fn assert_close(got: C64, want: C64, tol: f64, what: &str) {
    let rel = (got - want).norm() / want.norm();
    assert!(rel < tol, "{what}: got {got}, want {want}, rel {rel:e}");
}

// Scalar closed forms with f(s) = s e^{-lambda s}: M+f(t) = lambda t^2 e^{-lambda t} / 2.

#[test]
fn scalar_balayage_forward_closed_form() {
    let g = acceptance_grid();
    for lambda in [C64::new(1.0, 0.0), C64::new(2.5, 0.0), C64::from_polar(1.0, PI / 4.0)] {
        let op = SectorialOperator::scalar(lambda).unwrap();
        let f = GridFunction::from_fn(g.clone(), |s| one() * (C64::new(s, 0.0) * (-lambda * s).exp())).unwrap();
        for n in 1..=3u32 {
            let want = 1.0 / (f64::from(n + 1).powi(3) * lambda);
            let (lhs, rhs) = balayage_forward_sides(&op, &f, n).unwrap();
            assert_close(lhs[0], want, 1e-4, "balayage_forward lhs");
            assert_close(rhs[0], want, 1e-4, "balayage_forward rhs");
        }
    }
}

#[test]
fn scalar_balayage_backward_closed_form() {
    let g = acceptance_grid();
    let op = SectorialOperator::scalar(C64::new(1.0, 0.0)).unwrap();
    let f = GridFunction::from_fn(g.clone(), |s| one() * C64::new(s * (-s).exp(), 0.0)).unwrap();
    for n in 1..=3u32 {
        // int s^{n+1} e^{-s} s e^{-s} ds / (n+1)
        let want = C64::new(factorial(n + 2) / (f64::from(n + 1) * 2f64.powi(n as i32 + 3)), 0.0);
        let (lhs, rhs) = balayage_backward_sides(&op, &f, n).unwrap();
        assert_close(lhs[0], want, 1e-4, "balayage_backward lhs");
        assert_close(rhs[0], want, 1e-4, "balayage_backward rhs");
    }
}

#[test]
fn scalar_endpoint_forward_closed_form() {
    let g = acceptance_grid();
    let op = SectorialOperator::scalar(C64::new(1.0, 0.0)).unwrap();
    let f = GridFunction::from_fn(g.clone(), |s| one() * C64::new((-s).exp(), 0.0)).unwrap();
    for n in 1..=3u32 {
        let want = C64::new(1.0 / f64::from(n + 1).powi(2), 0.0);
        let (lhs, rhs) = endpoint_forward_sides(&op, &f, n).unwrap();
        assert_close(lhs[0], want, 1e-4, "endpoint_forward lhs");
        assert_close(rhs[0], want, 1e-4, "endpoint_forward rhs");
    }
}

/// With `f = sλe^{-sλ} - (9/4) sλe^{-2sλ}` the right side is
/// `(n+1)! [2^{-(n+2)} - (9/4) 3^{-(n+2)}] / n` for every `λ > 0`.
#[test]
fn scalar_endpoint_backward_closed_form() {
    let g = acceptance_grid();
    for lambda in [1.0, 0.3, 4.0] {
        let op = SectorialOperator::scalar(C64::new(lambda, 0.0)).unwrap();
        let f = zero_balayage_input(&op, &one(), &g).unwrap();
        for n in 1..=3u32 {
            let k = n as i32 + 2;
            let want = factorial(n + 1) * (2f64.powi(-k) - 2.25 * 3f64.powi(-k)) / f64::from(n);
            let (lhs, integral) = endpoint_backward_parts(&op, &f, n).unwrap();
            let want = C64::new(want, 0.0);
            assert_close(lhs[0], want, 1e-4, "endpoint_backward lhs");
            assert_close(integral[0] / f64::from(n), want, 1e-4, "endpoint_backward rhs");
        }
    }
    let n1 = factorial(2) * (2f64.powi(-3) - 2.25 * 3f64.powi(-3));
    assert!((n1 - 1.0 / 12.0).abs() < 1e-15);
}

// Tensor Gauss-Legendre reference for the Laplacian.

/// Nodes and weights of the `m`-point rule on `[-1, 1]` by Newton iteration
/// on the Legendre recurrence.
fn gauss_legendre(m: usize) -> Vec<(f64, f64)> {
    (0..m)
        .map(|i| {
            let mut x = (PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, x);
                for k in 2..=m {
                    let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                    p0 = p1;
                    p1 = p2;
                }
                dp = m as f64 * (x * p1 - p0) / (x * x - 1.0);
                let dx = p1 / dp;
                x -= dx;
                if dx.abs() < 1e-15 {
                    break;
                }
            }
            (x, 2.0 / ((1.0 - x * x) * dp * dp))
        })
        .collect()
}

/// Composite rule on `[a, b]` in the variable `u = ln s`; returns `(s, ds)` pairs.
struct LogRule {
    base: Vec<(f64, f64)>,
    panels: usize,
}

impl LogRule {
    fn new() -> Self {
        Self { base: gauss_legendre(16), panels: 48 }
    }

    fn points(&self, a: f64, b: f64) -> Vec<(f64, f64)> {
        let (ua, ub) = (a.ln(), b.ln());
        let hw = (ub - ua) / self.panels as f64 / 2.0;
        let mut out = Vec::with_capacity(self.panels * self.base.len());
        for p in 0..self.panels {
            let mid = ua + (2 * p + 1) as f64 * hw;
            for &(x, w) in &self.base {
                let s = (mid + hw * x).exp();
                out.push((s, w * hw * s));
            }
        }
        out
    }
}

const SUPPORT: (f64, f64) = (0.1, 10.0);

/// Smooth bump in `ln s`, supported on `SUPPORT`.
fn bump(s: f64) -> f64 {
    let (a, b) = SUPPORT;
    let u = (2.0 * s.ln() - (a * b).ln()) / (b / a).ln();
    if u.abs() >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - u * u)).exp()
    }
}

struct Eigen {
    values: Vec<f64>,
    vectors: DMatrix<f64>,
}

fn real_eigen(op: &SectorialOperator) -> Eigen {
    let m = op.matrix();
    let real = DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)].re);
    let e = real.symmetric_eigen();
    Eigen { values: e.eigenvalues.iter().copied().collect(), vectors: e.eigenvectors }
}

/// `int_0^inf l e^{-n l t} int_0^t l e^{-l(t-s)} b(s) ds dt` for one eigenvalue `l`.
fn forward_balayage_reference(rule: &LogRule, l: f64, n: u32) -> f64 {
    let (a, b) = SUPPORT;
    let nf = f64::from(n);
    let inner = |t: f64| -> f64 {
        rule.points(a, t).iter().map(|&(s, w)| w * l * (-l * (t - s)).exp() * bump(s)).sum()
    };
    let near: f64 = rule.points(a, b).iter().map(|&(t, w)| w * l * (-nf * l * t).exp() * inner(t)).sum();
    // beyond the support the inner integral is e^{-lt} int l e^{ls} b(s) ds
    let moment: f64 = rule.points(a, b).iter().map(|&(s, w)| w * l * (-l * (b - s)).exp() * bump(s)).sum();
    let far = moment * l * (-nf * l * b).exp() / ((nf + 1.0) * l);
    near + far
}

/// `int_0^inf (lt)^n e^{-lt} int_t^inf l e^{-l(s-t)} b(s) ds dt` for one eigenvalue `l`.
fn backward_balayage_reference(rule: &LogRule, l: f64, n: u32) -> f64 {
    let (a, b) = SUPPORT;
    let ni = n as i32;
    let inner = |t: f64| -> f64 {
        rule.points(t, b).iter().map(|&(s, w)| w * l * (-l * (s - t)).exp() * bump(s)).sum()
    };
    let near: f64 = rule.points(a, b).iter().map(|&(t, w)| w * (l * t).powi(ni) * (-l * t).exp() * inner(t)).sum();
    // below the support the inner integral is e^{lt} int l e^{-ls} b(s) ds
    let moment: f64 = rule.points(a, b).iter().map(|&(s, w)| w * l * (-l * (s - a)).exp() * bump(s)).sum();
    let far = moment * (-l * a).exp() * l.powi(ni) * a.powi(ni + 1) / f64::from(n + 1);
    near + far
}

fn one_dim(rule: &LogRule, kernel: impl Fn(f64) -> f64) -> f64 {
    rule.points(SUPPORT.0, SUPPORT.1).iter().map(|&(s, w)| w * kernel(s) * bump(s)).sum()
}

fn to_eigen(e: &Eigen, v: &CVector) -> Vec<C64> {
    (0..v.len())
        .map(|k| (0..v.len()).map(|j| v[j] * e.vectors[(j, k)]).sum())
        .collect()
}

fn laplacian_setup() -> (SectorialOperator, Eigen, CVector, GridFunction) {
    let op = SectorialOperator::make_discrete_laplacian(8, 0.5).unwrap();
    let e = real_eigen(&op);
    let v = CVector::from_fn(8, |j, _| C64::new(1.0 + j as f64 * 0.25, 0.5 - 0.1 * j as f64));
    let f = GridFunction::from_fn(acceptance_grid(), |s| &v * C64::new(bump(s), 0.0)).unwrap();
    (op, e, v, f)
}

fn max_rel(got: &CVector, want: &[C64]) -> f64 {
    let diff: f64 = got.iter().zip(want).map(|(g, w)| (g - w).norm_sqr()).sum::<f64>().sqrt();
    diff / want.iter().map(|w| w.norm_sqr()).sum::<f64>().sqrt()
}

fn from_eigen(e: &Eigen, coeffs: &[C64]) -> Vec<C64> {
    let d = coeffs.len();
    (0..d).map(|j| (0..d).map(|k| coeffs[k] * e.vectors[(j, k)]).sum()).collect()
}

#[test]
fn gauss_legendre_integrates_polynomials() {
    let rule = gauss_legendre(16);
    let total: f64 = rule.iter().map(|&(_, w)| w).sum();
    assert!((total - 2.0).abs() < 1e-14);
    let x30: f64 = rule.iter().map(|&(x, w)| w * x.powi(30)).sum();
    assert!((x30 - 2.0 / 31.0).abs() < 1e-14);
    let log = LogRule::new();
    let int: f64 = log.points(0.5, 4.0).iter().map(|&(s, w)| w * s * s).sum();
    assert!((int - (64.0 - 0.125) / 3.0).abs() < 1e-12);
}

#[test]
fn laplacian_eigenbasis_diagonalizes() {
    let (op, e, _, _) = laplacian_setup();
    let mut expected: Vec<f64> = op.eigenvalues().iter().map(|z| z.re).collect();
    let mut got = e.values.clone();
    expected.sort_by(f64::total_cmp);
    got.sort_by(f64::total_cmp);
    for (a, b) in got.iter().zip(&expected) {
        assert!((a - b).abs() < 1e-12 * b.abs());
    }
    let q = &e.vectors;
    let eye = q.transpose() * q;
    assert!((eye - DMatrix::identity(8, 8)).norm() < 1e-12);
}

#[test]
fn laplacian_balayage_forward_matches_double_integral() {
    let (op, e, v, f) = laplacian_setup();
    let rule = LogRule::new();
    let c = to_eigen(&e, &v);
    for n in 1..=3u32 {
        let lhs_ref: Vec<C64> = c.iter().zip(&e.values).map(|(ck, &l)| ck * forward_balayage_reference(&rule, l, n)).collect();
        let rhs_ref: Vec<C64> = c
            .iter()
            .zip(&e.values)
            .map(|(ck, &l)| ck * one_dim(&rule, |s| l * (-f64::from(n) * l * s).exp()) / f64::from(n + 1))
            .collect();
        // the reference itself satisfies the identity
        let gap = lhs_ref.iter().zip(&rhs_ref).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(gap < 1e-12, "reference identity gap {gap:e}");
        let (lhs, rhs) = balayage_forward_sides(&op, &f, n).unwrap();
        let want = from_eigen(&e, &lhs_ref);
        assert!(max_rel(&lhs, &want) < 1e-4, "n={n} lhs rel {:e}", max_rel(&lhs, &want));
        assert!(max_rel(&rhs, &want) < 1e-4, "n={n} rhs rel {:e}", max_rel(&rhs, &want));
    }
}

#[test]
fn laplacian_balayage_backward_matches_double_integral() {
    let (op, e, v, f) = laplacian_setup();
    let rule = LogRule::new();
    let c = to_eigen(&e, &v);
    for n in 1..=3u32 {
        let np = n as i32 + 1;
        let lhs_ref: Vec<C64> = c.iter().zip(&e.values).map(|(ck, &l)| ck * backward_balayage_reference(&rule, l, n)).collect();
        let rhs_ref: Vec<C64> = c
            .iter()
            .zip(&e.values)
            .map(|(ck, &l)| ck * one_dim(&rule, |s| (l * s).powi(np) * (-l * s).exp()) / f64::from(n + 1))
            .collect();
        let scale = rhs_ref.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let gap = lhs_ref.iter().zip(&rhs_ref).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(gap < 1e-12 * scale, "reference identity gap {gap:e}");
        let (lhs, rhs) = balayage_backward_sides(&op, &f, n).unwrap();
        let want = from_eigen(&e, &lhs_ref);
        assert!(max_rel(&lhs, &want) < 1e-4, "n={n} lhs rel {:e}", max_rel(&lhs, &want));
        assert!(max_rel(&rhs, &want) < 1e-4, "n={n} rhs rel {:e}", max_rel(&rhs, &want));
    }
}

/// Pointwise values of `M+` and `M-` for the bump input against the same
/// quadrature, at a few interior times.
#[test]
fn laplacian_pointwise_matches_quadrature() {
    let (op, e, v, f) = laplacian_setup();
    let rule = LogRule::new();
    let c = to_eigen(&e, &v);
    let (a, b) = SUPPORT;
    let fwd = forward_fast(&op, &f).unwrap().values;
    let bwd = backward_fast(&op, &f).unwrap().values;
    let g = f.grid();
    for &target in &[0.05, 0.5, 2.0, 8.0, 30.0] {
        let k = g.nodes().iter().position(|&t| t >= target).unwrap();
        let t = g.nodes()[k];
        let fwd_coeffs: Vec<C64> = c
            .iter()
            .zip(&e.values)
            .map(|(ck, &l)| {
                let top = t.clamp(a, b);
                let val: f64 = if t <= a {
                    0.0
                } else {
                    rule.points(a, top).iter().map(|&(s, w)| w * l * (-l * (t - s)).exp() * bump(s)).sum()
                };
                ck * val
            })
            .collect();
        let bwd_coeffs: Vec<C64> = c
            .iter()
            .zip(&e.values)
            .map(|(ck, &l)| {
                let bottom = t.clamp(a, b);
                let val: f64 = if t >= b {
                    0.0
                } else {
                    rule.points(bottom, b).iter().map(|&(s, w)| w * l * (-l * (s - t)).exp() * bump(s)).sum()
                };
                ck * val
            })
            .collect();
        let scale = v.norm();
        for (got, coeffs) in [(&fwd.values()[k], fwd_coeffs), (&bwd.values()[k], bwd_coeffs)] {
            let want = from_eigen(&e, &coeffs);
            let err: f64 = got.iter().zip(&want).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt();
            assert!(err < 1e-4 * scale, "t={t}: error {err:e}");
        }
    }
}
