use std::sync::Arc;

use maxreg_core::balayage::{sweep, weak_convergence_check, SweepKernel};
use maxreg_core::linalg::{self, inner, CMatrix, CVector, C64};
use maxreg_core::maxreg::{self, backward_direct, backward_fast, forward_adjoint, forward_direct, forward_fast};
use maxreg_core::squarefn::{quadratic_constant, square_function_norm};
use maxreg_core::{GridFunction, SectorialOperator, Symbol, TimeGrid, WeightExponent};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// Random sectorial operator: eigenvalues with modulus in [0.1, 10] and
/// argument below 1.2, basis either unitary or a well-conditioned
/// perturbation of the identity.
fn random_operator(seed: u64, dim: usize, normal: bool) -> SectorialOperator {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values: Vec<C64> = (0..dim)
        .map(|_| {
            let r = 10f64.powf(rng.random_range(-1.0..1.0));
            C64::from_polar(r, rng.random_range(-1.2..1.2))
        })
        .collect();
    let basis = if normal {
        linalg::random_unitary(&mut rng, dim)
    } else {
        CMatrix::identity(dim, dim) + linalg::random_matrix(&mut rng, dim) * c(0.3, 0.0)
    };
    SectorialOperator::make_diagonalizable(basis, &values).unwrap()
}

fn random_function(grid: &Arc<TimeGrid>, dim: usize, seed: u64) -> GridFunction {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    GridFunction::from_fn(grid.clone(), |_| linalg::random_vector(&mut rng, dim)).unwrap()
}

fn grid(n: usize) -> Arc<TimeGrid> {
    Arc::new(TimeGrid::new(1e-3, 1e2, n).unwrap())
}

fn h0(f: &GridFunction) -> f64 {
    f.weighted_norm(WeightExponent::UNWEIGHTED)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn semigroup_law(seed in any::<u64>(), dim in 1usize..5, normal in any::<bool>(), s in 0.0f64..3.0, t in 0.0f64..3.0) {
        let op = random_operator(seed, dim, normal);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
        let h = linalg::random_vector(&mut rng, dim);
        for a in [op.clone(), op.without_spectral_data()] {
            let lhs = a.semigroup_apply(s + t, &h).unwrap();
            let rhs = a.semigroup_apply(s, &a.semigroup_apply(t, &h).unwrap()).unwrap();
            prop_assert!((&lhs - &rhs).norm() <= 1e-10 * a.basis_condition() * h.norm());
        }
    }

    #[test]
    fn spectral_and_dense_paths_agree(seed in any::<u64>(), dim in 1usize..5, normal in any::<bool>()) {
        let op = random_operator(seed, dim, normal);
        let dense = op.without_spectral_data();
        let g = grid(200);
        let f = random_function(&g, dim, seed);
        let tol = 1e-10 * op.basis_condition();
        let a = forward_fast(&op, &f).unwrap().values;
        let b = forward_fast(&dense, &f).unwrap().values;
        prop_assert!(h0(&a.sub(&b).unwrap()) <= tol * h0(&a));
        let a = backward_fast(&op, &f).unwrap().values;
        let b = backward_fast(&dense, &f).unwrap().values;
        prop_assert!(h0(&a.sub(&b).unwrap()) <= tol * h0(&a));
    }

    #[test]
    fn fast_matches_direct(seed in any::<u64>(), dim in 1usize..5, normal in any::<bool>()) {
        let op = random_operator(seed, dim, normal);
        let g = grid(300);
        let f = random_function(&g, dim, seed);
        let a = forward_fast(&op, &f).unwrap().values;
        let b = forward_direct(&op, &f).unwrap().values;
        prop_assert!(h0(&a.sub(&b).unwrap()) <= 1e-10 * h0(&b));
        let a = backward_fast(&op, &f).unwrap().values;
        let b = backward_direct(&op, &f).unwrap().values;
        prop_assert!(h0(&a.sub(&b).unwrap()) <= 1e-10 * h0(&b));
    }

    #[test]
    fn weighted_adjoint_is_exact(seed in any::<u64>(), dim in 1usize..4, alpha in -1.0f64..1.0) {
        let op = random_operator(seed, dim, false);
        let g = grid(200);
        let f = random_function(&g, dim, seed);
        let v = random_function(&g, dim, seed.wrapping_add(1));
        let w = WeightExponent(alpha);
        let lhs = forward_fast(&op, &f).unwrap().values.weighted_pairing(&v, w).unwrap();
        let rhs = f.weighted_pairing(&forward_adjoint(&op, &v, w).unwrap(), w).unwrap();
        prop_assert!((lhs - rhs).norm() <= 1e-10 * f.weighted_norm(w) * v.weighted_norm(w) * op.basis_condition());
        let lhs = backward_fast(&op, &f).unwrap().values.weighted_pairing(&v, w).unwrap();
        let rhs = f.weighted_pairing(&maxreg::backward_adjoint(&op, &v, w).unwrap(), w).unwrap();
        prop_assert!((lhs - rhs).norm() <= 1e-10 * f.weighted_norm(w) * v.weighted_norm(w) * op.basis_condition());
    }

    /// `M+^{cA}` of `f(c.)` at `t` is `M+^A f` at `ct`; on a grid dilated by
    /// `1/c` the discrete values coincide.
    #[test]
    fn scaling_covariance(seed in any::<u64>(), dim in 1usize..4, log_c in -2.0f64..2.0) {
        let scale = 10f64.powf(log_c);
        let op = random_operator(seed, dim, true);
        let g = grid(200);
        let f = random_function(&g, dim, seed);
        let g_scaled = Arc::new(g.dilated(1.0 / scale).unwrap());
        let f_scaled = GridFunction::new(g_scaled, f.values().to_vec()).unwrap();
        let op_scaled = op.scaled(scale).unwrap();
        for (a, b) in [
            (forward_fast(&op, &f).unwrap().values, forward_fast(&op_scaled, &f_scaled).unwrap().values),
            (backward_fast(&op, &f).unwrap().values, backward_fast(&op_scaled, &f_scaled).unwrap().values),
        ] {
            let diff: f64 = a.values().iter().zip(b.values()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
            let peak: f64 = a.values().iter().map(|x| x.norm()).fold(0.0, f64::max);
            prop_assert!(diff <= 1e-9 * peak);
        }
    }

    #[test]
    fn square_function_bounded_by_quadratic_constant(seed in any::<u64>(), dim in 1usize..5, normal in any::<bool>()) {
        let op = random_operator(seed, dim, normal);
        let g = grid(400);
        let constant = quadratic_constant(&op, Symbol::PowerExp, 1, &g).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 7);
        for _ in 0..5 {
            let h = linalg::random_vector(&mut rng, dim);
            prop_assert!(square_function_norm(&op, &h, &g).unwrap() <= constant * h.norm() * (1.0 + 1e-10));
        }
    }

    #[test]
    fn quadratic_constant_unitarily_invariant(seed in any::<u64>(), dim in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values: Vec<C64> = (0..dim).map(|_| C64::from_polar(rng.random_range(0.2..5.0), rng.random_range(-1.0..1.0))).collect();
        let diag = SectorialOperator::make_diagonalizable(CMatrix::identity(dim, dim), &values).unwrap();
        let rotated = SectorialOperator::make_diagonalizable(linalg::random_unitary(&mut rng, dim), &values).unwrap();
        let g = grid(400);
        for symbol in [Symbol::PowerExp, Symbol::ExpDifference] {
            let a = quadratic_constant(&diag, symbol, 2, &g).unwrap();
            let b = quadratic_constant(&rotated, symbol, 2, &g).unwrap();
            prop_assert!((a - b).abs() <= 1e-9 * a);
        }
    }

    #[test]
    fn sweep_is_linear(seed in any::<u64>(), dim in 1usize..4, re in -2.0f64..2.0, im in -2.0f64..2.0, n in 1u32..4) {
        let op = random_operator(seed, dim, false);
        let g = grid(200);
        let f = random_function(&g, dim, seed);
        let v = random_function(&g, dim, seed ^ 3);
        let a = c(re, im);
        let combo = f.scale(a).add(&v).unwrap();
        for kernel in SweepKernel::ALL {
            let lhs = sweep(&op, kernel, n, &combo).unwrap().value;
            let rhs = sweep(&op, kernel, n, &f).unwrap().value * a + sweep(&op, kernel, n, &v).unwrap().value;
            prop_assert!((&lhs - &rhs).norm() <= 1e-10 * (lhs.norm() + rhs.norm() + 1.0));
        }
    }

    /// Convergence of the `e^{-sA}` sweep implies convergence for `e^{-nsA}`.
    #[test]
    fn weak_convergence_encompasses_larger_n(seed in any::<u64>(), dim in 1usize..4) {
        let op = random_operator(seed, dim, true);
        let g = Arc::new(TimeGrid::new(1e-4, 1e3, 800).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rate = rng.random_range(0.05..2.0);
        let freq = rng.random_range(0.0..3.0);
        let v = linalg::random_vector(&mut rng, dim);
        let f = GridFunction::from_fn(g.clone(), |s| &v * (C64::new(-rate * s, freq * s).exp() / (1.0 + s))).unwrap();
        if weak_convergence_check(&op, 1, &f).unwrap().converged {
            for n in [2, 3, 5] {
                prop_assert!(weak_convergence_check(&op, n, &f).unwrap().converged, "n = {}", n);
            }
        }
    }
}

/// The exact adjoint of the discrete `M+` and the discrete `M-` of `A*`
/// discretize the same operator, so they agree to quadrature accuracy on
/// smooth data.
#[test]
fn forward_adjoint_approximates_backward_of_adjoint() {
    let op = random_operator(11, 3, false);
    let g = Arc::new(TimeGrid::new(1e-4, 1e3, 2000).unwrap());
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let h = linalg::random_vector(&mut rng, 3);
    let v = GridFunction::from_fn(g.clone(), |s| op.apply_power_exp(1, s, &h) * c(s, 0.0)).unwrap();
    let exact = forward_adjoint(&op, &v, WeightExponent::UNWEIGHTED).unwrap();
    let mirror = backward_fast(&op.adjoint(), &v).unwrap().values;
    // Node 0 of the exact adjoint also absorbs the leading cell (0, t_0],
    // divided by the node's small quadrature weight; compare from node 1 on.
    let gap = exact.values()[1..].iter().zip(&mirror.values()[1..]).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
    let peak = mirror.values().iter().map(|v| v.norm()).fold(0.0, f64::max);
    let rel = gap / peak;
    assert!(rel < 1e-3, "relative gap {rel:e}");
    assert!(rel > 1e-12, "the two schemes are not expected to coincide");
}

#[test]
fn duality_pairing_matches_inner_product() {
    let g = grid(50);
    let f = random_function(&g, 2, 1);
    let v = random_function(&g, 2, 2);
    let direct: C64 = f
        .values()
        .iter()
        .zip(v.values())
        .zip(g.weights())
        .map(|((a, b), &w)| inner(a, b) * w)
        .sum();
    assert!((f.pairing(&v).unwrap() - direct).norm() < 1e-14);
    let _: &CVector = &f.values()[0];
}
