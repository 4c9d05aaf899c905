//! Sweeping (balayage) functionals `int_0^inf K(t, A) f(t) dt` and the
//! certificates for their convergence and vanishing.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridFunction, TimeGrid};
use crate::linalg::{CVector, C64};
use crate::operator::{HVector, SectorialOperator};
use crate::symbol::Symbol;

/// Kernels `K(t, A)` of the sweeping integrals.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepKernel {
    /// `A e^{-n tA}`
    GeneratorExp,
    /// `(tA)^n e^{-tA}`
    PowerExp,
    /// `e^{-n tA}`
    Exp,
    /// `t^{n-1} A^n e^{-tA}`
    MonomialPowerExp,
}

impl SweepKernel {
    pub const ALL: [SweepKernel; 4] = [
        SweepKernel::GeneratorExp,
        SweepKernel::PowerExp,
        SweepKernel::Exp,
        SweepKernel::MonomialPowerExp,
    ];

    fn symbol(self) -> Symbol {
        match self {
            SweepKernel::GeneratorExp => Symbol::GeneratorExp,
            SweepKernel::PowerExp => Symbol::PowerExp,
            SweepKernel::Exp => Symbol::Exp,
            SweepKernel::MonomialPowerExp => Symbol::MonomialPowerExp,
        }
    }

    pub fn tag(self) -> &'static str {
        self.symbol().tag()
    }
}

impl fmt::Display for SweepKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for SweepKernel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SweepKernel::ALL
            .into_iter()
            .find(|k| k.tag() == s)
            .ok_or_else(|| Error::UnknownTag(s.to_string()))
    }
}

#[derive(Clone, Debug)]
pub struct SweepResult {
    pub value: HVector,
    /// `|K(t_max) f(t_max)| t_max`, the size of the neglected tail if the
    /// integrand stopped decaying at the last node.
    pub tail_bound: f64,
}

/// `int_0^inf K(t, A) f(t) dt` by trapezoid weights in `ln t`, plus the
/// leading cell `(0, t_0]` with the integrand frozen at `t_0`.
pub fn sweep(op: &SectorialOperator, kernel: SweepKernel, n: u32, f: &GridFunction) -> Result<SweepResult> {
    sweep_until(op, kernel, n, f, f.len())
}

fn sweep_until(
    op: &SectorialOperator,
    kernel: SweepKernel,
    n: u32,
    f: &GridFunction,
    upto: usize,
) -> Result<SweepResult> {
    if n == 0 {
        return Err(Error::InvalidParameter("kernel parameter must be >= 1".into()));
    }
    if f.dim() != op.dim() {
        return Err(Error::DimensionMismatch { expected: op.dim(), got: f.dim() });
    }
    let grid = f.grid();
    let (t, w) = (grid.nodes(), grid.weights());
    let sym = kernel.symbol();
    let mut acc = CVector::zeros(op.dim());
    let mut last = 0.0;
    for k in 0..upto {
        let weight = if k + 1 == upto && upto < t.len() {
            // right end of a partial integral gets the trapezoid half weight
            0.5 * t[k] * grid.log_step()
        } else {
            w[k]
        };
        let term = sym.evaluate(op, n, t[k], &f.values()[k]);
        if k == 0 {
            acc += &term * C64::new(t[0], 0.0);
        }
        last = term.norm() * t[k];
        acc += term * C64::new(weight, 0.0);
    }
    Ok(SweepResult { value: acc, tail_bound: last })
}

/// `f(s) = sA e^{-sA} h - (9/4) sA e^{-2sA} h`, an input of `L^2(ds/s; H)`
/// with `int_0^inf A e^{-sA} f(s) ds = 0`: per eigenvalue the two terms sweep
/// to `1/4` and `(9/4)(1/9)`.
pub fn zero_balayage_input(op: &SectorialOperator, h: &HVector, grid: &Arc<TimeGrid>) -> Result<GridFunction> {
    op.check_dim(h)?;
    GridFunction::from_fn(grid.clone(), |s| {
        let a = op.apply_power_exp(1, s, h);
        let b = op.apply_power_exp(1, 2.0 * s, h);
        (a - b * C64::new(2.25, 0.0)) * C64::new(s, 0.0)
    })
}

#[derive(Clone, Debug)]
pub struct ConvergenceCheck {
    pub converged: bool,
    pub value: HVector,
    /// Norms of the partial-integral increments over the last two decades.
    pub increments: Vec<f64>,
}

const WEAK_CONVERGENCE_TOL: f64 = 1e-6;

/// Cauchy test for `int_0^inf e^{-n sA} f(s) ds` over the top two decades of
/// the grid, from the partial integrals up to `t_max/100`, `t_max/10` and
/// `t_max`. Both increments are reported; the integral counts as converged
/// when the last one is below `1e-6 (|value| + 1)`. In finite dimension weak
/// and norm convergence coincide.
pub fn weak_convergence_check(op: &SectorialOperator, n: u32, f: &GridFunction) -> Result<ConvergenceCheck> {
    let grid = f.grid();
    let t = grid.nodes();
    let cut = |target: f64| t.partition_point(|&x| x <= target * (1.0 + 1e-12)).max(1);
    let ends = [cut(grid.t_max() / 100.0), cut(grid.t_max() / 10.0), t.len()];
    let mut partials = Vec::with_capacity(3);
    for &e in &ends {
        partials.push(sweep_until(op, SweepKernel::Exp, n, f, e)?.value);
    }
    let value = partials[2].clone();
    let scale = value.norm() + 1.0;
    let increments: Vec<f64> = partials.windows(2).map(|p| (&p[1] - &p[0]).norm()).collect();
    let converged = increments[1] < WEAK_CONVERGENCE_TOL * scale;
    Ok(ConvergenceCheck { converged, value, increments })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one() -> (SectorialOperator, HVector) {
        (
            SectorialOperator::scalar(C64::new(1.0, 0.0)).unwrap(),
            CVector::from_vec(vec![C64::new(1.0, 0.0)]),
        )
    }

    fn scalar_fn(grid: &Arc<TimeGrid>, f: impl Fn(f64) -> f64) -> GridFunction {
        GridFunction::from_fn(grid.clone(), |t| CVector::from_vec(vec![C64::new(f(t), 0.0)])).unwrap()
    }

    fn grid() -> Arc<TimeGrid> {
        Arc::new(TimeGrid::new(1e-4, 1e3, 2000).unwrap())
    }

    #[test]
    fn zero_input() {
        let (a, _) = one();
        let f = GridFunction::zeros(grid(), 1);
        for k in SweepKernel::ALL {
            assert_eq!(sweep(&a, k, 2, &f).unwrap().value[0], C64::new(0.0, 0.0));
        }
    }

    #[test]
    fn scalar_sweeps() {
        let (a, _) = one();
        let g = grid();
        // int e^{-2t} e^{-t} dt = 1/3
        let f = scalar_fn(&g, |t| (-t).exp());
        let v = sweep(&a, SweepKernel::GeneratorExp, 2, &f).unwrap().value[0].re;
        assert!((v - 1.0 / 3.0).abs() < 1e-7, "{v}");
        // int e^{-t} t e^{-t} dt = 1/4
        let f = scalar_fn(&g, |t| t * (-t).exp());
        let v = sweep(&a, SweepKernel::Exp, 1, &f).unwrap().value[0].re;
        assert!((v - 0.25).abs() < 1e-7, "{v}");
    }

    #[test]
    fn zero_balayage_scalar_value() {
        let (a, h) = one();
        let g = Arc::new(TimeGrid::new(0.01, 100.0, 5).unwrap());
        let f = zero_balayage_input(&a, &h, &g).unwrap();
        let v = f.values()[2][0].re;
        assert!((v - ((-1.0f64).exp() - 2.25 * (-2.0f64).exp())).abs() < 1e-15);
        assert!((v - 0.063375).abs() < 1e-6);
    }

    #[test]
    fn weak_convergence_examples() {
        let (a, _) = one();
        let g = grid();
        let f = scalar_fn(&g, |t| (-t).exp());
        let c = weak_convergence_check(&a, 1, &f).unwrap();
        assert!(c.converged);
        assert!((c.value[0].re - 0.5).abs() < 1e-7);
        // compact support: value equals the plain sweep
        let f = scalar_fn(&g, |t| if (1.0..2.0).contains(&t) { 1.0 } else { 0.0 });
        let c = weak_convergence_check(&a, 1, &f).unwrap();
        assert!(c.converged);
        assert_eq!(c.value, sweep(&a, SweepKernel::Exp, 1, &f).unwrap().value);
        // slowly decaying data against a semigroup that has not decayed on the grid
        let slow = SectorialOperator::scalar(C64::new(1e-6, 0.0)).unwrap();
        let f = scalar_fn(&g, |t| 1.0 / (1.0 + t));
        assert!(!weak_convergence_check(&slow, 1, &f).unwrap().converged);
    }

    #[test]
    fn kernel_tags() {
        for k in SweepKernel::ALL {
            assert_eq!(k.tag().parse::<SweepKernel>().unwrap(), k);
        }
        assert!("nope".parse::<SweepKernel>().is_err());
    }
}
