//! Square-function norms `|| s -> phi(sA) h ||` in `L^2(ds/s; H)` and the
//! best constants of the corresponding quadratic estimates.

use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{TimeGrid, WeightExponent};
use crate::linalg::{CMatrix, CVector, C64};
use crate::operator::{HVector, SectorialOperator};
use crate::symbol::{sample_symbol, Symbol};

/// `|| s A e^{-sA} h ||` in `L^2(ds/s; H)`.
pub fn square_function_norm(op: &SectorialOperator, h: &HVector, grid: &Arc<TimeGrid>) -> Result<f64> {
    Ok(sample_symbol(Symbol::PowerExp, op, 1, h, grid)?.weighted_norm(WeightExponent::DT_OVER_T))
}

/// `phi(tA)` as a matrix, column by column.
pub fn symbol_matrix(op: &SectorialOperator, symbol: Symbol, n: u32, t: f64) -> CMatrix {
    let d = op.dim();
    let mut m = CMatrix::zeros(d, d);
    for j in 0..d {
        let mut e = CVector::zeros(d);
        e[j] = C64::new(1.0, 0.0);
        m.set_column(j, &symbol.evaluate(op, n, t, &e));
    }
    m
}

/// Discrete Gram operator `sum_k w_k t_k^{-1} phi(t_k A)^* phi(t_k A)`.
/// Terms are computed in parallel and summed in node order, so the result
/// does not depend on the thread count.
pub fn gram_operator(op: &SectorialOperator, symbol: Symbol, n: u32, grid: &TimeGrid) -> CMatrix {
    let d = op.dim();
    let terms: Vec<CMatrix> = grid
        .nodes()
        .par_iter()
        .zip(grid.weights().par_iter())
        .map(|(&t, &w)| {
            let m = symbol_matrix(op, symbol, n, t);
            m.ad_mul(&m) * C64::new(w / t, 0.0)
        })
        .collect();
    terms.into_iter().fold(CMatrix::zeros(d, d), |acc, m| acc + m)
}

/// Best constant `C` in `|| phi(sA) h ||_{L^2(ds/s)} <= C |h|`, i.e. the
/// square root of the top eigenvalue of the Gram operator.
pub fn quadratic_constant(op: &SectorialOperator, symbol: Symbol, n: u32, grid: &TimeGrid) -> Result<f64> {
    if !matches!(symbol, Symbol::PowerExp | Symbol::ExpDifference) {
        return Err(Error::InvalidParameter(format!(
            "quadratic constants are defined for power_exp and exp_difference, not {symbol}"
        )));
    }
    if n == 0 {
        return Err(Error::InvalidParameter("symbol parameter must be >= 1".into()));
    }
    let g = gram_operator(op, symbol, n, grid);
    let sym = (&g + g.adjoint()) * C64::new(0.5, 0.0);
    let top = sym.symmetric_eigen().eigenvalues.max();
    Ok(top.max(0.0).sqrt())
}
