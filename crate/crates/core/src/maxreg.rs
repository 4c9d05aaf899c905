//! Forward and backward maximal regularity operators
//!
//! ```text
//! M+ f(t) = int_0^t   A e^{-(t-s)A} f(s) ds
//! M- f(t) = int_t^inf A e^{-(s-t)A} f(s) ds
//! ```
//!
//! on a [`TimeGrid`]. Data are piecewise constant on each cell `[t_j, t_{j+1}]`
//! (cell value `(f_j + f_{j+1}) / 2`) and on the leading cell `(0, t_0]`
//! (value `f_0`). Against constant data the kernel integrates exactly to
//! `I - e^{-delta A}`, so the `(t - s)^{-1}` singularity of the kernel is
//! never sampled. The backward operator drops the tail `(t_max, inf)`.
//!
//! The direct evaluators sum all cell contributions for every output node,
//! `O(N^2)` kernel applications. The fast evaluators run the equivalent
//! exponential-time-differencing recursion, `O(N)`.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridFunction, TimeGrid, WeightExponent};
use crate::linalg::{self, CVector, C64};
use crate::operator::{Frame, SectorialOperator, Step};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// `M+`, causal.
    Forward,
    /// `M-`, anticausal.
    Backward,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Direct,
    Fast,
}

#[derive(Clone, Debug)]
pub struct MaxRegResult {
    pub values: GridFunction,
    pub method: Method,
    /// Output nodes whose adjacent (singular) cell was integrated in closed form.
    pub singular_cells_handled: usize,
    /// Size of the dropped tail if `f` stayed at its last value beyond `t_max`.
    pub tail_bound: f64,
}

fn check_input(op: &SectorialOperator, f: &GridFunction) -> Result<()> {
    if f.dim() != op.dim() {
        return Err(Error::DimensionMismatch { expected: op.dim(), got: f.dim() });
    }
    Ok(())
}

fn to_work(frame: &Frame<'_>, f: &GridFunction) -> Vec<CVector> {
    f.values().iter().map(|v| frame.to_work(v)).collect()
}

fn from_work(frame: &Frame<'_>, grid: &Arc<TimeGrid>, w: &[CVector]) -> GridFunction {
    let values = w.iter().map(|x| frame.back_from_work(x)).collect();
    GridFunction::new(grid.clone(), values).expect("lengths match the grid")
}

fn cell_averages(fw: &[CVector]) -> Vec<CVector> {
    fw.windows(2).map(|p| (&p[0] + &p[1]) * C64::new(0.5, 0.0)).collect()
}

fn cell_widths(grid: &TimeGrid) -> Vec<f64> {
    grid.nodes().windows(2).map(|p| p[1] - p[0]).collect()
}

fn tail_bound(op: &SectorialOperator, f: &GridFunction) -> f64 {
    op.basis_condition() * f.values().last().map_or(0.0, |v| v.norm())
}

/// Which closed-form cell integral is used by the recursions.
#[derive(Clone, Copy)]
enum Primitive {
    /// `int_0^delta A e^{-tau A} = I - e^{-delta A}`
    Kernel,
    /// `int_0^delta e^{-tau A} = A^-1 (I - e^{-delta A})`
    Integrated,
}

fn cell_steps(frame: &Frame<'_>, delta: f64, primitive: Primitive) -> (Step, Step) {
    match primitive {
        Primitive::Kernel => frame.cell_pair(delta),
        Primitive::Integrated => (frame.propagator(delta), frame.integrated_propagator(delta)),
    }
}

fn causal_recursion(
    frame: &Frame<'_>,
    grid: &TimeGrid,
    fw: &[CVector],
    primitive: Primitive,
) -> Vec<CVector> {
    let n = fw.len();
    let avg = cell_averages(fw);
    let widths = cell_widths(grid);
    let mut out = Vec::with_capacity(n);
    let (_, lead) = cell_steps(frame, grid.t_min(), primitive);
    out.push(lead.apply(&fw[0]));
    for k in 0..n - 1 {
        let (prop, prim) = cell_steps(frame, widths[k], primitive);
        let next = prop.apply(&out[k]) + prim.apply(&avg[k]);
        out.push(next);
    }
    out
}

fn anticausal_recursion(
    frame: &Frame<'_>,
    grid: &TimeGrid,
    fw: &[CVector],
    primitive: Primitive,
) -> Vec<CVector> {
    let n = fw.len();
    let avg = cell_averages(fw);
    let widths = cell_widths(grid);
    let mut out = vec![CVector::zeros(fw[0].len()); n];
    for k in (0..n - 1).rev() {
        let (prop, prim) = cell_steps(frame, widths[k], primitive);
        out[k] = prop.apply(&out[k + 1]) + prim.apply(&avg[k]);
    }
    out
}

/// `M+ f` by the `O(N)` recursion `y_{k+1} = e^{-dA} y_k + (I - e^{-dA}) fbar_k`.
pub fn forward_fast(op: &SectorialOperator, f: &GridFunction) -> Result<MaxRegResult> {
    check_input(op, f)?;
    let frame = op.frame();
    let out = causal_recursion(&frame, f.grid(), &to_work(&frame, f), Primitive::Kernel);
    Ok(MaxRegResult {
        values: from_work(&frame, f.grid(), &out),
        method: Method::Fast,
        singular_cells_handled: f.len(),
        tail_bound: 0.0,
    })
}

/// `M- f` by the backward recursion `z_k = e^{-dA} z_{k+1} + (I - e^{-dA}) fbar_k`.
pub fn backward_fast(op: &SectorialOperator, f: &GridFunction) -> Result<MaxRegResult> {
    check_input(op, f)?;
    let frame = op.frame();
    let out = anticausal_recursion(&frame, f.grid(), &to_work(&frame, f), Primitive::Kernel);
    Ok(MaxRegResult {
        values: from_work(&frame, f.grid(), &out),
        method: Method::Fast,
        singular_cells_handled: f.len() - 1,
        tail_bound: tail_bound(op, f),
    })
}

/// Closed-form cell contributions `(I - e^{-delta_j A}) fbar_j` in working
/// coordinates, plus the leading-cell term.
fn cell_contributions(frame: &Frame<'_>, grid: &TimeGrid, fw: &[CVector]) -> (CVector, Vec<CVector>) {
    let avg = cell_averages(fw);
    let lead = frame.cell_primitive(grid.t_min()).apply(&fw[0]);
    let cells = cell_widths(grid)
        .iter()
        .zip(&avg)
        .map(|(&d, fb)| frame.cell_primitive(d).apply(fb))
        .collect();
    (lead, cells)
}

/// `sum_i e^{-tau_i A} x_i`, with one kernel evaluation per term.
fn kernel_sum<'a, I>(frame: &Frame<'_>, dim: usize, terms: I) -> CVector
where
    I: Iterator<Item = (f64, &'a CVector)>,
{
    let mut acc = CVector::zeros(dim);
    match frame.values() {
        Some(values) => {
            for (tau, x) in terms {
                for ((a, xi), &z) in acc.iter_mut().zip(x.iter()).zip(values) {
                    *a += (-tau * z).exp() * xi;
                }
            }
        }
        None => {
            for (tau, x) in terms {
                acc += frame.propagator(tau).apply(x);
            }
        }
    }
    acc
}

/// `M+ f` by summing every cell contribution at every node.
pub fn forward_direct(op: &SectorialOperator, f: &GridFunction) -> Result<MaxRegResult> {
    check_input(op, f)?;
    let frame = op.frame();
    let grid = f.grid();
    let t = grid.nodes();
    let fw = to_work(&frame, f);
    let (lead, cells) = cell_contributions(&frame, grid, &fw);
    let d = op.dim();
    let out: Vec<CVector> = (0..t.len())
        .into_par_iter()
        .map(|k| {
            let head = std::iter::once((t[k] - t[0], &lead));
            let body = (0..k).map(|j| (t[k] - t[j + 1], &cells[j]));
            kernel_sum(&frame, d, head.chain(body))
        })
        .collect();
    Ok(MaxRegResult {
        values: from_work(&frame, grid, &out),
        method: Method::Direct,
        singular_cells_handled: t.len(),
        tail_bound: 0.0,
    })
}

/// `M- f` by summing every cell contribution at every node.
pub fn backward_direct(op: &SectorialOperator, f: &GridFunction) -> Result<MaxRegResult> {
    check_input(op, f)?;
    let frame = op.frame();
    let grid = f.grid();
    let t = grid.nodes();
    let fw = to_work(&frame, f);
    let (_, cells) = cell_contributions(&frame, grid, &fw);
    let d = op.dim();
    let out: Vec<CVector> = (0..t.len())
        .into_par_iter()
        .map(|k| kernel_sum(&frame, d, (k..cells.len()).map(|j| (t[j] - t[k], &cells[j]))))
        .collect();
    Ok(MaxRegResult {
        values: from_work(&frame, grid, &out),
        method: Method::Direct,
        singular_cells_handled: t.len() - 1,
        tail_bound: tail_bound(op, f),
    })
}

pub fn apply(
    direction: Direction,
    method: Method,
    op: &SectorialOperator,
    f: &GridFunction,
) -> Result<MaxRegResult> {
    match (direction, method) {
        (Direction::Forward, Method::Direct) => forward_direct(op, f),
        (Direction::Forward, Method::Fast) => forward_fast(op, f),
        (Direction::Backward, Method::Direct) => backward_direct(op, f),
        (Direction::Backward, Method::Fast) => backward_fast(op, f),
    }
}

/// Solution `u` of `u' + Au = f`, `u(0) = 0`, from the same cell model;
/// `A u_k` reproduces `M+ f` at every node.
pub fn solve_forward_evolution(op: &SectorialOperator, f: &GridFunction) -> Result<GridFunction> {
    check_input(op, f)?;
    let frame = op.frame();
    let out = causal_recursion(&frame, f.grid(), &to_work(&frame, f), Primitive::Integrated);
    Ok(from_work(&frame, f.grid(), &out))
}

/// Solution `v` of `v' - Av = f`, `v(inf) = 0`, so that `A v = -M- f`.
pub fn solve_backward_evolution(op: &SectorialOperator, f: &GridFunction) -> Result<GridFunction> {
    check_input(op, f)?;
    let frame = op.frame();
    let out = anticausal_recursion(&frame, f.grid(), &to_work(&frame, f), Primitive::Integrated);
    Ok(from_work(&frame, f.grid(), &out).scale(C64::new(-1.0, 0.0)))
}

/// Exact adjoint of the discrete `M+` for the pairing `sum_k w_k t_k^alpha <., .>`.
///
/// It is a backward recursion driven by `A*`, i.e. the discrete `M-` of the
/// adjoint operator that is dual to this `M+`.
pub fn forward_adjoint(
    op: &SectorialOperator,
    g: &GridFunction,
    alpha: WeightExponent,
) -> Result<GridFunction> {
    check_input(op, g)?;
    let adj = op.adjoint();
    let frame = adj.frame();
    let grid = g.grid();
    let (t, w) = (grid.nodes(), grid.weights());
    let n = t.len();
    let gw: Vec<CVector> = g
        .values()
        .iter()
        .zip(t)
        .zip(w)
        .map(|((v, &tk), &wk)| frame.to_work(v) * C64::new(wk * tk.powf(alpha.0), 0.0))
        .collect();
    let widths = cell_widths(grid);
    // s_m = sum_{k >= m} w_k e^{-(t_k - t_m) A*} g_k
    let mut s = vec![CVector::zeros(op.dim()); n];
    s[n - 1] = gw[n - 1].clone();
    let mut prims = Vec::with_capacity(n - 1);
    for m in (0..n - 1).rev() {
        let (prop, prim) = frame.cell_pair(widths[m]);
        s[m] = &gw[m] + prop.apply(&s[m + 1]);
        prims.push(prim);
    }
    prims.reverse();
    let mut out: Vec<CVector> = vec![CVector::zeros(op.dim()); n];
    out[0] += frame.cell_primitive(grid.t_min()).apply(&s[0]);
    for j in 0..n - 1 {
        let half = prims[j].apply(&s[j + 1]) * C64::new(0.5, 0.0);
        out[j] += &half;
        out[j + 1] += half;
    }
    for ((o, &tk), &wk) in out.iter_mut().zip(t).zip(w) {
        *o /= C64::new(wk * tk.powf(alpha.0), 0.0);
    }
    Ok(from_work(&frame, grid, &out))
}

/// Exact adjoint of the discrete `M-` for the pairing `sum_k w_k t_k^alpha <., .>`.
pub fn backward_adjoint(
    op: &SectorialOperator,
    g: &GridFunction,
    alpha: WeightExponent,
) -> Result<GridFunction> {
    check_input(op, g)?;
    let adj = op.adjoint();
    let frame = adj.frame();
    let grid = g.grid();
    let (t, w) = (grid.nodes(), grid.weights());
    let n = t.len();
    let gw: Vec<CVector> = g
        .values()
        .iter()
        .zip(t)
        .zip(w)
        .map(|((v, &tk), &wk)| frame.to_work(v) * C64::new(wk * tk.powf(alpha.0), 0.0))
        .collect();
    let widths = cell_widths(grid);
    // q_j = sum_{k <= j} w_k e^{-(t_j - t_k) A*} g_k
    let mut out: Vec<CVector> = vec![CVector::zeros(op.dim()); n];
    let mut q = gw[0].clone();
    for j in 0..n - 1 {
        let (prop, prim) = frame.cell_pair(widths[j]);
        let half = prim.apply(&q) * C64::new(0.5, 0.0);
        out[j] += &half;
        out[j + 1] += half;
        q = &gw[j + 1] + prop.apply(&q);
    }
    for ((o, &tk), &wk) in out.iter_mut().zip(t).zip(w) {
        *o /= C64::new(wk * tk.powf(alpha.0), 0.0);
    }
    Ok(from_work(&frame, grid, &out))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NormEstimate {
    pub value: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Estimate after each iteration; nondecreasing up to roundoff.
    pub history: Vec<f64>,
}

const NORM_CONVERGENCE_TOL: f64 = 1e-4;

/// Power iteration on `T^# T`, where `T` is the discrete `M+` or `M-` on
/// `L^2(t^alpha dt; H)` and `T^#` its weighted adjoint. Returns the estimate
/// of `|T|` in that space.
///
/// For `M+` the iterates are kept at zero on the first node. The leading cell
/// `(0, t_0]` carries `f_0` with mass `~ t_0^{1+alpha}`, far more than the
/// node's quadrature weight `t_0^{1+alpha} dl / 2`, and without the
/// restriction the estimate grows like `dl^{-1/2}` for `alpha > 0`.
pub fn operator_norm_estimate(
    direction: Direction,
    op: &SectorialOperator,
    alpha: WeightExponent,
    grid: &Arc<TimeGrid>,
    iterations: usize,
    seed: u64,
) -> Result<NormEstimate> {
    if iterations < 10 {
        return Err(Error::InvalidParameter(format!("need at least 10 iterations, got {iterations}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = op.dim();
    let restrict = |x: GridFunction| -> Result<GridFunction> {
        if direction == Direction::Backward {
            return Ok(x);
        }
        let grid = x.grid().clone();
        let mut values = x.into_values();
        values[0].fill(C64::new(0.0, 0.0));
        GridFunction::new(grid, values)
    };
    let mut x = restrict(GridFunction::from_fn(grid.clone(), |_| linalg::random_vector(&mut rng, d))?)?;
    x = x.scale(C64::new(1.0 / x.weighted_norm(alpha), 0.0));
    let mut history = Vec::with_capacity(iterations);
    for _ in 0..iterations {
        let y = match direction {
            Direction::Forward => forward_fast(op, &x)?.values,
            Direction::Backward => backward_fast(op, &x)?.values,
        };
        history.push(y.weighted_norm(alpha));
        let z = match direction {
            Direction::Forward => restrict(forward_adjoint(op, &y, alpha)?)?,
            Direction::Backward => backward_adjoint(op, &y, alpha)?,
        };
        let nz = z.weighted_norm(alpha);
        if nz == 0.0 {
            break;
        }
        x = z.scale(C64::new(1.0 / nz, 0.0));
    }
    let value = history.iter().cloned().fold(0.0, f64::max);
    let converged = match history.as_slice() {
        [.., a, b] => (b - a).abs() <= NORM_CONVERGENCE_TOL * b.max(1e-300),
        _ => true,
    };
    Ok(NormEstimate { value, converged, iterations: history.len(), history })
}
