//! Log-uniform discretization of the half-line and weighted `L^2(t^alpha dt; H)`
//! quadrature.

use std::io::{Read, Write};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{inner, CVector, C64};
use crate::operator::{HVector, SectorialOperator};

/// Nodes `t_k = t_min (t_max/t_min)^{k/(N-1)}` with trapezoid weights in `ln t`.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeGrid {
    nodes: Vec<f64>,
    log_step: f64,
    /// Quadrature weights for `dt`: `c_k * t_k * log_step`, `c_k = 1/2` at the ends.
    weights: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridDescriptor {
    pub t_min: f64,
    pub t_max: f64,
    pub nodes: usize,
}

impl TimeGrid {
    pub fn new(t_min: f64, t_max: f64, n: usize) -> Result<Self> {
        if !(t_min > 0.0 && t_min.is_finite() && t_max.is_finite()) {
            return Err(Error::InvalidGrid(format!("endpoints must be positive and finite, got ({t_min}, {t_max})")));
        }
        if !(t_min < t_max) {
            return Err(Error::InvalidGrid(format!("need t_min < t_max, got ({t_min}, {t_max})")));
        }
        if n < 2 {
            return Err(Error::InvalidGrid(format!("need at least 2 nodes, got {n}")));
        }
        let log_step = (t_max / t_min).ln() / (n - 1) as f64;
        let mut nodes: Vec<f64> = (0..n).map(|k| t_min * (k as f64 * log_step).exp()).collect();
        nodes[0] = t_min;
        nodes[n - 1] = t_max;
        let weights = nodes
            .iter()
            .enumerate()
            .map(|(k, &t)| {
                let c = if k == 0 || k == n - 1 { 0.5 } else { 1.0 };
                c * t * log_step
            })
            .collect();
        Ok(Self { nodes, log_step, weights })
    }

    /// Grid spanning `[1e-4, 1e4] / mu_min` where `mu_min` is the smallest
    /// real part in the spectrum of `op`.
    pub fn default_for(op: &SectorialOperator, n: usize) -> Result<Self> {
        let t_ref = 1.0 / op.min_re_eigenvalue();
        Self::new(1e-4 * t_ref, 1e4 * t_ref, n)
    }

    /// Grid with the same `t_max` and log step but `n` nodes, so it reaches
    /// further toward `t = 0` when `n` grows.
    pub fn with_nodes_toward_origin(&self, n: usize) -> Result<Self> {
        let t_min = self.t_max() * (-(n as f64 - 1.0) * self.log_step).exp();
        Self::new(t_min, self.t_max(), n)
    }

    /// Nodes multiplied by `c`.
    pub fn dilated(&self, c: f64) -> Result<Self> {
        Self::new(self.t_min() * c, self.t_max() * c, self.len())
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn log_step(&self) -> f64 {
        self.log_step
    }

    pub fn t_min(&self) -> f64 {
        self.nodes[0]
    }

    pub fn t_max(&self) -> f64 {
        self.nodes[self.nodes.len() - 1]
    }

    pub fn descriptor(&self) -> GridDescriptor {
        GridDescriptor { t_min: self.t_min(), t_max: self.t_max(), nodes: self.len() }
    }
}

/// The exponent `alpha` of the measure `t^alpha dt`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightExponent(pub f64);

impl WeightExponent {
    pub const UNWEIGHTED: Self = Self(0.0);
    pub const DT_OVER_T: Self = Self(-1.0);
    pub const T_DT: Self = Self(1.0);

    pub fn value(self) -> f64 {
        self.0
    }

    /// Outside `[-1, 1]` the weighted estimates are not expected to hold.
    pub fn is_outside_endpoint_range(self) -> bool {
        self.0.abs() > 1.0
    }

    pub fn dual(self) -> Self {
        Self(-self.0)
    }
}

/// An `H`-valued function sampled on the nodes of a [`TimeGrid`].
#[derive(Clone, Debug)]
pub struct GridFunction {
    grid: Arc<TimeGrid>,
    values: Vec<HVector>,
}

impl GridFunction {
    pub fn new(grid: Arc<TimeGrid>, values: Vec<HVector>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::DimensionMismatch { expected: grid.len(), got: values.len() });
        }
        if let Some(first) = values.first() {
            let d = first.len();
            if let Some(bad) = values.iter().find(|v| v.len() != d) {
                return Err(Error::DimensionMismatch { expected: d, got: bad.len() });
            }
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: Arc<TimeGrid>, dim: usize) -> Self {
        let values = vec![CVector::zeros(dim); grid.len()];
        Self { grid, values }
    }

    pub fn from_fn<F: FnMut(f64) -> HVector>(grid: Arc<TimeGrid>, mut f: F) -> Result<Self> {
        let values = grid.nodes().iter().map(|&t| f(t)).collect();
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &Arc<TimeGrid> {
        &self.grid
    }

    pub fn values(&self) -> &[HVector] {
        &self.values
    }

    pub fn into_values(self) -> Vec<HVector> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.values.first().map_or(0, |v| v.len())
    }

    /// `(sum_k w_k t_k^alpha |f(t_k)|^2)^{1/2}`.
    pub fn weighted_norm(&self, alpha: WeightExponent) -> f64 {
        self.grid
            .nodes()
            .iter()
            .zip(self.grid.weights())
            .zip(&self.values)
            .map(|((&t, &w), v)| w * t.powf(alpha.0) * v.norm_squared())
            .sum::<f64>()
            .sqrt()
    }

    /// Unweighted discrete pairing `sum_k w_k <f(t_k), g(t_k)>`.
    pub fn pairing(&self, other: &GridFunction) -> Result<C64> {
        self.weighted_pairing(other, WeightExponent::UNWEIGHTED)
    }

    pub fn weighted_pairing(&self, other: &GridFunction, alpha: WeightExponent) -> Result<C64> {
        self.check_compatible(other)?;
        Ok(self
            .grid
            .nodes()
            .iter()
            .zip(self.grid.weights())
            .zip(self.values.iter().zip(&other.values))
            .map(|((&t, &w), (a, b))| inner(a, b) * (w * t.powf(alpha.0)))
            .sum())
    }

    pub(crate) fn check_compatible(&self, other: &GridFunction) -> Result<()> {
        if self.len() != other.len() {
            return Err(Error::DimensionMismatch { expected: self.len(), got: other.len() });
        }
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: other.dim() });
        }
        Ok(())
    }

    pub fn sub(&self, other: &GridFunction) -> Result<GridFunction> {
        self.check_compatible(other)?;
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect();
        Ok(Self { grid: self.grid.clone(), values })
    }

    pub fn add(&self, other: &GridFunction) -> Result<GridFunction> {
        self.check_compatible(other)?;
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect();
        Ok(Self { grid: self.grid.clone(), values })
    }

    pub fn scale(&self, c: C64) -> GridFunction {
        let values = self.values.iter().map(|v| v * c).collect();
        Self { grid: self.grid.clone(), values }
    }

    /// Pointwise multiplication by the scalar function `m(t)`.
    pub fn scale_by<F: Fn(f64) -> f64>(&self, m: F) -> GridFunction {
        let values = self
            .grid
            .nodes()
            .iter()
            .zip(&self.values)
            .map(|(&t, v)| v * C64::new(m(t), 0.0))
            .collect();
        Self { grid: self.grid.clone(), values }
    }

    /// Same values attached to another grid with the same number of nodes.
    pub fn regrid(&self, grid: Arc<TimeGrid>) -> Result<GridFunction> {
        Self::new(grid, self.values.clone())
    }

    /// Average `(1/tau) int_tau^{2 tau}` of the piecewise-linear interpolant.
    pub fn dyadic_average(&self, tau: f64) -> Result<HVector> {
        self.interval_mean(tau, 2.0 * tau)
    }

    /// Mean over `[a, b]` of the piecewise-linear interpolant in `t`.
    pub fn interval_mean(&self, a: f64, b: f64) -> Result<HVector> {
        let nodes = self.grid.nodes();
        if !(a >= self.grid.t_min() && b <= self.grid.t_max() && a < b) {
            return Err(Error::InvalidParameter(format!(
                "interval [{a}, {b}] outside grid [{}, {}]",
                self.grid.t_min(),
                self.grid.t_max()
            )));
        }
        let at = |t: f64| -> HVector {
            let k = nodes.partition_point(|&x| x <= t).clamp(1, nodes.len() - 1);
            let (t0, t1) = (nodes[k - 1], nodes[k]);
            let s = (t - t0) / (t1 - t0);
            &self.values[k - 1] * C64::new(1.0 - s, 0.0) + &self.values[k] * C64::new(s, 0.0)
        };
        let mut knots = vec![a];
        knots.extend(nodes.iter().copied().filter(|&t| t > a && t < b));
        knots.push(b);
        let mut acc = CVector::zeros(self.dim());
        let mut prev = at(knots[0]);
        for win in knots.windows(2) {
            let next = at(win[1]);
            acc += (&prev + &next) * C64::new(0.5 * (win[1] - win[0]), 0.0);
            prev = next;
        }
        Ok(acc / C64::new(b - a, 0.0))
    }

    /// CSV: node, then re/im of each component.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let d = self.dim();
        let mut header = vec!["t".to_string()];
        for i in 0..d {
            header.push(format!("re{i}"));
            header.push(format!("im{i}"));
        }
        w.write_record(&header).map_err(csv_err)?;
        for (t, v) in self.grid.nodes().iter().zip(&self.values) {
            let mut row = Vec::with_capacity(2 * d + 1);
            row.push(format!("{t:e}"));
            for z in v.iter() {
                row.push(format!("{:e}", z.re));
                row.push(format!("{:e}", z.im));
            }
            w.write_record(&row).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads the [`GridFunction::write_csv`] format; the node column must be a
    /// geometric progression.
    pub fn read_csv<R: Read>(reader: R) -> Result<GridFunction> {
        let mut r = csv::Reader::from_reader(reader);
        let mut nodes = Vec::new();
        let mut values = Vec::new();
        for record in r.records() {
            let record = record.map_err(csv_err)?;
            let nums: Vec<f64> = record
                .iter()
                .map(|s| s.trim().parse::<f64>().map_err(|e| Error::Parse(format!("{s:?}: {e}"))))
                .collect::<Result<_>>()?;
            if nums.len() % 2 != 1 {
                return Err(Error::Parse("expected t followed by re/im pairs".into()));
            }
            nodes.push(nums[0]);
            values.push(CVector::from_iterator(
                nums.len() / 2,
                nums[1..].chunks(2).map(|p| C64::new(p[0], p[1])),
            ));
        }
        if nodes.len() < 2 {
            return Err(Error::Parse("need at least two rows".into()));
        }
        let grid = TimeGrid::new(nodes[0], nodes[nodes.len() - 1], nodes.len())?;
        for (a, b) in grid.nodes().iter().zip(&nodes) {
            if (a - b).abs() > 1e-12 * a.abs() {
                return Err(Error::Parse(format!("node {b} is off the log-uniform grid (expected {a})")));
            }
        }
        GridFunction::new(Arc::new(grid), values)
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Parse(e.to_string())
}
