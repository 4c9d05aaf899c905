//! Functions of `tA` sampled on a time grid.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridFunction, TimeGrid};
use crate::linalg::C64;
use crate::operator::{HVector, SectorialOperator};

/// Families `t -> phi(t, A) h` indexed by a positive integer `n`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Symbol {
    /// `(tA)^n e^{-tA}`
    PowerExp,
    /// `e^{-tA} (I - e^{-n tA})`
    ExpDifference,
    /// `A e^{-n tA}`
    GeneratorExp,
    /// `e^{-n tA}`
    Exp,
    /// `t^{n-1} A^n e^{-tA}`
    MonomialPowerExp,
}

impl Symbol {
    pub const ALL: [Symbol; 5] = [
        Symbol::PowerExp,
        Symbol::ExpDifference,
        Symbol::GeneratorExp,
        Symbol::Exp,
        Symbol::MonomialPowerExp,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Symbol::PowerExp => "power_exp",
            Symbol::ExpDifference => "exp_difference",
            Symbol::GeneratorExp => "generator_exp",
            Symbol::Exp => "exp",
            Symbol::MonomialPowerExp => "monomial_power_exp",
        }
    }

    /// Value at a single time.
    pub fn evaluate(self, op: &SectorialOperator, n: u32, t: f64, h: &HVector) -> HVector {
        let nf = n as f64;
        match self {
            Symbol::PowerExp => op.apply_power_exp(n, t, h) * C64::new(t.powi(n as i32), 0.0),
            Symbol::ExpDifference => {
                op.apply_power_exp(0, t, h) - op.apply_power_exp(0, (nf + 1.0) * t, h)
            }
            Symbol::GeneratorExp => op.apply_power_exp(1, nf * t, h),
            Symbol::Exp => op.apply_power_exp(0, nf * t, h),
            Symbol::MonomialPowerExp => {
                op.apply_power_exp(n, t, h) * C64::new(t.powi(n as i32 - 1), 0.0)
            }
        }
    }
}

impl fmt::Display for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Symbol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Symbol::ALL
            .into_iter()
            .find(|sym| sym.tag() == s)
            .ok_or_else(|| Error::UnknownTag(s.to_string()))
    }
}

/// Samples `t_k -> symbol(t_k, A) h` on every node of `grid`.
pub fn sample_symbol(
    symbol: Symbol,
    op: &SectorialOperator,
    n: u32,
    h: &HVector,
    grid: &Arc<TimeGrid>,
) -> Result<GridFunction> {
    if n == 0 {
        return Err(Error::InvalidParameter("symbol parameter must be >= 1".into()));
    }
    op.check_dim(h)?;
    GridFunction::from_fn(grid.clone(), |t| symbol.evaluate(op, n, t, h))
}
