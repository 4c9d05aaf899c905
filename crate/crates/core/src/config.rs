//! Run configuration and the operator zoo.
//!
//! Configs are TOML with one level of tables:
//!
//! ```toml
//! seed = 20240601
//!
//! [grid]
//! t_min = 1e-4
//! t_max = 1e3
//! nodes = 2000
//!
//! [checks]
//! identities = ["evolution_forward", "trace"]
//! n_params = [1, 2, 3]
//!
//! [operators]
//! scalar = { kind = "scalar", eigenvalue = [1.0, 0.0] }
//! laplacian = { kind = "laplacian", dim = 8, h = 0.5 }
//! ```

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::linalg::{self, CMatrix, C64};
use crate::operator::SectorialOperator;
use crate::verify::{Identity, Tolerances};

/// Shipped default: every identity on the scalar operator and the Laplacian.
pub const DEFAULT_CONFIG: &str = include_str!("../../../configs/default.toml");

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub checks: ChecksConfig,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub constants: ConstantsConfig,
    #[serde(default)]
    pub convergence: ConvergenceConfig,
    #[serde(default)]
    pub bench: BenchConfig,
    #[serde(default)]
    pub operators: BTreeMap<String, OperatorSpec>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub t_min: f64,
    pub t_max: f64,
    pub nodes: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { t_min: 1e-4, t_max: 1e3, nodes: 2000 }
    }
}

impl GridConfig {
    pub fn build(&self) -> Result<TimeGrid> {
        TimeGrid::new(self.t_min, self.t_max, self.nodes)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChecksConfig {
    pub identities: Vec<Identity>,
    pub n_params: Vec<u32>,
    /// Power-iteration steps for norm estimates.
    pub norm_iterations: usize,
}

impl Default for ChecksConfig {
    fn default() -> Self {
        Self { identities: Identity::ALL.to_vec(), n_params: vec![1, 2, 3], norm_iterations: 100 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: String,
    /// Also write every zoo matrix as `<name>.csv`.
    pub export_matrices: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: "out".into(), export_matrices: false }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConstantsConfig {
    pub alphas: Vec<f64>,
}

impl Default for ConstantsConfig {
    fn default() -> Self {
        Self { alphas: vec![-0.5, 0.0, 0.5] }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConvergenceConfig {
    pub nodes: Vec<usize>,
    /// Time range of the study; `[grid]` when unset. The leading cell
    /// `(0, t_min]` contributes an error of order `t_min^2 |A|^2` that does
    /// not shrink under refinement, so orders are best measured with a
    /// smaller `t_min` than the identity runs use.
    pub t_min: Option<f64>,
    pub t_max: Option<f64>,
}

impl Default for ConvergenceConfig {
    fn default() -> Self {
        Self { nodes: vec![500, 1000, 2000, 4000], t_min: None, t_max: None }
    }
}

impl ConvergenceConfig {
    pub fn range(&self, grid: &GridConfig) -> (f64, f64) {
        (self.t_min.unwrap_or(grid.t_min), self.t_max.unwrap_or(grid.t_max))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub nodes: Vec<usize>,
    pub dims: Vec<usize>,
    /// Timed repetitions of the fast method; the best is kept.
    pub repeats: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self { nodes: vec![1000, 4000], dims: vec![4, 16], repeats: 3 }
    }
}

/// One zoo entry. Eigenvalues are written as `[re, im]` pairs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OperatorSpec {
    Scalar {
        eigenvalue: [f64; 2],
    },
    /// Dirichlet finite-difference Laplacian on `(0, 1)`.
    Laplacian {
        dim: usize,
        h: f64,
    },
    /// `V diag(eigenvalues) V^-1` with an explicit row-major basis.
    Diagonalizable {
        basis: Vec<Vec<[f64; 2]>>,
        eigenvalues: Vec<[f64; 2]>,
    },
    /// Normal operator `U diag(lambda) U*` with a seeded random unitary `U`
    /// and eigenvalues `k e^{+-i angle}`, `k = 1, 2, ...`.
    Rotated {
        dim: usize,
        angle: f64,
        #[serde(default)]
        seed: u64,
    },
    /// `V diag(1, 2, ..., dim) V^-1` with `V = I + coupling * (strict upper ones)`.
    NonNormal {
        dim: usize,
        coupling: f64,
    },
}

fn c(p: [f64; 2]) -> C64 {
    C64::new(p[0], p[1])
}

impl OperatorSpec {
    pub fn build(&self) -> Result<SectorialOperator> {
        match self {
            OperatorSpec::Scalar { eigenvalue } => SectorialOperator::scalar(c(*eigenvalue)),
            OperatorSpec::Laplacian { dim, h } => SectorialOperator::make_discrete_laplacian(*dim, *h),
            OperatorSpec::Diagonalizable { basis, eigenvalues } => {
                let n = eigenvalues.len();
                if basis.len() != n || basis.iter().any(|row| row.len() != n) {
                    return Err(Error::Config(format!("basis must be {n}x{n}")));
                }
                let v = CMatrix::from_fn(n, n, |i, j| c(basis[i][j]));
                let values: Vec<C64> = eigenvalues.iter().copied().map(c).collect();
                SectorialOperator::make_diagonalizable(v, &values)
            }
            OperatorSpec::Rotated { dim, angle, seed } => {
                if *dim == 0 {
                    return Err(Error::Config("dim must be positive".into()));
                }
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                let u = linalg::random_unitary(&mut rng, *dim);
                let values: Vec<C64> = (0..*dim)
                    .map(|k| {
                        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                        C64::from_polar((k / 2 + 1) as f64, sign * angle)
                    })
                    .collect();
                SectorialOperator::make_diagonalizable(u, &values)
            }
            OperatorSpec::NonNormal { dim, coupling } => {
                if *dim == 0 {
                    return Err(Error::Config("dim must be positive".into()));
                }
                let v = CMatrix::from_fn(*dim, *dim, |i, j| match i.cmp(&j) {
                    std::cmp::Ordering::Equal => C64::new(1.0, 0.0),
                    std::cmp::Ordering::Less => C64::new(*coupling, 0.0),
                    std::cmp::Ordering::Greater => C64::new(0.0, 0.0),
                });
                let values: Vec<C64> = (1..=*dim).map(|k| C64::new(k as f64, 0.0)).collect();
                SectorialOperator::make_diagonalizable(v, &values)
            }
        }
    }
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Config = toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn default_config() -> Self {
        Self::from_toml(DEFAULT_CONFIG).expect("shipped default config is valid")
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.build().map_err(|e| Error::Config(format!("grid: {e}")))?;
        let (t_min, t_max) = self.convergence.range(&self.grid);
        TimeGrid::new(t_min, t_max, 2).map_err(|e| Error::Config(format!("convergence: {e}")))?;
        if self.checks.n_params.contains(&0) {
            return Err(Error::Config("n_params must be >= 1".into()));
        }
        if self.checks.norm_iterations < 10 {
            return Err(Error::Config("norm_iterations must be >= 10".into()));
        }
        for (name, spec) in &self.operators {
            spec.build().map_err(|e| Error::Config(format!("operator {name}: {e}")))?;
        }
        Ok(())
    }

    /// Zoo operators in key order.
    pub fn build_operators(&self) -> Result<Vec<(String, SectorialOperator)>> {
        self.operators.iter().map(|(k, s)| Ok((k.clone(), s.build()?))).collect()
    }
}

/// The catalogued test operators: scalar, Laplacian, rotated-spectrum normal
/// and non-normal.
pub fn standard_zoo() -> BTreeMap<String, OperatorSpec> {
    BTreeMap::from([
        ("scalar".to_string(), OperatorSpec::Scalar { eigenvalue: [1.0, 0.0] }),
        ("laplacian".to_string(), OperatorSpec::Laplacian { dim: 8, h: 0.5 }),
        ("rotated".to_string(), OperatorSpec::Rotated { dim: 4, angle: PI / 3.0, seed: 7 }),
        ("non_normal".to_string(), OperatorSpec::NonNormal { dim: 4, coupling: 0.5 }),
    ])
}

/// Row-major CSV of `re,im` pairs, one matrix row per line.
pub fn write_matrix_csv<W: Write>(m: &CMatrix, writer: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols())
            .flat_map(|j| [m[(i, j)].re.to_string(), m[(i, j)].im.to_string()])
            .collect();
        w.write_record(&row).map_err(|e| Error::Parse(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}
