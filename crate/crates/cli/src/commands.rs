use std::sync::Arc;
use std::time::Instant;

use maxreg_core::config::write_matrix_csv;
use maxreg_core::grid::{GridFunction, TimeGrid, WeightExponent};
use maxreg_core::linalg;
use maxreg_core::maxreg::{self, Direction, Method};
use maxreg_core::squarefn;
use maxreg_core::verify::{self, CheckContext, ConvergenceSeries};
use maxreg_core::{Error, Result, SectorialOperator, Symbol};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::output;
use crate::Settings;

#[derive(Serialize)]
struct Timings {
    command: &'static str,
    threads: usize,
    seconds: f64,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    records: Vec<BenchRecord>,
}

fn write_timings(s: &Settings, command: &'static str, start: Instant, records: Vec<BenchRecord>) -> Result<()> {
    let t = Timings {
        command,
        threads: rayon::current_num_threads(),
        seconds: start.elapsed().as_secs_f64(),
        records,
    };
    output::write_json(&s.out.join("timings.json"), &t)
}

fn context(s: &Settings, operator: &str) -> CheckContext {
    CheckContext {
        operator: operator.to_string(),
        seed: s.config.seed,
        tolerances: s.config.tolerances,
        norm_iterations: s.config.checks.norm_iterations,
    }
}

pub fn verify(s: &Settings) -> Result<bool> {
    let start = Instant::now();
    let cfg = &s.config;
    let operators = cfg.build_operators()?;
    let grid = Arc::new(cfg.grid.build()?);
    output::prepare_dir(&s.out)?;
    if cfg.output.export_matrices {
        for (name, op) in &operators {
            let file = std::fs::File::create(s.out.join(format!("{name}.csv")))?;
            write_matrix_csv(op.matrix(), file)?;
        }
    }
    let reports = verify::run_suite(
        &operators,
        &cfg.checks.identities,
        &cfg.checks.n_params,
        &grid,
        cfg.seed,
        cfg.tolerances,
        cfg.checks.norm_iterations,
    )?;
    output::write_jsonl(&s.out.join("reports.jsonl"), &reports)?;
    output::write_summary(&s.out.join("summary.csv"), &reports)?;
    write_timings(s, "verify", start, Vec::new())?;
    let failed: Vec<_> = reports.iter().filter(|r| !r.skipped && !r.pass).collect();
    for r in &failed {
        eprintln!("FAIL {} {} n={} rel_error={:.3e}", r.identity, r.operator, r.n_param, r.rel_error);
    }
    println!("{} reports, {} failed", reports.len(), failed.len());
    Ok(failed.is_empty())
}

#[derive(Serialize)]
struct ConstantRecord {
    operator: String,
    quantity: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    symbol: Option<Symbol>,
    #[serde(skip_serializing_if = "Option::is_none")]
    n_param: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    alpha: Option<f64>,
    value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    converged: Option<bool>,
}

pub fn constants(s: &Settings) -> Result<bool> {
    let start = Instant::now();
    let cfg = &s.config;
    let operators = cfg.build_operators()?;
    if operators.is_empty() {
        return Err(Error::Config("no operators configured".into()));
    }
    let grid = Arc::new(cfg.grid.build()?);
    output::prepare_dir(&s.out)?;
    let mut records = Vec::new();
    for (name, op) in &operators {
        for (quantity, target) in [("quadratic", op.clone()), ("quadratic_adjoint", op.adjoint())] {
            for symbol in [Symbol::PowerExp, Symbol::ExpDifference] {
                for &n in &cfg.checks.n_params {
                    records.push(ConstantRecord {
                        operator: name.clone(),
                        quantity,
                        symbol: Some(symbol),
                        n_param: Some(n),
                        alpha: None,
                        value: squarefn::quadratic_constant(&target, symbol, n, &grid)?,
                        converged: None,
                    });
                }
            }
        }
        for &alpha in &cfg.constants.alphas {
            for (quantity, direction, weight) in [
                ("norm_forward", Direction::Forward, alpha),
                ("norm_backward", Direction::Backward, -alpha),
            ] {
                let est = maxreg::operator_norm_estimate(
                    direction,
                    op,
                    WeightExponent(weight),
                    &grid,
                    cfg.checks.norm_iterations,
                    cfg.seed,
                )?;
                records.push(ConstantRecord {
                    operator: name.clone(),
                    quantity,
                    symbol: None,
                    n_param: None,
                    alpha: Some(alpha),
                    value: est.value,
                    converged: Some(est.converged),
                });
            }
        }
    }
    output::write_jsonl(&s.out.join("constants.jsonl"), &records)?;
    write_timings(s, "constants", start, Vec::new())?;
    for r in &records {
        println!(
            "{} {} {} n={} alpha={} {:.6}",
            r.operator,
            r.quantity,
            r.symbol.map(|x| x.tag()).unwrap_or("-"),
            r.n_param.map(|n| n.to_string()).unwrap_or_else(|| "-".into()),
            r.alpha.map(|a| a.to_string()).unwrap_or_else(|| "-".into()),
            r.value
        );
    }
    Ok(records.iter().all(|r| r.value.is_finite()))
}

#[derive(Serialize)]
struct ConvergenceRow<'a> {
    identity: &'a str,
    operator: &'a str,
    n_param: u32,
    nodes: usize,
    rel_error: f64,
    order: String,
}

const CONSTANT_DATA_TOL: f64 = 1e-10;

pub fn convergence(s: &Settings) -> Result<bool> {
    let start = Instant::now();
    let cfg = &s.config;
    let operators = cfg.build_operators()?;
    let nodes = &cfg.convergence.nodes;
    if nodes.is_empty() {
        return Err(Error::Config("convergence.nodes is empty".into()));
    }
    let (t_min, t_max) = cfg.convergence.range(&cfg.grid);
    output::prepare_dir(&s.out)?;
    let identities: Vec<_> = cfg.checks.identities.iter().copied().filter(|i| i.uses_parameter()).collect();
    let mut series: Vec<ConvergenceSeries> = Vec::new();
    let mut constant_rows = Vec::new();
    let mut exact = true;
    for (name, op) in &operators {
        let h = verify::probe_vector(op.dim(), cfg.seed);
        let ctx = context(s, name);
        for &identity in &identities {
            for &n in &cfg.checks.n_params {
                series.push(verify::convergence_series(identity, op, &h, n, t_min, t_max, nodes, &ctx)?);
            }
        }
        for &count in nodes {
            let grid = Arc::new(TimeGrid::new(t_min, t_max, count)?);
            let err = verify::constant_data_error(op, &h, &grid)?;
            exact &= err <= CONSTANT_DATA_TOL;
            constant_rows.push((name.clone(), count, err));
        }
    }
    let mut rows = Vec::new();
    for sr in &series {
        let order = sr.order.map(|o| format!("{o:.4}")).unwrap_or_default();
        for (&count, &e) in sr.nodes.iter().zip(&sr.rel_errors) {
            rows.push(ConvergenceRow {
                identity: sr.identity.tag(),
                operator: &sr.operator,
                n_param: sr.n_param,
                nodes: count,
                rel_error: e,
                order: order.clone(),
            });
        }
    }
    for (name, count, err) in &constant_rows {
        rows.push(ConvergenceRow {
            identity: "constant_data",
            operator: name,
            n_param: 0,
            nodes: *count,
            rel_error: *err,
            order: String::new(),
        });
    }
    output::write_csv(&s.out.join("convergence.csv"), &rows)?;
    write_timings(s, "convergence", start, Vec::new())?;
    for sr in &series {
        let order = sr.order.map(|o| format!("{o:.3}")).unwrap_or_else(|| "-".into());
        println!("{} {} n={} order {}", sr.identity, sr.operator, sr.n_param, order);
    }
    Ok(exact)
}

#[derive(Serialize)]
pub struct BenchRecord {
    direction: Direction,
    nodes: usize,
    dim: usize,
    direct_seconds: f64,
    fast_seconds: f64,
    speedup: f64,
    rel_difference: f64,
}

const BENCH_AGREEMENT: f64 = 1e-10;

fn random_input(grid: &Arc<TimeGrid>, dim: usize, seed: u64) -> Result<GridFunction> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    GridFunction::from_fn(grid.clone(), |_| linalg::random_vector(&mut rng, dim))
}

fn time<T>(f: impl FnOnce() -> Result<T>) -> Result<(T, f64)> {
    let start = Instant::now();
    let v = f()?;
    Ok((v, start.elapsed().as_secs_f64()))
}

pub fn bench(s: &Settings) -> Result<bool> {
    let start = Instant::now();
    let cfg = &s.config;
    output::prepare_dir(&s.out)?;
    let repeats = cfg.bench.repeats.max(1);
    let mut records = Vec::new();
    let mut agree = true;
    for &dim in &cfg.bench.dims {
        let op = SectorialOperator::make_discrete_laplacian(dim, 1.0 / (dim as f64 + 1.0))?;
        for &count in &cfg.bench.nodes {
            let grid = Arc::new(TimeGrid::new(cfg.grid.t_min, cfg.grid.t_max, count)?);
            let f = random_input(&grid, dim, cfg.seed)?;
            for direction in [Direction::Forward, Direction::Backward] {
                let (direct, direct_seconds) = time(|| maxreg::apply(direction, Method::Direct, &op, &f))?;
                let mut fast_seconds = f64::INFINITY;
                let mut fast = None;
                for _ in 0..repeats {
                    let (r, secs) = time(|| maxreg::apply(direction, Method::Fast, &op, &f))?;
                    fast_seconds = fast_seconds.min(secs);
                    fast = Some(r);
                }
                let fast = fast.expect("at least one repeat");
                let diff = fast.values.sub(&direct.values)?.weighted_norm(WeightExponent::UNWEIGHTED);
                let scale = direct.values.weighted_norm(WeightExponent::UNWEIGHTED).max(1e-300);
                let rel_difference = diff / scale;
                agree &= rel_difference <= BENCH_AGREEMENT;
                println!(
                    "{direction:?} N={count} d={dim}: direct {direct_seconds:.4}s fast {fast_seconds:.6}s speedup {:.1} diff {rel_difference:.2e}",
                    direct_seconds / fast_seconds
                );
                records.push(BenchRecord {
                    direction,
                    nodes: count,
                    dim,
                    direct_seconds,
                    fast_seconds,
                    speedup: direct_seconds / fast_seconds,
                    rel_difference,
                });
            }
        }
    }
    write_timings(s, "bench", start, records)?;
    if !agree {
        eprintln!("fast and direct evaluations disagree beyond {BENCH_AGREEMENT:e}");
    }
    Ok(agree)
}
