//! Subcommands of the `divhjb` binary.
//!
//! Each command reads a [`RunConfig`], writes its artifacts into the output
//! directory and reports whether a bubble was detected. Exit codes: 0 success,
//! 1 usage or configuration error, 2 bubble.
//!
//! | command       | artifacts                                                     |
//! |---------------|---------------------------------------------------------------|
//! | `solve`       | `solution.csv`, `solve.json`                                  |
//! | `search`      | `search.csv`, `search.json`                                   |
//! | `asymptotics` | `asymptotics.csv`, `asymptotics.json`                         |
//! | `simulate`    | `simulate.json`                                               |
//! | `tables`      | `table1.csv`, `table2.csv`, `table3.csv`, `tables.json`       |

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::asymptotics::{convergence_diagnostic, ratios_at};
use crate::config::{RunConfig, StrategyConfig};
use crate::error::{Error, Result};
use crate::hjb::{solve_value_function, Classification, HjbSolution};
use crate::io::{write_diagnostic_csv, write_search_csv, write_solution_csv};
use crate::shooting::{default_initial_slope, search_initial_slope};
use crate::simulator::{estimate_value_with, GridPolicy, StrategySpec, DEFAULT_DT, DEFAULT_HORIZON};

/// Initial slope behind the decaying table.
pub const TABLE1_SLOPE: f64 = 1.9;
/// Initial slope behind the bubble table.
pub const TABLE2_SLOPE: f64 = 2.0;

pub const EXIT_OK: u8 = 0;
pub const EXIT_CONFIG: u8 = 1;
pub const EXIT_BUBBLE: u8 = 2;

/// What a command produced.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub bubble: bool,
    pub files: Vec<PathBuf>,
    /// One-line human summary for stdout.
    pub summary: String,
}

impl Outcome {
    pub fn exit_code(&self) -> u8 {
        if self.bubble {
            EXIT_BUBBLE
        } else {
            EXIT_OK
        }
    }
}

#[derive(Debug, Serialize)]
struct SolveSummary<'a> {
    b: f64,
    v0: f64,
    x_end: f64,
    classification: &'a str,
}

#[derive(Debug, Serialize)]
struct SearchSummary<'a> {
    b_final: f64,
    a_final: f64,
    gap: f64,
    converged: bool,
    b_too_small: Option<f64>,
    b_too_big: Option<f64>,
    evaluations: usize,
    warnings: &'a [String],
    mc_check: Option<McCheck>,
}

#[derive(Debug, Serialize)]
struct McCheck {
    mean: f64,
    std_error: f64,
}

#[derive(Debug, Serialize)]
struct AsymptoticsSummary {
    b: f64,
    x_end: f64,
    monotone_v: bool,
    monotone_vx: bool,
    monotone_c: bool,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

/// Slope from the `solve` block, or from the search when none is given.
pub fn resolve_slope(cfg: &RunConfig) -> Result<f64> {
    match cfg.solve_b() {
        Some(b) => Ok(b),
        None => default_initial_slope(&cfg.params()?, &cfg.utility_spec()?, &cfg.shooting()?),
    }
}

fn solve_at(cfg: &RunConfig, b: f64, x_max: f64) -> Result<HjbSolution<f64>> {
    solve_value_function(&cfg.params()?, &cfg.utility_spec()?, b, x_max, &cfg.solve_ivp())
}

pub fn cmd_solve(cfg: &RunConfig, out: &Path) -> Result<Outcome> {
    fs::create_dir_all(out)?;
    let b = resolve_slope(cfg)?;
    let sol = solve_at(cfg, b, cfg.solve_x_max())?;
    let csv_path = out.join("solution.csv");
    write_solution_csv(&sol, create(&csv_path)?)?;
    let json_path = out.join("solve.json");
    write_json(
        &json_path,
        &SolveSummary {
            b,
            v0: sol.vs[0],
            x_end: sol.x_end(),
            classification: sol.classification.name(),
        },
    )?;
    Ok(Outcome {
        bubble: sol.classification == Classification::Bubble,
        files: vec![csv_path, json_path],
        summary: format!("classification: {} (b = {b}, x_end = {})", sol.classification.name(), sol.x_end()),
    })
}

pub fn cmd_search(cfg: &RunConfig, out: &Path) -> Result<Outcome> {
    fs::create_dir_all(out)?;
    let report = search_initial_slope(&cfg.params()?, &cfg.utility_spec()?, &cfg.shooting()?)?;
    let csv_path = out.join("search.csv");
    write_search_csv(&report.log, create(&csv_path)?)?;
    let json_path = out.join("search.json");
    write_json(
        &json_path,
        &SearchSummary {
            b_final: report.b_final,
            a_final: report.a_final,
            gap: report.gap_final,
            converged: report.converged,
            b_too_small: report.b_too_small,
            b_too_big: report.b_too_big,
            evaluations: report.log.len(),
            warnings: &report.warnings,
            mc_check: report.mc_check.map(|(mean, std_error)| McCheck { mean, std_error }),
        },
    )?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    Ok(Outcome {
        bubble: false,
        files: vec![csv_path, json_path],
        summary: format!(
            "b_final = {:.10}, a = {:.6}, gap = {:.6}",
            report.b_final, report.a_final, report.gap_final
        ),
    })
}

pub fn cmd_asymptotics(cfg: &RunConfig, out: &Path) -> Result<Outcome> {
    fs::create_dir_all(out)?;
    let b = resolve_slope(cfg)?;
    let block = cfg.asymptotics.clone().unwrap_or_default();
    let x_max = block.x_max.unwrap_or_else(|| cfg.solve_x_max());
    let sol = solve_at(cfg, b, x_max)?;
    if sol.classification == Classification::Bubble {
        return Ok(Outcome {
            bubble: true,
            files: vec![],
            summary: format!("classification: Bubble (b = {b}); no asymptotic comparison"),
        });
    }
    let diag = convergence_diagnostic(&sol)?;
    let samples = match &block.x_points {
        Some(xs) => xs.iter().map(|&x| ratios_at(&sol, x)).collect::<Result<Vec<_>>>()?,
        None => diag.samples.clone(),
    };
    let csv_path = out.join("asymptotics.csv");
    write_diagnostic_csv(&samples, create(&csv_path)?)?;
    let json_path = out.join("asymptotics.json");
    write_json(
        &json_path,
        &AsymptoticsSummary {
            b,
            x_end: sol.x_end(),
            monotone_v: diag.monotone_v,
            monotone_vx: diag.monotone_vx,
            monotone_c: diag.monotone_c,
        },
    )?;
    Ok(Outcome {
        bubble: false,
        files: vec![csv_path, json_path],
        summary: format!(
            "ratios toward 1 on the tail: v {}, vx {}, c {}",
            diag.monotone_v, diag.monotone_vx, diag.monotone_c
        ),
    })
}

/// `seed` overrides the config's `simulate.seed`; without either the seed is 0.
pub fn cmd_simulate(cfg: &RunConfig, out: &Path, seed: Option<u64>) -> Result<Outcome> {
    let block = cfg.simulate.clone().ok_or(Error::InvalidParameter {
        field: "simulate",
        reason: "the simulate command needs a `simulate` block".into(),
    })?;
    fs::create_dir_all(out)?;
    let strategy = match block.strategy {
        StrategyConfig::Grid => {
            let b = resolve_slope(cfg)?;
            let sol = solve_at(cfg, b, cfg.solve_x_max())?;
            if sol.classification != Classification::Decaying {
                return Err(Error::Precondition(format!(
                    "grid strategy needs a decaying solution, b = {b} gives {}",
                    sol.classification.name()
                )));
            }
            StrategySpec::Grid(GridPolicy::from_solution(&sol)?)
        }
        StrategyConfig::Linear { a1, b1 } => StrategySpec::Linear { a1, b1 },
        StrategyConfig::Constant { c0 } => StrategySpec::Constant(c0),
    };
    let estimate = estimate_value_with(
        &cfg.params()?,
        &cfg.utility_spec()?,
        &strategy,
        block.x0,
        block.n_paths,
        block.horizon.unwrap_or(DEFAULT_HORIZON),
        seed.or(block.seed).unwrap_or(0),
        block.dt.unwrap_or(DEFAULT_DT),
    )?;
    let json_path = out.join("simulate.json");
    write_json(&json_path, &estimate)?;
    Ok(Outcome {
        bubble: false,
        files: vec![json_path],
        summary: format!("mean = {:.6} ± {:.6} (1 SE)", estimate.mean, estimate.std_error),
    })
}

/// Integer-reserve rows of a solve, as in the printed tables.
fn integer_rows(sol: &HjbSolution<f64>) -> HjbSolution<f64> {
    let mut rows = sol.clone();
    let keep: Vec<usize> = (0..=sol.x_end().floor() as usize)
        .filter_map(|x| sol.node_index(x as f64))
        .collect();
    rows.xs = keep.iter().map(|&k| sol.xs[k]).collect();
    rows.vs = keep.iter().map(|&k| sol.vs[k]).collect();
    rows.vxs = keep.iter().map(|&k| sol.vxs[k]).collect();
    rows.cs = keep.iter().map(|&k| sol.cs[k]).collect();
    rows
}

pub fn cmd_tables(cfg: &RunConfig, out: &Path) -> Result<Outcome> {
    fs::create_dir_all(out)?;
    let x_max = cfg.solve_x_max();
    let mut files = Vec::new();
    let mut names = Vec::new();
    for (slope, name) in [(TABLE1_SLOPE, "table1.csv"), (TABLE2_SLOPE, "table2.csv")] {
        let sol = solve_at(cfg, slope, x_max)?;
        let path = out.join(name);
        write_solution_csv(&integer_rows(&sol), create(&path)?)?;
        names.push(sol.classification.name());
        files.push(path);
    }
    let report = search_initial_slope(&cfg.params()?, &cfg.utility_spec()?, &cfg.shooting()?)?;
    let path = out.join("table3.csv");
    write_search_csv(&report.log, create(&path)?)?;
    files.push(path);
    let json_path = out.join("tables.json");
    write_json(
        &json_path,
        &serde_json::json!({
            "table1": { "b": TABLE1_SLOPE, "classification": names[0] },
            "table2": { "b": TABLE2_SLOPE, "classification": names[1] },
            "table3": { "b_final": report.b_final, "a_final": report.a_final, "gap": report.gap_final },
        }),
    )?;
    files.push(json_path);
    Ok(Outcome {
        bubble: false,
        files,
        summary: format!(
            "table1: {}, table2: {}, table3: b_final = {:.10}",
            names[0], names[1], report.b_final
        ),
    })
}
