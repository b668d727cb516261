//! The subcommands. Each writes its files under `output_dir` and returns
//! what it wrote.

use std::path::Path;

use ou_timing_core::double_stopping::ThresholdSolution;
use ou_timing_core::mc_oracle::{estimate_policy_value_with, trace_policy_path, McEstimate, PolicySpec, TraceEvent};
use ou_timing_core::ou_process::{beta_curve, fit_mle, select_beta_star, PairSpec, PriceSeries};
use ou_timing_core::stoploss::RelativeStopLossResult;
use ou_timing_core::{RelativeStopLossSpec, StopLossSolution, TradingProblem};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::csv_io::{output_path, read_prices, write_json, write_table, Cell};
use crate::error::{CliError, CliResult};
use crate::executor::Parallel;

/// Flat calibration summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub theta: f64,
    pub mu: f64,
    pub sigma: f64,
    pub avg_loglik: f64,
    pub beta_star: Option<f64>,
    pub n: usize,
    pub dt: f64,
    pub converged: bool,
}

/// Fits the OU model to a spread file, or searches the hedge ratio for a
/// pair file. Writes `calibration.json`, plus `beta_curve.csv` for pairs.
pub fn calibrate(cfg: &RunConfig, input: &Path) -> CliResult<CalibrationReport> {
    let table = read_prices(input)?;
    let dt = cfg.calibration.dt;
    let result = if table.is_pair() {
        let pair = PairSpec {
            series_1: PriceSeries::from_values(table.columns[0].clone(), dt)?,
            series_2: PriceSeries::from_values(table.columns[1].clone(), dt)?,
            a_cash: cfg.calibration.a_cash,
            b_grid: PairSpec::default_grid(cfg.calibration.a_cash),
        };
        let curve = beta_curve(&pair)?;
        let mut rows = Vec::with_capacity(curve.len());
        for (b, fit) in &curve {
            let ll = match fit {
                Ok(f) => f.avg_loglik,
                Err(e) => {
                    eprintln!("warning: B = {b}: {e}");
                    f64::NAN
                }
            };
            rows.push(vec![Cell::Num(*b), Cell::Num(ll)]);
        }
        write_table(&output_path(&cfg.output_dir, "beta_curve.csv")?, &["B", "avg_loglik"], &rows)?;
        select_beta_star(&pair)?
    } else {
        fit_mle(&PriceSeries::from_values(table.columns[0].clone(), dt)?, None)?
    };
    let report = CalibrationReport {
        theta: result.params.theta,
        mu: result.params.mu,
        sigma: result.params.sigma,
        avg_loglik: result.avg_loglik,
        beta_star: result.beta_star,
        n: result.n,
        dt: result.dt,
        converged: result.converged,
    };
    write_json(&output_path(&cfg.output_dir, "calibration.json")?, &report)?;
    Ok(report)
}

/// Relative stop-loss thresholds without the sampled curves.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelativeSummary {
    pub ell: f64,
    pub d_star: Option<f64>,
    pub b_star: Option<f64>,
    pub effective_stop: Option<f64>,
}

impl From<&RelativeStopLossResult> for RelativeSummary {
    fn from(r: &RelativeStopLossResult) -> Self {
        Self {
            ell: r.ell,
            d_star: r.d_star,
            b_star: r.b_star,
            effective_stop: r.effective_stop,
        }
    }
}

/// Contents of `thresholds.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub config: RunConfig,
    pub thresholds: ThresholdSolution,
    pub stop_loss: Option<StopLossSolution>,
    pub relative_stop_loss: Option<RelativeSummary>,
}

pub fn problem(cfg: &RunConfig) -> CliResult<TradingProblem> {
    cfg.validate()?;
    Ok(TradingProblem::new(cfg.model, cfg.discount, cfg.quadrature)?)
}

/// Solves for the thresholds and writes `thresholds.json` and
/// `values.csv` (`x,V,J`, or `x,V_L,J_L` with a stop-loss). A relative
/// stop-loss adds `relative_stoploss.csv`.
pub fn solve(cfg: &RunConfig) -> CliResult<SolveReport> {
    let prob = problem(cfg)?;
    let timing = prob.solve()?;
    let xs = cfg.grid.values(&cfg.model);
    let mut stop_loss = None;
    let mut rows = Vec::with_capacity(xs.len());
    let header: [&str; 3];
    if let Some(l) = cfg.stop_loss {
        let sl = prob.solve_stoploss(l)?;
        header = ["x", "V_L", "J_L"];
        for &x in &xs {
            rows.push(vec![Cell::Num(x), Cell::Num(sl.v(x)?), Cell::Num(sl.j(x)?)]);
        }
        stop_loss = Some(sl.solution);
    } else {
        header = ["x", "V", "J"];
        for &x in &xs {
            rows.push(vec![Cell::Num(x), Cell::Num(timing.v(x)?), Cell::Num(timing.j(x)?)]);
        }
    }
    write_table(&output_path(&cfg.output_dir, "values.csv")?, &header, &rows)?;
    let mut relative = None;
    if let Some(ell) = cfg.relative_ell {
        let res = prob.solve_relative_stoploss(&RelativeStopLossSpec::with_default_grid(ell, &cfg.model))?;
        let rows: Vec<Vec<Cell>> = (0..res.x.len())
            .map(|i| {
                vec![
                    Cell::Num(res.x[i]),
                    Cell::Num(res.exit_value[i]),
                    Cell::Num(res.entry_reward[i]),
                    Cell::Num(res.entry_value[i]),
                ]
            })
            .collect();
        write_table(
            &output_path(&cfg.output_dir, "relative_stoploss.csv")?,
            &["x", "exit_value", "entry_reward", "J_ell"],
            &rows,
        )?;
        relative = Some(RelativeSummary::from(&res));
    }
    let report = SolveReport {
        config: cfg.clone(),
        thresholds: timing.solution,
        stop_loss,
        relative_stop_loss: relative,
    };
    write_json(&output_path(&cfg.output_dir, "thresholds.json")?, &report)?;
    Ok(report)
}

/// Default stop-loss grid: 20 levels from `theta - 3 std` up to `L*`.
pub fn default_l_grid(prob: &TradingProblem) -> Vec<f64> {
    let lo = prob.params.theta - 3.0 * prob.params.stationary_std();
    let hi = prob.l_star();
    (0..20).map(|i| lo + (hi - lo) * i as f64 / 19.0).collect()
}

/// `b_L` across stop-loss levels, written to `sweep_l.csv`. Failed points
/// are NaN rows with a warning on stderr.
pub fn sweep_l(cfg: &RunConfig, grid: Option<&[f64]>) -> CliResult<Vec<(f64, f64)>> {
    let prob = problem(cfg)?;
    let default;
    let grid = match grid {
        Some(g) => g,
        None => {
            default = default_l_grid(&prob);
            &default
        }
    };
    if let Some(bad) = grid.iter().find(|l| !l.is_finite()) {
        return Err(CliError::Config(format!("stop-loss level must be finite, got {bad}")));
    }
    let mut out = Vec::with_capacity(grid.len());
    for (l, res) in prob.sweep_l(grid) {
        let b = match res {
            Ok(b) => b,
            Err(e) => {
                eprintln!("warning: L = {l}: {e}");
                f64::NAN
            }
        };
        out.push((l, b));
    }
    let rows: Vec<Vec<Cell>> = out.iter().map(|&(l, b)| vec![Cell::Num(l), Cell::Num(b)]).collect();
    write_table(&output_path(&cfg.output_dir, "sweep_l.csv")?, &["L", "b_L"], &rows)?;
    Ok(out)
}

/// Contents of `mc_report.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateReport {
    pub x0: f64,
    pub policy: PolicySpec,
    /// Solved value function at `x0` when the policy is the solved one.
    pub analytic_value: Option<f64>,
    /// The solved entry problem says never enter; the policy is exit-only.
    pub entry_trivial: bool,
    /// Absent when no paths were requested.
    pub estimate: Option<McEstimate>,
}

/// Policy from the config, or from the solved thresholds, with the
/// matching value function at `x0`.
pub fn resolve_policy(cfg: &RunConfig, x0: f64) -> CliResult<(PolicySpec, Option<f64>, bool)> {
    if let Some(p) = cfg.simulate.policy {
        return Ok((p, None, false));
    }
    let prob = problem(cfg)?;
    if let Some(l) = cfg.stop_loss {
        let sl = prob.solve_stoploss(l)?;
        let s = sl.solution;
        // degenerate: take-profit at L itself, so every price exits at once
        let exit_upper = s.b_l.unwrap_or(l);
        let exit = PolicySpec {
            stop_loss: Some(l),
            ..PolicySpec::exit_at(exit_upper)
        };
        return Ok(match (s.a_l, s.d_l) {
            (Some(a), Some(d)) => (
                PolicySpec {
                    entry_lower: Some(a),
                    entry_upper: Some(d),
                    ..exit
                },
                Some(sl.j(x0)?),
                false,
            ),
            _ => (exit, Some(sl.v(x0)?), true),
        });
    }
    if let Some(ell) = cfg.relative_ell {
        let res = prob.solve_relative_stoploss(&RelativeStopLossSpec::with_default_grid(ell, &cfg.model))?;
        return Ok(match (res.d_star, res.b_star, res.effective_stop) {
            (Some(d), Some(b), Some(stop)) => (
                PolicySpec {
                    entry_lower: None,
                    entry_upper: Some(d),
                    exit_upper: b,
                    stop_loss: Some(stop),
                },
                None,
                false,
            ),
            _ => {
                let t = prob.solve()?;
                (PolicySpec::exit_at(t.solution.b_star), Some(t.v(x0)?), true)
            }
        });
    }
    let t = prob.solve()?;
    let s = t.solution;
    Ok((
        PolicySpec {
            entry_lower: None,
            entry_upper: Some(s.d_star),
            exit_upper: s.b_star,
            stop_loss: None,
        },
        Some(t.j(x0)?),
        false,
    ))
}

fn event_name(e: TraceEvent) -> &'static str {
    match e {
        TraceEvent::None => "",
        TraceEvent::Entry => "entry",
        TraceEvent::Exit => "exit",
        TraceEvent::StopLoss => "stop_loss",
        TraceEvent::Horizon => "horizon",
    }
}

/// Simulates the policy. Writes `mc_report.json`, and `paths.csv`
/// (`path,t,x,event`) when sample paths are requested.
pub fn simulate(cfg: &RunConfig) -> CliResult<SimulateReport> {
    cfg.validate()?;
    let x0 = cfg.simulate.x0.unwrap_or(cfg.model.theta);
    let (policy, analytic_value, entry_trivial) = resolve_policy(cfg, x0)?;
    policy.validate()?;
    let estimate = if cfg.mc.n_paths > 0 {
        Some(estimate_policy_value_with(x0, &policy, &cfg.discount, &cfg.model, &cfg.mc, &Parallel)?)
    } else {
        None
    };
    if cfg.simulate.trace_paths > 0 {
        let mut rows = Vec::new();
        for i in 0..cfg.simulate.trace_paths {
            for pt in trace_policy_path(x0, &policy, &cfg.discount, &cfg.model, &cfg.mc, i)? {
                rows.push(vec![
                    Cell::Int(i),
                    Cell::Num(pt.t),
                    Cell::Num(pt.x),
                    Cell::Text(event_name(pt.event).to_string()),
                ]);
            }
        }
        write_table(&output_path(&cfg.output_dir, "paths.csv")?, &["path", "t", "x", "event"], &rows)?;
    }
    let report = SimulateReport {
        x0,
        policy,
        analytic_value,
        entry_trivial,
        estimate,
    };
    write_json(&output_path(&cfg.output_dir, "mc_report.json")?, &report)?;
    Ok(report)
}
