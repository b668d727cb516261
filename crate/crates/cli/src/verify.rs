//! Cross-module invariant checks with measured residuals.

use ou_timing_core::double_stopping::{vi_residuals, EntryValue, ExitValue, OptimalTiming};
use ou_timing_core::majorant::discrete_concave_majorant;
use ou_timing_core::mc_oracle::{estimate_hitting_laplace_with, grid_argmax_check_with, ArgmaxMode};
use ou_timing_core::special_fn::Fundamentals;
use ou_timing_core::stoploss::{vi_residuals_stoploss, StopLossTiming};
use ou_timing_core::{DiscountSpec, Result as ModelResult, TradingProblem};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::csv_io::{output_path, write_json};
use crate::error::CliResult;
use crate::executor::Parallel;

pub const VI_TOL: f64 = 1e-4;
pub const PASTING_TOL: f64 = 1e-5;
pub const SANDWICH_TOL: f64 = 1e-12;
pub const IDENTITY_TOL: f64 = 1e-8;
pub const ARGMAX_STEP: f64 = 0.002;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub status: Status,
    pub measured: Option<f64>,
    pub tolerance: Option<f64>,
    pub detail: String,
}

impl Check {
    fn measure(name: &str, measured: f64, tolerance: f64) -> Self {
        Self {
            name: name.to_string(),
            status: if measured <= tolerance { Status::Pass } else { Status::Fail },
            measured: Some(measured),
            tolerance: Some(tolerance),
            detail: String::new(),
        }
    }

    fn skipped(name: &str, why: &str) -> Self {
        Self {
            name: name.to_string(),
            status: Status::Skipped,
            measured: None,
            tolerance: None,
            detail: why.to_string(),
        }
    }

    fn errored(name: &str, e: impl std::fmt::Display) -> Self {
        Self {
            name: name.to_string(),
            status: Status::Fail,
            measured: None,
            tolerance: None,
            detail: e.to_string(),
        }
    }

    fn with_detail(mut self, detail: String) -> Self {
        self.detail = detail;
        self
    }
}

fn check(name: &str, f: impl FnOnce() -> ModelResult<Check>) -> Check {
    f().unwrap_or_else(|e| Check::errored(name, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub passed: bool,
    pub failed: usize,
    pub skipped: usize,
    pub checks: Vec<Check>,
}

impl VerifyReport {
    fn new(checks: Vec<Check>) -> Self {
        let failed = checks.iter().filter(|c| c.status == Status::Fail).count();
        let skipped = checks.iter().filter(|c| c.status == Status::Skipped).count();
        Self {
            passed: failed == 0,
            failed,
            skipped,
            checks,
        }
    }

    pub fn get(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyOptions {
    /// Include the simulation-based checks.
    pub monte_carlo: bool,
    /// Test hook: move `b*` by this relative amount before checking.
    pub exit_perturbation: Option<f64>,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            monte_carlo: true,
            exit_perturbation: None,
        }
    }
}

/// Runs the checks and writes `verify.json`.
pub fn verify(cfg: &RunConfig, opts: &VerifyOptions) -> CliResult<VerifyReport> {
    let report = run_checks(cfg, opts)?;
    write_json(&output_path(&cfg.output_dir, "verify.json")?, &report)?;
    Ok(report)
}

/// Runs the checks without writing anything.
pub fn run_checks(cfg: &RunConfig, opts: &VerifyOptions) -> CliResult<VerifyReport> {
    cfg.validate()?;
    let prob = TradingProblem::new(cfg.model, cfg.discount, cfg.quadrature)?;
    let mut timing = prob.solve()?;
    if let Some(rel) = opts.exit_perturbation {
        timing = perturb_exit(&timing, rel)?;
    }
    let xs = cfg.grid.values(&cfg.model);
    let mut checks = Vec::new();
    checks.extend(value_checks(&timing, &xs));
    checks.push(check("reflection", || reflection(&prob)));
    checks.push(check("translation", || translation(&prob, cfg.stop_loss)));
    checks.push(check("monotone_exit_cost", || monotone_exit_cost(&prob)));
    checks.push(check("monotone_entry_cost", || monotone_entry_cost(&prob)));
    checks.push(check("monotone_stop_level", || monotone_stop_level(&prob)));
    checks.push(check("concave_majorant", || majorant(&timing)));
    let stop = match cfg.stop_loss {
        Some(l) => Some(prob.solve_stoploss(l)?),
        None => None,
    };
    checks.extend(stop_checks(&timing, stop.as_ref(), &xs));
    if opts.monte_carlo {
        checks.push(check("hitting_laplace", || hitting_laplace(cfg)));
        checks.push(check("grid_argmax_exit", || {
            argmax(cfg, timing.solution.b_star, ArgmaxMode::Exit, "grid_argmax_exit")
        }));
        match stop.as_ref().and_then(|s| s.solution.b_l.map(|b| (s.solution.l, b))) {
            Some((l, b)) => checks.push(check("grid_argmax_exit_stoploss", || {
                argmax(cfg, b, ArgmaxMode::ExitStopLoss { stop_loss: l }, "grid_argmax_exit_stoploss")
            })),
            None => checks.push(Check::skipped("grid_argmax_exit_stoploss", skip_reason(stop.as_ref()))),
        }
    }
    Ok(VerifyReport::new(checks))
}

fn skip_reason(stop: Option<&StopLossTiming>) -> &'static str {
    match stop {
        None => "no stop-loss configured",
        Some(_) => "stop-loss at or above L*: immediate exit",
    }
}

/// Same problem with the exit level moved to `b* (1 + rel)` and the
/// entry level kept.
fn perturb_exit(t: &OptimalTiming, rel: f64) -> ModelResult<OptimalTiming> {
    let prob = t.problem;
    let b = t.solution.b_star * (1.0 + rel);
    let exit_value = ExitValue::new(prob.exit, b, prob.discount.c)?;
    let entry_value = EntryValue::new(prob.entry, exit_value, t.solution.d_star, prob.discount.c_hat)?;
    let mut solution = t.solution;
    solution.b_star = b;
    Ok(OptimalTiming {
        problem: prob,
        solution,
        exit_value,
        entry_value,
    })
}

fn worst(xs: &[f64], mut gap: impl FnMut(f64) -> ModelResult<f64>) -> ModelResult<f64> {
    let mut w = 0.0f64;
    for &x in xs {
        w = w.max(gap(x)?);
    }
    Ok(w)
}

fn value_checks(t: &OptimalTiming, xs: &[f64]) -> Vec<Check> {
    let d = t.problem.discount;
    let mut out = Vec::new();
    match vi_residuals(xs, t) {
        Ok(rep) => {
            out.push(Check::measure("vi_exit", rep.max_exit_violation, VI_TOL));
            out.push(Check::measure("vi_entry", rep.max_entry_violation, VI_TOL));
        }
        Err(e) => {
            out.push(Check::errored("vi_exit", &e));
            out.push(Check::errored("vi_entry", &e));
        }
    }
    out.push(check("smooth_pasting_exit", || {
        let b = t.solution.b_star;
        let slope = (b - d.c) * t.problem.exit.f_log_deriv(b)?;
        Ok(Check::measure("smooth_pasting_exit", (slope - 1.0).abs(), PASTING_TOL))
    }));
    out.push(check("smooth_pasting_entry", || {
        let dd = t.solution.d_star;
        let right = t.entry_value.h(dd)? * t.problem.entry.g_log_deriv(dd)?;
        let left = t.exit_value.v_d1(dd)? - 1.0;
        Ok(Check::measure("smooth_pasting_entry", (right - left).abs(), PASTING_TOL))
    }));
    out.push(check("sandwich_exit", || {
        let w = worst(xs, |x| Ok((x - d.c) - t.v(x)?))?;
        Ok(Check::measure("sandwich_exit", w, SANDWICH_TOL).with_detail("V >= x - c".into()))
    }));
    out.push(check("sandwich_entry", || {
        let w = worst(xs, |x| {
            let j = t.j(x)?;
            Ok((-j).max(t.entry_value.h(x)? - j))
        })?;
        Ok(Check::measure("sandwich_entry", w, SANDWICH_TOL).with_detail("J >= max(0, V - x - c_hat)".into()))
    }));
    out
}

fn stop_checks(t: &OptimalTiming, stop: Option<&StopLossTiming>, xs: &[f64]) -> Vec<Check> {
    const NAMES: [&str; 6] = [
        "vi_exit_stoploss",
        "vi_entry_stoploss",
        "smooth_pasting_exit_stoploss",
        "smooth_pasting_entry_stoploss",
        "sandwich_exit_stoploss",
        "sandwich_entry_stoploss",
    ];
    let Some(sl) = stop.filter(|s| !s.solution.degenerate_exit) else {
        return NAMES.iter().map(|n| Check::skipped(n, skip_reason(stop))).collect();
    };
    let c = t.problem.discount.c;
    let mut out = Vec::new();
    match vi_residuals_stoploss(xs, sl) {
        Ok(rep) => {
            out.push(Check::measure(NAMES[0], rep.max_exit_violation, VI_TOL));
            out.push(Check::measure(NAMES[1], rep.max_entry_violation, VI_TOL));
        }
        Err(e) => {
            out.push(Check::errored(NAMES[0], &e));
            out.push(Check::errored(NAMES[1], &e));
        }
    }
    let eps = 1e-9 * t.problem.params.stationary_std();
    out.push(check(NAMES[2], || {
        let b = sl.solution.b_l.expect("nondegenerate");
        Ok(Check::measure(NAMES[2], (sl.exit.v_d1(b - eps)? - 1.0).abs(), PASTING_TOL))
    }));
    out.push(match sl.entry.interval {
        None => Check::skipped(NAMES[3], "entry never optimal"),
        Some((a, d)) => check(NAMES[3], || {
            let at_a = (sl.entry.j_d1(a - eps)? - (sl.exit.v_d1(a + eps)? - 1.0)).abs();
            let at_d = (sl.entry.j_d1(d + eps)? - (sl.exit.v_d1(d - eps)? - 1.0)).abs();
            Ok(Check::measure(NAMES[3], at_a.max(at_d), PASTING_TOL))
        }),
    });
    out.push(check(NAMES[4], || {
        let w = worst(xs, |x| {
            let v_l = sl.v(x)?;
            Ok((v_l - t.v(x)?).max((x - c) - v_l))
        })?;
        Ok(Check::measure(NAMES[4], w, SANDWICH_TOL).with_detail("x - c <= V_L <= V".into()))
    }));
    out.push(check(NAMES[5], || {
        let w = worst(xs, |x| {
            let j_l = sl.j(x)?;
            Ok((j_l - t.j(x)?).max(-j_l))
        })?;
        Ok(Check::measure(NAMES[5], w, SANDWICH_TOL).with_detail("0 <= J_L <= J".into()))
    }));
    out
}

/// `G(x) = F(2 theta - x)`, relative error.
fn reflection(prob: &TradingProblem) -> ModelResult<Check> {
    let p = prob.params;
    let std = p.stationary_std();
    let mut w = 0.0f64;
    for fund in [prob.exit, prob.entry] {
        for i in 0..=200 {
            let x = p.theta - 4.0 * std + 8.0 * std * i as f64 / 200.0;
            let g = fund.g(x)?;
            let f = fund.f(2.0 * p.theta - x)?;
            w = w.max((g - f).abs() / f.abs());
        }
    }
    Ok(Check::measure("reflection", w, IDENTITY_TOL))
}

/// Shifting `theta`, `L` and `c` by `k` (and `c_hat` by `-k`) shifts every
/// threshold by `k`.
fn translation(prob: &TradingProblem, stop: Option<f64>) -> ModelResult<Check> {
    let k = 0.1;
    let d = prob.discount;
    let moved = TradingProblem::new(
        prob.params.shifted(k),
        DiscountSpec::new(d.r, d.r_hat, d.c + k, d.c_hat - k)?,
        prob.quad,
    )?;
    let a = prob.solve()?.solution;
    let b = moved.solve()?.solution;
    let mut w = (b.b_star - a.b_star - k).abs().max((b.d_star - a.d_star - k).abs());
    if let Some(l) = stop {
        let s0 = prob.solve_stoploss(l)?.solution;
        let s1 = moved.solve_stoploss(l + k)?.solution;
        for (x, y) in [(s0.b_l, s1.b_l), (s0.a_l, s1.a_l), (s0.d_l, s1.d_l)] {
            match (x, y) {
                (Some(x), Some(y)) => w = w.max((y - x - k).abs()),
                (None, None) => {}
                _ => w = f64::INFINITY,
            }
        }
    }
    Ok(Check::measure("translation", w, IDENTITY_TOL))
}

fn cost_grid(c: f64) -> Vec<f64> {
    let (lo, hi) = (0.5 * c.abs(), 1.5 * c.abs() + 0.01);
    (0..20).map(|i| lo + (hi - lo) * i as f64 / 19.0).collect()
}

/// Count of adjacent pairs breaking the expected order.
fn order_breaks(v: &[f64], ok: impl Fn(f64, f64) -> bool) -> f64 {
    v.windows(2).filter(|w| !ok(w[0], w[1])).count() as f64
}

fn monotone_exit_cost(prob: &TradingProblem) -> ModelResult<Check> {
    let d = prob.discount;
    let mut b = Vec::new();
    for c in cost_grid(d.c) {
        let p = TradingProblem::new(prob.params, d.with_exit_cost(c), prob.quad)?;
        b.push(p.solve_exit_threshold()?);
    }
    Ok(Check::measure("monotone_exit_cost", order_breaks(&b, |x, y| y > x), 0.0)
        .with_detail("b* strictly increasing in c over 20 costs".into()))
}

fn monotone_entry_cost(prob: &TradingProblem) -> ModelResult<Check> {
    let d = prob.discount;
    let mut ds = Vec::new();
    for c_hat in cost_grid(d.c_hat) {
        let p = TradingProblem::new(prob.params, d.with_entry_cost(c_hat), prob.quad)?;
        ds.push(p.solve()?.solution.d_star);
    }
    Ok(Check::measure("monotone_entry_cost", order_breaks(&ds, |x, y| y <= x), 0.0)
        .with_detail("d* non-increasing in c_hat over 20 costs".into()))
}

fn monotone_stop_level(prob: &TradingProblem) -> ModelResult<Check> {
    let b_star = prob.solve_exit_threshold()?;
    let hi = prob.l_star() - 1e-4 * prob.params.stationary_std();
    let lo = prob.params.theta - 3.0 * prob.params.stationary_std();
    let mut b = Vec::new();
    for i in 0..20 {
        let l = lo + (hi - lo) * i as f64 / 19.0;
        b.push(prob.solve_exit_stoploss(l)?.b_l.unwrap_or(f64::NAN));
    }
    let above = b.iter().filter(|&&v| !(v < b_star)).count() as f64;
    Ok(Check::measure("monotone_stop_level", order_breaks(&b, |x, y| y < x) + above, 0.0)
        .with_detail("b_L strictly decreasing in L and below b* over 20 levels".into()))
}

/// Discrete majorant of the sampled transformed payoff against the closed
/// form, within linear-interpolation error.
fn majorant(t: &OptimalTiming) -> ModelResult<Check> {
    let e: Fundamentals = t.problem.exit;
    let p = t.problem.params;
    let c = t.problem.discount.c;
    let y_max = e.psi(p.theta + 4.0 * p.stationary_std())?;
    let n = 2001;
    let ys: Vec<f64> = (0..n).map(|i| y_max * i as f64 / (n - 1) as f64).collect();
    let mut pts = Vec::with_capacity(n);
    let mut exact = Vec::with_capacity(n);
    for &y in &ys {
        if y == 0.0 {
            pts.push((0.0, 0.0));
            exact.push(0.0);
            continue;
        }
        let x = e.psi_inverse(y)?;
        pts.push((y, (x - c).max(0.0) / e.g(x)?));
        exact.push(t.exit_value.transformed(y)?);
    }
    let w = discrete_concave_majorant(&pts)?;
    let h = ys[1] - ys[0];
    let curv = (1..n - 1)
        .map(|i| (exact[i + 1] - 2.0 * exact[i] + exact[i - 1]).abs() / (h * h))
        .fold(0.0, f64::max);
    let scale = exact.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let tol = curv * h * h / 2.0 + 1e-12 * scale;
    let err = w.iter().zip(&exact).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    Ok(Check::measure("concave_majorant", err, tol))
}

fn hitting_laplace(cfg: &RunConfig) -> ModelResult<Check> {
    let p = cfg.model;
    let r = p.mu / 10.0;
    let kappa = p.theta + p.stationary_std();
    let f = Fundamentals::new(p, r, cfg.quadrature)?;
    let exact = f.f(p.theta)? / f.f(kappa)?;
    let e = estimate_hitting_laplace_with(p.theta, kappa, r, &p, &cfg.mc, &Parallel)?;
    let z = (e.estimate - exact).abs() / e.std_error;
    Ok(Check::measure("hitting_laplace", z, 3.0)
        .with_detail(format!("estimate {} +- {} vs {exact} (in SE)", e.estimate, e.std_error)))
}

fn argmax(cfg: &RunConfig, level: f64, mode: ArgmaxMode, name: &str) -> ModelResult<Check> {
    let centre = (level / ARGMAX_STEP).round() * ARGMAX_STEP;
    let grid: Vec<f64> = (-4..=4).map(|i| centre + ARGMAX_STEP * i as f64).collect();
    let x0 = cfg.model.theta;
    let rep = grid_argmax_check_with(x0, &grid, &cfg.discount, &cfg.model, &cfg.mc, mode, Some(level), &Parallel)?;
    let dist = (rep.best_level - level).abs();
    let mut c = Check::measure(name, dist, ARGMAX_STEP);
    c.status = if rep.passed() { Status::Pass } else { Status::Fail };
    let gap = rep.analytic_estimate.map(|a| rep.estimates[rep.best_index].estimate - a.estimate);
    Ok(c.with_detail(format!(
        "grid best {} vs {level}; value gap {:?} with paired SE {:?}",
        rep.best_level, gap, rep.gap_std_error
    )))
}
