//! Exit and entry when the position is force-closed at a stop-loss level.
//!
//! With stop-loss `L` the exit value is `C F(x) + D G(x)` on the delay
//! region `(L, b_L)` and `x - c` elsewhere. The entry region becomes the
//! interval `[a_L, d_L]`: below it the value is `P F^(x)`, above it `Q G^(x)`.
//!
//! Internally the exit coefficients are kept as `c_s = C F(b_L)` and
//! `d_s = D G(L)`, which stay of order one even when `F(b_L)` or `G(L)` is
//! huge or tiny.

use alloc::vec::Vec;

use crate::double_stopping::{price_tol, vi_scaled_residuals, TradingProblem, ViPoint, ViReport};
use crate::error::{invalid, Error, Result};
use crate::majorant::ConcaveMajorant;
use crate::params::{DiscountSpec, ModelParams};
use crate::quadrature::QuadratureConfig;
use crate::roots::{find_root, golden_max};
use crate::special_fn::Fundamentals;

/// Stop-loss levels closer than this to `L*` are treated as `L >= L*`.
pub const DEGENERACY_GAP: f64 = 1e-6;

/// Thresholds and coefficients with a stop-loss.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct StopLossSolution {
    #[cfg_attr(feature = "serde", serde(rename = "L"))]
    pub l: f64,
    #[cfg_attr(feature = "serde", serde(rename = "L_star"))]
    pub l_star: f64,
    #[cfg_attr(feature = "serde", serde(rename = "b_L"))]
    pub b_l: Option<f64>,
    #[cfg_attr(feature = "serde", serde(rename = "a_L"))]
    pub a_l: Option<f64>,
    #[cfg_attr(feature = "serde", serde(rename = "d_L"))]
    pub d_l: Option<f64>,
    #[cfg_attr(feature = "serde", serde(rename = "C"))]
    pub c_coef: Option<f64>,
    #[cfg_attr(feature = "serde", serde(rename = "D"))]
    pub d_coef: Option<f64>,
    #[cfg_attr(feature = "serde", serde(rename = "P"))]
    pub p_coef: Option<f64>,
    #[cfg_attr(feature = "serde", serde(rename = "Q"))]
    pub q_coef: Option<f64>,
    /// `L >= L*`: liquidate immediately at every price.
    pub degenerate_exit: bool,
    /// `V_L(x) - x - c^ <= 0` everywhere: never enter.
    pub trivial_entry: bool,
}

/// `V_L` for a fixed stop-loss and liquidation level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StopLossExit {
    pub l: f64,
    /// `None` when the delay region is empty.
    pub b_l: Option<f64>,
    pub c: f64,
    c_s: f64,
    d_s: f64,
    ln_f_b: f64,
    ln_g_l: f64,
    fund: Fundamentals,
}

impl StopLossExit {
    /// Immediate liquidation everywhere.
    pub fn degenerate(fund: Fundamentals, l: f64, c: f64) -> Self {
        Self {
            l,
            b_l: None,
            c,
            c_s: 0.0,
            d_s: 0.0,
            ln_f_b: 0.0,
            ln_g_l: 0.0,
            fund,
        }
    }

    /// Value for liquidation at `b` (any `b > l`, optimal or not).
    pub fn with_level(fund: Fundamentals, l: f64, b: f64, c: f64) -> Result<Self> {
        if !(b > l) {
            return Err(Error::Ordering { what: "L < b_L" });
        }
        let ln_f_b = fund.ln_f(b)?;
        let ln_g_l = fund.ln_g(l)?;
        let f = libm::exp(fund.ln_f(l)? - ln_f_b);
        let g = libm::exp(fund.ln_g(b)? - ln_g_l);
        let det = 1.0 - f * g;
        Ok(Self {
            l,
            b_l: Some(b),
            c,
            c_s: ((b - c) - (l - c) * g) / det,
            d_s: ((l - c) - (b - c) * f) / det,
            ln_f_b,
            ln_g_l,
            fund,
        })
    }

    fn inside(&self, x: f64) -> Option<f64> {
        self.b_l.filter(|&b| x > self.l && x < b)
    }

    pub fn v(&self, x: f64) -> Result<f64> {
        if self.inside(x).is_none() {
            return Ok(x - self.c);
        }
        Ok(self.c_s * libm::exp(self.fund.ln_f(x)? - self.ln_f_b)
            + self.d_s * libm::exp(self.fund.ln_g(x)? - self.ln_g_l))
    }

    pub fn v_d1(&self, x: f64) -> Result<f64> {
        if self.inside(x).is_none() {
            return Ok(1.0);
        }
        Ok(self.c_s * libm::exp(self.fund.ln_f_d1(x)? - self.ln_f_b)
            - self.d_s * libm::exp(self.fund.ln_abs_g_d1(x)? - self.ln_g_l))
    }

    pub fn v_d2(&self, x: f64) -> Result<f64> {
        if self.inside(x).is_none() {
            return Ok(0.0);
        }
        Ok(self.c_s * libm::exp(self.fund.ln_f_d2(x)? - self.ln_f_b)
            + self.d_s * libm::exp(self.fund.ln_g_d2(x)? - self.ln_g_l))
    }

    /// `(C, D)` in the unscaled form `V_L = C F + D G`.
    pub fn coefficients(&self) -> Option<(f64, f64)> {
        self.b_l.map(|_| {
            (
                self.c_s * libm::exp(-self.ln_f_b),
                self.d_s * libm::exp(-self.ln_g_l),
            )
        })
    }
}

/// `J_L` for a solved entry interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StopLossEntry {
    /// `(a_L, d_L)`, `None` when entry is never optimal.
    pub interval: Option<(f64, f64)>,
    pub c_hat: f64,
    h_a: f64,
    h_d: f64,
    ln_fhat_a: f64,
    ln_ghat_d: f64,
    fund: Fundamentals,
    exit: StopLossExit,
}

impl StopLossEntry {
    pub fn trivial(fund: Fundamentals, exit: StopLossExit, c_hat: f64) -> Self {
        Self {
            interval: None,
            c_hat,
            h_a: 0.0,
            h_d: 0.0,
            ln_fhat_a: 0.0,
            ln_ghat_d: 0.0,
            fund,
            exit,
        }
    }

    pub fn with_interval(
        fund: Fundamentals,
        exit: StopLossExit,
        c_hat: f64,
        a: f64,
        d: f64,
    ) -> Result<Self> {
        Ok(Self {
            interval: Some((a, d)),
            c_hat,
            h_a: exit.v(a)? - a - c_hat,
            h_d: exit.v(d)? - d - c_hat,
            ln_fhat_a: fund.ln_f(a)?,
            ln_ghat_d: fund.ln_g(d)?,
            fund,
            exit,
        })
    }

    /// `h_L(x) = V_L(x) - x - c^`.
    pub fn h(&self, x: f64) -> Result<f64> {
        Ok(self.exit.v(x)? - x - self.c_hat)
    }

    pub fn j(&self, x: f64) -> Result<f64> {
        let Some((a, d)) = self.interval else {
            return Ok(0.0);
        };
        if x < a {
            Ok(self.h_a * libm::exp(self.fund.ln_f(x)? - self.ln_fhat_a))
        } else if x <= d {
            self.h(x)
        } else {
            Ok(self.h_d * libm::exp(self.fund.ln_g(x)? - self.ln_ghat_d))
        }
    }

    pub fn j_d1(&self, x: f64) -> Result<f64> {
        let Some((a, d)) = self.interval else {
            return Ok(0.0);
        };
        if x < a {
            Ok(self.h_a * libm::exp(self.fund.ln_f_d1(x)? - self.ln_fhat_a))
        } else if x <= d {
            Ok(self.exit.v_d1(x)? - 1.0)
        } else {
            Ok(-self.h_d * libm::exp(self.fund.ln_abs_g_d1(x)? - self.ln_ghat_d))
        }
    }

    /// `(P, Q)` in the unscaled form.
    pub fn coefficients(&self) -> Option<(f64, f64)> {
        self.interval.map(|_| {
            (
                self.h_a * libm::exp(-self.ln_fhat_a),
                self.h_d * libm::exp(-self.ln_ghat_d),
            )
        })
    }
}

/// A solved stop-loss problem with its value functions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StopLossTiming {
    pub problem: TradingProblem,
    pub solution: StopLossSolution,
    pub exit: StopLossExit,
    pub entry: StopLossEntry,
}

impl StopLossTiming {
    pub fn v(&self, x: f64) -> Result<f64> {
        self.exit.v(x)
    }

    pub fn j(&self, x: f64) -> Result<f64> {
        self.entry.j(x)
    }
}

impl TradingProblem {
    /// Residual of the liquidation equation for stop-loss `l`, divided by
    /// `G(L) F(b)`. Positive below the root, negative above.
    pub fn stoploss_exit_residual(&self, l: f64, b: f64) -> Result<f64> {
        let e = &self.exit;
        let c = self.discount.c;
        let ln_f_b = e.ln_f(b)?;
        let ln_g_l = e.ln_g(l)?;
        let f = libm::exp(e.ln_f(l)? - ln_f_b);
        let g = libm::exp(e.ln_g(b)? - ln_g_l);
        let rho_f = e.f_log_deriv(b)?;
        let rho_g = e.g_log_deriv(b)?;
        Ok(((l - c) * g - (b - c)) * rho_f + ((b - c) * f - (l - c)) * g * rho_g - g * f + 1.0)
    }

    /// Optimal liquidation with stop-loss `l`.
    pub fn solve_exit_stoploss(&self, l: f64) -> Result<StopLossExit> {
        if !l.is_finite() {
            return Err(invalid("L", l, "stop-loss level must be finite"));
        }
        let ls = self.l_star();
        let c = self.discount.c;
        if l >= ls - DEGENERACY_GAP {
            return Ok(StopLossExit::degenerate(self.exit, l, c));
        }
        let hi = self.solve_exit_threshold()?;
        let b = find_root(
            |b| self.stoploss_exit_residual(l, b),
            ls,
            hi,
            price_tol(&self.params),
            "stop-loss exit threshold",
        )?;
        StopLossExit::with_level(self.exit, l, b, c)
    }

    /// `(argmax, max)` of `h_L` over the delay region.
    pub fn max_entry_reward(&self, exit: &StopLossExit) -> Result<(f64, f64)> {
        let c_hat = self.discount.c_hat;
        let Some(b) = exit.b_l else {
            return Ok((exit.l, -(self.discount.c + c_hat)));
        };
        let l = exit.l;
        let h = |x: f64| Ok(exit.v(x)? - x - c_hat);
        const SCAN: usize = 64;
        let step = (b - l) / SCAN as f64;
        let mut best = (l, f64::NEG_INFINITY);
        for i in 1..SCAN {
            let x = l + step * i as f64;
            let hx = h(x)?;
            if hx > best.1 {
                best = (x, hx);
            }
        }
        let lo = (best.0 - step).max(l);
        let hi = (best.0 + step).min(b);
        golden_max(h, lo, hi, price_tol(&self.params))
    }

    /// Entry interval for a stop-loss exit value.
    pub fn solve_entry_stoploss(&self, exit: &StopLossExit) -> Result<StopLossEntry> {
        let c_hat = self.discount.c_hat;
        let (x_m, h_m) = self.max_entry_reward(exit)?;
        let Some(b) = exit.b_l else {
            return Ok(StopLossEntry::trivial(self.entry, *exit, c_hat));
        };
        if !(h_m > 0.0) {
            return Ok(StopLossEntry::trivial(self.entry, *exit, c_hat));
        }
        let l = exit.l;
        let eps = 1e-6 * self.params.stationary_std();
        let tol = price_tol(&self.params);
        let fhat = &self.entry;
        let d = find_root(
            |x| {
                let h = exit.v(x)? - x - c_hat;
                Ok(exit.v_d1(x)? - 1.0 - fhat.g_log_deriv(x)? * h)
            },
            x_m,
            b - eps,
            tol,
            "stop-loss entry upper level",
        )?;
        let a = find_root(
            |x| {
                let h = exit.v(x)? - x - c_hat;
                Ok(exit.v_d1(x)? - 1.0 - fhat.f_log_deriv(x)? * h)
            },
            l + eps,
            d - eps,
            tol,
            "stop-loss entry lower level",
        )?;
        if !(l < a && a < d && d < b) {
            return Err(Error::Ordering {
                what: "L < a_L < d_L < b_L",
            });
        }
        StopLossEntry::with_interval(self.entry, *exit, c_hat, a, d)
    }

    /// Solve exit and entry with stop-loss `l`.
    pub fn solve_stoploss(&self, l: f64) -> Result<StopLossTiming> {
        let exit = self.solve_exit_stoploss(l)?;
        let entry = self.solve_entry_stoploss(&exit)?;
        let (c_coef, d_coef) = exit.coefficients().unzip();
        let (p_coef, q_coef) = entry.coefficients().unzip();
        let (a_l, d_l) = entry.interval.unzip();
        Ok(StopLossTiming {
            problem: *self,
            solution: StopLossSolution {
                l,
                l_star: self.l_star(),
                b_l: exit.b_l,
                a_l,
                d_l,
                c_coef,
                d_coef,
                p_coef,
                q_coef,
                degenerate_exit: exit.b_l.is_none(),
                trivial_entry: entry.interval.is_none(),
            },
            exit,
            entry,
        })
    }

    /// `b_L` for each stop-loss level; `L` itself where the delay region is
    /// empty.
    pub fn sweep_l(&self, l_grid: &[f64]) -> Vec<(f64, Result<f64>)> {
        l_grid
            .iter()
            .map(|&l| (l, self.solve_exit_stoploss(l).map(|e| e.b_l.unwrap_or(l))))
            .collect()
    }
}

pub fn solve_exit_stoploss(l: f64, p: &ModelParams, d: &DiscountSpec, q: &QuadratureConfig) -> Result<StopLossExit> {
    TradingProblem::new(*p, *d, *q)?.solve_exit_stoploss(l)
}

pub fn solve_stoploss(l: f64, p: &ModelParams, d: &DiscountSpec, q: &QuadratureConfig) -> Result<StopLossTiming> {
    TradingProblem::new(*p, *d, *q)?.solve_stoploss(l)
}

/// Whether `sup (V_L(x) - x - c^) > 0`.
pub fn check_entry_nontrivial(exit: &StopLossExit, p: &ModelParams, d: &DiscountSpec, q: &QuadratureConfig) -> Result<bool> {
    let (_, h) = TradingProblem::new(*p, *d, *q)?.max_entry_reward(exit)?;
    Ok(h > 0.0)
}

pub fn sweep_l(l_grid: &[f64], p: &ModelParams, d: &DiscountSpec, q: &QuadratureConfig) -> Result<Vec<(f64, Result<f64>)>> {
    Ok(TradingProblem::new(*p, *d, *q)?.sweep_l(l_grid))
}

/// Stop-loss placed a fixed distance `ell` below the entry price.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RelativeStopLossSpec {
    pub ell: f64,
    pub x_grid: Vec<f64>,
}

impl RelativeStopLossSpec {
    /// 1001 points over `theta +- 4` stationary standard deviations.
    pub fn with_default_grid(ell: f64, p: &ModelParams) -> Self {
        let std = p.stationary_std();
        let x_grid = (0..1001)
            .map(|i| p.theta - 4.0 * std + 8.0 * std * i as f64 / 1000.0)
            .collect();
        Self { ell, x_grid }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.ell > 0.0 && self.ell.is_finite()) {
            return Err(invalid("ell", self.ell, "stop-loss offset must be positive"));
        }
        if self.x_grid.len() < 3 {
            return Err(Error::InsufficientData {
                needed: 3,
                got: self.x_grid.len(),
            });
        }
        for i in 1..self.x_grid.len() {
            if !(self.x_grid[i] > self.x_grid[i - 1]) {
                return Err(Error::Unsorted { index: i });
            }
        }
        Ok(())
    }
}

/// Sampled solution of the relative stop-loss entry problem.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RelativeStopLossResult {
    pub ell: f64,
    pub x: Vec<f64>,
    /// Exit value when the stop sits `ell` below the current price.
    pub exit_value: Vec<f64>,
    /// `exit_value - x - c^`.
    pub entry_reward: Vec<f64>,
    pub entry_value: Vec<f64>,
    /// Upper end of the entry region, if entering is ever optimal.
    pub d_star: Option<f64>,
    /// Liquidation level after entering at `d_star`.
    pub b_star: Option<f64>,
    /// `d_star - ell`.
    pub effective_stop: Option<f64>,
}

impl TradingProblem {
    /// Entry with a stop-loss `ell` below the entry price, solved on a grid
    /// through the discrete concave majorant of the transformed reward.
    pub fn solve_relative_stoploss(&self, spec: &RelativeStopLossSpec) -> Result<RelativeStopLossResult> {
        spec.validate()?;
        let c_hat = self.discount.c_hat;
        let n = spec.x_grid.len();
        let mut exit_value = Vec::with_capacity(n);
        for &x in &spec.x_grid {
            exit_value.push(self.solve_exit_stoploss(x - spec.ell)?.v(x)?);
        }
        let entry_reward: Vec<f64> = spec
            .x_grid
            .iter()
            .zip(&exit_value)
            .map(|(x, v)| v - x - c_hat)
            .collect();

        let fhat = &self.entry;
        let mut ln_g = Vec::with_capacity(n);
        let mut y = Vec::with_capacity(n + 1);
        let mut h = Vec::with_capacity(n + 1);
        // the transformed reward vanishes at y = 0
        y.push(0.0);
        h.push(0.0);
        for (&x, &r) in spec.x_grid.iter().zip(&entry_reward) {
            let lg = fhat.ln_g(x)?;
            ln_g.push(lg);
            y.push(libm::exp(fhat.ln_f(x)? - lg));
            h.push(r * libm::exp(-lg));
        }

        // the majorant is flat beyond the maximiser of the transformed reward
        let arg = (1..=n).fold(1, |best, i| if h[i] > h[best] { i } else { best });
        if !(h[arg] > 0.0) {
            return Ok(RelativeStopLossResult {
                ell: spec.ell,
                x: spec.x_grid.clone(),
                exit_value,
                entry_reward,
                entry_value: alloc::vec![0.0; n],
                d_star: None,
                b_star: None,
                effective_stop: None,
            });
        }
        if arg == 1 || arg == n {
            return Err(Error::Resolution {
                what: "maximiser of the transformed entry reward lies on the grid edge",
            });
        }
        let hull = ConcaveMajorant::new(&y[..=arg], &h[..=arg])?;
        let mut entry_value = Vec::with_capacity(n);
        for i in 1..=n {
            let w = if i <= arg { hull.values[i] } else { h[arg] };
            entry_value.push(w * libm::exp(ln_g[i - 1]));
        }
        let d_star = spec.x_grid[arg - 1];
        let stop = d_star - spec.ell;
        let b_star = self.solve_exit_stoploss(stop)?.b_l;
        Ok(RelativeStopLossResult {
            ell: spec.ell,
            x: spec.x_grid.clone(),
            exit_value,
            entry_reward,
            entry_value,
            d_star: Some(d_star),
            b_star,
            effective_stop: Some(stop),
        })
    }
}

pub fn solve_relative_stoploss(
    spec: &RelativeStopLossSpec,
    p: &ModelParams,
    d: &DiscountSpec,
    q: &QuadratureConfig,
) -> Result<RelativeStopLossResult> {
    TradingProblem::new(*p, *d, *q)?.solve_relative_stoploss(spec)
}

/// Variational-inequality residuals of `V_L` (on grid points above `L`)
/// and `J_L` (on the whole grid).
pub fn vi_residuals_stoploss(x_grid: &[f64], timing: &StopLossTiming) -> Result<ViReport> {
    let prob = &timing.problem;
    let sol = &timing.solution;
    let c = prob.discount.c;
    let mut kinks: Vec<f64> = [Some(sol.l), sol.b_l, sol.a_l, sol.d_l].into_iter().flatten().collect();
    kinks.sort_by(f64::total_cmp);
    let above: Vec<f64> = x_grid.iter().copied().filter(|&x| x > sol.l).collect();
    let exit = if above.len() >= 3 {
        vi_scaled_residuals(&above, &prob.params, prob.discount.r, |x| timing.v(x), |x| Ok(x - c), &kinks)?
    } else {
        Vec::new()
    };
    let entry = vi_scaled_residuals(
        x_grid,
        &prob.params,
        prob.discount.r_hat,
        |x| timing.j(x),
        |x| timing.entry.h(x),
        &kinks,
    )?;
    let worst = |pts: &[ViPoint]| pts.iter().map(ViPoint::violation).fold(0.0, f64::max);
    Ok(ViReport {
        max_exit_violation: worst(&exit),
        max_entry_violation: worst(&entry),
        exit,
        entry,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn gld() -> ModelParams {
        ModelParams::new(0.5388, 16.6677, 0.1599).unwrap()
    }

    fn problem(c: f64) -> TradingProblem {
        TradingProblem::new(gld(), DiscountSpec::symmetric(0.05, c).unwrap(), QuadratureConfig::default()).unwrap()
    }

    #[test]
    fn calibrated_exit_level_matches_reference() {
        let e = problem(0.05).solve_exit_stoploss(0.4834).unwrap();
        let b = e.b_l.unwrap();
        assert!((b - 0.567_305_710_905_084_3).abs() < 1e-9, "{b}");
    }

    #[test]
    fn calibrated_entry_is_trivial_at_published_costs() {
        let t = problem(0.05).solve_stoploss(0.4834).unwrap();
        assert!(!t.solution.degenerate_exit);
        assert!(t.solution.trivial_entry);
        assert_eq!(t.j(0.5).unwrap(), 0.0);
    }

    #[test]
    fn low_cost_entry_interval_matches_reference() {
        let t = problem(0.005).solve_stoploss(0.4834).unwrap();
        let s = t.solution;
        assert!((s.b_l.unwrap() - 0.566_986_8).abs() < 1e-6);
        assert!((s.a_l.unwrap() - 0.505_628_2).abs() < 1e-6);
        assert!((s.d_l.unwrap() - 0.505_760_6).abs() < 1e-6);
    }

    #[test]
    fn boundary_pasting_of_exit_value() {
        let e = problem(0.05).solve_exit_stoploss(0.4834).unwrap();
        let b = e.b_l.unwrap();
        let (c, d) = e.coefficients().unwrap();
        let fund = problem(0.05).exit;
        let at = |x: f64| c * fund.f(x).unwrap() + d * fund.g(x).unwrap();
        assert!((at(0.4834) - (0.4834 - 0.05)).abs() < 1e-9);
        assert!((at(b) - (b - 0.05)).abs() < 1e-9);
        assert!((e.v_d1(b - 1e-12).unwrap() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn degenerate_above_critical_level() {
        let p = problem(0.05);
        let t = p.solve_stoploss(p.l_star() + 0.01).unwrap();
        assert!(t.solution.degenerate_exit && t.solution.trivial_entry);
        for x in [0.3, 0.5, 0.55, 0.7] {
            assert_eq!(t.v(x).unwrap(), x - 0.05);
        }
    }

    #[test]
    fn prohibitive_entry_cost_is_trivial() {
        let d = DiscountSpec::new(0.05, 0.05, 0.05, 0.2).unwrap();
        let prob = TradingProblem::new(gld(), d, QuadratureConfig::default()).unwrap();
        let t = prob.solve_stoploss(0.4834).unwrap();
        assert!(t.solution.trivial_entry);
    }

    #[test]
    fn entry_values_on_each_branch() {
        let t = problem(0.005).solve_stoploss(0.4834).unwrap();
        let (a, d) = t.entry.interval.unwrap();
        let mid = 0.5 * (a + d);
        assert_eq!(t.j(mid).unwrap(), t.v(mid).unwrap() - mid - 0.005);
        let eps = 1e-7;
        assert!((t.j(a - eps).unwrap() - t.j(a).unwrap()).abs() < 1e-6);
        assert!((t.j(d + eps).unwrap() - t.j(d).unwrap()).abs() < 1e-6);
        assert!(t.j(0.3).unwrap() >= 0.0 && t.j(0.3).unwrap() < t.j(a).unwrap());
    }

    #[test]
    fn stoploss_vi_residuals_are_small() {
        let std = gld().stationary_std();
        let grid: Vec<f64> = (0..2001).map(|i| 0.5388 - 4.0 * std + 8.0 * std * i as f64 / 2000.0).collect();
        for c in [0.05, 0.005] {
            let t = problem(c).solve_stoploss(0.4834).unwrap();
            let rep = vi_residuals_stoploss(&grid, &t).unwrap();
            assert!(rep.max_exit_violation < 1e-4, "{c}: {}", rep.max_exit_violation);
            assert!(rep.max_entry_violation < 1e-4, "{c}: {}", rep.max_entry_violation);
        }
    }

    #[test]
    fn sweep_marks_degenerate_points() {
        let p = problem(0.05);
        let ls = p.l_star();
        let pts = p.sweep_l(&[0.45, 0.5, ls]);
        let b: Vec<f64> = pts.iter().map(|(_, r)| *r.as_ref().unwrap()).collect();
        assert!(b[0] > b[1] && b[1] > b[2]);
        assert_eq!(b[2], ls);
    }

    #[test]
    fn relative_stop_rejects_bad_spec() {
        let spec = RelativeStopLossSpec {
            ell: 0.0,
            x_grid: alloc::vec![0.1, 0.2, 0.3],
        };
        assert!(spec.validate().is_err());
        let spec = RelativeStopLossSpec {
            ell: 0.1,
            x_grid: alloc::vec![0.1, 0.3, 0.2],
        };
        assert!(matches!(spec.validate(), Err(Error::Unsorted { index: 2 })));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(10))]

        #[test]
        fn exit_level_decreases_in_stop(l1 in 0.40f64..0.52, dl in 0.001f64..0.015) {
            let p = problem(0.05);
            let b1 = p.solve_exit_stoploss(l1).unwrap().b_l.unwrap();
            let b2 = p.solve_exit_stoploss(l1 + dl).unwrap().b_l.unwrap();
            prop_assert!(b2 < b1);
        }

        #[test]
        fn translation_identity(k in -0.5f64..0.5, l in 0.40f64..0.53) {
            let q = QuadratureConfig::default();
            let d = DiscountSpec::symmetric(0.05, 0.05).unwrap();
            let base = TradingProblem::new(gld(), d, q).unwrap();
            let shifted_d = d.with_exit_cost(d.c + k).with_entry_cost(d.c_hat - k);
            let moved = TradingProblem::new(gld().shifted(k), shifted_d, q).unwrap();
            let e0 = base.solve_exit_stoploss(l).unwrap();
            let e1 = moved.solve_exit_stoploss(l + k).unwrap();
            prop_assert!((e1.b_l.unwrap() - k - e0.b_l.unwrap()).abs() < 1e-8);
            for x in [l - 0.01, 0.5 * (l + e0.b_l.unwrap()), e0.b_l.unwrap() + 0.01] {
                prop_assert!((e1.v(x + k).unwrap() - e0.v(x).unwrap()).abs() < 1e-8);
            }
        }
    }
}
