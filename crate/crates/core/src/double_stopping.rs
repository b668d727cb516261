//! Optimal exit after entry, and optimal entry anticipating that exit, with
//! no stop-loss.
//!
//! The exit value is `V(x) = (b* - c) F(x)/F(b*)` below the liquidation
//! level `b*` and `x - c` above it. The entry value is `J(x) = h(x)` at or
//! below the entry level `d*` and `h(d*) G^(x)/G^(d*)` above it, where
//! `h(x) = V(x) - x - c^` and hats refer to the entry discount rate.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::params::{DiscountSpec, ModelParams};
use crate::quadrature::QuadratureConfig;
use crate::roots::{expand_bracket, find_root, find_root_with, DEFAULT_XTOL};
use crate::special_fn::Fundamentals;

/// Level above which waiting for a higher exit cannot pay for the discounting:
/// `(mu theta + r c) / (mu + r)`.
pub fn l_star(p: &ModelParams, d: &DiscountSpec) -> f64 {
    (p.mu * p.theta + d.r * d.c) / (p.mu + d.r)
}

/// Root-finding tolerance in price units for thresholds near `theta`.
pub(crate) fn price_tol(p: &ModelParams) -> f64 {
    DEFAULT_XTOL * p.theta.abs().max(p.stationary_std()).max(1.0)
}

/// Dynamics, costs and the two pairs of fundamental solutions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TradingProblem {
    pub params: ModelParams,
    pub discount: DiscountSpec,
    pub quad: QuadratureConfig,
    /// `F`, `G` at the exit rate `r`.
    pub exit: Fundamentals,
    /// `F^`, `G^` at the entry rate `r_hat`.
    pub entry: Fundamentals,
}

impl TradingProblem {
    pub fn new(params: ModelParams, discount: DiscountSpec, quad: QuadratureConfig) -> Result<Self> {
        discount.validate()?;
        Ok(Self {
            params,
            discount,
            quad,
            exit: Fundamentals::new(params, discount.r, quad)?,
            entry: Fundamentals::new(params, discount.r_hat, quad)?,
        })
    }

    pub fn l_star(&self) -> f64 {
        l_star(&self.params, &self.discount)
    }

    fn std(&self) -> f64 {
        self.params.stationary_std()
    }

    /// Optimal liquidation level: the root of `F(b) = (b - c) F'(b)` above
    /// `max(L*, c)`.
    pub fn solve_exit_threshold(&self) -> Result<f64> {
        let c = self.discount.c;
        let floor = self.l_star().max(c);
        let std = self.std();
        let mut resid = |b: f64| Ok(1.0 - (b - c) * self.exit.f_log_deriv(b)?);
        let (lo, hi) = expand_bracket(&mut resid, floor, std, floor + 50.0 * std, "exit threshold")?;
        find_root_with(&mut resid, lo, hi, price_tol(&self.params), "exit threshold")
            .map(|(b, _)| b)
    }

    /// Exit value for a given liquidation level.
    pub fn exit_value(&self, b_star: f64) -> Result<ExitValue> {
        ExitValue::new(self.exit, b_star, self.discount.c)
    }

    /// Optimal entry level for the exit value `v`: the root of
    /// `G^(d) (V'(d) - 1) = G^'(d) h(d)` below the break-even level `d_bar`.
    pub fn solve_entry_threshold(&self, v: &ExitValue, d_bar: f64) -> Result<f64> {
        let std = self.std();
        let c_hat = self.discount.c_hat;
        let eps = 1e-6 * std;
        let mut resid = |x: f64| {
            let h = v.v(x)? - x - c_hat;
            Ok(v.v_d1(x)? - 1.0 - self.entry.g_log_deriv(x)? * h)
        };
        let start = d_bar - eps;
        let first = (self.params.theta - 10.0 * std - start).min(-std);
        let limit = start + first - 200.0 * std;
        let (lo, hi) = expand_bracket(&mut resid, start, first, limit, "entry threshold")?;
        find_root_with(&mut resid, lo, hi, price_tol(&self.params), "entry threshold")
            .map(|(d, _)| d)
    }

    /// Roots describing the shape of the transformed payoffs.
    pub fn lemma_roots(&self, v: &ExitValue) -> Result<LemmaRoots> {
        let std = self.std();
        let (c, c_hat) = (self.discount.c, self.discount.c_hat);
        let (r, r_hat) = (self.discount.r, self.discount.r_hat);
        let ls = self.l_star();
        let tol = price_tol(&self.params);

        let mut x_resid = |x: f64| Ok(1.0 - (x - c) * self.exit.g_log_deriv(x)?);
        let top = c.min(ls);
        let (lo, hi) = expand_bracket(&mut x_resid, top, -std, top - 200.0 * std, "x_star")?;
        let x_star = find_root_with(&mut x_resid, lo, hi, tol, "x_star")?.0;

        let mut h_resid = |x: f64| Ok(v.v(x)? - x - c_hat);
        let b = v.b_star;
        let (lo, hi) = expand_bracket(&mut h_resid, b, -std, b - 200.0 * std, "d_bar")?;
        let d_bar = find_root_with(&mut h_resid, lo, hi, tol, "d_bar")?.0;

        let mu = self.params.mu;
        let theta = self.params.theta;
        let b_under = if r == r_hat {
            (mu * theta - r_hat * c_hat) / (mu + r_hat)
        } else {
            let mut g = |x: f64| Ok(self.generator_of_h(v, x)?);
            let start = ls.min(b);
            let step = if g(start)? > 0.0 { -std } else { std };
            let limit = if step < 0.0 { start - 200.0 * std } else { b };
            let (lo, hi) = expand_bracket(&mut g, start, step, limit, "b_under")?;
            find_root_with(&mut g, lo, hi, tol, "b_under")?.0
        };
        Ok(LemmaRoots {
            x_star,
            d_bar,
            b_under,
        })
    }

    /// `(L - r^) h` below `b*`, which reduces to
    /// `(r - r^) V + (mu + r^) x - mu theta + r^ c^`.
    pub fn generator_of_h(&self, v: &ExitValue, x: f64) -> Result<f64> {
        let d = &self.discount;
        let p = &self.params;
        let vx = if x < v.b_star { v.v(x)? } else { x - d.c };
        let gen_v = if x < v.b_star {
            (d.r - d.r_hat) * vx
        } else {
            p.mu * (p.theta - x) - d.r_hat * vx
        };
        Ok(gen_v + (p.mu + d.r_hat) * x - p.mu * p.theta + d.r_hat * d.c_hat)
    }

    /// Solve both thresholds and the supporting roots.
    pub fn solve(&self) -> Result<OptimalTiming> {
        let b_star = self.solve_exit_threshold()?;
        let v = self.exit_value(b_star)?;
        let roots = self.lemma_roots(&v)?;
        let d_star = self.solve_entry_threshold(&v, roots.d_bar)?;
        if !(d_star < roots.d_bar && roots.d_bar < b_star) {
            return Err(Error::Ordering {
                what: "d* < d_bar < b*",
            });
        }
        let j = EntryValue::new(self.entry, v, d_star, self.discount.c_hat)?;
        Ok(OptimalTiming {
            problem: *self,
            solution: ThresholdSolution {
                b_star,
                d_star,
                l_star: self.l_star(),
                x_star: roots.x_star,
                d_bar: roots.d_bar,
                b_under: roots.b_under,
            },
            exit_value: v,
            entry_value: j,
        })
    }
}

/// `x*`, `d_bar` and `b_under`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LemmaRoots {
    /// Root of `G(x) - (x - c) G'(x)`; below it the transformed exit payoff
    /// decreases.
    pub x_star: f64,
    /// Break-even level, `h(d_bar) = 0`.
    pub d_bar: f64,
    /// Root of `(L - r^) h`; the transformed entry payoff is concave below
    /// `psi^(b_under)` and convex above.
    pub b_under: f64,
}

/// Thresholds without stop-loss.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ThresholdSolution {
    pub b_star: f64,
    pub d_star: f64,
    pub l_star: f64,
    pub x_star: f64,
    pub d_bar: f64,
    pub b_under: f64,
}

/// `V` for a fixed liquidation level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExitValue {
    pub b_star: f64,
    pub c: f64,
    ln_f_b: f64,
    fund: Fundamentals,
}

impl ExitValue {
    pub fn new(fund: Fundamentals, b_star: f64, c: f64) -> Result<Self> {
        Ok(Self {
            b_star,
            c,
            ln_f_b: fund.ln_f(b_star)?,
            fund,
        })
    }

    pub fn v(&self, x: f64) -> Result<f64> {
        if x >= self.b_star {
            return Ok(x - self.c);
        }
        Ok((self.b_star - self.c) * libm::exp(self.fund.ln_f(x)? - self.ln_f_b))
    }

    pub fn v_d1(&self, x: f64) -> Result<f64> {
        if x >= self.b_star {
            return Ok(1.0);
        }
        Ok((self.b_star - self.c) * libm::exp(self.fund.ln_f_d1(x)? - self.ln_f_b))
    }

    pub fn v_d2(&self, x: f64) -> Result<f64> {
        if x >= self.b_star {
            return Ok(0.0);
        }
        Ok((self.b_star - self.c) * libm::exp(self.fund.ln_f_d2(x)? - self.ln_f_b))
    }

    /// The concave majorant in transformed coordinates: linear through the
    /// origin up to `psi(b*)`, then the transformed payoff `(x - c)/G(x)`.
    pub fn transformed(&self, y: f64) -> Result<f64> {
        let yb = self.fund.psi(self.b_star)?;
        if y < yb {
            Ok(y * (self.b_star - self.c) * libm::exp(-self.ln_f_b))
        } else {
            let x = self.fund.psi_inverse(y)?;
            Ok((x - self.c) * libm::exp(-self.fund.ln_g(x)?))
        }
    }
}

/// `J` for a fixed entry level and exit value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntryValue {
    pub d_star: f64,
    pub c_hat: f64,
    h_d: f64,
    ln_g_d: f64,
    fund: Fundamentals,
    exit: ExitValue,
}

impl EntryValue {
    pub fn new(fund: Fundamentals, exit: ExitValue, d_star: f64, c_hat: f64) -> Result<Self> {
        Ok(Self {
            d_star,
            c_hat,
            h_d: exit.v(d_star)? - d_star - c_hat,
            ln_g_d: fund.ln_g(d_star)?,
            fund,
            exit,
        })
    }

    /// `h(x) = V(x) - x - c^`.
    pub fn h(&self, x: f64) -> Result<f64> {
        Ok(self.exit.v(x)? - x - self.c_hat)
    }

    pub fn j(&self, x: f64) -> Result<f64> {
        if x <= self.d_star {
            return self.h(x);
        }
        Ok(self.h_d * libm::exp(self.fund.ln_g(x)? - self.ln_g_d))
    }

    pub fn j_d1(&self, x: f64) -> Result<f64> {
        if x <= self.d_star {
            return Ok(self.exit.v_d1(x)? - 1.0);
        }
        Ok(-self.h_d * libm::exp(self.fund.ln_abs_g_d1(x)? - self.ln_g_d))
    }

    pub fn j_d2(&self, x: f64) -> Result<f64> {
        if x <= self.d_star {
            return self.exit.v_d2(x);
        }
        Ok(self.h_d * libm::exp(self.fund.ln_g_d2(x)? - self.ln_g_d))
    }
}

/// A solved problem: thresholds plus the value functions they define.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimalTiming {
    pub problem: TradingProblem,
    pub solution: ThresholdSolution,
    pub exit_value: ExitValue,
    pub entry_value: EntryValue,
}

impl OptimalTiming {
    pub fn v(&self, x: f64) -> Result<f64> {
        self.exit_value.v(x)
    }

    pub fn j(&self, x: f64) -> Result<f64> {
        self.entry_value.j(x)
    }
}

pub fn solve_exit_threshold(p: &ModelParams, d: &DiscountSpec, q: &QuadratureConfig) -> Result<f64> {
    TradingProblem::new(*p, *d, *q)?.solve_exit_threshold()
}

pub fn solve_entry_threshold(
    p: &ModelParams,
    d: &DiscountSpec,
    q: &QuadratureConfig,
    b_star: f64,
) -> Result<f64> {
    let prob = TradingProblem::new(*p, *d, *q)?;
    let v = prob.exit_value(b_star)?;
    let roots = prob.lemma_roots(&v)?;
    prob.solve_entry_threshold(&v, roots.d_bar)
}

pub fn solve_thresholds(p: &ModelParams, d: &DiscountSpec, q: &QuadratureConfig) -> Result<OptimalTiming> {
    TradingProblem::new(*p, *d, *q)?.solve()
}

pub fn value_v(x: f64, sol: &ThresholdSolution, p: &ModelParams, d: &DiscountSpec, q: &QuadratureConfig) -> Result<f64> {
    TradingProblem::new(*p, *d, *q)?.exit_value(sol.b_star)?.v(x)
}

pub fn value_j(x: f64, sol: &ThresholdSolution, p: &ModelParams, d: &DiscountSpec, q: &QuadratureConfig) -> Result<f64> {
    let prob = TradingProblem::new(*p, *d, *q)?;
    let v = prob.exit_value(sol.b_star)?;
    EntryValue::new(prob.entry, v, sol.d_star, d.c_hat)?.j(x)
}

/// Thresholds when the spread is a Brownian motion with volatility `sigma`
/// (no mean reversion).
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BrownianThresholds {
    pub b_star: f64,
    pub d_star: f64,
}

/// `b* = c + sigma/sqrt(2r)`; `d*` solves
/// `(1 + sqrt(r^/r)) exp(sqrt(2r)/sigma (d - b*)) = sqrt(2r^)/sigma (d + c^) + 1`.
pub fn brownian_thresholds(sigma: f64, d: &DiscountSpec) -> Result<BrownianThresholds> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(crate::error::invalid("sigma", sigma, "must be positive and finite"));
    }
    d.validate()?;
    let b_star = d.c + sigma / libm::sqrt(2.0 * d.r);
    let d_star = find_root(
        |x| Ok(brownian_entry_residual(sigma, d, b_star, x)),
        b_star - brownian_left_reach(sigma, d, b_star),
        b_star,
        DEFAULT_XTOL * b_star.abs().max(1.0),
        "Brownian entry threshold",
    )?;
    Ok(BrownianThresholds { b_star, d_star })
}

fn brownian_left_reach(sigma: f64, d: &DiscountSpec, b_star: f64) -> f64 {
    // the linear term alone outweighs the bounded exponential term here
    let slope = libm::sqrt(2.0 * d.r_hat) / sigma;
    let width = (2.0 + libm::sqrt(d.r_hat / d.r)) / slope + (b_star + d.c_hat).abs();
    width + sigma
}

/// Left side minus right side of the Brownian entry equation.
pub fn brownian_entry_residual(sigma: f64, d: &DiscountSpec, b_star: f64, x: f64) -> f64 {
    let ratio = libm::sqrt(d.r_hat / d.r);
    (1.0 + ratio) * libm::exp(libm::sqrt(2.0 * d.r) / sigma * (x - b_star))
        - libm::sqrt(2.0 * d.r_hat) / sigma * (x + d.c_hat)
        - 1.0
}

/// Scaled residuals of `min{rV - LV, V - obstacle} = 0` at one grid point.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ViPoint {
    pub x: f64,
    /// `(rate V - LV)` over the size of its terms.
    pub generator: f64,
    /// `(V - obstacle)` over `max(|V|, |obstacle|, stationary std)`.
    pub obstacle: f64,
}

impl ViPoint {
    /// Distance from satisfying the complementarity conditions.
    pub fn violation(&self) -> f64 {
        let m = self.generator.min(self.obstacle).abs();
        m.max(-self.generator).max(-self.obstacle).max(0.0)
    }
}

/// Variational-inequality residuals of a sampled value function, with
/// derivatives from three-point differences on the grid. Points within two
/// grid cells of any entry in `kinks` are skipped, as are the grid ends.
pub fn vi_scaled_residuals<V, O>(
    x_grid: &[f64],
    params: &ModelParams,
    rate: f64,
    mut value: V,
    mut obstacle: O,
    kinks: &[f64],
) -> Result<Vec<ViPoint>>
where
    V: FnMut(f64) -> Result<f64>,
    O: FnMut(f64) -> Result<f64>,
{
    for i in 1..x_grid.len() {
        if !(x_grid[i] > x_grid[i - 1]) {
            return Err(Error::Unsorted { index: i });
        }
    }
    let vals: Vec<f64> = x_grid.iter().map(|&x| value(x)).collect::<Result<_>>()?;
    let n = x_grid.len();
    let near_kink = |i: usize| {
        kinks.iter().any(|&k| {
            // index of the first grid point at or above the kink
            let j = x_grid.partition_point(|&x| x < k);
            (i as isize - j as isize).abs() <= 2 || (i as isize - j as isize + 1).abs() <= 2
        })
    };
    let half_var = 0.5 * params.sigma * params.sigma;
    let std = params.stationary_std();
    let mut out = Vec::with_capacity(n);
    for i in 1..n.saturating_sub(1) {
        if near_kink(i) {
            continue;
        }
        let x = x_grid[i];
        let (h1, h2) = (x - x_grid[i - 1], x_grid[i + 1] - x);
        let (f0, f1, f2) = (vals[i - 1], vals[i], vals[i + 1]);
        let d1 = -h2 / (h1 * (h1 + h2)) * f0 + (h2 - h1) / (h1 * h2) * f1 + h1 / (h2 * (h1 + h2)) * f2;
        let d2 = 2.0 * (f0 / (h1 * (h1 + h2)) - f1 / (h1 * h2) + f2 / (h2 * (h1 + h2)));
        let drift = params.mu * (params.theta - x);
        let gen = rate * f1 - drift * d1 - half_var * d2;
        let gen_scale = (rate * f1).abs() + (drift * d1).abs() + (half_var * d2).abs();
        let obs = obstacle(x)?;
        let obs_scale = f1.abs().max(obs.abs()).max(std);
        out.push(ViPoint {
            x,
            generator: gen / gen_scale.max(f64::MIN_POSITIVE),
            obstacle: (f1 - obs) / obs_scale,
        });
    }
    Ok(out)
}

/// Residuals of both variational inequalities on a grid.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ViReport {
    pub exit: Vec<ViPoint>,
    pub entry: Vec<ViPoint>,
    pub max_exit_violation: f64,
    pub max_entry_violation: f64,
}

pub fn vi_residuals(x_grid: &[f64], timing: &OptimalTiming) -> Result<ViReport> {
    let prob = &timing.problem;
    let v = &timing.exit_value;
    let j = &timing.entry_value;
    let kinks = [timing.solution.b_star, timing.solution.d_star];
    let c = prob.discount.c;
    let exit = vi_scaled_residuals(
        x_grid,
        &prob.params,
        prob.discount.r,
        |x| v.v(x),
        |x| Ok(x - c),
        &kinks,
    )?;
    let entry = vi_scaled_residuals(
        x_grid,
        &prob.params,
        prob.discount.r_hat,
        |x| j.j(x),
        |x| j.h(x),
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

    fn fig_costs() -> DiscountSpec {
        DiscountSpec::symmetric(0.05, 0.05).unwrap()
    }

    fn solved() -> OptimalTiming {
        solve_thresholds(&gld(), &fig_costs(), &QuadratureConfig::default()).unwrap()
    }

    #[test]
    fn critical_level_closed_form() {
        let ls = l_star(&gld(), &fig_costs());
        let hand = (16.6677 * 0.5388 + 0.05 * 0.05) / (16.6677 + 0.05);
        assert!((ls - hand).abs() < 1e-15);
        assert!((ls - 0.537_338_076_410_032).abs() < 1e-12);
        let at_mean = DiscountSpec::symmetric(0.05, 0.5388).unwrap();
        assert!((l_star(&gld(), &at_mean) - 0.5388).abs() < 1e-15);
    }

    #[test]
    fn calibrated_thresholds_match_reference() {
        let t = solved();
        let s = t.solution;
        assert!((s.b_star - 0.593_709_434_644_141_8).abs() < 1e-9, "{}", s.b_star);
        assert!((s.d_star - 0.448_191_565_967_658_7).abs() < 1e-9, "{}", s.d_star);
        assert!(s.b_star > s.l_star.max(0.05));
        assert!(s.x_star < 0.05f64.min(s.l_star));
        assert!(s.d_star < s.d_bar && s.d_bar < s.b_star);
        assert!(s.b_under < s.l_star);
    }

    #[test]
    fn exit_equation_residual_is_small() {
        let t = solved();
        let b = t.solution.b_star;
        let e = &t.problem.exit;
        let resid = e.f(b).unwrap() - (b - 0.05) * e.f_d1(b).unwrap();
        assert!(resid.abs() < 1e-9 * e.f(b).unwrap());
    }

    #[test]
    fn entry_equation_residual_is_small() {
        let t = solved();
        let d = t.solution.d_star;
        let ghat = &t.problem.entry;
        let v = &t.exit_value;
        let lhs = ghat.g(d).unwrap() * (v.v_d1(d).unwrap() - 1.0);
        let rhs = ghat.g_d1(d).unwrap() * (v.v(d).unwrap() - d - 0.05);
        assert!((lhs - rhs).abs() <= 1e-8 * lhs.abs().max(rhs.abs()));
    }

    #[test]
    fn value_branches() {
        let t = solved();
        let b = t.solution.b_star;
        assert_eq!(t.v(b + 0.1).unwrap(), b + 0.1 - 0.05);
        let below = b - 1e-3;
        assert!(t.v(below).unwrap() > below - 0.05);
        let d = t.solution.d_star;
        let x = d - 0.01;
        assert_eq!(t.j(x).unwrap(), t.v(x).unwrap() - x - 0.05);
        // G^ decays only like a power of x here, so J falls slowly
        let far = t.j(t.problem.params.theta + 1.0).unwrap();
        assert!(far > 0.0 && far < t.j(d + 0.01).unwrap());
        assert!(t.j(b).unwrap() > 0.0);
    }

    #[test]
    fn transformed_value_reproduces_v() {
        let t = solved();
        let e = &t.problem.exit;
        let p = gld();
        for i in 0..41 {
            let x = p.theta + p.stationary_std() * (-5.0 + 0.25 * i as f64);
            let w = t.exit_value.transformed(e.psi(x).unwrap()).unwrap();
            let v = e.g(x).unwrap() * w;
            let direct = t.v(x).unwrap();
            assert!((v - direct).abs() <= 1e-9 * direct.abs().max(1e-3), "{x}: {v} vs {direct}");
        }
    }

    #[test]
    fn lemma_root_sign_patterns() {
        let t = solved();
        let prob = &t.problem;
        let s = t.solution;
        let std = gld().stationary_std();
        assert!(t.entry_value.h(s.d_bar).unwrap().abs() < 1e-10);
        let mut prev = f64::INFINITY;
        for i in 0..40 {
            let x = s.b_star - 8.0 * std + 0.2 * std * i as f64;
            if x >= s.b_star {
                break;
            }
            let h = t.entry_value.h(x).unwrap();
            assert!(h < prev);
            prev = h;
            let g = prob.generator_of_h(&t.exit_value, x).unwrap();
            if x < s.b_under - 1e-9 {
                assert!(g < 0.0);
            } else if x > s.b_under + 1e-9 {
                assert!(g > 0.0);
            }
        }
    }

    #[test]
    fn unequal_rates_lemma_root() {
        let d = DiscountSpec::new(0.3, 0.05, 0.02, 0.03).unwrap();
        let t = solve_thresholds(&gld(), &d, &QuadratureConfig::default()).unwrap();
        let g = t.problem.generator_of_h(&t.exit_value, t.solution.b_under).unwrap();
        assert!(g.abs() < 1e-9);
        assert!(t.solution.b_under < t.solution.l_star);
    }

    #[test]
    fn brownian_limit() {
        let d = DiscountSpec::new(0.05, 0.05, 0.02, 0.02).unwrap();
        let bt = brownian_thresholds(0.2, &d).unwrap();
        assert!((bt.b_star - (0.02 + 0.2 / libm::sqrt(0.1))).abs() < 1e-12);
        assert!((bt.b_star - 0.652_455_532_033_675_9).abs() < 1e-12);
        assert!(bt.d_star < bt.b_star);
        assert!(brownian_entry_residual(0.2, &d, bt.b_star, bt.d_star).abs() < 1e-10);
        assert!(DiscountSpec::new(0.05, 0.05, 0.02, -0.02).is_err());
    }

    #[test]
    fn vi_residuals_vanish() {
        let t = solved();
        let p = gld();
        let std = p.stationary_std();
        let grid: Vec<f64> = (0..2001).map(|i| p.theta - 6.0 * std + 12.0 * std * i as f64 / 2000.0).collect();
        let rep = vi_residuals(&grid, &t).unwrap();
        assert!(rep.max_exit_violation < 1e-4, "{}", rep.max_exit_violation);
        assert!(rep.max_entry_violation < 1e-4, "{}", rep.max_entry_violation);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]

        #[test]
        fn translation_shifts_exit_level(k in -1.0f64..1.0) {
            let q = QuadratureConfig::default();
            let d = fig_costs();
            let b0 = solve_exit_threshold(&gld(), &d, &q).unwrap();
            let shifted = d.with_exit_cost(d.c + k).with_entry_cost(d.c_hat - k);
            let b1 = solve_exit_threshold(&gld().shifted(k), &shifted, &q).unwrap();
            prop_assert!((b1 - b0 - k).abs() < 1e-9);
        }

        #[test]
        fn exit_level_increases_with_cost(c1 in -0.1f64..0.2, dc in 0.005f64..0.1) {
            let q = QuadratureConfig::default();
            let d = DiscountSpec::new(0.05, 0.05, c1, 0.2).unwrap();
            let b1 = solve_exit_threshold(&gld(), &d, &q).unwrap();
            let b2 = solve_exit_threshold(&gld(), &d.with_exit_cost(c1 + dc), &q).unwrap();
            prop_assert!(b2 > b1);
        }
    }
}
