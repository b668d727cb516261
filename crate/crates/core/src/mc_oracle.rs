//! Monte Carlo estimates of discounted first-passage payoffs, used to check
//! the analytic solutions independently.
//!
//! Paths are stepped with the exact OU transition. Each step consumes one
//! normal variate and one `u64` whose halves serve as uniforms for
//! Brownian-bridge crossing tests against an upper and a lower level, so the
//! random stream stays aligned across policies that differ only in their
//! levels (common random numbers). A detected passage puts the state exactly
//! on the level that was crossed.
//!
//! Path `i` draws from `ChaCha8Rng::seed_from_u64(seed)` on stream `i`. The
//! exit leg after an entry uses stream `i` of a second generator seeded with
//! `seed + EXIT_LEG_SEED_OFFSET`.

use alloc::vec::Vec;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{invalid, Error, Result};
use crate::params::{DiscountSpec, ModelParams};

/// Added to the seed for the exit leg that follows an entry.
pub const EXIT_LEG_SEED_OFFSET: u64 = 0x9E37_79B9_7F4A_7C15;

/// Simulation controls.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct McConfig {
    pub n_paths: u64,
    /// Time step; `None` means `1/(20 mu)`.
    #[cfg_attr(feature = "serde", serde(default))]
    pub dt: Option<f64>,
    /// Paths are cut at the horizon where `exp(-min(r, r_hat) T)` equals this.
    #[cfg_attr(feature = "serde", serde(default = "default_horizon_eps"))]
    pub horizon_eps: f64,
    pub seed: u64,
    /// Test for crossings between grid points with the Brownian bridge.
    #[cfg_attr(feature = "serde", serde(default = "default_bridge"))]
    pub bridge_correction: bool,
}

#[cfg(feature = "serde")]
fn default_horizon_eps() -> f64 {
    1e-6
}

#[cfg(feature = "serde")]
fn default_bridge() -> bool {
    true
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            n_paths: 100_000,
            dt: None,
            horizon_eps: 1e-6,
            seed: 0,
            bridge_correction: true,
        }
    }
}

impl McConfig {
    /// Step size for the given dynamics, checked against `1/(20 mu)`.
    pub fn step(&self, p: &ModelParams) -> Result<f64> {
        let max_dt = 1.0 / (20.0 * p.mu);
        let dt = self.dt.unwrap_or(max_dt);
        if !(dt > 0.0 && dt <= max_dt * (1.0 + 1e-12)) {
            return Err(invalid("dt", dt, "must lie in (0, 1/(20 mu)]"));
        }
        Ok(dt)
    }

    pub fn validate(&self, p: &ModelParams) -> Result<()> {
        self.step(p)?;
        if !(self.horizon_eps > 0.0 && self.horizon_eps < 1.0) {
            return Err(invalid("horizon_eps", self.horizon_eps, "must lie in (0, 1)"));
        }
        Ok(())
    }

    /// `T` with `exp(-rate T) = horizon_eps`.
    pub fn horizon(&self, rate: f64) -> f64 {
        -libm::log(self.horizon_eps) / rate
    }
}

/// Mean and standard error of a simulated payoff.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct McEstimate {
    pub estimate: f64,
    pub std_error: f64,
    pub n_paths: u64,
    pub dt: f64,
    /// Bound on the error from cutting paths at the horizon.
    pub bias_bound: f64,
}

/// Entry band, liquidation level and optional stop-loss of a trading policy.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PolicySpec {
    /// Lower end of the entry band (`a`); absent means unbounded below.
    pub entry_lower: Option<f64>,
    /// Upper end of the entry band (`d`); absent means the position is
    /// already held.
    pub entry_upper: Option<f64>,
    /// Liquidate on reaching this level from below (`b`).
    pub exit_upper: f64,
    /// Liquidate on reaching this level from above (`L`).
    pub stop_loss: Option<f64>,
}

impl PolicySpec {
    /// Hold and exit at `b`.
    pub fn exit_at(b: f64) -> Self {
        Self {
            entry_lower: None,
            entry_upper: None,
            exit_upper: b,
            stop_loss: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = |v: Option<f64>| v.map_or(true, f64::is_finite);
        if !self.exit_upper.is_finite() || !finite(self.entry_lower) || !finite(self.entry_upper) || !finite(self.stop_loss) {
            return Err(invalid("policy", f64::NAN, "levels must be finite"));
        }
        // equality means liquidating at once from every price
        if let Some(l) = self.stop_loss {
            if l > self.exit_upper {
                return Err(Error::Ordering {
                    what: "stop_loss <= exit_upper",
                });
            }
        }
        match (self.entry_lower, self.entry_upper) {
            (Some(_), None) => {
                return Err(invalid("entry_lower", f64::NAN, "needs an entry_upper"));
            }
            (Some(a), Some(d)) if a > d => {
                return Err(Error::Ordering {
                    what: "entry_lower <= entry_upper",
                });
            }
            _ => {}
        }
        if let Some(d) = self.entry_upper {
            if d > self.exit_upper {
                return Err(Error::Ordering {
                    what: "entry_upper <= exit_upper",
                });
            }
        }
        Ok(())
    }
}

/// Runs a per-path closure for path indices `0..n` and returns results in
/// index order.
pub trait PathExecutor {
    fn run<T, F>(&self, n: u64, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(u64) -> T + Sync + Send;
}

/// Runs paths one after another on the calling thread.
#[derive(Debug, Clone, Copy, Default)]
pub struct Serial;

impl PathExecutor for Serial {
    fn run<T, F>(&self, n: u64, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(u64) -> T + Sync + Send,
    {
        (0..n).map(f).collect()
    }
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// `(mean, standard error)` of a sample.
pub fn mean_and_se(xs: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let mut s = CompensatedSum::default();
    let mut n = 0usize;
    for x in xs.clone() {
        s.add(x);
        n += 1;
    }
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = s.value() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let mut ss = CompensatedSum::default();
    for x in xs {
        ss.add((x - mean) * (x - mean));
    }
    let var = ss.value() / (n - 1) as f64;
    (mean, libm::sqrt(var / n as f64))
}

/// Sub-steps a step is split into when a level is within reach of it.
const SUBSTEPS: usize = 4;

/// Exact one-step OU transition plus bridge variance.
#[derive(Debug, Clone, Copy)]
pub struct Stepper {
    pub theta: f64,
    pub dt: f64,
    decay: f64,
    sd: f64,
    bridge_var: f64,
    sub_var: f64,
    /// Midpoint weight and spread of the OU bridge over `dt` and `dt / 2`.
    halving: [(f64, f64); 2],
    bridge: bool,
}

/// `e^{mu t}(X - theta)` is a Brownian motion on the clock
/// `sigma^2 (e^{2 mu t} - 1) / (2 mu)`; over a step of length `h` a fixed
/// level becomes a nearly straight line there, which gives this effective
/// variance.
fn bridge_variance(p: &ModelParams, h: f64) -> f64 {
    p.sigma * p.sigma * libm::sinh(p.mu * h) / p.mu
}

/// OU bridge midpoint over a span `h`: `theta + w (a + b - 2 theta) + sd Z`.
fn halving(p: &ModelParams, h: f64) -> (f64, f64) {
    let half = 0.5 * p.mu * h;
    let w = 0.5 / libm::cosh(half);
    let sd = p.sigma * libm::sqrt(libm::tanh(half) / (2.0 * p.mu));
    (w, sd)
}

impl Stepper {
    pub fn new(p: &ModelParams, dt: f64, bridge: bool) -> Self {
        let decay = libm::exp(-p.mu * dt);
        let var = p.sigma * p.sigma * -libm::expm1(-2.0 * p.mu * dt) / (2.0 * p.mu);
        Self {
            theta: p.theta,
            dt,
            decay,
            sd: libm::sqrt(var),
            bridge_var: bridge_variance(p, dt),
            sub_var: bridge_variance(p, dt / SUBSTEPS as f64),
            halving: [halving(p, dt), halving(p, 0.5 * dt)],
            bridge,
        }
    }

    /// Next state and two uniforms in (0, 1).
    #[inline]
    pub fn step<R: RngCore>(&self, x: f64, rng: &mut R) -> (f64, f64, f64) {
        let z: f64 = StandardNormal.sample(rng);
        let bits = rng.next_u64();
        const SCALE: f64 = 1.0 / 4_294_967_296.0;
        let u1 = ((bits >> 32) as f64 + 0.5) * SCALE;
        let u2 = ((bits & 0xFFFF_FFFF) as f64 + 0.5) * SCALE;
        (self.theta + (x - self.theta) * self.decay + self.sd * z, u1, u2)
    }

    /// Exponent of the probability that a bridge with variance `var` from
    /// `x` to `y` touched `level`; infinite when out of reach.
    #[inline]
    fn touch_exponent(x: f64, y: f64, level: f64, var: f64) -> f64 {
        let e = 2.0 * (level - x) * (level - y) / var;
        // below the smallest uniform in use
        if e > 36.0 {
            f64::INFINITY
        } else {
            e
        }
    }

    /// Whether a whole step from `x` to `y` could have touched `level`.
    #[inline]
    fn in_reach(&self, x: f64, y: f64, level: f64) -> bool {
        self.bridge && Self::touch_exponent(x, y, level, self.bridge_var).is_finite()
    }

    /// OU bridge values at the sub-step points between `x` and `y`,
    /// endpoints included, from normals hashed out of `noise`.
    fn refine(&self, x: f64, y: f64, noise: &mut Noise) -> [f64; SUBSTEPS + 1] {
        let (z1, z2) = noise.normals();
        let (z3, _) = noise.normals();
        let mid = |a: f64, b: f64, (w, sd): (f64, f64), z: f64| self.theta + w * (a + b - 2.0 * self.theta) + sd * z;
        let m = mid(x, y, self.halving[0], z1);
        [x, mid(x, m, self.halving[1], z2), m, mid(m, y, self.halving[1], z3), y]
    }

    /// First touch of `level` from `x` on a refined step starting at `t`,
    /// as the time of the touch.
    fn first_touch(&self, t: f64, pts: &[f64; SUBSTEPS + 1], level: f64, up: bool, noise: &mut Noise) -> Option<f64> {
        let h = self.dt / SUBSTEPS as f64;
        for j in 0..SUBSTEPS {
            let (a, b) = (pts[j], pts[j + 1]);
            let crossed = if up { b >= level } else { b <= level };
            let e = Self::touch_exponent(a, b, level, self.sub_var);
            if crossed || (e.is_finite() && noise.uniform() < libm::exp(-e)) {
                return Some(touch_time(t + j as f64 * h, h, self.sub_var, a, b, level, noise));
            }
        }
        None
    }
}

/// Time of the first touch of `level` by a bridge of variance `var` from
/// `x` to `y` over `[t, t + h]`, given that it touched. On the bridge's own
/// clock the touch time is `h U / (h + U)` with
/// `U ~ IG(a h / b, a^2 h / var)`, `a = |level - x|`, `b = |y - level|`; the
/// same law holds whether or not `y` is past the level.
fn touch_time(t: f64, h: f64, var: f64, x: f64, y: f64, level: f64, noise: &mut Noise) -> f64 {
    let a = libm::fabs(level - x);
    let b = libm::fabs(y - level);
    if a == 0.0 {
        return t;
    }
    if b == 0.0 {
        return t + h;
    }
    let (z, _) = noise.normals();
    let m = a * h / b;
    let lambda = a * a * h / var;
    let q = m * z * z;
    // smaller root of the inverse-Gaussian quadratic, cancellation-free
    let root = 2.0 * lambda * m / (2.0 * lambda + q + libm::sqrt(q * (4.0 * lambda + q)));
    let u = if noise.uniform() <= m / (m + root) { root } else { m * m / root };
    t + h / (1.0 + h / u)
}

/// Extra randomness inside a step, hashed from the step's own uniforms and
/// a tag, so the path generator is never drawn from more than once a step.
struct Noise(u64);

impl Noise {
    fn new(seed: (f64, f64), tag: u64) -> Self {
        let mut state = seed.0.to_bits() ^ seed.1.to_bits().rotate_left(32);
        let mut tag = tag;
        state ^= splitmix64(&mut tag);
        Noise(state)
    }

    fn uniform(&mut self) -> f64 {
        ((splitmix64(&mut self.0) >> 11) as f64 + 0.5) * (1.0 / 9_007_199_254_740_992.0)
    }

    /// Two independent standard normals (Box-Muller).
    fn normals(&mut self) -> (f64, f64) {
        let radius = libm::sqrt(-2.0 * libm::log(self.uniform()));
        let angle = 2.0 * core::f64::consts::PI * self.uniform();
        (radius * libm::cos(angle), radius * libm::sin(angle))
    }
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Which side of a pair of levels a path left through.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Side {
    Upper,
    Lower,
    /// Still inside at the horizon.
    Truncated,
}

/// A first passage: side, time, and the state at that time (the level
/// itself for a detected crossing).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Passage {
    pub side: Side,
    pub t: f64,
    pub x: f64,
}

/// First passage out of `(lower, upper)` for several level pairs along one
/// shared path. `observe` sees every simulated `(t, x)`, starting with the
/// initial state.
pub fn first_passages<R, O>(
    x0: f64,
    levels: &[(Option<f64>, Option<f64>)],
    stepper: &Stepper,
    horizon: f64,
    rng: &mut R,
    mut observe: O,
) -> Vec<Passage>
where
    R: RngCore,
    O: FnMut(f64, f64),
{
    let mut out: Vec<Option<Passage>> = levels
        .iter()
        .map(|&(lo, hi)| {
            if hi.is_some_and(|u| x0 >= u) {
                Some(Passage { side: Side::Upper, t: 0.0, x: x0 })
            } else if lo.is_some_and(|l| x0 <= l) {
                Some(Passage { side: Side::Lower, t: 0.0, x: x0 })
            } else {
                None
            }
        })
        .collect();
    let mut pending = out.iter().filter(|o| o.is_none()).count();
    observe(0.0, x0);
    let dt = stepper.dt;
    let steps = libm::ceil(horizon / dt) as u64;
    let mut x = x0;
    let mut k = 0u64;
    while pending > 0 && k < steps {
        let t = k as f64 * dt;
        let (y, u_hi, u_lo) = stepper.step(x, rng);
        let in_play = |&(lo, hi): &(Option<f64>, Option<f64>)| {
            hi.is_some_and(|u| y >= u || stepper.in_reach(x, y, u))
                || lo.is_some_and(|l| y <= l || stepper.in_reach(x, y, l))
        };
        let near = out.iter().zip(levels).any(|(slot, lv)| slot.is_none() && in_play(lv));
        if near {
            if stepper.bridge {
                // the path between grid points is shared by every level pair
                let pts = stepper.refine(x, y, &mut Noise::new((u_hi, u_lo), 0));
                for (slot, &(lo, hi)) in out.iter_mut().zip(levels) {
                    if slot.is_some() {
                        continue;
                    }
                    let touch = |level: f64, up: bool| {
                        let mut noise = Noise::new((u_hi, u_lo), level.to_bits() ^ up as u64);
                        stepper.first_touch(t, &pts, level, up, &mut noise).map(|tt| (tt, level))
                    };
                    let upper = hi.and_then(|u| touch(u, true)).map(|(tt, lv)| (Side::Upper, tt, lv));
                    let lower = lo.and_then(|l| touch(l, false)).map(|(tt, lv)| (Side::Lower, tt, lv));
                    let first = match (upper, lower) {
                        (Some(a), Some(b)) => Some(if b.1 < a.1 { b } else { a }),
                        (a, b) => a.or(b),
                    };
                    if let Some((side, tt, level)) = first {
                        *slot = Some(Passage { side, t: tt, x: level });
                        pending -= 1;
                    }
                }
            } else {
                for (slot, &(lo, hi)) in out.iter_mut().zip(levels) {
                    if slot.is_some() {
                        continue;
                    }
                    let hit = match (hi.filter(|&u| y >= u), lo.filter(|&l| y <= l)) {
                        (Some(u), _) => Some((Side::Upper, u)),
                        (None, Some(l)) => Some((Side::Lower, l)),
                        _ => None,
                    };
                    if let Some((side, level)) = hit {
                        let tt = t + dt * (level - x) / (y - x);
                        *slot = Some(Passage { side, t: tt, x: level });
                        pending -= 1;
                    }
                }
            }
        }
        x = y;
        k += 1;
        observe(k as f64 * dt, x);
    }
    let t_end = k as f64 * dt;
    out.into_iter()
        .map(|o| {
            o.unwrap_or(Passage {
                side: Side::Truncated,
                t: t_end,
                x,
            })
        })
        .collect()
}

fn path_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Discounted payoff of a single path and the part of it owed to
/// truncation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathPayoff {
    pub value: f64,
    pub truncation: f64,
}

/// `E[exp(-r tau)]` for the first passage `tau` of `kappa`.
pub fn estimate_hitting_laplace(x0: f64, kappa: f64, r: f64, p: &ModelParams, cfg: &McConfig) -> Result<McEstimate> {
    estimate_hitting_laplace_with(x0, kappa, r, p, cfg, &Serial)
}

pub fn estimate_hitting_laplace_with<E: PathExecutor>(
    x0: f64,
    kappa: f64,
    r: f64,
    p: &ModelParams,
    cfg: &McConfig,
    exec: &E,
) -> Result<McEstimate> {
    p.validate()?;
    cfg.validate(p)?;
    if !(r > 0.0 && r.is_finite()) {
        return Err(invalid("r", r, "discount rate must be positive"));
    }
    let dt = cfg.step(p)?;
    let stepper = Stepper::new(p, dt, cfg.bridge_correction);
    let horizon = cfg.horizon(r);
    let levels = if x0 <= kappa {
        [(None, Some(kappa))]
    } else {
        [(Some(kappa), None)]
    };
    let payoffs = exec.run(cfg.n_paths, |i| {
        let mut rng = path_rng(cfg.seed, i);
        let hit = first_passages(x0, &levels, &stepper, horizon, &mut rng, |_, _| {})[0];
        match hit.side {
            Side::Truncated => PathPayoff {
                value: 0.0,
                truncation: libm::exp(-r * hit.t),
            },
            _ => PathPayoff {
                value: libm::exp(-r * hit.t),
                truncation: 0.0,
            },
        }
    });
    Ok(summarise(&payoffs, cfg.n_paths, dt))
}

fn summarise(payoffs: &[PathPayoff], n: u64, dt: f64) -> McEstimate {
    let (estimate, std_error) = mean_and_se(payoffs.iter().map(|p| p.value));
    let (bias, _) = mean_and_se(payoffs.iter().map(|p| p.truncation));
    McEstimate {
        estimate,
        std_error,
        n_paths: n,
        dt,
        bias_bound: if payoffs.is_empty() { 0.0 } else { bias },
    }
}

/// Shared pieces of a policy simulation.
struct PolicySim<'a> {
    p: &'a ModelParams,
    d: &'a DiscountSpec,
    stepper: Stepper,
    horizon: f64,
    seed: u64,
}

impl PolicySim<'_> {
    fn new<'a>(p: &'a ModelParams, d: &'a DiscountSpec, cfg: &McConfig) -> Result<PolicySim<'a>> {
        p.validate()?;
        d.validate()?;
        cfg.validate(p)?;
        let dt = cfg.step(p)?;
        Ok(PolicySim {
            p,
            d,
            stepper: Stepper::new(p, dt, cfg.bridge_correction),
            horizon: cfg.horizon(d.r.min(d.r_hat)),
            seed: cfg.seed,
        })
    }

    /// Exit leg from `x0` for several `(stop, take-profit)` pairs sharing
    /// one path. Truncated legs liquidate at the horizon.
    fn exit_leg<O: FnMut(f64, f64)>(
        &self,
        x0: f64,
        levels: &[(Option<f64>, Option<f64>)],
        rng: &mut ChaCha8Rng,
        observe: O,
    ) -> (Vec<PathPayoff>, Vec<Passage>) {
        let c = self.d.c;
        let r = self.d.r;
        let hits = first_passages(x0, levels, &self.stepper, self.horizon, rng, observe);
        let pays = hits
            .iter()
            .map(|h| {
                let disc = libm::exp(-r * h.t);
                PathPayoff {
                    value: disc * (h.x - c),
                    truncation: if h.side == Side::Truncated {
                        disc * ((h.x - c).abs() + (h.x - self.p.theta).abs() + self.p.stationary_std())
                    } else {
                        0.0
                    },
                }
            })
            .collect();
        (pays, hits)
    }

    /// Entry leg: wait until the price is inside `[a, d]`, then run the
    /// exit leg on a fresh stream. One band per candidate.
    fn entry_then_exit(
        &self,
        x0: f64,
        bands: &[(Option<f64>, f64)],
        stop: Option<f64>,
        exit_upper: f64,
        index: u64,
    ) -> Vec<PathPayoff> {
        let mut rng = path_rng(self.seed, index);
        // a price below `a` enters on reaching `a` from below; a price above
        // `d` on reaching `d` from above
        let levels: Vec<(Option<f64>, Option<f64>)> = bands
            .iter()
            .map(|&(a, d)| {
                if a.is_some_and(|a| x0 < a) {
                    (None, a)
                } else if x0 > d {
                    (Some(d), None)
                } else {
                    (None, Some(x0))
                }
            })
            .collect();
        let entries = first_passages(x0, &levels, &self.stepper, self.horizon, &mut rng, |_, _| {});
        let exit_levels = [(stop, Some(exit_upper))];
        entries
            .iter()
            .map(|e| {
                let disc = libm::exp(-self.d.r_hat * e.t);
                if e.side == Side::Truncated {
                    return PathPayoff {
                        value: 0.0,
                        truncation: disc * (e.x.abs() + exit_upper.abs() + self.d.c.abs() + self.d.c_hat.abs()),
                    };
                }
                let mut exit_rng = path_rng(self.seed.wrapping_add(EXIT_LEG_SEED_OFFSET), index);
                let (pay, _) = self.exit_leg(e.x, &exit_levels, &mut exit_rng, |_, _| {});
                PathPayoff {
                    value: disc * (pay[0].value - e.x - self.d.c_hat),
                    truncation: disc * pay[0].truncation,
                }
            })
            .collect()
    }

    fn policy_payoff(&self, x0: f64, policy: &PolicySpec, index: u64) -> PathPayoff {
        match policy.entry_upper {
            Some(d) => self.entry_then_exit(x0, &[(policy.entry_lower, d)], policy.stop_loss, policy.exit_upper, index)[0],
            None => {
                let mut rng = path_rng(self.seed, index);
                self.exit_leg(x0, &[(policy.stop_loss, Some(policy.exit_upper))], &mut rng, |_, _| {}).0[0]
            }
        }
    }
}

/// Expected discounted payoff of following `policy` from `x0`: wait for
/// entry (discounted at `r_hat`) if the policy has an entry band, then hold
/// until the take-profit or stop-loss level (discounted at `r`).
pub fn estimate_policy_value(
    x0: f64,
    policy: &PolicySpec,
    d: &DiscountSpec,
    p: &ModelParams,
    cfg: &McConfig,
) -> Result<McEstimate> {
    estimate_policy_value_with(x0, policy, d, p, cfg, &Serial)
}

pub fn estimate_policy_value_with<E: PathExecutor>(
    x0: f64,
    policy: &PolicySpec,
    d: &DiscountSpec,
    p: &ModelParams,
    cfg: &McConfig,
    exec: &E,
) -> Result<McEstimate> {
    policy.validate()?;
    let sim = PolicySim::new(p, d, cfg)?;
    let payoffs = exec.run(cfg.n_paths, |i| sim.policy_payoff(x0, policy, i));
    Ok(summarise(&payoffs, cfg.n_paths, sim.stepper.dt))
}

/// One simulated step of a traced policy path.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TracePoint {
    pub t: f64,
    pub x: f64,
    pub event: TraceEvent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum TraceEvent {
    None,
    Entry,
    Exit,
    StopLoss,
    Horizon,
}

/// The full path of policy simulation `index`, with entry and exit marked.
/// Uses the same random streams as [`estimate_policy_value`].
pub fn trace_policy_path(
    x0: f64,
    policy: &PolicySpec,
    d: &DiscountSpec,
    p: &ModelParams,
    cfg: &McConfig,
    index: u64,
) -> Result<Vec<TracePoint>> {
    policy.validate()?;
    let sim = PolicySim::new(p, d, cfg)?;
    let mut trace: Vec<TracePoint> = Vec::new();
    let mut t_offset = 0.0;
    let mut start = x0;
    let mut exit_rng = path_rng(sim.seed, index);
    if let Some(d_up) = policy.entry_upper {
        let mut rng = path_rng(sim.seed, index);
        let level = if policy.entry_lower.is_some_and(|a| x0 < a) {
            (None, policy.entry_lower)
        } else if x0 > d_up {
            (Some(d_up), None)
        } else {
            (None, Some(x0))
        };
        let hit = first_passages(x0, &[level], &sim.stepper, sim.horizon, &mut rng, |t, x| {
            trace.push(TracePoint { t, x, event: TraceEvent::None })
        })[0];
        // drop steps simulated after the passage inside the last interval
        trace.retain(|pt| pt.t < hit.t);
        if hit.side == Side::Truncated {
            trace.push(TracePoint { t: hit.t, x: hit.x, event: TraceEvent::Horizon });
            return Ok(trace);
        }
        trace.push(TracePoint { t: hit.t, x: hit.x, event: TraceEvent::Entry });
        t_offset = hit.t;
        start = hit.x;
        exit_rng = path_rng(sim.seed.wrapping_add(EXIT_LEG_SEED_OFFSET), index);
    }
    let mut leg: Vec<TracePoint> = Vec::new();
    let (_, hits) = sim.exit_leg(start, &[(policy.stop_loss, Some(policy.exit_upper))], &mut exit_rng, |t, x| {
        leg.push(TracePoint { t: t_offset + t, x, event: TraceEvent::None })
    });
    let hit = hits[0];
    let end = t_offset + hit.t;
    leg.retain(|pt| pt.t < end);
    if policy.entry_upper.is_some() && !leg.is_empty() {
        // the entry point is already recorded
        leg.remove(0);
    }
    trace.extend(leg);
    let event = match hit.side {
        Side::Upper => TraceEvent::Exit,
        Side::Lower => TraceEvent::StopLoss,
        Side::Truncated => TraceEvent::Horizon,
    };
    trace.push(TracePoint { t: end, x: hit.x, event });
    Ok(trace)
}

/// Which threshold a brute-force grid search varies.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "mode", rename_all = "snake_case"))]
pub enum ArgmaxMode {
    /// Candidates are take-profit levels; no stop-loss.
    Exit,
    /// Candidates are take-profit levels with a fixed stop-loss.
    ExitStopLoss { stop_loss: f64 },
    /// Candidates are upper entry levels; exit policy fixed. A candidate
    /// below `entry_lower` uses itself as the lower end.
    Entry {
        exit_upper: f64,
        stop_loss: Option<f64>,
        entry_lower: Option<f64>,
    },
    /// Candidates are lower entry levels; entry top and exit fixed. A
    /// candidate above `entry_upper` uses itself as the top.
    EntryLower {
        entry_upper: f64,
        exit_upper: f64,
        stop_loss: Option<f64>,
    },
}

/// Result of a common-random-numbers grid search.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ArgmaxReport {
    pub grid: Vec<f64>,
    pub estimates: Vec<McEstimate>,
    pub best_level: f64,
    pub best_index: usize,
    pub analytic_level: Option<f64>,
    pub analytic_estimate: Option<McEstimate>,
    /// Standard error of (grid max - analytic-level estimate) from paired paths.
    pub gap_std_error: Option<f64>,
    /// `|best_level - analytic_level| <= grid step`.
    pub within_one_step: Option<bool>,
    /// Grid max exceeds the analytic-level estimate by at most 2 SE.
    pub within_two_se: Option<bool>,
}

impl ArgmaxReport {
    /// Analytic level passes if either criterion holds; `true` with no
    /// analytic level.
    pub fn passed(&self) -> bool {
        self.within_one_step.unwrap_or(true) || self.within_two_se.unwrap_or(false)
    }
}

/// Evaluate every grid level (and `analytic`, if given) on the same paths
/// and return the best one.
pub fn grid_argmax_check(
    x0: f64,
    grid: &[f64],
    d: &DiscountSpec,
    p: &ModelParams,
    cfg: &McConfig,
    mode: ArgmaxMode,
    analytic: Option<f64>,
) -> Result<ArgmaxReport> {
    grid_argmax_check_with(x0, grid, d, p, cfg, mode, analytic, &Serial)
}

#[allow(clippy::too_many_arguments)]
pub fn grid_argmax_check_with<E: PathExecutor>(
    x0: f64,
    grid: &[f64],
    d: &DiscountSpec,
    p: &ModelParams,
    cfg: &McConfig,
    mode: ArgmaxMode,
    analytic: Option<f64>,
    exec: &E,
) -> Result<ArgmaxReport> {
    if grid.is_empty() {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    if let Some(bad) = grid.iter().chain(analytic.iter()).find(|v| !v.is_finite()) {
        return Err(invalid("grid level", *bad, "must be finite"));
    }
    let sim = PolicySim::new(p, d, cfg)?;
    let mut levels: Vec<f64> = grid.to_vec();
    if let Some(a) = analytic {
        levels.push(a);
    }
    for &lv in &levels {
        let policy = match mode {
            ArgmaxMode::Exit => PolicySpec::exit_at(lv),
            ArgmaxMode::ExitStopLoss { stop_loss } => PolicySpec {
                stop_loss: Some(stop_loss),
                ..PolicySpec::exit_at(lv)
            },
            ArgmaxMode::Entry {
                exit_upper,
                stop_loss,
                entry_lower,
            } => PolicySpec {
                entry_lower: entry_lower.map(|a| a.min(lv)),
                entry_upper: Some(lv),
                exit_upper,
                stop_loss,
            },
            ArgmaxMode::EntryLower {
                entry_upper,
                exit_upper,
                stop_loss,
            } => PolicySpec {
                entry_lower: Some(lv),
                entry_upper: Some(entry_upper.max(lv)),
                exit_upper,
                stop_loss,
            },
        };
        policy.validate()?;
    }
    let per_path: Vec<Vec<PathPayoff>> = exec.run(cfg.n_paths, |i| match mode {
        ArgmaxMode::Exit | ArgmaxMode::ExitStopLoss { .. } => {
            let stop = match mode {
                ArgmaxMode::ExitStopLoss { stop_loss } => Some(stop_loss),
                _ => None,
            };
            let pairs: Vec<(Option<f64>, Option<f64>)> = levels.iter().map(|&b| (stop, Some(b))).collect();
            let mut rng = path_rng(sim.seed, i);
            sim.exit_leg(x0, &pairs, &mut rng, |_, _| {}).0
        }
        ArgmaxMode::Entry {
            exit_upper,
            stop_loss,
            entry_lower,
        } => {
            let bands: Vec<(Option<f64>, f64)> = levels.iter().map(|&d| (entry_lower.map(|a| a.min(d)), d)).collect();
            sim.entry_then_exit(x0, &bands, stop_loss, exit_upper, i)
        }
        ArgmaxMode::EntryLower {
            entry_upper,
            exit_upper,
            stop_loss,
        } => {
            let bands: Vec<(Option<f64>, f64)> = levels.iter().map(|&a| (Some(a), entry_upper.max(a))).collect();
            sim.entry_then_exit(x0, &bands, stop_loss, exit_upper, i)
        }
    });
    let dt = sim.stepper.dt;
    let column = |j: usize| -> Vec<PathPayoff> { per_path.iter().map(|row| row[j]).collect() };
    let estimates: Vec<McEstimate> = (0..grid.len()).map(|j| summarise(&column(j), cfg.n_paths, dt)).collect();
    let best_index = (0..grid.len()).fold(0, |b, j| {
        if estimates[j].estimate > estimates[b].estimate {
            j
        } else {
            b
        }
    });
    let best_level = grid[best_index];
    let (analytic_estimate, gap_std_error, within_one_step, within_two_se) = match analytic {
        None => (None, None, None, None),
        Some(a) => {
            let k = grid.len();
            let est = summarise(&column(k), cfg.n_paths, dt);
            let (gap, gap_se) = mean_and_se(per_path.iter().map(|row| row[best_index].value - row[k].value));
            let step = grid_step(grid);
            let near = (best_level - a).abs() <= step * (1.0 + 1e-9);
            (Some(est), Some(gap_se), Some(near), Some(gap <= 2.0 * gap_se))
        }
    };
    Ok(ArgmaxReport {
        grid: grid.to_vec(),
        estimates,
        best_level,
        best_index,
        analytic_level: analytic,
        analytic_estimate,
        gap_std_error,
        within_one_step,
        within_two_se,
    })
}

fn grid_step(grid: &[f64]) -> f64 {
    grid.windows(2).map(|w| (w[1] - w[0]).abs()).fold(0.0, f64::max)
}
