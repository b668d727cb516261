//! Fundamental solutions of `(sigma^2/2) u'' + mu (theta - x) u' = r u`.
//!
//! Both solutions reduce to one integral,
//!
//! ```text
//! I(s, a) = int_0^inf u^(s-1) exp(a u - u^2/2) du,   s = r/mu,  a = k (x - theta),
//! ```
//!
//! with `k = sqrt(2 mu) / sigma`: `F(x) = I(s, a)` and `G(x) = I(s, -a)`.
//! Differentiating under the integral gives `F^(n) = k^n I(s+n, a)` and
//! `G^(n) = (-k)^n I(s+n, -a)`.
//!
//! `I` is evaluated in log space. The piece on `[0, 1]` is taken in the
//! variable `v = u^s`, which turns the algebraic singularity at the origin
//! into the bounded integrand `exp(a v^(1/s) - v^(2/s)/2) / s`. The piece on
//! `[1, inf)` is truncated once the integrand has fallen far below its peak.

use crate::error::{Error, Result};
use crate::params::ModelParams;
use crate::quadrature::{integrate, QuadratureConfig};
use crate::roots::{expand_bracket, find_root_with, DEFAULT_XTOL};

/// Natural log of `I(s, a)`.
pub fn ln_base_integral(s: f64, a: f64, q: &QuadratureConfig) -> Result<f64> {
    if !(s > 0.0 && s.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "r/mu",
            value: s,
            reason: "must be positive and finite",
        });
    }
    if !a.is_finite() {
        return Err(Error::OutOfRange {
            what: "scaled distance from the mean",
            value: a,
        });
    }
    let head = ln_head(s, a, q)?;
    let tail = ln_tail(s, a, q)?;
    Ok(log_add(head, tail))
}

fn log_add(x: f64, y: f64) -> f64 {
    if x == f64::NEG_INFINITY {
        return y;
    }
    if y == f64::NEG_INFINITY {
        return x;
    }
    let (hi, lo) = if x >= y { (x, y) } else { (y, x) };
    hi + libm::log1p(libm::exp(lo - hi))
}

// Stationary point of (s-1) ln u + a u - u^2/2 on (0, inf), if any.
fn interior_peak(s: f64, a: f64) -> Option<f64> {
    let disc = a * a + 4.0 * (s - 1.0);
    if disc < 0.0 {
        return None;
    }
    let root = 0.5 * (a + libm::sqrt(disc));
    (root > 0.0).then_some(root)
}

fn ln_head(s: f64, a: f64, q: &QuadratureConfig) -> Result<f64> {
    if s < 1.0 {
        // u = v^(1/s); the exponent a u - u^2/2 peaks at u = clamp(a, 0, 1)
        let up = a.clamp(0.0, 1.0);
        let shift = a * up - 0.5 * up * up;
        let inv_s = 1.0 / s;
        // for small s the whole variation of the integrand is squeezed next
        // to v = 1; split at the images of fixed u so no panel can miss it
        let mut breaks = [0.0; 10];
        for (slot, u) in breaks.iter_mut().zip([1e-3, 0.01, 0.05, 0.1, 0.25, 0.5, 0.75]) {
            *slot = libm::pow(u, s);
        }
        let scale = 1.0 / a.abs().max(1.0);
        for (slot, m) in breaks[7..].iter_mut().zip([0.5, 2.0, 4.0]) {
            *slot = libm::pow((m * scale).min(1.0), s);
        }
        let res = integrate(
            |v: f64| {
                if v <= 0.0 {
                    return libm::exp(-shift);
                }
                let u = libm::exp(libm::log(v) * inv_s);
                libm::exp(a * u - 0.5 * u * u - shift)
            },
            0.0,
            1.0,
            &breaks,
            q,
        )?;
        Ok(shift - libm::log(s) + libm::log(res.value))
    } else {
        // integrand bounded on [0, 1]; concave log-integrand for s > 1
        let peak = interior_peak(s, a).unwrap_or(0.0).min(1.0);
        let phi = |u: f64| {
            if u <= 0.0 {
                if s == 1.0 {
                    0.0
                } else {
                    f64::NEG_INFINITY
                }
            } else {
                (s - 1.0) * libm::log(u) + a * u - 0.5 * u * u
            }
        };
        let shift = if peak > 0.0 { phi(peak) } else { phi(1.0).max(phi(0.0)) };
        let res = integrate(|u| libm::exp(phi(u) - shift), 0.0, 1.0, &[peak], q)?;
        Ok(shift + libm::log(res.value))
    }
}

fn ln_tail(s: f64, a: f64, q: &QuadratureConfig) -> Result<f64> {
    let phi = |u: f64| (s - 1.0) * libm::log(u) + a * u - 0.5 * u * u;
    let peak = interior_peak(s, a).map_or(1.0, |p| p.max(1.0));
    let top = phi(peak);
    let width = q.tail_width();
    let drop = 0.5 * width * width;
    let mut upper = peak + width;
    while phi(upper) - top > -drop {
        upper += width;
    }
    let res = integrate(
        |u| libm::exp(phi(u) - top),
        1.0,
        upper,
        &[peak, peak - 2.0, peak + 2.0],
        q,
    )?;
    Ok(top + libm::log(res.value))
}

/// The pair `(F, G)` for one discount rate, with the derived constants
/// `s = r/mu` and `k = sqrt(2 mu)/sigma` precomputed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fundamentals {
    pub params: ModelParams,
    pub rate: f64,
    pub quad: QuadratureConfig,
    s: f64,
    k: f64,
}

impl Fundamentals {
    pub fn new(params: ModelParams, rate: f64, quad: QuadratureConfig) -> Result<Self> {
        params.validate()?;
        quad.validate()?;
        if !(rate > 0.0 && rate.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "r",
                value: rate,
                reason: "discount rate must be positive",
            });
        }
        Ok(Self {
            params,
            rate,
            quad,
            s: rate / params.mu,
            k: params.scale(),
        })
    }

    fn a(&self, x: f64) -> f64 {
        self.k * (x - self.params.theta)
    }

    fn ln_i(&self, order: u32, a: f64) -> Result<f64> {
        ln_base_integral(self.s + order as f64, a, &self.quad)
    }

    pub fn ln_f(&self, x: f64) -> Result<f64> {
        self.ln_i(0, self.a(x))
    }

    pub fn ln_g(&self, x: f64) -> Result<f64> {
        self.ln_i(0, -self.a(x))
    }

    pub fn f(&self, x: f64) -> Result<f64> {
        self.ln_f(x).map(libm::exp)
    }

    pub fn g(&self, x: f64) -> Result<f64> {
        self.ln_g(x).map(libm::exp)
    }

    pub fn f_d1(&self, x: f64) -> Result<f64> {
        Ok(self.k * libm::exp(self.ln_i(1, self.a(x))?))
    }

    pub fn f_d2(&self, x: f64) -> Result<f64> {
        Ok(self.k * self.k * libm::exp(self.ln_i(2, self.a(x))?))
    }

    pub fn g_d1(&self, x: f64) -> Result<f64> {
        Ok(-self.k * libm::exp(self.ln_i(1, -self.a(x))?))
    }

    pub fn g_d2(&self, x: f64) -> Result<f64> {
        Ok(self.k * self.k * libm::exp(self.ln_i(2, -self.a(x))?))
    }

    /// `ln F'(x)`.
    pub fn ln_f_d1(&self, x: f64) -> Result<f64> {
        Ok(libm::log(self.k) + self.ln_i(1, self.a(x))?)
    }

    /// `ln F''(x)`.
    pub fn ln_f_d2(&self, x: f64) -> Result<f64> {
        Ok(2.0 * libm::log(self.k) + self.ln_i(2, self.a(x))?)
    }

    /// `ln |G'(x)|`.
    pub fn ln_abs_g_d1(&self, x: f64) -> Result<f64> {
        Ok(libm::log(self.k) + self.ln_i(1, -self.a(x))?)
    }

    /// `ln G''(x)`.
    pub fn ln_g_d2(&self, x: f64) -> Result<f64> {
        Ok(2.0 * libm::log(self.k) + self.ln_i(2, -self.a(x))?)
    }

    /// `F'(x) / F(x)`, finite even where `F` itself overflows.
    pub fn f_log_deriv(&self, x: f64) -> Result<f64> {
        let a = self.a(x);
        Ok(self.k * libm::exp(self.ln_i(1, a)? - self.ln_i(0, a)?))
    }

    /// `G'(x) / G(x)` (negative).
    pub fn g_log_deriv(&self, x: f64) -> Result<f64> {
        let a = -self.a(x);
        Ok(-self.k * libm::exp(self.ln_i(1, a)? - self.ln_i(0, a)?))
    }

    /// `F''(x) / F(x)`.
    pub fn f_curvature(&self, x: f64) -> Result<f64> {
        let a = self.a(x);
        Ok(self.k * self.k * libm::exp(self.ln_i(2, a)? - self.ln_i(0, a)?))
    }

    /// `G''(x) / G(x)`.
    pub fn g_curvature(&self, x: f64) -> Result<f64> {
        let a = -self.a(x);
        Ok(self.k * self.k * libm::exp(self.ln_i(2, a)? - self.ln_i(0, a)?))
    }

    pub fn ln_psi(&self, x: f64) -> Result<f64> {
        Ok(self.ln_f(x)? - self.ln_g(x)?)
    }

    /// `psi = F / G`, strictly increasing from 0 to infinity.
    pub fn psi(&self, x: f64) -> Result<f64> {
        self.ln_psi(x).map(libm::exp)
    }

    /// The price `x` with `psi(x) = y`.
    pub fn psi_inverse(&self, y: f64) -> Result<f64> {
        if !(y > 0.0 && y.is_finite()) {
            return Err(Error::OutOfRange {
                what: "psi value",
                value: y,
            });
        }
        self.ln_psi_inverse(libm::log(y))
    }

    /// The price `x` with `ln psi(x) = ln_y`.
    pub fn ln_psi_inverse(&self, ln_y: f64) -> Result<f64> {
        if !ln_y.is_finite() {
            return Err(Error::OutOfRange {
                what: "log psi value",
                value: ln_y,
            });
        }
        let theta = self.params.theta;
        if ln_y == 0.0 {
            return Ok(theta);
        }
        let std = self.params.stationary_std();
        let mut resid = |x: f64| Ok(self.ln_psi(x)? - ln_y);
        let (step, limit) = if ln_y > 0.0 {
            (std, theta + 1e3 * std)
        } else {
            (-std, theta - 1e3 * std)
        };
        let (lo, hi) = expand_bracket(&mut resid, theta, step, limit, "psi inverse")
            .map_err(|_| Error::OutOfRange {
                what: "psi value",
                value: libm::exp(ln_y),
            })?;
        let xtol = DEFAULT_XTOL * (1.0 + theta.abs().max(std));
        find_root_with(&mut resid, lo, hi, xtol, "psi inverse").map(|(x, _)| x)
    }
}

/// `F(x; r)` for the given dynamics.
pub fn eval_f(x: f64, r: f64, p: &ModelParams, q: &QuadratureConfig) -> Result<f64> {
    Fundamentals::new(*p, r, *q)?.f(x)
}

/// `G(x; r)` for the given dynamics.
pub fn eval_g(x: f64, r: f64, p: &ModelParams, q: &QuadratureConfig) -> Result<f64> {
    Fundamentals::new(*p, r, *q)?.g(x)
}

pub fn eval_f_d1(x: f64, r: f64, p: &ModelParams, q: &QuadratureConfig) -> Result<f64> {
    Fundamentals::new(*p, r, *q)?.f_d1(x)
}

pub fn eval_f_d2(x: f64, r: f64, p: &ModelParams, q: &QuadratureConfig) -> Result<f64> {
    Fundamentals::new(*p, r, *q)?.f_d2(x)
}

pub fn eval_g_d1(x: f64, r: f64, p: &ModelParams, q: &QuadratureConfig) -> Result<f64> {
    Fundamentals::new(*p, r, *q)?.g_d1(x)
}

pub fn eval_g_d2(x: f64, r: f64, p: &ModelParams, q: &QuadratureConfig) -> Result<f64> {
    Fundamentals::new(*p, r, *q)?.g_d2(x)
}

pub fn psi(x: f64, r: f64, p: &ModelParams, q: &QuadratureConfig) -> Result<f64> {
    Fundamentals::new(*p, r, *q)?.psi(x)
}

pub fn psi_inverse(y: f64, r: f64, p: &ModelParams, q: &QuadratureConfig) -> Result<f64> {
    Fundamentals::new(*p, r, *q)?.psi_inverse(y)
}
