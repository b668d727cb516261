//! Model and trading parameters shared by every solver.

use crate::error::{invalid, Result};

/// Dynamics `dX = mu (theta - X) dt + sigma dB` of the traded spread.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ModelParams {
    /// Long-run mean (price units).
    pub theta: f64,
    /// Mean-reversion speed (1/time).
    pub mu: f64,
    /// Volatility (price/sqrt(time)).
    pub sigma: f64,
}

impl ModelParams {
    pub fn new(theta: f64, mu: f64, sigma: f64) -> Result<Self> {
        let p = Self { theta, mu, sigma };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.theta.is_finite() {
            return Err(invalid("theta", self.theta, "must be finite"));
        }
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return Err(invalid("mu", self.mu, "must be positive and finite"));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(invalid("sigma", self.sigma, "must be positive and finite"));
        }
        Ok(())
    }

    /// Standard deviation of the stationary law, `sigma / sqrt(2 mu)`.
    pub fn stationary_std(&self) -> f64 {
        self.sigma / libm::sqrt(2.0 * self.mu)
    }

    /// `sqrt(2 mu / sigma^2)`, the factor mapping `x - theta` into the
    /// integral representation of the fundamental solutions.
    pub fn scale(&self) -> f64 {
        libm::sqrt(2.0 * self.mu) / self.sigma
    }

    /// Same dynamics with the long-run mean moved by `shift`.
    pub fn shifted(&self, shift: f64) -> Self {
        Self {
            theta: self.theta + shift,
            ..*self
        }
    }
}

/// Discount rates and transaction costs for the exit (`r`, `c`) and entry
/// (`r_hat`, `c_hat`) problems.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DiscountSpec {
    pub r: f64,
    pub r_hat: f64,
    pub c: f64,
    pub c_hat: f64,
}

impl DiscountSpec {
    pub fn new(r: f64, r_hat: f64, c: f64, c_hat: f64) -> Result<Self> {
        let d = Self { r, r_hat, c, c_hat };
        d.validate()?;
        Ok(d)
    }

    /// Equal rates and costs on both legs.
    pub fn symmetric(r: f64, c: f64) -> Result<Self> {
        Self::new(r, r, c, c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.r_hat > 0.0 && self.r_hat.is_finite()) {
            return Err(invalid("r_hat", self.r_hat, "must be positive and finite"));
        }
        if !(self.r >= self.r_hat && self.r.is_finite()) {
            return Err(invalid("r", self.r, "must satisfy 0 < r_hat <= r"));
        }
        if !(self.c.is_finite() && self.c_hat.is_finite()) {
            return Err(invalid("c", self.c, "costs must be finite"));
        }
        if !(self.c + self.c_hat > 0.0) {
            return Err(invalid(
                "c + c_hat",
                self.c + self.c_hat,
                "round-trip cost must be positive",
            ));
        }
        Ok(())
    }

    pub fn with_exit_cost(&self, c: f64) -> Self {
        Self { c, ..*self }
    }

    pub fn with_entry_cost(&self, c_hat: f64) -> Self {
        Self { c_hat, ..*self }
    }
}
