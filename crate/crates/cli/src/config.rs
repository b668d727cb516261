//! Run configuration: one JSON document, with command-line overrides.

use std::fs;
use std::path::{Path, PathBuf};

use ou_timing_core::{DiscountSpec, McConfig, ModelParams, PolicySpec, QuadratureConfig};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelParams,
    pub discount: DiscountSpec,
    /// Absolute stop-loss level `L`.
    #[serde(default)]
    pub stop_loss: Option<f64>,
    /// Stop-loss offset below the entry price.
    #[serde(default)]
    pub relative_ell: Option<f64>,
    #[serde(default)]
    pub quadrature: QuadratureConfig,
    #[serde(default)]
    pub mc: McConfig,
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default)]
    pub simulate: SimulateSpec,
    #[serde(default)]
    pub calibration: CalibrationSpec,
    /// Where a run writes its files. Not part of the emitted config, so
    /// re-running from an emitted config reproduces its outputs exactly.
    #[serde(default = "default_output_dir", skip_serializing)]
    pub output_dir: PathBuf,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

/// Price grid for sampled value functions: `points` values spanning
/// `theta +- half_width` stationary standard deviations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub points: usize,
    pub half_width: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            points: 2001,
            half_width: 4.0,
        }
    }
}

impl GridSpec {
    pub fn values(&self, p: &ModelParams) -> Vec<f64> {
        let std = p.stationary_std();
        let lo = p.theta - self.half_width * std;
        let span = 2.0 * self.half_width * std;
        let n = self.points;
        (0..n).map(|i| lo + span * i as f64 / (n - 1) as f64).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSpec {
    /// Starting price; defaults to `theta`.
    #[serde(default)]
    pub x0: Option<f64>,
    /// Number of full sample paths written out.
    pub trace_paths: u64,
    /// Explicit policy; defaults to the solved thresholds.
    #[serde(default)]
    pub policy: Option<PolicySpec>,
}

impl Default for SimulateSpec {
    fn default() -> Self {
        Self {
            x0: None,
            trace_paths: 5,
            policy: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationSpec {
    /// Time between consecutive rows, in years.
    pub dt: f64,
    /// Cash held long in the first leg.
    pub a_cash: f64,
}

impl Default for CalibrationSpec {
    fn default() -> Self {
        Self {
            dt: 1.0 / 252.0,
            a_cash: 1.0,
        }
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: ModelParams {
                theta: 0.5388,
                mu: 16.6677,
                sigma: 0.1599,
            },
            discount: DiscountSpec {
                r: 0.05,
                r_hat: 0.05,
                c: 0.05,
                c_hat: 0.05,
            },
            stop_loss: None,
            relative_ell: None,
            quadrature: QuadratureConfig::default(),
            mc: McConfig::default(),
            grid: GridSpec::default(),
            simulate: SimulateSpec::default(),
            calibration: CalibrationSpec::default(),
            output_dir: default_output_dir(),
        }
    }
}

/// Values given on the command line; each replaces the file value.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub output_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub stop_loss: Option<f64>,
    pub relative_ell: Option<f64>,
}

impl RunConfig {
    /// Reads a config document. A document with a top-level `config`
    /// object (as written by `solve`) is read through that object.
    pub fn from_file(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            CliError::Config(message) => CliError::Format {
                path: path.to_path_buf(),
                message,
            },
            other => other,
        })
    }

    pub fn from_json(text: &str) -> CliResult<Self> {
        let mut value: serde_json::Value = serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        if let Some(inner) = value.get_mut("config") {
            value = inner.take();
        }
        serde_json::from_value(value).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn apply(&mut self, o: &Overrides) -> CliResult<()> {
        if o.stop_loss.is_some() && o.relative_ell.is_some() {
            return Err(CliError::Config("--stop-loss and --ell are mutually exclusive".into()));
        }
        if let Some(dir) = &o.output_dir {
            self.output_dir = dir.clone();
        }
        if let Some(seed) = o.seed {
            self.mc.seed = seed;
        }
        if let Some(l) = o.stop_loss {
            self.stop_loss = Some(l);
            self.relative_ell = None;
        }
        if let Some(ell) = o.relative_ell {
            self.relative_ell = Some(ell);
            self.stop_loss = None;
        }
        Ok(())
    }

    pub fn validate(&self) -> CliResult<()> {
        self.model.validate()?;
        self.discount.validate()?;
        self.quadrature.validate()?;
        self.mc.validate(&self.model)?;
        if self.stop_loss.is_some() && self.relative_ell.is_some() {
            return Err(CliError::Config("set at most one of stop_loss and relative_ell".into()));
        }
        if let Some(l) = self.stop_loss {
            if !l.is_finite() {
                return Err(CliError::Config(format!("stop_loss must be finite, got {l}")));
            }
        }
        if let Some(ell) = self.relative_ell {
            if !(ell > 0.0 && ell.is_finite()) {
                return Err(CliError::Config(format!("relative_ell must be positive, got {ell}")));
            }
        }
        if self.grid.points < 3 || !(self.grid.half_width > 0.0 && self.grid.half_width.is_finite()) {
            return Err(CliError::Config("grid needs at least 3 points and a positive half_width".into()));
        }
        if let Some(x0) = self.simulate.x0 {
            if !x0.is_finite() {
                return Err(CliError::Config(format!("simulate.x0 must be finite, got {x0}")));
            }
        }
        if let Some(p) = &self.simulate.policy {
            p.validate()?;
        }
        if !(self.calibration.dt > 0.0 && self.calibration.dt.is_finite()) {
            return Err(CliError::Config(format!("calibration.dt must be positive, got {}", self.calibration.dt)));
        }
        if !(self.calibration.a_cash > 0.0 && self.calibration.a_cash.is_finite()) {
            return Err(CliError::Config(format!(
                "calibration.a_cash must be positive, got {}",
                self.calibration.a_cash
            )));
        }
        Ok(())
    }
}
