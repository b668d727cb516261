//! Globally adaptive Gauss-Kronrod (7/15) quadrature on finite intervals.

use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};

/// Accuracy controls for the integral representations of the fundamental
/// solutions.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct QuadratureConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Panel budget per integral before giving up.
    #[cfg_attr(feature = "serde", serde(default = "default_max_panels"))]
    pub max_panels: usize,
}

#[cfg(feature = "serde")]
fn default_max_panels() -> usize {
    QuadratureConfig::default().max_panels
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self {
            rel_tol: 1e-12,
            abs_tol: 1e-15,
            max_panels: 500,
        }
    }
}

impl QuadratureConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0 && self.rel_tol < 1.0) {
            return Err(invalid("rel_tol", self.rel_tol, "must lie in (0, 1)"));
        }
        if !(self.abs_tol > 0.0 && self.abs_tol.is_finite()) {
            return Err(invalid("abs_tol", self.abs_tol, "must be positive"));
        }
        if self.max_panels == 0 {
            return Err(invalid("max_panels", 0.0, "must be at least 1"));
        }
        Ok(())
    }

    /// Half-width, in units of the Gaussian factor's standard deviation, past
    /// the integrand peak at which the tail drops below `abs_tol`
    /// relative to the peak.
    pub(crate) fn tail_width(&self) -> f64 {
        let eps = self.abs_tol.min(self.rel_tol) * 1e-3;
        libm::sqrt(-2.0 * libm::log(eps)) + 2.0
    }
}

#[derive(Debug, Clone, Copy)]
pub struct QuadResult {
    pub value: f64,
    pub error: f64,
    pub panels: usize,
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];

// Gauss weights for the odd-indexed Kronrod nodes (XGK[1], XGK[3], XGK[5], XGK[7]).
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for j in 0..7 {
        let dx = half * XGK[j];
        let pair = f(center - dx) + f(center + dx);
        kronrod += WGK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    (kronrod * half, ((kronrod - gauss) * half).abs())
}

struct Panel {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

/// Integrate `f` over `[a, b]`, splitting first at the interior
/// `breakpoints`, then bisecting the worst panel until the summed error
/// estimate satisfies `max(abs_tol, rel_tol * |I|)`.
pub fn integrate<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    breakpoints: &[f64],
    cfg: &QuadratureConfig,
) -> Result<QuadResult> {
    let mut edges: Vec<f64> = Vec::with_capacity(breakpoints.len() + 2);
    edges.push(a);
    for &p in breakpoints {
        if p > a && p < b {
            edges.push(p);
        }
    }
    edges.push(b);
    edges.sort_by(|x, y| x.total_cmp(y));

    let mut panels: Vec<Panel> = Vec::with_capacity(64);
    for w in edges.windows(2) {
        if w[1] > w[0] {
            let (value, error) = gk15(&mut f, w[0], w[1]);
            panels.push(Panel {
                a: w[0],
                b: w[1],
                value,
                error,
            });
        }
    }

    loop {
        let total: f64 = panels.iter().map(|p| p.value).sum();
        let err: f64 = panels.iter().map(|p| p.error).sum();
        if !total.is_finite() || !err.is_finite() {
            return Err(Error::Quadrature {
                value: total,
                error_estimate: err,
                panels: panels.len(),
            });
        }
        if err <= cfg.abs_tol.max(cfg.rel_tol * total.abs()) {
            return Ok(QuadResult {
                value: total,
                error: err,
                panels: panels.len(),
            });
        }
        if panels.len() >= cfg.max_panels {
            return Err(Error::Quadrature {
                value: total,
                error_estimate: err,
                panels: panels.len(),
            });
        }
        let worst = panels
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.error.total_cmp(&y.1.error))
            .map(|(i, _)| i)
            .unwrap_or(0);
        let p = panels.swap_remove(worst);
        let mid = 0.5 * (p.a + p.b);
        if !(mid > p.a && mid < p.b) {
            // panel cannot be split further in floating point
            return Err(Error::Quadrature {
                value: total,
                error_estimate: err,
                panels: panels.len() + 1,
            });
        }
        let (lv, le) = gk15(&mut f, p.a, mid);
        let (rv, re) = gk15(&mut f, mid, p.b);
        panels.push(Panel {
            a: p.a,
            b: mid,
            value: lv,
            error: le,
        });
        panels.push(Panel {
            a: mid,
            b: p.b,
            value: rv,
            error: re,
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_is_exact() {
        let cfg = QuadratureConfig::default();
        let r = integrate(|x| x * x * x - 2.0 * x, 0.0, 2.0, &[], &cfg).unwrap();
        assert!((r.value - 0.0).abs() < 1e-14);
        assert_eq!(r.panels, 1);
    }

    #[test]
    fn gaussian_integral() {
        let cfg = QuadratureConfig::default();
        let r = integrate(|x| libm::exp(-0.5 * x * x), -12.0, 12.0, &[0.0], &cfg).unwrap();
        let exact = libm::sqrt(2.0 * core::f64::consts::PI);
        assert!((r.value - exact).abs() < 1e-12 * exact);
    }

    #[test]
    fn sqrt_endpoint_adapts() {
        let cfg = QuadratureConfig {
            rel_tol: 1e-10,
            ..Default::default()
        };
        let r = integrate(libm::sqrt, 0.0, 1.0, &[], &cfg).unwrap();
        assert!((r.value - 2.0 / 3.0).abs() < 1e-10);
        assert!(r.panels > 1);
    }

    #[test]
    fn budget_exhaustion_reports_residual() {
        let cfg = QuadratureConfig {
            rel_tol: 1e-14,
            abs_tol: 1e-300,
            max_panels: 3,
        };
        let err = integrate(|x| 1.0 / libm::sqrt(x), 0.0, 1.0, &[], &cfg).unwrap_err();
        match err {
            Error::Quadrature {
                error_estimate,
                panels,
                ..
            } => {
                assert!(error_estimate > 0.0);
                assert_eq!(panels, 3);
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
