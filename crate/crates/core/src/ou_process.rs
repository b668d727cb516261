//! Exact simulation, likelihood and calibration of the OU spread, plus
//! construction of the two-leg portfolio whose value is modelled.

use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{invalid, Error, Result};
use crate::params::ModelParams;
use crate::roots::golden_max;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Uniformly sampled observations.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceSeries {
    pub timestamps: Vec<f64>,
    pub values: Vec<f64>,
    pub dt: f64,
}

impl PriceSeries {
    /// Series with timestamps `0, dt, 2 dt, ...`.
    pub fn from_values(values: Vec<f64>, dt: f64) -> Result<Self> {
        let timestamps = (0..values.len()).map(|i| i as f64 * dt).collect();
        Self::new(timestamps, values, dt)
    }

    /// Validates length, ordering and uniform spacing of the timestamps.
    pub fn new(timestamps: Vec<f64>, values: Vec<f64>, dt: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(invalid("dt", dt, "must be positive"));
        }
        if timestamps.len() != values.len() {
            return Err(Error::Alignment {
                left: timestamps.len(),
                right: values.len(),
            });
        }
        if values.len() < 2 {
            return Err(Error::InsufficientData {
                needed: 2,
                got: values.len(),
            });
        }
        for (i, v) in values.iter().enumerate() {
            if !v.is_finite() {
                return Err(invalid("value", *v, "observations must be finite"));
            }
            if i > 0 {
                let step = timestamps[i] - timestamps[i - 1];
                if !(step > 0.0) {
                    return Err(Error::Unsorted { index: i });
                }
                if (step - dt).abs() > 1e-9 * dt {
                    return Err(Error::NonUniform { index: i });
                }
            }
        }
        Ok(Self {
            timestamps,
            values,
            dt,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Copy with every value moved by `shift`.
    pub fn shifted(&self, shift: f64) -> Self {
        Self {
            timestamps: self.timestamps.clone(),
            values: self.values.iter().map(|v| v + shift).collect(),
            dt: self.dt,
        }
    }
}

/// Two aligned price series and the cash amounts to test for the short leg.
#[derive(Debug, Clone, PartialEq)]
pub struct PairSpec {
    pub series_1: PriceSeries,
    pub series_2: PriceSeries,
    /// Cash held long in the first asset.
    pub a_cash: f64,
    /// Candidate cash amounts shorted in the second asset.
    pub b_grid: Vec<f64>,
}

impl PairSpec {
    pub fn validate(&self) -> Result<()> {
        check_aligned(&self.series_1, &self.series_2)?;
        if !(self.a_cash > 0.0 && self.a_cash.is_finite()) {
            return Err(invalid("A", self.a_cash, "long cash must be positive"));
        }
        for s in [&self.series_1, &self.series_2] {
            if let Some(bad) = s.values.iter().find(|v| !(**v > 0.0)) {
                return Err(invalid("price", *bad, "prices must be positive"));
            }
        }
        if self.b_grid.is_empty() {
            return Err(Error::InsufficientData { needed: 1, got: 0 });
        }
        if let Some(bad) = self
            .b_grid
            .iter()
            .find(|b| !(**b > 0.0 && **b <= self.a_cash))
        {
            return Err(invalid("B", *bad, "must lie in (0, A]"));
        }
        Ok(())
    }

    /// `B/A = 0.001, 0.002, ..., 1` scaled by `a_cash`.
    pub fn default_grid(a_cash: f64) -> Vec<f64> {
        (1..=1000).map(|i| a_cash * i as f64 / 1000.0).collect()
    }
}

fn check_aligned(a: &PriceSeries, b: &PriceSeries) -> Result<()> {
    let misaligned = a.len() != b.len()
        || a.dt != b.dt
        || a.timestamps.iter().zip(&b.timestamps).any(|(x, y)| x != y);
    if misaligned {
        return Err(Error::Alignment {
            left: a.len(),
            right: b.len(),
        });
    }
    Ok(())
}

/// Fitted dynamics and the likelihood they achieve.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CalibrationResult {
    pub params: ModelParams,
    pub avg_loglik: f64,
    pub beta_star: Option<f64>,
    pub converged: bool,
    /// Number of observations used.
    pub n: usize,
    pub dt: f64,
}

/// One-step transition `x_i = theta + (x_{i-1} - theta) e^{-mu dt} + sd Z`.
/// Returns `(e^{-mu dt}, sd)`.
fn transition(mu: f64, sigma: f64, dt: f64) -> (f64, f64) {
    let decay = libm::exp(-mu * dt);
    let var = sigma * sigma * -libm::expm1(-2.0 * mu * dt) / (2.0 * mu);
    (decay, libm::sqrt(var))
}

/// Simulate `n` exact transitions from `x0`. The output holds `n + 1`
/// observations starting with `x0`. `sigma = 0` gives the deterministic
/// relaxation towards `theta`.
pub fn simulate_exact(p: &ModelParams, x0: f64, dt: f64, n: usize, seed: u64) -> Result<PriceSeries> {
    if !(p.theta.is_finite() && p.mu > 0.0 && p.mu.is_finite()) {
        return Err(invalid("mu", p.mu, "must be positive with finite theta"));
    }
    if !(p.sigma >= 0.0 && p.sigma.is_finite()) {
        return Err(invalid("sigma", p.sigma, "must be non-negative"));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(invalid("dt", dt, "must be positive"));
    }
    if n == 0 {
        return Err(invalid("n", 0.0, "need at least one step"));
    }
    if !x0.is_finite() {
        return Err(invalid("x0", x0, "must be finite"));
    }
    let (decay, sd) = transition(p.mu, p.sigma, dt);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = Vec::with_capacity(n + 1);
    let mut x = x0;
    values.push(x);
    for _ in 0..n {
        let z: f64 = StandardNormal.sample(&mut rng);
        x = p.theta + (x - p.theta) * decay + sd * z;
        values.push(x);
    }
    PriceSeries::from_values(values, dt)
}

/// Average conditional Gaussian log-likelihood per transition.
pub fn avg_log_likelihood(p: &ModelParams, s: &PriceSeries) -> Result<f64> {
    p.validate()?;
    let (decay, sd) = transition(p.mu, p.sigma, s.dt);
    let var = sd * sd;
    if !(var > f64::MIN_POSITIVE && var.is_finite()) {
        return Err(Error::DegenerateLikelihood {
            conditional_variance: var,
        });
    }
    let n = s.len() - 1;
    let drift = p.theta * (1.0 - decay);
    let ss: f64 = s
        .values
        .windows(2)
        .map(|w| {
            let e = w[1] - w[0] * decay - drift;
            e * e
        })
        .sum();
    Ok(-0.5 * LN_2PI - libm::log(sd) - ss / (2.0 * n as f64 * var))
}

// Sufficient statistics of the AR(1) regression x_i = alpha + beta x_{i-1}.
struct Moments<'a> {
    values: &'a [f64],
    n: f64,
    mean_prev: f64,
    mean_next: f64,
    sxx: f64,
    sxy: f64,
}

impl<'a> Moments<'a> {
    fn new(values: &'a [f64]) -> Self {
        let n = (values.len() - 1) as f64;
        let prev = &values[..values.len() - 1];
        let next = &values[1..];
        let mean_prev = prev.iter().sum::<f64>() / n;
        let mean_next = next.iter().sum::<f64>() / n;
        let (mut sxx, mut sxy) = (0.0, 0.0);
        for (x, y) in prev.iter().zip(next) {
            let (dx, dy) = (x - mean_prev, y - mean_next);
            sxx += dx * dx;
            sxy += dx * dy;
        }
        Self {
            values,
            n,
            mean_prev,
            mean_next,
            sxx,
            sxy,
        }
    }

    // (intercept, residual variance) of the regression at a fixed slope;
    // residuals are summed directly, the expanded form cancels badly when
    // the fit is nearly exact
    fn profile(&self, beta: f64) -> (f64, f64) {
        let alpha = self.mean_next - beta * self.mean_prev;
        let rss: f64 = self
            .values
            .windows(2)
            .map(|w| {
                let e = w[1] - alpha - beta * w[0];
                e * e
            })
            .sum();
        (alpha, rss / self.n)
    }
}

fn params_from_regression(
    beta: f64,
    alpha: f64,
    var: f64,
    dt: f64,
) -> Result<ModelParams> {
    let mu = -libm::log(beta) / dt;
    let theta = alpha / (1.0 - beta);
    let sigma = libm::sqrt(var * 2.0 * mu / -libm::expm1(-2.0 * mu * dt));
    ModelParams::new(theta, mu, sigma)
}

/// Maximum-likelihood fit of the dynamics.
///
/// Starts from the conditional least-squares solution of the AR(1)
/// regression, then refines the slope by golden-section search on the
/// profile likelihood. `init`, if given, contributes its implied slope as an
/// extra candidate. The best candidate by likelihood wins.
pub fn fit_mle(s: &PriceSeries, init: Option<&ModelParams>) -> Result<CalibrationResult> {
    const MIN_OBS: usize = 10;
    if s.len() < MIN_OBS {
        return Err(Error::InsufficientData {
            needed: MIN_OBS,
            got: s.len(),
        });
    }
    let m = Moments::new(&s.values);
    if !(m.sxx > 0.0) {
        return Err(Error::DegenerateLikelihood {
            conditional_variance: 0.0,
        });
    }
    let beta_ols = m.sxy / m.sxx;
    if !(beta_ols > 0.0 && beta_ols < 1.0) {
        return Err(Error::CalibrationFailure {
            slope: beta_ols,
            observations: s.len(),
        });
    }
    // a noise-free series has zero residual variance; keep sigma positive
    // at the rounding floor of the data so the likelihood stays finite
    let scale = s.values.iter().fold(0.0f64, |acc, v| acc.max(v.abs())).max(1.0);
    let var_floor = (f64::EPSILON * scale) * (f64::EPSILON * scale);
    let profile_ll = |beta: f64| {
        let (_, var) = m.profile(beta);
        -0.5 * libm::log(var.max(var_floor))
    };

    let mut candidates: Vec<f64> = Vec::with_capacity(3);
    candidates.push(beta_ols);
    let (_, var_ols) = m.profile(beta_ols);
    let se = libm::sqrt(var_ols / m.sxx);
    let lo = (beta_ols - 4.0 * se).max(1e-12);
    let hi = (beta_ols + 4.0 * se).min(1.0 - 1e-12);
    let mut converged = true;
    if se > 0.0 && hi > lo {
        match golden_max(|b| Ok(profile_ll(b)), lo, hi, 1e-15) {
            Ok((b, _)) => candidates.push(b),
            Err(_) => converged = false,
        }
    }
    if let Some(p0) = init {
        let b0 = libm::exp(-p0.mu * s.dt);
        if b0 > 0.0 && b0 < 1.0 {
            candidates.push(b0);
        }
    }

    let mut best: Option<(ModelParams, f64)> = None;
    for beta in candidates {
        let (alpha, var) = m.profile(beta);
        let Ok(params) = params_from_regression(beta, alpha, var.max(var_floor), s.dt) else {
            continue;
        };
        let Ok(ll) = avg_log_likelihood(&params, s) else {
            continue;
        };
        if best.map_or(true, |(_, b)| ll > b) {
            best = Some((params, ll));
        }
    }
    let (params, avg_loglik) = best.ok_or(Error::DegenerateLikelihood {
        conditional_variance: var_ols,
    })?;
    Ok(CalibrationResult {
        params,
        avg_loglik,
        beta_star: None,
        converged,
        n: s.len(),
        dt: s.dt,
    })
}

/// Portfolio value `(A/S1_0) S1 - (B/S2_0) S2` along the series.
pub fn build_spread(pair: &PairSpec, b_cash: f64) -> Result<PriceSeries> {
    check_aligned(&pair.series_1, &pair.series_2)?;
    if !(b_cash >= 0.0 && b_cash.is_finite()) {
        return Err(invalid("B", b_cash, "short cash must be non-negative"));
    }
    let s1 = &pair.series_1.values;
    let s2 = &pair.series_2.values;
    if !(s1[0] > 0.0 && s2[0] > 0.0) {
        return Err(invalid("price", s1[0].min(s2[0]), "initial prices must be positive"));
    }
    let alpha = pair.a_cash / s1[0];
    let beta = b_cash / s2[0];
    let values = s1.iter().zip(s2).map(|(x, y)| alpha * x - beta * y).collect();
    PriceSeries::new(pair.series_1.timestamps.clone(), values, pair.series_1.dt)
}

/// Fitted likelihood for every `B` in the grid, in grid order.
pub fn beta_curve(pair: &PairSpec) -> Result<Vec<(f64, Result<CalibrationResult>)>> {
    pair.validate()?;
    Ok(pair
        .b_grid
        .iter()
        .map(|&b| {
            let fit = build_spread(pair, b).and_then(|s| fit_mle(&s, None)).map(|mut c| {
                c.beta_star = Some(b);
                c
            });
            (b, fit)
        })
        .collect())
}

/// The grid `B` whose fitted spread has the highest average log-likelihood.
/// Ties go to the smallest `B`.
pub fn select_beta_star(pair: &PairSpec) -> Result<CalibrationResult> {
    let curve = beta_curve(pair)?;
    let attempted = curve.len();
    let mut best: Option<CalibrationResult> = None;
    for (b, fit) in curve {
        let Ok(fit) = fit else { continue };
        let better = match &best {
            None => true,
            Some(cur) => {
                fit.avg_loglik > cur.avg_loglik
                    || (fit.avg_loglik == cur.avg_loglik && b < cur.beta_star.unwrap_or(f64::INFINITY))
            }
        };
        if better {
            best = Some(fit);
        }
    }
    best.ok_or(Error::AllCandidatesFailed { attempted })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    fn gld() -> ModelParams {
        ModelParams::new(0.5388, 16.6677, 0.1599).unwrap()
    }

    #[test]
    fn zero_volatility_is_deterministic_relaxation() {
        let p = ModelParams {
            theta: 0.5,
            mu: 3.0,
            sigma: 0.0,
        };
        let dt = 0.01;
        let s = simulate_exact(&p, 1.5, dt, 50, 9).unwrap();
        for (i, x) in s.values.iter().enumerate() {
            let exact = 0.5 + libm::exp(-3.0 * dt * i as f64);
            assert!((x - exact).abs() < 1e-13, "{i}: {x} vs {exact}");
        }
    }

    #[test]
    fn simulation_is_reproducible() {
        let p = gld();
        let a = simulate_exact(&p, 0.5, 1.0 / 252.0, 100, 42).unwrap();
        let b = simulate_exact(&p, 0.5, 1.0 / 252.0, 100, 42).unwrap();
        let c = simulate_exact(&p, 0.5, 1.0 / 252.0, 100, 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.len(), 101);
    }

    #[test]
    fn noiseless_series_gives_pure_normalisation_term() {
        let p = ModelParams::new(0.2, 5.0, 1e-3).unwrap();
        let det = ModelParams { sigma: 0.0, ..p };
        let dt = 0.02;
        let s = simulate_exact(&det, 1.0, dt, 40, 0).unwrap();
        let (_, sd) = transition(p.mu, p.sigma, dt);
        let ll = avg_log_likelihood(&p, &s).unwrap();
        let expected = -0.5 * LN_2PI - libm::log(sd);
        assert!((ll - expected).abs() < 1e-9 * expected.abs());
    }

    #[test]
    fn noiseless_fit_recovers_speed() {
        let det = ModelParams {
            theta: 0.2,
            mu: 5.0,
            sigma: 0.0,
        };
        let dt = 0.02;
        let s = simulate_exact(&det, 1.0, dt, 60, 0).unwrap();
        let fit = fit_mle(&s, None).unwrap();
        assert!((fit.params.mu - 5.0).abs() < 1e-8, "{}", fit.params.mu);
        assert!((fit.params.theta - 0.2).abs() < 1e-9);
        assert!(fit.params.sigma < 1e-10);
    }

    #[test]
    fn fit_reports_exact_recomputed_likelihood() {
        let s = simulate_exact(&gld(), 0.54, 1.0 / 252.0, 200, 7).unwrap();
        let fit = fit_mle(&s, None).unwrap();
        assert_eq!(fit.avg_loglik, avg_log_likelihood(&fit.params, &s).unwrap());
        assert_eq!(fit.n, 201);
    }

    #[test]
    fn trending_series_is_rejected() {
        let values: Vec<f64> = (0..50).map(|i| libm::exp(0.01 * i as f64)).collect();
        let s = PriceSeries::from_values(values, 1.0).unwrap();
        assert!(matches!(
            fit_mle(&s, None),
            Err(Error::CalibrationFailure { .. })
        ));
    }

    #[test]
    fn too_short_series_is_rejected() {
        let s = PriceSeries::from_values(vec![1.0, 2.0, 1.5], 1.0).unwrap();
        assert!(matches!(
            fit_mle(&s, None),
            Err(Error::InsufficientData { needed: 10, .. })
        ));
    }

    #[test]
    fn series_validation() {
        assert!(matches!(
            PriceSeries::new(vec![0.0, 1.0, 1.0], vec![1.0; 3], 1.0),
            Err(Error::Unsorted { index: 2 })
        ));
        assert!(matches!(
            PriceSeries::new(vec![0.0, 1.0, 2.5], vec![1.0; 3], 1.0),
            Err(Error::NonUniform { index: 2 })
        ));
        assert!(PriceSeries::from_values(vec![1.0, f64::NAN], 1.0).is_err());
    }

    fn pair(s1: Vec<f64>, s2: Vec<f64>, grid: Vec<f64>) -> PairSpec {
        PairSpec {
            series_1: PriceSeries::from_values(s1, 1.0).unwrap(),
            series_2: PriceSeries::from_values(s2, 1.0).unwrap(),
            a_cash: 1.0,
            b_grid: grid,
        }
    }

    #[test]
    fn spread_construction() {
        let s1 = vec![100.0, 102.0, 99.0];
        let s2 = vec![100.0, 101.0, 103.0];
        let p = pair(s1.clone(), s2.clone(), vec![0.5]);
        let x = build_spread(&p, 0.454).unwrap();
        for i in 0..3 {
            let expected = (s1[i] - 0.454 * s2[i]) / 100.0;
            assert!((x.values[i] - expected).abs() < 1e-15);
        }
        let leg1 = build_spread(&p, 0.0).unwrap();
        assert_eq!(leg1.values, vec![1.0, 1.02, 0.99]);
        let same = pair(s1.clone(), s1.clone(), vec![1.0]);
        assert!(build_spread(&same, 1.0).unwrap().values.iter().all(|v| *v == 0.0));
        let short = pair(s1, vec![1.0, 2.0], vec![1.0]);
        assert!(matches!(build_spread(&short, 0.5), Err(Error::Alignment { .. })));
    }

    #[test]
    fn single_grid_point_is_selected() {
        let leg1 = simulate_exact(&gld(), 0.54, 1.0 / 252.0, 60, 3).unwrap();
        let s1: Vec<f64> = leg1.values.iter().map(|v| 100.0 + 10.0 * v).collect();
        let s2: Vec<f64> = (0..s1.len()).map(|i| 50.0 + 0.01 * i as f64).collect();
        let p = pair(s1, s2, vec![0.3]);
        let best = select_beta_star(&p).unwrap();
        assert_eq!(best.beta_star, Some(0.3));
    }

    #[test]
    fn grid_outside_unit_interval_is_rejected() {
        let p = pair(vec![1.0; 12], vec![1.0; 12], vec![0.0, 0.5]);
        assert!(p.validate().is_err());
        let p = pair(vec![1.0; 12], vec![1.0; 12], vec![1.5]);
        assert!(p.validate().is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn fit_beats_true_parameters(seed in any::<u64>(), n in 30usize..400) {
            let p = gld();
            let s = simulate_exact(&p, p.theta, 1.0 / 252.0, n, seed).unwrap();
            if let Ok(fit) = fit_mle(&s, None) {
                let truth = avg_log_likelihood(&p, &s).unwrap();
                prop_assert!(fit.avg_loglik >= truth - 1e-12);
            }
        }

        #[test]
        fn fit_matches_closed_form_regression(seed in any::<u64>()) {
            let s = simulate_exact(&gld(), 0.5, 1.0 / 252.0, 300, seed).unwrap();
            let m = Moments::new(&s.values);
            let beta = m.sxy / m.sxx;
            prop_assume!(beta > 0.0 && beta < 1.0);
            let (alpha, var) = m.profile(beta);
            let closed = params_from_regression(beta, alpha, var, s.dt).unwrap();
            let fit = fit_mle(&s, None).unwrap();
            prop_assert!(fit.avg_loglik >= avg_log_likelihood(&closed, &s).unwrap() - 1e-10);
        }

        #[test]
        fn translation_equivariance(seed in any::<u64>(), k in -5.0f64..5.0) {
            let s = simulate_exact(&gld(), 0.5, 1.0 / 252.0, 250, seed).unwrap();
            let Ok(a) = fit_mle(&s, None) else { return Ok(()) };
            let b = fit_mle(&s.shifted(k), None).unwrap();
            prop_assert!((b.params.theta - a.params.theta - k).abs() < 1e-8 * (1.0 + k.abs()));
            prop_assert!((b.params.mu - a.params.mu).abs() < 1e-6 * a.params.mu);
            prop_assert!((b.params.sigma - a.params.sigma).abs() < 1e-6 * a.params.sigma);
        }

        #[test]
        fn likelihood_is_shift_invariant(seed in any::<u64>(), k in -3.0f64..3.0) {
            let p = gld();
            let s = simulate_exact(&p, 0.5, 1.0 / 252.0, 80, seed).unwrap();
            let a = avg_log_likelihood(&p, &s).unwrap();
            let b = avg_log_likelihood(&p.shifted(k), &s.shifted(k)).unwrap();
            prop_assert!((a - b).abs() < 1e-9 * a.abs().max(1.0));
        }

        #[test]
        fn beta_selection_ignores_grid_order(seed in any::<u64>(), rot in 0usize..7) {
            let leg1 = simulate_exact(&gld(), 0.54, 1.0 / 252.0, 80, seed).unwrap();
            let noise = simulate_exact(&ModelParams::new(0.0, 0.5, 0.3).unwrap(), 0.0, 1.0 / 252.0, 80, seed ^ 1).unwrap();
            let s1: Vec<f64> = leg1.values.iter().map(|v| 100.0 * (1.0 + v)).collect();
            let s2: Vec<f64> = noise.values.iter().map(|v| 80.0 * libm::exp(*v)).collect();
            let grid = vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7];
            let mut rotated = grid.clone();
            rotated.rotate_left(rot);
            let a = select_beta_star(&pair(s1.clone(), s2.clone(), grid));
            let b = select_beta_star(&pair(s1, s2, rotated));
            match (a, b) {
                (Ok(a), Ok(b)) => prop_assert_eq!(a.beta_star, b.beta_star),
                (Err(_), Err(_)) => {}
                _ => prop_assert!(false, "one ordering failed"),
            }
        }
    }
}
