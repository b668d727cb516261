use ou_timing_core::ou_process::*;
use ou_timing_core::*;

fn gld() -> ModelParams {
    ModelParams::new(0.5388, 16.6677, 0.1599).unwrap()
}

#[test]
fn simulated_moments_match_stationary_law() {
    let p = gld();
    let s = simulate_exact(&p, p.theta, 0.01, 200_000, 12).unwrap();
    let n = s.values.len() as f64;
    let mean = s.values.iter().sum::<f64>() / n;
    let var = s.values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let std = p.stationary_std();
    assert!((mean - p.theta).abs() < 0.1 * std);
    assert!((var.sqrt() / std - 1.0).abs() < 0.02);
    // lag-one autocorrelation is exp(-mu dt)
    let cov = s.values.windows(2).map(|w| (w[0] - mean) * (w[1] - mean)).sum::<f64>() / (n - 1.0);
    assert!((cov / var - (-p.mu * 0.01f64).exp()).abs() < 0.01);
}

#[test]
fn daily_sample_likelihood_at_truth() {
    let p = gld();
    let lls: Vec<f64> = (0..20)
        .map(|seed| {
            let s = simulate_exact(&p, p.theta, 1.0 / 252.0, 200, seed).unwrap();
            avg_log_likelihood(&p, &s).unwrap()
        })
        .collect();
    let mean = lls.iter().sum::<f64>() / lls.len() as f64;
    assert!((mean - 3.2).abs() < 0.3, "{mean}");
}

#[test]
fn daily_sample_recovers_level_and_volatility() {
    let p = gld();
    let mut hits = 0;
    for seed in 0..100 {
        let s = simulate_exact(&p, p.theta, 1.0 / 252.0, 200, seed).unwrap();
        let f = fit_mle(&s, None).unwrap().params;
        if (f.theta / p.theta - 1.0).abs() <= 0.05 && (f.sigma / p.sigma - 1.0).abs() <= 0.15 {
            hits += 1;
        }
    }
    assert!(hits >= 90, "{hits}");
}

#[test]
fn pair_curve_peaks_at_hedge_ratio() {
    // S1 = 0.5 S2 + OU noise, both starting at 100
    let n = 1000;
    let dt = 1.0 / 252.0;
    let noise = simulate_exact(&ModelParams::new(0.0, 20.0, 0.3).unwrap(), 0.0, dt, n, 4).unwrap();
    let walk = simulate_exact(&ModelParams::new(0.0, 1e-9, 0.2).unwrap(), 0.0, dt, n, 5).unwrap();
    let s2: Vec<f64> = walk.values.iter().map(|w| 100.0 * w.exp()).collect();
    let s1: Vec<f64> = s2.iter().zip(&noise.values).map(|(b, e)| 50.0 + 0.5 * b + 100.0 * e).collect();
    let pair = PairSpec {
        series_1: PriceSeries::from_values(s1, dt).unwrap(),
        series_2: PriceSeries::from_values(s2, dt).unwrap(),
        a_cash: 1.0,
        b_grid: (1..=100).map(|i| i as f64 / 100.0).collect(),
    };
    let best = select_beta_star(&pair).unwrap();
    assert!((best.beta_star.unwrap() - 0.5).abs() <= 0.05, "{:?}", best.beta_star);
}
