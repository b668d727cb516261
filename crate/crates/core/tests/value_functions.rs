use ou_timing_core::double_stopping::vi_residuals;
use ou_timing_core::majorant::discrete_concave_majorant;
use ou_timing_core::stoploss::vi_residuals_stoploss;
use ou_timing_core::*;

fn gld() -> ModelParams {
    ModelParams::new(0.5388, 16.6677, 0.1599).unwrap()
}

fn problem(p: ModelParams, c: f64, c_hat: f64) -> TradingProblem {
    TradingProblem::new(p, DiscountSpec::new(0.05, 0.05, c, c_hat).unwrap(), QuadratureConfig::default()).unwrap()
}

fn grid(p: &ModelParams, half_width: f64, n: usize) -> Vec<f64> {
    let std = p.stationary_std();
    let lo = p.theta - half_width * std;
    (0..n).map(|i| lo + 2.0 * half_width * std * i as f64 / (n - 1) as f64).collect()
}

fn between(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

/// Slopes between consecutive `(y, h)` points.
fn slopes(y: &[f64], h: &[f64]) -> Vec<f64> {
    (1..y.len()).map(|i| (h[i] - h[i - 1]) / (y[i] - y[i - 1])).collect()
}

fn non_decreasing(s: &[f64], rel: f64) -> bool {
    s.windows(2).all(|w| w[1] - w[0] >= -rel * w[0].abs().max(w[1].abs()))
}

fn non_increasing(s: &[f64], rel: f64) -> bool {
    s.windows(2).all(|w| w[1] - w[0] <= rel * w[0].abs().max(w[1].abs()))
}

#[test]
fn sandwich_inequalities_on_full_grid() {
    let p = gld();
    let xs = grid(&p, 4.0, 2001);
    for (c, c_hat) in [(0.05, 0.05), (0.005, 0.005), (0.01, 0.02)] {
        let prob = problem(p, c, c_hat);
        let t = prob.solve().unwrap();
        let sl = prob.solve_stoploss(0.4834).unwrap();
        for &x in &xs {
            let (v, j) = (t.v(x).unwrap(), t.j(x).unwrap());
            let (vl, jl) = (sl.v(x).unwrap(), sl.j(x).unwrap());
            let tol = 1e-12;
            assert!(v >= x - c - tol, "V < x - c at {x}");
            assert!(vl >= x - c - tol, "V_L < x - c at {x}");
            assert!(vl <= v + tol, "V_L > V at {x}");
            assert!(j >= -tol, "J < 0 at {x}");
            assert!(jl >= -tol, "J_L < 0 at {x}");
            assert!(jl <= j + tol, "J_L > J at {x}: {jl} vs {j}");
        }
    }
}

#[test]
fn vi_residuals_with_and_without_stop() {
    let p = gld();
    let xs = grid(&p, 4.0, 2001);
    for c in [0.05, 0.005] {
        let prob = problem(p, c, c);
        let rep = vi_residuals(&xs, &prob.solve().unwrap()).unwrap();
        assert!(rep.max_exit_violation <= 1e-4 && rep.max_entry_violation <= 1e-4);
        let rep = vi_residuals_stoploss(&xs, &prob.solve_stoploss(0.4834).unwrap()).unwrap();
        assert!(rep.max_exit_violation <= 1e-4 && rep.max_entry_violation <= 1e-4);
    }
}

#[test]
fn smooth_pasting_at_every_boundary() {
    let p = gld();
    let prob = problem(p, 0.005, 0.005);
    let t = prob.solve().unwrap();
    let s = t.solution;
    let exit_gap = ((s.b_star - 0.005) * prob.exit.f_log_deriv(s.b_star).unwrap() - 1.0).abs();
    assert!(exit_gap < 1e-5);
    let h_d = t.entry_value.h(s.d_star).unwrap();
    let right = h_d * prob.entry.g_log_deriv(s.d_star).unwrap();
    let left = t.exit_value.v_d1(s.d_star).unwrap() - 1.0;
    assert!((right - left).abs() < 1e-5);

    let sl = prob.solve_stoploss(0.4834).unwrap();
    let (a, d) = sl.entry.interval.unwrap();
    let b = sl.solution.b_l.unwrap();
    let eps = 1e-9;
    assert!((sl.exit.v_d1(b - eps).unwrap() - 1.0).abs() < 1e-5);
    let in_a = sl.exit.v_d1(a + eps).unwrap() - 1.0;
    assert!((sl.entry.j_d1(a - eps).unwrap() - in_a).abs() < 1e-5);
    let in_d = sl.exit.v_d1(d - eps).unwrap() - 1.0;
    assert!((sl.entry.j_d1(d + eps).unwrap() - in_d).abs() < 1e-5);
}

#[test]
fn exit_level_increases_with_exit_cost() {
    let p = gld();
    let costs = between(0.0, 0.05, 20);
    let levels: Vec<f64> = costs
        .iter()
        .map(|&c| problem(p, c, 0.02).solve_exit_threshold().unwrap())
        .collect();
    assert!(levels.windows(2).all(|w| w[1] > w[0]), "{levels:?}");
    // V is decreasing in c pointwise
    for x in grid(&p, 3.0, 41) {
        let vals: Vec<f64> = costs
            .iter()
            .map(|&c| {
                let prob = problem(p, c, 0.02);
                let b = prob.solve_exit_threshold().unwrap();
                prob.exit_value(b).unwrap().v(x).unwrap()
            })
            .collect();
        assert!(vals.windows(2).all(|w| w[1] < w[0]));
    }
}

#[test]
fn entry_level_non_increasing_in_entry_cost() {
    let p = gld();
    let levels: Vec<f64> = between(0.0, 0.05, 20)
        .iter()
        .map(|&c_hat| problem(p, 0.02, c_hat).solve().unwrap().solution.d_star)
        .collect();
    assert!(levels.windows(2).all(|w| w[1] <= w[0]), "{levels:?}");
}

#[test]
fn stop_exit_level_decreases_to_critical_level() {
    let p = gld();
    let prob = problem(p, 0.05, 0.05);
    let l_star = prob.l_star();
    let b_star = prob.solve_exit_threshold().unwrap();
    let ls = between(0.40, l_star - 1e-4, 20);
    let levels: Vec<f64> = ls
        .iter()
        .map(|&l| prob.solve_exit_stoploss(l).unwrap().b_l.unwrap())
        .collect();
    assert!(levels.windows(2).all(|w| w[1] < w[0]), "{levels:?}");
    assert!(levels.iter().all(|&b| b < b_star && b > l_star));
    // the curve ends at (L*, L*)
    let last = *levels.last().unwrap();
    assert!((last - l_star).abs() < 0.01);
    assert!(prob.solve_exit_stoploss(l_star).unwrap().b_l.is_none());
}

#[test]
fn ordering_chain_with_entry_interval() {
    let p = gld();
    let prob = problem(p, 0.005, 0.005);
    let t = prob.solve().unwrap().solution;
    assert!(t.b_star >= t.l_star.max(0.005));
    assert!(t.x_star < t.l_star.min(0.005));
    assert!(t.d_star < t.d_bar && t.d_bar < t.b_star);
    assert!(t.b_under < t.l_star);
    let s = prob.solve_stoploss(0.4834).unwrap().solution;
    let (a, d, b) = (s.a_l.unwrap(), s.d_l.unwrap(), s.b_l.unwrap());
    assert!(s.l < a && a < d && d < b && b < t.b_star);
}

#[test]
fn exit_transform_shape() {
    let p = gld();
    let c = 0.05;
    let prob = problem(p, c, c);
    let sol = prob.solve().unwrap().solution;
    let e = prob.exit;
    let xs = grid(&p, 3.0, 400);
    let y: Vec<f64> = xs.iter().map(|&x| e.psi(x).unwrap()).collect();
    let h: Vec<f64> = xs.iter().map(|&x| (x - c) / e.g(x).unwrap()).collect();
    for (i, &x) in xs.iter().enumerate() {
        assert_eq!(h[i] > 0.0, x > c);
    }
    let s = slopes(&y, &h);
    for i in 0..s.len() {
        if xs[i + 1] < sol.x_star {
            assert!(s[i] < 0.0);
        } else if xs[i] > sol.x_star {
            assert!(s[i] > 0.0);
        }
    }
    let cut = xs.partition_point(|&x| x < sol.l_star);
    assert!(non_decreasing(&s[..cut.saturating_sub(2)], 1e-9));
    assert!(non_increasing(&s[cut + 1..], 1e-9));
}

#[test]
fn entry_transform_shape() {
    let p = gld();
    let prob = problem(p, 0.02, 0.02);
    let t = prob.solve().unwrap();
    let sol = t.solution;
    let e = prob.entry;
    let xs = grid(&p, 3.0, 400);
    let y: Vec<f64> = xs.iter().map(|&x| e.psi(x).unwrap()).collect();
    let h: Vec<f64> = xs
        .iter()
        .map(|&x| t.entry_value.h(x).unwrap() / e.g(x).unwrap())
        .collect();
    for (i, &x) in xs.iter().enumerate() {
        if x < sol.d_bar - 1e-9 {
            assert!(h[i] > 0.0);
        } else if x > sol.d_bar + 1e-9 {
            assert!(h[i] < 0.0);
        }
    }
    let s = slopes(&y, &h);
    let after_b = xs.partition_point(|&x| x <= sol.b_star);
    assert!(s[after_b..].iter().all(|&v| v < 0.0));
    let infl = xs.partition_point(|&x| x < sol.b_under);
    assert!(non_increasing(&s[..infl.saturating_sub(2)], 1e-9));
    let convex_end = xs.partition_point(|&x| x < sol.b_star).saturating_sub(2);
    assert!(non_decreasing(&s[infl + 1..convex_end], 1e-9));
    assert!(non_decreasing(&s[after_b + 1..], 1e-9));
    // H^(0) = 0
    let far = p.theta - 12.0 * p.stationary_std();
    let h_far = t.entry_value.h(far).unwrap() / e.g(far).unwrap();
    let h_max = h.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    assert!(h_far.abs() < 1e-6 * h_max);
}

#[test]
fn stop_entry_transform_shape() {
    let p = gld();
    let (c, c_hat, l) = (0.005, 0.005, 0.4834);
    let prob = problem(p, c, c_hat);
    let sl = prob.solve_stoploss(l).unwrap();
    let b = sl.solution.b_l.unwrap();
    let e = prob.entry;
    let q = |x: f64| sl.entry.h(x).unwrap() / e.g(x).unwrap();
    // negative and decreasing outside (L, b_L)
    let below = between(p.theta - 5.0 * p.stationary_std(), l, 100);
    let above = between(b, p.theta + 5.0 * p.stationary_std(), 100);
    for part in [&below, &above] {
        let y: Vec<f64> = part.iter().map(|&x| e.psi(x).unwrap()).collect();
        let h: Vec<f64> = part.iter().map(|&x| q(x)).collect();
        assert!(h.iter().all(|&v| v < 0.0));
        let s = slopes(&y, &h);
        assert!(s.iter().all(|&v| v < 0.0));
        assert!(non_decreasing(&s, 1e-9));
    }
    // one sign change of (L - r^) h_L inside (L, b_L)
    let half_var = 0.5 * p.sigma * p.sigma;
    let gen = |x: f64| {
        half_var * sl.exit.v_d2(x).unwrap() + p.mu * (p.theta - x) * (sl.exit.v_d1(x).unwrap() - 1.0)
            - 0.05 * sl.entry.h(x).unwrap()
    };
    let inside = between(l + 1e-6, b - 1e-6, 400);
    let signs: Vec<bool> = inside.iter().map(|&x| gen(x) > 0.0).collect();
    let changes = signs.windows(2).filter(|w| w[0] != w[1]).count();
    assert_eq!(changes, 1);
    let k = signs.windows(2).position(|w| w[0] != w[1]).unwrap();
    let d_bar_l = inside[k];
    let y: Vec<f64> = inside.iter().map(|&x| e.psi(x).unwrap()).collect();
    let h: Vec<f64> = inside.iter().map(|&x| q(x)).collect();
    let s = slopes(&y, &h);
    assert!(non_increasing(&s[..k.saturating_sub(2)], 1e-9));
    assert!(non_decreasing(&s[k + 2..], 1e-9));
    let arg = (0..h.len()).fold(0, |m, i| if h[i] > h[m] { i } else { m });
    assert!(arg > 0 && inside[arg] < d_bar_l);
}

#[test]
fn concave_majorant_matches_closed_form() {
    let p = gld();
    let c = 0.05;
    let prob = problem(p, c, c);
    let t = prob.solve().unwrap();
    let e = prob.exit;
    let b = t.solution.b_star;
    let y_b = e.psi(b).unwrap();
    // uniform in y up to well past the tangency point
    let y_max = e.psi(p.theta + 4.0 * p.stationary_std()).unwrap();
    let n = 4001;
    let ys: Vec<f64> = (0..n).map(|i| y_max * i as f64 / (n - 1) as f64).collect();
    let pts: Vec<(f64, f64)> = ys
        .iter()
        .map(|&y| {
            if y == 0.0 {
                return (0.0, 0.0);
            }
            let x = e.psi_inverse(y).unwrap();
            (y, (x - c).max(0.0) / e.g(x).unwrap())
        })
        .collect();
    let w = discrete_concave_majorant(&pts).unwrap();
    let h = ys[1] - ys[0];
    let w_exact: Vec<f64> = ys.iter().map(|&y| t.exit_value.transformed(y).unwrap()).collect();
    let scale = w_exact.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    // linear interpolation error of a concave curve: h^2 |W''| / 8
    let curv = (1..n - 1)
        .map(|i| (w_exact[i + 1] - 2.0 * w_exact[i] + w_exact[i - 1]).abs() / (h * h))
        .fold(0.0, f64::max);
    let bound = curv * h * h / 8.0 + 1e-12 * scale;
    for i in 0..n {
        assert!((w[i] - w_exact[i]).abs() <= 4.0 * bound, "at y = {}", ys[i]);
    }
    // contact set begins within a grid step of psi(b*)
    let first_contact = (1..n).find(|&i| ys[i] > 0.0 && (w[i] - pts[i].1).abs() <= 1e-12 * scale && ys[i] > y_b * 0.5).unwrap();
    assert!((ys[first_contact] - y_b).abs() <= 2.0 * h);
}

#[test]
fn translation_moves_every_threshold() {
    let p = gld();
    let base = problem(p, 0.005, 0.005);
    let s0 = base.solve_stoploss(0.4834).unwrap().solution;
    let t0 = base.solve().unwrap().solution;
    for k in [-0.3, 0.1, 1.7] {
        let d = DiscountSpec::new(0.05, 0.05, 0.005 + k, 0.005 - k).unwrap();
        let moved = TradingProblem::new(p.shifted(k), d, QuadratureConfig::default()).unwrap();
        let s1 = moved.solve_stoploss(0.4834 + k).unwrap().solution;
        let t1 = moved.solve().unwrap().solution;
        let tol = 1e-8;
        assert!((t1.b_star - t0.b_star - k).abs() < tol);
        assert!((t1.d_star - t0.d_star - k).abs() < tol);
        assert!((s1.b_l.unwrap() - s0.b_l.unwrap() - k).abs() < tol);
        assert!((s1.a_l.unwrap() - s0.a_l.unwrap() - k).abs() < tol);
        assert!((s1.d_l.unwrap() - s0.d_l.unwrap() - k).abs() < tol);
    }
}

#[test]
fn relative_stop_entry_properties() {
    let p = gld();
    let prob = problem(p, 0.005, 0.005);
    let rel = prob
        .solve_relative_stoploss(&RelativeStopLossSpec::with_default_grid(0.03, &p))
        .unwrap();
    let d = rel.d_star.unwrap();
    let b = rel.b_star.unwrap();
    assert!((rel.effective_stop.unwrap() - (d - 0.03)).abs() < 1e-15);
    assert!(d < b);
    for i in 0..rel.x.len() {
        assert!(rel.entry_value[i] >= rel.entry_reward[i] - 1e-12);
        assert!(rel.entry_value[i] >= -1e-15);
        assert!(rel.exit_value[i] >= rel.x[i] - 0.005 - 1e-12);
    }
    // a tighter stop cannot raise the exit value
    let tighter = prob
        .solve_relative_stoploss(&RelativeStopLossSpec::with_default_grid(0.01, &p))
        .unwrap();
    for i in 0..rel.x.len() {
        assert!(tighter.exit_value[i] <= rel.exit_value[i] + 1e-12);
    }
}
