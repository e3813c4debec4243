//! Monte Carlo checks against closed forms and convergence slopes.

use bvflow::derivative::{solve_smooth_ode, StieltjesRule};
use bvflow::drift::{Drift, DriftDecl};
use bvflow::functional::{gradient_functional, h_approx_functional, occupation_functional, HApprox, Route};
use bvflow::measure::{characteristic, MeasureComponent};
use bvflow::sde::{simulate_one, BrownianPath, FlowPath, TimeGrid};
use bvflow::stats::{trend_verdict, Estimate, Verdict};
use rayon::prelude::*;

fn estimate<F: Fn(u64) -> f64 + Sync + Send>(n: u64, f: F) -> Estimate {
    let v: Vec<f64> = (0..n).into_par_iter().map(f).collect();
    Estimate::from_samples(&v)
}

#[test]
fn h_approx_mean_matches_characteristic_on_x_grid() {
    let comps = vec![MeasureComponent::Atom { location: vec![0.0], mass: 1.0 }];
    let approx = HApprox::new(comps.clone(), 1, 0.01).unwrap();
    let wiener = DriftDecl::Zero { dimension: 1 }.build().unwrap();
    let grid = TimeGrid::new(1.0, 1e-3).unwrap();
    // at least 5 sqrt(h) away from the atom
    for (k, x) in [-1.2, -0.8, -0.5, 0.5, 0.9].into_iter().enumerate() {
        let e = estimate(4000, |i| {
            let p = simulate_one(&wiener, &[x], &BrownianPath::sample(20 + k as u64, i, 1, grid)).unwrap();
            *h_approx_functional(&p, &approx).unwrap().last().unwrap()
        });
        let f = characteristic(&comps, 1.0, &[x]).unwrap();
        assert!(e.matches(f, 3.0), "x={x}: {} +- {} vs {f}", e.estimate, e.std_error);
    }
}

#[test]
fn h_approx_bias_at_the_atom_shrinks_with_h() {
    let comps = vec![MeasureComponent::Atom { location: vec![0.0], mass: 1.0 }];
    let wiener = DriftDecl::Zero { dimension: 1 }.build().unwrap();
    let grid = TimeGrid::new(1.0, 1e-3).unwrap();
    let f = characteristic(&comps, 1.0, &[0.0]).unwrap();
    let gaps: Vec<(f64, f64)> = [0.1, 0.03, 0.01]
        .iter()
        .map(|&h| {
            let approx = HApprox::new(comps.clone(), 1, h).unwrap();
            let e = estimate(4000, |i| {
                let p = simulate_one(&wiener, &[0.0], &BrownianPath::sample(25, i, 1, grid)).unwrap();
                *h_approx_functional(&p, &approx).unwrap().last().unwrap()
            });
            ((f - e.estimate).abs(), e.std_error)
        })
        .collect();
    assert_eq!(trend_verdict(&gaps, 0.0), Verdict::Decreasing, "{gaps:?}");
}

#[test]
fn half_line_occupation_has_mean_one_half() {
    let wiener = DriftDecl::Zero { dimension: 1 }.build().unwrap();
    let grid = TimeGrid::new(1.0, 1e-3).unwrap();
    let e = estimate(20_000, |i| {
        let p = simulate_one(&wiener, &[0.0], &BrownianPath::sample(31, i, 1, grid)).unwrap();
        *occupation_functional(&p, |x| f64::from(u8::from(x[0] > 0.0))).last().unwrap()
    });
    assert!(e.matches(0.5, 3.0), "{} +- {}", e.estimate, e.std_error);
}

#[test]
fn ornstein_uhlenbeck_mean_and_derivative() {
    // a(x) = -x inside a window that paths never leave
    let ou = DriftDecl::LinearWindow { matrix: vec![vec![-1.0]], half_width: 50.0 }.build().unwrap();
    let grid = TimeGrid::new(1.0, 1e-3).unwrap();
    let x0 = 1.5;
    let e = estimate(20_000, |i| simulate_one(&ou, &[x0], &BrownianPath::sample(41, i, 1, grid)).unwrap().terminal()[0]);
    let euler_mean = x0 * (1.0 - grid.dt).powi(grid.steps as i32);
    assert!(e.matches(euler_mean, 3.0), "{} +- {} vs {euler_mean}", e.estimate, e.std_error);
    let p = simulate_one(&ou, &[x0], &BrownianPath::sample(41, 0, 1, grid)).unwrap();
    let y = solve_smooth_ode(&p, &ou, StieltjesRule::Exponential).unwrap();
    assert!((y.terminal()[0] - (-1.0f64).exp()).abs() < 1e-12);
}

/// Euler path on every `stride`-th node of a fine path.
fn coarsen(fine: &BrownianPath, stride: usize) -> BrownianPath {
    let d = fine.dimension;
    let steps = fine.grid.steps / stride;
    let mut inc = vec![0.0; steps * d];
    for k in 0..steps {
        for s in 0..stride {
            for i in 0..d {
                inc[k * d + i] += fine.increments[(k * stride + s) * d + i];
            }
        }
    }
    BrownianPath { grid: TimeGrid::new(fine.grid.t_end, fine.grid.dt * stride as f64).unwrap(), dimension: d, seed: fine.seed, stream: fine.stream, increments: inc }
}

fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let (lx, ly): (Vec<f64>, Vec<f64>) = (xs.iter().map(|v| v.ln()).collect(), ys.iter().map(|v| v.ln()).collect());
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let num: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let den: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    num / den
}

#[test]
fn euler_strong_order_and_richardson_slopes_near_one() {
    let drift = DriftDecl::catalogue().into_iter().find(|d| d.id() == "linear-tanh").unwrap().build().unwrap();
    let x = [0.3, -0.2];
    let fine_grid = TimeGrid::new(1.0, 1.0 / 3200.0).unwrap();
    let strides = [64usize, 32, 16, 8];
    let rows: Vec<Vec<f64>> = (0..400u64)
        .into_par_iter()
        .map(|i| {
            let fine = BrownianPath::sample(51, i, 2, fine_grid);
            let reference = simulate_one(&drift, &x, &fine).unwrap().terminal();
            let mut out = Vec::new();
            let terminals: Vec<Vec<f64>> = strides.iter().map(|&s| simulate_one(&drift, &x, &coarsen(&fine, s)).unwrap().terminal()).collect();
            for t in &terminals {
                out.push(t.iter().zip(&reference).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt());
            }
            for w in terminals.windows(2) {
                out.push(w[0].iter().zip(&w[1]).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt());
            }
            out
        })
        .collect();
    let mean = |c: usize| rows.iter().map(|r| r[c]).sum::<f64>() / rows.len() as f64;
    let dts: Vec<f64> = strides.iter().map(|&s| s as f64 / 3200.0).collect();
    let strong: Vec<f64> = (0..4).map(mean).collect();
    let rich: Vec<f64> = (4..7).map(mean).collect();
    let s1 = slope(&dts, &strong);
    let s2 = slope(&dts[..3], &rich);
    assert!((0.7..=1.3).contains(&s1), "strong slope {s1}: {strong:?}");
    assert!((0.7..=1.3).contains(&s2), "Richardson slope {s2}: {rich:?}");
}

/// `E sup_t |A^{11,+}_n - A^{11,+}_{2n}|` along the unsmoothed flow.
#[test]
fn ball_indicator_functional_is_cauchy_in_n() {
    let spec = DriftDecl::IndicatorBall { center: vec![0.3, 0.0], radius: 0.5, value: vec![1.0, -0.5], base: None }.build().unwrap();
    let levels = [2.0, 4.0, 8.0, 16.0];
    let smoothed: Vec<_> = levels.iter().map(|&n| spec.mollify(n)).collect();
    let grid = TimeGrid::new(1.0, 2.5e-4).unwrap();
    let rows: Vec<Vec<f64>> = (0..200u64)
        .into_par_iter()
        .map(|i| {
            let p: FlowPath = simulate_one(&spec, &[0.0, 0.0], &BrownianPath::sample(61, i, 2, grid)).unwrap();
            let a: Vec<Vec<f64>> = smoothed.iter().map(|m| {
                    let f = gradient_functional(&p, m as &dyn Drift, Route::Mollified { n: m.n }).unwrap();
                    (0..=f.steps()).map(|k| f.plus_at(k)[0]).collect()
                })
                .collect();
            a.windows(2).map(|w| w[0].iter().zip(&w[1]).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)).collect()
        })
        .collect();
    let pts: Vec<(f64, f64)> = (0..3)
        .map(|c| {
            let e = Estimate::from_samples(&rows.iter().map(|r| r[c]).collect::<Vec<_>>());
            (e.estimate, e.std_error)
        })
        .collect();
    assert_eq!(trend_verdict(&pts, 0.0), Verdict::Decreasing, "{pts:?}");
}
