use bvflow::derivative::{gronwall_check, solve_stieltjes, solve_stieltjes_from, StieltjesRule};
use bvflow::drift::{Drift, DriftDecl};
use bvflow::functional::{gradient_functional, Route};
use bvflow::harness::SchedulePoint;
use bvflow::io::{parse_plot_csv, plot_csv, Header};
use bvflow::kernel::radial_kernel;
use bvflow::sde::{simulate_flow, simulate_one, BrownianPath, TimeGrid};
use proptest::prelude::*;

fn grid() -> TimeGrid {
    TimeGrid::new(1.0, 1e-2).unwrap()
}

fn tanh_decl() -> impl Strategy<Value = DriftDecl> {
    (prop::collection::vec(-2.0..2.0f64, 2), prop::collection::vec(-2.0..2.0f64, 4), prop::collection::vec(-1.0..1.0f64, 2)).prop_map(|(a, w, o)| {
        DriftDecl::LinearTanh { amplitude: a, weights: vec![w[..2].to_vec(), w[2..].to_vec()], offset: Some(o) }
    })
}

fn ball_decl() -> impl Strategy<Value = DriftDecl> {
    (-0.5..0.5f64, -0.5..0.5f64, 0.2..1.0f64, -2.0..2.0f64, -2.0..2.0f64)
        .prop_map(|(cx, cy, r, v0, v1)| DriftDecl::IndicatorBall { center: vec![cx, cy], radius: r, value: vec![v0, v1], base: None })
}

fn finite_or_inf() -> impl Strategy<Value = f64> {
    prop_oneof![any::<f64>().prop_filter("not nan", |v| !v.is_nan()), Just(f64::INFINITY), Just(-0.0)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn smoothed_functional_components_are_monotone(decl in ball_decl(), n in 2.0..32.0f64, seed in 0u64..1000) {
        let spec = decl.build().unwrap();
        let m = spec.mollify(n);
        let p = simulate_one(&m, &[0.0, 0.0], &BrownianPath::sample(seed, 0, 2, grid())).unwrap();
        let a = gradient_functional(&p, &m as &dyn Drift, Route::Mollified { n }).unwrap();
        prop_assert!(a.is_monotone());
    }

    #[test]
    fn gronwall_holds_for_smooth_drifts(decl in tanh_decl(), seed in 0u64..1000, rule in prop_oneof![Just(StieltjesRule::Exponential), Just(StieltjesRule::Midpoint)]) {
        let spec = decl.build().unwrap();
        let p = simulate_one(&spec, &[0.1, 0.2], &BrownianPath::sample(seed, 1, 2, grid())).unwrap();
        let y = solve_stieltjes(&gradient_functional(&p, &spec, Route::Direct).unwrap(), rule).unwrap();
        let g = gronwall_check(&y);
        prop_assert!(g.holds, "ratio {}", g.max_ratio);
    }

    #[test]
    fn derivative_is_linear_in_initial_matrix(decl in tanh_decl(), seed in 0u64..1000, a in -3.0..3.0f64, b in -3.0..3.0f64) {
        let spec = decl.build().unwrap();
        let p = simulate_one(&spec, &[0.0, 0.0], &BrownianPath::sample(seed, 2, 2, grid())).unwrap();
        let f = gradient_functional(&p, &spec, Route::Direct).unwrap();
        let (m1, m2) = ([1.0, 2.0, -1.0, 0.5], [0.0, -1.0, 3.0, 1.0]);
        let mix: Vec<f64> = m1.iter().zip(&m2).map(|(x, y)| a * x + b * y).collect();
        let y1 = solve_stieltjes_from(&f, &m1, StieltjesRule::Exponential).unwrap();
        let y2 = solve_stieltjes_from(&f, &m2, StieltjesRule::Exponential).unwrap();
        let ym = solve_stieltjes_from(&f, &mix, StieltjesRule::Exponential).unwrap();
        for ((u, v), w) in y1.terminal().iter().zip(y2.terminal()).zip(ym.terminal()) {
            let want = a * u + b * v;
            prop_assert!((w - want).abs() <= 1e-10 * (1.0 + want.abs()));
        }
    }

    #[test]
    fn coupled_flow_does_not_depend_on_point_order(decl in ball_decl(), seed in 0u64..1000, xs in prop::collection::vec(prop::collection::vec(-1.0..1.0f64, 2), 2..6)) {
        let spec = decl.build().unwrap();
        let bm = BrownianPath::sample(seed, 3, 2, grid());
        let forward = simulate_flow(&spec, &xs, &bm).unwrap();
        let rev: Vec<Vec<f64>> = xs.iter().rev().cloned().collect();
        let backward = simulate_flow(&spec, &rev, &bm).unwrap();
        for (f, b) in forward.iter().zip(backward.iter().rev()) {
            prop_assert_eq!(f.states(), b.states());
        }
    }

    #[test]
    fn smoothing_does_not_increase_sup_norm(decl in ball_decl(), n in 1.0..64.0f64, x in prop::collection::vec(-1.5..1.5f64, 2)) {
        let spec = decl.build().unwrap();
        let m = spec.mollify(n);
        let mut out = [0.0; 2];
        m.eval(&x, &mut out);
        prop_assert!(out.iter().map(|v| v * v).sum::<f64>().sqrt() <= spec.sup_norm_bound() * (1.0 + 1e-9));
    }

    #[test]
    fn kernel_positive_and_increasing_in_t(t in 1e-3..10.0f64, r in 1e-3..5.0f64, d in 1usize..5) {
        let a = radial_kernel(t, r, d).unwrap();
        let b = radial_kernel(t * 1.5, r, d).unwrap();
        prop_assert!(a >= 0.0 && b >= a);
    }

    #[test]
    fn plot_csv_round_trips(rows in prop::collection::vec((finite_or_inf(), finite_or_inf(), finite_or_inf(), prop::option::of(finite_or_inf())), 0..20)) {
        let pts: Vec<SchedulePoint> = rows.iter().map(|&(s, e, se, b)| SchedulePoint { schedule_value: s, estimate: e, std_error: se, bound: b }).collect();
        let back = parse_plot_csv(&plot_csv(&Header::new("p", 0), &pts)).unwrap();
        prop_assert_eq!(back.len(), pts.len());
        for (a, b) in pts.iter().zip(&back) {
            prop_assert_eq!(a.schedule_value.to_bits(), b.schedule_value.to_bits());
            prop_assert_eq!(a.estimate.to_bits(), b.estimate.to_bits());
            prop_assert_eq!(a.std_error.to_bits(), b.std_error.to_bits());
            prop_assert_eq!(a.bound.map(f64::to_bits), b.bound.map(f64::to_bits));
        }
    }

    #[test]
    fn same_stream_same_noise(seed in any::<u64>(), stream in any::<u64>()) {
        let a = BrownianPath::sample(seed, stream, 2, grid());
        let b = BrownianPath::sample(seed, stream, 2, grid());
        prop_assert_eq!(a.increments, b.increments);
    }
}
