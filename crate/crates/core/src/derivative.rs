//! Flow derivative `Y_t = E + int_0^t dA_s Y_s` along a discretised functional.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::drift::Drift;
use crate::error::{check_dim, Error, Result};
use crate::functional::{gradient_functional, FunctionalPath, Route};
use crate::sde::{simulate_one, BrownianPath, FlowPath, TimeGrid};

/// Per-step update of the Stieltjes recursion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StieltjesRule {
    /// `Y_{k+1} = exp(dA_k) Y_k`.
    #[default]
    Exponential,
    /// `Y_{k+1} = (I + dA_k) Y_k`.
    LeftPoint,
    /// `Y_{k+1} = (I - dA_k/2)^{-1} (I + dA_k/2) Y_k`.
    Midpoint,
}

/// Largest entry-sum of a single increment above which the left-point rule warns.
pub const LEFT_POINT_GUARD: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivativePath {
    pub dimension: usize,
    pub grid: TimeGrid,
    pub rule: StieltjesRule,
    pub route: Route,
    /// `(steps + 1) * d * d`, row-major.
    pub values: Vec<f64>,
    /// `Var A_{t_k}`.
    pub variation: Vec<f64>,
    /// `max_k sum_ij |dA^{ij}_k|`.
    pub max_increment: f64,
}

impl DerivativePath {
    pub fn steps(&self) -> usize {
        self.grid.steps
    }

    pub fn at(&self, k: usize) -> &[f64] {
        let m = self.dimension * self.dimension;
        &self.values[k * m..(k + 1) * m]
    }

    pub fn terminal(&self) -> &[f64] {
        self.at(self.steps())
    }

    /// Max-entry norm of `Y_{t_k}`.
    pub fn norm(&self, k: usize) -> f64 {
        self.at(k).iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Frobenius norm of `Y_{t_k}`.
    pub fn frobenius(&self, k: usize) -> f64 {
        self.at(k).iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Rows `(t, vec(Y_t), Var A_t)`.
    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..=self.steps())
            .map(|k| {
                let mut r = Vec::with_capacity(2 + self.at(k).len());
                r.push(self.grid.time(k));
                r.extend_from_slice(self.at(k));
                r.push(self.variation[k]);
                r
            })
            .collect()
    }
}

/// `Var A_t = sum_ij (A^{ij,+}_t + A^{ij,-}_t)`.
pub fn variation(a: &FunctionalPath) -> Vec<f64> {
    a.variation_path()
}

fn identity(d: usize) -> Vec<f64> {
    let mut e = vec![0.0; d * d];
    for i in 0..d {
        e[i * d + i] = 1.0;
    }
    e
}

/// Solve from `Y_0 = E`.
pub fn solve_stieltjes(a: &FunctionalPath, rule: StieltjesRule) -> Result<DerivativePath> {
    solve_stieltjes_from(a, &identity(a.dimension), rule)
}

/// Solve from `Y_0 = M` (row-major `d x d`).
pub fn solve_stieltjes_from(a: &FunctionalPath, initial: &[f64], rule: StieltjesRule) -> Result<DerivativePath> {
    let d = a.dimension;
    let m = d * d;
    check_dim(m, initial.len())?;
    let k_max = a.steps();
    let mut values = Vec::with_capacity((k_max + 1) * m);
    values.extend_from_slice(initial);
    let mut y = DMatrix::from_row_slice(d, d, initial);
    let eye = DMatrix::<f64>::identity(d, d);
    let mut inc = vec![0.0; m];
    let mut max_increment: f64 = 0.0;
    for k in 0..k_max {
        a.increment_into(k, &mut inc);
        max_increment = max_increment.max(inc.iter().map(|v| v.abs()).sum());
        let da = DMatrix::from_row_slice(d, d, &inc);
        let step = match rule {
            StieltjesRule::Exponential => {
                if d == 1 {
                    DMatrix::from_element(1, 1, inc[0].exp())
                } else {
                    da.exp()
                }
            }
            StieltjesRule::LeftPoint => &eye + &da,
            StieltjesRule::Midpoint => {
                let half = &da * 0.5;
                let lhs = &eye - &half;
                match lhs.lu().solve(&(&eye + &half)) {
                    Some(s) => s,
                    None => return Err(Error::Divergence { step: k + 1 }),
                }
            }
        };
        y = step * y;
        if !y.iter().all(|v| v.is_finite()) {
            return Err(Error::Divergence { step: k + 1 });
        }
        for i in 0..d {
            for j in 0..d {
                values.push(y[(i, j)]);
            }
        }
    }
    if rule == StieltjesRule::LeftPoint && max_increment > LEFT_POINT_GUARD {
        log::warn!("largest functional increment {max_increment:.3e} exceeds {LEFT_POINT_GUARD}; refine the time step");
    }
    Ok(DerivativePath { dimension: d, grid: a.grid, rule, route: a.route, values, variation: variation(a), max_increment })
}

/// Solve `dY = grad a(phi_t) Y dt` with increments from the drift's gradient density.
pub fn solve_smooth_ode(path: &FlowPath, drift: &dyn Drift, rule: StieltjesRule) -> Result<DerivativePath> {
    solve_stieltjes(&gradient_functional(path, drift, Route::Direct)?, rule)
}

/// Adaptive Dormand–Prince solution of `dY/dt = G(t) Y` with `G` linear in
/// time between grid nodes, `G(t_k) = grad a(phi_{t_k})`. Returns `Y_T`.
pub fn ode_oracle(path: &FlowPath, drift: &dyn Drift, rtol: f64) -> Result<Vec<f64>> {
    let d = drift.dimension();
    let m = d * d;
    let dt = path.grid.dt;
    let mut x = vec![0.0; d];
    let grads: Vec<Vec<f64>> = (0..=path.steps())
        .map(|k| {
            path.state_into(k, &mut x);
            let (mut p, mut n) = (vec![0.0; m], vec![0.0; m]);
            if !drift.gradient_parts(&x, &mut p, &mut n) {
                return Err(Error::InvalidArgument(format!("drift {} has no gradient density", drift.label())));
            }
            Ok(p.iter().zip(&n).map(|(a, b)| a - b).collect())
        })
        .collect::<Result<_>>()?;
    let mut y = identity(d);
    let rhs = |g0: &[f64], g1: &[f64], s: f64, y: &[f64], out: &mut [f64]| {
        for i in 0..d {
            for j in 0..d {
                let mut acc = 0.0;
                for l in 0..d {
                    let g = g0[i * d + l] + (g1[i * d + l] - g0[i * d + l]) * s;
                    acc += g * y[l * d + j];
                }
                out[i * d + j] = acc;
            }
        }
    };
    // Dormand–Prince 5(4) tableau
    const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
    const A: [[f64; 6]; 7] = [
        [0.0; 6],
        [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
        [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
        [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
        [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
        [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
    ];
    const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
    const B4: [f64; 7] = [5179.0 / 57600.0, 0.0, 7571.0 / 16695.0, 393.0 / 640.0, -92097.0 / 339200.0, 187.0 / 2100.0, 1.0 / 40.0];
    let mut ks = vec![vec![0.0; m]; 7];
    let mut tmp = vec![0.0; m];
    let mut y5 = vec![0.0; m];
    let mut h: f64 = 1.0; // fraction of a grid step
    for k in 0..path.steps() {
        let (g0, g1) = (&grads[k], &grads[k + 1]);
        let mut s: f64 = 0.0;
        while s < 1.0 {
            h = h.min(1.0 - s);
            for st in 0..7 {
                for e in 0..m {
                    tmp[e] = y[e] + h * dt * (0..st).map(|q| A[st][q] * ks[q][e]).sum::<f64>();
                }
                let (head, tail) = ks.split_at_mut(st);
                let _ = head;
                rhs(g0, g1, s + C[st] * h, &tmp, &mut tail[0]);
            }
            let mut err: f64 = 0.0;
            for e in 0..m {
                y5[e] = y[e] + h * dt * (0..7).map(|q| B5[q] * ks[q][e]).sum::<f64>();
                let y4 = y[e] + h * dt * (0..7).map(|q| B4[q] * ks[q][e]).sum::<f64>();
                let scale = rtol * y[e].abs().max(y5[e].abs()) + 1e-3 * rtol;
                err = err.max((y5[e] - y4).abs() / scale);
            }
            if err <= 1.0 {
                s += h;
                y.copy_from_slice(&y5);
            }
            h *= (0.9 * err.max(1e-10).powf(-0.2)).clamp(0.2, 5.0);
            if h < 1e-12 {
                return Err(Error::Quadrature("ode oracle step size underflow".into()));
            }
        }
    }
    Ok(y)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GronwallReport {
    pub holds: bool,
    pub tolerance: f64,
    /// Largest `||Y_t|| / exp(Var A_t)`.
    pub max_ratio: f64,
    pub worst_step: usize,
    pub worst_time: f64,
    pub max_increment: f64,
}

/// `||Y_t|| <= exp(Var A_t) (1 + 1e-9 K)` at every grid node, max-entry norm.
pub fn gronwall_check(y: &DerivativePath) -> GronwallReport {
    let tolerance = 1e-9 * y.steps() as f64;
    let mut max_ratio: f64 = 0.0;
    let mut worst_step = 0;
    for k in 0..=y.steps() {
        let r = y.norm(k) / y.variation[k].exp();
        if r > max_ratio {
            max_ratio = r;
            worst_step = k;
        }
    }
    GronwallReport {
        holds: max_ratio <= 1.0 + tolerance,
        tolerance,
        max_ratio,
        worst_step,
        worst_time: y.grid.time(worst_step),
        max_increment: y.max_increment,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NewtonLeibniz {
    pub alpha: f64,
    pub u_points: usize,
    /// `phi_T(x + alpha h) - phi_T(x)`.
    pub difference: Vec<f64>,
    /// Trapezoid sum of `Y_T(x + u h) h` over `u in [0, alpha]`.
    pub integral: Vec<f64>,
    pub residual: f64,
}

/// Residual of `phi_T(x + alpha h) = phi_T(x) + int_0^alpha Y_T(x + u h) h du`
/// with a `u_points` trapezoid grid.
pub fn newton_leibniz_check(
    drift: &dyn Drift,
    x: &[f64],
    h: &[f64],
    alpha: f64,
    u_points: usize,
    brownian: &BrownianPath,
    rule: StieltjesRule,
) -> Result<NewtonLeibniz> {
    let d = drift.dimension();
    check_dim(d, x.len())?;
    check_dim(d, h.len())?;
    if u_points < 2 {
        return Err(Error::InvalidArgument("need at least two u points".into()));
    }
    let du = alpha / (u_points - 1) as f64;
    let mut integral = vec![0.0; d];
    let mut first = Vec::new();
    let mut last = Vec::new();
    for q in 0..u_points {
        let u = q as f64 * du;
        let start: Vec<f64> = (0..d).map(|i| x[i] + u * h[i]).collect();
        let flow = simulate_one(drift, &start, brownian)?;
        let y = solve_smooth_ode(&flow, drift, rule)?;
        let yt = y.terminal();
        let w = if q == 0 || q == u_points - 1 { 0.5 * du } else { du };
        for i in 0..d {
            integral[i] += w * (0..d).map(|j| yt[i * d + j] * h[j]).sum::<f64>();
        }
        if q == 0 {
            first = flow.terminal();
        }
        if q == u_points - 1 {
            last = flow.terminal();
        }
    }
    let difference: Vec<f64> = last.iter().zip(&first).map(|(a, b)| a - b).collect();
    let residual = difference.iter().zip(&integral).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    Ok(NewtonLeibniz { alpha, u_points, difference, integral, residual })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::drift::DriftDecl;
    use crate::functional::{measure_functional, SojournRule};
    use crate::sde::sample_brownian;

    fn tanh2() -> crate::drift::DriftSpec {
        DriftDecl::LinearTanh { amplitude: vec![1.0, -0.7], weights: vec![vec![1.2, -0.4], vec![0.5, 0.9]], offset: Some(vec![0.1, -0.2]) }
            .build()
            .unwrap()
    }

    #[test]
    fn zero_functional_gives_identity() {
        let grid = TimeGrid::new(1.0, 0.01).unwrap();
        let a = FunctionalPath::zero(Route::Direct, 3, grid);
        for rule in [StieltjesRule::Exponential, StieltjesRule::LeftPoint, StieltjesRule::Midpoint] {
            let y = solve_stieltjes(&a, rule).unwrap();
            assert!(y.values.chunks(9).all(|c| c == identity(3).as_slice()));
            assert!(gronwall_check(&y).holds);
        }
    }

    #[test]
    fn linear_functional_converges_to_exponential() {
        let c = 0.8;
        let mut errs = Vec::new();
        for dt in [1e-2, 1e-3] {
            let grid = TimeGrid::new(1.0, dt).unwrap();
            let plus: Vec<f64> = (0..=grid.steps).map(|k| c * grid.time(k)).collect();
            let a = FunctionalPath::scalar(Route::Direct, grid, plus, vec![0.0; grid.steps + 1]);
            let exact = solve_stieltjes(&a, StieltjesRule::Exponential).unwrap();
            assert!((exact.terminal()[0] / c.exp() - 1.0).abs() < 1e-13);
            let y = solve_stieltjes(&a, StieltjesRule::LeftPoint).unwrap();
            errs.push((y.terminal()[0] - c.exp()).abs());
            let g = gronwall_check(&y);
            assert!(g.holds && g.max_ratio <= 1.0);
        }
        assert!((errs[0] / errs[1] - 10.0).abs() < 0.5);
    }

    #[test]
    fn variation_of_linear_plus() {
        let grid = TimeGrid::new(1.0, 0.1).unwrap();
        let plus: Vec<f64> = (0..=grid.steps).map(|k| grid.time(k)).collect();
        let a = FunctionalPath::scalar(Route::Direct, grid, plus.clone(), vec![0.0; grid.steps + 1]);
        assert_eq!(variation(&a), plus);
    }

    #[test]
    fn initial_matrix_linearity() {
        let spec = tanh2();
        let flow = simulate_one(&spec, &[0.2, -0.1], &sample_brownian(5, 2, 1.0, 1e-3).unwrap()).unwrap();
        let a = gradient_functional(&flow, &spec, Route::Direct).unwrap();
        let mm = [0.3, -1.0, 2.0, 0.5];
        for rule in [StieltjesRule::Exponential, StieltjesRule::LeftPoint, StieltjesRule::Midpoint] {
            let y = solve_stieltjes(&a, rule).unwrap();
            let ym = solve_stieltjes_from(&a, &mm, rule).unwrap();
            let prod = DMatrix::from_row_slice(2, 2, y.terminal()) * DMatrix::from_row_slice(2, 2, &mm);
            for i in 0..2 {
                for j in 0..2 {
                    assert!((prod[(i, j)] - ym.terminal()[i * 2 + j]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn smooth_ode_matches_oracle_and_stieltjes() {
        let spec = tanh2();
        let flow = simulate_one(&spec, &[0.2, -0.1], &sample_brownian(6, 2, 1.0, 1e-3).unwrap()).unwrap();
        let y = solve_smooth_ode(&flow, &spec, StieltjesRule::Exponential).unwrap();
        let a = gradient_functional(&flow, &spec, Route::Mollified { n: f64::INFINITY }).unwrap();
        let z = solve_stieltjes(&a, StieltjesRule::Exponential).unwrap();
        assert_eq!(y.values, z.values);
        let oracle = ode_oracle(&flow, &spec, 1e-12).unwrap();
        let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let gap = norm(&y.terminal().iter().zip(&oracle).map(|(a, b)| a - b).collect::<Vec<_>>()) / norm(&oracle);
        assert!(gap < 1e-6, "{gap}");
    }

    #[test]
    fn constant_and_zero_drift_newton_leibniz_exact() {
        let bm = sample_brownian(8, 2, 1.0, 1e-2).unwrap();
        for decl in [DriftDecl::Zero { dimension: 2 }, DriftDecl::Constant { value: vec![0.4, -1.0] }] {
            let spec = decl.build().unwrap();
            let r = newton_leibniz_check(&spec, &[0.1, 0.2], &[1.0, -0.5], 0.5, 9, &bm, StieltjesRule::Exponential).unwrap();
            assert!(r.residual < 1e-15, "{}", r.residual);
        }
    }

    #[test]
    fn sign_drift_scalar_exponential() {
        let spec = DriftDecl::Sign { beta: 0.5 }.build().unwrap();
        let gm = spec.gradient_measures().unwrap();
        let flow = simulate_one(&spec, &[0.0], &sample_brownian(9, 1, 1.0, 1e-3).unwrap()).unwrap();
        let a = measure_functional(&flow, &gm, Route::LocalTime { epsilon: 0.0, rule: SojournRule::BridgeExact }).unwrap();
        let y = solve_stieltjes(&a, StieltjesRule::Exponential).unwrap();
        let at = a.value(a.steps())[0];
        assert!((y.terminal()[0] / at.exp() - 1.0).abs() < 1e-12);
        assert!((y.variation[y.steps()] - at).abs() < 1e-15);
        assert!(gronwall_check(&y).holds);
    }
}
