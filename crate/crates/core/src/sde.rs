//! Euler–Maruyama flows `d phi = a(phi) dt + dw` driven by shared Brownian increments.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::drift::Drift;
use crate::error::{check_dim, Error, Result};
use crate::rng::stream_rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub t_end: f64,
    pub dt: f64,
    pub steps: usize,
}

impl TimeGrid {
    /// Uniform grid on `[0, t_end]`; `dt` is shrunk to divide `t_end` when needed.
    pub fn new(t_end: f64, dt: f64) -> Result<Self> {
        if !(t_end > 0.0 && t_end.is_finite()) || !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidArgument(format!("need T > 0 and dt > 0, got T = {t_end}, dt = {dt}")));
        }
        let ratio = t_end / dt;
        let steps = ratio.round().max(1.0) as usize;
        let steps = if (ratio - steps as f64).abs() <= 1e-9 * ratio { steps } else { ratio.ceil() as usize };
        let adjusted = t_end / steps as f64;
        if (adjusted - dt).abs() > 1e-12 * dt {
            log::warn!("time step {dt} does not divide T = {t_end}; using {adjusted}");
        }
        Ok(TimeGrid { t_end, dt: adjusted, steps })
    }

    #[inline]
    pub fn time(&self, k: usize) -> f64 {
        if k == self.steps {
            self.t_end
        } else {
            k as f64 * self.dt
        }
    }

    /// Grid with half the step.
    pub fn halved(&self) -> TimeGrid {
        TimeGrid { t_end: self.t_end, dt: self.t_end / (2 * self.steps) as f64, steps: 2 * self.steps }
    }
}

/// Brownian increments on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct BrownianPath {
    pub grid: TimeGrid,
    pub dimension: usize,
    pub seed: u64,
    pub stream: u64,
    /// `steps * dimension` increments, row-major by step.
    pub increments: Vec<f64>,
}

impl BrownianPath {
    pub fn sample(seed: u64, stream: u64, dimension: usize, grid: TimeGrid) -> Self {
        let mut rng = stream_rng(seed, stream);
        let sd = grid.dt.sqrt();
        let increments = (0..grid.steps * dimension).map(|_| sd * rng.sample::<f64, _>(StandardNormal)).collect();
        BrownianPath { grid, dimension, seed, stream, increments }
    }

    #[inline]
    pub fn increment(&self, k: usize) -> &[f64] {
        &self.increments[k * self.dimension..(k + 1) * self.dimension]
    }

    /// Brownian-bridge refinement to step `dt / 2`; `salt` selects the bridge noise.
    pub fn refine(&self, salt: u64) -> BrownianPath {
        let mut rng = stream_rng(self.seed ^ 0x9e37_79b9_7f4a_7c15, self.stream.wrapping_add(salt.wrapping_mul(0x1000_0000_0001)));
        let grid = self.grid.halved();
        let d = self.dimension;
        let sd = (self.grid.dt / 4.0).sqrt();
        let mut increments = Vec::with_capacity(2 * self.increments.len());
        for k in 0..self.grid.steps {
            let dw = self.increment(k);
            let z: Vec<f64> = (0..d).map(|_| sd * rng.sample::<f64, _>(StandardNormal)).collect();
            increments.extend(dw.iter().zip(&z).map(|(w, z)| 0.5 * w + z));
            increments.extend(dw.iter().zip(&z).map(|(w, z)| 0.5 * w - z));
        }
        BrownianPath { grid, dimension: d, seed: self.seed, stream: self.stream, increments }
    }

    /// `w_{t_k} - w_0` for every grid time, row-major.
    pub fn cumulative(&self) -> Vec<f64> {
        let d = self.dimension;
        let mut out = vec![0.0; (self.grid.steps + 1) * d];
        for k in 0..self.grid.steps {
            for i in 0..d {
                out[(k + 1) * d + i] = out[k * d + i] + self.increments[k * d + i];
            }
        }
        out
    }
}

/// `sample_brownian(seed, d, T, dt)` on stream 0.
pub fn sample_brownian(seed: u64, dimension: usize, t_end: f64, dt: f64) -> Result<BrownianPath> {
    if dimension == 0 {
        return Err(Error::InvalidArgument("dimension must be positive".into()));
    }
    Ok(BrownianPath::sample(seed, 0, dimension, TimeGrid::new(t_end, dt)?))
}

/// One flow trajectory, stored as `phi_k = x + D_k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowPath {
    pub initial: Vec<f64>,
    /// `(steps + 1) * d` displacements with `D_0 = 0`.
    pub displacement: Vec<f64>,
    pub grid: TimeGrid,
    pub label: String,
    pub seed: u64,
    pub stream: u64,
}

impl FlowPath {
    pub fn dimension(&self) -> usize {
        self.initial.len()
    }

    pub fn steps(&self) -> usize {
        self.grid.steps
    }

    #[inline]
    pub fn state_into(&self, k: usize, out: &mut [f64]) {
        let d = self.initial.len();
        for (i, o) in out.iter_mut().enumerate().take(d) {
            *o = self.initial[i] + self.displacement[k * d + i];
        }
    }

    pub fn state(&self, k: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.dimension()];
        self.state_into(k, &mut out);
        out
    }

    pub fn states(&self) -> Vec<Vec<f64>> {
        (0..=self.steps()).map(|k| self.state(k)).collect()
    }

    pub fn terminal(&self) -> Vec<f64> {
        self.state(self.steps())
    }

    /// `phi^a_k - phi^b_k`, exact when both flows translate together.
    pub fn coupled_difference(&self, other: &FlowPath, k: usize) -> Vec<f64> {
        let d = self.initial.len();
        (0..d)
            .map(|i| (self.initial[i] - other.initial[i]) + (self.displacement[k * d + i] - other.displacement[k * d + i]))
            .collect()
    }

    /// `sup_k |phi^a_k - phi^b_k|`.
    pub fn sup_distance(&self, other: &FlowPath) -> f64 {
        (0..=self.steps())
            .map(|k| self.coupled_difference(other, k).iter().map(|v| v * v).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }
}

/// Euler–Maruyama from `x` along `path`.
pub fn simulate_one(drift: &dyn Drift, x: &[f64], path: &BrownianPath) -> Result<FlowPath> {
    let d = drift.dimension();
    check_dim(d, x.len())?;
    check_dim(d, path.dimension)?;
    let k_max = path.grid.steps;
    let dt = path.grid.dt;
    let mut disp = vec![0.0; (k_max + 1) * d];
    let mut state = x.to_vec();
    let mut a = vec![0.0; d];
    for k in 0..k_max {
        drift.eval(&state, &mut a);
        let dw = path.increment(k);
        for i in 0..d {
            let next = disp[k * d + i] + a[i] * dt + dw[i];
            disp[(k + 1) * d + i] = next;
            state[i] = x[i] + next;
        }
        if !state.iter().all(|v| v.is_finite()) {
            return Err(Error::Divergence { step: k + 1 });
        }
    }
    Ok(FlowPath { initial: x.to_vec(), displacement: disp, grid: path.grid, label: drift.label(), seed: path.seed, stream: path.stream })
}

/// All initial points advanced with the same increments.
pub fn simulate_flow(drift: &dyn Drift, xs: &[Vec<f64>], path: &BrownianPath) -> Result<Vec<FlowPath>> {
    xs.iter().map(|x| simulate_one(drift, x, path)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::drift::DriftDecl;

    #[test]
    fn grid_adjusts_non_divisible_step() {
        let g = TimeGrid::new(1.0, 0.3).unwrap();
        assert_eq!(g.steps, 4);
        assert_eq!(g.dt, 0.25);
        assert_eq!(TimeGrid::new(1.0, 1e-3).unwrap().steps, 1000);
    }

    #[test]
    fn same_seed_same_increments() {
        let a = sample_brownian(5, 2, 1.0, 1e-2).unwrap();
        let b = sample_brownian(5, 2, 1.0, 1e-2).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.increments, sample_brownian(6, 2, 1.0, 1e-2).unwrap().increments);
    }

    #[test]
    fn increment_moments() {
        let p = sample_brownian(1, 1, 100.0, 1e-3).unwrap();
        let n = p.increments.len() as f64;
        let mean = p.increments.iter().sum::<f64>() / n;
        let var = p.increments.iter().map(|v| v * v).sum::<f64>() / n - mean * mean;
        let dt = p.grid.dt;
        assert!(mean.abs() < 5.0 * (dt / n).sqrt());
        assert!((var - dt).abs() < 5.0 * dt * (2.0 / n).sqrt());
    }

    #[test]
    fn refinement_preserves_coarse_increments() {
        let p = sample_brownian(9, 2, 1.0, 0.1).unwrap();
        let r = p.refine(1);
        for k in 0..p.grid.steps {
            for i in 0..2 {
                let s = r.increment(2 * k)[i] + r.increment(2 * k + 1)[i];
                assert!((s - p.increment(k)[i]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn zero_and_constant_drift_are_exact() {
        let p = sample_brownian(3, 2, 1.0, 1e-2).unwrap();
        let w = p.cumulative();
        let zero = DriftDecl::Zero { dimension: 2 }.build().unwrap();
        let f = simulate_one(&zero, &[0.5, -1.0], &p).unwrap();
        assert_eq!(&f.displacement, &w);
        let c = DriftDecl::Constant { value: vec![0.3, -0.2] }.build().unwrap();
        let g = simulate_one(&c, &[0.0, 0.0], &p).unwrap();
        for k in [0, 50, 100] {
            let t = p.grid.time(k);
            assert!((g.state(k)[0] - (0.3 * t + w[2 * k])).abs() < 1e-13);
        }
        // sup-difference between zero and constant drift is |c| T
        let z = simulate_one(&zero, &[0.0, 0.0], &p).unwrap();
        assert!((g.sup_distance(&z) - (0.13f64).sqrt()).abs() < 1e-13);
    }

    #[test]
    fn euler_recursion_is_exact() {
        let a = DriftDecl::Sign { beta: 0.7 }.build().unwrap();
        let p = sample_brownian(4, 1, 1.0, 1e-2).unwrap();
        let f = simulate_one(&a, &[0.01], &p).unwrap();
        let mut v = [0.0];
        for k in 0..p.grid.steps {
            a.eval(&f.state(k), &mut v);
            let want = f.displacement[k] + v[0] * p.grid.dt + p.increment(k)[0];
            assert_eq!(f.displacement[k + 1], want);
        }
    }

    #[test]
    fn coupling_is_order_independent() {
        let a = DriftDecl::Sign { beta: 0.7 }.build().unwrap();
        let p = sample_brownian(4, 1, 1.0, 1e-2).unwrap();
        let xs = vec![vec![0.1], vec![-0.2]];
        let f = simulate_flow(&a, &xs, &p).unwrap();
        let g = simulate_flow(&a, &[xs[1].clone(), xs[0].clone()], &p).unwrap();
        assert_eq!(f[0], g[1]);
        assert_eq!(f[1], g[0]);
    }
}
