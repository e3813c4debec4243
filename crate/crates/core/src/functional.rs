//! Continuous additive functionals along flow paths.
//!
//! Each matrix-valued functional is stored as its Jordan pair `(A^+, A^-)`,
//! both nondecreasing and starting at zero. Routes:
//! - occupation integrals of a gradient density (`Mollified`, `Direct`),
//! - `int_0^t f_h(xi_u) / h du` with `f_h` the characteristic (`HApprox`),
//! - local time integrated against the measure, d = 1 (`LocalTime`).

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::drift::{Drift, GradientMeasures};
use crate::error::{Error, Result};
use crate::kato::{classify_components, DEFAULT_EPSILONS};
use crate::measure::{characteristic, radial_integral, MeasureComponent, RadialWeight};
use crate::quadrature::GaussLegendre;
use crate::sde::{FlowPath, TimeGrid};
use crate::special::{erfcx, ierfc_scaled};

/// Per-step sojourn rule for local-time estimates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SojournRule {
    /// Trapezoid count of grid states inside the band.
    GridCount,
    /// Expected sojourn of the Brownian bridge between grid states.
    BridgeExact,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "route", rename_all = "kebab-case")]
pub enum Route {
    Direct,
    Mollified { n: f64 },
    HApprox { h: f64 },
    LocalTime { epsilon: f64, rule: SojournRule },
}

impl Route {
    pub fn label(&self) -> String {
        match self {
            Route::Direct => "direct".into(),
            Route::Mollified { n } => format!("mollified(n={n})"),
            Route::HApprox { h } => format!("h-approx(h={h})"),
            Route::LocalTime { epsilon, rule } => format!("local-time(eps={epsilon},{rule:?})"),
        }
    }
}

/// Matrix functional `A^{ij} = A^{ij,+} - A^{ij,-}` on a time grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionalPath {
    pub route: Route,
    pub dimension: usize,
    pub grid: TimeGrid,
    /// `(steps + 1) * d * d`, row-major matrices.
    pub plus: Vec<f64>,
    pub minus: Vec<f64>,
}

impl FunctionalPath {
    pub fn zero(route: Route, dimension: usize, grid: TimeGrid) -> Self {
        let len = (grid.steps + 1) * dimension * dimension;
        FunctionalPath { route, dimension, grid, plus: vec![0.0; len], minus: vec![0.0; len] }
    }

    /// Scalar functional from its two cumulative parts.
    pub fn scalar(route: Route, grid: TimeGrid, plus: Vec<f64>, minus: Vec<f64>) -> Self {
        FunctionalPath { route, dimension: 1, grid, plus, minus }
    }

    fn m(&self) -> usize {
        self.dimension * self.dimension
    }

    pub fn steps(&self) -> usize {
        self.grid.steps
    }

    pub fn plus_at(&self, k: usize) -> &[f64] {
        &self.plus[k * self.m()..(k + 1) * self.m()]
    }

    pub fn minus_at(&self, k: usize) -> &[f64] {
        &self.minus[k * self.m()..(k + 1) * self.m()]
    }

    /// `A_{t_k}` as a row-major matrix.
    pub fn value(&self, k: usize) -> Vec<f64> {
        self.plus_at(k).iter().zip(self.minus_at(k)).map(|(p, m)| p - m).collect()
    }

    /// `A_{t_{k+1}} - A_{t_k}`.
    pub fn increment_into(&self, k: usize, out: &mut [f64]) {
        let m = self.m();
        for (e, o) in out.iter_mut().enumerate().take(m) {
            *o = (self.plus[(k + 1) * m + e] - self.plus[k * m + e]) - (self.minus[(k + 1) * m + e] - self.minus[k * m + e]);
        }
    }

    /// `Var A_{t_k} = sum_ij (A^{ij,+} + A^{ij,-})`.
    pub fn variation(&self, k: usize) -> f64 {
        self.plus_at(k).iter().chain(self.minus_at(k)).sum()
    }

    pub fn variation_path(&self) -> Vec<f64> {
        (0..=self.steps()).map(|k| self.variation(k)).collect()
    }

    /// Every component starts at zero and never decreases.
    pub fn is_monotone(&self) -> bool {
        let m = self.m();
        let ok = |v: &[f64]| v[..m].iter().all(|x| *x == 0.0) && (m..v.len()).all(|i| v[i] >= v[i - m]);
        ok(&self.plus) && ok(&self.minus)
    }

    /// Component `(i, j)` of `A` along the grid.
    pub fn entry_path(&self, i: usize, j: usize) -> Vec<f64> {
        let e = i * self.dimension + j;
        (0..=self.steps()).map(|k| self.plus[k * self.m() + e] - self.minus[k * self.m() + e]).collect()
    }
}

/// Trapezoid cumulative integral `int_0^t h(xi_s) ds` along a path.
pub fn occupation_functional<F: FnMut(&[f64]) -> f64>(path: &FlowPath, mut h: F) -> Vec<f64> {
    let dt = path.grid.dt;
    let mut x = vec![0.0; path.dimension()];
    let mut out = Vec::with_capacity(path.steps() + 1);
    out.push(0.0);
    path.state_into(0, &mut x);
    let mut prev = h(&x);
    let mut acc = 0.0;
    for k in 1..=path.steps() {
        path.state_into(k, &mut x);
        let cur = h(&x);
        acc += 0.5 * (prev + cur) * dt;
        out.push(acc);
        prev = cur;
    }
    out
}

/// Occupation integrals of the Jordan parts of `grad a` along the path.
pub fn gradient_functional(path: &FlowPath, drift: &dyn Drift, route: Route) -> Result<FunctionalPath> {
    let d = drift.dimension();
    let m = d * d;
    let k_max = path.steps();
    let dt = path.grid.dt;
    let mut out = FunctionalPath::zero(route, d, path.grid);
    let mut x = vec![0.0; d];
    let (mut p0, mut n0) = (vec![0.0; m], vec![0.0; m]);
    let (mut p1, mut n1) = (vec![0.0; m], vec![0.0; m]);
    path.state_into(0, &mut x);
    if !drift.gradient_parts(&x, &mut p0, &mut n0) {
        return Err(Error::InvalidArgument(format!("drift {} has no gradient density; mollify it first", drift.label())));
    }
    for k in 1..=k_max {
        path.state_into(k, &mut x);
        drift.gradient_parts(&x, &mut p1, &mut n1);
        for e in 0..m {
            out.plus[k * m + e] = out.plus[(k - 1) * m + e] + 0.5 * (p0[e] + p1[e]) * dt;
            out.minus[k * m + e] = out.minus[(k - 1) * m + e] + 0.5 * (n0[e] + n1[e]) * dt;
        }
        std::mem::swap(&mut p0, &mut p1);
        std::mem::swap(&mut n0, &mut n1);
    }
    Ok(out)
}

/// `x -> f_h(x) / h` for a Kato measure.
#[derive(Debug, Clone)]
pub struct HApprox {
    pub components: Vec<MeasureComponent>,
    pub dimension: usize,
    pub h: f64,
}

impl HApprox {
    pub fn new(components: Vec<MeasureComponent>, dimension: usize, h: f64) -> Result<Self> {
        if !(h > 0.0) {
            return Err(Error::InvalidArgument(format!("h must be positive, got {h}")));
        }
        if !components.is_empty() {
            let report = classify_components(&components, dimension, &DEFAULT_EPSILONS)?;
            if !report.is_kato {
                return Err(Error::NotKato(report.note));
            }
        }
        Ok(HApprox { components, dimension, h })
    }

    #[inline]
    pub fn density(&self, x: &[f64]) -> Result<f64> {
        Ok(characteristic(&self.components, self.h, x)? / self.h)
    }
}

/// `int_0^t f_h(xi_u) / h du` by the trapezoid rule.
pub fn h_approx_functional(path: &FlowPath, approx: &HApprox) -> Result<Vec<f64>> {
    if approx.components.is_empty() {
        return Ok(vec![0.0; path.steps() + 1]);
    }
    let mut err = None;
    let out = occupation_functional(path, |x| match approx.density(x) {
        Ok(v) => v,
        Err(e) => {
            err.get_or_insert(e);
            0.0
        }
    });
    match err {
        Some(e) => Err(e),
        None => Ok(out),
    }
}

/// Expected local time at `z` of a Brownian bridge from `a` to `b` over
/// time `tau`, averaged over the band `[z - eps, z + eps]` when `eps > 0`.
pub fn bridge_local_time(a: f64, b: f64, tau: f64, z: f64, eps: f64) -> f64 {
    let u = (b - a).abs();
    let lo = a.min(b);
    let hi = a.max(b);
    let c = 1.0 / (2.0 * tau).sqrt();
    let k = 0.5 * (2.0 * PI * tau).sqrt();
    if eps == 0.0 {
        let dd = (z - a).abs() + (b - z).abs();
        let expo = (dd - u) * (dd + u) * c * c;
        if expo > 60.0 {
            return 0.0;
        }
        return k * erfcx(dd * c) * (-expo).exp();
    }
    let (y0, y1) = (z - eps, z + eps);
    let w = c * u;
    let mut s = 0.0;
    // between the endpoints D = u
    let m0 = y0.max(lo);
    let m1 = y1.min(hi);
    if m1 > m0 {
        s += (m1 - m0) * k * erfcx(w);
    }
    // int erfc over a tail, D = |2y - a - b|, |dD/dy| = 2
    let tail = |v_near: f64, v_far: f64| -> f64 {
        let f = |v: f64| {
            if !v.is_finite() {
                return 0.0;
            }
            let e = (v - w) * (v + w);
            if e > 60.0 {
                0.0
            } else {
                (-e).exp() * ierfc_scaled(v)
            }
        };
        k / (2.0 * c) * (f(v_near) - f(v_far))
    };
    if y1 > hi {
        let from = y0.max(hi);
        s += tail(c * (2.0 * from - a - b), c * (2.0 * y1 - a - b));
    }
    if y0 < lo {
        let to = y1.min(lo);
        s += tail(c * (a + b - 2.0 * to), c * (a + b - 2.0 * y0));
    }
    s / (2.0 * eps)
}

/// Cumulative local-time estimate `L_t(z)` along a one-dimensional path.
pub fn local_time(path: &FlowPath, z: f64, eps: f64, rule: SojournRule) -> Result<Vec<f64>> {
    if path.dimension() != 1 {
        return Err(Error::UnsupportedDimension { dimension: path.dimension(), what: "local time".into() });
    }
    let dt = path.grid.dt;
    let mut out = Vec::with_capacity(path.steps() + 1);
    out.push(0.0);
    let mut acc = 0.0;
    let state = |k: usize| path.initial[0] + path.displacement[k];
    match rule {
        SojournRule::GridCount => {
            if !(eps > 0.0) {
                return Err(Error::InvalidArgument("grid-count local time needs a positive band".into()));
            }
            let w = dt / (2.0 * eps);
            let inside = |x: f64| if (x - z).abs() <= eps { 1.0 } else { 0.0 };
            let mut prev = inside(state(0));
            for k in 1..=path.steps() {
                let cur = inside(state(k));
                acc += 0.5 * (prev + cur) * w;
                out.push(acc);
                prev = cur;
            }
        }
        SojournRule::BridgeExact => {
            if !(eps >= 0.0) {
                return Err(Error::InvalidArgument("band half-width must be non-negative".into()));
            }
            let reach = eps + 12.0 * dt.sqrt();
            for k in 1..=path.steps() {
                let (a, b) = (state(k - 1), state(k));
                if (a - z).abs().min((b - z).abs()) < reach || (a - z) * (b - z) < 0.0 {
                    acc += bridge_local_time(a, b, dt, z, eps);
                }
                out.push(acc);
            }
        }
    }
    Ok(out)
}

/// `int L_t(y) nu(dy)` along a one-dimensional path.
pub fn local_time_functional_1d(path: &FlowPath, components: &[MeasureComponent], eps: f64, rule: SojournRule) -> Result<Vec<f64>> {
    if path.dimension() != 1 {
        return Err(Error::UnsupportedDimension { dimension: path.dimension(), what: "local-time functionals".into() });
    }
    let mut total = vec![0.0; path.steps() + 1];
    for c in components {
        match c {
            MeasureComponent::Atom { location, mass } => {
                let l = local_time(path, location[0], eps, rule)?;
                for (t, v) in total.iter_mut().zip(l) {
                    *t += mass * v;
                }
            }
            _ if c.density_at(&path.initial).is_some() => {
                let part = match rule {
                    SojournRule::GridCount => {
                        if !(eps > 0.0) {
                            return Err(Error::InvalidArgument("grid-count local time needs a positive band".into()));
                        }
                        let mut err = None;
                        let v = occupation_functional(path, |x| match radial_integral(c, x, eps, RadialWeight::Unit) {
                            Ok(m) => m / (2.0 * eps),
                            Err(e) => {
                                err.get_or_insert(e);
                                0.0
                            }
                        });
                        if let Some(e) = err {
                            return Err(e);
                        }
                        v
                    }
                    SojournRule::BridgeExact => bridge_density_functional(path, c, eps)?,
                };
                for (t, v) in total.iter_mut().zip(part) {
                    *t += v;
                }
            }
            _ => {
                return Err(Error::InvalidArgument("local-time route supports atoms and densities in d = 1".into()));
            }
        }
    }
    Ok(total)
}

fn bridge_density_functional(path: &FlowPath, c: &MeasureComponent, eps: f64) -> Result<Vec<f64>> {
    let dt = path.grid.dt;
    let gl = GaussLegendre::cached(24);
    let spread = 8.0 * dt.sqrt() + eps;
    let mut out = vec![0.0];
    let mut acc = 0.0;
    for k in 1..=path.steps() {
        let (a, b) = (path.initial[0] + path.displacement[k - 1], path.initial[0] + path.displacement[k]);
        let (lo, hi) = (a.min(b), a.max(b));
        let pts = [lo - spread, lo, hi, hi + spread];
        for w in pts.windows(2) {
            if w[1] <= w[0] {
                continue;
            }
            for (y, wt) in gl.mapped(w[0], w[1]) {
                let rho = c.density_at(&[y]).unwrap_or(0.0);
                if rho != 0.0 {
                    acc += wt * rho * bridge_local_time(a, b, dt, y, eps);
                }
            }
        }
        out.push(acc);
    }
    Ok(out)
}

/// Functional of the gradient measures by the h-approximation or local-time route.
pub fn measure_functional(path: &FlowPath, gm: &GradientMeasures, route: Route) -> Result<FunctionalPath> {
    let d = gm.dimension;
    let mut out = FunctionalPath::zero(route, d, path.grid);
    let m = d * d;
    for e in 0..m {
        let spec = &gm.entries[e];
        for (part, target) in [(&spec.positive, &mut out.plus), (&spec.negative, &mut out.minus)] {
            if part.is_empty() {
                continue;
            }
            let series = match route {
                Route::HApprox { h } => h_approx_functional(path, &HApprox::new(part.clone(), d, h)?)?,
                Route::LocalTime { epsilon, rule } => local_time_functional_1d(path, part, epsilon, rule)?,
                _ => return Err(Error::InvalidArgument("occupation routes need a drift, not measures".into())),
            };
            for (k, v) in series.into_iter().enumerate() {
                target[k * m + e] = v;
            }
        }
    }
    Ok(out)
}
