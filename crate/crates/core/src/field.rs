//! Smooth vector fields built from ridge functions, and their mollifications.
//!
//! Every non-constant catalogue field is a sum of terms
//! `coef * profile(w . x + b)` in one output component. Mollifying such a term
//! only needs the law of `w . U / n` for `U` drawn from the bump, so the
//! mollified profile is a one-dimensional convolution, tabulated once per
//! ridge.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mollifier::ProjectedBump;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SmoothField {
    Zero { dimension: usize },
    Constant { value: Vec<f64> },
    /// `a^i(x) = amplitude_i tanh(weights_i . x + offset_i)`.
    Tanh { amplitude: Vec<f64>, weights: Vec<Vec<f64>>, offset: Vec<f64> },
    /// `a(x) = matrix clamp(x, -half_width, half_width)`.
    LinearWindow { matrix: Vec<Vec<f64>>, half_width: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Profile {
    Tanh,
    Clamp(f64),
}

impl Profile {
    #[inline]
    pub fn value(&self, s: f64) -> f64 {
        match *self {
            Profile::Tanh => s.tanh(),
            Profile::Clamp(l) => s.clamp(-l, l),
        }
    }

    /// Derivative; never negative.
    #[inline]
    pub fn deriv(&self, s: f64) -> f64 {
        match *self {
            Profile::Tanh => {
                let c = s.cosh();
                if c.is_finite() {
                    1.0 / (c * c)
                } else {
                    0.0
                }
            }
            Profile::Clamp(l) => {
                if s.abs() < l {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    fn kinks(&self) -> Vec<f64> {
        match *self {
            Profile::Tanh => Vec::new(),
            Profile::Clamp(l) => vec![-l, l],
        }
    }

    /// Intervals outside of which the profile is affine.
    fn curved_zones(&self) -> Vec<(f64, f64)> {
        match *self {
            Profile::Tanh => vec![(-20.0, 20.0)],
            Profile::Clamp(l) => vec![(-l, -l), (l, l)],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ridge {
    pub component: usize,
    pub coef: f64,
    pub w: Vec<f64>,
    pub b: f64,
    pub profile: Profile,
}

impl Ridge {
    #[inline]
    pub fn argument(&self, x: &[f64]) -> f64 {
        self.w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + self.b
    }
}

impl SmoothField {
    pub fn dimension(&self) -> usize {
        match self {
            SmoothField::Zero { dimension } => *dimension,
            SmoothField::Constant { value } => value.len(),
            SmoothField::Tanh { amplitude, .. } => amplitude.len(),
            SmoothField::LinearWindow { matrix, .. } => matrix.len(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dimension();
        if d == 0 {
            return Err(Error::InvalidArgument("field dimension must be positive".into()));
        }
        match self {
            SmoothField::Tanh { amplitude, weights, offset } => {
                if weights.len() != d || offset.len() != d || weights.iter().any(|w| w.len() != d) {
                    return Err(Error::InvalidArgument(format!(
                        "tanh field needs {d} amplitudes, a {d}x{d} weight matrix and {d} offsets"
                    )));
                }
                if amplitude.iter().chain(offset).chain(weights.iter().flatten()).any(|v| !v.is_finite()) {
                    return Err(Error::InvalidArgument("tanh field parameters must be finite".into()));
                }
            }
            SmoothField::LinearWindow { matrix, half_width } => {
                if matrix.iter().any(|r| r.len() != d) {
                    return Err(Error::InvalidArgument("window-linear matrix must be square".into()));
                }
                if !(*half_width > 0.0 && half_width.is_finite()) {
                    return Err(Error::InvalidArgument("window half-width must be positive".into()));
                }
            }
            SmoothField::Constant { value } if value.iter().any(|v| !v.is_finite()) => {
                return Err(Error::InvalidArgument("constant field must be finite".into()));
            }
            _ => {}
        }
        Ok(())
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, SmoothField::Zero { .. } | SmoothField::Constant { .. })
    }

    pub fn is_zero(&self) -> bool {
        match self {
            SmoothField::Zero { .. } => true,
            SmoothField::Constant { value } => value.iter().all(|v| *v == 0.0),
            _ => false,
        }
    }

    /// Constant part shared by every point.
    pub fn offset_value(&self) -> Vec<f64> {
        match self {
            SmoothField::Constant { value } => value.clone(),
            _ => vec![0.0; self.dimension()],
        }
    }

    pub fn ridges(&self) -> Vec<Ridge> {
        let d = self.dimension();
        match self {
            SmoothField::Tanh { amplitude, weights, offset } => (0..d)
                .filter(|&i| amplitude[i] != 0.0)
                .map(|i| Ridge { component: i, coef: amplitude[i], w: weights[i].clone(), b: offset[i], profile: Profile::Tanh })
                .collect(),
            SmoothField::LinearWindow { matrix, half_width } => {
                let mut out = Vec::new();
                for (i, row) in matrix.iter().enumerate().take(d) {
                    for (j, &coef) in row.iter().enumerate().take(d) {
                        if coef != 0.0 {
                            let mut w = vec![0.0; d];
                            w[j] = 1.0;
                            out.push(Ridge { component: i, coef, w, b: 0.0, profile: Profile::Clamp(*half_width) });
                        }
                    }
                }
                out
            }
            _ => Vec::new(),
        }
    }

    pub fn eval(&self, x: &[f64], out: &mut [f64]) {
        match self {
            SmoothField::Zero { .. } => out.iter_mut().for_each(|v| *v = 0.0),
            SmoothField::Constant { value } => out.copy_from_slice(value),
            SmoothField::Tanh { amplitude, weights, offset } => {
                for i in 0..out.len() {
                    let s: f64 = weights[i].iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + offset[i];
                    out[i] = amplitude[i] * s.tanh();
                }
            }
            SmoothField::LinearWindow { matrix, half_width } => {
                for i in 0..out.len() {
                    out[i] = matrix[i].iter().zip(x).map(|(m, v)| m * v.clamp(-half_width, *half_width)).sum();
                }
            }
        }
    }

    pub fn value(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dimension()];
        self.eval(x, &mut out);
        out
    }

    /// Component `i` only.
    pub fn component(&self, i: usize, x: &[f64]) -> f64 {
        match self {
            SmoothField::Zero { .. } => 0.0,
            SmoothField::Constant { value } => value[i],
            SmoothField::Tanh { amplitude, weights, offset } => {
                let s: f64 = weights[i].iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + offset[i];
                amplitude[i] * s.tanh()
            }
            SmoothField::LinearWindow { matrix, half_width } => {
                matrix[i].iter().zip(x).map(|(m, v)| m * v.clamp(-half_width, *half_width)).sum()
            }
        }
    }

    /// Jacobian, row-major: `out[i * d + j] = d a^i / d x_j`.
    pub fn jacobian(&self, x: &[f64], out: &mut [f64]) {
        let d = self.dimension();
        out.iter_mut().for_each(|v| *v = 0.0);
        for r in self.ridges() {
            let p = r.coef * r.profile.deriv(r.argument(x));
            for j in 0..d {
                out[r.component * d + j] += p * r.w[j];
            }
        }
    }

    /// `d a^i / d x_j` at `x`.
    pub fn partial(&self, i: usize, j: usize, x: &[f64]) -> f64 {
        match self {
            SmoothField::Tanh { amplitude, weights, offset } => {
                let s: f64 = weights[i].iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + offset[i];
                amplitude[i] * weights[i][j] * Profile::Tanh.deriv(s)
            }
            SmoothField::LinearWindow { matrix, half_width } => {
                matrix[i][j] * Profile::Clamp(*half_width).deriv(x[j])
            }
            _ => 0.0,
        }
    }

    /// Sign of `d a^i / d x_j` where it is non-zero: `Some(+1)`, `Some(-1)` or
    /// `None` when the partial vanishes identically.
    pub fn partial_sign(&self, i: usize, j: usize) -> Option<f64> {
        let s = match self {
            SmoothField::Tanh { amplitude, weights, .. } => amplitude[i] * weights[i][j],
            SmoothField::LinearWindow { matrix, .. } => matrix[i][j],
            _ => 0.0,
        };
        if s > 0.0 {
            Some(1.0)
        } else if s < 0.0 {
            Some(-1.0)
        } else {
            None
        }
    }

    /// Exact supremum of the Euclidean norm.
    pub fn sup_norm(&self) -> f64 {
        match self {
            SmoothField::Zero { .. } => 0.0,
            SmoothField::Constant { value } => norm(value),
            // ridges with independent weight rows saturate together
            SmoothField::Tanh { .. } => self.sup_norm_flat_rows(),
            SmoothField::LinearWindow { matrix, half_width } => {
                let d = matrix.len();
                let mut best: f64 = 0.0;
                for mask in 0..(1usize << d) {
                    let v: Vec<f64> = (0..d).map(|j| if mask >> j & 1 == 1 { *half_width } else { -half_width }).collect();
                    let y: Vec<f64> = matrix.iter().map(|row| row.iter().zip(&v).map(|(a, b)| a * b).sum()).collect();
                    best = best.max(norm(&y));
                }
                best
            }
        }
    }

    fn sup_norm_flat_rows(&self) -> f64 {
        if let SmoothField::Tanh { amplitude, weights, offset } = self {
            amplitude
                .iter()
                .zip(weights)
                .zip(offset)
                .map(|((a, w), b)| if w.iter().all(|v| *v == 0.0) { (a * b.tanh()).powi(2) } else { a * a })
                .sum::<f64>()
                .sqrt()
        } else {
            0.0
        }
    }
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// Cubic Hermite table of a function and its derivative on a uniform grid.
#[derive(Debug, Clone)]
struct HermiteTable {
    lo: f64,
    hi: f64,
    h: f64,
    f: Vec<f64>,
    df: Vec<f64>,
}

impl HermiteTable {
    fn build<F: FnMut(f64) -> (f64, f64)>(lo: f64, hi: f64, h: f64, mut g: F) -> Self {
        let k = ((hi - lo) / h).ceil().max(1.0) as usize;
        let h = (hi - lo) / k as f64;
        let mut f = Vec::with_capacity(k + 1);
        let mut df = Vec::with_capacity(k + 1);
        for i in 0..=k {
            let (a, b) = g(lo + i as f64 * h);
            f.push(a);
            df.push(b);
        }
        HermiteTable { lo, hi, h, f, df }
    }

    #[inline]
    fn eval(&self, s: f64) -> (f64, f64) {
        let u = ((s - self.lo) / self.h).max(0.0);
        let k = (u as usize).min(self.f.len() - 2);
        let t = u - k as f64;
        let (f0, f1, d0, d1) = (self.f[k], self.f[k + 1], self.df[k] * self.h, self.df[k + 1] * self.h);
        let t2 = t * t;
        let t3 = t2 * t;
        let v = (2.0 * t3 - 3.0 * t2 + 1.0) * f0 + (t3 - 2.0 * t2 + t) * d0 + (-2.0 * t3 + 3.0 * t2) * f1 + (t3 - t2) * d1;
        let dv = (6.0 * t2 - 6.0 * t) * f0 + (3.0 * t2 - 4.0 * t + 1.0) * d0 + (-6.0 * t2 + 6.0 * t) * f1 + (3.0 * t2 - 2.0 * t) * d1;
        (v, dv / self.h)
    }
}

/// A ridge term after convolution with `g_n`.
#[derive(Debug, Clone)]
pub struct MollifiedRidge {
    pub ridge: Ridge,
    pub sigma: f64,
    tables: Vec<HermiteTable>,
}

impl MollifiedRidge {
    pub fn new(ridge: Ridge, n: f64, kernel: &ProjectedBump) -> Self {
        let sigma = norm(&ridge.w) / n;
        let mut tables = Vec::new();
        if sigma > 0.0 {
            let mut zones: Vec<(f64, f64)> = ridge.profile.curved_zones().into_iter().map(|(a, b)| (a - sigma, b + sigma)).collect();
            zones.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut merged: Vec<(f64, f64)> = Vec::new();
            for z in zones {
                match merged.last_mut() {
                    Some(last) if z.0 <= last.1 => last.1 = last.1.max(z.1),
                    _ => merged.push(z),
                }
            }
            let h = match ridge.profile {
                Profile::Tanh => (sigma / 4.0).min(0.01),
                Profile::Clamp(_) => sigma / 64.0,
            };
            let profile = ridge.profile;
            let kinks = profile.kinks();
            for (a, b) in merged {
                tables.push(HermiteTable::build(a, b, h, |s| {
                    let ks: Vec<f64> = kinks.iter().map(|k| (s - k) / sigma).collect();
                    let v = kernel.expect_split(|u| profile.value(s - sigma * u), &ks);
                    let dv = kernel.expect_split(|u| profile.deriv(s - sigma * u), &ks);
                    (v, dv)
                }));
            }
        }
        MollifiedRidge { ridge, sigma, tables }
    }

    /// Mollified profile and its derivative at ridge argument `s`.
    #[inline]
    pub fn profile(&self, s: f64) -> (f64, f64) {
        for t in &self.tables {
            if s >= t.lo && s <= t.hi {
                return t.eval(s);
            }
        }
        (self.ridge.profile.value(s), self.ridge.profile.deriv(s))
    }
}

/// `g_n * a` for a smooth field `a`.
#[derive(Debug, Clone)]
pub struct MollifiedField {
    pub field: SmoothField,
    pub n: f64,
    offset: Vec<f64>,
    ridges: Vec<MollifiedRidge>,
}

impl MollifiedField {
    pub fn new(field: &SmoothField, n: f64) -> Self {
        let d = field.dimension();
        let kernel = ProjectedBump::new(d);
        let ridges = field.ridges().into_iter().map(|r| MollifiedRidge::new(r, n, &kernel)).collect();
        MollifiedField { field: field.clone(), n, offset: field.offset_value(), ridges }
    }

    pub fn eval(&self, x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.offset);
        for r in &self.ridges {
            out[r.ridge.component] += r.ridge.coef * r.profile(r.ridge.argument(x)).0;
        }
    }

    pub fn component(&self, i: usize, x: &[f64]) -> f64 {
        let mut v = self.offset[i];
        for r in self.ridges.iter().filter(|r| r.ridge.component == i) {
            v += r.ridge.coef * r.profile(r.ridge.argument(x)).0;
        }
        v
    }

    /// Add `scale * d(g_n * a)^i / dx_j` into `out[i * d + j]`.
    pub fn add_jacobian(&self, x: &[f64], scale: f64, out: &mut [f64]) {
        let d = self.offset.len();
        for r in &self.ridges {
            let p = scale * r.ridge.coef * r.profile(r.ridge.argument(x)).1;
            for j in 0..d {
                out[r.ridge.component * d + j] += p * r.ridge.w[j];
            }
        }
    }

    /// `d(g_n * a)^i / dx_j`.
    pub fn partial(&self, i: usize, j: usize, x: &[f64]) -> f64 {
        self.ridges
            .iter()
            .filter(|r| r.ridge.component == i)
            .map(|r| r.ridge.coef * r.ridge.w[j] * r.profile(r.ridge.argument(x)).1)
            .sum()
    }
}
