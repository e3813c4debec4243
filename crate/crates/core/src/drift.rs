//! Bounded drifts `a = h_0 + sum_k h_k 1_{D_k}` of bounded variation, their
//! gradient measures and their mollifications `a_n = g_n * a`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::field::{norm, MollifiedField, SmoothField};
use crate::geometry::{arc_intervals_rect, DirNodes, Region, SurfaceNodes};
use crate::measure::{MeasureComponent, Part, SignedMeasureSpec, SurfaceWeight};
use crate::mollifier::{planar_marginal_3d, MarginalCdf, Mollifier};
use crate::quadrature::GaussLegendre;

/// Anything the flow engine can integrate.
pub trait Drift: Send + Sync {
    fn dimension(&self) -> usize;
    fn eval(&self, x: &[f64], out: &mut [f64]);
    /// Bound on `sup_x |a(x)|`.
    fn sup_norm(&self) -> f64;
    fn label(&self) -> String;
    /// Jordan parts of the Jacobian density at `x`, row-major. Returns
    /// `false` when the gradient is not a function.
    fn gradient_parts(&self, _x: &[f64], _plus: &mut [f64], _minus: &mut [f64]) -> bool {
        false
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftPiece {
    pub field: SmoothField,
    pub region: Region,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftSpec {
    pub dimension: usize,
    pub base: SmoothField,
    #[serde(default)]
    pub pieces: Vec<DriftPiece>,
    pub label: String,
}

/// Builtin drift catalogue.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "id", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DriftDecl {
    Zero {
        dimension: usize,
    },
    Constant {
        value: Vec<f64>,
    },
    /// `a^i(x) = amplitude_i tanh(weights_i . x + offset_i)`.
    LinearTanh {
        amplitude: Vec<f64>,
        weights: Vec<Vec<f64>>,
        #[serde(default)]
        offset: Option<Vec<f64>>,
    },
    /// `a(x) = beta` for `x > 0`, `-beta` otherwise.
    Sign {
        beta: f64,
    },
    /// `base + value 1_{|x - center| < radius}`.
    IndicatorBall {
        center: Vec<f64>,
        radius: f64,
        value: Vec<f64>,
        #[serde(default)]
        base: Option<Vec<f64>>,
    },
    /// `base + value 1_{lo < x < hi}`.
    IndicatorBox {
        lo: Vec<f64>,
        hi: Vec<f64>,
        value: Vec<f64>,
        #[serde(default)]
        base: Option<Vec<f64>>,
    },
    /// `a(x) = matrix clamp(x, -half_width, half_width)`.
    LinearWindow {
        matrix: Vec<Vec<f64>>,
        half_width: f64,
    },
}

impl DriftDecl {
    pub fn id(&self) -> &'static str {
        match self {
            DriftDecl::Zero { .. } => "zero",
            DriftDecl::Constant { .. } => "constant",
            DriftDecl::LinearTanh { .. } => "linear-tanh",
            DriftDecl::Sign { .. } => "sign",
            DriftDecl::IndicatorBall { .. } => "indicator-ball",
            DriftDecl::IndicatorBox { .. } => "indicator-box",
            DriftDecl::LinearWindow { .. } => "linear-window",
        }
    }

    /// One representative instance per catalogue id.
    pub fn catalogue() -> Vec<DriftDecl> {
        vec![
            DriftDecl::Zero { dimension: 1 },
            DriftDecl::Constant { value: vec![0.5, -0.3] },
            DriftDecl::LinearTanh { amplitude: vec![1.0, -0.7], weights: vec![vec![1.2, -0.4], vec![0.5, 0.9]], offset: Some(vec![0.1, -0.2]) },
            DriftDecl::Sign { beta: 0.5 },
            DriftDecl::IndicatorBall { center: vec![0.3, 0.0], radius: 0.5, value: vec![1.0, -0.5], base: None },
            DriftDecl::IndicatorBox { lo: vec![-0.5, -0.5, -0.5], hi: vec![0.5, 0.5, 0.5], value: vec![0.5, 0.0, -0.5], base: Some(vec![0.0, 0.2, 0.0]) },
            DriftDecl::LinearWindow { matrix: vec![vec![-1.0, 0.5], vec![0.0, -0.5]], half_width: 1.0 },
        ]
    }

    pub fn build(&self) -> Result<DriftSpec> {
        let label = self.id().to_string();
        let constant = |value: Vec<f64>| SmoothField::Constant { value };
        let base_or_zero = |base: &Option<Vec<f64>>, d: usize| match base {
            Some(b) => constant(b.clone()),
            None => SmoothField::Zero { dimension: d },
        };
        let spec = match self {
            DriftDecl::Zero { dimension } => DriftSpec::smooth(SmoothField::Zero { dimension: *dimension }, label),
            DriftDecl::Constant { value } => DriftSpec::smooth(constant(value.clone()), label),
            DriftDecl::LinearTanh { amplitude, weights, offset } => {
                let offset = offset.clone().unwrap_or_else(|| vec![0.0; amplitude.len()]);
                DriftSpec::smooth(SmoothField::Tanh { amplitude: amplitude.clone(), weights: weights.clone(), offset }, label)
            }
            DriftDecl::Sign { beta } => DriftSpec {
                dimension: 1,
                base: constant(vec![-beta]),
                pieces: vec![DriftPiece { field: constant(vec![2.0 * beta]), region: Region::Ray { origin: 0.0, positive: true } }],
                label,
            },
            DriftDecl::IndicatorBall { center, radius, value, base } => DriftSpec {
                dimension: center.len(),
                base: base_or_zero(base, center.len()),
                pieces: vec![DriftPiece { field: constant(value.clone()), region: Region::Ball { center: center.clone(), radius: *radius } }],
                label,
            },
            DriftDecl::IndicatorBox { lo, hi, value, base } => DriftSpec {
                dimension: lo.len(),
                base: base_or_zero(base, lo.len()),
                pieces: vec![DriftPiece { field: constant(value.clone()), region: Region::Box { lo: lo.clone(), hi: hi.clone() } }],
                label,
            },
            DriftDecl::LinearWindow { matrix, half_width } => {
                DriftSpec::smooth(SmoothField::LinearWindow { matrix: matrix.clone(), half_width: *half_width }, label)
            }
        };
        spec.validate()?;
        Ok(spec)
    }
}

impl DriftSpec {
    pub fn smooth(base: SmoothField, label: String) -> Self {
        DriftSpec { dimension: base.dimension(), base, pieces: Vec::new(), label }
    }

    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        check_dim(self.dimension, self.base.dimension())?;
        for p in &self.pieces {
            p.field.validate()?;
            p.region.validate()?;
            check_dim(self.dimension, p.field.dimension())?;
            check_dim(self.dimension, p.region.dimension())?;
            if matches!(p.field, SmoothField::LinearWindow { .. }) {
                return Err(Error::InvalidArgument("drift pieces must be continuously differentiable".into()));
            }
        }
        Ok(())
    }

    pub fn is_smooth(&self) -> bool {
        self.pieces.is_empty()
    }

    pub fn is_zero(&self) -> bool {
        self.base.is_zero() && self.pieces.iter().all(|p| p.field.is_zero())
    }

    pub fn value(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dimension];
        self.eval_into(x, &mut out);
        out
    }

    fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        self.base.eval(x, out);
        for p in &self.pieces {
            if p.region.contains(x) {
                for (i, o) in out.iter_mut().enumerate() {
                    *o += p.field.component(i, x);
                }
            }
        }
    }

    /// `sup_x |a(x)|`, exact for constant pieces over a constant or absent base.
    pub fn sup_norm_bound(&self) -> f64 {
        if self.pieces.is_empty() {
            return self.base.sup_norm();
        }
        if self.base.is_constant() && self.pieces.iter().all(|p| p.field.is_constant()) && self.pieces.len() <= 12 {
            let b = self.base.offset_value();
            let mut best: f64 = 0.0;
            for mask in 0..(1usize << self.pieces.len()) {
                let mut v = b.clone();
                for (k, p) in self.pieces.iter().enumerate() {
                    if mask >> k & 1 == 1 {
                        for (vi, pi) in v.iter_mut().zip(p.field.offset_value()) {
                            *vi += pi;
                        }
                    }
                }
                best = best.max(norm(&v));
            }
            return best;
        }
        self.base.sup_norm() + self.pieces.iter().map(|p| p.field.sup_norm()).sum::<f64>()
    }

    /// `mu^{ij} = d_j h_0^i dx + sum_k (d_j h_k^i 1_{D_k} dx - h_k^i n_j sigma_{dD_k})`,
    /// row-major, each as a Jordan pair.
    pub fn gradient_measures(&self) -> Result<GradientMeasures> {
        let d = self.dimension;
        let mut entries = Vec::with_capacity(d * d);
        for i in 0..d {
            for j in 0..d {
                let mut m = SignedMeasureSpec::zero(d);
                push_density(&mut m, &self.base, i, j, None);
                for p in &self.pieces {
                    push_density(&mut m, &p.field, i, j, Some(&p.region));
                    push_surface(&mut m, &p.field, &p.region, i, j)?;
                }
                entries.push(m);
            }
        }
        Ok(GradientMeasures { dimension: d, entries })
    }

    pub fn mollify(&self, n: f64) -> MollifiedDrift {
        MollifiedDrift::new(self, n)
    }
}

fn push_density(m: &mut SignedMeasureSpec, field: &SmoothField, i: usize, j: usize, region: Option<&Region>) {
    let mut push = |part: Part| {
        let comp = MeasureComponent::FieldDerivative { field: field.clone(), component: i, axis: j, part, region: region.cloned() };
        match part {
            Part::Plus => m.positive.push(comp),
            Part::Minus => m.negative.push(comp),
        }
    };
    match field {
        SmoothField::Tanh { .. } | SmoothField::LinearWindow { .. } => match field.partial_sign(i, j) {
            Some(s) if s > 0.0 => push(Part::Plus),
            Some(_) => push(Part::Minus),
            None => {}
        },
        _ => {}
    }
}

fn push_surface(m: &mut SignedMeasureSpec, field: &SmoothField, region: &Region, i: usize, j: usize) -> Result<()> {
    if field.is_constant() && field.offset_value()[i] == 0.0 {
        return Ok(());
    }
    for part in [Part::Plus, Part::Minus] {
        let weight = SurfaceWeight::Flux { field: field.clone(), component: i, axis: j, part };
        let comp = match region {
            Region::Ball { center, radius } => MeasureComponent::SphereSurface { center: center.clone(), radius: *radius, weight },
            Region::Box { lo, hi } => MeasureComponent::BoxBoundary { lo: lo.clone(), hi: hi.clone(), weight },
            Region::Ray { origin, positive } => {
                let n = if *positive { -1.0 } else { 1.0 };
                let mass = weight.value(&[*origin], &[n]);
                if mass == 0.0 {
                    continue;
                }
                MeasureComponent::Atom { location: vec![*origin], mass }
            }
        };
        if let MeasureComponent::SphereSurface { .. } | MeasureComponent::BoxBoundary { .. } = comp {
            // skip parts that vanish identically for constant fields
            if field.is_constant() && comp.mass()? == 0.0 {
                continue;
            }
        }
        match part {
            Part::Plus => m.positive.push(comp),
            Part::Minus => m.negative.push(comp),
        }
    }
    Ok(())
}

/// The matrix of gradient measures, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientMeasures {
    pub dimension: usize,
    pub entries: Vec<SignedMeasureSpec>,
}

impl GradientMeasures {
    pub fn entry(&self, i: usize, j: usize) -> &SignedMeasureSpec {
        &self.entries[i * self.dimension + j]
    }
}

impl Drift for DriftSpec {
    fn dimension(&self) -> usize {
        self.dimension
    }

    #[inline]
    fn eval(&self, x: &[f64], out: &mut [f64]) {
        self.eval_into(x, out)
    }

    fn sup_norm(&self) -> f64 {
        self.sup_norm_bound()
    }

    fn label(&self) -> String {
        self.label.clone()
    }

    fn gradient_parts(&self, x: &[f64], plus: &mut [f64], minus: &mut [f64]) -> bool {
        if !self.is_smooth() {
            return false;
        }
        self.base.jacobian(x, plus);
        for (p, m) in plus.iter_mut().zip(minus.iter_mut()) {
            *m = (-*p).max(0.0);
            *p = p.max(0.0);
        }
        true
    }
}

/// `a_n = g_n * a` together with the Jordan parts of `g_n * mu^{ij}`.
#[derive(Debug, Clone)]
pub struct MollifiedDrift {
    pub spec: DriftSpec,
    pub n: f64,
    mollifier: Mollifier,
    base: MollifiedField,
    gl: Arc<GaussLegendre>,
    marginal: Arc<MarginalCdf>,
}

const RADIAL_NODES: usize = 64;
const SURFACE_NODES_2D: usize = 32;
const SURFACE_NODES_3D: usize = 16;
const ANGULAR_NODES: usize = 16;

impl MollifiedDrift {
    pub fn new(spec: &DriftSpec, n: f64) -> Self {
        assert!(n > 0.0, "mollification level must be positive");
        MollifiedDrift {
            spec: spec.clone(),
            n,
            mollifier: Mollifier::new(spec.dimension, n),
            base: MollifiedField::new(&spec.base, n),
            gl: GaussLegendre::cached(RADIAL_NODES),
            marginal: MarginalCdf::cached(spec.dimension),
        }
    }

    /// Radial segments of `[0, 1/n]` on which the region's angular measure is smooth.
    fn segments(&self, region: &Region, x: &[f64]) -> Vec<(f64, f64)> {
        let h = self.mollifier.radius();
        let mut pts = vec![0.0];
        pts.extend(region.kink_radii(x).into_iter().filter(|r| *r > 0.0 && *r < h));
        pts.push(h);
        pts.windows(2).filter(|w| w[1] > w[0]).map(|w| (w[0], w[1])).collect()
    }

    /// `(g_n * 1_D)(x)`.
    pub fn smoothed_indicator(&self, region: &Region, x: &[f64]) -> f64 {
        let sd = region.signed_distance(x);
        let h = self.mollifier.radius();
        if sd <= -h {
            return 1.0;
        }
        if sd >= h {
            return 0.0;
        }
        if let Some(s) = region.flat_boundary_distance(x, h) {
            return 1.0 - self.marginal.cdf(s * self.mollifier.n);
        }
        if let Region::Box { lo, hi } = region {
            if x.len() == 3 {
                if let Some(v) = self.box_edge_indicator(x, lo, hi) {
                    return v;
                }
            }
        }
        let d = x.len();
        let mut s = 0.0;
        for (a, b) in self.segments(region, x) {
            for (r, w) in self.gl.mapped_smooth(a, b) {
                s += w * self.mollifier.profile(r) * r.powi(d as i32 - 1) * region.angular_measure(x, r);
            }
        }
        s.clamp(0.0, 1.0)
    }

    /// `(g_n * 1_box)(x)` in d = 3 when `B(x, 1/n)` meets faces normal to
    /// exactly two axes: the planar marginal of `g_n` against the rectangle.
    fn box_edge_indicator(&self, x: &[f64], lo: &[f64], hi: &[f64]) -> Option<f64> {
        let h = self.mollifier.radius();
        let axes: Vec<usize> = (0..3).filter(|&i| x[i] - lo[i] < h || hi[i] - x[i] < h).collect();
        if axes.len() != 2 {
            return None;
        }
        let (i, j) = (axes[0], axes[1]);
        let (xp, lp, hp) = ([x[i], x[j]], [lo[i], lo[j]], [hi[i], hi[j]]);
        let rect = Region::Box { lo: lp.to_vec(), hi: hp.to_vec() };
        let mut pts = vec![0.0];
        pts.extend(rect.kink_radii(&xp).into_iter().filter(|r| *r > 0.0 && *r < h));
        pts.push(h);
        let n = self.mollifier.n;
        let mut s = 0.0;
        for w in pts.windows(2).filter(|w| w[1] > w[0]) {
            for (r, wt) in self.gl.mapped_smooth(w[0], w[1]) {
                let arcs: f64 = arc_intervals_rect(xp[0], xp[1], r, lp, hp).iter().map(|(a, b)| b - a).sum();
                s += wt * n * n * planar_marginal_3d(n * r) * r * arcs;
            }
        }
        Some(s.clamp(0.0, 1.0))
    }

    /// `int g_n(x - y) f(y) 1_D(y) dy` by radial-angular quadrature.
    fn smoothed_restricted<F: FnMut(&[f64], f64)>(&self, region: &Region, x: &[f64], mut f: F) {
        let d = x.len();
        let mut nodes = DirNodes::new(d);
        let mut y = vec![0.0; d];
        for (a, b) in self.segments(region, x) {
            for (r, w) in self.gl.mapped_smooth(a, b) {
                region.angular_nodes(x, r, ANGULAR_NODES, &mut nodes);
                let wr = w * self.mollifier.profile(r) * r.powi(d as i32 - 1);
                for k in 0..nodes.len() {
                    let u = nodes.dir(k);
                    for c in 0..d {
                        y[c] = x[c] + r * u[c];
                    }
                    f(&y, wr * nodes.weights[k]);
                }
            }
        }
    }

    pub fn value(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.spec.dimension];
        Drift::eval(self, x, &mut out);
        out
    }

    /// Full mollified Jacobian `plus - minus`, row-major.
    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let d = self.spec.dimension;
        let mut p = vec![0.0; d * d];
        let mut m = vec![0.0; d * d];
        self.gradient_parts(x, &mut p, &mut m);
        p.iter().zip(&m).map(|(a, b)| a - b).collect()
    }
}

impl Drift for MollifiedDrift {
    fn dimension(&self) -> usize {
        self.spec.dimension
    }

    fn eval(&self, x: &[f64], out: &mut [f64]) {
        self.base.eval(x, out);
        let h = self.mollifier.radius();
        for p in &self.spec.pieces {
            let sd = p.region.signed_distance(x);
            if sd >= h {
                continue;
            }
            if p.field.is_constant() {
                let f = self.smoothed_indicator(&p.region, x);
                for (o, v) in out.iter_mut().zip(p.field.offset_value()) {
                    *o += f * v;
                }
            } else if sd <= -h {
                for (i, o) in out.iter_mut().enumerate() {
                    *o += p.field.component(i, x);
                }
            } else {
                let d = x.len();
                let mut buf = vec![0.0; d];
                self.smoothed_restricted(&p.region, x, |y, w| {
                    p.field.eval(y, &mut buf);
                    for i in 0..d {
                        out[i] += w * buf[i];
                    }
                });
            }
        }
    }

    fn sup_norm(&self) -> f64 {
        self.spec.sup_norm_bound()
    }

    fn label(&self) -> String {
        format!("{}@n={}", self.spec.label, self.n)
    }

    fn gradient_parts(&self, x: &[f64], plus: &mut [f64], minus: &mut [f64]) -> bool {
        let d = self.spec.dimension;
        plus.iter_mut().for_each(|v| *v = 0.0);
        minus.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..d {
            for j in 0..d {
                let v = self.base.partial(i, j, x);
                if v > 0.0 {
                    plus[i * d + j] += v;
                } else {
                    minus[i * d + j] -= v;
                }
            }
        }
        let h = self.mollifier.radius();
        let mut nodes = SurfaceNodes::new(d);
        let mut hv = vec![0.0; d];
        for p in &self.spec.pieces {
            let sd = p.region.signed_distance(x);
            if sd >= h {
                continue;
            }
            if !p.field.is_constant() {
                if sd <= -h {
                    let mut jac = vec![0.0; d * d];
                    MollifiedField::new(&p.field, self.n).add_jacobian(x, 1.0, &mut jac);
                    split_into(&jac, plus, minus);
                } else {
                    let mut jac = vec![0.0; d * d];
                    self.smoothed_restricted(&p.region, x, |y, w| {
                        p.field.jacobian(y, &mut jac);
                        for k in 0..d * d {
                            let v = w * jac[k];
                            if v > 0.0 {
                                plus[k] += v;
                            } else {
                                minus[k] -= v;
                            }
                        }
                    });
                }
            }
            if sd.abs() >= h {
                continue;
            }
            let m = if d == 3 { SURFACE_NODES_3D } else { SURFACE_NODES_2D };
            p.region.boundary_nodes_within(x, h, m, &mut nodes);
            for k in 0..nodes.len() {
                let y = nodes.point(k);
                let nrm = nodes.normal(k);
                let r = crate::geometry::dist2(x, y).sqrt();
                let g = nodes.weights[k] * self.mollifier.profile(r);
                if g == 0.0 {
                    continue;
                }
                p.field.eval(y, &mut hv);
                for i in 0..d {
                    for j in 0..d {
                        let v = -hv[i] * nrm[j] * g;
                        if v > 0.0 {
                            plus[i * d + j] += v;
                        } else {
                            minus[i * d + j] -= v;
                        }
                    }
                }
            }
        }
        true
    }
}

fn split_into(jac: &[f64], plus: &mut [f64], minus: &mut [f64]) {
    for k in 0..jac.len() {
        if jac[k] > 0.0 {
            plus[k] += jac[k];
        } else {
            minus[k] -= jac[k];
        }
    }
}
