//! Non-negative measures on `R^d` assembled from atoms, densities and
//! surface measures, plus signed measures as Jordan pairs.
//!
//! All integrals against radial weights centred at a point go through
//! [`radial_integral`]: the characteristic `f_t(x) = int k_t(x, y) nu(dy)`,
//! Kato local potentials and ball masses are all instances of it.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::SmoothField;
use crate::geometry::{dist2, full_sphere_nodes, orthonormal_frame, DirNodes, Region, SurfaceNodes};
use crate::kernel::{kernel_cutoff, radial_kernel};
use crate::mollifier::Mollifier;
use crate::quadrature::{integrate_breaks, GaussLegendre};
use crate::special::sphere_area;

const REL_TOL: f64 = 1e-10;
const ABS_TOL: f64 = 1e-15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Part {
    Plus,
    Minus,
}

impl Part {
    pub fn sign(self) -> f64 {
        match self {
            Part::Plus => 1.0,
            Part::Minus => -1.0,
        }
    }

    pub fn of(value: f64) -> Option<Part> {
        if value > 0.0 {
            Some(Part::Plus)
        } else if value < 0.0 {
            Some(Part::Minus)
        } else {
            None
        }
    }
}

/// Density of a surface measure with respect to surface area.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SurfaceWeight {
    Uniform { density: f64 },
    /// `(sign * (-h^i(y) n_j(y)))^+` with `n` the outward normal.
    Flux { field: SmoothField, component: usize, axis: usize, part: Part },
}

impl SurfaceWeight {
    #[inline]
    pub fn value(&self, y: &[f64], normal: &[f64]) -> f64 {
        match self {
            SurfaceWeight::Uniform { density } => *density,
            SurfaceWeight::Flux { field, component, axis, part } => {
                (part.sign() * -field.component(*component, y) * normal[*axis]).max(0.0)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum MeasureComponent {
    Atom { location: Vec<f64>, mass: f64 },
    /// Constant density on a region, or on all of `R^d` without one.
    Uniform { dimension: usize, density: f64, region: Option<Region> },
    /// `mass * g_n(y - center)`.
    Bump { center: Vec<f64>, mass: f64, n: f64 },
    /// `g_n * (density * sigma)` for the sphere of the given radius.
    Shell { center: Vec<f64>, radius: f64, density: f64, n: f64 },
    /// `(sign * d_j h^i)^+`, restricted to a region when given.
    FieldDerivative { field: SmoothField, component: usize, axis: usize, part: Part, region: Option<Region> },
    /// `g_n * inner`.
    Smoothed { inner: Box<MeasureComponent>, n: f64 },
    SphereSurface { center: Vec<f64>, radius: f64, weight: SurfaceWeight },
    BoxBoundary { lo: Vec<f64>, hi: Vec<f64>, weight: SurfaceWeight },
}

/// Radial weight `G(|x - y|)` integrated against a measure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RadialWeight {
    /// `k_t(r)`.
    Kernel { t: f64 },
    /// Counting (ball mass).
    Unit,
    /// `1` for d = 1, `ln(1/r)` for d = 2, `r^{2-d}` for d >= 3.
    KatoPotential,
    Mollifier(Mollifier),
}

impl RadialWeight {
    #[inline]
    pub fn value(&self, r: f64, d: usize) -> f64 {
        match self {
            RadialWeight::Kernel { t } => radial_kernel(*t, r, d).unwrap_or(f64::INFINITY),
            RadialWeight::Unit => 1.0,
            RadialWeight::KatoPotential => match d {
                1 => 1.0,
                2 => {
                    if r <= 0.0 {
                        f64::INFINITY
                    } else {
                        (1.0 / r).ln().max(0.0)
                    }
                }
                _ => r.powi(2 - d as i32),
            },
            RadialWeight::Mollifier(m) => m.profile(r),
        }
    }

    pub fn singular_at_zero(&self, d: usize) -> bool {
        match self {
            RadialWeight::Kernel { t } => d >= 2 && *t > 0.0,
            RadialWeight::KatoPotential => d >= 2,
            _ => false,
        }
    }

    fn natural_cutoff(&self) -> f64 {
        match self {
            RadialWeight::Kernel { t } => kernel_cutoff(*t),
            RadialWeight::Mollifier(m) => m.radius(),
            _ => f64::INFINITY,
        }
    }
}

impl MeasureComponent {
    pub fn dimension(&self) -> usize {
        match self {
            MeasureComponent::Atom { location, .. } => location.len(),
            MeasureComponent::Uniform { dimension, .. } => *dimension,
            MeasureComponent::Bump { center, .. } => center.len(),
            MeasureComponent::Shell { center, .. } => center.len(),
            MeasureComponent::FieldDerivative { field, .. } => field.dimension(),
            MeasureComponent::Smoothed { inner, .. } => inner.dimension(),
            MeasureComponent::SphereSurface { center, .. } => center.len(),
            MeasureComponent::BoxBoundary { lo, .. } => lo.len(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dimension();
        if d == 0 {
            return Err(Error::InvalidArgument("measure dimension must be positive".into()));
        }
        let nonneg = |v: f64, what: &str| {
            if v >= 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidArgument(format!("{what} must be finite and non-negative, got {v}")))
            }
        };
        match self {
            MeasureComponent::Atom { mass, .. } => nonneg(*mass, "atom mass")?,
            MeasureComponent::Uniform { density, region, .. } => {
                nonneg(*density, "density")?;
                if let Some(r) = region {
                    r.validate()?;
                    crate::error::check_dim(d, r.dimension())?;
                }
            }
            MeasureComponent::Bump { mass, n, .. } => {
                nonneg(*mass, "bump mass")?;
                if !(*n > 0.0) {
                    return Err(Error::InvalidArgument("mollification level must be positive".into()));
                }
            }
            MeasureComponent::Shell { radius, density, .. } => {
                nonneg(*density, "shell density")?;
                nonneg(*radius, "shell radius")?;
            }
            MeasureComponent::FieldDerivative { field, region, .. } => {
                field.validate()?;
                if let Some(r) = region {
                    r.validate()?;
                }
            }
            MeasureComponent::Smoothed { inner, .. } => inner.validate()?,
            MeasureComponent::SphereSurface { radius, weight, .. } => {
                if !(*radius > 0.0) {
                    return Err(Error::InvalidArgument("sphere radius must be positive".into()));
                }
                if let SurfaceWeight::Uniform { density } = weight {
                    nonneg(*density, "surface density")?;
                }
            }
            MeasureComponent::BoxBoundary { lo, hi, weight } => {
                Region::Box { lo: lo.clone(), hi: hi.clone() }.validate()?;
                if let SurfaceWeight::Uniform { density } = weight {
                    nonneg(*density, "surface density")?;
                }
            }
        }
        if d > 3 && !matches!(self, MeasureComponent::Atom { .. } | MeasureComponent::Uniform { region: None, .. }) {
            return Err(Error::UnsupportedDimension { dimension: d, what: "non-atomic measure components".into() });
        }
        Ok(())
    }

    /// Smallest ball containing the support, if bounded.
    pub fn support_ball(&self) -> Option<(Vec<f64>, f64)> {
        match self {
            MeasureComponent::Atom { location, .. } => Some((location.clone(), 0.0)),
            MeasureComponent::Uniform { region: Some(r), .. } | MeasureComponent::FieldDerivative { region: Some(r), .. } => {
                region_ball(r)
            }
            MeasureComponent::Uniform { region: None, .. } | MeasureComponent::FieldDerivative { region: None, .. } => None,
            MeasureComponent::Bump { center, n, .. } => Some((center.clone(), 1.0 / n)),
            MeasureComponent::Shell { center, radius, n, .. } => Some((center.clone(), radius + 1.0 / n)),
            MeasureComponent::Smoothed { inner, n } => inner.support_ball().map(|(c, r)| (c, r + 1.0 / n)),
            MeasureComponent::SphereSurface { center, radius, .. } => Some((center.clone(), *radius)),
            MeasureComponent::BoxBoundary { lo, hi, .. } => region_ball(&Region::Box { lo: lo.clone(), hi: hi.clone() }),
        }
    }

    /// Representative points for suprema over space.
    pub fn candidate_points(&self) -> Vec<Vec<f64>> {
        let d = self.dimension();
        match self {
            MeasureComponent::Atom { location, .. } => vec![location.clone()],
            MeasureComponent::Uniform { region: Some(r), .. } | MeasureComponent::FieldDerivative { region: Some(r), .. } => {
                let mut pts = r.boundary_samples();
                pts.extend(region_lattice(r));
                pts
            }
            MeasureComponent::Uniform { region: None, .. } => vec![vec![0.0; d]],
            MeasureComponent::FieldDerivative { field, region: None, .. } => {
                let mut pts = vec![vec![0.0; d]];
                // ridge centres, where the derivative density peaks
                for r in field.ridges() {
                    let w2: f64 = r.w.iter().map(|v| v * v).sum();
                    if w2 > 0.0 {
                        pts.push(r.w.iter().map(|v| -r.b * v / w2).collect());
                    }
                }
                pts
            }
            MeasureComponent::Bump { center, .. } => vec![center.clone()],
            MeasureComponent::Shell { center, radius, .. } | MeasureComponent::SphereSurface { center, radius, .. } => {
                let mut pts = vec![center.clone()];
                pts.extend(Region::Ball { center: center.clone(), radius: *radius }.boundary_samples());
                pts
            }
            MeasureComponent::Smoothed { inner, .. } => inner.candidate_points(),
            MeasureComponent::BoxBoundary { lo, hi, .. } => Region::Box { lo: lo.clone(), hi: hi.clone() }.boundary_samples(),
        }
    }

    /// Total mass (may be infinite).
    pub fn mass(&self) -> Result<f64> {
        match self {
            MeasureComponent::Atom { mass, .. } => Ok(*mass),
            MeasureComponent::Uniform { density, region, .. } => Ok(match region {
                Some(r) if *density > 0.0 => density * r.volume(),
                Some(_) => 0.0,
                None if *density > 0.0 => f64::INFINITY,
                None => 0.0,
            }),
            MeasureComponent::Bump { mass, .. } => Ok(*mass),
            MeasureComponent::Shell { center, radius, density, .. } => {
                Ok(density * sphere_area(center.len()) * radius.powi(center.len() as i32 - 1))
            }
            MeasureComponent::Smoothed { inner, .. } => inner.mass(),
            MeasureComponent::FieldDerivative { region: None, .. } => Ok(f64::INFINITY),
            MeasureComponent::FieldDerivative { region: Some(_), .. } => {
                let (c, r) = self.support_ball().expect("bounded");
                radial_integral(self, &c, r * 1.000001 + 1e-12, RadialWeight::Unit)
            }
            MeasureComponent::SphereSurface { .. } | MeasureComponent::BoxBoundary { .. } => {
                let mut nodes = SurfaceNodes::new(self.dimension());
                self.surface_nodes(&mut nodes)?;
                let weight = self.surface_weight().expect("surface");
                Ok((0..nodes.len()).map(|i| nodes.weights[i] * weight.value(nodes.point(i), nodes.normal(i))).sum())
            }
        }
    }

    fn surface_weight(&self) -> Option<&SurfaceWeight> {
        match self {
            MeasureComponent::SphereSurface { weight, .. } | MeasureComponent::BoxBoundary { weight, .. } => Some(weight),
            _ => None,
        }
    }

    fn surface_region(&self) -> Option<Region> {
        match self {
            MeasureComponent::SphereSurface { center, radius, .. } => Some(Region::Ball { center: center.clone(), radius: *radius }),
            MeasureComponent::BoxBoundary { lo, hi, .. } => Some(Region::Box { lo: lo.clone(), hi: hi.clone() }),
            _ => None,
        }
    }

    fn surface_nodes(&self, out: &mut SurfaceNodes) -> Result<()> {
        let region = self.surface_region().ok_or_else(|| Error::InvalidArgument("not a surface measure".into()))?;
        region.boundary_nodes_all(32, out);
        Ok(())
    }

    /// Density with respect to Lebesgue measure, for absolutely continuous components.
    pub fn density_at(&self, y: &[f64]) -> Option<f64> {
        match self {
            MeasureComponent::Uniform { density, region, .. } => Some(match region {
                Some(r) if !r.contains(y) => 0.0,
                _ => *density,
            }),
            MeasureComponent::Bump { center, mass, n } => {
                Some(mass * Mollifier::new(center.len(), *n).profile(dist2(y, center).sqrt()))
            }
            MeasureComponent::Shell { center, radius, density, n } => {
                Some(Mollifier::new(center.len(), *n).shell_profile(dist2(y, center).sqrt(), *radius, *density))
            }
            MeasureComponent::FieldDerivative { field, component, axis, part, region } => {
                if let Some(r) = region {
                    if !r.contains(y) {
                        return Some(0.0);
                    }
                }
                Some((part.sign() * field.partial(*component, *axis, y)).max(0.0))
            }
            MeasureComponent::Smoothed { inner, n } => {
                radial_integral(inner, y, 1.0 / n, RadialWeight::Mollifier(Mollifier::new(inner.dimension(), *n))).ok()
            }
            _ => None,
        }
    }

    pub fn is_atomic(&self) -> bool {
        matches!(self, MeasureComponent::Atom { .. })
    }
}

fn region_ball(r: &Region) -> Option<(Vec<f64>, f64)> {
    match r {
        Region::Ball { center, radius } => Some((center.clone(), *radius)),
        Region::Box { lo, hi } => {
            let c: Vec<f64> = lo.iter().zip(hi).map(|(a, b)| 0.5 * (a + b)).collect();
            let rad = lo.iter().zip(hi).map(|(a, b)| 0.25 * (b - a) * (b - a)).sum::<f64>().sqrt();
            Some((c, rad))
        }
        Region::Ray { .. } => None,
    }
}

fn region_lattice(r: &Region) -> Vec<Vec<f64>> {
    let (lo, hi) = r.bounding_box();
    let d = lo.len();
    if lo.iter().chain(&hi).any(|v| !v.is_finite()) {
        return vec![vec![match r {
            Region::Ray { origin, positive } => origin + if *positive { 1.0 } else { -1.0 },
            _ => 0.0,
        }]];
    }
    let mut out = Vec::new();
    let k = 3usize;
    for idx in 0..k.pow(d as u32) {
        let mut p = vec![0.0; d];
        let mut rem = idx;
        for i in 0..d {
            let j = rem % k;
            rem /= k;
            p[i] = lo[i] + (hi[i] - lo[i]) * (j as f64 + 0.5) / k as f64;
        }
        out.push(p);
    }
    out
}

/// `int_{|y - x| < r_max} G(|x - y|) nu(dy)` for one component.
pub fn radial_integral(comp: &MeasureComponent, x: &[f64], r_max: f64, weight: RadialWeight) -> Result<f64> {
    let d = comp.dimension();
    crate::error::check_dim(d, x.len())?;
    let r_max = r_max.min(weight.natural_cutoff());
    match comp {
        MeasureComponent::Atom { location, mass } => {
            let r = dist2(x, location).sqrt();
            if r >= r_max || *mass == 0.0 {
                return Ok(0.0);
            }
            if r == 0.0 && weight.singular_at_zero(d) {
                return Err(Error::InfiniteCharacteristic { point: x.to_vec() });
            }
            Ok(mass * weight.value(r, d))
        }
        MeasureComponent::Uniform { density, region, .. } => {
            if *density == 0.0 {
                return Ok(0.0);
            }
            match region {
                None => {
                    if let RadialWeight::Kernel { t } = weight {
                        // int k_t(x, y) dy = t
                        return Ok(density * t);
                    }
                    if !r_max.is_finite() {
                        return Ok(f64::INFINITY);
                    }
                    let area = sphere_area(d);
                    Ok(density * area * radial_1d(d, weight, 0.0, r_max, &[], |_| 1.0))
                }
                Some(reg) => {
                    let far = far_radius(reg, x).min(r_max);
                    let kinks = reg.kink_radii(x);
                    Ok(density * radial_1d(d, weight, 0.0, far, &kinks, |r| reg.angular_measure(x, r)))
                }
            }
        }
        MeasureComponent::Bump { center, mass, n } => {
            let m = Mollifier::new(d, *n);
            let prof = |s: f64| mass * m.profile(s);
            Ok(axisymmetric(d, x, center, 0.0, 1.0 / n, r_max, weight, &prof))
        }
        MeasureComponent::Shell { center, radius, density, n } => {
            let m = Mollifier::new(d, *n);
            let h = 1.0 / n;
            let prof = |s: f64| m.shell_profile(s, *radius, *density);
            Ok(axisymmetric(d, x, center, (radius - h).max(0.0), radius + h, r_max, weight, &prof))
        }
        MeasureComponent::FieldDerivative { region, .. } => {
            let (far, kinks) = match region {
                Some(reg) => (far_radius(reg, x), reg.kink_radii(x)),
                None => (f64::INFINITY, Vec::new()),
            };
            let hi = far.min(r_max);
            if !hi.is_finite() {
                return Ok(f64::INFINITY);
            }
            let m = if d == 3 { 12 } else { 32 };
            let mut nodes = DirNodes::new(d);
            let mut y = vec![0.0; d];
            Ok(radial_1d(d, weight, 0.0, hi, &kinks, |r| {
                match region {
                    Some(reg) => reg.angular_nodes(x, r, m, &mut nodes),
                    None => full_sphere_nodes(d, m, &mut nodes),
                }
                let mut s = 0.0;
                for i in 0..nodes.len() {
                    let u = nodes.dir(i);
                    for k in 0..d {
                        y[k] = x[k] + r * u[k];
                    }
                    s += nodes.weights[i] * comp.density_at(&y).unwrap_or(0.0);
                }
                s
            }))
        }
        MeasureComponent::Smoothed { inner, n } => {
            let (lo, hi) = match inner.support_ball() {
                Some((c, rad)) => {
                    let rho = dist2(x, &c).sqrt();
                    ((rho - rad - 1.0 / n).max(0.0), rho + rad + 1.0 / n)
                }
                None => (0.0, f64::INFINITY),
            };
            let hi = hi.min(r_max);
            if !hi.is_finite() {
                return Ok(f64::INFINITY);
            }
            if lo >= hi {
                return Ok(0.0);
            }
            let m = if d == 3 { 10 } else { 24 };
            let mut nodes = DirNodes::new(d);
            full_sphere_nodes(d, m, &mut nodes);
            let mut y = vec![0.0; d];
            let mut failed = None;
            let v = radial_1d(d, weight, lo, hi, &[], |r| {
                let mut s = 0.0;
                for i in 0..nodes.len() {
                    let u = nodes.dir(i);
                    for k in 0..d {
                        y[k] = x[k] + r * u[k];
                    }
                    match comp.density_at(&y) {
                        Some(v) => s += nodes.weights[i] * v,
                        None => failed = Some(()),
                    }
                }
                s
            });
            if failed.is_some() {
                return Err(Error::InfiniteCharacteristic { point: x.to_vec() });
            }
            Ok(v)
        }
        MeasureComponent::SphereSurface { center, radius, weight: sw } => sphere_surface_integral(d, x, center, *radius, sw, r_max, weight),
        MeasureComponent::BoxBoundary { lo, hi, weight: sw } => box_boundary_integral(d, x, lo, hi, sw, r_max, weight),
    }
}

fn far_radius(reg: &Region, x: &[f64]) -> f64 {
    let (lo, hi) = reg.bounding_box();
    let mut s = 0.0;
    for k in 0..x.len() {
        let a = (x[k] - lo[k]).abs().max((x[k] - hi[k]).abs());
        s += a * a;
    }
    s.sqrt()
}

/// `int_lo^hi G(r) r^{d-1} A(r) dr`, split at kinks.
fn radial_1d<F: FnMut(f64) -> f64>(d: usize, weight: RadialWeight, lo: f64, hi: f64, kinks: &[f64], mut angular: F) -> f64 {
    if !(hi > lo) {
        return 0.0;
    }
    let mut pts = vec![lo];
    pts.extend(kinks.iter().copied().filter(|k| *k > lo && *k < hi));
    pts.push(hi);
    pts.sort_by(f64::total_cmp);
    let res = integrate_breaks(
        |r| {
            let a = angular(r);
            if a == 0.0 {
                0.0
            } else {
                weight.value(r, d) * r.powi(d as i32 - 1) * a
            }
        },
        &pts,
        ABS_TOL,
        REL_TOL,
    );
    res.value
}

/// Integral of a density that is radial about `center` and supported in the
/// shell `s_lo <= |y - center| <= s_hi`.
#[allow(clippy::too_many_arguments)]
fn axisymmetric(
    d: usize,
    x: &[f64],
    center: &[f64],
    s_lo: f64,
    s_hi: f64,
    r_max: f64,
    weight: RadialWeight,
    prof: &dyn Fn(f64) -> f64,
) -> f64 {
    let rho = dist2(x, center).sqrt();
    let lo = (rho - s_hi).max(0.0);
    let hi = (rho + s_hi).min(r_max);
    if lo >= hi {
        return 0.0;
    }
    let kinks = [(rho - s_lo).abs(), rho + s_lo, (rho - s_hi).abs()];
    let gl = GaussLegendre::cached(32);
    let area_sub = if d >= 2 { sphere_area(d - 1) } else { 0.0 };
    let angular = |r: f64| -> f64 {
        if d == 1 {
            let a = prof((x[0] + r - center[0]).abs());
            let b = prof((x[0] - r - center[0]).abs());
            return a + b;
        }
        if rho < 1e-12 * s_hi.max(1e-300) {
            return sphere_area(d) * prof(r);
        }
        // |y - c|^2 = rho^2 + r^2 - 2 rho r cos(theta)
        let cos_of = |s: f64| (rho * rho + r * r - s * s) / (2.0 * rho * r);
        let th_a = cos_of(s_lo).clamp(-1.0, 1.0).acos();
        let th_b = cos_of(s_hi).clamp(-1.0, 1.0).acos();
        let (a, b) = (th_a.min(th_b), th_a.max(th_b));
        if b <= a {
            return 0.0;
        }
        let mut s = 0.0;
        for (th, w) in gl.mapped_smooth(a, b) {
            let dist = (rho * rho + r * r - 2.0 * rho * r * th.cos()).max(0.0).sqrt();
            s += w * th.sin().powi(d as i32 - 2) * prof(dist);
        }
        area_sub * s
    };
    radial_1d(d, weight, lo, hi, &kinks, angular)
}

fn sphere_surface_integral(d: usize, x: &[f64], c: &[f64], radius: f64, sw: &SurfaceWeight, r_max: f64, weight: RadialWeight) -> Result<f64> {
    let rho = dist2(x, c).sqrt();
    match d {
        1 => {
            let mut s = 0.0;
            for sign in [-1.0, 1.0] {
                let y = c[0] + sign * radius;
                let r = (y - x[0]).abs();
                if r < r_max {
                    s += weight.value(r, 1) * sw.value(&[y], &[sign]);
                }
            }
            Ok(s)
        }
        2 => {
            if (rho - radius).abs() >= r_max {
                return Ok(0.0);
            }
            if rho < 1e-14 {
                let mut s = 0.0;
                for k in 0..64 {
                    let psi = 2.0 * PI * (k as f64 + 0.5) / 64.0;
                    let n = [psi.cos(), psi.sin()];
                    s += sw.value(&[c[0] + radius * n[0], c[1] + radius * n[1]], &n);
                }
                return Ok(weight.value(radius, 2) * s * radius * 2.0 * PI / 64.0);
            }
            let e = [(x[0] - c[0]) / rho, (x[1] - c[1]) / rho];
            let q = (rho * rho + radius * radius - r_max * r_max) / (2.0 * rho * radius);
            let psi_max = if q <= -1.0 || !r_max.is_finite() { PI } else { q.min(1.0).acos() };
            let f = |psi: f64| {
                let (sp, cp) = psi.sin_cos();
                let n = [cp * e[0] - sp * e[1], cp * e[1] + sp * e[0]];
                let y = [c[0] + radius * n[0], c[1] + radius * n[1]];
                let r = (rho * rho + radius * radius - 2.0 * rho * radius * cp).max(0.0).sqrt();
                if r == 0.0 {
                    return 0.0;
                }
                weight.value(r, 2) * sw.value(&y, &n) * radius
            };
            Ok(integrate_breaks(f, &[-psi_max, 0.0, psi_max], ABS_TOL, REL_TOL).value)
        }
        3 => {
            if (rho - radius).abs() >= r_max {
                return Ok(0.0);
            }
            if rho < 1e-14 {
                let mut nodes = DirNodes::new(3);
                full_sphere_nodes(3, 24, &mut nodes);
                let mut s = 0.0;
                for i in 0..nodes.len() {
                    let n = nodes.dir(i);
                    let y = [c[0] + radius * n[0], c[1] + radius * n[1], c[2] + radius * n[2]];
                    s += nodes.weights[i] * sw.value(&y, n);
                }
                return Ok(weight.value(radius, 3) * radius * radius * s);
            }
            let e = [(x[0] - c[0]) / rho, (x[1] - c[1]) / rho, (x[2] - c[2]) / rho];
            let (e1, e2) = orthonormal_frame(&e);
            let lo = (rho - radius).abs();
            let hi = (rho + radius).min(r_max);
            let azimuth = |r: f64| -> f64 {
                let ct = ((rho * rho + radius * radius - r * r) / (2.0 * rho * radius)).clamp(-1.0, 1.0);
                let st = (1.0 - ct * ct).max(0.0).sqrt();
                match sw {
                    SurfaceWeight::Uniform { density } => 2.0 * PI * density,
                    SurfaceWeight::Flux { field, component, axis, part } if field.is_constant() => {
                        let h = field.offset_value()[*component];
                        let kappa = -part.sign() * h;
                        let a = kappa * ct * e[*axis];
                        let b = (kappa * st).abs() * (e1[*axis] * e1[*axis] + e2[*axis] * e2[*axis]).sqrt();
                        positive_part_cos_integral(a, b)
                    }
                    _ => {
                        let k = 64;
                        let mut s = 0.0;
                        for i in 0..k {
                            let phi = 2.0 * PI * (i as f64 + 0.5) / k as f64;
                            let (sp, cp) = phi.sin_cos();
                            let n = [
                                ct * e[0] + st * (cp * e1[0] + sp * e2[0]),
                                ct * e[1] + st * (cp * e1[1] + sp * e2[1]),
                                ct * e[2] + st * (cp * e1[2] + sp * e2[2]),
                            ];
                            let y = [c[0] + radius * n[0], c[1] + radius * n[1], c[2] + radius * n[2]];
                            s += sw.value(&y, &n);
                        }
                        s * 2.0 * PI / k as f64
                    }
                }
            };
            // dsigma = (R / rho) r dr dphi
            let f = |r: f64| weight.value(r, 3) * r * radius / rho * azimuth(r);
            Ok(integrate_breaks(f, &[lo, hi], ABS_TOL, REL_TOL).value)
        }
        _ => Err(Error::UnsupportedDimension { dimension: d, what: "sphere surface measures".into() }),
    }
}

/// `int_0^{2 pi} (a + b cos psi)^+ dpsi` for `b >= 0`.
pub fn positive_part_cos_integral(a: f64, b: f64) -> f64 {
    if b <= a.abs() {
        return if a > 0.0 { 2.0 * PI * a } else { 0.0 };
    }
    let psi0 = (-a / b).acos();
    2.0 * (a * psi0 + b * psi0.sin())
}

fn box_boundary_integral(d: usize, x: &[f64], lo: &[f64], hi: &[f64], sw: &SurfaceWeight, r_max: f64, weight: RadialWeight) -> Result<f64> {
    if d > 3 {
        return Err(Error::UnsupportedDimension { dimension: d, what: "box boundary measures".into() });
    }
    let mut total = 0.0;
    for k in 0..d {
        for (side, sign) in [(lo[k], -1.0), (hi[k], 1.0)] {
            let delta = (x[k] - side).abs();
            if delta >= r_max {
                continue;
            }
            let reach = if r_max.is_finite() { (r_max * r_max - delta * delta).sqrt() } else { f64::INFINITY };
            let mut normal = vec![0.0; d];
            normal[k] = sign;
            let others: Vec<usize> = (0..d).filter(|&i| i != k).collect();
            match others.len() {
                0 => {
                    if delta > 0.0 || !weight.singular_at_zero(1) {
                        total += weight.value(delta, 1) * sw.value(&[side], &normal);
                    }
                }
                1 => {
                    let i = others[0];
                    let a = lo[i].max(x[i] - reach);
                    let b = hi[i].min(x[i] + reach);
                    if b <= a {
                        continue;
                    }
                    let p = x[i].clamp(a, b);
                    let f = |u: f64| {
                        let mut y = [0.0; 2];
                        y[k] = side;
                        y[i] = u;
                        let r = (delta * delta + (u - x[i]) * (u - x[i])).sqrt();
                        if r == 0.0 {
                            return 0.0;
                        }
                        weight.value(r, 2) * sw.value(&y, &normal)
                    };
                    total += integrate_breaks(f, &[a, p, b], ABS_TOL, REL_TOL).value;
                }
                _ => {
                    let (i, j) = (others[0], others[1]);
                    let a = lo[i].max(x[i] - reach);
                    let b = hi[i].min(x[i] + reach);
                    if b <= a {
                        continue;
                    }
                    let p = x[i].clamp(a, b);
                    let outer = |u: f64| {
                        let du2 = (u - x[i]) * (u - x[i]);
                        let rem = if reach.is_finite() { reach * reach - du2 } else { f64::INFINITY };
                        if rem <= 0.0 {
                            return 0.0;
                        }
                        let h = rem.sqrt();
                        let c0 = lo[j].max(x[j] - h);
                        let c1 = hi[j].min(x[j] + h);
                        if c1 <= c0 {
                            return 0.0;
                        }
                        let q = x[j].clamp(c0, c1);
                        let inner = |v: f64| {
                            let mut y = [0.0; 3];
                            y[k] = side;
                            y[i] = u;
                            y[j] = v;
                            let r = (delta * delta + du2 + (v - x[j]) * (v - x[j])).sqrt();
                            if r == 0.0 {
                                return 0.0;
                            }
                            weight.value(r, 3) * sw.value(&y, &normal)
                        };
                        integrate_breaks(inner, &[c0, q, c1], ABS_TOL, 1e-11).value
                    };
                    total += integrate_breaks(outer, &[a, p, b], ABS_TOL, REL_TOL).value;
                }
            }
        }
    }
    Ok(total)
}

/// Characteristic `f_t(x) = sum_c int k_t(x, y) c(dy)` of a non-negative measure.
pub fn characteristic(components: &[MeasureComponent], t: f64, x: &[f64]) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(Error::InvalidArgument(format!("time horizon must be non-negative, got {t}")));
    }
    let mut s = 0.0;
    for c in components {
        s += radial_integral(c, x, f64::INFINITY, RadialWeight::Kernel { t })?;
    }
    Ok(s)
}

/// `nu(B(x, rho))`.
pub fn ball_mass(components: &[MeasureComponent], x: &[f64], rho: f64) -> Result<f64> {
    let mut s = 0.0;
    for c in components {
        s += radial_integral(c, x, rho, RadialWeight::Unit)?;
    }
    Ok(s)
}

/// Mollify each component at level `n`.
pub fn mollify(components: &[MeasureComponent], n: f64) -> Vec<MeasureComponent> {
    components
        .iter()
        .map(|c| match c {
            MeasureComponent::Atom { location, mass } => MeasureComponent::Bump { center: location.clone(), mass: *mass, n },
            MeasureComponent::SphereSurface { center, radius, weight: SurfaceWeight::Uniform { density } } => {
                MeasureComponent::Shell { center: center.clone(), radius: *radius, density: *density, n }
            }
            other => MeasureComponent::Smoothed { inner: Box::new(other.clone()), n },
        })
        .collect()
}

/// Signed measure as a Jordan pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignedMeasureSpec {
    pub dimension: usize,
    #[serde(default)]
    pub positive: Vec<MeasureComponent>,
    #[serde(default)]
    pub negative: Vec<MeasureComponent>,
}

impl SignedMeasureSpec {
    pub fn zero(dimension: usize) -> Self {
        SignedMeasureSpec { dimension, positive: Vec::new(), negative: Vec::new() }
    }

    pub fn nonnegative(dimension: usize, components: Vec<MeasureComponent>) -> Self {
        SignedMeasureSpec { dimension, positive: components, negative: Vec::new() }
    }

    pub fn part(&self, p: Part) -> &[MeasureComponent] {
        match p {
            Part::Plus => &self.positive,
            Part::Minus => &self.negative,
        }
    }

    /// Components of the total variation `|nu|`.
    pub fn total_variation(&self) -> Vec<MeasureComponent> {
        self.positive.iter().chain(&self.negative).cloned().collect()
    }

    pub fn is_zero(&self) -> bool {
        self.positive.is_empty() && self.negative.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        for c in self.positive.iter().chain(&self.negative) {
            crate::error::check_dim(self.dimension, c.dimension())?;
            c.validate()?;
        }
        Ok(())
    }

    pub fn characteristic(&self, p: Part, t: f64, x: &[f64]) -> Result<f64> {
        characteristic(self.part(p), t, x)
    }

    pub fn mollify(&self, n: f64) -> SignedMeasureSpec {
        SignedMeasureSpec { dimension: self.dimension, positive: mollify(&self.positive, n), negative: mollify(&self.negative, n) }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::direct_kernel;
    use crate::quadrature;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn atom_characteristic_is_kernel() {
        let nu = [MeasureComponent::Atom { location: vec![0.5], mass: 2.0 }];
        let v = characteristic(&nu, 1.0, &[0.0]).unwrap();
        assert!(rel(v, 2.0 * radial_kernel(1.0, 0.5, 1).unwrap()) < 1e-15);
    }

    #[test]
    fn atom_at_point_in_2d_is_infinite() {
        let nu = [MeasureComponent::Atom { location: vec![0.0, 0.0], mass: 1.0 }];
        assert!(matches!(characteristic(&nu, 1.0, &[0.0, 0.0]), Err(Error::InfiniteCharacteristic { .. })));
    }

    #[test]
    fn lebesgue_characteristic_is_t() {
        let nu = [MeasureComponent::Uniform { dimension: 2, density: 1.0, region: None }];
        assert_eq!(characteristic(&nu, 0.7, &[3.0, 1.0]).unwrap(), 0.7);
    }

    #[test]
    fn uniform_interval_characteristic_matches_quadrature() {
        // d = 1 interval [-1, 1]: f_t(x) = int_{-1}^{1} k_t(|x - y|) dy
        let nu = [MeasureComponent::Uniform { dimension: 1, density: 1.0, region: Some(Region::Ball { center: vec![0.0], radius: 1.0 }) }];
        for x in [0.0f64, 0.5, 1.0, 2.0] {
            let want = quadrature::integrate_breaks(|y| radial_kernel(1.0, (x - y).abs(), 1).unwrap(), &[-1.0, x.clamp(-1.0, 1.0), 1.0], 0.0, 1e-13).value;
            let got = characteristic(&nu, 1.0, &[x]).unwrap();
            assert!(rel(got, want) < 1e-9, "x={x}: {got} vs {want}");
        }
    }

    #[test]
    fn sphere_surface_characteristic_d3_centre() {
        let nu = [MeasureComponent::SphereSurface { center: vec![0.0; 3], radius: 1.0, weight: SurfaceWeight::Uniform { density: 1.0 } }];
        let v = characteristic(&nu, 1.0, &[0.0; 3]).unwrap();
        assert!(rel(v, 4.0 * PI * radial_kernel(1.0, 1.0, 3).unwrap()) < 1e-12);
    }

    #[test]
    fn sphere_surface_d3_off_centre_matches_shell_formula() {
        // f(x) = int k(|x - y|) dsigma = (2 pi R / rho) int_{|rho-R|}^{rho+R} k(r) r dr
        let nu = [MeasureComponent::SphereSurface { center: vec![0.0; 3], radius: 1.0, weight: SurfaceWeight::Uniform { density: 1.0 } }];
        for rho in [0.3, 1.0, 1.7] {
            let want = 2.0 * PI / rho
                * quadrature::integrate(|r| direct_kernel(0.5, r, 3).unwrap() * r, (rho - 1.0f64).abs(), rho + 1.0, 0.0, 1e-12).value;
            let got = characteristic(&nu, 0.5, &[0.0, rho, 0.0]).unwrap();
            assert!(rel(got, want) < 1e-8, "rho={rho}: {got} vs {want}");
        }
    }

    #[test]
    fn circle_surface_d2_mass_and_characteristic() {
        let nu = [MeasureComponent::SphereSurface { center: vec![0.0; 2], radius: 1.0, weight: SurfaceWeight::Uniform { density: 1.0 } }];
        assert!(rel(nu[0].mass().unwrap(), 2.0 * PI) < 1e-12);
        // at the centre every point is at distance 1
        let v = characteristic(&nu, 1.0, &[0.0, 0.0]).unwrap();
        assert!(rel(v, 2.0 * PI * radial_kernel(1.0, 1.0, 2).unwrap()) < 1e-12);
        // on the circle: finite (log singularity integrable)
        let on = characteristic(&nu, 1.0, &[1.0, 0.0]).unwrap();
        assert!(on.is_finite() && on > v);
    }

    #[test]
    fn bump_converges_to_atom() {
        let atom = [MeasureComponent::Atom { location: vec![0.0], mass: 1.0 }];
        let x = [0.4];
        let exact = characteristic(&atom, 1.0, &x).unwrap();
        let mut prev = f64::INFINITY;
        for n in [4.0, 16.0, 64.0] {
            let v = characteristic(&mollify(&atom, n), 1.0, &x).unwrap();
            let gap = (v - exact).abs();
            assert!(gap < prev);
            prev = gap;
        }
        assert!(prev < 1e-3);
    }

    #[test]
    fn bump_and_shell_masses() {
        for d in 1..=3 {
            let c = vec![0.1; d];
            let bump = MeasureComponent::Bump { center: c.clone(), mass: 2.5, n: 3.0 };
            let far = 5.0;
            let m = radial_integral(&bump, &vec![0.0; d], far, RadialWeight::Unit).unwrap();
            assert!(rel(m, 2.5) < 1e-8, "d={d}: {m}");
            let shell = MeasureComponent::Shell { center: c.clone(), radius: 0.6, density: 1.0, n: 5.0 };
            let m = radial_integral(&shell, &vec![0.2; d], far, RadialWeight::Unit).unwrap();
            let want = shell.mass().unwrap();
            assert!(rel(m, want) < 1e-7, "d={d}: {m} vs {want}");
        }
    }

    #[test]
    fn box_boundary_mass_by_radial_integral() {
        for d in 1..=3 {
            let comp = MeasureComponent::BoxBoundary { lo: vec![-0.5; d], hi: vec![0.4; d], weight: SurfaceWeight::Uniform { density: 2.0 } };
            let area = Region::Box { lo: vec![-0.5; d], hi: vec![0.4; d] }.surface_area();
            let m = radial_integral(&comp, &vec![0.1; d], 10.0, RadialWeight::Unit).unwrap();
            assert!(rel(m, 2.0 * area) < 1e-8, "d={d}: {m}");
        }
    }

    #[test]
    fn flux_weight_azimuth_closed_form() {
        let f = |a: f64, b: f64| {
            quadrature::integrate_breaks(|p: f64| (a + b * p.cos()).max(0.0), &[0.0, (-a / b).clamp(-1.0, 1.0).acos(), 2.0 * PI - (-a / b).clamp(-1.0, 1.0).acos(), 2.0 * PI], 0.0, 1e-13).value
        };
        for (a, b) in [(0.3, 1.0), (-0.3, 1.0), (2.0, 1.0), (-2.0, 1.0), (0.0, 0.7)] {
            assert!((positive_part_cos_integral(a, b) - f(a, b)).abs() < 1e-10, "{a} {b}");
        }
    }

    #[test]
    fn flux_sphere_jordan_parts_sum_to_abs_normal_flux() {
        // constant field h = (0, 0, 1): -h^3 n_3 on the unit sphere; |.| integrates to 2 pi
        let field = SmoothField::Constant { value: vec![0.0, 0.0, 1.0] };
        let mk = |part| MeasureComponent::SphereSurface {
            center: vec![0.0; 3],
            radius: 1.0,
            weight: SurfaceWeight::Flux { field: field.clone(), component: 2, axis: 2, part },
        };
        let x = [0.2, -0.1, 0.3];
        let p = radial_integral(&mk(Part::Plus), &x, 10.0, RadialWeight::Unit).unwrap();
        let m = radial_integral(&mk(Part::Minus), &x, 10.0, RadialWeight::Unit).unwrap();
        assert!(rel(p, PI) < 1e-9 && rel(m, PI) < 1e-9, "{p} {m}");
    }

    #[test]
    fn field_derivative_density_in_interval() {
        let field = SmoothField::Tanh { amplitude: vec![1.0], weights: vec![vec![2.0]], offset: vec![0.0] };
        let comp = MeasureComponent::FieldDerivative { field, component: 0, axis: 0, part: Part::Plus, region: Some(Region::Ball { center: vec![0.0], radius: 1.0 }) };
        // int_{-1}^{1} 2 sech^2(2y) dy = 2 tanh(2)
        assert!(rel(comp.mass().unwrap(), 2.0 * 2f64.tanh()) < 1e-9);
    }
}
