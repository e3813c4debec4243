//! Regions with piecewise-smooth boundary and the quadrature nodes built on them.
//!
//! Angular quantities are taken over spheres `S(x, r)` centred at an
//! evaluation point; measures are absolute (the full sphere has measure
//! `|S^{d-1}|`, which is 2 in one dimension).

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::GaussLegendre;
use crate::special::{ball_volume, sphere_area};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "kebab-case")]
pub enum Region {
    Ball { center: Vec<f64>, radius: f64 },
    Box { lo: Vec<f64>, hi: Vec<f64> },
    /// Half-line `(origin, inf)` when `positive`, else `(-inf, origin)`.
    Ray { origin: f64, positive: bool },
}

/// Directions on the unit sphere with quadrature weights.
#[derive(Debug, Clone, Default)]
pub struct DirNodes {
    pub dim: usize,
    pub dirs: Vec<f64>,
    pub weights: Vec<f64>,
}

impl DirNodes {
    pub fn new(dim: usize) -> Self {
        DirNodes { dim, dirs: Vec::new(), weights: Vec::new() }
    }
    pub fn clear(&mut self) {
        self.dirs.clear();
        self.weights.clear();
    }
    pub fn push(&mut self, dir: &[f64], w: f64) {
        self.dirs.extend_from_slice(dir);
        self.weights.push(w);
    }
    pub fn len(&self) -> usize {
        self.weights.len()
    }
    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
    pub fn dir(&self, i: usize) -> &[f64] {
        &self.dirs[i * self.dim..(i + 1) * self.dim]
    }
    pub fn total(&self) -> f64 {
        self.weights.iter().sum()
    }
}

/// Points on a boundary with outward normals and surface weights.
#[derive(Debug, Clone, Default)]
pub struct SurfaceNodes {
    pub dim: usize,
    pub points: Vec<f64>,
    pub normals: Vec<f64>,
    pub weights: Vec<f64>,
}

impl SurfaceNodes {
    pub fn new(dim: usize) -> Self {
        SurfaceNodes { dim, ..Default::default() }
    }
    pub fn clear(&mut self) {
        self.points.clear();
        self.normals.clear();
        self.weights.clear();
    }
    pub fn push(&mut self, y: &[f64], normal: &[f64], w: f64) {
        self.points.extend_from_slice(y);
        self.normals.extend_from_slice(normal);
        self.weights.push(w);
    }
    pub fn len(&self) -> usize {
        self.weights.len()
    }
    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }
    pub fn normal(&self, i: usize) -> &[f64] {
        &self.normals[i * self.dim..(i + 1) * self.dim]
    }
}

impl Region {
    pub fn dimension(&self) -> usize {
        match self {
            Region::Ball { center, .. } => center.len(),
            Region::Box { lo, .. } => lo.len(),
            Region::Ray { .. } => 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dimension();
        if d == 0 || d > 3 {
            return Err(Error::UnsupportedRegion(format!("regions are supported for 1 <= d <= 3, got d = {d}")));
        }
        match self {
            Region::Ball { radius, .. } if !(*radius > 0.0 && radius.is_finite()) => {
                Err(Error::InvalidArgument(format!("ball radius must be positive, got {radius}")))
            }
            Region::Box { lo, hi } => {
                if lo.len() != hi.len() {
                    return Err(Error::DimensionMismatch { expected: lo.len(), got: hi.len() });
                }
                if lo.iter().zip(hi).any(|(a, b)| !(a < b) || !a.is_finite() || !b.is_finite()) {
                    return Err(Error::InvalidArgument("box needs finite lo < hi in every coordinate".into()));
                }
                Ok(())
            }
            Region::Ray { origin, .. } if !origin.is_finite() => Err(Error::InvalidArgument("ray origin must be finite".into())),
            _ => Ok(()),
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        match self {
            Region::Ball { center, radius } => dist2(x, center) < radius * radius,
            Region::Box { lo, hi } => x.iter().zip(lo.iter().zip(hi)).all(|(v, (a, b))| *v > *a && *v < *b),
            Region::Ray { origin, positive } => {
                if *positive {
                    x[0] > *origin
                } else {
                    x[0] < *origin
                }
            }
        }
    }

    /// Signed distance to the single hyperplane carrying all of the boundary
    /// inside `B(x, h)`, when there is one.
    pub fn flat_boundary_distance(&self, x: &[f64], h: f64) -> Option<f64> {
        match self {
            Region::Ray { .. } => Some(self.signed_distance(x)),
            Region::Box { lo, hi } => {
                let mut face = None;
                for i in 0..x.len() {
                    let (a, b) = (x[i] - lo[i], hi[i] - x[i]);
                    if a >= h && b >= h {
                        continue;
                    }
                    if face.is_some() || (a < h && b < h) {
                        return None;
                    }
                    face = Some(-a.min(b));
                }
                face
            }
            Region::Ball { .. } => None,
        }
    }

    /// Signed distance to the boundary, negative inside.
    pub fn signed_distance(&self, x: &[f64]) -> f64 {
        match self {
            Region::Ball { center, radius } => dist2(x, center).sqrt() - radius,
            Region::Box { lo, hi } => {
                let mut outside = 0.0;
                let mut inside = f64::NEG_INFINITY;
                for i in 0..x.len() {
                    let q = (lo[i] - x[i]).max(x[i] - hi[i]);
                    outside += q.max(0.0).powi(2);
                    inside = inside.max(q);
                }
                if outside > 0.0 {
                    outside.sqrt()
                } else {
                    inside.min(0.0)
                }
            }
            Region::Ray { origin, positive } => {
                if *positive {
                    origin - x[0]
                } else {
                    x[0] - origin
                }
            }
        }
    }

    pub fn volume(&self) -> f64 {
        match self {
            Region::Ball { center, radius } => ball_volume(center.len()) * radius.powi(center.len() as i32),
            Region::Box { lo, hi } => lo.iter().zip(hi).map(|(a, b)| b - a).product(),
            Region::Ray { .. } => f64::INFINITY,
        }
    }

    pub fn surface_area(&self) -> f64 {
        match self {
            Region::Ball { center, radius } => sphere_area(center.len()) * radius.powi(center.len() as i32 - 1),
            Region::Box { lo, hi } => {
                let d = lo.len();
                let mut s = 0.0;
                for k in 0..d {
                    let mut face = 1.0;
                    for i in 0..d {
                        if i != k {
                            face *= hi[i] - lo[i];
                        }
                    }
                    s += 2.0 * face;
                }
                s
            }
            Region::Ray { .. } => 1.0,
        }
    }

    /// Axis-aligned bounding box; infinite for rays.
    pub fn bounding_box(&self) -> (Vec<f64>, Vec<f64>) {
        match self {
            Region::Ball { center, radius } => (
                center.iter().map(|c| c - radius).collect(),
                center.iter().map(|c| c + radius).collect(),
            ),
            Region::Box { lo, hi } => (lo.clone(), hi.clone()),
            Region::Ray { origin, positive } => {
                if *positive {
                    (vec![*origin], vec![f64::INFINITY])
                } else {
                    (vec![f64::NEG_INFINITY], vec![*origin])
                }
            }
        }
    }

    /// A handful of points on the boundary.
    pub fn boundary_samples(&self) -> Vec<Vec<f64>> {
        match self {
            Region::Ball { center, radius } => {
                let d = center.len();
                let mut out = Vec::new();
                for k in 0..d {
                    for s in [-1.0, 1.0] {
                        let mut y = center.clone();
                        y[k] += s * radius;
                        out.push(y);
                    }
                }
                if d >= 2 {
                    let mut y = center.clone();
                    let f = radius / (d as f64).sqrt();
                    for v in y.iter_mut() {
                        *v += f;
                    }
                    out.push(y);
                }
                out
            }
            Region::Box { lo, hi } => {
                let d = lo.len();
                let mut out = Vec::new();
                for mask in 0..(1usize << d) {
                    out.push((0..d).map(|i| if mask >> i & 1 == 1 { hi[i] } else { lo[i] }).collect());
                }
                for k in 0..d {
                    for side in [lo[k], hi[k]] {
                        let mut y: Vec<f64> = lo.iter().zip(hi).map(|(a, b)| 0.5 * (a + b)).collect();
                        y[k] = side;
                        out.push(y);
                    }
                }
                out
            }
            Region::Ray { origin, .. } => vec![vec![*origin]],
        }
    }

    /// Radii at which `r -> angular_measure(x, r)` fails to be smooth.
    pub fn kink_radii(&self, x: &[f64]) -> Vec<f64> {
        let mut out = match self {
            Region::Ball { center, radius } => {
                let rho = dist2(x, center).sqrt();
                vec![(rho - radius).abs(), rho + radius]
            }
            Region::Ray { origin, .. } => vec![(x[0] - origin).abs()],
            Region::Box { lo, hi } => {
                let d = x.len();
                let mut v = Vec::new();
                let gaps: Vec<[f64; 2]> = (0..d).map(|i| [x[i] - lo[i], x[i] - hi[i]]).collect();
                for g in &gaps {
                    v.push(g[0].abs());
                    v.push(g[1].abs());
                }
                if d >= 2 {
                    for i in 0..d {
                        for j in (i + 1)..d {
                            for a in gaps[i] {
                                for b in gaps[j] {
                                    v.push((a * a + b * b).sqrt());
                                }
                            }
                        }
                    }
                }
                if d == 3 {
                    for a in gaps[0] {
                        for b in gaps[1] {
                            for c in gaps[2] {
                                v.push((a * a + b * b + c * c).sqrt());
                            }
                        }
                    }
                }
                v
            }
        };
        out.retain(|r| *r > 0.0 && r.is_finite());
        out.sort_by(f64::total_cmp);
        out.dedup_by(|a, b| (*a - *b).abs() <= 1e-15 * b.abs().max(1.0));
        out
    }

    /// Measure of the directions `theta` with `x + r theta` inside the region.
    pub fn angular_measure(&self, x: &[f64], r: f64) -> f64 {
        let d = x.len();
        if r <= 0.0 {
            return if self.contains(x) { sphere_area(d) } else { 0.0 };
        }
        match self {
            Region::Ball { center, radius } => {
                let rho = dist2(x, center).sqrt();
                let q = cap_cosine(rho, r, *radius);
                match d {
                    1 => count_inside(self, x, r),
                    2 => 2.0 * q.clamp(-1.0, 1.0).acos(),
                    3 => 2.0 * PI * (1.0 - q.clamp(-1.0, 1.0)),
                    _ => f64::NAN,
                }
            }
            Region::Ray { .. } => count_inside(self, x, r),
            Region::Box { lo, hi } => match d {
                1 => count_inside(self, x, r),
                2 => arc_intervals_rect(x[0], x[1], r, [lo[0], lo[1]], [hi[0], hi[1]])
                    .iter()
                    .map(|(a, b)| b - a)
                    .sum(),
                3 => {
                    let gl = GaussLegendre::cached(24);
                    let mut s = 0.0;
                    for (a, b) in box_polar_pieces(x, r, lo, hi) {
                        for (th, w) in gl.mapped_smooth(a, b) {
                            let rs = r * th.sin();
                            let arcs: f64 = arc_intervals_rect(x[0], x[1], rs, [lo[0], lo[1]], [hi[0], hi[1]])
                                .iter()
                                .map(|(a, b)| b - a)
                                .sum();
                            s += w * th.sin() * arcs;
                        }
                    }
                    s
                }
                _ => f64::NAN,
            },
        }
    }

    /// Directions `theta` with `x + r theta` inside, weighted so they sum to
    /// `angular_measure(x, r)`. `m` controls the per-piece node count.
    pub fn angular_nodes(&self, x: &[f64], r: f64, m: usize, out: &mut DirNodes) {
        out.clear();
        out.dim = x.len();
        let d = x.len();
        if d == 1 {
            for s in [-1.0, 1.0] {
                if self.contains(&[x[0] + s * r]) {
                    out.push(&[s], 1.0);
                }
            }
            return;
        }
        match self {
            Region::Ball { center, radius } => {
                let rho = dist2(x, center).sqrt();
                let q = cap_cosine(rho, r, *radius);
                if q >= 1.0 {
                    return;
                }
                if q <= -1.0 || rho == 0.0 {
                    full_sphere_nodes(d, m, out);
                    return;
                }
                let axis: Vec<f64> = center.iter().zip(x).map(|(c, v)| (c - v) / rho).collect();
                cap_nodes(&axis, q, m, out);
            }
            Region::Box { lo, hi } => {
                let gl = GaussLegendre::cached(m);
                if d == 2 {
                    for (a, b) in arc_intervals_rect(x[0], x[1], r, [lo[0], lo[1]], [hi[0], hi[1]]) {
                        for (phi, w) in gl.mapped(a, b) {
                            out.push(&[phi.cos(), phi.sin()], w);
                        }
                    }
                } else {
                    for (a, b) in box_polar_pieces(x, r, lo, hi) {
                        for (th, w) in gl.mapped_smooth(a, b) {
                            let (st, ct) = th.sin_cos();
                            for (pa, pb) in arc_intervals_rect(x[0], x[1], r * st, [lo[0], lo[1]], [hi[0], hi[1]]) {
                                for (phi, wp) in gl.mapped(pa, pb) {
                                    out.push(&[st * phi.cos(), st * phi.sin(), ct], w * wp * st);
                                }
                            }
                        }
                    }
                }
            }
            Region::Ray { .. } => {}
        }
    }

    /// Outward normal at a boundary point.
    pub fn outward_normal(&self, y: &[f64]) -> Vec<f64> {
        match self {
            Region::Ball { center, radius } => y.iter().zip(center).map(|(a, c)| (a - c) / radius).collect(),
            Region::Box { lo, hi } => {
                let d = y.len();
                let mut best = (f64::INFINITY, 0usize, 0.0);
                for k in 0..d {
                    let dl = (y[k] - lo[k]).abs();
                    let dh = (y[k] - hi[k]).abs();
                    if dl < best.0 {
                        best = (dl, k, -1.0);
                    }
                    if dh < best.0 {
                        best = (dh, k, 1.0);
                    }
                }
                let mut n = vec![0.0; d];
                n[best.1] = best.2;
                n
            }
            Region::Ray { positive, .. } => vec![if *positive { -1.0 } else { 1.0 }],
        }
    }

    /// Boundary nodes inside the open ball `B(x, rho)`.
    pub fn boundary_nodes_within(&self, x: &[f64], rho: f64, m: usize, out: &mut SurfaceNodes) {
        out.clear();
        out.dim = x.len();
        let d = x.len();
        match self {
            Region::Ray { origin, positive } => {
                if (x[0] - origin).abs() < rho {
                    out.push(&[*origin], &[if *positive { -1.0 } else { 1.0 }], 1.0);
                }
            }
            Region::Ball { center, radius } => {
                let r = *radius;
                let dist = dist2(x, center).sqrt();
                if (dist - r).abs() >= rho {
                    return;
                }
                if d == 1 {
                    for s in [-1.0, 1.0] {
                        let y = center[0] + s * r;
                        if (y - x[0]).abs() < rho {
                            out.push(&[y], &[s], 1.0);
                        }
                    }
                    return;
                }
                // boundary points y = c + r u with |y - x| < rho <=> u . e > q
                let q = if dist == 0.0 { -2.0 } else { (dist * dist + r * r - rho * rho) / (2.0 * dist * r) };
                let mut dirs = DirNodes::new(d);
                if q <= -1.0 || dist == 0.0 {
                    full_sphere_nodes(d, m, &mut dirs);
                } else {
                    let axis: Vec<f64> = x.iter().zip(center).map(|(a, c)| (a - c) / dist).collect();
                    cap_nodes(&axis, q, m, &mut dirs);
                }
                let scale = r.powi(d as i32 - 1);
                let mut y = vec![0.0; d];
                for i in 0..dirs.len() {
                    let u = dirs.dir(i);
                    for k in 0..d {
                        y[k] = center[k] + r * u[k];
                    }
                    out.push(&y, u, dirs.weights[i] * scale);
                }
            }
            Region::Box { lo, hi } => {
                let gl = GaussLegendre::cached(m);
                for k in 0..d {
                    for (side, sign) in [(lo[k], -1.0), (hi[k], 1.0)] {
                        let delta = (x[k] - side).abs();
                        if delta >= rho {
                            continue;
                        }
                        let reach = (rho * rho - delta * delta).sqrt();
                        let mut normal = vec![0.0; d];
                        normal[k] = sign;
                        let others: Vec<usize> = (0..d).filter(|&i| i != k).collect();
                        let mut y = vec![0.0; d];
                        y[k] = side;
                        match others.len() {
                            0 => out.push(&y, &normal, 1.0),
                            1 => {
                                let i = others[0];
                                let a = lo[i].max(x[i] - reach);
                                let b = hi[i].min(x[i] + reach);
                                if b > a {
                                    for (s, w) in gl.mapped_smooth(a, b) {
                                        y[i] = s;
                                        out.push(&y, &normal, w);
                                    }
                                }
                            }
                            _ => {
                                let (i, j) = (others[0], others[1]);
                                let a = lo[i].max(x[i] - reach);
                                let b = hi[i].min(x[i] + reach);
                                if b <= a {
                                    continue;
                                }
                                for (u, wu) in gl.mapped_smooth(a, b) {
                                    let rem = reach * reach - (u - x[i]) * (u - x[i]);
                                    if rem <= 0.0 {
                                        continue;
                                    }
                                    let h = rem.sqrt();
                                    let c0 = lo[j].max(x[j] - h);
                                    let c1 = hi[j].min(x[j] + h);
                                    if c1 <= c0 {
                                        continue;
                                    }
                                    for (v, wv) in gl.mapped_smooth(c0, c1) {
                                        y[i] = u;
                                        y[j] = v;
                                        out.push(&y, &normal, wu * wv);
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    /// Nodes covering the whole boundary.
    pub fn boundary_nodes_all(&self, m: usize, out: &mut SurfaceNodes) {
        let (lo, hi) = self.bounding_box();
        let d = self.dimension();
        let mut probe = vec![0.0; d];
        let mut diam2 = 0.0;
        for k in 0..d {
            if lo[k].is_finite() && hi[k].is_finite() {
                probe[k] = 0.5 * (lo[k] + hi[k]);
                diam2 += (hi[k] - lo[k]).powi(2);
            } else {
                probe[k] = if lo[k].is_finite() { lo[k] } else { hi[k] };
            }
        }
        self.boundary_nodes_within(&probe, diam2.sqrt() + 1.0, m, out);
    }
}

fn count_inside(region: &Region, x: &[f64], r: f64) -> f64 {
    let mut c = 0.0;
    for s in [-1.0, 1.0] {
        if region.contains(&[x[0] + s * r]) {
            c += 1.0;
        }
    }
    c
}

/// Cosine threshold: `x + r theta` lies in `B(c, R)` iff `theta . (c - x)/rho > q`.
fn cap_cosine(rho: f64, r: f64, radius: f64) -> f64 {
    if rho == 0.0 {
        return if r < radius { -2.0 } else { 2.0 };
    }
    (rho * rho + r * r - radius * radius) / (2.0 * rho * r)
}

pub(crate) fn dist2(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// Uniform-weight nodes on the full sphere in d = 2 or 3.
pub fn full_sphere_nodes(d: usize, m: usize, out: &mut DirNodes) {
    out.clear();
    out.dim = d;
    match d {
        1 => {
            out.push(&[-1.0], 1.0);
            out.push(&[1.0], 1.0);
        }
        2 => {
            let k = 2 * m;
            let w = 2.0 * PI / k as f64;
            for i in 0..k {
                let phi = w * (i as f64 + 0.5);
                out.push(&[phi.cos(), phi.sin()], w);
            }
        }
        _ => {
            let gl = GaussLegendre::cached(m);
            let k = 2 * m;
            let wp = 2.0 * PI / k as f64;
            for (c, w) in gl.mapped(-1.0, 1.0) {
                let s = (1.0 - c * c).max(0.0).sqrt();
                for i in 0..k {
                    let phi = wp * (i as f64 + 0.5);
                    out.push(&[s * phi.cos(), s * phi.sin(), c], w * wp);
                }
            }
        }
    }
}

/// Nodes on the cap `{u : u . axis > q}` for d = 2 or 3.
pub fn cap_nodes(axis: &[f64], q: f64, m: usize, out: &mut DirNodes) {
    out.clear();
    let d = axis.len();
    out.dim = d;
    let gl = GaussLegendre::cached(m);
    let q = q.clamp(-1.0, 1.0);
    if d == 2 {
        let alpha = q.acos();
        let base = axis[1].atan2(axis[0]);
        for (phi, w) in gl.mapped_smooth(base - alpha, base + alpha) {
            out.push(&[phi.cos(), phi.sin()], w);
        }
        return;
    }
    let (e1, e2) = orthonormal_frame(axis);
    let k = 2 * m;
    let wp = 2.0 * PI / k as f64;
    // cap boundary cos = q; use angle so that a small cap keeps resolution
    let alpha = q.acos();
    for (th, w) in gl.mapped_smooth(0.0, alpha) {
        let (s, c) = th.sin_cos();
        for i in 0..k {
            let phi = wp * (i as f64 + 0.5);
            let (sp, cp) = phi.sin_cos();
            let u = [
                c * axis[0] + s * (cp * e1[0] + sp * e2[0]),
                c * axis[1] + s * (cp * e1[1] + sp * e2[1]),
                c * axis[2] + s * (cp * e1[2] + sp * e2[2]),
            ];
            out.push(&u, w * s * wp);
        }
    }
}

pub fn orthonormal_frame(axis: &[f64]) -> ([f64; 3], [f64; 3]) {
    let a = [axis[0], axis[1], axis[2]];
    let pick = if a[0].abs() <= a[1].abs() && a[0].abs() <= a[2].abs() {
        [1.0, 0.0, 0.0]
    } else if a[1].abs() <= a[2].abs() {
        [0.0, 1.0, 0.0]
    } else {
        [0.0, 0.0, 1.0]
    };
    let mut e1 = cross(a, pick);
    let n1 = (e1[0] * e1[0] + e1[1] * e1[1] + e1[2] * e1[2]).sqrt();
    for v in e1.iter_mut() {
        *v /= n1;
    }
    let e2 = cross(a, e1);
    (e1, e2)
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

/// Angles `phi in [-pi, pi]` with `a < cos(phi) < b`.
fn cos_band(a: f64, b: f64) -> Vec<(f64, f64)> {
    if a >= 1.0 || b <= -1.0 || a >= b {
        return Vec::new();
    }
    let lo = b.min(1.0).acos();
    let hi = a.max(-1.0).acos();
    if lo == 0.0 {
        vec![(-hi, hi)]
    } else {
        vec![(-hi, -lo), (lo, hi)]
    }
}

fn shift_wrap(intervals: Vec<(f64, f64)>, shift: f64) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    for (a, b) in intervals {
        let (mut a, mut b) = (a + shift, b + shift);
        while a >= PI {
            a -= 2.0 * PI;
            b -= 2.0 * PI;
        }
        while a < -PI {
            a += 2.0 * PI;
            b += 2.0 * PI;
        }
        if b > PI {
            out.push((a, PI));
            out.push((-PI, b - 2.0 * PI));
        } else {
            out.push((a, b));
        }
    }
    out
}

/// Arcs of the circle of radius `r` about `(cx, cy)` inside the open rectangle.
pub fn arc_intervals_rect(cx: f64, cy: f64, r: f64, lo: [f64; 2], hi: [f64; 2]) -> Vec<(f64, f64)> {
    if r <= 0.0 {
        let inside = cx > lo[0] && cx < hi[0] && cy > lo[1] && cy < hi[1];
        return if inside { vec![(-PI, PI)] } else { Vec::new() };
    }
    let xs = cos_band((lo[0] - cx) / r, (hi[0] - cx) / r);
    // sin(phi) = cos(phi - pi/2)
    let ys = shift_wrap(cos_band((lo[1] - cy) / r, (hi[1] - cy) / r), PI / 2.0);
    let mut cuts = vec![-PI, PI];
    for (a, b) in xs.iter().chain(ys.iter()) {
        cuts.push(*a);
        cuts.push(*b);
    }
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let inside = |set: &[(f64, f64)], p: f64| set.iter().any(|(a, b)| p > *a && p < *b);
    let mut out: Vec<(f64, f64)> = Vec::new();
    for w in cuts.windows(2) {
        if w[1] <= w[0] {
            continue;
        }
        let mid = 0.5 * (w[0] + w[1]);
        if inside(&xs, mid) && inside(&ys, mid) {
            if let Some(last) = out.last_mut() {
                if last.1 == w[0] {
                    last.1 = w[1];
                    continue;
                }
            }
            out.push((w[0], w[1]));
        }
    }
    out
}

/// Polar-angle pieces (axis e_3) on which the box slice is non-empty and its
/// arc measure is smooth.
fn box_polar_pieces(x: &[f64], r: f64, lo: &[f64], hi: &[f64]) -> Vec<(f64, f64)> {
    let a = ((lo[2] - x[2]) / r).max(-1.0);
    let b = ((hi[2] - x[2]) / r).min(1.0);
    if a >= b {
        return Vec::new();
    }
    let th_lo = b.acos();
    let th_hi = a.acos();
    let mut cuts = vec![th_lo, th_hi];
    let mut planar = Vec::new();
    for i in 0..2 {
        planar.push((x[i] - lo[i]).abs());
        planar.push((x[i] - hi[i]).abs());
    }
    for gi in [x[0] - lo[0], x[0] - hi[0]] {
        for gj in [x[1] - lo[1], x[1] - hi[1]] {
            planar.push((gi * gi + gj * gj).sqrt());
        }
    }
    for p in planar {
        if p < r {
            let t = (p / r).asin();
            for c in [t, PI - t] {
                if c > th_lo && c < th_hi {
                    cuts.push(c);
                }
            }
        }
    }
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    cuts.windows(2).filter(|w| w[1] > w[0]).map(|w| (w[0], w[1])).collect()
}
