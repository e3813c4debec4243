//! The standard bump mollifier `g_n(x) = c_d n^d exp(-1 / (1 - |n x|^2))` on `|x| < 1/n`.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use crate::quadrature::{self, GaussLegendre};
use crate::special::{expint_e1_scaled, sphere_area};

/// Unnormalized unit bump `exp(-1 / (1 - r^2))`.
#[inline]
pub fn unit_bump(r: f64) -> f64 {
    let q = 1.0 - r * r;
    if q <= 0.0 {
        0.0
    } else {
        (-1.0 / q).exp()
    }
}

/// Normalising constant `c_d` making the unit bump a probability density on `R^d`.
pub fn unit_normalization(d: usize) -> f64 {
    static CACHE: OnceLock<Mutex<HashMap<usize, f64>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(v) = cache.lock().expect("cache").get(&d) {
        return *v;
    }
    let radial = quadrature::integrate(|r| unit_bump(r) * r.powi(d as i32 - 1), 0.0, 1.0, 0.0, 1e-15).value;
    let c = 1.0 / (sphere_area(d) * radial);
    cache.lock().expect("cache").insert(d, c);
    c
}

/// `P(w) = int_0^w exp(-1/v) dv` for `0 <= w <= 1`.
pub fn exp_inv_primitive(w: f64) -> f64 {
    if w <= 0.0 {
        return 0.0;
    }
    (-1.0 / w).exp() * (w - expint_e1_scaled(1.0 / w))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mollifier {
    pub dimension: usize,
    pub n: f64,
    scale: f64,
}

impl Mollifier {
    pub fn new(dimension: usize, n: f64) -> Self {
        assert!(n > 0.0 && dimension >= 1);
        let scale = unit_normalization(dimension) * n.powi(dimension as i32);
        Mollifier { dimension, n, scale }
    }

    /// Support radius `1/n`.
    pub fn radius(&self) -> f64 {
        1.0 / self.n
    }

    /// Radial profile `g_n(r)`.
    #[inline]
    pub fn profile(&self, r: f64) -> f64 {
        self.scale * unit_bump(self.n * r)
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        self.profile(r)
    }

    /// Density at distance `rho` from the centre of `g_n * (w sigma_S)` for a
    /// sphere `S` of radius `radius`, `w` the uniform surface density.
    pub fn shell_profile(&self, rho: f64, radius: f64, w: f64) -> f64 {
        let h = self.radius();
        let lo = (rho - radius).abs();
        if lo >= h {
            return 0.0;
        }
        match self.dimension {
            1 => w * (self.profile((rho - radius).abs()) + self.profile(rho + radius)),
            2 => {
                if rho < 1e-12 * h {
                    return w * 2.0 * std::f64::consts::PI * radius * self.profile(radius);
                }
                let q = (rho * rho + radius * radius - h * h) / (2.0 * rho * radius);
                let psi_max = if q <= -1.0 { std::f64::consts::PI } else { q.min(1.0).acos() };
                let gl = GaussLegendre::cached(32);
                let s: f64 = gl
                    .mapped_smooth(0.0, psi_max)
                    .map(|(psi, wt)| {
                        let d2 = rho * rho + radius * radius - 2.0 * rho * radius * psi.cos();
                        wt * self.profile(d2.max(0.0).sqrt())
                    })
                    .sum();
                w * 2.0 * radius * s
            }
            3 => {
                if rho < 1e-9 * h {
                    return w * 4.0 * std::f64::consts::PI * radius * radius * self.profile(radius);
                }
                let hi = (rho + radius).min(h);
                let n2 = self.n * self.n;
                let c = unit_normalization(3) * self.n;
                let inner = 0.5 * c * (exp_inv_primitive(1.0 - n2 * lo * lo) - exp_inv_primitive(1.0 - n2 * hi * hi));
                w * 2.0 * std::f64::consts::PI * radius / rho * inner.max(0.0)
            }
            _ => {
                // axisymmetric angular average
                let d = self.dimension;
                let q = (rho * rho + radius * radius - h * h) / (2.0 * rho.max(1e-300) * radius);
                let th_max = if q <= -1.0 { std::f64::consts::PI } else { q.min(1.0).acos() };
                let gl = GaussLegendre::cached(48);
                let s: f64 = gl
                    .mapped_smooth(0.0, th_max)
                    .map(|(th, wt)| {
                        let d2 = rho * rho + radius * radius - 2.0 * rho * radius * th.cos();
                        wt * th.sin().powi(d as i32 - 2) * self.profile(d2.max(0.0).sqrt())
                    })
                    .sum();
                w * sphere_area(d - 1) * radius.powi(d as i32 - 1) * s
            }
        }
    }
}

/// Law of one coordinate of a point drawn from the unit bump density in `R^d`.
#[derive(Debug, Clone)]
pub struct ProjectedBump {
    pub dimension: usize,
    nodes: Vec<(f64, f64)>,
}

impl ProjectedBump {
    pub fn new(dimension: usize) -> Self {
        let gl = GaussLegendre::cached(64);
        let mut nodes: Vec<(f64, f64)> = gl
            .mapped(-1.0, 1.0)
            .map(|(u, w)| (u, w * marginal_density(dimension, u)))
            .collect();
        let total: f64 = nodes.iter().map(|p| p.1).sum();
        for p in &mut nodes {
            p.1 /= total;
        }
        ProjectedBump { dimension, nodes }
    }

    /// `E f(U)` for smooth `f`.
    pub fn expect<F: FnMut(f64) -> f64>(&self, mut f: F) -> f64 {
        self.nodes.iter().map(|&(u, w)| w * f(u)).sum()
    }

    /// `E f(U)` for `f` smooth between the given kink points.
    pub fn expect_split<F: FnMut(f64) -> f64>(&self, mut f: F, kinks: &[f64]) -> f64 {
        let mut pts = vec![-1.0];
        let mut inner: Vec<f64> = kinks.iter().copied().filter(|k| *k > -1.0 && *k < 1.0).collect();
        if inner.is_empty() {
            return self.expect(f);
        }
        inner.sort_by(f64::total_cmp);
        pts.extend(inner);
        pts.push(1.0);
        let gl = GaussLegendre::cached(32);
        let mut s = 0.0;
        for w in pts.windows(2) {
            for (u, wt) in gl.mapped(w[0], w[1]) {
                s += wt * marginal_density(self.dimension, u) * f(u);
            }
        }
        s
    }
}

/// Radial density of two coordinates of the normalised unit bump in `R^3`.
pub fn planar_marginal_3d(rho: f64) -> f64 {
    let w2 = 1.0 - rho * rho;
    if w2 <= 0.0 {
        return 0.0;
    }
    let w = w2.sqrt();
    let gl = GaussLegendre::cached(32);
    // z = w sin(theta)
    let s = gl.integrate(
        |th: f64| {
            let c = th.cos();
            (-1.0 / (w2 * c * c)).exp() * w * c
        },
        0.0,
        std::f64::consts::FRAC_PI_2,
    );
    2.0 * unit_normalization(3) * s
}

/// Distribution function of [`marginal_density`], cubic Hermite on a uniform table.
#[derive(Debug)]
pub struct MarginalCdf {
    step: f64,
    values: Vec<f64>,
    densities: Vec<f64>,
}

const CDF_CELLS: usize = 4096;

impl MarginalCdf {
    fn build(d: usize) -> Self {
        let step = 2.0 / CDF_CELLS as f64;
        let gl = GaussLegendre::cached(12);
        let mut values = Vec::with_capacity(CDF_CELLS + 1);
        let mut densities = Vec::with_capacity(CDF_CELLS + 1);
        let mut acc = 0.0;
        for k in 0..=CDF_CELLS {
            let u = -1.0 + k as f64 * step;
            if k > 0 {
                acc += gl.integrate(|v| marginal_density(d, v), u - step, u);
            }
            values.push(acc);
            densities.push(marginal_density(d, u));
        }
        let total = acc;
        values.iter_mut().for_each(|v| *v /= total);
        densities.iter_mut().for_each(|v| *v /= total);
        MarginalCdf { step, values, densities }
    }

    /// Shared table per dimension.
    pub fn cached(d: usize) -> Arc<MarginalCdf> {
        static CACHE: OnceLock<Mutex<HashMap<usize, Arc<MarginalCdf>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        if let Some(t) = cache.lock().expect("cache").get(&d) {
            return t.clone();
        }
        let t = Arc::new(MarginalCdf::build(d));
        cache.lock().expect("cache").insert(d, t.clone());
        t
    }

    /// `P(U <= u)`.
    pub fn cdf(&self, u: f64) -> f64 {
        if u <= -1.0 {
            return 0.0;
        }
        if u >= 1.0 {
            return 1.0;
        }
        let s = (u + 1.0) / self.step;
        let k = (s.floor() as usize).min(CDF_CELLS - 1);
        let t = s - k as f64;
        let (p0, p1) = (self.values[k], self.values[k + 1]);
        let (m0, m1) = (self.densities[k] * self.step, self.densities[k + 1] * self.step);
        let t2 = t * t;
        let t3 = t2 * t;
        (2.0 * t3 - 3.0 * t2 + 1.0) * p0 + (t3 - 2.0 * t2 + t) * m0 + (-2.0 * t3 + 3.0 * t2) * p1 + (t3 - t2) * m1
    }
}

/// Density of one coordinate under the normalised unit bump in `R^d`.
pub fn marginal_density(d: usize, u: f64) -> f64 {
    let a = 1.0 - u * u;
    if a <= 0.0 {
        return 0.0;
    }
    let c = unit_normalization(d);
    match d {
        1 => c * (-1.0 / a).exp(),
        2 => {
            // v = sqrt(a) sin(theta)
            let gl = GaussLegendre::cached(32);
            let sa = a.sqrt();
            let s = gl.integrate(
                |th: f64| {
                    let ct = th.cos();
                    (-1.0 / (a * ct * ct)).exp() * sa * ct
                },
                0.0,
                std::f64::consts::FRAC_PI_2,
            );
            c * 2.0 * s
        }
        3 => c * std::f64::consts::PI * exp_inv_primitive(a),
        _ => {
            let gl = GaussLegendre::cached(48);
            let sa = a.sqrt();
            let s = gl.integrate(|rho: f64| (-1.0 / (a - rho * rho)).exp() * rho.powi(d as i32 - 2), 0.0, sa);
            c * sphere_area(d - 1) * s
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn d1_normalization_matches_known_integral() {
        let c = unit_normalization(1);
        assert!((1.0 / c - 0.443_993_816_168_079_4).abs() < 1e-12);
    }

    #[test]
    fn mollifier_integrates_to_one() {
        for d in 1..=3 {
            let m = Mollifier::new(d, 8.0);
            let area = sphere_area(d);
            let v = quadrature::integrate(|r| m.profile(r) * r.powi(d as i32 - 1), 0.0, m.radius(), 0.0, 1e-14).value;
            assert!((area * v - 1.0).abs() < 1e-12, "d={d}");
        }
    }

    #[test]
    fn primitive_branches_agree() {
        let direct = quadrature::integrate(|v: f64| (-1.0 / v).exp(), 0.0, 0.3, 0.0, 1e-14).value;
        assert!(((exp_inv_primitive(0.3) - direct) / direct).abs() < 1e-12);
        let direct = quadrature::integrate(|v: f64| (-1.0 / v).exp(), 0.0, 0.04, 0.0, 1e-14).value;
        assert!(((exp_inv_primitive(0.04) - direct) / direct).abs() < 1e-10);
    }

    #[test]
    fn marginal_is_a_density() {
        for d in 1..=4 {
            let v = quadrature::integrate(|u| marginal_density(d, u), -1.0, 1.0, 0.0, 1e-13).value;
            assert!((v - 1.0).abs() < 1e-9, "d={d}: {v}");
            let pb = ProjectedBump::new(d);
            assert!((pb.expect(|_| 1.0) - 1.0).abs() < 1e-15);
            assert!(pb.expect(|u| u).abs() < 1e-15);
        }
    }

    #[test]
    fn split_expectation_matches_plain_for_smooth() {
        let pb = ProjectedBump::new(2);
        let a = pb.expect(|u| (3.0 * u).cos());
        let b = pb.expect_split(|u| (3.0 * u).cos(), &[0.2]);
        assert!((a - b).abs() < 1e-10);
    }

    #[test]
    fn shell_profile_has_surface_mass() {
        for d in 1..=3 {
            let m = Mollifier::new(d, 10.0);
            let r = 0.7;
            let v = quadrature::integrate_breaks(
                |rho| m.shell_profile(rho, r, 1.0) * sphere_area(d) * rho.powi(d as i32 - 1),
                &[0.0, r - 0.1, r, r + 0.1],
                0.0,
                1e-12,
            )
            .value;
            let area = sphere_area(d) * r.powi(d as i32 - 1);
            assert!(((v - area) / area).abs() < 1e-8, "d={d}: {v} vs {area}");
        }
    }
}
