//! Time-integrated Gaussian kernel `k_t(x, y) = int_0^t p_s(x, y) ds`.
//!
//! Two routes: the radial closed form in terms of the upper incomplete gamma
//! function, and a direct adaptive quadrature over `s`. Scaled variants
//! return `k_t(r) exp(r^2 / 2t)` so tiny kernel values can still be compared
//! to relative precision.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::quadrature;
use crate::special::{erfc, erfcx, gamma, upper_gamma_scaled};

/// Kernel `k_t(x, y)` for points of equal dimension.
pub fn wiener_kernel(t: f64, x: &[f64], y: &[f64]) -> Result<f64> {
    crate::error::check_dim(x.len(), y.len())?;
    let d = x.len();
    if d == 0 {
        return Err(Error::InvalidArgument("dimension must be positive".into()));
    }
    let r = distance(x, y);
    if r == 0.0 && d >= 2 && t > 0.0 {
        return Err(Error::DiagonalSingularity { dimension: d });
    }
    radial_kernel(t, r, d)
}

/// Radial profile `k_t(r)`; `t` may be `f64::INFINITY`.
pub fn radial_kernel(t: f64, r: f64, d: usize) -> Result<f64> {
    check_args(t, r, d)?;
    if t == 0.0 {
        return Ok(0.0);
    }
    if t.is_infinite() {
        if d <= 2 {
            return Ok(f64::INFINITY);
        }
        if r == 0.0 {
            return Ok(f64::INFINITY);
        }
        let a = d as f64 / 2.0 - 1.0;
        return Ok(r.powf(2.0 - d as f64) * gamma(a) / (2.0 * PI.powf(d as f64 / 2.0)));
    }
    if r == 0.0 {
        return Ok(if d == 1 { (2.0 * t / PI).sqrt() } else { f64::INFINITY });
    }
    let x = r * r / (2.0 * t);
    if d == 1 && x < 1.0 {
        return Ok((2.0 * t / PI).sqrt() * (-x).exp() - r * erfc(x.sqrt()));
    }
    Ok(radial_scaled_unchecked(t, r, d) * (-x).exp())
}

/// `k_t(r) exp(r^2 / 2t)` through the incomplete-gamma form.
pub fn radial_kernel_scaled(t: f64, r: f64, d: usize) -> Result<f64> {
    check_args(t, r, d)?;
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::InvalidArgument("scaled kernel needs finite t > 0".into()));
    }
    if r == 0.0 {
        return Ok(if d == 1 { (2.0 * t / PI).sqrt() } else { f64::INFINITY });
    }
    Ok(radial_scaled_unchecked(t, r, d))
}

fn radial_scaled_unchecked(t: f64, r: f64, d: usize) -> f64 {
    let x = r * r / (2.0 * t);
    if d == 1 && x < 1.0 {
        return (2.0 * t / PI).sqrt() - r * erfcx(x.sqrt());
    }
    let a = d as f64 / 2.0 - 1.0;
    r.powf(2.0 - d as f64) / (2.0 * PI.powf(d as f64 / 2.0)) * upper_gamma_scaled(a, x)
}

/// `k_t(r) exp(r^2 / 2t)` by adaptive quadrature over time.
///
/// Integrates in `v = ln(t / s)`, where the integrand is bounded and
/// decays doubly exponentially once `x e^v` is large.
pub fn direct_kernel_scaled(t: f64, r: f64, d: usize) -> Result<f64> {
    check_args(t, r, d)?;
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::InvalidArgument("direct kernel needs finite t > 0".into()));
    }
    if r == 0.0 && d >= 2 {
        return Ok(f64::INFINITY);
    }
    let x = r * r / (2.0 * t);
    let h = d as f64 / 2.0;
    let pref = t * (2.0 * PI * t).powf(-h);
    let f = |v: f64| {
        let damp = if x > 0.0 { -x * v.exp_m1() } else { 0.0 };
        pref * ((h - 1.0) * v + damp).exp()
    };
    let (upper, mut points) = if x > 0.0 {
        let upper = (1.0 + 800.0 / x).ln() + 2.0;
        let knee = (1.0 / x).ln();
        let mut pts = vec![0.0];
        if knee > 0.0 && knee < upper {
            pts.push(knee);
        }
        (upper, pts)
    } else {
        (90.0, vec![0.0])
    };
    points.push(upper);
    let res = quadrature::integrate_breaks(f, &points, 0.0, 1e-13);
    if !res.converged && res.error > 1e-10 * res.value.abs() {
        return Err(Error::Quadrature(format!("direct kernel t={t} r={r} d={d}")));
    }
    Ok(res.value)
}

/// Direct route without scaling.
pub fn direct_kernel(t: f64, r: f64, d: usize) -> Result<f64> {
    let x = r * r / (2.0 * t);
    Ok(direct_kernel_scaled(t, r, d)? * (-x).exp())
}

fn check_args(t: f64, r: f64, d: usize) -> Result<()> {
    if d == 0 {
        return Err(Error::InvalidArgument("dimension must be positive".into()));
    }
    if !(t >= 0.0) {
        return Err(Error::InvalidArgument(format!("time horizon must be non-negative, got {t}")));
    }
    if !(r >= 0.0) || r.is_infinite() {
        return Err(Error::InvalidArgument(format!("radius must be finite and non-negative, got {r}")));
    }
    Ok(())
}

pub(crate) fn distance(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
}

/// Radius beyond which `k_t(r)` is negligible relative to `k_t(0^+)`.
pub(crate) fn kernel_cutoff(t: f64) -> f64 {
    (2.0 * t * 80.0).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn d1_diagonal() {
        let v = wiener_kernel(1.0, &[0.0], &[0.0]).unwrap();
        assert!((v - (2.0 / PI).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn d3_whole_time_green_function() {
        let v = wiener_kernel(f64::INFINITY, &[0.0, 0.0, 0.0], &[1.0, 0.0, 0.0]).unwrap();
        assert!((v - 1.0 / (2.0 * PI)).abs() < 1e-14);
    }

    #[test]
    fn d2_is_exponential_integral() {
        let v = radial_kernel(0.5, 0.7, 2).unwrap();
        let e1 = crate::special::expint_e1(0.49);
        assert!((v - e1 / (2.0 * PI)).abs() < 1e-15);
    }

    #[test]
    fn diagonal_singularity_reported() {
        let e = wiener_kernel(1.0, &[0.0, 0.0], &[0.0, 0.0]).unwrap_err();
        assert_eq!(e, Error::DiagonalSingularity { dimension: 2 });
    }

    #[test]
    #[allow(clippy::approx_constant)]
    fn d1_branches_agree() {
        // closed form and gamma form on either side of x = 1
        for &r in &[1.41f64, 1.4142, 1.4143, 1.45] {
            let x = r * r / 2.0;
            let closed = (2.0 / PI).sqrt() * (-x).exp() - r * erfc(x.sqrt());
            let gamma_form = r / (2.0 * PI.sqrt()) * upper_gamma_scaled(-0.5, x) * (-x).exp();
            assert!(((closed - gamma_form) / closed).abs() < 1e-12);
        }
    }

    #[test]
    fn routes_agree_d1() {
        for &r in &[0.0, 0.01, 0.5, 2.0, 6.0] {
            for &t in &[0.01, 0.3, 4.0] {
                let a = radial_kernel_scaled(t, r, 1).unwrap();
                let b = direct_kernel_scaled(t, r, 1).unwrap();
                assert!(((a - b) / a).abs() < 1e-10, "r={r} t={t}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn routes_agree_d2_d3_grid() {
        let mut worst: f64 = 0.0;
        for d in [2usize, 3, 4] {
            for i in 0..20 {
                let r = 0.01 * 500f64.powf(i as f64 / 19.0);
                for j in 0..20 {
                    let t = 0.01 * 1000f64.powf(j as f64 / 19.0);
                    let a = radial_kernel_scaled(t, r, d).unwrap();
                    let b = direct_kernel_scaled(t, r, d).unwrap();
                    worst = worst.max(((a - b) / b).abs());
                }
            }
        }
        assert!(worst < 1e-10, "{worst}");
    }

    #[test]
    fn monotone_in_t_and_r() {
        for d in 1..=4 {
            let mut prev = 0.0;
            for k in 1..30 {
                let v = radial_kernel(0.05 * k as f64, 0.3, d).unwrap();
                assert!(v > prev);
                prev = v;
            }
            let mut prev = f64::INFINITY;
            for k in 1..30 {
                let v = radial_kernel(1.0, 0.1 * k as f64, d).unwrap();
                assert!(v < prev);
                prev = v;
            }
        }
    }
}
