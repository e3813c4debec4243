//! Special functions used by the heat-kernel and local-time code.
//!
//! Everything here is real-valued and double precision. `erfc` comes from
//! `libm`; the exponential integral and the incomplete gamma function are
//! evaluated with series, continued fractions and recurrences.

use std::f64::consts::PI;

pub const SQRT_PI: f64 = 1.772_453_850_905_516;
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

const TINY: f64 = 1e-300;
const EPS: f64 = 1e-16;
const MAX_ITER: usize = 2000;

pub fn erfc(x: f64) -> f64 {
    libm::erfc(x)
}

pub fn erf(x: f64) -> f64 {
    libm::erf(x)
}

pub fn gamma(x: f64) -> f64 {
    libm::tgamma(x)
}

/// Scaled complementary error function `exp(x^2) erfc(x)`.
pub fn erfcx(x: f64) -> f64 {
    if x < 0.0 {
        return 2.0 * (x * x).exp() - erfcx(-x);
    }
    if x < 26.0 {
        return (x * x).exp() * libm::erfc(x);
    }
    // asymptotic series, accurate to machine precision for x >= 26
    let z = 1.0 / (2.0 * x * x);
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..8 {
        term *= -((2 * k - 1) as f64) * z;
        sum += term;
    }
    sum / (x * SQRT_PI)
}

/// `integral_x^inf erfc(u) du = exp(-x^2)/sqrt(pi) - x erfc(x)`, scaled by `exp(x^2)`.
pub fn ierfc_scaled(x: f64) -> f64 {
    if x < 2.0 {
        return 1.0 / SQRT_PI - x * erfcx(x);
    }
    // 1/sqrt(pi) - x erfcx(x) cancels; asymptotic series for large x
    let z = 1.0 / (2.0 * x * x);
    if x >= 12.0 {
        let mut term = 1.0;
        let mut sum = 1.0;
        for k in 1..10 {
            term *= -((2 * k + 1) as f64) * z;
            sum += term;
        }
        return sum / (2.0 * x * x * SQRT_PI);
    }
    // continued fraction keeps enough digits through the subtraction
    1.0 / SQRT_PI - x * erfcx_cf(x)
}

fn erfcx_cf(x: f64) -> f64 {
    // erfc(x) e^{x^2} sqrt(pi) = 1/(x + (1/2)/(x + 1/(x + (3/2)/(x + 2/(x + ...)))))
    let mut f = x;
    let mut c = x;
    let mut d = 0.0;
    for k in 1..MAX_ITER {
        let a = k as f64 / 2.0;
        d = x + a * d;
        d = if d.abs() < TINY { 1.0 / TINY } else { 1.0 / d };
        c = x + a / c;
        if c.abs() < TINY {
            c = TINY;
        }
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < EPS {
            break;
        }
    }
    1.0 / (f * SQRT_PI)
}

/// Exponential integral `E1(x)` for `x > 0`.
pub fn expint_e1(x: f64) -> f64 {
    if x <= 0.0 {
        return f64::INFINITY;
    }
    if x <= 1.0 {
        e1_series(x)
    } else {
        e1_cf(x) * (-x).exp()
    }
}

/// `exp(x) E1(x)` for `x > 0`.
pub fn expint_e1_scaled(x: f64) -> f64 {
    if x <= 0.0 {
        return f64::INFINITY;
    }
    if x <= 1.0 {
        e1_series(x) * x.exp()
    } else {
        e1_cf(x)
    }
}

fn e1_series(x: f64) -> f64 {
    let mut sum = 0.0;
    let mut fact = 1.0;
    for k in 1..MAX_ITER {
        fact *= -x / k as f64;
        let term = fact / k as f64;
        sum += term;
        if term.abs() < EPS * sum.abs().max(1e-300) {
            break;
        }
    }
    -EULER_GAMMA - x.ln() - sum
}

fn e1_cf(x: f64) -> f64 {
    let mut b = x + 1.0;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..MAX_ITER {
        let an = -((i * i) as f64);
        b += 2.0;
        d = 1.0 / (an * d + b);
        c = b + an / c;
        let del = c * d;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Continued fraction for `exp(x) x^{-a} Gamma(a, x)`.
fn upper_gamma_cf(a: f64, x: f64) -> f64 {
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / TINY;
    let mut d = if b.abs() < TINY { 1.0 / TINY } else { 1.0 / b };
    let mut h = d;
    for i in 1..MAX_ITER {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < TINY {
            d = TINY;
        }
        c = b + an / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Scaled upper incomplete gamma `exp(x) Gamma(a, x)` for `x > 0`.
///
/// Any real `a` works when `x` is in the continued-fraction range. Below it,
/// half-integer orders `a >= -1/2` use closed forms plus upward recurrence and
/// positive non-half-integer orders use the lower-gamma series.
pub fn upper_gamma_scaled(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return if a > 0.0 { gamma(a) } else { f64::INFINITY };
    }
    if x >= a + 1.0 || (x >= 1.0 && a <= 1.0) {
        return x.powf(a) * upper_gamma_cf(a, x);
    }
    let twice = 2.0 * a;
    if (twice - twice.round()).abs() < 1e-12 && twice >= -1.0 {
        let m = twice.round() as i64;
        let (mut order, mut s) = if m % 2 == 0 {
            (0.0, expint_e1_scaled(x))
        } else {
            let half = SQRT_PI * erfcx(x.sqrt());
            if m == -1 {
                return 2.0 * (1.0 / x.sqrt() - half);
            }
            (0.5, half)
        };
        while order < a - 0.25 {
            s = order * s + x.powf(order);
            order += 1.0;
        }
        return s;
    }
    if a > 0.0 {
        let mut term = 1.0 / a;
        let mut sum = term;
        for n in 1..MAX_ITER {
            term *= x / (a + n as f64);
            sum += term;
            if term < sum * EPS {
                break;
            }
        }
        return x.exp() * gamma(a) - x.powf(a) * sum;
    }
    x.powf(a) * upper_gamma_cf(a, x)
}

/// Upper incomplete gamma `Gamma(a, x)`.
pub fn upper_gamma(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return upper_gamma_scaled(a, x);
    }
    upper_gamma_scaled(a, x) * (-x).exp()
}

/// Regularized upper incomplete gamma `Q(a, x)` for `a > 0`.
pub fn gamma_q(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    (upper_gamma_scaled(a, x) * (-x).exp() / gamma(a)).min(1.0)
}

/// Surface area of the unit sphere in `R^d`.
pub fn sphere_area(d: usize) -> f64 {
    let h = d as f64 / 2.0;
    2.0 * PI.powf(h) / gamma(h)
}

/// Volume of the unit ball in `R^d`.
pub fn ball_volume(d: usize) -> f64 {
    sphere_area(d) / d as f64
}

/// Standard normal quantile, Acklam's rational approximation refined by one Halley step.
pub fn normal_quantile(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    const A: [f64; 6] = [
        -3.969683028665376e1,
        2.209460984245205e2,
        -2.759285104469687e2,
        1.38357751867269e2,
        -3.066479806614716e1,
        2.506628277459239,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e1,
        1.615858368580409e2,
        -1.556989798598866e2,
        6.680131188771972e1,
        -1.328068155288572e1,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-3,
        -3.223964580411365e-1,
        -2.400758277161838,
        -2.549732539343734,
        4.374664141464968,
        2.938163982698783,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-3,
        3.224671290700398e-1,
        2.445134137142996,
        3.754408661907416,
    ];
    let lo = 0.02425;
    let x = if p < lo {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - lo {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    let e = 0.5 * erfc(-x / std::f64::consts::SQRT_2) - p;
    let u = e * (2.0 * PI).sqrt() * (x * x / 2.0).exp();
    x - u / (1.0 + x * u / 2.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn e1_reference_values() {
        // values from Abramowitz & Stegun table 5.1
        assert!(rel(expint_e1(0.5), 0.559_773_594_776_160_8) < 1e-14);
        assert!(rel(expint_e1(1.0), 0.219_383_934_395_520_3) < 1e-14);
        assert!(rel(expint_e1(2.0), 0.048_900_510_708_061_12) < 1e-13);
        assert!(rel(expint_e1(10.0), 4.156_968_929_685_324e-6) < 1e-13);
    }

    #[test]
    fn e1_branches_join() {
        let below = e1_series(1.0);
        let above = e1_cf(1.0) * (-1.0f64).exp();
        assert!(rel(below, above) < 1e-14);
    }

    #[test]
    fn gamma_half_integer_base_cases() {
        for &x in &[0.01, 0.3, 0.9, 1.5, 7.0] {
            let g1 = upper_gamma(1.0, x);
            assert!(rel(g1, (-x).exp()) < 1e-13, "a=1 x={x}");
            let g_half = upper_gamma(0.5, x);
            assert!(rel(g_half, SQRT_PI * erfc(x.sqrt())) < 1e-13, "a=1/2 x={x}");
            let g2 = upper_gamma(2.0, x);
            assert!(rel(g2, (1.0 + x) * (-x).exp()) < 1e-13, "a=2 x={x}");
        }
    }

    #[test]
    fn gamma_recurrence_holds_across_branches() {
        for &a in &[-0.5, 0.0, 0.5, 1.5, 2.0, 3.5] {
            for &x in &[0.05, 0.7, 1.0, 2.5, 6.0, 30.0] {
                let lhs = upper_gamma_scaled(a + 1.0, x);
                let rhs = a * upper_gamma_scaled(a, x) + x.powf(a);
                assert!(rel(lhs, rhs) < 1e-12, "a={a} x={x}: {lhs} vs {rhs}");
            }
        }
    }

    #[test]
    fn gamma_q_limits() {
        assert!((gamma_q(1.5, 1e-12) - 1.0).abs() < 1e-10);
        assert!(gamma_q(1.5, 50.0) < 1e-20);
        // Q(1/2, x) = erfc(sqrt x)
        assert!(rel(gamma_q(0.5, 2.0), erfc(2f64.sqrt())) < 1e-13);
    }

    #[test]
    fn erfcx_continuity_at_switch() {
        let a = (26.0f64 * 26.0).exp() * libm::erfc(26.0);
        assert!(rel(erfcx(26.0), a) < 1e-12);
        assert!(rel(erfcx_cf(3.0), erfcx(3.0)) < 1e-14);
    }

    #[test]
    fn ierfc_matches_quadrature() {
        for &x in &[0.0, 0.5, 1.9, 2.1, 5.0, 11.0, 13.0] {
            let direct = crate::quadrature::integrate(|u| erfcx(u) * (-(u * u - x * x)).exp(), x, x + 12.0, 1e-15, 1e-13)
                .value;
            assert!(rel(ierfc_scaled(x), direct) < 1e-11, "x={x}: {} vs {direct}", ierfc_scaled(x));
        }
    }

    #[test]
    fn sphere_constants() {
        assert!(rel(sphere_area(1), 2.0) < 1e-15);
        assert!(rel(sphere_area(2), 2.0 * PI) < 1e-15);
        assert!(rel(sphere_area(3), 4.0 * PI) < 1e-15);
        assert!(rel(ball_volume(3), 4.0 * PI / 3.0) < 1e-15);
    }

    #[test]
    fn normal_quantile_round_trip() {
        for &p in &[1e-6, 0.01, 0.3, 0.5, 0.99] {
            let x = normal_quantile(p);
            assert!((0.5 * erfc(-x / std::f64::consts::SQRT_2) - p).abs() < 1e-14 * p.max(1e-3) * 100.0);
        }
        assert!((normal_quantile(0.99) - 2.326_347_874_040_841).abs() < 1e-12);
    }
}
