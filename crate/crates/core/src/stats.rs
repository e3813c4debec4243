//! Monte Carlo summaries and the trend rule.

use serde::{Deserialize, Serialize};

use crate::special::normal_quantile;

/// Mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub estimate: f64,
    pub std_error: f64,
    pub samples: usize,
}

impl Estimate {
    /// Sample mean and `s / sqrt(N)`, summed in order.
    pub fn from_samples(xs: &[f64]) -> Estimate {
        let n = xs.len();
        if n == 0 {
            return Estimate { estimate: f64::NAN, std_error: f64::NAN, samples: 0 };
        }
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = if n > 1 { xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64 } else { 0.0 };
        Estimate { estimate: mean, std_error: (var / n as f64).sqrt(), samples: n }
    }

    /// Fraction of samples strictly above `threshold`, binomial standard error.
    pub fn exceedance(xs: &[f64], threshold: f64) -> Estimate {
        let n = xs.len();
        let p = xs.iter().filter(|x| **x > threshold).count() as f64 / n.max(1) as f64;
        Estimate { estimate: p, std_error: (p * (1.0 - p) / n.max(1) as f64).sqrt(), samples: n }
    }

    /// `|a - b| <= k sqrt(se_a^2 + se_b^2)`.
    pub fn agrees(&self, other: &Estimate, k: f64) -> bool {
        (self.estimate - other.estimate).abs() <= k * self.std_error.hypot(other.std_error)
    }

    /// `|a - target| <= k se`.
    pub fn matches(&self, target: f64, k: f64) -> bool {
        (self.estimate - target).abs() <= k * self.std_error
    }
}

/// One-sided 99% quantile of the standard normal.
pub fn z99() -> f64 {
    normal_quantile(0.99)
}

/// Moment estimate against an upper bound, passing at 99% one-sided confidence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentReport {
    pub estimate: f64,
    pub std_error: f64,
    pub bound: f64,
    pub pass: bool,
}

impl MomentReport {
    pub fn upper(e: Estimate, bound: f64) -> Self {
        MomentReport { estimate: e.estimate, std_error: e.std_error, bound, pass: e.estimate.is_finite() && e.estimate <= bound + z99() * e.std_error }
    }
}

/// `E A^m` against `m! (sup f)^m`.
pub fn functional_moments(terminal: &[f64], m: u32, sup_characteristic: f64) -> MomentReport {
    let powered: Vec<f64> = terminal.iter().map(|a| a.powi(m as i32)).collect();
    let fact: f64 = (1..=m).map(f64::from).product();
    MomentReport::upper(Estimate::from_samples(&powered), fact * sup_characteristic.powi(m as i32))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExponentialMoment {
    pub p: f64,
    pub estimate: Estimate,
    pub first_half: Estimate,
    pub second_half: Estimate,
    pub finite: bool,
    /// Both halves agree within 3 combined standard errors.
    pub stable: bool,
}

/// `E exp(p A)` with a batch-doubling stability check.
pub fn exponential_moment(terminal: &[f64], p: f64) -> ExponentialMoment {
    let v: Vec<f64> = terminal.iter().map(|a| (p * a).exp()).collect();
    let half = v.len() / 2;
    let estimate = Estimate::from_samples(&v);
    let first_half = Estimate::from_samples(&v[..half]);
    let second_half = Estimate::from_samples(&v[half..]);
    let finite = estimate.estimate.is_finite() && estimate.std_error.is_finite();
    let stable = finite && first_half.agrees(&second_half, 3.0) && first_half.agrees(&estimate, 3.0);
    ExponentialMoment { p, estimate, first_half, second_half, finite, stable }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Decreasing,
    Flat,
    Pass,
    Fail,
}

/// Trend over a schedule: flat when every point sits at or below `floor`;
/// decreasing when the last point is at most 0.6 of the first and no point
/// rises above its predecessor by more than two combined standard errors.
pub fn trend_verdict(points: &[(f64, f64)], floor: f64) -> Verdict {
    if points.iter().all(|(e, _)| *e <= floor) {
        return Verdict::Flat;
    }
    let (first, last) = (points[0].0, points[points.len() - 1].0);
    let no_jump = points.windows(2).all(|w| w[1].0 <= w[0].0 + 2.0 * w[0].1.hypot(w[1].1));
    if points.len() >= 2 && last <= 0.6 * first && no_jump {
        Verdict::Decreasing
    } else {
        Verdict::Fail
    }
}
