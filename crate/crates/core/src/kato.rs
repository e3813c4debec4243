//! Classification of non-negative measures against Kato's condition.
//!
//! d = 1: `sup_x nu([x-1, x+1]) < inf`.
//! d >= 2: `sup_x int_{|x-y| <= eps} G(|x-y|) nu(dy) -> 0` with
//! `G = ln(1/r)` (d = 2) or `r^{2-d}` (d >= 3), read off an epsilon grid.
//!
//! Suprema over `x` are taken over a finite candidate grid built from the
//! components: atom locations, support centres and lattices, boundary samples.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::{characteristic, radial_integral, MeasureComponent, RadialWeight, SignedMeasureSpec};

pub const DEFAULT_EPSILONS: [f64; 5] = [0.5, 0.1, 0.02, 0.004, 0.001];
pub const MODULUS_TIMES: [f64; 4] = [1e-1, 1e-2, 1e-3, 1e-4];
/// Successive local potentials must shrink at least by this factor.
pub const DECAY_FACTOR: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModulusPoint {
    pub t: f64,
    /// `sup_x f_t(x)` over the candidate grid; `None` when infinite.
    pub sup_characteristic: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KatoReport {
    pub dimension: usize,
    pub is_kato: bool,
    pub epsilon_grid: Vec<f64>,
    /// `sup_x` local potential per epsilon; `None` when infinite.
    pub per_epsilon_values: Vec<Option<f64>>,
    /// `sup_x nu([x-1, x+1])` in d = 1.
    pub unit_ball_mass: Option<f64>,
    pub candidate_grid: Vec<Vec<f64>>,
    pub modulus: Vec<ModulusPoint>,
    pub modulus_decreasing: bool,
    pub note: String,
}

fn sup_over<F>(grid: &[Vec<f64>], f: F) -> Result<Option<f64>>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    let vals: Vec<Result<f64>> = grid.par_iter().map(|x| f(x)).collect();
    let mut best: f64 = 0.0;
    for v in vals {
        match v {
            Ok(v) if v.is_finite() => best = best.max(v),
            Ok(_) | Err(Error::InfiniteCharacteristic { .. }) => return Ok(None),
            Err(e) => return Err(e),
        }
    }
    Ok(Some(best))
}

/// Candidate points for suprema over space.
pub fn candidate_grid(components: &[MeasureComponent], dimension: usize) -> Vec<Vec<f64>> {
    let mut grid: Vec<Vec<f64>> = Vec::new();
    for c in components {
        for p in c.candidate_points() {
            if !grid.iter().any(|q| q.iter().zip(&p).all(|(a, b)| (a - b).abs() < 1e-12)) {
                grid.push(p);
            }
        }
    }
    if grid.is_empty() {
        grid.push(vec![0.0; dimension]);
    }
    grid
}

/// `sup_x int_{|x-y| < eps} G nu(dy)` over the grid.
pub fn local_potential(components: &[MeasureComponent], grid: &[Vec<f64>], eps: f64) -> Result<Option<f64>> {
    sup_over(grid, |x| {
        let mut s = 0.0;
        for c in components {
            s += radial_integral(c, x, eps, RadialWeight::KatoPotential)?;
        }
        Ok(s)
    })
}

/// Modulus `t -> sup_x f_t(x)` over the grid.
pub fn modulus(components: &[MeasureComponent], grid: &[Vec<f64>], times: &[f64]) -> Result<Vec<ModulusPoint>> {
    times
        .iter()
        .map(|&t| Ok(ModulusPoint { t, sup_characteristic: sup_over(grid, |x| characteristic(components, t, x))? }))
        .collect()
}

/// Classify the total variation `|nu|` of a signed measure.
pub fn kato_classify(measure: &SignedMeasureSpec, epsilon_grid: &[f64]) -> Result<KatoReport> {
    measure.validate()?;
    let comps = measure.total_variation();
    classify_components(&comps, measure.dimension, epsilon_grid)
}

pub fn classify_components(comps: &[MeasureComponent], d: usize, epsilon_grid: &[f64]) -> Result<KatoReport> {
    if epsilon_grid.is_empty() || epsilon_grid.iter().any(|e| !(*e > 0.0)) {
        return Err(Error::InvalidArgument("epsilon grid must be non-empty and positive".into()));
    }
    let mut eps = epsilon_grid.to_vec();
    eps.sort_by(|a, b| b.total_cmp(a));
    let grid = candidate_grid(comps, d);
    let per_eps: Vec<Option<f64>> = eps.iter().map(|&e| local_potential(comps, &grid, e)).collect::<Result<_>>()?;
    let (is_kato, unit_ball_mass, rule) = if d == 1 {
        let m = sup_over(&grid, |x| {
            let mut s = 0.0;
            for c in comps {
                s += radial_integral(c, x, 1.0 + 1e-12, RadialWeight::Unit)?;
            }
            Ok(s)
        })?;
        (m.is_some(), m, "d = 1: sup_x nu([x-1, x+1]) finite")
    } else {
        let ok = per_eps.iter().all(|v| v.is_some())
            && per_eps.windows(2).all(|w| {
                let (a, b) = (w[0].unwrap(), w[1].unwrap());
                b <= DECAY_FACTOR * a || (a == 0.0 && b == 0.0)
            });
        (ok, None, if d == 2 { "d = 2: local log-potential halves along the epsilon grid" } else { "d >= 3: local Newtonian potential halves along the epsilon grid" })
    };
    let modulus = modulus(comps, &grid, &MODULUS_TIMES)?;
    let modulus_decreasing = modulus.iter().all(|m| m.sup_characteristic.is_some())
        && modulus.windows(2).all(|w| w[1].sup_characteristic.unwrap() <= w[0].sup_characteristic.unwrap());
    let note = format!(
        "{rule}; suprema over {} candidate points (atoms, support centres and lattices, boundary samples), assumed to attain the supremum",
        grid.len()
    );
    Ok(KatoReport { dimension: d, is_kato, epsilon_grid: eps, per_epsilon_values: per_eps, unit_ball_mass, candidate_grid: grid, modulus, modulus_decreasing, note })
}

/// Ball masses `nu(B(x, rho))` for growth-exponent probing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BallGrowth {
    pub radii: Vec<f64>,
    pub masses: Vec<f64>,
    /// Least-squares slope of `ln nu(B(x, rho))` against `ln rho`.
    pub exponent: Option<f64>,
}

pub fn ball_growth(components: &[MeasureComponent], x: &[f64], radii: &[f64]) -> Result<BallGrowth> {
    let masses: Vec<f64> = radii.iter().map(|&r| crate::measure::ball_mass(components, x, r)).collect::<Result<_>>()?;
    let pts: Vec<(f64, f64)> = radii.iter().zip(&masses).filter(|(r, m)| **r > 0.0 && **m > 0.0).map(|(r, m)| (r.ln(), m.ln())).collect();
    let exponent = if pts.len() >= 2 {
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
        (sxx > 0.0).then(|| sxy / sxx)
    } else {
        None
    };
    Ok(BallGrowth { radii: radii.to_vec(), masses, exponent })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Region;
    use crate::measure::SurfaceWeight;

    fn atom(d: usize) -> SignedMeasureSpec {
        SignedMeasureSpec::nonnegative(d, vec![MeasureComponent::Atom { location: vec![0.3; d], mass: 1.0 }])
    }

    #[test]
    fn dirac_d1_is_kato() {
        let r = kato_classify(&atom(1), &DEFAULT_EPSILONS).unwrap();
        assert!(r.is_kato);
        assert_eq!(r.unit_ball_mass, Some(1.0));
        assert!(r.modulus_decreasing);
        let m0 = r.modulus[0].sup_characteristic.unwrap();
        assert!((m0 - (0.2 / std::f64::consts::PI).sqrt()).abs() < 1e-14);
    }

    #[test]
    fn dirac_d2_d3_not_kato() {
        for d in [2, 3] {
            let r = kato_classify(&atom(d), &DEFAULT_EPSILONS).unwrap();
            assert!(!r.is_kato);
            assert!(r.per_epsilon_values.iter().all(|v| v.is_none()));
        }
    }

    #[test]
    fn bounded_density_is_kato() {
        for d in 1..=3 {
            let nu = SignedMeasureSpec::nonnegative(
                d,
                vec![MeasureComponent::Uniform { dimension: d, density: 3.0, region: Some(Region::Ball { center: vec![0.0; d], radius: 1.0 }) }],
            );
            let r = kato_classify(&nu, &DEFAULT_EPSILONS).unwrap();
            assert!(r.is_kato, "d={d}: {:?}", r.per_epsilon_values);
            assert!(r.modulus_decreasing);
        }
    }

    #[test]
    fn sphere_surface_d3_is_kato() {
        let nu = SignedMeasureSpec::nonnegative(
            3,
            vec![MeasureComponent::SphereSurface { center: vec![0.0; 3], radius: 1.0, weight: SurfaceWeight::Uniform { density: 1.0 } }],
        );
        let r = kato_classify(&nu, &DEFAULT_EPSILONS).unwrap();
        assert!(r.is_kato, "{:?}", r.per_epsilon_values);
        // on the sphere the local potential is about 2 pi eps
        let last = r.per_epsilon_values.last().unwrap().unwrap();
        assert!((last / (2.0 * std::f64::consts::PI * 1e-3) - 1.0).abs() < 1e-2, "{last}");
    }

    #[test]
    fn ball_growth_of_surface_in_3d_has_exponent_two() {
        let nu = [MeasureComponent::SphereSurface { center: vec![0.0; 3], radius: 1.0, weight: SurfaceWeight::Uniform { density: 1.0 } }];
        let g = ball_growth(&nu, &[1.0, 0.0, 0.0], &[0.001, 0.01, 0.1]).unwrap();
        assert!((g.exponent.unwrap() - 2.0).abs() < 0.05);
    }
}
