//! Brute-force reference evaluators for the coincidence integral
//! `P(a,b) = integral of rho(lambda) p_a(lambda) p_b(lambda)` over the sphere.
//!
//! The quadrature is a midpoint product rule in `(cos theta, azimuth)`, which
//! weights every cell by the same solid angle. Its polar axis is the normal
//! of the analysis plane, so cap centres always lie on the grid's equator.
//! Deterministic caps make the integrand discontinuous; expect agreement
//! with closed forms to about 1e-4 at 2000 x 4000 cells, not better.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ModelError, Result};
use crate::hv::{sample_lambda, Apparatus, HiddenVariable, Outcome, SourceModel, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct QuadratureSpec {
    pub polar_steps: usize,
    pub azimuth_steps: usize,
}

impl QuadratureSpec {
    pub const DEFAULT: QuadratureSpec = QuadratureSpec {
        polar_steps: 2000,
        azimuth_steps: 4000,
    };

    pub fn new(polar_steps: usize, azimuth_steps: usize) -> Result<Self> {
        let spec = Self {
            polar_steps,
            azimuth_steps,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.polar_steps == 0 || self.azimuth_steps == 0 {
            return Err(ModelError::Config("quadrature step counts must be positive".into()));
        }
        Ok(())
    }

    /// At least 10^4 cells.
    pub fn is_acceptance_grade(&self) -> bool {
        self.polar_steps * self.azimuth_steps >= 10_000
    }

    pub fn doubled(&self) -> Self {
        Self {
            polar_steps: 2 * self.polar_steps,
            azimuth_steps: 2 * self.azimuth_steps,
        }
    }
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self::DEFAULT
    }
}

/// Source-weighted mean of `integrand` over the sphere.
///
/// Rows are summed independently and then added in row order, so the result
/// is bit-identical for any thread count.
pub fn quad_expectation<F>(source: &SourceModel, spec: &QuadratureSpec, integrand: F) -> Result<f64>
where
    F: Fn(&HiddenVariable) -> f64 + Sync,
{
    spec.validate()?;
    source.validate()?;
    let d_azimuth = 2.0 * PI / spec.azimuth_steps as f64;
    let azimuths: Vec<(f64, f64)> = (0..spec.azimuth_steps)
        .map(|j| ((j as f64 + 0.5) * d_azimuth).sin_cos())
        .collect();
    let d_cos = 2.0 / spec.polar_steps as f64;

    let rows: Vec<(f64, f64)> = (0..spec.polar_steps)
        .into_par_iter()
        .map(|i| {
            let y = -1.0 + (i as f64 + 0.5) * d_cos;
            let r = (1.0 - y * y).max(0.0).sqrt();
            let mut weighted = 0.0;
            let mut mass = 0.0;
            for &(s, c) in &azimuths {
                let lambda = HiddenVariable::from_unit_unchecked(Vec3::new(r * c, y, r * s));
                let w = source.weight(&lambda);
                mass += w;
                if w != 0.0 {
                    weighted += w * integrand(&lambda);
                }
            }
            (weighted, mass)
        })
        .collect();

    let (weighted, mass) = rows.iter().fold((0.0, 0.0), |(a, b), &(w, m)| (a + w, b + m));
    if !(mass.is_finite() && mass > 0.0) {
        return Err(ModelError::Degenerate("source density is not normalisable".into()));
    }
    Ok(weighted / mass)
}

/// Probability that the apparatus records `pair` for one emitted pair.
pub fn quad_coincidence_prob(
    apparatus: &Apparatus,
    source: &SourceModel,
    pair: (Outcome, Outcome),
    spec: &QuadratureSpec,
) -> Result<f64> {
    quad_expectation(source, spec, |lambda| apparatus.pair_probability(lambda, pair))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct McEstimate {
    pub probability: f64,
    pub standard_error: f64,
}

/// Plain hit counting over `n_samples` hidden variables drawn sequentially
/// from one seeded generator.
pub fn mc_coincidence_prob(
    apparatus: &Apparatus,
    source: &SourceModel,
    pair: (Outcome, Outcome),
    n_samples: u64,
    seed: u64,
) -> Result<McEstimate> {
    if n_samples == 0 {
        return Err(ModelError::Config(
            "Monte Carlo oracle needs at least one sample".into(),
        ));
    }
    source.validate()?;
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    let mut hits = 0u64;
    for _ in 0..n_samples {
        let lambda = sample_lambda(source, &mut rng)?;
        if apparatus.outcomes(&lambda, &mut rng) == pair {
            hits += 1;
        }
    }
    let p = hits as f64 / n_samples as f64;
    Ok(McEstimate {
        probability: p,
        standard_error: (p * (1.0 - p) / n_samples as f64).sqrt(),
    })
}

/// One row of an analytic / quadrature / Monte Carlo comparison of the
/// same-channel cap overlap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct OracleComparison {
    pub alpha: f64,
    pub beta: f64,
    pub analytic: f64,
    pub quadrature: f64,
    pub monte_carlo: Option<McEstimate>,
}

impl OracleComparison {
    pub fn quadrature_delta(&self) -> f64 {
        self.quadrature - self.analytic
    }

    pub fn monte_carlo_delta(&self) -> Option<f64> {
        self.monte_carlo.map(|m| m.probability - self.analytic)
    }
}

/// Evaluates the SS coincidence probability of equal caps of half-angle
/// `beta` at setting difference `2 alpha` three ways. Pass `mc_samples = 0`
/// to skip Monte Carlo.
pub fn compare_cap_overlap(
    alpha: f64,
    beta: f64,
    spec: &QuadratureSpec,
    mc_samples: u64,
    seed: u64,
) -> Result<OracleComparison> {
    let analytic = crate::analytic::cap_overlap_fraction(alpha, beta)?;
    let detector = crate::hv::DetectorModel::two_channel(beta)?;
    let apparatus = Apparatus::new(&detector, &detector, true, 0.0, 2.0 * alpha);
    let pair = (Outcome::S, Outcome::S);
    let source = SourceModel::UniformSphere;
    let quadrature = quad_coincidence_prob(&apparatus, &source, pair, spec)?;
    let monte_carlo = if mc_samples > 0 {
        Some(mc_coincidence_prob(&apparatus, &source, pair, mc_samples, seed)?)
    } else {
        None
    };
    Ok(OracleComparison {
        alpha,
        beta,
        analytic,
        quadrature,
        monte_carlo,
    })
}

/// 10 x 10 grid of `(alpha, beta)` in radians: alpha at 4.5, 13.5, ..., 85.5
/// degrees and beta at 9, 18, ..., 90 degrees. No point is closer than 4.5
/// degrees to the `alpha = beta` edge.
pub fn default_alpha_beta_grid() -> Vec<(f64, f64)> {
    let mut grid = Vec::with_capacity(100);
    for i in 0..10 {
        for j in 0..10 {
            let alpha = (4.5 + 9.0 * i as f64).to_radians();
            let beta = (9.0 * (j + 1) as f64).to_radians();
            grid.push((alpha, beta));
        }
    }
    grid
}
