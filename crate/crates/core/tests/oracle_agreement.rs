//! Closed form vs sphere quadrature vs plain Monte Carlo.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, FRAC_PI_8, PI};
use std::sync::Arc;

use loophole_core::analytic::cap_overlap_fraction;
use loophole_core::hv::{
    sample_lambda, Apparatus, ChannelCap, DetectionProbability, DetectorMode, DetectorModel, HiddenVariable, Outcome,
    SourceModel, Vec3,
};
use loophole_core::oracle::{mc_coincidence_prob, quad_coincidence_prob, quad_expectation, QuadratureSpec};
use loophole_core::rng::event_rng;

const BETA_75: f64 = 5.0 * PI / 12.0;
const SS: (Outcome, Outcome) = (Outcome::S, Outcome::S);

fn equal_caps(beta: f64, phi: f64) -> Apparatus {
    let d = DetectorModel::two_channel(beta).unwrap();
    Apparatus::new(&d, &d, true, 0.0, phi)
}

#[test]
fn quadrature_matches_closed_form_at_default_resolution() {
    let q = quad_coincidence_prob(
        &equal_caps(BETA_75, FRAC_PI_4),
        &SourceModel::UniformSphere,
        SS,
        &QuadratureSpec::DEFAULT,
    )
    .unwrap();
    let exact = cap_overlap_fraction(FRAC_PI_8, BETA_75).unwrap();
    assert!((q - exact).abs() < 1e-4, "{q} vs {exact}");
}

#[test]
fn disjoint_caps_integrate_to_zero() {
    let spec = QuadratureSpec::new(500, 1000).unwrap();
    // alpha = 80 deg > beta = 75 deg
    let q = quad_coincidence_prob(
        &equal_caps(BETA_75, 160f64.to_radians()),
        &SourceModel::UniformSphere,
        SS,
        &spec,
    )
    .unwrap();
    assert_eq!(q, 0.0);
}

// Indicator integrands converge slowly; 1e-6 needs the 8000 x 16000 grid.
#[test]
fn refined_quadrature_within_1e6_of_closed_form() {
    let spec = QuadratureSpec::DEFAULT.doubled().doubled();
    for (alpha, beta) in [(0.2356, 1.4137), (FRAC_PI_8, 1.0996), (0.7069, 1.0996)] {
        let q = quad_coincidence_prob(&equal_caps(beta, 2.0 * alpha), &SourceModel::UniformSphere, SS, &spec).unwrap();
        let exact = cap_overlap_fraction(alpha, beta).unwrap();
        assert!((q - exact).abs() < 1e-6, "alpha={alpha} beta={beta}: {:.3e}", q - exact);
    }
}

#[derive(Debug)]
struct SoftCap;

impl DetectionProbability for SoftCap {
    fn probability(&self, lambda: &HiddenVariable, cap: &ChannelCap) -> f64 {
        let c = lambda.vector().dot(&cap.axis());
        (c.max(0.0)).powi(2)
    }
}

#[test]
fn quadrature_stable_under_doubling() {
    // Smooth detection probabilities: default grid is already converged.
    let soft = DetectorModel::two_channel(FRAC_PI_2)
        .unwrap()
        .with_stochastic(Arc::new(SoftCap));
    let app = Apparatus::new(&soft, &soft, true, 0.0, 1.0);
    let base = QuadratureSpec::new(1000, 2000).unwrap();
    let coarse = quad_coincidence_prob(&app, &SourceModel::UniformSphere, (Outcome::N, Outcome::N), &base).unwrap();
    let fine = quad_coincidence_prob(
        &app,
        &SourceModel::UniformSphere,
        (Outcome::N, Outcome::N),
        &base.doubled(),
    )
    .unwrap();
    assert!((coarse - fine).abs() < 1e-6);

    // Caps away from the alpha = beta edge. Cap edges cost accuracy: from
    // 4000 x 8000 the change is still 1e-6 to 2e-6, so start at 8000 x 16000.
    // pi/8 puts the cap centres on azimuth cell boundaries, the worst case seen.
    let start = QuadratureSpec::DEFAULT.doubled().doubled();
    for alpha in [FRAC_PI_8, 0.30] {
        let caps = equal_caps(1.0996, 2.0 * alpha);
        let coarse = quad_coincidence_prob(&caps, &SourceModel::UniformSphere, SS, &start).unwrap();
        let fine = quad_coincidence_prob(&caps, &SourceModel::UniformSphere, SS, &start.doubled()).unwrap();
        assert!((coarse - fine).abs() < 1e-6, "alpha {alpha}: {:.3e}", coarse - fine);
    }
}

#[test]
fn outcome_probabilities_sum_to_one() {
    let spec = QuadratureSpec::new(400, 800).unwrap();
    let det_a = DetectorModel::with_caps(DetectorMode::TwoChannel, 1.1, 0.9, 0.0, 0.2).unwrap();
    let det_b = DetectorModel::two_channel(1.3).unwrap();
    let app = Apparatus::new(&det_a, &det_b, true, 0.3, 1.5);
    let mut total = 0.0;
    for &oa in det_a.possible_outcomes() {
        for &ob in det_b.possible_outcomes() {
            total += quad_coincidence_prob(&app, &SourceModel::UniformSphere, (oa, ob), &spec).unwrap();
        }
    }
    assert!((total - 1.0).abs() < 1e-9, "{total}");
}

#[test]
fn monte_carlo_agrees_with_quadrature() {
    let aniso = SourceModel::anisotropic(Vec3::Z, 2.0).unwrap();
    let offset = DetectorModel::with_caps(DetectorMode::TwoChannel, BETA_75, BETA_75, 0.0, 5f64.to_radians()).unwrap();
    let plain = DetectorModel::two_channel(BETA_75).unwrap();
    let cases = [
        (equal_caps(BETA_75, FRAC_PI_4), SourceModel::UniformSphere, SS),
        (
            equal_caps(BETA_75, FRAC_PI_4),
            SourceModel::UniformSphere,
            (Outcome::N, Outcome::S),
        ),
        (equal_caps(1.0, 0.4), aniso, (Outcome::N, Outcome::N)),
        (
            Apparatus::new(&plain, &offset, true, 0.0, FRAC_PI_4),
            SourceModel::UniformSphere,
            (Outcome::N, Outcome::S),
        ),
        (
            Apparatus::new(&plain, &plain, false, 0.0, 1.0),
            SourceModel::UniformSphere,
            (Outcome::N, Outcome::N),
        ),
    ];
    for (i, (app, source, pair)) in cases.iter().enumerate() {
        let q = quad_coincidence_prob(app, source, *pair, &QuadratureSpec::DEFAULT).unwrap();
        let mc = mc_coincidence_prob(app, source, *pair, 1_000_000, 100 + i as u64).unwrap();
        assert!(
            (mc.probability - q).abs() < 4.0 * mc.standard_error,
            "case {i}: mc {} +/- {} vs quad {q}",
            mc.probability,
            mc.standard_error
        );
    }
}

// Simpson's rule on [-1, 1] for the anisotropic cos^2 moment.
fn simpson(f: impl Fn(f64) -> f64, n: usize) -> f64 {
    let h = 2.0 / n as f64;
    let mut acc = f(-1.0) + f(1.0);
    for k in 1..n {
        let x = -1.0 + k as f64 * h;
        acc += if k % 2 == 1 { 4.0 } else { 2.0 } * f(x);
    }
    acc * h / 3.0
}

#[test]
fn anisotropic_second_moment() {
    let kappa = 2.0;
    let expected = simpson(|c| (1.0 + kappa * c * c) * c * c, 1000) / simpson(|c| 1.0 + kappa * c * c, 1000);
    assert!((expected - 0.44).abs() < 1e-9);

    let source = SourceModel::anisotropic(Vec3::Z, kappa).unwrap();
    let quad = quad_expectation(&source, &QuadratureSpec::new(1000, 2000).unwrap(), |l| {
        l.vector().z.powi(2)
    })
    .unwrap();
    assert!((quad - expected).abs() < 1e-6);

    let n = 1_000_000u64;
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for i in 0..n {
        let c2 = sample_lambda(&source, &mut event_rng(31, 0, i))
            .unwrap()
            .vector()
            .z
            .powi(2);
        sum += c2;
        sum_sq += c2 * c2;
    }
    let mean = sum / n as f64;
    let sd = ((sum_sq / n as f64 - mean * mean) / n as f64).sqrt();
    assert!((mean - expected).abs() < 4.0 * sd, "{mean} vs {expected}");
}

#[test]
fn anisotropic_with_zero_strength_is_uniform() {
    let source = SourceModel::anisotropic(Vec3::Z, 0.0).unwrap();
    let n = 1_000_000u64;
    let cos_beta = BETA_75.cos();
    let hits = (0..n)
        .filter(|&i| sample_lambda(&source, &mut event_rng(8, 0, i)).unwrap().vector().z > cos_beta)
        .count() as f64;
    let p = 0.5 * (1.0 - cos_beta);
    let sigma = (p * (1.0 - p) / n as f64).sqrt();
    assert!((hits / n as f64 - p).abs() < 4.0 * sigma);
}
