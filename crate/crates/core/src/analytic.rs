//! Closed-form predictions for the rotationally invariant chaotic ball with
//! equal detection caps on both sides.
//!
//! All probabilities are per emitted pair. Angles are radians.

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use crate::error::{check_range, Result};
use crate::{ChshSettings, DenominatorKind};

/// Rounding slack accepted on angle domains and inverse-cosine arguments.
pub const ANGLE_SLACK: f64 = 1e-12;

fn clamp_unit(x: f64) -> f64 {
    x.clamp(-1.0, 1.0)
}

/// Fraction of the sphere covered by the overlap of two caps of half-angle
/// `beta` whose centres are `2 * alpha` apart.
///
/// This is the like-coincidence probability `P_SS(alpha, beta)`. It peaks at
/// `(1 - cos beta) / 2` for coincident caps and vanishes once `alpha >= beta`.
pub fn cap_overlap_fraction(alpha: f64, beta: f64) -> Result<f64> {
    check_range("alpha", alpha, -ANGLE_SLACK, FRAC_PI_2 + ANGLE_SLACK, "[0, pi/2]")?;
    check_range("beta", beta, f64::MIN_POSITIVE, FRAC_PI_2 + ANGLE_SLACK, "(0, pi/2]")?;
    let alpha = alpha.clamp(0.0, FRAC_PI_2);
    let beta = beta.min(FRAC_PI_2);

    if alpha == 0.0 {
        return Ok(0.5 * (1.0 - beta.cos()));
    }
    if alpha >= beta {
        return Ok(0.0);
    }
    // acos(1 - 2u) = 2 asin(sqrt(u)), with 1 - sin(a)/sin(b) and
    // 1 - tan(a)/tan(b) rewritten so they stay accurate as alpha -> beta.
    let half_gap = ((beta + alpha) / 2.0).cos() * ((beta - alpha) / 2.0).sin() / beta.sin();
    let first = 2.0 * clamp_unit(half_gap).max(0.0).sqrt().asin();
    let tan_gap = (beta - alpha).sin() / (2.0 * alpha.cos() * beta.sin());
    let second = 2.0 * clamp_unit(tan_gap).max(0.0).sqrt().asin() * beta.cos();
    Ok(((first - second) / PI).clamp(0.0, 0.5 * (1.0 - beta.cos())))
}

/// Folds an arbitrary setting difference onto the angle between the two
/// analyser directions, in `[0, pi]`.
pub fn fold_angle(difference: f64) -> f64 {
    let d = difference.rem_euclid(2.0 * PI);
    if d > PI {
        2.0 * PI - d
    } else {
        d
    }
}

/// Setting difference `phi` and the half-angle `alpha = phi / 2` that enters
/// the overlap formula.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AngleArgs {
    pub phi: f64,
    pub alpha: f64,
}

impl AngleArgs {
    pub fn new(phi: f64) -> Result<Self> {
        check_range("phi", phi, -ANGLE_SLACK, PI + ANGLE_SLACK, "[0, pi]")?;
        let phi = phi.clamp(0.0, PI);
        Ok(Self { phi, alpha: phi / 2.0 })
    }
}

/// Correlation with its numerator and denominator kept alongside.
///
/// `value` is `None` exactly when the denominator is zero, i.e. when the
/// model predicts no coincidences at all.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationValue {
    pub value: Option<f64>,
    pub numerator: f64,
    pub denominator: f64,
}

impl CorrelationValue {
    pub fn from_parts(numerator: f64, denominator: f64) -> Self {
        let value = if denominator == 0.0 {
            None
        } else {
            Some((numerator / denominator).clamp(-1.0, 1.0))
        };
        Self {
            value,
            numerator,
            denominator,
        }
    }

    pub fn is_defined(&self) -> bool {
        self.value.is_some()
    }
}

/// Parameters of the equal-cap ball.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BallParams {
    beta: f64,
    identical_spins: bool,
}

impl BallParams {
    pub fn new(beta: f64, identical_spins: bool) -> Result<Self> {
        check_range("beta", beta, f64::MIN_POSITIVE, FRAC_PI_2 + ANGLE_SLACK, "(0, pi/2]")?;
        Ok(Self {
            beta: beta.min(FRAC_PI_2),
            identical_spins,
        })
    }

    /// Identical-spin ball with cap half-angle `beta`.
    pub fn with_beta(beta: f64) -> Result<Self> {
        Self::new(beta, true)
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn identical_spins(&self) -> bool {
        self.identical_spins
    }

    // Opposite spins relabel N and S on side B, which sends phi to pi - phi.
    fn effective(&self, phi: f64) -> Result<AngleArgs> {
        let args = AngleArgs::new(phi)?;
        if self.identical_spins {
            Ok(args)
        } else {
            AngleArgs::new(PI - args.phi)
        }
    }

    /// `P_SS = P_NN` at setting difference `phi`.
    pub fn p_like(&self, phi: f64) -> Result<f64> {
        cap_overlap_fraction(self.effective(phi)?.alpha, self.beta)
    }

    /// `P_NS = P_SN` at setting difference `phi`.
    pub fn p_unlike(&self, phi: f64) -> Result<f64> {
        cap_overlap_fraction(FRAC_PI_2 - self.effective(phi)?.alpha, self.beta)
    }

    /// Observed coincidences per emitted pair, `(NN + SS + NS + SN) / N`.
    pub fn total_rate(&self, phi: f64) -> Result<f64> {
        Ok(2.0 * (self.p_like(phi)? + self.p_unlike(phi)?))
    }

    /// Correlation normalised by the observed coincidences.
    pub fn correlation_normalised(&self, phi: f64) -> Result<CorrelationValue> {
        let like = self.p_like(phi)?;
        let unlike = self.p_unlike(phi)?;
        Ok(CorrelationValue::from_parts(
            2.0 * like - 2.0 * unlike,
            2.0 * (like + unlike),
        ))
    }

    /// Correlation normalised by the emitted pairs. Always defined.
    pub fn correlation_unnormalised(&self, phi: f64) -> Result<f64> {
        Ok(2.0 * self.p_like(phi)? - 2.0 * self.p_unlike(phi)?)
    }

    pub fn correlation(&self, phi: f64, kind: DenominatorKind) -> Result<Option<f64>> {
        match kind {
            DenominatorKind::ObservedCoincidences => Ok(self.correlation_normalised(phi)?.value),
            DenominatorKind::EmittedPairs => self.correlation_unnormalised(phi).map(Some),
        }
    }

    /// CHSH combination `E(a,b) - E(a,b') + E(a',b) + E(a',b')`.
    ///
    /// Returns `None` if any of the four terms is undefined.
    pub fn chsh(&self, settings: &ChshSettings, kind: DenominatorKind) -> Result<Option<f64>> {
        let mut total = 0.0;
        for (sign, a, b) in settings.terms() {
            match self.correlation(fold_angle(b - a), kind)? {
                Some(e) => total += sign * e,
                None => return Ok(None),
            }
        }
        Ok(Some(total))
    }
}

/// Convenience wrapper around [`BallParams::chsh`].
pub fn chsh_analytic(beta: f64, settings: &ChshSettings, kind: DenominatorKind) -> Result<Option<f64>> {
    BallParams::with_beta(beta)?.chsh(settings, kind)
}

/// Quantum like-coincidence probability `cos^2(phi / 2) / 2`.
pub fn qm_coincidence(phi: f64) -> f64 {
    let c = (phi / 2.0).cos();
    0.5 * c * c
}

/// Quantum correlation for identical spins, `cos(phi)`.
pub fn qm_correlation(phi: f64) -> f64 {
    phi.cos()
}

pub fn qm_chsh(settings: &ChshSettings) -> f64 {
    settings
        .terms()
        .iter()
        .map(|&(sign, a, b)| sign * qm_correlation(b - a))
        .sum()
}
