//! Local hidden-variable ("chaotic ball") models of Bell-test experiments.
//!
//! The crate is split along the lines of a typical analysis pipeline:
//!
//! * [`analytic`] closed-form coincidence probabilities and correlations,
//! * [`hv`] hidden-variable sources and detector outcome rules,
//! * [`sim`] the seeded event-by-event experiment runner,
//! * [`bell`] estimators and test statistics computed from counts,
//! * [`oracle`] brute-force sphere quadrature and Monte Carlo checks.
//!
//! Angles are radians throughout.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

use serde::{Deserialize, Serialize};

pub mod analytic;
pub mod bell;
pub mod error;
pub mod hv;
pub mod oracle;
pub mod rng;
pub mod sim;

pub use error::{ModelError, Result};

/// Which count the correlation estimate is divided by.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum DenominatorKind {
    /// `NN + SS + NS + SN`, the usual estimator.
    ObservedCoincidences,
    /// The number of (valid) emitted pairs, as with event-ready detection.
    EmittedPairs,
}

/// The four analyser settings of a CHSH test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ChshSettings {
    pub a: f64,
    pub a_prime: f64,
    pub b: f64,
    pub b_prime: f64,
}

impl ChshSettings {
    /// `a = 0, a' = pi/2, b = pi/4, b' = 3 pi/4`.
    pub const BELL: ChshSettings = ChshSettings {
        a: 0.0,
        a_prime: FRAC_PI_2,
        b: FRAC_PI_4,
        b_prime: 3.0 * FRAC_PI_4,
    };

    pub const fn new(a: f64, a_prime: f64, b: f64, b_prime: f64) -> Self {
        Self { a, a_prime, b, b_prime }
    }

    /// `(sign, setting_a, setting_b)` for each term of
    /// `S = E(a,b) - E(a,b') + E(a',b) + E(a',b')`.
    pub fn terms(&self) -> [(f64, f64, f64); 4] {
        [
            (1.0, self.a, self.b),
            (-1.0, self.a, self.b_prime),
            (1.0, self.a_prime, self.b),
            (1.0, self.a_prime, self.b_prime),
        ]
    }
}
