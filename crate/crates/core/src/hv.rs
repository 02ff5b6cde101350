//! Hidden-variable sources and detector outcome rules.
//!
//! The hidden variable is the unit vector from the ball's S mark to its N
//! mark. A detector looks at the ball along its setting direction and sees
//! a mark only if that mark lies inside its viewing cap. The deterministic
//! cap rule is the special case of a general per-channel detection
//! probability with values restricted to 0 and 1.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;
use std::ops::Neg;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::analytic::ANGLE_SLACK;
use crate::error::{check_range, ModelError, Result};

/// Cap on rejection-sampling attempts for one draw.
pub const MAX_REJECTION_ITERATIONS: u64 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const X: Vec3 = Vec3::new(1.0, 0.0, 0.0);
    pub const Y: Vec3 = Vec3::new(0.0, 1.0, 0.0);
    pub const Z: Vec3 = Vec3::new(0.0, 0.0, 1.0);

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    #[inline]
    pub fn dot(&self, other: &Vec3) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn normalized(&self) -> Option<Vec3> {
        let n = self.norm();
        (n.is_finite() && n > 0.0).then(|| Vec3::new(self.x / n, self.y / n, self.z / n))
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

/// Unit vector in the analysis plane for a setting angle. All settings are
/// coplanar.
#[inline]
pub fn setting_direction(angle: f64) -> Vec3 {
    let (s, c) = angle.sin_cos();
    Vec3::new(c, 0.0, s)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HiddenVariable(Vec3);

impl HiddenVariable {
    pub fn new(v: Vec3) -> Result<Self> {
        if (v.norm() - 1.0).abs() <= 1e-12 {
            Ok(Self(v))
        } else {
            Err(ModelError::Domain {
                name: "|lambda|",
                value: v.norm(),
                range: "1 +/- 1e-12",
            })
        }
    }

    /// Builds `lambda` from spherical coordinates about `z`. Both inputs are
    /// trusted to describe a point on the sphere.
    #[inline]
    pub(crate) fn from_cos_azimuth(cos_theta: f64, azimuth: f64) -> Self {
        let sin_theta = (1.0 - cos_theta * cos_theta).max(0.0).sqrt();
        let (s, c) = azimuth.sin_cos();
        Self(Vec3::new(sin_theta * c, sin_theta * s, cos_theta))
    }

    #[inline]
    pub(crate) fn from_unit_unchecked(v: Vec3) -> Self {
        Self(v)
    }

    #[inline]
    pub fn vector(&self) -> &Vec3 {
        &self.0
    }

    /// The same ball seen with N and S swapped.
    #[inline]
    pub fn flipped(&self) -> Self {
        Self(-self.0)
    }
}

/// Distribution of `lambda` at the source.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SourceModel {
    UniformSphere,
    /// Density proportional to `1 + strength * (lambda . axis)^2`.
    Anisotropic {
        axis: Vec3,
        strength: f64,
    },
}

impl SourceModel {
    pub fn anisotropic(axis: Vec3, strength: f64) -> Result<Self> {
        let source = SourceModel::Anisotropic { axis, strength };
        source.validate()?;
        Ok(source)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            SourceModel::UniformSphere => Ok(()),
            SourceModel::Anisotropic { axis, strength } => {
                if (axis.norm() - 1.0).abs() > 1e-12 {
                    return Err(ModelError::Config(format!(
                        "anisotropy axis must be a unit vector, got norm {}",
                        axis.norm()
                    )));
                }
                check_range("anisotropy strength", strength, 0.0, f64::MAX, "[0, inf)")
            }
        }
    }

    /// Unnormalised density at `lambda`.
    #[inline]
    pub fn weight(&self, lambda: &HiddenVariable) -> f64 {
        match self {
            SourceModel::UniformSphere => 1.0,
            SourceModel::Anisotropic { axis, strength } => {
                let c = lambda.vector().dot(axis);
                1.0 + strength * c * c
            }
        }
    }

    fn envelope(&self) -> f64 {
        match self {
            SourceModel::UniformSphere => 1.0,
            SourceModel::Anisotropic { strength, .. } => 1.0 + strength,
        }
    }
}

fn uniform_on_sphere<R: Rng + ?Sized>(rng: &mut R) -> HiddenVariable {
    let cos_theta = 2.0 * rng.random::<f64>() - 1.0;
    let azimuth = 2.0 * PI * rng.random::<f64>();
    HiddenVariable::from_cos_azimuth(cos_theta, azimuth)
}

/// Draws one hidden variable from `source`.
pub fn sample_lambda<R: Rng + ?Sized>(source: &SourceModel, rng: &mut R) -> Result<HiddenVariable> {
    match source {
        SourceModel::UniformSphere => Ok(uniform_on_sphere(rng)),
        SourceModel::Anisotropic { .. } => {
            let envelope = source.envelope();
            for _ in 0..MAX_REJECTION_ITERATIONS {
                let candidate = uniform_on_sphere(rng);
                if rng.random::<f64>() * envelope < source.weight(&candidate) {
                    return Ok(candidate);
                }
            }
            Err(ModelError::SamplerExhausted(MAX_REJECTION_ITERATIONS))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Channel {
    N,
    S,
}

/// One analyser output channel: a viewing cap on the sphere.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelCap {
    nominal_angle: f64,
    channel: Channel,
    half_angle: f64,
    axis_offset: f64,
    // cached
    axis: Vec3,
    cos_half_angle: f64,
}

impl ChannelCap {
    pub fn new(nominal_angle: f64, channel: Channel, half_angle: f64, axis_offset: f64) -> Result<Self> {
        check_range(
            "half angle",
            half_angle,
            f64::MIN_POSITIVE,
            FRAC_PI_2 + ANGLE_SLACK,
            "(0, pi/2]",
        )?;
        check_range("nominal angle", nominal_angle, f64::MIN, f64::MAX, "finite")?;
        check_range("axis offset", axis_offset, f64::MIN, f64::MAX, "finite")?;
        let half_angle = half_angle.min(FRAC_PI_2);
        let mut cap = Self {
            nominal_angle,
            channel,
            half_angle,
            axis_offset,
            axis: Vec3::X,
            cos_half_angle: half_angle.cos(),
        };
        cap.refresh_axis();
        Ok(cap)
    }

    fn refresh_axis(&mut self) {
        let direction = setting_direction(self.nominal_angle + self.axis_offset);
        self.axis = match self.channel {
            Channel::N => direction,
            Channel::S => -direction,
        };
    }

    /// Copy of this cap turned to a new setting, keeping its offset.
    pub fn at_setting(&self, nominal_angle: f64) -> Self {
        let mut cap = *self;
        cap.nominal_angle = nominal_angle;
        cap.refresh_axis();
        cap
    }

    pub fn channel(&self) -> Channel {
        self.channel
    }

    pub fn half_angle(&self) -> f64 {
        self.half_angle
    }

    pub fn axis_offset(&self) -> f64 {
        self.axis_offset
    }

    pub fn nominal_angle(&self) -> f64 {
        self.nominal_angle
    }

    /// Effective cap centre, negated for the S channel.
    pub fn axis(&self) -> Vec3 {
        self.axis
    }

    #[inline]
    pub fn contains(&self, lambda: &HiddenVariable) -> bool {
        lambda.vector().dot(&self.axis) > self.cos_half_angle
    }
}

/// Probability that a channel fires for a given hidden variable.
pub trait DetectionProbability: Send + Sync + fmt::Debug {
    fn probability(&self, lambda: &HiddenVariable, cap: &ChannelCap) -> f64;
}

/// The deterministic cap rule written as a probability (0 or 1).
#[derive(Debug, Clone, Copy, Default)]
pub struct CapIndicator;

impl DetectionProbability for CapIndicator {
    fn probability(&self, lambda: &HiddenVariable, cap: &ChannelCap) -> f64 {
        if cap.contains(lambda) {
            1.0
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum DetectorMode {
    TwoChannel,
    /// Only the N output is monitored.
    SingleChannelN,
    /// No analyser: any visible mark triggers a plain detection.
    AnalyserRemoved,
}

/// What one side records for one emitted pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Outcome {
    N,
    S,
    NoDetect,
    /// Analyser-removed detection.
    Detect,
    /// Both channels fired; the event is discarded as invalid.
    Double,
}

impl Outcome {
    pub fn fired(&self) -> bool {
        !matches!(self, Outcome::NoDetect)
    }
}

#[derive(Debug, Clone)]
pub struct DetectorModel {
    n_cap: ChannelCap,
    s_cap: ChannelCap,
    mode: DetectorMode,
    stochastic: Option<Arc<dyn DetectionProbability>>,
}

impl DetectorModel {
    /// Symmetric detector: both caps share `half_angle` and have no offset.
    pub fn symmetric(mode: DetectorMode, half_angle: f64) -> Result<Self> {
        Self::with_caps(mode, half_angle, half_angle, 0.0, 0.0)
    }

    pub fn with_caps(
        mode: DetectorMode,
        n_half_angle: f64,
        s_half_angle: f64,
        n_offset: f64,
        s_offset: f64,
    ) -> Result<Self> {
        Ok(Self {
            n_cap: ChannelCap::new(0.0, Channel::N, n_half_angle, n_offset)?,
            s_cap: ChannelCap::new(0.0, Channel::S, s_half_angle, s_offset)?,
            mode,
            stochastic: None,
        })
    }

    pub fn two_channel(half_angle: f64) -> Result<Self> {
        Self::symmetric(DetectorMode::TwoChannel, half_angle)
    }

    /// Replaces the deterministic cap rule by a per-channel probability.
    pub fn with_stochastic(mut self, probability: Arc<dyn DetectionProbability>) -> Self {
        self.stochastic = Some(probability);
        self
    }

    /// Copy of this detector turned to `setting`.
    pub fn at_setting(&self, setting: f64) -> Self {
        Self {
            n_cap: self.n_cap.at_setting(setting),
            s_cap: self.s_cap.at_setting(setting),
            mode: self.mode,
            stochastic: self.stochastic.clone(),
        }
    }

    pub fn mode(&self) -> DetectorMode {
        self.mode
    }

    /// Same caps read out in a different mode.
    pub fn with_mode(&self, mode: DetectorMode) -> Self {
        Self { mode, ..self.clone() }
    }

    pub fn n_cap(&self) -> &ChannelCap {
        &self.n_cap
    }

    pub fn s_cap(&self) -> &ChannelCap {
        &self.s_cap
    }

    pub fn is_stochastic(&self) -> bool {
        self.stochastic.is_some()
    }

    /// Firing probabilities `(p_N, p_S)` of the two physical channels.
    #[inline]
    fn channel_probabilities(&self, lambda: &HiddenVariable) -> (f64, f64) {
        let p = |cap: &ChannelCap| match &self.stochastic {
            Some(f) => f.probability(lambda, cap).clamp(0.0, 1.0),
            None => {
                if cap.contains(lambda) {
                    1.0
                } else {
                    0.0
                }
            }
        };
        let p_n = p(&self.n_cap);
        let p_s = match self.mode {
            DetectorMode::SingleChannelN => 0.0,
            _ => p(&self.s_cap),
        };
        (p_n, p_s)
    }

    fn resolve(&self, n_fired: bool, s_fired: bool) -> Outcome {
        match (self.mode, n_fired, s_fired) {
            (_, false, false) => Outcome::NoDetect,
            (DetectorMode::AnalyserRemoved, _, _) => Outcome::Detect,
            (_, true, false) => Outcome::N,
            (_, false, true) => Outcome::S,
            (_, true, true) => Outcome::Double,
        }
    }

    /// Outcome for one hidden variable. Deterministic detectors consume no
    /// random numbers; stochastic ones always consume exactly two.
    #[inline]
    pub fn outcome<R: Rng + ?Sized>(&self, lambda: &HiddenVariable, rng: &mut R) -> Outcome {
        match &self.stochastic {
            None => {
                let n = self.n_cap.contains(lambda);
                let s = self.mode != DetectorMode::SingleChannelN && self.s_cap.contains(lambda);
                self.resolve(n, s)
            }
            Some(_) => {
                let (p_n, p_s) = self.channel_probabilities(lambda);
                let u_n: f64 = rng.random();
                let u_s: f64 = rng.random();
                self.resolve(u_n < p_n, u_s < p_s)
            }
        }
    }

    /// Probability of `outcome` given `lambda`.
    pub fn outcome_probability(&self, lambda: &HiddenVariable, outcome: Outcome) -> f64 {
        let (p_n, p_s) = self.channel_probabilities(lambda);
        let none = (1.0 - p_n) * (1.0 - p_s);
        match (self.mode, outcome) {
            (_, Outcome::NoDetect) => none,
            (DetectorMode::AnalyserRemoved, Outcome::Detect) => 1.0 - none,
            (DetectorMode::AnalyserRemoved, _) => 0.0,
            (_, Outcome::Detect) => 0.0,
            (_, Outcome::N) => p_n * (1.0 - p_s),
            (_, Outcome::S) => p_s * (1.0 - p_n),
            (_, Outcome::Double) => p_n * p_s,
        }
    }

    /// Outcomes this detector can produce.
    pub fn possible_outcomes(&self) -> &'static [Outcome] {
        match self.mode {
            DetectorMode::TwoChannel => &[Outcome::N, Outcome::S, Outcome::NoDetect, Outcome::Double],
            DetectorMode::SingleChannelN => &[Outcome::N, Outcome::NoDetect],
            DetectorMode::AnalyserRemoved => &[Outcome::Detect, Outcome::NoDetect],
        }
    }
}

/// Two positioned detectors and the spin convention linking their views.
#[derive(Debug, Clone)]
pub struct Apparatus {
    pub detector_a: DetectorModel,
    pub detector_b: DetectorModel,
    /// When false, side B sees the ball with N and S swapped.
    pub identical_spins: bool,
}

impl Apparatus {
    /// Positions the two detector templates at the given settings.
    pub fn new(
        template_a: &DetectorModel,
        template_b: &DetectorModel,
        identical_spins: bool,
        setting_a: f64,
        setting_b: f64,
    ) -> Self {
        Self {
            detector_a: template_a.at_setting(setting_a),
            detector_b: template_b.at_setting(setting_b),
            identical_spins,
        }
    }

    #[inline]
    pub fn lambda_b(&self, lambda: &HiddenVariable) -> HiddenVariable {
        if self.identical_spins {
            *lambda
        } else {
            lambda.flipped()
        }
    }

    #[inline]
    pub fn outcomes<R: Rng + ?Sized>(&self, lambda: &HiddenVariable, rng: &mut R) -> (Outcome, Outcome) {
        let a = self.detector_a.outcome(lambda, rng);
        let b = self.detector_b.outcome(&self.lambda_b(lambda), rng);
        (a, b)
    }

    pub fn pair_probability(&self, lambda: &HiddenVariable, pair: (Outcome, Outcome)) -> f64 {
        let pa = self.detector_a.outcome_probability(lambda, pair.0);
        if pa == 0.0 {
            return 0.0;
        }
        pa * self.detector_b.outcome_probability(&self.lambda_b(lambda), pair.1)
    }
}
