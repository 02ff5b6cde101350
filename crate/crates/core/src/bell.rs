//! Estimators and test statistics computed from coincidence counts.
//!
//! Standard errors treat each count as binomial against its denominator and
//! are propagated to the correlation by the delta method.

use std::f64::consts::{FRAC_PI_4, SQRT_2};

use serde::{Deserialize, Serialize};

use crate::analytic::fold_angle;
use crate::error::{ModelError, Result};
use crate::hv::DetectorMode;
use crate::sim::{run_pair_on_stream, CountsTable, ExperimentConfig, ScanResult};
use crate::DenominatorKind;

/// Classical CHSH bound.
pub const CHSH_CLASSICAL_BOUND: f64 = 2.0;
/// Quantum (Tsirelson) CHSH bound.
pub const CHSH_QM_BOUND: f64 = 2.0 * SQRT_2;
/// Visibility bound from the CH74 reduction for a sinusoidal curve.
pub const VISIBILITY_CH74_BOUND: f64 = 1.0 / SQRT_2;
/// Visibility ceiling quoted for the commonly assumed local model.
pub const VISIBILITY_HALF_BOUND: f64 = 0.5;

const ANGLE_MATCH: f64 = 1e-9;

/// Anything that supplies coincidence counts to the estimators.
pub trait Coincidences {
    fn nn(&self) -> f64;
    fn ss(&self) -> f64;
    fn ns(&self) -> f64;
    fn sn(&self) -> f64;
    /// Emitted pairs minus invalid events.
    fn valid_pairs(&self) -> f64;

    fn like(&self) -> f64 {
        self.nn() + self.ss()
    }

    fn unlike(&self) -> f64 {
        self.ns() + self.sn()
    }
}

impl Coincidences for CountsTable {
    fn nn(&self) -> f64 {
        self.nn as f64
    }
    fn ss(&self) -> f64 {
        self.ss as f64
    }
    fn ns(&self) -> f64 {
        self.ns as f64
    }
    fn sn(&self) -> f64 {
        self.sn as f64
    }
    fn valid_pairs(&self) -> f64 {
        self.valid() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CorrelationEstimate {
    /// `None` when there are no coincidences to normalise by.
    pub value: Option<f64>,
    pub standard_error: f64,
    pub denominator_kind: DenominatorKind,
    pub coincidence_total: f64,
}

pub fn estimate_e<T: Coincidences + ?Sized>(table: &T, kind: DenominatorKind) -> CorrelationEstimate {
    let like = table.like();
    let unlike = table.unlike();
    let total = like + unlike;
    let (value, standard_error) = match kind {
        DenominatorKind::ObservedCoincidences => {
            if total > 0.0 {
                // E = 2p - 1 with p = like / total binomial in `total`.
                let e = ((like - unlike) / total).clamp(-1.0, 1.0);
                (Some(e), ((1.0 - e * e).max(0.0) / total).sqrt())
            } else {
                (None, 0.0)
            }
        }
        DenominatorKind::EmittedPairs => {
            let n = table.valid_pairs();
            if n > 0.0 {
                // Per-event score in {-1, 0, 1}: variance (pL + pU) - (pL - pU)^2.
                let e = ((like - unlike) / n).clamp(-1.0, 1.0);
                let var = (total / n - e * e).max(0.0);
                (Some(e), (var / n).sqrt())
            } else {
                (None, 0.0)
            }
        }
    };
    CorrelationEstimate {
        value,
        standard_error,
        denominator_kind: kind,
        coincidence_total: total,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct BellReport {
    pub s_value: Option<f64>,
    pub terms: [CorrelationEstimate; 4],
    pub violates_classical: bool,
    pub exceeds_qm: bool,
    pub standard_error: f64,
}

/// CHSH statistic from four tables ordered as `(a,b), (a,b'), (a',b), (a',b')`.
///
/// An undefined term makes the statistic undefined.
pub fn chsh<T: Coincidences>(tables: &[T; 4], kind: DenominatorKind) -> BellReport {
    const SIGNS: [f64; 4] = [1.0, -1.0, 1.0, 1.0];
    let terms = [0, 1, 2, 3].map(|i| estimate_e(&tables[i], kind));
    let s_value = terms
        .iter()
        .zip(SIGNS)
        .try_fold(0.0, |acc, (t, sign)| t.value.map(|v| acc + sign * v));
    let standard_error = terms
        .iter()
        .map(|t| t.standard_error * t.standard_error)
        .sum::<f64>()
        .sqrt();
    let magnitude = s_value.map(f64::abs).unwrap_or(0.0);
    BellReport {
        s_value,
        terms,
        violates_classical: magnitude > CHSH_CLASSICAL_BOUND,
        exceeds_qm: magnitude > CHSH_QM_BOUND,
        standard_error,
    }
}

/// Which counts a visibility curve is built from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum RateChannel {
    /// `NN + SS`
    #[default]
    LikeCoincidences,
    /// `NN` alone, as with single-channel analysers.
    NnOnly,
    /// `NS + SN`
    UnlikeCoincidences,
}

impl RateChannel {
    pub fn rate(&self, table: &CountsTable) -> f64 {
        let valid = table.valid();
        if valid == 0 {
            return 0.0;
        }
        let count = match self {
            RateChannel::LikeCoincidences => table.nn + table.ss,
            RateChannel::NnOnly => table.nn,
            RateChannel::UnlikeCoincidences => table.ns + table.sn,
        };
        count as f64 / valid as f64
    }
}

/// `(max - min) / (max + min)` of a curve.
pub fn visibility_of(rates: &[f64]) -> Result<f64> {
    if rates.len() < 2 {
        return Err(ModelError::Degenerate("visibility needs at least two points".into()));
    }
    let max = rates.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = rates.iter().copied().fold(f64::INFINITY, f64::min);
    if max.is_nan() || max <= 0.0 || min < 0.0 {
        return Err(ModelError::Degenerate(
            "visibility needs non-negative rates, not all zero".into(),
        ));
    }
    Ok((max - min) / (max + min))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct VisibilityReport {
    pub visibility: f64,
    pub channel: RateChannel,
    /// `v > 1/sqrt(2)`
    pub exceeds_ch74_bound: bool,
    /// `v > 0.5`
    pub exceeds_half_bound: bool,
}

pub fn visibility(scan: &ScanResult, channel: RateChannel) -> Result<VisibilityReport> {
    let rates: Vec<f64> = scan.entries.iter().map(|e| channel.rate(&e.counts)).collect();
    let v = visibility_of(&rates)?;
    Ok(VisibilityReport {
        visibility: v,
        channel,
        exceeds_ch74_bound: v > VISIBILITY_CH74_BOUND,
        exceeds_half_bound: v > VISIBILITY_HALF_BOUND,
    })
}

/// Freedman form of the single-channel CH74 test,
/// `delta = |R(22.5) - R(67.5)| / R0 - 1/4`, with classical bound `delta <= 0`.
///
/// The angles are polariser angles; on the ball they correspond to setting
/// differences of 45 and 135 degrees.
pub fn ch74_freedman(rate_22_5: f64, rate_67_5: f64, rate_removed: f64) -> Result<f64> {
    if rate_removed.is_nan() || rate_removed <= 0.0 || !rate_22_5.is_finite() || !rate_67_5.is_finite() {
        return Err(ModelError::Degenerate(
            "CH74 normalisation needs a positive analyser-removed rate".into(),
        ));
    }
    Ok((rate_22_5 - rate_67_5).abs() / rate_removed - 0.25)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Ch74Report {
    /// Single-channel NN rate at a setting difference of 45 degrees.
    #[serde(rename = "rate22_5")]
    pub rate_22_5: f64,
    /// Single-channel NN rate at a setting difference of 135 degrees.
    #[serde(rename = "rate67_5")]
    pub rate_67_5: f64,
    /// Analyser-removed coincidence rate, averaged over the two setting pairs.
    pub rate_removed: f64,
    pub delta: f64,
    pub violates: bool,
    pub counts: [CountsTable; 4],
}

/// Single-channel run of the Freedman test on the ball.
///
/// The detector templates are read out N-only for the two signal rates and
/// with the analysers removed for the normalisation, at the same two
/// setting pairs. Spin angles are twice polariser angles, so the 22.5 and
/// 67.5 degree rates are taken at setting differences of 45 and 135 degrees.
pub fn run_ch74(config: &ExperimentConfig, fixed_a: f64) -> Result<Ch74Report> {
    let with_mode = |mode| {
        let mut c = config.clone();
        c.detector_a = config.detector_a.with_mode(mode);
        c.detector_b = config.detector_b.with_mode(mode);
        c
    };
    let single = with_mode(DetectorMode::SingleChannelN);
    let removed = with_mode(DetectorMode::AnalyserRemoved);
    let (b1, b2) = (fixed_a + FRAC_PI_4, fixed_a + 3.0 * FRAC_PI_4);
    let counts = [
        run_pair_on_stream(&single, fixed_a, b1, 0)?,
        run_pair_on_stream(&single, fixed_a, b2, 1)?,
        run_pair_on_stream(&removed, fixed_a, b1, 2)?,
        run_pair_on_stream(&removed, fixed_a, b2, 3)?,
    ];
    let rate = |t: &CountsTable| RateChannel::NnOnly.rate(t);
    let rate_22_5 = rate(&counts[0]);
    let rate_67_5 = rate(&counts[1]);
    let rate_removed = 0.5 * (rate(&counts[2]) + rate(&counts[3]));
    let delta = ch74_freedman(rate_22_5, rate_67_5, rate_removed)?;
    Ok(Ch74Report {
        rate_22_5,
        rate_67_5,
        rate_removed,
        delta,
        violates: delta > 0.0,
        counts,
    })
}

/// Expected accidental coincidences per category.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct AccidentalEstimate {
    pub nn: f64,
    pub ss: f64,
    pub ns: f64,
    pub sn: f64,
}

impl AccidentalEstimate {
    /// Uncorrelated-product estimate: (A firings in that channel) x (B
    /// firings in that channel) / valid pairs.
    pub fn from_singles(table: &CountsTable) -> Self {
        let valid = table.valid();
        if valid == 0 {
            return Self::default();
        }
        let a_n = (table.nn + table.ns + table.a_only_n) as f64;
        let a_s = (table.ss + table.sn + table.a_only_s) as f64;
        let b_n = (table.nn + table.sn + table.b_only_n) as f64;
        let b_s = (table.ss + table.ns + table.b_only_s) as f64;
        let n = valid as f64;
        Self {
            nn: a_n * b_n / n,
            ss: a_s * b_s / n,
            ns: a_n * b_s / n,
            sn: a_s * b_n / n,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum CoincidenceCell {
    Nn,
    Ss,
    Ns,
    Sn,
}

/// Coincidence counts after accidental subtraction (real-valued).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct AdjustedCounts {
    pub nn: f64,
    pub ss: f64,
    pub ns: f64,
    pub sn: f64,
    pub valid: f64,
    pub estimate: AccidentalEstimate,
    /// Cells where the estimate exceeded the raw count and was clipped to 0.
    pub clipped: Vec<CoincidenceCell>,
}

impl Coincidences for AdjustedCounts {
    fn nn(&self) -> f64 {
        self.nn
    }
    fn ss(&self) -> f64 {
        self.ss
    }
    fn ns(&self) -> f64 {
        self.ns
    }
    fn sn(&self) -> f64 {
        self.sn
    }
    fn valid_pairs(&self) -> f64 {
        self.valid
    }
}

pub fn subtract_accidentals(table: &CountsTable, estimate: &AccidentalEstimate) -> AdjustedCounts {
    let mut clipped = Vec::new();
    let mut adjust = |raw: u64, est: f64, cell: CoincidenceCell| {
        let value = raw as f64 - est;
        if value < 0.0 {
            clipped.push(cell);
            0.0
        } else {
            value
        }
    };
    let nn = adjust(table.nn, estimate.nn, CoincidenceCell::Nn);
    let ss = adjust(table.ss, estimate.ss, CoincidenceCell::Ss);
    let ns = adjust(table.ns, estimate.ns, CoincidenceCell::Ns);
    let sn = adjust(table.sn, estimate.sn, CoincidenceCell::Sn);
    AdjustedCounts {
        nn,
        ss,
        ns,
        sn,
        valid: table.valid() as f64,
        estimate: *estimate,
        clipped,
    }
}

/// z-score of the difference of two binomial proportions.
pub fn two_proportion_z(k1: u64, n1: u64, k2: u64, n2: u64) -> f64 {
    if n1 == 0 || n2 == 0 {
        return 0.0;
    }
    let p1 = k1 as f64 / n1 as f64;
    let p2 = k2 as f64 / n2 as f64;
    let var = p1 * (1.0 - p1) / n1 as f64 + p2 * (1.0 - p2) / n2 as f64;
    if var > 0.0 {
        (p1 - p2) / var.sqrt()
    } else {
        0.0
    }
}

/// Exchangeability z-score of `NS` against `SN` (binomial with p = 1/2).
pub fn ns_sn_asymmetry_z(table: &CountsTable) -> f64 {
    let total = table.ns + table.sn;
    if total == 0 {
        0.0
    } else {
        (table.ns as f64 - table.sn as f64) / (total as f64).sqrt()
    }
}

fn total_rate(table: &CountsTable) -> f64 {
    if table.valid() == 0 {
        0.0
    } else {
        table.coincidences() as f64 / table.valid() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DiagnosticsReport {
    /// `(max - min) / mean` of the total coincidence rate across entries.
    pub total_rate_max_relative_variation: f64,
    pub total_rate_min: f64,
    pub total_rate_max: f64,
    /// Folded setting difference of the entry with the lowest total rate.
    pub total_rate_min_at_phi: f64,
    /// `|T(pi/4) - T(3pi/4)| / mean`, when both angles are in the scan.
    pub bell_angle_totals_equal_within: Option<f64>,
    /// Largest |z| between equal-phi setting pairs, over the four cells.
    pub rotational_invariance_max_z: Option<f64>,
    /// Signed NS-vs-SN z-score of the entry where it is largest in magnitude.
    pub ns_sn_asymmetry_z: f64,
}

pub fn fair_sampling_diagnostics(scan: &ScanResult) -> Result<DiagnosticsReport> {
    if scan.is_empty() {
        return Err(ModelError::Degenerate("diagnostics need a non-empty scan".into()));
    }
    let rates: Vec<f64> = scan.entries.iter().map(|e| total_rate(&e.counts)).collect();
    let (min_idx, &min) = rates
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty");
    let max = rates.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mean = rates.iter().sum::<f64>() / rates.len() as f64;
    let variation = if mean > 0.0 { (max - min) / mean } else { 0.0 };

    let rate_at = |target: f64| {
        scan.entries
            .iter()
            .zip(&rates)
            .find(|(e, _)| (fold_angle(e.phi) - target).abs() < ANGLE_MATCH)
            .map(|(_, &r)| r)
    };
    let bell_gap = match (rate_at(FRAC_PI_4), rate_at(3.0 * FRAC_PI_4)) {
        (Some(t1), Some(t3)) if t1 + t3 > 0.0 => Some((t1 - t3).abs() / (0.5 * (t1 + t3))),
        (Some(_), Some(_)) => Some(0.0),
        _ => None,
    };

    let mut rotational: Option<f64> = None;
    for (i, x) in scan.entries.iter().enumerate() {
        for y in &scan.entries[i + 1..] {
            if (x.phi - y.phi).abs() >= ANGLE_MATCH {
                continue;
            }
            let (cx, cy) = (&x.counts, &y.counts);
            let cells = [(cx.nn, cy.nn), (cx.ss, cy.ss), (cx.ns, cy.ns), (cx.sn, cy.sn)];
            for (kx, ky) in cells {
                let z = two_proportion_z(kx, cx.valid(), ky, cy.valid()).abs();
                rotational = Some(rotational.map_or(z, |r| r.max(z)));
            }
        }
    }

    let asymmetry = scan
        .entries
        .iter()
        .map(|e| ns_sn_asymmetry_z(&e.counts))
        .max_by(|a, b| a.abs().total_cmp(&b.abs()))
        .unwrap_or(0.0);

    Ok(DiagnosticsReport {
        total_rate_max_relative_variation: variation,
        total_rate_min: min,
        total_rate_max: max,
        total_rate_min_at_phi: fold_angle(scan.entries[min_idx].phi),
        bell_angle_totals_equal_within: bell_gap,
        rotational_invariance_max_z: rotational,
        ns_sn_asymmetry_z: asymmetry,
    })
}
