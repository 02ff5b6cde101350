//! Seeded event-by-event experiment runner.
//!
//! Each sub-experiment (one pair of settings) owns a substream id. Event `i`
//! of substream `k` draws all of its randomness from
//! [`event_rng`]`(seed, k, i)`, so tallies do not depend on how the event
//! range is split across workers.

use std::ops::{Add, AddAssign};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ModelError, Result};
use crate::hv::{sample_lambda, Apparatus, DetectorMode, DetectorModel, Outcome, SourceModel};
use crate::rng::event_rng;
use crate::ChshSettings;

const CHUNK: u64 = 1 << 14;

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub n_pairs: u64,
    pub seed: u64,
    pub source: SourceModel,
    pub detector_a: DetectorModel,
    pub detector_b: DetectorModel,
    pub identical_spins: bool,
    /// Probability per side per event of a spurious firing.
    pub dark_rate: f64,
}

impl ExperimentConfig {
    /// Uniform source, identical spins, equal two-channel caps on both sides
    /// and no dark counts.
    pub fn equal_caps(half_angle: f64, n_pairs: u64, seed: u64) -> Result<Self> {
        let detector = DetectorModel::two_channel(half_angle)?;
        let config = Self {
            n_pairs,
            seed,
            source: SourceModel::UniformSphere,
            detector_a: detector.clone(),
            detector_b: detector,
            identical_spins: true,
            dark_rate: 0.0,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_pairs == 0 {
            return Err(ModelError::Config("nPairs must be at least 1".into()));
        }
        if !(self.dark_rate >= 0.0 && self.dark_rate < 1.0) {
            return Err(ModelError::Config(format!(
                "darkRate must lie in [0, 1), got {}",
                self.dark_rate
            )));
        }
        self.source.validate()
    }

    pub fn apparatus(&self, setting_a: f64, setting_b: f64) -> Apparatus {
        Apparatus::new(
            &self.detector_a,
            &self.detector_b,
            self.identical_spins,
            setting_a,
            setting_b,
        )
    }
}

/// Tally of one sub-experiment.
///
/// Every emitted pair lands in exactly one cell. Analyser-removed
/// detections are tallied in the N columns.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CountsTable {
    pub nn: u64,
    pub ss: u64,
    pub ns: u64,
    pub sn: u64,
    pub a_only_n: u64,
    pub a_only_s: u64,
    pub b_only_n: u64,
    pub b_only_s: u64,
    pub neither: u64,
    pub invalid: u64,
    pub emitted: u64,
}

impl CountsTable {
    pub fn cell_sum(&self) -> u64 {
        self.nn
            + self.ss
            + self.ns
            + self.sn
            + self.a_only_n
            + self.a_only_s
            + self.b_only_n
            + self.b_only_s
            + self.neither
            + self.invalid
    }

    pub fn is_conserved(&self) -> bool {
        self.cell_sum() == self.emitted
    }

    pub fn coincidences(&self) -> u64 {
        self.nn + self.ss + self.ns + self.sn
    }

    /// Emitted pairs that were not discarded as invalid.
    pub fn valid(&self) -> u64 {
        self.emitted - self.invalid
    }

    pub fn record(&mut self, a: Outcome, b: Outcome) {
        use Outcome::*;
        self.emitted += 1;
        let fold = |o: Outcome| match o {
            Detect => N,
            other => other,
        };
        match (fold(a), fold(b)) {
            (Double, _) | (_, Double) => self.invalid += 1,
            (N, N) => self.nn += 1,
            (S, S) => self.ss += 1,
            (N, S) => self.ns += 1,
            (S, N) => self.sn += 1,
            (N, NoDetect) => self.a_only_n += 1,
            (S, NoDetect) => self.a_only_s += 1,
            (NoDetect, N) => self.b_only_n += 1,
            (NoDetect, S) => self.b_only_s += 1,
            (NoDetect, NoDetect) => self.neither += 1,
            (Detect, _) | (_, Detect) => unreachable!("folded above"),
        }
    }
}

impl Add for CountsTable {
    type Output = CountsTable;
    fn add(mut self, rhs: CountsTable) -> CountsTable {
        self += rhs;
        self
    }
}

impl AddAssign for CountsTable {
    fn add_assign(&mut self, rhs: CountsTable) {
        self.nn += rhs.nn;
        self.ss += rhs.ss;
        self.ns += rhs.ns;
        self.sn += rhs.sn;
        self.a_only_n += rhs.a_only_n;
        self.a_only_s += rhs.a_only_s;
        self.b_only_n += rhs.b_only_n;
        self.b_only_s += rhs.b_only_s;
        self.neither += rhs.neither;
        self.invalid += rhs.invalid;
        self.emitted += rhs.emitted;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ScanEntry {
    pub setting_a: f64,
    pub setting_b: f64,
    /// `setting_b - setting_a`
    pub phi: f64,
    pub counts: CountsTable,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScanResult {
    pub entries: Vec<ScanEntry>,
}

impl ScanResult {
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }
}

/// How the four CHSH sub-experiments draw their hidden variables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SubstreamPolicy {
    /// Each sub-experiment has its own substream.
    #[default]
    Independent,
    /// All four sub-experiments replay substream 0, so event `i` carries the
    /// same hidden variable (and the same auxiliary draws) in each of them.
    SharedSource,
}

/// The four tables of a CHSH run, in the order of [`ChshSettings::terms`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChshTables {
    pub settings: ChshSettings,
    pub tables: [ScanEntry; 4],
}

impl ChshTables {
    pub fn counts(&self) -> [CountsTable; 4] {
        self.tables.map(|e| e.counts)
    }
}

// Dark counts: with probability `dark_rate` a side fires spuriously in a
// uniformly chosen channel. A spurious firing on top of a real one makes the
// event invalid. Four uniforms are always drawn so every event consumes the
// same amount of randomness after its detector outcomes.
#[inline]
fn apply_dark<R: Rng + ?Sized>(outcome: Outcome, mode: DetectorMode, dark_rate: f64, rng: &mut R) -> Outcome {
    let fire: f64 = rng.random();
    let pick: f64 = rng.random();
    if fire >= dark_rate {
        return outcome;
    }
    if outcome.fired() {
        return Outcome::Double;
    }
    match mode {
        DetectorMode::TwoChannel => {
            if pick < 0.5 {
                Outcome::N
            } else {
                Outcome::S
            }
        }
        DetectorMode::SingleChannelN => Outcome::N,
        DetectorMode::AnalyserRemoved => Outcome::Detect,
    }
}

fn simulate_event(
    config: &ExperimentConfig,
    apparatus: &Apparatus,
    stream: u64,
    event: u64,
) -> Result<(Outcome, Outcome)> {
    let mut rng = event_rng(config.seed, stream, event);
    let lambda = sample_lambda(&config.source, &mut rng)?;
    let (a, b) = apparatus.outcomes(&lambda, &mut rng);
    if config.dark_rate == 0.0 {
        return Ok((a, b));
    }
    let a = apply_dark(a, apparatus.detector_a.mode(), config.dark_rate, &mut rng);
    let b = apply_dark(b, apparatus.detector_b.mode(), config.dark_rate, &mut rng);
    Ok((a, b))
}

/// Runs one sub-experiment on an explicit substream.
pub fn run_pair_on_stream(
    config: &ExperimentConfig,
    setting_a: f64,
    setting_b: f64,
    stream: u64,
) -> Result<CountsTable> {
    config.validate()?;
    let apparatus = config.apparatus(setting_a, setting_b);
    let n = config.n_pairs;
    let chunks = n.div_ceil(CHUNK);
    let table = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut table = CountsTable::default();
            for event in c * CHUNK..((c + 1) * CHUNK).min(n) {
                let (a, b) = simulate_event(config, &apparatus, stream, event)?;
                table.record(a, b);
            }
            Ok(table)
        })
        .try_reduce(CountsTable::default, |x, y| Ok(x + y))?;
    debug_assert!(table.is_conserved());
    Ok(table)
}

/// One sub-experiment at settings `(setting_a, setting_b)` on substream 0.
pub fn run_pair(config: &ExperimentConfig, setting_a: f64, setting_b: f64) -> Result<CountsTable> {
    run_pair_on_stream(config, setting_a, setting_b, 0)
}

fn check_increasing(grid: &[f64]) -> Result<()> {
    if let Some(bad) = grid.iter().position(|x| !x.is_finite()) {
        return Err(ModelError::UnorderedGrid { index: bad });
    }
    match grid.windows(2).position(|w| w[1] <= w[0]) {
        Some(i) => Err(ModelError::UnorderedGrid { index: i + 1 }),
        None => Ok(()),
    }
}

/// One sub-experiment per `phi` with `setting_b = fixed_a + phi`. Point `i`
/// uses substream `i`.
pub fn run_scan(config: &ExperimentConfig, phi_grid: &[f64], fixed_a: f64) -> Result<ScanResult> {
    check_increasing(phi_grid)?;
    config.validate()?;
    let entries = phi_grid
        .iter()
        .enumerate()
        .map(|(i, &phi)| {
            let setting_b = fixed_a + phi;
            Ok(ScanEntry {
                setting_a: fixed_a,
                setting_b,
                phi,
                counts: run_pair_on_stream(config, fixed_a, setting_b, i as u64)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ScanResult { entries })
}

/// Full Cartesian product of settings, row-major in `a`. Entry `k` uses
/// substream `k`.
pub fn run_grid_ab(config: &ExperimentConfig, a_grid: &[f64], b_grid: &[f64]) -> Result<ScanResult> {
    check_increasing(a_grid)?;
    check_increasing(b_grid)?;
    config.validate()?;
    let mut entries = Vec::with_capacity(a_grid.len() * b_grid.len());
    for (i, &a) in a_grid.iter().enumerate() {
        for (j, &b) in b_grid.iter().enumerate() {
            let stream = (i * b_grid.len() + j) as u64;
            entries.push(ScanEntry {
                setting_a: a,
                setting_b: b,
                phi: b - a,
                counts: run_pair_on_stream(config, a, b, stream)?,
            });
        }
    }
    Ok(ScanResult { entries })
}

pub fn run_chsh_with(
    config: &ExperimentConfig,
    settings: &ChshSettings,
    policy: SubstreamPolicy,
) -> Result<ChshTables> {
    config.validate()?;
    let mut tables = [ScanEntry {
        setting_a: 0.0,
        setting_b: 0.0,
        phi: 0.0,
        counts: CountsTable::default(),
    }; 4];
    for (k, (_, a, b)) in settings.terms().into_iter().enumerate() {
        let stream = match policy {
            SubstreamPolicy::Independent => k as u64,
            SubstreamPolicy::SharedSource => 0,
        };
        tables[k] = ScanEntry {
            setting_a: a,
            setting_b: b,
            phi: b - a,
            counts: run_pair_on_stream(config, a, b, stream)?,
        };
    }
    Ok(ChshTables {
        settings: *settings,
        tables,
    })
}

/// The four CHSH sub-experiments on independent substreams `0..4`.
pub fn run_chsh(config: &ExperimentConfig, settings: &ChshSettings) -> Result<ChshTables> {
    run_chsh_with(config, settings, SubstreamPolicy::Independent)
}
