use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use loophole_core::analytic::{qm_coincidence, qm_correlation, BallParams};
use loophole_core::bell::{
    chsh, fair_sampling_diagnostics, run_ch74, subtract_accidentals, visibility, AccidentalEstimate, AdjustedCounts,
    BellReport, Ch74Report, DiagnosticsReport, RateChannel, VisibilityReport,
};
use loophole_core::oracle::{compare_cap_overlap, default_alpha_beta_grid, QuadratureSpec};
use loophole_core::sim::{run_chsh_with, run_grid_ab, run_pair, run_scan, CountsTable, ScanResult, SubstreamPolicy};
use loophole_core::{ChshSettings, DenominatorKind};
use serde::Serialize;
use serde_json::json;

use crate::config::ConfigFile;
use crate::error::{CliError, CliResult};
use crate::output::{opt_cell, sha256_json, sig9, write_csv, write_json, Manifest};

pub const THREADS_ENV: &str = "LOOPHOLE_LAB_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "loophole-lab",
    version,
    about = "Chaotic-ball local hidden-variable model and Bell-test estimators"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Closed-form coincidence and correlation curves (CSV).
    Predict(PredictArgs),
    /// One Monte Carlo run at fixed settings (JSON counts).
    Simulate(SimulateArgs),
    /// Four-setting CHSH test (JSON report).
    Test(TestArgs),
    /// Counts over a grid of settings (CSV) with optional diagnostics (JSON).
    Scan(ScanArgs),
    /// Single-channel CH74 test with analyser-removed normalisation (JSON).
    Ch74(Ch74Args),
    /// Closed form vs quadrature vs Monte Carlo for the cap overlap (CSV).
    Oracle(OracleArgs),
}

fn finite(s: &str) -> Result<f64, String> {
    let x: f64 = s.trim().parse().map_err(|_| format!("not a number: {s:?}"))?;
    if x.is_finite() {
        Ok(x)
    } else {
        Err(format!("not a finite number: {s:?}"))
    }
}

fn four_angles(s: &str) -> Result<[f64; 4], String> {
    let parts: Vec<f64> = s.split(',').map(finite).collect::<Result<_, _>>()?;
    parts
        .try_into()
        .map_err(|p: Vec<f64>| format!("expected four comma-separated angles, got {}", p.len()))
}

#[derive(Debug, Args)]
pub struct PhiGrid {
    /// First setting difference, degrees.
    #[arg(long, default_value = "0", value_parser = finite, allow_negative_numbers = true)]
    pub phi_min: f64,
    /// Last setting difference, degrees.
    #[arg(long, default_value = "180", value_parser = finite, allow_negative_numbers = true)]
    pub phi_max: f64,
    /// Number of grid points, endpoints included.
    #[arg(long)]
    pub phi_steps: Option<usize>,
}

impl PhiGrid {
    fn degrees(&self, default_steps: usize) -> CliResult<Vec<f64>> {
        let steps = self.phi_steps.unwrap_or(default_steps);
        if steps == 0 {
            return Err(CliError::Config("--phi-steps must be at least 1".into()));
        }
        if steps == 1 {
            return Ok(vec![self.phi_min]);
        }
        if self.phi_max <= self.phi_min {
            return Err(CliError::Config("--phi-max must exceed --phi-min".into()));
        }
        let step = (self.phi_max - self.phi_min) / (steps - 1) as f64;
        Ok((0..steps)
            .map(|i| {
                if i + 1 == steps {
                    self.phi_max
                } else {
                    self.phi_min + step * i as f64
                }
            })
            .collect())
    }
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// Cap half-angle, degrees.
    #[arg(long, value_parser = finite)]
    pub beta: f64,
    #[command(flatten)]
    pub grid: PhiGrid,
    /// Spins opposite instead of identical.
    #[arg(long)]
    pub opposite_spins: bool,
    /// Output file; stdout when omitted.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Side A setting, degrees.
    #[arg(long, default_value = "0", value_parser = finite, allow_negative_numbers = true)]
    pub a: f64,
    /// Side B setting, degrees.
    #[arg(long, default_value = "0", value_parser = finite, allow_negative_numbers = true)]
    pub b: f64,
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Estimator {
    /// Divide by observed coincidences.
    Observed,
    /// Divide by emitted (valid) pairs.
    Emitted,
}

impl From<Estimator> for DenominatorKind {
    fn from(e: Estimator) -> Self {
        match e {
            Estimator::Observed => DenominatorKind::ObservedCoincidences,
            Estimator::Emitted => DenominatorKind::EmittedPairs,
        }
    }
}

#[derive(Debug, Args)]
pub struct TestArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// a,a',b,b' in degrees.
    #[arg(long, default_value = "0,90,45,135", value_parser = four_angles, allow_hyphen_values = true)]
    pub angles: [f64; 4],
    #[arg(long, value_enum, default_value_t = Estimator::Observed)]
    pub estimator: Estimator,
    /// Subtract singles-product accidental estimates before estimating.
    #[arg(long)]
    pub subtract_accidentals: bool,
    /// Replay one substream in all four sub-experiments.
    #[arg(long)]
    pub shared_source: bool,
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ScanArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[command(flatten)]
    pub grid: PhiGrid,
    /// Side A setting for the phi scan, degrees.
    #[arg(long, default_value = "0", value_parser = finite, allow_negative_numbers = true)]
    pub fixed_a: f64,
    /// Absolute side A settings (degrees) for a full a x b grid; needs --b-values.
    #[arg(long, value_delimiter = ',', value_parser = finite, requires = "b_values", allow_negative_numbers = true)]
    pub a_values: Option<Vec<f64>>,
    /// Absolute side B settings (degrees) for a full a x b grid; needs --a-values.
    #[arg(long, value_delimiter = ',', value_parser = finite, requires = "a_values", allow_negative_numbers = true)]
    pub b_values: Option<Vec<f64>>,
    /// Write the diagnostics report (JSON) here.
    #[arg(long)]
    pub diagnostics: Option<PathBuf>,
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct Ch74Args {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, default_value = "0", value_parser = finite, allow_negative_numbers = true)]
    pub fixed_a: f64,
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    /// Half the setting difference, degrees. Without it a 10 x 10 grid is used.
    #[arg(long, value_parser = finite, requires = "beta")]
    pub alpha: Option<f64>,
    /// Cap half-angle, degrees.
    #[arg(long, value_parser = finite, requires = "alpha")]
    pub beta: Option<f64>,
    #[arg(long, default_value_t = QuadratureSpec::DEFAULT.polar_steps)]
    pub polar_steps: usize,
    #[arg(long, default_value_t = QuadratureSpec::DEFAULT.azimuth_steps)]
    pub azimuth_steps: usize,
    /// Monte Carlo samples per point; 0 skips Monte Carlo.
    #[arg(long, default_value_t = 100_000)]
    pub mc_samples: u64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

/// Sizes the global rayon pool from `LOOPHOLE_LAB_THREADS` (unset or 0: auto).
pub fn configure_threads() -> CliResult<()> {
    let threads = match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .map_err(|_| CliError::Config(format!("{THREADS_ENV} must be a non-negative integer, got {v:?}")))?,
        Err(_) => 0,
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::Internal(e.to_string()))
}

/// Runs one parsed command. `command` is recorded verbatim in manifests.
pub fn run(cli: Cli, command: &str) -> CliResult<()> {
    match cli.command {
        Command::Predict(args) => predict(&args, command),
        Command::Simulate(args) => simulate(&args, command),
        Command::Test(args) => test(&args, command),
        Command::Scan(args) => scan(&args, command),
        Command::Ch74(args) => ch74(&args, command),
        Command::Oracle(args) => oracle(&args, command),
    }
}

pub const PREDICT_HEADER: [&str; 8] = [
    "phi_deg",
    "p_ss",
    "p_ns",
    "total_rate",
    "e_normalised",
    "e_unnormalised",
    "qm_coincidence",
    "qm_correlation",
];

pub fn predict_rows(beta_deg: f64, phis_deg: &[f64], identical_spins: bool) -> CliResult<Vec<Vec<String>>> {
    let ball = BallParams::new(beta_deg.to_radians(), identical_spins)?;
    phis_deg
        .iter()
        .map(|&deg| {
            let phi = deg.to_radians();
            Ok(vec![
                sig9(deg),
                sig9(ball.p_like(phi)?),
                sig9(ball.p_unlike(phi)?),
                sig9(ball.total_rate(phi)?),
                opt_cell(ball.correlation_normalised(phi)?.value),
                sig9(ball.correlation_unnormalised(phi)?),
                sig9(qm_coincidence(phi)),
                sig9(qm_correlation(phi)),
            ])
        })
        .collect()
}

fn predict(args: &PredictArgs, command: &str) -> CliResult<()> {
    let phis = args.grid.degrees(181)?;
    let rows = predict_rows(args.beta, &phis, !args.opposite_spins)?;
    let digest = sha256_json(&json!({
        "betaDeg": args.beta,
        "phiDeg": phis,
        "identicalSpins": !args.opposite_spins,
    }));
    write_csv(
        args.out.as_deref(),
        &Manifest::new(command, digest, 0),
        &PREDICT_HEADER,
        &rows,
    )
}

fn load(path: &Path, command: &str) -> CliResult<(ConfigFile, Manifest)> {
    let config = ConfigFile::load(path)?;
    let manifest = Manifest::new(command, config.digest(), config.seed);
    Ok((config, manifest))
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct SimulateOutput {
    setting_a_deg: f64,
    setting_b_deg: f64,
    #[serde(flatten)]
    counts: CountsTable,
}

fn simulate(args: &SimulateArgs, command: &str) -> CliResult<()> {
    let (config, manifest) = load(&args.config, command)?;
    let counts = run_pair(&config.to_experiment()?, args.a.to_radians(), args.b.to_radians())?;
    let body = SimulateOutput {
        setting_a_deg: args.a,
        setting_b_deg: args.b,
        counts,
    };
    write_json(args.out.as_deref(), &manifest, &body)
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct TableOutput {
    setting_a_deg: f64,
    setting_b_deg: f64,
    counts: CountsTable,
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct TestOutput {
    angles_deg: [f64; 4],
    estimator: DenominatorKind,
    subtract_accidentals: bool,
    shared_source: bool,
    #[serde(flatten)]
    report: BellReport,
    tables: Vec<TableOutput>,
    #[serde(skip_serializing_if = "Option::is_none")]
    adjusted: Option<[AdjustedCounts; 4]>,
}

fn test(args: &TestArgs, command: &str) -> CliResult<()> {
    let (config, manifest) = load(&args.config, command)?;
    let [a, a_prime, b, b_prime] = args.angles.map(f64::to_radians);
    let settings = ChshSettings::new(a, a_prime, b, b_prime);
    let policy = if args.shared_source {
        SubstreamPolicy::SharedSource
    } else {
        SubstreamPolicy::Independent
    };
    let tables = run_chsh_with(&config.to_experiment()?, &settings, policy)?;
    let counts = tables.counts();
    let kind = DenominatorKind::from(args.estimator);
    let (report, adjusted) = if args.subtract_accidentals {
        let adjusted = counts.map(|t| subtract_accidentals(&t, &AccidentalEstimate::from_singles(&t)));
        (chsh(&adjusted, kind), Some(adjusted))
    } else {
        (chsh(&counts, kind), None)
    };
    let body = TestOutput {
        angles_deg: args.angles,
        estimator: kind,
        subtract_accidentals: args.subtract_accidentals,
        shared_source: args.shared_source,
        report,
        tables: tables
            .tables
            .iter()
            .map(|e| TableOutput {
                setting_a_deg: e.setting_a.to_degrees(),
                setting_b_deg: e.setting_b.to_degrees(),
                counts: e.counts,
            })
            .collect(),
        adjusted,
    };
    write_json(args.out.as_deref(), &manifest, &body)
}

pub const SCAN_HEADER: [&str; 17] = [
    "setting_a_deg",
    "setting_b_deg",
    "phi_deg",
    "nn",
    "ss",
    "ns",
    "sn",
    "a_only_n",
    "a_only_s",
    "b_only_n",
    "b_only_s",
    "neither",
    "invalid",
    "emitted",
    "total_rate",
    "e_observed",
    "e_emitted",
];

pub fn scan_rows(scan: &ScanResult) -> Vec<Vec<String>> {
    scan.entries
        .iter()
        .map(|e| {
            let c = &e.counts;
            let total_rate = (c.valid() > 0).then(|| c.coincidences() as f64 / c.valid() as f64);
            let observed = loophole_core::bell::estimate_e(c, DenominatorKind::ObservedCoincidences).value;
            let emitted = loophole_core::bell::estimate_e(c, DenominatorKind::EmittedPairs).value;
            let mut row = vec![
                sig9(e.setting_a.to_degrees()),
                sig9(e.setting_b.to_degrees()),
                sig9(e.phi.to_degrees()),
            ];
            row.extend(
                [
                    c.nn, c.ss, c.ns, c.sn, c.a_only_n, c.a_only_s, c.b_only_n, c.b_only_s, c.neither, c.invalid,
                    c.emitted,
                ]
                .iter()
                .map(u64::to_string),
            );
            row.extend([opt_cell(total_rate), opt_cell(observed), opt_cell(emitted)]);
            row
        })
        .collect()
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct DiagnosticsOutput {
    total_rate_max_relative_variation: f64,
    total_rate_min: f64,
    total_rate_max: f64,
    total_rate_min_at_phi_deg: f64,
    bell_angle_totals_equal_within: Option<f64>,
    rotational_invariance_max_z: Option<f64>,
    ns_sn_asymmetry_z: f64,
    visibility_like: Option<VisibilityReport>,
    visibility_nn: Option<VisibilityReport>,
}

impl DiagnosticsOutput {
    fn new(d: DiagnosticsReport, scan: &ScanResult) -> Self {
        Self {
            total_rate_max_relative_variation: d.total_rate_max_relative_variation,
            total_rate_min: d.total_rate_min,
            total_rate_max: d.total_rate_max,
            total_rate_min_at_phi_deg: d.total_rate_min_at_phi.to_degrees(),
            bell_angle_totals_equal_within: d.bell_angle_totals_equal_within,
            rotational_invariance_max_z: d.rotational_invariance_max_z,
            ns_sn_asymmetry_z: d.ns_sn_asymmetry_z,
            visibility_like: visibility(scan, RateChannel::LikeCoincidences).ok(),
            visibility_nn: visibility(scan, RateChannel::NnOnly).ok(),
        }
    }
}

fn scan(args: &ScanArgs, command: &str) -> CliResult<()> {
    let (config, manifest) = load(&args.config, command)?;
    let experiment = config.to_experiment()?;
    let result = match (&args.a_values, &args.b_values) {
        (Some(a), Some(b)) => {
            let rad = |v: &[f64]| v.iter().map(|x| x.to_radians()).collect::<Vec<_>>();
            run_grid_ab(&experiment, &rad(a), &rad(b))?
        }
        _ => {
            let phis: Vec<f64> = args.grid.degrees(13)?.iter().map(|d| d.to_radians()).collect();
            run_scan(&experiment, &phis, args.fixed_a.to_radians())?
        }
    };
    write_csv(args.out.as_deref(), &manifest, &SCAN_HEADER, &scan_rows(&result))?;
    if let Some(path) = &args.diagnostics {
        let report = fair_sampling_diagnostics(&result)?;
        write_json(Some(path), &manifest, &DiagnosticsOutput::new(report, &result))?;
    }
    Ok(())
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct Ch74Output {
    fixed_a_deg: f64,
    #[serde(flatten)]
    report: Ch74Report,
}

fn ch74(args: &Ch74Args, command: &str) -> CliResult<()> {
    let (config, manifest) = load(&args.config, command)?;
    let report = run_ch74(&config.to_experiment()?, args.fixed_a.to_radians())?;
    let body = Ch74Output {
        fixed_a_deg: args.fixed_a,
        report,
    };
    write_json(args.out.as_deref(), &manifest, &body)
}

pub const ORACLE_HEADER: [&str; 8] = [
    "alpha_deg",
    "beta_deg",
    "analytic",
    "quadrature",
    "monte_carlo",
    "mc_standard_error",
    "quadrature_delta",
    "monte_carlo_delta",
];

fn oracle(args: &OracleArgs, command: &str) -> CliResult<()> {
    let spec = QuadratureSpec::new(args.polar_steps, args.azimuth_steps)?;
    let points = match (args.alpha, args.beta) {
        (Some(alpha), Some(beta)) => vec![(alpha.to_radians(), beta.to_radians())],
        _ => default_alpha_beta_grid(),
    };
    let mut rows = Vec::with_capacity(points.len());
    let mut worst = 0.0f64;
    for (k, &(alpha, beta)) in points.iter().enumerate() {
        let c = compare_cap_overlap(alpha, beta, &spec, args.mc_samples, args.seed.wrapping_add(k as u64))?;
        worst = worst.max(c.quadrature_delta().abs());
        rows.push(vec![
            sig9(alpha.to_degrees()),
            sig9(beta.to_degrees()),
            sig9(c.analytic),
            sig9(c.quadrature),
            opt_cell(c.monte_carlo.map(|m| m.probability)),
            opt_cell(c.monte_carlo.map(|m| m.standard_error)),
            sig9(c.quadrature_delta()),
            opt_cell(c.monte_carlo_delta()),
        ]);
    }
    let digest = sha256_json(&json!({
        "pointsRad": points,
        "quadrature": spec,
        "mcSamples": args.mc_samples,
    }));
    write_csv(
        args.out.as_deref(),
        &Manifest::new(command, digest, args.seed),
        &ORACLE_HEADER,
        &rows,
    )?;
    eprintln!("max |analytic - quadrature| = {:.3e}", worst);
    Ok(())
}
