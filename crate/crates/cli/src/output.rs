//! Number formatting, run manifests and the file/stdout writers.

use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use chrono::{SecondsFormat, Utc};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::CliResult;

/// 9 significant digits; fixed notation unless the magnitude is below 1e-6
/// or above 1e15, where scientific keeps float noise readable. Empty for
/// NaN or infinities.
pub fn sig9(x: f64) -> String {
    if !x.is_finite() {
        return String::new();
    }
    if x == 0.0 {
        return "0.00000000".to_string();
    }
    // Let the exponent formatter do the rounding, then re-read the exponent
    // so 9.999999999 becomes 10.0000000 and not 10.00000000.
    let sci = format!("{:.8e}", x);
    let exponent: i32 = sci.rsplit('e').next().and_then(|e| e.parse().ok()).unwrap_or(0);
    if !(-6..=14).contains(&exponent) {
        return sci;
    }
    let decimals = (8 - exponent).max(0) as usize;
    format!("{:.*}", decimals, x)
}

pub fn opt_cell(x: Option<f64>) -> String {
    x.map(sig9).unwrap_or_default()
}

pub fn sha256_json<T: Serialize + ?Sized>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("serialisable value");
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Manifest {
    pub tool_version: String,
    pub config_digest: String,
    pub seed: u64,
    pub command: String,
    pub timestamp: String,
}

impl Manifest {
    pub fn new(command: &str, config_digest: String, seed: u64) -> Self {
        Self {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config_digest,
            seed,
            command: command.to_string(),
            timestamp: Utc::now().to_rfc3339_opts(SecondsFormat::Secs, true),
        }
    }
}

#[derive(Serialize)]
struct WithManifest<'a, T: Serialize> {
    manifest: &'a Manifest,
    #[serde(flatten)]
    body: &'a T,
}

fn open(out: Option<&Path>) -> CliResult<Box<dyn Write>> {
    Ok(match out {
        Some(path) => Box::new(io::BufWriter::new(File::create(path)?)),
        None => Box::new(io::stdout().lock()),
    })
}

/// Pretty JSON of `body` with an embedded `manifest` key.
pub fn write_json<T: Serialize>(out: Option<&Path>, manifest: &Manifest, body: &T) -> CliResult<()> {
    let mut w = open(out)?;
    serde_json::to_writer_pretty(&mut w, &WithManifest { manifest, body })?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

/// `<file>.manifest.json` next to a CSV output.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".manifest.json");
    path.with_file_name(name)
}

/// Writes a CSV table. The manifest goes to a sidecar file, or to stderr
/// when the table goes to stdout.
pub fn write_csv(out: Option<&Path>, manifest: &Manifest, header: &[&str], rows: &[Vec<String>]) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(open(out)?);
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    w.flush()?;
    let text = serde_json::to_string_pretty(manifest)?;
    match out {
        Some(path) => std::fs::write(sidecar_path(path), text + "\n")?,
        None => eprintln!("{text}"),
    }
    Ok(())
}
