//! CSV tables and the run manifest.
//!
//! Numbers are written as `{:.11e}` (12 significant digits, no locale),
//! so a fixed seed reproduces every file byte for byte.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiments::{hex_digest, ExperimentConfig, Policy, RegionPoint, SweepResult};
use crate::scheduler::global::PowerPrice;

pub const MANIFEST_NAME: &str = "manifest.json";
pub const SNR_DEFINITION: &str = "average power times mean source-destination gain of user 1, dB";
pub const RATE_UNITS: &str = "bits/s/Hz";

pub fn fmt_num(x: f64) -> String {
    format!("{x:.11e}")
}

#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new(header: Vec<String>) -> Self {
        Self {
            header,
            rows: Vec::new(),
        }
    }

    pub fn to_csv(&self) -> String {
        let mut s = self.header.join(",");
        s.push('\n');
        for r in &self.rows {
            s.push_str(&r.join(","));
            s.push('\n');
        }
        s
    }
}

fn user_columns(users: usize, f: impl Fn(usize) -> String) -> Vec<String> {
    (1..=users).map(f).collect()
}

/// `snr_db, policy, rate_bps_hz_user{i}…, power_avg, frac_df, frac_dt, frac_none`.
pub fn sweep_table(result: &SweepResult, users: usize) -> Table {
    let mut header = vec!["snr_db".to_string(), "policy".to_string()];
    header.extend(user_columns(users, |i| format!("rate_bps_hz_user{i}")));
    header.extend(["power_avg", "frac_df", "frac_dt", "frac_none"].map(String::from));
    let mut t = Table::new(header);
    for p in &result.points {
        let a = &p.averages;
        let mut row = vec![fmt_num(p.snr_db), p.policy.name().to_string()];
        row.extend(p.rates_bits().into_iter().map(fmt_num));
        row.extend([a.avg_power, a.frac_df, a.frac_dt, a.frac_none].map(fmt_num));
        t.rows.push(row);
    }
    t
}

/// `snr_db, policy, frac_df, frac_dt, frac_none`.
pub fn modes_table(result: &SweepResult) -> Table {
    let mut t = Table::new(
        ["snr_db", "policy", "frac_df", "frac_dt", "frac_none"]
            .map(String::from)
            .to_vec(),
    );
    for p in &result.points {
        let a = &p.averages;
        let mut row = vec![fmt_num(p.snr_db), p.policy.name().to_string()];
        row.extend([a.frac_df, a.frac_dt, a.frac_none].map(fmt_num));
        t.rows.push(row);
    }
    t
}

/// `mu1…mu{M−1}, rate1_bps_hz…, policy`. The last weight is implied.
pub fn region_table(points: &[RegionPoint], users: usize) -> Table {
    let mut header = user_columns(users - 1, |i| format!("mu{i}"));
    header.extend(user_columns(users, |i| format!("rate{i}_bps_hz")));
    header.push("policy".into());
    let mut t = Table::new(header);
    for p in points {
        let mut row: Vec<String> = p.mu[..users - 1].iter().copied().map(fmt_num).collect();
        row.extend(p.rates_bits.iter().copied().map(fmt_num));
        row.push(p.policy.name().into());
        t.rows.push(row);
    }
    t
}

/// `snr_db, policy, weighted_rate_bps_hz, rate_bps_hz_user{i}…, power_avg, target_power`.
pub fn compare_table(result: &SweepResult, users: usize) -> Table {
    let mut header = ["snr_db", "policy", "weighted_rate_bps_hz"].map(String::from).to_vec();
    header.extend(user_columns(users, |i| format!("rate_bps_hz_user{i}")));
    header.extend(["power_avg", "target_power"].map(String::from));
    let mut t = Table::new(header);
    for p in &result.points {
        let mut row = vec![
            fmt_num(p.snr_db),
            p.policy.name().to_string(),
            fmt_num(p.weighted_rate_bits()),
        ];
        row.extend(p.rates_bits().into_iter().map(fmt_num));
        row.extend([p.averages.avg_power, p.target_power].map(fmt_num));
        t.rows.push(row);
    }
    t
}

#[derive(Clone, Debug, PartialEq)]
pub struct CalibrationRow {
    pub snr_db: f64,
    pub policy: Policy,
    pub price: PowerPrice,
    /// Average power of the calibrated price on the evaluation blocks.
    pub evaluation_power: f64,
}

/// `snr_db, policy, target_power, lambda_g, calibration_power, evaluation_power, evaluation_rel_error, iterations`.
pub fn calibration_table(rows: &[CalibrationRow]) -> Table {
    let mut t = Table::new(
        [
            "snr_db",
            "policy",
            "target_power",
            "lambda_g",
            "calibration_power",
            "evaluation_power",
            "evaluation_rel_error",
            "iterations",
        ]
        .map(String::from)
        .to_vec(),
    );
    for r in rows {
        let target = r.price.target_avg_power;
        t.rows.push(vec![
            fmt_num(r.snr_db),
            r.policy.name().to_string(),
            fmt_num(target),
            fmt_num(r.price.lambda_g),
            fmt_num(r.price.achieved_avg_power),
            fmt_num(r.evaluation_power),
            fmt_num((r.evaluation_power - target) / target),
            r.price.iterations.to_string(),
        ]);
    }
    t
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutputFile {
    pub name: String,
    /// Data rows, header excluded.
    pub rows: usize,
    pub sha256: String,
}

/// Record of one CLI run. Carries no timing so reruns reproduce it exactly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub subcommand: String,
    pub seed: u64,
    pub config_hash: String,
    pub snr_definition: String,
    pub rate_units: String,
    pub config: serde_json::Value,
    pub files: Vec<OutputFile>,
}

/// Writes each table as `<name>`, then the manifest, then verifies it.
pub fn write_outputs(
    dir: &Path,
    subcommand: &str,
    config: &ExperimentConfig,
    tables: &[(&str, Table)],
) -> Result<RunManifest> {
    fs::create_dir_all(dir)?;
    let mut files = Vec::new();
    for (name, table) in tables {
        let csv = table.to_csv();
        fs::write(dir.join(name), csv.as_bytes())?;
        files.push(OutputFile {
            name: name.to_string(),
            rows: table.rows.len(),
            sha256: hex_digest(csv.as_bytes()),
        });
    }
    let manifest = RunManifest {
        tool: "relay-alloc".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        subcommand: subcommand.into(),
        seed: config.seed,
        config_hash: config.hash(),
        snr_definition: SNR_DEFINITION.into(),
        rate_units: RATE_UNITS.into(),
        config: serde_json::to_value(config).map_err(|e| Error::Manifest {
            path: MANIFEST_NAME.into(),
            message: e.to_string(),
        })?,
        files,
    };
    let mut json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    json.push('\n');
    fs::write(dir.join(MANIFEST_NAME), json)?;
    verify_manifest(dir)
}

/// Re-reads the manifest in `dir` and checks every listed file.
pub fn verify_manifest(dir: &Path) -> Result<RunManifest> {
    let path = dir.join(MANIFEST_NAME);
    let manifest_err = |p: &Path, message: String| Error::Manifest {
        path: p.display().to_string(),
        message,
    };
    let text = fs::read_to_string(&path)?;
    let manifest: RunManifest =
        serde_json::from_str(&text).map_err(|e| manifest_err(&path, e.to_string()))?;
    for f in &manifest.files {
        let p = dir.join(&f.name);
        let bytes = fs::read(&p)?;
        let digest = hex_digest(&bytes);
        if digest != f.sha256 {
            return Err(manifest_err(&p, format!("checksum {digest} != recorded {}", f.sha256)));
        }
        let rows = bytes.iter().filter(|&&b| b == b'\n').count().saturating_sub(1);
        if rows != f.rows {
            return Err(manifest_err(&p, format!("{rows} rows, manifest says {}", f.rows)));
        }
    }
    Ok(manifest)
}
