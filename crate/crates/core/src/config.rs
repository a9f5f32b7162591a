//! TOML experiment configuration.
//!
//! ```toml
//! name = "two-user"
//! users = 2
//! relays = 1
//! mu = [0.5, 0.5]
//! snr_db = [0, 10, 20]           # or { start = 0, stop = 30, step = 5 }
//! policy = "global-waterfill"
//! miso = false
//! blocks = 100000
//! seed = 1
//!
//! [calibration]
//! blocks = 100000
//! tolerance = 1e-5
//!
//! [region]
//! snr_db = 10
//! points = 41
//! policies = ["global-waterfill", "dt-only"]
//!
//! [fading]
//! sd = [{ family = "rayleigh", mean = 10 }, { family = "rayleigh", mean = 1 }]
//! sr = [{ family = "rician", mean = 10, k = 10 }]
//! rd = [[{ family = "rician", mean = 2, k = 2 }, { family = "rician", mean = 5, k = 5 }]]
//! ```
//!
//! `rd` is indexed `[relay][user]`. Every key except `[fading]` has a default.

use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::experiments::{CalibrationSettings, ExperimentConfig, Policy};
use crate::fading::{FadingFamily, FadingSpec, LinkTable};
use crate::virtualize::Weights;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    name: Option<String>,
    users: Option<usize>,
    relays: Option<usize>,
    mu: Option<Vec<f64>>,
    snr_db: Option<RawGrid>,
    policy: Option<String>,
    miso: Option<bool>,
    blocks: Option<usize>,
    seed: Option<u64>,
    calibration: Option<RawCalibration>,
    region: Option<RawRegion>,
    fading: Option<RawFading>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum RawGrid {
    List(Vec<f64>),
    Range { start: f64, stop: f64, step: f64 },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCalibration {
    blocks: Option<usize>,
    tolerance: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRegion {
    snr_db: Option<f64>,
    points: Option<usize>,
    policies: Option<Vec<String>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFading {
    sd: Option<Vec<RawSpec>>,
    #[serde(default)]
    sr: Vec<RawSpec>,
    #[serde(default)]
    rd: Vec<Vec<RawSpec>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpec {
    family: FadingFamily,
    mean: f64,
    #[serde(default)]
    k: f64,
}

impl RawSpec {
    fn resolve(&self, field: &str) -> Result<FadingSpec> {
        FadingSpec::new(self.family, self.mean, self.k).map_err(|e| match e {
            Error::Config { message, .. } => Error::config(field, message),
            other => other,
        })
    }
}

fn expand_grid(grid: RawGrid) -> Result<Vec<f64>> {
    match grid {
        RawGrid::List(v) => Ok(v),
        RawGrid::Range { start, stop, step } => {
            if step.is_nan() || step <= 0.0 || stop < start || !start.is_finite() || !stop.is_finite() {
                return Err(Error::config("snr_db", "range needs finite start <= stop and step > 0"));
            }
            let n = ((stop - start) / step + 1e-9).floor() as usize;
            Ok((0..=n).map(|k| start + k as f64 * step).collect())
        }
    }
}

/// Parses and validates a configuration from TOML text. `origin` names the
/// source in parse diagnostics.
pub fn parse_config_str(text: &str, origin: &str) -> Result<ExperimentConfig> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| Error::Parse {
        path: origin.to_string(),
        message: e.to_string().trim_end().to_string(),
    })?;

    let fading = raw
        .fading
        .ok_or_else(|| Error::config("fading", "missing [fading] section"))?;
    let sd_raw = fading
        .sd
        .ok_or_else(|| Error::config("fading.sd", "missing link spec"))?;
    let users = raw.users.unwrap_or(sd_raw.len());
    let relays = raw.relays.unwrap_or(fading.sr.len());
    if sd_raw.len() != users {
        return Err(Error::config(
            "fading.sd",
            format!("missing link spec: {} entries for {users} users", sd_raw.len()),
        ));
    }
    if fading.sr.len() != relays {
        return Err(Error::config(
            "fading.sr",
            format!("missing link spec: {} entries for {relays} relays", fading.sr.len()),
        ));
    }
    if fading.rd.len() != relays {
        return Err(Error::config(
            "fading.rd",
            format!("missing link spec: {} rows for {relays} relays", fading.rd.len()),
        ));
    }
    let sd = sd_raw
        .iter()
        .enumerate()
        .map(|(i, s)| s.resolve(&format!("fading.sd[{i}]")))
        .collect::<Result<Vec<_>>>()?;
    let sr = fading
        .sr
        .iter()
        .enumerate()
        .map(|(j, s)| s.resolve(&format!("fading.sr[{j}]")))
        .collect::<Result<Vec<_>>>()?;
    let rd = fading
        .rd
        .iter()
        .enumerate()
        .map(|(j, row)| {
            if row.len() != users {
                return Err(Error::config(
                    format!("fading.rd[{j}]"),
                    format!("missing link spec: {} entries for {users} users", row.len()),
                ));
            }
            row.iter()
                .enumerate()
                .map(|(i, s)| s.resolve(&format!("fading.rd[{j}][{i}]")))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let links = LinkTable::new(sd, sr, rd)?;

    let mut config = ExperimentConfig::new(raw.name.unwrap_or_else(|| "experiment".into()), links);
    if let Some(mu) = raw.mu {
        config.mu = Weights::new(mu)?;
    }
    if let Some(grid) = raw.snr_db {
        config.snr_db = expand_grid(grid)?;
    }
    if let Some(p) = raw.policy {
        config.policy = Policy::from_name(&p)?;
    }
    config.miso = raw.miso.unwrap_or(false);
    if let Some(b) = raw.blocks {
        config.blocks = b;
    }
    if let Some(s) = raw.seed {
        config.seed = s;
    }
    if let Some(c) = raw.calibration {
        let d = CalibrationSettings::default();
        config.calibration = CalibrationSettings {
            blocks: c.blocks.unwrap_or(d.blocks),
            tolerance: c.tolerance.unwrap_or(d.tolerance),
        };
    }
    if let Some(r) = raw.region {
        if let Some(s) = r.snr_db {
            config.region.snr_db = s;
        }
        if let Some(n) = r.points {
            config.region.points = n;
        }
        if let Some(ps) = r.policies {
            config.region.policies = ps
                .iter()
                .map(|p| Policy::from_name(p))
                .collect::<Result<_>>()
                .map_err(|e| match e {
                    Error::Config { message, .. } => Error::config("region.policies", message),
                    other => other,
                })?;
        }
    }
    config.validate()?;
    Ok(config)
}

/// Reads a configuration file. A path without extension that does not
/// exist is retried with `.toml` appended.
pub fn parse_config(path: &Path) -> Result<ExperimentConfig> {
    let resolved = if !path.exists() && path.extension().is_none() {
        path.with_extension("toml")
    } else {
        path.to_path_buf()
    };
    let text = std::fs::read_to_string(&resolved).map_err(|e| Error::Parse {
        path: resolved.display().to_string(),
        message: e.to_string(),
    })?;
    parse_config_str(&text, &resolved.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn field_of(e: Error) -> String {
        match e {
            Error::Config { field, .. } => field,
            other => panic!("expected a configuration error, got {other}"),
        }
    }

    #[test]
    fn minimal_direct_config() {
        let c = parse_config_str(
            "[fading]\nsd = [{ family = \"rayleigh\", mean = 1 }]\n",
            "inline",
        )
        .unwrap();
        assert_eq!((c.users(), c.relays()), (1, 0));
        assert_eq!(c.policy, Policy::DtOnly);
        assert_eq!(c.snr_db, vec![0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0]);
        assert_eq!(c.mu.as_slice(), &[1.0]);
    }

    #[test]
    fn mu_off_simplex_names_mu() {
        let text = "mu = [0.45, 0.45]\n[fading]\nsd = [{ family = \"rayleigh\", mean = 1 }, { family = \"rayleigh\", mean = 1 }]\n";
        assert_eq!(field_of(parse_config_str(text, "inline").unwrap_err()), "mu");
    }

    #[test]
    fn unknown_key_reports_line() {
        let text = "name = \"x\"\nbogus = 3\n[fading]\nsd = [{ family = \"rayleigh\", mean = 1 }]\n";
        let msg = parse_config_str(text, "inline").unwrap_err().to_string();
        assert!(msg.contains("bogus"), "{msg}");
        assert!(msg.contains("line 2"), "{msg}");
    }

    #[test]
    fn missing_relay_link() {
        let text = "[fading]\nsd = [{ family = \"rayleigh\", mean = 1 }]\nsr = [{ family = \"rician\", mean = 5, k = 10 }]\n";
        let e = parse_config_str(text, "inline").unwrap_err();
        assert!(e.to_string().contains("missing link spec"));
        assert_eq!(field_of(e), "fading.rd");
    }

    #[test]
    fn range_grid() {
        let text = "snr_db = { start = 0, stop = 30, step = 10 }\n[fading]\nsd = [{ family = \"rayleigh\", mean = 1 }]\n";
        let c = parse_config_str(text, "inline").unwrap();
        assert_eq!(c.snr_db, vec![0.0, 10.0, 20.0, 30.0]);
    }

    #[test]
    fn too_few_blocks() {
        let text = "blocks = 10\n[fading]\nsd = [{ family = \"rayleigh\", mean = 1 }]\n";
        assert_eq!(field_of(parse_config_str(text, "inline").unwrap_err()), "blocks");
    }
}
