//! Monte-Carlo experiment harness.
//!
//! A [`Simulation`] draws the evaluation blocks (and, lazily, a separate
//! calibration sample) once, so every policy and operating point it runs
//! sees the same channel realizations.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::accum::try_reduce;
use crate::error::{Error, Result};
use crate::fading::{sample_blocks, ChannelBlock, LinkTable, StreamKind};
use crate::relaying::{select_relay, DfPowerSplit};
use crate::scheduler::global::{
    self, calibrate_price, run_policy, DEFAULT_CALIBRATION_BLOCKS, DEFAULT_CALIBRATION_TOLERANCE,
};
use crate::scheduler::perblock::{solve_block, solve_block_near_optimal};
use crate::scheduler::{Allocation, Grant, LongTermAverages, Tally};
use crate::virtualize::{build_virtual_users, Mode, RelayMode, VirtualUser, Weights};
use crate::PowerPrice;

pub const MIN_BLOCKS: usize = 1_000;
pub const DEFAULT_BLOCKS: usize = 100_000;
pub const DEFAULT_REGION_POINTS: usize = 41;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Policy {
    /// Relay-assisted, power priced across all blocks.
    GlobalWaterfill,
    /// Relay-assisted, optimal allocation of a constant per-block budget.
    ConstantPerBlock,
    /// Relay-assisted, whole block to the best single virtual user.
    ConstantPerBlockNearOpt,
    /// Direct transmission only, power priced across all blocks.
    DtOnly,
    /// Direct transmission only, constant per-block budget.
    DtOnlyConstant,
    /// Forced relaying with equal source and relay power, constant budget.
    EqualSplitDf,
}

impl Policy {
    pub const ALL: [Policy; 6] = [
        Policy::GlobalWaterfill,
        Policy::ConstantPerBlock,
        Policy::ConstantPerBlockNearOpt,
        Policy::DtOnly,
        Policy::DtOnlyConstant,
        Policy::EqualSplitDf,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Policy::GlobalWaterfill => "global-waterfill",
            Policy::ConstantPerBlock => "constant-per-block",
            Policy::ConstantPerBlockNearOpt => "constant-per-block-near-opt",
            Policy::DtOnly => "dt-only",
            Policy::DtOnlyConstant => "dt-only-constant",
            Policy::EqualSplitDf => "equal-split-df",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|p| p.name() == name)
            .ok_or_else(|| {
                let known: Vec<_> = Self::ALL.iter().map(|p| p.name()).collect();
                Error::config(
                    "policy",
                    format!("unknown policy `{name}` (expected one of {})", known.join(", ")),
                )
            })
    }

    /// Whether power is priced across blocks (needs calibration).
    pub fn is_global(self) -> bool {
        matches!(self, Policy::GlobalWaterfill | Policy::DtOnly)
    }

    fn relay_mode(self, miso: bool) -> RelayMode {
        match self {
            Policy::DtOnly | Policy::DtOnlyConstant => RelayMode::Off,
            _ if miso => RelayMode::Miso,
            _ => RelayMode::Single,
        }
    }
}

impl std::fmt::Display for Policy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CalibrationSettings {
    pub blocks: usize,
    pub tolerance: f64,
}

impl Default for CalibrationSettings {
    fn default() -> Self {
        Self {
            blocks: DEFAULT_CALIBRATION_BLOCKS,
            tolerance: DEFAULT_CALIBRATION_TOLERANCE,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RegionSettings {
    pub snr_db: f64,
    pub points: usize,
    pub policies: Vec<Policy>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub name: String,
    pub links: LinkTable,
    pub mu: Weights,
    /// Destination SNR `P̄·γ̄_sd` of user 1, in dB.
    pub snr_db: Vec<f64>,
    pub policy: Policy,
    pub miso: bool,
    pub blocks: usize,
    pub seed: u64,
    pub calibration: CalibrationSettings,
    pub region: RegionSettings,
}

impl ExperimentConfig {
    /// Defaults for everything but the channel: unit weights split evenly,
    /// 0–30 dB in 5 dB steps, 10^5 blocks, seed 1.
    pub fn new(name: impl Into<String>, links: LinkTable) -> Self {
        let users = links.users();
        let policy = if links.relays() == 0 {
            Policy::DtOnly
        } else {
            Policy::GlobalWaterfill
        };
        Self {
            name: name.into(),
            mu: Weights::uniform(users),
            snr_db: (0..=6).map(|k| 5.0 * k as f64).collect(),
            policy,
            miso: false,
            blocks: DEFAULT_BLOCKS,
            seed: 1,
            calibration: CalibrationSettings::default(),
            region: RegionSettings {
                snr_db: 10.0,
                points: DEFAULT_REGION_POINTS,
                policies: vec![Policy::GlobalWaterfill, Policy::DtOnly],
            },
            links,
        }
    }

    pub fn users(&self) -> usize {
        self.links.users()
    }

    pub fn relays(&self) -> usize {
        self.links.relays()
    }

    pub fn validate(&self) -> Result<()> {
        if self.mu.len() != self.users() {
            return Err(Error::config(
                "mu",
                format!("{} weights for {} users", self.mu.len(), self.users()),
            ));
        }
        if self.snr_db.is_empty() || self.snr_db.iter().any(|s| !s.is_finite()) {
            return Err(Error::config("snr_db", "SNR grid must be nonempty and finite"));
        }
        if self.blocks < MIN_BLOCKS {
            return Err(Error::config(
                "blocks",
                format!("at least {MIN_BLOCKS} blocks are required, got {}", self.blocks),
            ));
        }
        if self.calibration.blocks < MIN_BLOCKS {
            return Err(Error::config(
                "calibration.blocks",
                format!("at least {MIN_BLOCKS} blocks are required"),
            ));
        }
        if !(self.calibration.tolerance > 0.0 && self.calibration.tolerance < 1.0) {
            return Err(Error::config("calibration.tolerance", "must lie in (0, 1)"));
        }
        if self.region.points < 2 {
            return Err(Error::config("region.points", "need at least two weight vectors"));
        }
        if !self.region.snr_db.is_finite() {
            return Err(Error::config("region.snr_db", "must be finite"));
        }
        for &p in std::iter::once(&self.policy).chain(&self.region.policies) {
            self.check_policy(p)?;
        }
        Ok(())
    }

    pub fn check_policy(&self, policy: Policy) -> Result<()> {
        if policy == Policy::EqualSplitDf && self.relays() == 0 {
            return Err(Error::config("policy", "equal-split-df requires at least one relay"));
        }
        Ok(())
    }

    /// Average power budget `P̄` for a destination SNR in dB.
    pub fn target_power(&self, snr_db: f64) -> f64 {
        10f64.powf(snr_db / 10.0) / self.links.sd[0].mean_gain()
    }

    /// SHA-256 of the canonical JSON echo.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex_digest(json.as_bytes())
    }
}

pub(crate) fn hex_digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Averages at one operating point. Rates reported in bits/s/Hz.
#[derive(Clone, Debug, PartialEq)]
pub struct PointResult {
    pub snr_db: f64,
    pub policy: Policy,
    pub target_power: f64,
    pub price: Option<PowerPrice>,
    pub averages: LongTermAverages,
}

impl PointResult {
    pub fn rates_bits(&self) -> Vec<f64> {
        self.averages.user_rates_bits()
    }

    /// `Σ μ_i R̄_i` in bits/s/Hz.
    pub fn weighted_rate_bits(&self) -> f64 {
        self.averages.weighted_rate / std::f64::consts::LN_2
    }
}

#[derive(Clone, Debug)]
pub struct SweepResult {
    pub config_name: String,
    pub config_hash: String,
    pub seed: u64,
    pub points: Vec<PointResult>,
    pub runtime: Duration,
}

impl SweepResult {
    pub fn for_policy(&self, policy: Policy) -> Vec<&PointResult> {
        self.points.iter().filter(|p| p.policy == policy).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RegionPoint {
    pub mu: Vec<f64>,
    pub policy: Policy,
    pub rates_bits: Vec<f64>,
    pub weighted_rate_bits: f64,
    pub avg_power: f64,
}

/// Two-user weight grid `(t, 1 − t)` for `t = 0, 1/(n−1), …, 1`.
pub fn simplex_grid(points: usize) -> Vec<Weights> {
    let n = points.max(2);
    (0..n)
        .map(|k| {
            let t = k as f64 / (n - 1) as f64;
            Weights::pair(t).expect("grid point lies on the simplex")
        })
        .collect()
}

struct Prepared {
    eval: Vec<Vec<VirtualUser>>,
    calib: OnceLock<Vec<Vec<VirtualUser>>>,
}

type PrepKey = (Vec<u64>, RelayMode);

/// Shared channel draws for a configuration.
pub struct Simulation<'c> {
    config: &'c ExperimentConfig,
    eval: Vec<ChannelBlock>,
    calib: OnceLock<Vec<ChannelBlock>>,
    prepared: Mutex<HashMap<PrepKey, Arc<Prepared>>>,
}

impl<'c> Simulation<'c> {
    pub fn new(config: &'c ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let eval = sample_blocks(&config.links, config.seed, StreamKind::Evaluation, config.blocks);
        Ok(Self {
            config,
            eval,
            calib: OnceLock::new(),
            prepared: Mutex::new(HashMap::new()),
        })
    }

    pub fn config(&self) -> &ExperimentConfig {
        self.config
    }

    pub fn blocks(&self) -> &[ChannelBlock] {
        &self.eval
    }

    fn calibration_blocks(&self) -> &[ChannelBlock] {
        self.calib.get_or_init(|| {
            sample_blocks(
                &self.config.links,
                self.config.seed,
                StreamKind::Calibration,
                self.config.calibration.blocks,
            )
        })
    }

    fn build(blocks: &[ChannelBlock], mu: &Weights, mode: RelayMode) -> Result<Vec<Vec<VirtualUser>>> {
        blocks
            .par_iter()
            .map(|b| build_virtual_users(b, mu, mode))
            .collect()
    }

    fn prepared(&self, mu: &Weights, mode: RelayMode) -> Result<Arc<Prepared>> {
        let key = (mu.as_slice().iter().map(|w| w.to_bits()).collect(), mode);
        let mut cache = self.prepared.lock().expect("cache lock");
        if let Some(p) = cache.get(&key) {
            return Ok(Arc::clone(p));
        }
        let p = Arc::new(Prepared {
            eval: Self::build(&self.eval, mu, mode)?,
            calib: OnceLock::new(),
        });
        // One weight vector per relay mode at a time: region sweeps visit
        // many weights, each used once.
        cache.retain(|k, _| k.1 != mode);
        cache.insert(key, Arc::clone(&p));
        Ok(p)
    }

    fn calibration_users<'p>(
        &self,
        prep: &'p Prepared,
        mu: &Weights,
        mode: RelayMode,
    ) -> Result<&'p [Vec<VirtualUser>]> {
        if prep.calib.get().is_none() {
            let built = Self::build(self.calibration_blocks(), mu, mode)?;
            let _ = prep.calib.set(built);
        }
        Ok(prep.calib.get().expect("initialised above"))
    }

    /// Calibrates the power price of a globally priced policy.
    pub fn calibrate(&self, policy: Policy, mu: &Weights, snr_db: f64) -> Result<PowerPrice> {
        if !policy.is_global() {
            return Err(Error::config(
                "policy",
                format!("{policy} spends a constant budget per block and has no power price"),
            ));
        }
        let mode = policy.relay_mode(self.config.miso);
        let prep = self.prepared(mu, mode)?;
        let sample = self.calibration_users(&prep, mu, mode)?;
        let target = self.config.target_power(snr_db);
        calibrate_price(sample, target, self.config.calibration.tolerance).map_err(|e| match e {
            Error::Calibration { message, .. } => Error::Calibration {
                point: format!("{snr_db} dB ({policy})"),
                message,
            },
            other => other,
        })
    }

    /// Runs one policy at one operating point over the evaluation blocks.
    pub fn run_point(&self, policy: Policy, mu: &Weights, snr_db: f64) -> Result<PointResult> {
        self.config.check_policy(policy)?;
        let users = self.config.users();
        let target = self.config.target_power(snr_db);
        let mode = policy.relay_mode(self.config.miso);
        let (averages, price) = match policy {
            Policy::GlobalWaterfill | Policy::DtOnly => {
                let price = self.calibrate(policy, mu, snr_db)?;
                let prep = self.prepared(mu, mode)?;
                (run_policy(users, &price, &prep.eval), Some(price))
            }
            Policy::ConstantPerBlock | Policy::DtOnlyConstant => {
                let prep = self.prepared(mu, mode)?;
                let avg = tally_blocks(users, prep.eval.len(), |k| {
                    let vus = &prep.eval[k];
                    let s = solve_block(vus, target)?;
                    Ok(Allocation::from_grants(vus, &s.grants))
                })?;
                (avg, None)
            }
            Policy::ConstantPerBlockNearOpt => {
                let prep = self.prepared(mu, mode)?;
                let avg = tally_blocks(users, prep.eval.len(), |k| {
                    let vus = &prep.eval[k];
                    let s = solve_block_near_optimal(vus, target)?;
                    Ok(Allocation::from_grants(vus, &s.grants))
                })?;
                (avg, None)
            }
            Policy::EqualSplitDf => {
                let avg = tally_blocks(users, self.eval.len(), |k| {
                    Ok(equal_split_allocation(&self.eval[k], mu, target))
                })?;
                (avg, None)
            }
        };
        Ok(PointResult {
            snr_db,
            policy,
            target_power: target,
            price,
            averages,
        })
    }

    /// Every SNR point of the configured grid for each listed policy.
    pub fn sweep(&self, policies: &[Policy]) -> Result<SweepResult> {
        let start = Instant::now();
        let mut points = Vec::new();
        for &policy in policies {
            for &snr in &self.config.snr_db {
                points.push(self.run_point(policy, &self.config.mu, snr)?);
            }
        }
        Ok(SweepResult {
            config_name: self.config.name.clone(),
            config_hash: self.config.hash(),
            seed: self.config.seed,
            points,
            runtime: start.elapsed(),
        })
    }

    /// One boundary point per weight vector, sorted by `μ_1`.
    pub fn rate_region(&self, mu_grid: &[Weights], policy: Policy) -> Result<Vec<RegionPoint>> {
        if self.config.users() < 2 {
            return Err(Error::config("users", "a rate region needs at least two users"));
        }
        let snr = self.config.region.snr_db;
        let mut out = mu_grid
            .iter()
            .map(|mu| {
                let r = self.run_point(policy, mu, snr)?;
                Ok(RegionPoint {
                    mu: mu.as_slice().to_vec(),
                    policy,
                    rates_bits: r.rates_bits(),
                    weighted_rate_bits: r.weighted_rate_bits(),
                    avg_power: r.averages.avg_power,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        out.sort_by(|a, b| a.mu[0].total_cmp(&b.mu[0]));
        Ok(out)
    }
}

fn tally_blocks<F>(users: usize, n: usize, f: F) -> Result<LongTermAverages>
where
    F: Fn(usize) -> Result<Allocation> + Sync,
{
    let tally = try_reduce(
        n,
        || Tally::new(users),
        |t, k| {
            t.add(&f(k)?);
            Ok::<(), Error>(())
        },
        |a, b| a.merge(b),
    )?;
    Ok(tally.finish())
}

/// Forced relaying with `P_s = P_r = P`: the rate is
/// `½ln(1 + min(γ_sr, γ_sd + γ_rd)·P)`. The relay is the max-`α` one when a
/// useful relay exists, else the one with the best equal-split rate. The
/// block goes to the user with the largest weighted equal-split rate.
pub fn equal_split_allocation(block: &ChannelBlock, mu: &Weights, p_block: f64) -> Allocation {
    let mut candidates = Vec::new();
    for (i, &w) in mu.as_slice().iter().enumerate() {
        if w <= 0.0 || block.relays() == 0 {
            continue;
        }
        let gsd = block.gamma_sd[i];
        let eff = |j: usize| block.gamma_sr[j].min(gsd + block.gamma_rd[j][i]);
        let relay = match select_relay(block, i) {
            Some(link) => link.relay_set[0],
            None => (0..block.relays())
                .fold(0, |best, j| if eff(j) > eff(best) { j } else { best }),
        };
        candidates.push((
            VirtualUser {
                actual_user: i,
                mode: Mode::Relayed,
                omega: 0.5 * w,
                eta: eff(relay),
                relay_link: None,
            },
            relay,
        ));
    }
    let Some(best) = (0..candidates.len()).reduce(|best, j| {
        if candidates[j].0.weighted_rate(p_block) > candidates[best].0.weighted_rate(p_block) {
            j
        } else {
            best
        }
    }) else {
        return Allocation::default();
    };
    let vus: Vec<VirtualUser> = candidates.iter().map(|c| c.0.clone()).collect();
    let mut a = Allocation::from_grants(
        &vus,
        &[Grant {
            vu: best,
            tau: 1.0,
            power: p_block,
        }],
    );
    a.links[0].split = Some(DfPowerSplit {
        p_source: p_block,
        p_relay_total: p_block,
        p_relay_each: vec![p_block],
        p_source_second_slot: 0.0,
    });
    a
}

/// Sweeps the configured SNR grid with the configured policy.
pub fn sweep_snr(config: &ExperimentConfig) -> Result<SweepResult> {
    Simulation::new(config)?.sweep(&[config.policy])
}

/// Transmission-mode fractions per SNR point for each listed policy.
pub fn mode_fractions(config: &ExperimentConfig, policies: &[Policy]) -> Result<SweepResult> {
    if let Some(p) = policies
        .iter()
        .find(|p| !matches!(p, Policy::GlobalWaterfill | Policy::ConstantPerBlock))
    {
        return Err(Error::config(
            "policy",
            format!("mode statistics are defined for global-waterfill and constant-per-block, not {p}"),
        ));
    }
    Simulation::new(config)?.sweep(policies)
}

/// Region boundary for the configured policy over a weight grid.
pub fn rate_region(config: &ExperimentConfig, mu_grid: &[Weights]) -> Result<Vec<RegionPoint>> {
    Simulation::new(config)?.rate_region(mu_grid, config.policy)
}

/// Policies that apply to a configuration, in canonical order.
pub fn applicable_policies(config: &ExperimentConfig) -> Vec<Policy> {
    Policy::ALL
        .into_iter()
        .filter(|p| config.check_policy(*p).is_ok())
        .collect()
}

/// All applicable policies over the same blocks.
pub fn compare_policies(config: &ExperimentConfig) -> Result<SweepResult> {
    Simulation::new(config)?.sweep(&applicable_policies(config))
}

/// Calibrated power price per SNR point of a globally priced policy.
pub fn calibrate_grid(config: &ExperimentConfig, policy: Policy) -> Result<Vec<(f64, PowerPrice)>> {
    let sim = Simulation::new(config)?;
    config
        .snr_db
        .iter()
        .map(|&snr| Ok((snr, sim.calibrate(policy, &config.mu, snr)?)))
        .collect()
}

/// Average power of a calibrated price on the evaluation blocks.
pub fn evaluation_power(sim: &Simulation<'_>, policy: Policy, mu: &Weights, price: &PowerPrice) -> Result<f64> {
    let prep = sim.prepared(mu, policy.relay_mode(sim.config.miso))?;
    Ok(global::average_power(&prep.eval, price.lambda_g))
}
