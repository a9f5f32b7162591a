//! Block-fading channel generation.
//!
//! Every link of the resource grid (source to each user, source to each
//! relay, each relay to each user) fades independently from block to block.
//! Draws are counter based: the random stream for a link in block `k` is a
//! pure function of `(master seed, purpose, link, k)`, so any subset of
//! blocks can be regenerated in any order, on any number of workers, and
//! come out bit-identical.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FadingFamily {
    Rayleigh,
    Rician,
}

/// Distribution of one link's effective power gain `γ = |h|²/N₀`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FadingSpec {
    family: FadingFamily,
    mean_gain: f64,
    k_factor: f64,
}

impl FadingSpec {
    pub fn new(family: FadingFamily, mean_gain: f64, k_factor: f64) -> Result<Self> {
        if !(mean_gain.is_finite() && mean_gain > 0.0) {
            return Err(Error::config(
                "mean",
                format!("mean gain must be positive and finite, got {mean_gain}"),
            ));
        }
        let k_factor = match family {
            FadingFamily::Rayleigh => 0.0,
            FadingFamily::Rician => {
                if !(k_factor.is_finite() && k_factor >= 0.0) {
                    return Err(Error::config(
                        "k",
                        format!("Rician K-factor must be nonnegative, got {k_factor}"),
                    ));
                }
                k_factor
            }
        };
        Ok(Self {
            family,
            mean_gain,
            k_factor,
        })
    }

    pub fn rayleigh(mean_gain: f64) -> Result<Self> {
        Self::new(FadingFamily::Rayleigh, mean_gain, 0.0)
    }

    pub fn rician(mean_gain: f64, k_factor: f64) -> Result<Self> {
        Self::new(FadingFamily::Rician, mean_gain, k_factor)
    }

    pub fn family(&self) -> FadingFamily {
        self.family
    }

    pub fn mean_gain(&self) -> f64 {
        self.mean_gain
    }

    pub fn k_factor(&self) -> f64 {
        self.k_factor
    }

    /// Maps two independent uniforms on (0, 1) to a gain draw.
    ///
    /// Rayleigh: `γ̄·(−ln u₁)`, an exponential with mean `γ̄`.
    /// Rician: `γ̄·|LOS + CN(0, 1/(κ+1))|²` with `|LOS|² = κ/(κ+1)`, where the
    /// complex Gaussian comes from Box–Muller on `(u₁, u₂)`.
    fn gain_from_uniforms(&self, u1: f64, u2: f64) -> f64 {
        let g = match self.family {
            FadingFamily::Rayleigh => -u1.ln(),
            FadingFamily::Rician => {
                let k = self.k_factor;
                let los = (k / (k + 1.0)).sqrt();
                let sigma = (0.5 / (k + 1.0)).sqrt();
                let r = (-2.0 * u1.ln()).sqrt();
                let theta = std::f64::consts::TAU * u2;
                let re = los + sigma * r * theta.cos();
                let im = sigma * r * theta.sin();
                re * re + im * im
            }
        };
        (self.mean_gain * g).max(f64::MIN_POSITIVE)
    }
}

/// Uniform on the open interval (0, 1) from the top 53 bits.
fn open_unit(bits: u64) -> f64 {
    ((bits >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// Draws one gain. Always consumes exactly two 64-bit words.
pub fn sample_gain<R: RngCore + ?Sized>(spec: &FadingSpec, rng: &mut R) -> f64 {
    let u1 = open_unit(rng.next_u64());
    let u2 = open_unit(rng.next_u64());
    spec.gain_from_uniforms(u1, u2)
}

/// Fading distributions for every link of an `M`-user, `L`-relay grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinkTable {
    /// Source to user `i`.
    pub sd: Vec<FadingSpec>,
    /// Source to relay `j`.
    pub sr: Vec<FadingSpec>,
    /// Relay `j` to user `i`, indexed `[j][i]`.
    pub rd: Vec<Vec<FadingSpec>>,
}

impl LinkTable {
    pub fn new(sd: Vec<FadingSpec>, sr: Vec<FadingSpec>, rd: Vec<Vec<FadingSpec>>) -> Result<Self> {
        if sd.is_empty() {
            return Err(Error::config("fading.sd", "at least one user is required"));
        }
        if rd.len() != sr.len() {
            return Err(Error::config(
                "fading.rd",
                format!(
                    "missing link spec: {} relays in fading.sr but {} rows in fading.rd",
                    sr.len(),
                    rd.len()
                ),
            ));
        }
        for (j, row) in rd.iter().enumerate() {
            if row.len() != sd.len() {
                return Err(Error::config(
                    format!("fading.rd[{j}]"),
                    format!(
                        "missing link spec: expected {} relay-to-user entries, got {}",
                        sd.len(),
                        row.len()
                    ),
                ));
            }
        }
        Ok(Self { sd, sr, rd })
    }

    /// Single user, no relays.
    pub fn direct_only(sd: FadingSpec) -> Self {
        Self {
            sd: vec![sd],
            sr: Vec::new(),
            rd: Vec::new(),
        }
    }

    pub fn users(&self) -> usize {
        self.sd.len()
    }

    pub fn relays(&self) -> usize {
        self.sr.len()
    }

    pub fn link_count(&self) -> usize {
        self.users() * (self.relays() + 1) + self.relays()
    }
}

/// Which independent family of streams a block belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum StreamKind {
    Evaluation,
    Calibration,
}

impl StreamKind {
    fn tag(self) -> u64 {
        match self {
            StreamKind::Evaluation => 0,
            StreamKind::Calibration => 1,
        }
    }
}

/// 64-bit words reserved per link per block (one ChaCha block).
const WORDS_PER_DRAW: u128 = 16;

fn link_rng(seed: u64, kind: StreamKind, link: usize, block_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((kind.tag() << 40) | link as u64);
    rng.set_word_pos(block_index as u128 * WORDS_PER_DRAW);
    rng
}

/// One resource unit's gains.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelBlock {
    pub block_index: u64,
    pub gamma_sd: Vec<f64>,
    pub gamma_sr: Vec<f64>,
    /// Indexed `[relay][user]`.
    pub gamma_rd: Vec<Vec<f64>>,
}

impl ChannelBlock {
    /// Builds a block from explicit gains, checking dimensions and positivity.
    pub fn from_gains(
        gamma_sd: Vec<f64>,
        gamma_sr: Vec<f64>,
        gamma_rd: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let ok = |g: &f64| g.is_finite() && *g > 0.0;
        if gamma_sd.is_empty() || !gamma_sd.iter().all(ok) || !gamma_sr.iter().all(ok) {
            return Err(Error::domain("channel gains must be strictly positive"));
        }
        if gamma_rd.len() != gamma_sr.len()
            || gamma_rd
                .iter()
                .any(|row| row.len() != gamma_sd.len() || !row.iter().all(ok))
        {
            return Err(Error::domain(
                "relay-to-user gains must be a positive relays x users matrix",
            ));
        }
        Ok(Self {
            block_index: 0,
            gamma_sd,
            gamma_sr,
            gamma_rd,
        })
    }

    pub fn users(&self) -> usize {
        self.gamma_sd.len()
    }

    pub fn relays(&self) -> usize {
        self.gamma_sr.len()
    }
}

/// Draws block `k` of the given stream family. Deterministic in `(seed, kind, k)`.
pub fn sample_block(table: &LinkTable, seed: u64, kind: StreamKind, k: u64) -> ChannelBlock {
    let m = table.users();
    let l = table.relays();
    let draw = |link: usize, spec: &FadingSpec| {
        let mut rng = link_rng(seed, kind, link, k);
        sample_gain(spec, &mut rng)
    };
    let gamma_sd = table.sd.iter().enumerate().map(|(i, s)| draw(i, s)).collect();
    let gamma_sr = table
        .sr
        .iter()
        .enumerate()
        .map(|(j, s)| draw(m + j, s))
        .collect();
    let gamma_rd = table
        .rd
        .iter()
        .enumerate()
        .map(|(j, row)| {
            row.iter()
                .enumerate()
                .map(|(i, s)| draw(m + l + j * m + i, s))
                .collect()
        })
        .collect();
    ChannelBlock {
        block_index: k,
        gamma_sd,
        gamma_sr,
        gamma_rd,
    }
}

/// Draws blocks `0..n` of a stream family, in parallel.
pub fn sample_blocks(table: &LinkTable, seed: u64, kind: StreamKind, n: usize) -> Vec<ChannelBlock> {
    use rayon::prelude::*;
    (0..n as u64)
        .into_par_iter()
        .map(|k| sample_block(table, seed, kind, k))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn draws(spec: &FadingSpec, n: usize, stream: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        rng.set_stream(stream);
        (0..n).map(|_| sample_gain(spec, &mut rng)).collect()
    }

    fn mean(v: &[f64]) -> f64 {
        v.iter().sum::<f64>() / v.len() as f64
    }

    #[test]
    fn rayleigh_mean_converges() {
        let spec = FadingSpec::rayleigh(1.0).unwrap();
        let v = draws(&spec, 1_000_000, 0);
        assert!((mean(&v) - 1.0).abs() < 0.01);
    }

    #[test]
    fn rician_mean_converges() {
        for &(mean_gain, k) in &[(10.0, 10.0), (2.0, 2.0), (5.0, 5.0), (3.0, 0.5)] {
            let spec = FadingSpec::rician(mean_gain, k).unwrap();
            let v = draws(&spec, 1_000_000, 1);
            assert!(
                (mean(&v) / mean_gain - 1.0).abs() < 0.01,
                "mean {} for {mean_gain}/{k}",
                mean(&v)
            );
        }
    }

    #[test]
    fn rayleigh_tail_matches_exponential_cdf() {
        let spec = FadingSpec::rayleigh(5.0).unwrap();
        let v = draws(&spec, 1_000_000, 2);
        let tail = v.iter().filter(|&&g| g > 5.0).count() as f64 / v.len() as f64;
        assert!((tail - (-1.0f64).exp()).abs() < 0.01, "tail {tail}");
    }

    #[test]
    fn rician_with_zero_k_matches_rayleigh() {
        // Two-sample Kolmogorov–Smirnov at α = 0.01.
        let n = 100_000;
        let mut a = draws(&FadingSpec::rician(1.0, 0.0).unwrap(), n, 3);
        let mut b = draws(&FadingSpec::rayleigh(1.0).unwrap(), n, 4);
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
        while i < n && j < n {
            if a[i] <= b[j] {
                i += 1;
            } else {
                j += 1;
            }
            d = d.max((i as f64 - j as f64).abs() / n as f64);
        }
        let critical = 1.628 * (2.0 / n as f64).sqrt();
        assert!(d < critical, "KS statistic {d} >= {critical}");
    }

    #[test]
    fn rayleigh_ignores_k() {
        let spec = FadingSpec::new(FadingFamily::Rayleigh, 1.0, 4.0).unwrap();
        assert_eq!(spec.k_factor(), 0.0);
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(FadingSpec::rayleigh(0.0).is_err());
        assert!(FadingSpec::rayleigh(f64::NAN).is_err());
        assert!(FadingSpec::rician(1.0, -1.0).is_err());
    }

    #[test]
    fn degenerate_grid_has_one_entry() {
        let table = LinkTable::direct_only(FadingSpec::rayleigh(1.0).unwrap());
        let b = sample_block(&table, 1, StreamKind::Evaluation, 0);
        assert_eq!(b.gamma_sd.len(), 1);
        assert!(b.gamma_sr.is_empty() && b.gamma_rd.is_empty());
        assert!(b.gamma_sd[0] > 0.0);
    }

    #[test]
    fn missing_link_spec_is_config_error() {
        let s = FadingSpec::rayleigh(1.0).unwrap();
        let err = LinkTable::new(vec![s, s], vec![s], vec![vec![s]]).unwrap_err();
        assert!(matches!(err, Error::Config { .. }));
        assert!(LinkTable::new(vec![s], vec![s], vec![]).is_err());
    }

    #[test]
    fn blocks_are_reproducible_and_order_independent() {
        let s = FadingSpec::rician(3.0, 5.0).unwrap();
        let table = LinkTable::new(vec![s, s], vec![s], vec![vec![s, s]]).unwrap();
        let forward: Vec<_> = (0..50)
            .map(|k| sample_block(&table, 42, StreamKind::Evaluation, k))
            .collect();
        let backward: Vec<_> = (0..50)
            .rev()
            .map(|k| sample_block(&table, 42, StreamKind::Evaluation, k))
            .collect();
        for (a, b) in forward.iter().zip(backward.iter().rev()) {
            assert_eq!(a, b);
        }
        let other = sample_block(&table, 42, StreamKind::Calibration, 0);
        assert_ne!(other, forward[0]);
    }
}
