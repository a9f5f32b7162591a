//! Virtual-user transform.
//!
//! Each actual user `i` with weight `μ_i` becomes a direct virtual user
//! `(ω = μ_i, η = γ_sd)` and, when a useful relay exists, a relayed one
//! `(ω = μ_i/2, η = 2γ_sd·α)`. Both have weighted rate `ω·ln(1 + η·P)`,
//! which turns the relay problem into a no-relay broadcast problem.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fading::ChannelBlock;
use crate::relaying::{select_miso_set, select_relay, DfLink};

/// Tolerance on `Σμ = 1`.
pub const SIMPLEX_TOLERANCE: f64 = 1e-9;

/// Operating-point weights on the probability simplex.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Weights(Vec<f64>);

impl Weights {
    pub fn new(mu: Vec<f64>) -> Result<Self> {
        if mu.is_empty() {
            return Err(Error::config("mu", "weight vector is empty"));
        }
        if let Some(bad) = mu.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
            return Err(Error::config("mu", format!("weights must be nonnegative, got {bad}")));
        }
        let sum: f64 = mu.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOLERANCE {
            return Err(Error::config("mu", format!("weights must sum to 1, got {sum}")));
        }
        Ok(Self(mu))
    }

    /// Equal weights `1/M`.
    pub fn uniform(users: usize) -> Self {
        Self(vec![1.0 / users as f64; users])
    }

    /// `(t, 1 − t)` for two users.
    pub fn pair(t: f64) -> Result<Self> {
        Self::new(vec![t, 1.0 - t])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    Direct,
    Relayed,
}

/// How relayed virtual users are formed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RelayMode {
    /// Direct transmission only.
    Off,
    /// Best single relay per user.
    Single,
    /// Best coherent relay set per user.
    Miso,
}

#[derive(Clone, Debug, PartialEq)]
pub struct VirtualUser {
    pub actual_user: usize,
    pub mode: Mode,
    pub omega: f64,
    pub eta: f64,
    pub relay_link: Option<DfLink>,
}

impl VirtualUser {
    /// Degrees-of-freedom factor: 1 for direct, ½ for relayed.
    pub fn dof(&self) -> f64 {
        match self.mode {
            Mode::Direct => 1.0,
            Mode::Relayed => 0.5,
        }
    }

    /// Unweighted rate of the actual user in nats, `dof·ln(1 + η·p)`.
    pub fn user_rate(&self, p: f64) -> f64 {
        self.dof() * (self.eta * p).ln_1p()
    }

    /// Weighted rate `ω·ln(1 + η·p)`.
    pub fn weighted_rate(&self, p: f64) -> f64 {
        self.omega * (self.eta * p).ln_1p()
    }
}

/// `f(p) = ω·ln(1 + η·p)` in nats.
pub fn rate_of(vu: &VirtualUser, p: f64) -> f64 {
    vu.weighted_rate(p)
}

/// Virtual users of one block, ordered by (user, direct before relayed).
/// Users with zero weight contribute nothing and are skipped.
pub fn build_virtual_users(
    block: &ChannelBlock,
    mu: &Weights,
    relay_mode: RelayMode,
) -> Result<Vec<VirtualUser>> {
    if mu.len() != block.users() {
        return Err(Error::config(
            "mu",
            format!("{} weights for {} users", mu.len(), block.users()),
        ));
    }
    let mut out = Vec::with_capacity(2 * block.users());
    for (i, &w) in mu.as_slice().iter().enumerate() {
        if w <= 0.0 {
            continue;
        }
        let gsd = block.gamma_sd[i];
        out.push(VirtualUser {
            actual_user: i,
            mode: Mode::Direct,
            omega: w,
            eta: gsd,
            relay_link: None,
        });
        let link = match relay_mode {
            RelayMode::Off => None,
            RelayMode::Single => select_relay(block, i),
            RelayMode::Miso => select_miso_set(block, i),
        };
        if let Some(link) = link {
            out.push(VirtualUser {
                actual_user: i,
                mode: Mode::Relayed,
                omega: 0.5 * w,
                eta: 2.0 * gsd * link.alpha,
                relay_link: Some(link),
            });
        }
    }
    Ok(out)
}
