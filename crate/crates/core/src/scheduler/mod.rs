//! Scheduling of virtual users onto channel blocks.
//!
//! [`global`] prices power across all blocks (water-filling against a
//! single power price). [`perblock`] spends a fixed budget in every block.

pub mod global;
pub mod perblock;

use crate::accum::CompensatedSum;
use crate::relaying::{split_power, DfPowerSplit};
use crate::virtualize::{Mode, VirtualUser};

/// One virtual user's share of a block: channel ratio `tau` at power `power`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grant {
    pub vu: usize,
    pub tau: f64,
    pub power: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScheduledLink {
    pub vu: usize,
    pub actual_user: usize,
    pub mode: Mode,
    pub tau: f64,
    pub power: f64,
    /// Unweighted rate of the actual user on this link, nats.
    pub rate: f64,
    /// Source/relay split, present for relayed links.
    pub split: Option<DfPowerSplit>,
}

/// Resolved decision for one block. An empty `links` means no transmission.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Allocation {
    pub links: Vec<ScheduledLink>,
    /// `Σ τ·ω·ln(1 + η·P)`, nats.
    pub weighted_rate: f64,
}

impl Allocation {
    pub fn from_grants(vus: &[VirtualUser], grants: &[Grant]) -> Self {
        let mut weighted_rate = 0.0;
        let links = grants
            .iter()
            .map(|g| {
                let vu = &vus[g.vu];
                weighted_rate += g.tau * vu.weighted_rate(g.power);
                let split = vu
                    .relay_link
                    .as_ref()
                    .and_then(|link| split_power(link, g.power).ok());
                ScheduledLink {
                    vu: g.vu,
                    actual_user: vu.actual_user,
                    mode: vu.mode,
                    tau: g.tau,
                    power: g.power,
                    rate: vu.user_rate(g.power),
                    split,
                }
            })
            .collect();
        Self {
            links,
            weighted_rate,
        }
    }

    /// Block power `Σ τ·P`.
    pub fn power(&self) -> f64 {
        self.links.iter().map(|l| l.tau * l.power).sum()
    }

    pub fn user_rates(&self, users: usize) -> Vec<f64> {
        let mut r = vec![0.0; users];
        for l in &self.links {
            r[l.actual_user] += l.tau * l.rate;
        }
        r
    }

    /// Channel share carried in `(relayed, direct)` mode.
    pub fn mode_shares(&self) -> (f64, f64) {
        self.links.iter().fold((0.0, 0.0), |(df, dt), l| match l.mode {
            Mode::Relayed => (df + l.tau, dt),
            Mode::Direct => (df, dt + l.tau),
        })
    }
}

/// Long-term averages over a run of blocks. Rates in nats.
#[derive(Clone, Debug, PartialEq)]
pub struct LongTermAverages {
    pub blocks: usize,
    pub user_rates: Vec<f64>,
    pub weighted_rate: f64,
    pub avg_power: f64,
    pub frac_df: f64,
    pub frac_dt: f64,
    pub frac_none: f64,
}

impl LongTermAverages {
    pub fn user_rates_bits(&self) -> Vec<f64> {
        self.user_rates.iter().map(|r| r / std::f64::consts::LN_2).collect()
    }
}

const DYADIC: f64 = (1u64 << 50) as f64;

/// Running sums over blocks; merged chunk-wise by [`crate::accum::try_reduce`].
#[derive(Clone, Debug)]
pub struct Tally {
    blocks: usize,
    user_rates: Vec<CompensatedSum>,
    weighted_rate: CompensatedSum,
    power: CompensatedSum,
    df: CompensatedSum,
    idle: usize,
}

impl Tally {
    pub fn new(users: usize) -> Self {
        Self {
            blocks: 0,
            user_rates: vec![CompensatedSum::default(); users],
            weighted_rate: CompensatedSum::default(),
            power: CompensatedSum::default(),
            df: CompensatedSum::default(),
            idle: 0,
        }
    }

    pub fn add(&mut self, a: &Allocation) {
        self.blocks += 1;
        if a.links.is_empty() {
            self.idle += 1;
        }
        for l in &a.links {
            self.user_rates[l.actual_user].add(l.tau * l.rate);
            self.power.add(l.tau * l.power);
            if l.mode == Mode::Relayed {
                self.df.add(l.tau);
            }
        }
        self.weighted_rate.add(a.weighted_rate);
    }

    pub fn merge(&mut self, other: Tally) {
        self.blocks += other.blocks;
        for (a, b) in self.user_rates.iter_mut().zip(&other.user_rates) {
            a.merge(b);
        }
        self.weighted_rate.merge(&other.weighted_rate);
        self.power.merge(&other.power);
        self.df.merge(&other.df);
        self.idle += other.idle;
    }

    pub fn finish(&self) -> LongTermAverages {
        let n = self.blocks.max(1) as f64;
        // Fractions are snapped to multiples of 2^-50, so any sum of them in
        // [0, 1] is exact and `df + dt + none == 1` holds in every order.
        // Scheduled blocks always fill the channel; direct takes the rest.
        let dyadic = |x: f64| (x * DYADIC).round() / DYADIC;
        let frac_df = dyadic(self.df.value() / n).min(1.0);
        let frac_none = dyadic(self.idle as f64 / n).min(1.0 - frac_df);
        let frac_dt = 1.0 - frac_df - frac_none;
        LongTermAverages {
            blocks: self.blocks,
            user_rates: self.user_rates.iter().map(|s| s.value() / n).collect(),
            weighted_rate: self.weighted_rate.value() / n,
            avg_power: self.power.value() / n,
            frac_df,
            frac_dt,
            frac_none,
        }
    }
}
