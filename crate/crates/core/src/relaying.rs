//! Regenerative decode-and-forward link mathematics.
//!
//! A DF link sends the codeword from the source in a first half slot (the
//! relay must decode it) and repeats it from the relay in the second half
//! slot (the destination combines both receptions). With a total link
//! budget `P` split as `½P_s + ½P_r`, the achievable rate is
//!
//! ```text
//! min{ ½ln(1 + γ_sr·P_s), ½ln(1 + γ_sd·P_s + γ_rd·P_r) }
//! ```
//!
//! Equalising the two terms gives the closed form `½ln(1 + 2αγ_sd·P)` with
//! the power gain `α = γ́_sr·γ́_rd / (γ́_sr + γ́_rd − 1)`, where `γ́` are the
//! relay gains normalised by `γ_sd`.
//!
//! All rates here are in nats.

use crate::error::{Error, Result};
use crate::fading::ChannelBlock;

/// True when relaying can beat direct transmission for some power.
/// Equality on either link is classified as not useful.
pub fn is_useful(gamma_sd: f64, gamma_sr: f64, gamma_rd: f64) -> bool {
    gamma_sr > gamma_sd && gamma_rd > gamma_sd
}

/// RDF power gain `α` from raw (un-normalised) link gains.
pub fn alpha_gain(gamma_sd: f64, gamma_sr_eff: f64, gamma_rd_eff: f64) -> Result<f64> {
    if !(gamma_sd > 0.0 && gamma_sd.is_finite()) || !is_useful(gamma_sd, gamma_sr_eff, gamma_rd_eff)
    {
        return Err(Error::domain(format!(
            "DF link not useful: gamma_sd={gamma_sd}, gamma_sr={gamma_sr_eff}, gamma_rd={gamma_rd_eff}"
        )));
    }
    Ok(alpha_normalized(
        gamma_sr_eff / gamma_sd,
        gamma_rd_eff / gamma_sd,
    ))
}

fn alpha_normalized(sr: f64, rd: f64) -> f64 {
    if sr.is_infinite() {
        return rd;
    }
    if rd.is_infinite() {
        return sr;
    }
    sr * rd / (sr + rd - 1.0)
}

/// Direct-transmission rate `ln(1 + γ_sd·P)`.
pub fn dt_rate(gamma_sd: f64, power: f64) -> f64 {
    (gamma_sd * power).ln_1p()
}

/// A useful DF link, single relay or coherent multi-relay (MISO).
#[derive(Clone, Debug, PartialEq)]
pub struct DfLink {
    pub gamma_sd: f64,
    /// Single relay: its `γ_sr`. MISO: the minimum over the set.
    pub gamma_sr_eff: f64,
    /// Single relay: its `γ_rd`. MISO: `γ_sd + Σ γ_rd` over the set.
    pub gamma_rd_eff: f64,
    pub relay_set: Vec<usize>,
    /// `γ_rd` of each relay in `relay_set`, same order.
    pub relay_gains_rd: Vec<f64>,
    /// Whether the source transmits in the second slot as one more antenna.
    pub source_in_second_slot: bool,
    pub alpha: f64,
}

impl DfLink {
    pub fn single(gamma_sd: f64, relay: usize, gamma_sr: f64, gamma_rd: f64) -> Result<Self> {
        let alpha = alpha_gain(gamma_sd, gamma_sr, gamma_rd)?;
        Ok(Self {
            gamma_sd,
            gamma_sr_eff: gamma_sr,
            gamma_rd_eff: gamma_rd,
            relay_set: vec![relay],
            relay_gains_rd: vec![gamma_rd],
            source_in_second_slot: false,
            alpha,
        })
    }

    /// Coherent set: `(relay index, γ_sr, γ_rd)` for each member.
    pub fn miso(gamma_sd: f64, members: &[(usize, f64, f64)]) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::domain("MISO relay set must be nonempty"));
        }
        let sr_min = members
            .iter()
            .map(|m| m.1)
            .fold(f64::INFINITY, f64::min);
        let rd_sum = gamma_sd + members.iter().map(|m| m.2).sum::<f64>();
        let alpha = alpha_gain(gamma_sd, sr_min, rd_sum)?;
        Ok(Self {
            gamma_sd,
            gamma_sr_eff: sr_min,
            gamma_rd_eff: rd_sum,
            relay_set: members.iter().map(|m| m.0).collect(),
            relay_gains_rd: members.iter().map(|m| m.2).collect(),
            source_in_second_slot: true,
            alpha,
        })
    }

    pub fn normalized_sr(&self) -> f64 {
        self.gamma_sr_eff / self.gamma_sd
    }

    pub fn normalized_rd(&self) -> f64 {
        self.gamma_rd_eff / self.gamma_sd
    }

    /// The two arguments of the min in the DF rate, `(decode, combine)`.
    pub fn rate_terms(&self, split: &DfPowerSplit) -> (f64, f64) {
        let decode = 0.5 * (self.gamma_sr_eff * split.p_source).ln_1p();
        let combine =
            0.5 * (self.gamma_sd * split.p_source + self.gamma_rd_eff * split.p_relay_total).ln_1p();
        (decode, combine)
    }
}

/// Source/relay power for one DF transmission.
#[derive(Clone, Debug, PartialEq)]
pub struct DfPowerSplit {
    /// Source power in the first slot.
    pub p_source: f64,
    /// Total second-slot power (relays plus, in MISO mode, the source).
    pub p_relay_total: f64,
    /// Per-relay share of the second slot, aligned with `DfLink::relay_set`.
    pub p_relay_each: Vec<f64>,
    /// Source share of the second slot (MISO mode only, else 0).
    pub p_source_second_slot: f64,
}

impl DfPowerSplit {
    /// `½P_s + ½P_r`.
    pub fn link_budget(&self) -> f64 {
        0.5 * self.p_source + 0.5 * self.p_relay_total
    }
}

fn check_power(p: f64) -> Result<()> {
    if p >= 0.0 && p.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(format!("power must be nonnegative, got {p}")))
    }
}

/// Optimal split of the link budget `p_df`: the two rate terms are made equal.
pub fn split_power(link: &DfLink, p_df: f64) -> Result<DfPowerSplit> {
    check_power(p_df)?;
    if !is_useful(link.gamma_sd, link.gamma_sr_eff, link.gamma_rd_eff) {
        return Err(Error::domain("cannot split power over a non-useful DF link"));
    }
    let sr = link.normalized_sr();
    let rd = link.normalized_rd();
    let p_source = 2.0 * p_df / (1.0 + (sr - 1.0) / rd);
    let p_relay_total = 2.0 * p_df - p_source;
    let (p_relay_each, p_source_second_slot) = if link.source_in_second_slot {
        let share = |g: f64| g / link.gamma_rd_eff * p_relay_total;
        (
            link.relay_gains_rd.iter().map(|&g| share(g)).collect(),
            share(link.gamma_sd),
        )
    } else {
        (vec![p_relay_total], 0.0)
    };
    Ok(DfPowerSplit {
        p_source,
        p_relay_total,
        p_relay_each,
        p_source_second_slot,
    })
}

/// Closed-form DF rate `½ln(1 + 2αγ_sd·p_df)`.
pub fn rdf_rate(link: &DfLink, p_df: f64) -> Result<f64> {
    check_power(p_df)?;
    Ok(0.5 * (2.0 * link.alpha * link.gamma_sd * p_df).ln_1p())
}

/// DF rate of an arbitrary (not necessarily optimal) split, min form.
pub fn rdf_rate_min_form(gamma_sd: f64, gamma_sr: f64, gamma_rd: f64, p_source: f64, p_relay: f64) -> f64 {
    let decode = 0.5 * (gamma_sr * p_source).ln_1p();
    let combine = 0.5 * (gamma_sd * p_source + gamma_rd * p_relay).ln_1p();
    decode.min(combine)
}

/// Best single relay for `user`: maximal `α` among useful relays.
/// Ties go to the lowest relay index.
pub fn select_relay(block: &ChannelBlock, user: usize) -> Option<DfLink> {
    let gsd = block.gamma_sd[user];
    let mut best: Option<DfLink> = None;
    for (j, &gsr) in block.gamma_sr.iter().enumerate() {
        let grd = block.gamma_rd[j][user];
        if let Ok(link) = DfLink::single(gsd, j, gsr, grd) {
            if best.as_ref().is_none_or(|b| link.alpha > b.alpha) {
                best = Some(link);
            }
        }
    }
    best
}

/// Best coherent relay set for `user`.
///
/// Candidates are relays with `γ_sr > γ_sd`, sorted by `γ_sr` descending.
/// Every nested prefix is evaluated and the one with the largest `α` wins
/// (smallest prefix on ties). Any set is dominated by the prefix sharing
/// its minimum `γ_sr`, so the scan is exact.
pub fn select_miso_set(block: &ChannelBlock, user: usize) -> Option<DfLink> {
    let gsd = block.gamma_sd[user];
    let mut candidates: Vec<(usize, f64, f64)> = block
        .gamma_sr
        .iter()
        .enumerate()
        .filter(|&(_, &gsr)| gsr > gsd)
        .map(|(j, &gsr)| (j, gsr, block.gamma_rd[j][user]))
        .collect();
    // Stable sort keeps index order among equal γ_sr.
    candidates.sort_by(|a, b| b.1.total_cmp(&a.1));

    let mut best: Option<(usize, f64)> = None;
    let mut rd_sum = gsd;
    for (n, c) in candidates.iter().enumerate() {
        rd_sum += c.2;
        let alpha = alpha_normalized(c.1 / gsd, rd_sum / gsd);
        if best.is_none_or(|(_, a)| alpha > a) {
            best = Some((n + 1, alpha));
        }
    }
    best.and_then(|(len, _)| DfLink::miso(gsd, &candidates[..len]).ok())
}
