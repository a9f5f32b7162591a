//! Fixed power budget per block.
//!
//! Maximises `Σ τ_j·f_j(P_j)` subject to `Σ τ_j·P_j ≤ P` and `Σ τ_j ≤ 1`.
//! The optimum is the upper concave envelope of `max_j f_j` at `P`, which
//! is attained by one virtual user or by time sharing between the two
//! tangency points of a common supporting line. The envelope is located
//! through its price parametrisation: at price `λ` the supporting line has
//! slope `λ` and touches the surplus-maximising virtual user at its water
//! level, so bisecting `λ` until the touching power crosses `P` identifies
//! the face of the envelope that contains `P`.

use crate::error::{Error, Result};
use crate::scheduler::global::{best_response, surplus, waterfill};
use crate::scheduler::Grant;
use crate::virtualize::VirtualUser;

/// Relative tolerance on the bracketing price.
pub const PRICE_TOLERANCE: f64 = 1e-10;
pub const MAX_ITERATIONS: usize = 200;

#[derive(Clone, Debug, PartialEq)]
pub struct PerBlockSolution {
    /// One or two grants; channel ratios sum to 1.
    pub grants: Vec<Grant>,
    /// Weighted rate, nats.
    pub objective: f64,
    /// Slope of the supporting line at the solution.
    pub price: f64,
}

impl PerBlockSolution {
    pub fn power(&self) -> f64 {
        self.grants.iter().map(|g| g.tau * g.power).sum()
    }
}

fn check_inputs(vus: &[VirtualUser], p_block: f64) -> Result<()> {
    if !(p_block > 0.0 && p_block.is_finite()) {
        return Err(Error::domain(format!("block power must be positive, got {p_block}")));
    }
    if vus.is_empty() {
        return Err(Error::domain("no virtual users to schedule"));
    }
    if vus.iter().all(|v| v.omega * v.eta <= 0.0) {
        return Err(Error::config(
            "fading",
            "every virtual user has zero weight or zero gain",
        ));
    }
    Ok(())
}

fn single(vus: &[VirtualUser], j: usize, p_block: f64, price: f64) -> PerBlockSolution {
    PerBlockSolution {
        grants: vec![Grant {
            vu: j,
            tau: 1.0,
            power: p_block,
        }],
        objective: vus[j].weighted_rate(p_block),
        price,
    }
}

/// Optimal allocation of `p_block` within one block.
pub fn solve_block(vus: &[VirtualUser], p_block: f64) -> Result<PerBlockSolution> {
    check_inputs(vus, p_block)?;
    let active = || vus.iter().filter(|v| v.omega * v.eta > 0.0);
    // Every water level is >= p_block at `lo` and zero at `hi`.
    let mut lo = active()
        .map(|v| v.omega / (p_block + 1.0 / v.eta))
        .fold(f64::INFINITY, f64::min);
    let mut hi = active().map(|v| v.omega * v.eta).fold(0.0, f64::max);
    let power_at = |lambda: f64| best_response(vus, lambda);

    for _ in 0..MAX_ITERATIONS {
        if hi - lo <= PRICE_TOLERANCE * hi {
            break;
        }
        let mid = 0.5 * (lo + hi);
        match power_at(mid) {
            Some((_, p, _)) if p >= p_block => lo = mid,
            _ => hi = mid,
        }
    }

    let upper = power_at(lo).expect("some virtual user is active below the lower price");
    let lower = power_at(hi);
    let a = upper.0;
    let b = match lower {
        Some((b, _, _)) if b != a => b,
        // Same virtual user on both sides: its water level passes through p_block.
        _ => {
            let lambda = vus[a].omega / (p_block + 1.0 / vus[a].eta);
            return Ok(single(vus, a, p_block, lambda));
        }
    };

    // Supporting line tangent to both a and b: equal surplus at a common price.
    let gap = |lambda: f64| {
        surplus(&vus[a], lambda, waterfill(&vus[a], lambda))
            - surplus(&vus[b], lambda, waterfill(&vus[b], lambda))
    };
    let (mut l, mut h) = (lo, hi);
    for _ in 0..MAX_ITERATIONS {
        let mid = 0.5 * (l + h);
        if !(mid > l && mid < h) {
            break;
        }
        if gap(mid) >= 0.0 {
            l = mid;
        } else {
            h = mid;
        }
    }
    let lambda = 0.5 * (l + h);
    let p_a = waterfill(&vus[a], lambda);
    let p_b = waterfill(&vus[b], lambda);
    if p_a - p_b <= f64::EPSILON * p_a || p_block >= p_a || p_block <= p_b {
        let j = if (p_a - p_block).abs() <= (p_block - p_b).abs() { a } else { b };
        return Ok(single(vus, j, p_block, lambda));
    }
    let tau_a = (p_block - p_b) / (p_a - p_b);
    let tau_b = 1.0 - tau_a;
    let grants = vec![
        Grant {
            vu: a,
            tau: tau_a,
            power: p_a,
        },
        Grant {
            vu: b,
            tau: tau_b,
            power: p_b,
        },
    ];
    let objective = tau_a * vus[a].weighted_rate(p_a) + tau_b * vus[b].weighted_rate(p_b);
    Ok(PerBlockSolution {
        grants,
        objective,
        price: lambda,
    })
}

/// Whole block to the virtual user with the largest `f(p_block)`.
pub fn solve_block_near_optimal(vus: &[VirtualUser], p_block: f64) -> Result<PerBlockSolution> {
    check_inputs(vus, p_block)?;
    let mut best = 0;
    let mut best_rate = vus[0].weighted_rate(p_block);
    for (j, v) in vus.iter().enumerate().skip(1) {
        let r = v.weighted_rate(p_block);
        if r > best_rate {
            best = j;
            best_rate = r;
        }
    }
    let v = &vus[best];
    let slope = v.omega * v.eta / (1.0 + v.eta * p_block);
    Ok(single(vus, best, p_block, slope))
}
