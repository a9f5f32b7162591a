//! Long-term optimal policy under an average power constraint.
//!
//! For a power price `λ`, each virtual user's best power is the water level
//! `[ω/λ − 1/η]⁺`. The block goes entirely to the virtual user with the
//! largest surplus `f(P) − λP`; nobody transmits if every water level is
//! clamped to zero. `λ` is calibrated by bisection so that the average
//! scheduled power over a calibration sample meets the target.

use crate::accum::{self, try_reduce};
use crate::error::{Error, Result};
use crate::scheduler::{Allocation, Grant, LongTermAverages, Tally};
use crate::virtualize::VirtualUser;

/// Relative stopping tolerance on the achieved average power.
pub const DEFAULT_CALIBRATION_TOLERANCE: f64 = 1e-5;
/// Blocks in the dedicated calibration sample.
pub const DEFAULT_CALIBRATION_BLOCKS: usize = 100_000;
/// Bound on bracket doublings/halvings starting from `λ = 1`.
pub const MAX_BRACKET_STEPS: usize = 60;
const MAX_BISECTIONS: usize = 200;

/// Water-filling power `[ω/λ − 1/η]⁺`.
pub fn waterfill(vu: &VirtualUser, lambda_g: f64) -> f64 {
    (vu.omega / lambda_g - 1.0 / vu.eta).max(0.0)
}

/// `f(P) − λP` at power `p`.
pub fn surplus(vu: &VirtualUser, lambda_g: f64, p: f64) -> f64 {
    vu.weighted_rate(p) - lambda_g * p
}

/// Surplus-maximising virtual user at price `λ`: `(index, power, surplus)`.
/// `None` when every water level is zero. Ties go to the lowest index.
pub fn best_response(vus: &[VirtualUser], lambda_g: f64) -> Option<(usize, f64, f64)> {
    let mut best: Option<(usize, f64, f64)> = None;
    for (j, vu) in vus.iter().enumerate() {
        let p = waterfill(vu, lambda_g);
        if p <= 0.0 {
            continue;
        }
        let s = surplus(vu, lambda_g, p);
        if best.is_none_or(|b| s > b.2) {
            best = Some((j, p, s));
        }
    }
    best
}

/// Schedules one block at price `λ`: a single virtual user with `τ = 1`, or nobody.
pub fn schedule_block(vus: &[VirtualUser], lambda_g: f64) -> Allocation {
    match best_response(vus, lambda_g) {
        Some((vu, power, _)) => Allocation::from_grants(
            vus,
            &[Grant {
                vu,
                tau: 1.0,
                power,
            }],
        ),
        None => Allocation::default(),
    }
}

/// Scheduled power at price `λ`, averaged over a sample of blocks.
pub fn average_power(sample: &[Vec<VirtualUser>], lambda_g: f64) -> f64 {
    let total = accum::sum(sample.len(), |k| {
        best_response(&sample[k], lambda_g).map_or(0.0, |b| b.1)
    });
    total / sample.len().max(1) as f64
}

#[derive(Clone, Debug, PartialEq)]
pub struct PowerPrice {
    pub lambda_g: f64,
    pub target_avg_power: f64,
    /// Average power on the calibration sample at `lambda_g`.
    pub achieved_avg_power: f64,
    pub calibration_tolerance: f64,
    pub iterations: usize,
}

impl PowerPrice {
    pub fn within_tolerance(&self) -> bool {
        (self.achieved_avg_power - self.target_avg_power).abs()
            <= self.calibration_tolerance * self.target_avg_power
    }
}

fn calibration_error(target: f64, message: impl Into<String>) -> Error {
    Error::Calibration {
        point: format!("target power {target}"),
        message: message.into(),
    }
}

/// Finds `λ` such that the sample-average power is within `tolerance` of
/// `target`. Average power is nonincreasing in `λ`, so a bracket found by
/// doubling/halving from 1 is bisected geometrically.
pub fn calibrate_price(sample: &[Vec<VirtualUser>], target: f64, tolerance: f64) -> Result<PowerPrice> {
    if !(target > 0.0 && target.is_finite()) {
        return Err(Error::domain(format!("target power must be positive, got {target}")));
    }
    if tolerance.is_nan() || tolerance <= 0.0 {
        return Err(Error::domain("calibration tolerance must be positive"));
    }
    if sample.is_empty() {
        return Err(calibration_error(target, "empty calibration sample"));
    }
    let mut iterations = 0usize;
    let mut eval = |lambda: f64| {
        iterations += 1;
        average_power(sample, lambda)
    };
    let done = |p: f64| (p - target).abs() <= tolerance * target;

    // lo: power >= target, hi: power <= target.
    let p1 = eval(1.0);
    let (mut lo, mut p_lo, mut hi, mut p_hi);
    if p1 >= target {
        (lo, p_lo) = (1.0, p1);
        (hi, p_hi) = (1.0, p1);
        let mut steps = 0;
        while p_hi > target {
            if steps == MAX_BRACKET_STEPS {
                return Err(calibration_error(target, "upper price bracket not found"));
            }
            (lo, p_lo) = (hi, p_hi);
            hi *= 2.0;
            p_hi = eval(hi);
            steps += 1;
        }
    } else {
        (hi, p_hi) = (1.0, p1);
        (lo, p_lo) = (1.0, p1);
        let mut steps = 0;
        while p_lo < target {
            if steps == MAX_BRACKET_STEPS {
                return Err(calibration_error(target, "lower price bracket not found"));
            }
            (hi, p_hi) = (lo, p_lo);
            lo *= 0.5;
            p_lo = eval(lo);
            steps += 1;
        }
    }

    let finish = |lambda: f64, achieved: f64, iterations: usize| PowerPrice {
        lambda_g: lambda,
        target_avg_power: target,
        achieved_avg_power: achieved,
        calibration_tolerance: tolerance,
        iterations,
    };
    for _ in 0..MAX_BISECTIONS {
        if done(p_lo) {
            return Ok(finish(lo, p_lo, iterations));
        }
        if done(p_hi) {
            return Ok(finish(hi, p_hi, iterations));
        }
        let mid = (lo * hi).sqrt();
        if !(mid > lo && mid < hi) {
            break;
        }
        let p_mid = eval(mid);
        if p_mid >= target {
            (lo, p_lo) = (mid, p_mid);
        } else {
            (hi, p_hi) = (mid, p_mid);
        }
    }
    Err(calibration_error(
        target,
        format!(
            "average power jumps from {p_lo} to {p_hi} across the target; \
             calibration sample too small for tolerance {tolerance}"
        ),
    ))
}

/// Runs the priced policy over pre-built virtual users of each block.
pub fn run_policy(users: usize, price: &PowerPrice, blocks: &[Vec<VirtualUser>]) -> LongTermAverages {
    let tally: std::result::Result<Tally, ()> = try_reduce(
        blocks.len(),
        || Tally::new(users),
        |t, k| {
            t.add(&schedule_block(&blocks[k], price.lambda_g));
            Ok(())
        },
        |a, b| a.merge(b),
    );
    tally.map(|t| t.finish()).unwrap_or_else(|_| Tally::new(users).finish())
}
