//! Brute-force reference computations.
//!
//! Deliberately naive and independent of the closed forms they check:
//! exhaustive relay subsets, grids over time-sharing and power, and
//! quadrature against the exponential density.

use rand_chacha::rand_core::RngCore;

use crate::fading::ChannelBlock;
use crate::virtualize::VirtualUser;

/// Uniform in `[lo, hi)`.
pub fn uniform<R: RngCore + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    let u = (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
    lo + (hi - lo) * u
}

/// Log-uniform in `[lo, hi)`.
pub fn log_uniform<R: RngCore + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    uniform(rng, lo.ln(), hi.ln()).exp()
}

/// Best relay subset by enumerating all `2^L − 1` nonempty subsets.
/// A subset qualifies when its weakest source-relay gain beats the direct
/// gain. Returns `(relays in index order, α)`; the first maximiser wins.
pub fn miso_exhaustive(block: &ChannelBlock, user: usize) -> Option<(Vec<usize>, f64)> {
    let l = block.relays();
    assert!(l < 20, "exhaustive search over {l} relays");
    let gsd = block.gamma_sd[user];
    let mut best: Option<(Vec<usize>, f64)> = None;
    for mask in 1u32..(1 << l) {
        let set: Vec<usize> = (0..l).filter(|j| mask & (1 << j) != 0).collect();
        let min_sr = set.iter().map(|&j| block.gamma_sr[j]).fold(f64::INFINITY, f64::min);
        let rd: f64 = gsd + set.iter().map(|&j| block.gamma_rd[j][user]).sum::<f64>();
        if !(min_sr > gsd && rd > gsd) {
            continue;
        }
        let (a, b) = (min_sr / gsd, rd / gsd);
        let alpha = a * b / (a + b - 1.0);
        if best.as_ref().is_none_or(|(_, x)| alpha > *x) {
            best = Some((set, alpha));
        }
    }
    best
}

/// Per-block optimum by brute force: every single virtual user at full
/// budget, and every ordered pair time-shared on a `τ` grid with the
/// budget split on a grid.
pub fn perblock_grid(vus: &[VirtualUser], p_block: f64, tau_steps: usize, split_steps: usize) -> f64 {
    let mut best = vus
        .iter()
        .map(|v| v.weighted_rate(p_block))
        .fold(0.0, f64::max);
    for a in 0..vus.len() {
        for b in a + 1..vus.len() {
            for t in 1..tau_steps {
                let tau = t as f64 / tau_steps as f64;
                for s in 0..=split_steps {
                    let share = s as f64 / split_steps as f64;
                    let pa = share * p_block / tau;
                    let pb = (1.0 - share) * p_block / (1.0 - tau);
                    let v = tau * vus[a].weighted_rate(pa) + (1.0 - tau) * vus[b].weighted_rate(pb);
                    if v > best {
                        best = v;
                    }
                }
            }
        }
    }
    best
}

/// Maximises `ω·ln(1 + ηP) − λP` over `P = k·step`, `P ∈ [0, ω/λ]`.
/// The objective is concave, so a coarse pass at `1000·step` followed by a
/// fine pass over the two neighbouring coarse cells finds the same grid
/// maximiser as a full scan. Returns `(power, surplus)`.
pub fn waterfill_grid(vu: &VirtualUser, lambda_g: f64, step: f64) -> (f64, f64) {
    let s = |p: f64| vu.omega * (1.0 + vu.eta * p).ln() - lambda_g * p;
    let top = (vu.omega / lambda_g / step).ceil() as u64;
    let coarse = 1000u64;
    let mut best_k = 0u64;
    let mut k = 0u64;
    while k <= top {
        if s(k as f64 * step) > s(best_k as f64 * step) {
            best_k = k;
        }
        k += coarse;
    }
    let lo = best_k.saturating_sub(coarse);
    let hi = (best_k + coarse).min(top);
    let mut best = (0.0, s(0.0));
    for k in lo..=hi {
        let p = k as f64 * step;
        let v = s(p);
        if v > best.1 {
            best = (p, v);
        }
    }
    best
}

/// Composite Simpson's rule with `n` (rounded up to even) intervals.
pub fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
    let n = n + n % 2;
    let h = (b - a) / n as f64;
    let mut acc = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(a + i as f64 * h);
    }
    acc * h / 3.0
}

/// Single-user water-filling over Rayleigh fading with mean gain `mean`
/// at average power `p_bar`, by quadrature. With cutoff `x₀` on the
/// normalized gain `x ~ Exp(1)`, power is `(1/x₀ − 1/x)/mean` above the
/// cutoff and the rate is `ln(x/x₀)`. Returns the average rate in nats.
pub fn rayleigh_waterfill_rate(mean: f64, p_bar: f64) -> f64 {
    const SPAN: f64 = 60.0;
    const N: usize = 400_000;
    let power = |x0: f64| {
        simpson(|x| (1.0 / x0 - 1.0 / x) * (-x).exp(), x0, x0 + SPAN, N) / mean
    };
    // Power decreases in the cutoff; bisect ln x₀.
    let (mut lo, mut hi) = (-40.0f64, 10.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if power(mid.exp()) > p_bar {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-13 {
            break;
        }
    }
    let x0 = (0.5 * (lo + hi)).exp();
    simpson(|x| (x / x0).ln() * (-x).exp(), x0, x0 + SPAN, N)
}
