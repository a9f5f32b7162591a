//! Order-insensitive parallel reductions.
//!
//! Work is cut into fixed-size chunks of indices. Chunks are folded in
//! parallel and then merged sequentially in chunk order, so the result is
//! bit-identical for any worker count.

use rayon::prelude::*;

pub const CHUNK: usize = 2048;

/// Neumaier compensated sum.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn merge(&mut self, other: &CompensatedSum) {
        self.add(other.sum);
        self.add(other.compensation);
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

/// Folds indices `0..n` chunk-wise in parallel, merging partials in order.
pub fn try_reduce<A, E, I, F, M>(n: usize, init: I, fold: F, merge: M) -> Result<A, E>
where
    A: Send,
    E: Send,
    I: Fn() -> A + Sync,
    F: Fn(&mut A, usize) -> Result<(), E> + Sync,
    M: Fn(&mut A, A),
{
    let chunks = n.div_ceil(CHUNK);
    let partials: Vec<A> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut acc = init();
            for k in c * CHUNK..n.min((c + 1) * CHUNK) {
                fold(&mut acc, k)?;
            }
            Ok(acc)
        })
        .collect::<Result<_, E>>()?;
    let mut total = init();
    for p in partials {
        merge(&mut total, p);
    }
    Ok(total)
}

/// Deterministic parallel sum of `f(k)` over `0..n`.
pub fn sum<F>(n: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync,
{
    let r: Result<CompensatedSum, ()> = try_reduce(
        n,
        CompensatedSum::default,
        |acc, k| {
            acc.add(f(k));
            Ok(())
        },
        |a, b| a.merge(&b),
    );
    r.map(|s| s.value()).unwrap_or_default()
}
