//! Quick invariant suites behind the `selftest` subcommand.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::experiments::{ExperimentConfig, Policy, Simulation};
use crate::fading::{ChannelBlock, FadingSpec, LinkTable};
use crate::oracle::{self, log_uniform, uniform};
use crate::relaying::{rdf_rate_min_form, select_miso_set, split_power, DfLink};
use crate::scheduler::global::{surplus, waterfill};
use crate::scheduler::perblock::{solve_block, solve_block_near_optimal};
use crate::virtualize::{Mode, VirtualUser};

#[derive(Clone, Debug, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn outcome(name: &'static str, failures: usize, cases: usize, worst: f64) -> CheckOutcome {
    CheckOutcome {
        name,
        passed: failures == 0,
        detail: format!("{cases} cases, {failures} failures, worst {worst:.3e}"),
    }
}

pub fn random_vu(rng: &mut ChaCha8Rng, index: usize) -> VirtualUser {
    VirtualUser {
        actual_user: index,
        mode: if index.is_multiple_of(2) { Mode::Direct } else { Mode::Relayed },
        omega: uniform(rng, 0.05, 1.0),
        eta: log_uniform(rng, 0.01, 100.0),
        relay_link: None,
    }
}

fn equal_split(rng: &mut ChaCha8Rng, cases: usize) -> CheckOutcome {
    let (mut fails, mut worst) = (0, 0.0f64);
    for _ in 0..cases {
        let gsd = log_uniform(rng, 0.01, 10.0);
        let sr = gsd * uniform(rng, 1.0 + 1e-6, 100.0);
        let rd = gsd * uniform(rng, 1.0 + 1e-6, 100.0);
        let p = uniform(rng, 1e-6, 10.0);
        let link = DfLink::single(gsd, 0, sr, rd).expect("useful by construction");
        let split = split_power(&link, p).expect("positive budget");
        let (d, c) = link.rate_terms(&split);
        let closed = 0.5 * (1.0 + 2.0 * link.alpha * gsd * p).ln();
        let min_form = rdf_rate_min_form(gsd, sr, rd, split.p_source, split.p_relay_total);
        let err = ((d - c).abs() / d.max(c)).max((min_form - closed).abs() / closed);
        worst = worst.max(err);
        fails += usize::from(err > 1e-9);
    }
    outcome("equal-term split", fails, cases, worst)
}

fn miso_exact(rng: &mut ChaCha8Rng, cases: usize) -> CheckOutcome {
    let mut fails = 0;
    for _ in 0..cases {
        let l = 1 + (rng.next_u32_bounded(8)) as usize;
        let gsd = log_uniform(rng, 0.1, 10.0);
        let sr = (0..l).map(|_| log_uniform(rng, 0.1, 50.0)).collect();
        let rd = (0..l).map(|_| vec![log_uniform(rng, 0.1, 50.0)]).collect();
        let block = ChannelBlock::from_gains(vec![gsd], sr, rd).expect("positive gains");
        let greedy = select_miso_set(&block, 0);
        let exact = oracle::miso_exhaustive(&block, 0);
        let ok = match (&greedy, &exact) {
            (None, None) => true,
            (Some(g), Some((set, alpha))) => {
                let mut gs = g.relay_set.clone();
                gs.sort_unstable();
                gs == *set || (g.alpha - alpha).abs() <= 1e-12 * alpha
            }
            _ => false,
        };
        fails += usize::from(!ok);
    }
    outcome("miso greedy = exhaustive", fails, cases, 0.0)
}

fn perblock_oracle(rng: &mut ChaCha8Rng, cases: usize) -> CheckOutcome {
    let (mut fails, mut worst) = (0, 0.0f64);
    for _ in 0..cases {
        let n = 1 + rng.next_u32_bounded(4) as usize;
        let vus: Vec<_> = (0..n).map(|i| random_vu(rng, i)).collect();
        let p = log_uniform(rng, 0.01, 100.0);
        let s = solve_block(&vus, p).expect("valid instance");
        let grid = oracle::perblock_grid(&vus, p, 100, 1000);
        worst = worst.max((s.objective - grid).abs());
        fails += usize::from(s.objective < grid - 1e-9 || s.objective > grid + 1e-3);
    }
    outcome("per-block = brute force", fails, cases, worst)
}

fn waterfill_oracle(rng: &mut ChaCha8Rng, cases: usize) -> CheckOutcome {
    let (mut fails, mut worst) = (0, 0.0f64);
    for i in 0..cases {
        let vu = random_vu(rng, i);
        let lambda = log_uniform(rng, 0.1, 10.0);
        let p = waterfill(&vu, lambda);
        let (gp, gs) = oracle::waterfill_grid(&vu, lambda, 1e-5);
        let s = surplus(&vu, lambda, p);
        worst = worst.max((p - gp).abs());
        fails += usize::from((p - gp).abs() > 2e-5 || s < gs - 1e-9);
    }
    outcome("water-filling = grid", fails, cases, worst)
}

fn envelope(rng: &mut ChaCha8Rng, cases: usize) -> CheckOutcome {
    let mut fails = 0;
    for _ in 0..cases {
        let n = 1 + rng.next_u32_bounded(6) as usize;
        let vus: Vec<_> = (0..n).map(|i| random_vu(rng, i)).collect();
        let grid: Vec<f64> = (1..=40).map(|k| 0.25 * k as f64).collect();
        let obj: Vec<f64> = grid
            .iter()
            .map(|&p| solve_block(&vus, p).expect("valid").objective)
            .collect();
        for (k, &p) in grid.iter().enumerate() {
            let near = solve_block_near_optimal(&vus, p).expect("valid").objective;
            let single = vus.iter().map(|v| v.weighted_rate(p)).fold(0.0, f64::max);
            fails += usize::from(obj[k] < single - 1e-12 || single < near - 1e-12);
        }
        for w in obj.windows(3) {
            fails += usize::from(w[2] - 2.0 * w[1] + w[0] > 1e-6 || w[1] < w[0]);
        }
    }
    outcome("envelope dominance and concavity", fails, cases, 0.0)
}

fn classic_waterfill() -> CheckOutcome {
    let mut config = ExperimentConfig::new(
        "classic",
        LinkTable::direct_only(FadingSpec::rayleigh(1.0).expect("valid spec")),
    );
    config.blocks = 100_000;
    config.calibration.blocks = 20_000;
    config.snr_db = vec![10.0];
    let mut worst = 0.0f64;
    let passed = Simulation::new(&config)
        .and_then(|sim| sim.run_point(Policy::DtOnly, &config.mu, 10.0))
        .map(|r| {
            let exact = oracle::rayleigh_waterfill_rate(1.0, r.averages.avg_power);
            worst = (r.averages.user_rates[0] - exact).abs() / exact;
            worst <= 0.01
        })
        .unwrap_or(false);
    CheckOutcome {
        name: "rayleigh water-filling = quadrature",
        passed,
        detail: format!("relative error {worst:.3e}"),
    }
}

fn determinism() -> CheckOutcome {
    let links = LinkTable::new(
        vec![FadingSpec::rayleigh(1.0).expect("valid")],
        vec![FadingSpec::rician(5.0, 10.0).expect("valid")],
        vec![vec![FadingSpec::rician(3.0, 5.0).expect("valid")]],
    )
    .expect("consistent table");
    let mut config = ExperimentConfig::new("determinism", links);
    config.blocks = 5_000;
    config.calibration.blocks = 5_000;
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .expect("thread pool");
        pool.install(|| Simulation::new(&config).and_then(|s| s.sweep(&[Policy::GlobalWaterfill])))
            .map(|r| r.points)
    };
    let passed = matches!((run(1), run(4)), (Ok(a), Ok(b)) if a == b);
    CheckOutcome {
        name: "determinism across worker counts",
        passed,
        detail: "1 vs 4 workers".into(),
    }
}

trait Bounded {
    fn next_u32_bounded(&mut self, n: u32) -> u32;
}

impl Bounded for ChaCha8Rng {
    fn next_u32_bounded(&mut self, n: u32) -> u32 {
        (uniform(self, 0.0, n as f64) as u32).min(n - 1)
    }
}

/// Runs every suite with a fixed seed.
pub fn run_all() -> Vec<CheckOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5e1f);
    vec![
        equal_split(&mut rng, 2_000),
        miso_exact(&mut rng, 500),
        perblock_oracle(&mut rng, 30),
        waterfill_oracle(&mut rng, 1_000),
        envelope(&mut rng, 50),
        classic_waterfill(),
        determinism(),
    ]
}
