use std::path::PathBuf;

use relay_alloc::experiments::Simulation;
use relay_alloc::fading::{FadingFamily, FadingSpec, LinkTable, StreamKind};
use relay_alloc::scheduler::perblock::solve_block;
use relay_alloc::virtualize::{build_virtual_users, RelayMode, Weights};
use relay_alloc::{parse_config, Allocation, ChannelBlock, Error, ExperimentConfig, Policy};

fn shipped(name: &str) -> ExperimentConfig {
    let path: PathBuf = [env!("CARGO_MANIFEST_DIR"), "..", "..", "configs", name].iter().collect();
    parse_config(&path).unwrap()
}

fn small(mut c: ExperimentConfig, blocks: usize) -> ExperimentConfig {
    c.blocks = blocks;
    c.calibration.blocks = blocks;
    c
}

#[test]
fn shipped_configs_parse() {
    for name in ["fig4_case1", "fig4_case2", "fig5", "fig6", "fig7"] {
        let c = shipped(name);
        assert!(c.validate().is_ok(), "{name}");
    }
    let c = shipped("fig4_case1");
    assert_eq!(c.snr_db, vec![0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0]);
    assert_eq!(c.links.sr[0], FadingSpec::rician(5.0, 10.0).unwrap());
    assert_eq!(c.links.rd[0][0], FadingSpec::rician(3.0, 5.0).unwrap());
    assert_eq!(shipped("fig5").policy, Policy::EqualSplitDf);
}

#[test]
fn two_user_config_values() {
    let c = shipped("fig7.toml");
    assert_eq!((c.users(), c.relays()), (2, 1));
    let l = &c.links;
    assert_eq!(l.sr[0].family(), FadingFamily::Rician);
    assert_eq!((l.sr[0].mean_gain(), l.sr[0].k_factor()), (10.0, 10.0));
    assert_eq!(l.sd[0], FadingSpec::rayleigh(10.0).unwrap());
    assert_eq!((l.rd[0][0].mean_gain(), l.rd[0][0].k_factor()), (2.0, 2.0));
    assert_eq!(l.sd[1], FadingSpec::rayleigh(1.0).unwrap());
    assert_eq!((l.rd[0][1].mean_gain(), l.rd[0][1].k_factor()), (5.0, 5.0));
}

#[test]
fn policies_coincide_without_relays() {
    let c = small(
        ExperimentConfig::new("dt", LinkTable::direct_only(FadingSpec::rayleigh(1.0).unwrap())),
        5_000,
    );
    let sim = Simulation::new(&c).unwrap();
    let a = sim.sweep(&[Policy::GlobalWaterfill, Policy::DtOnly]).unwrap();
    let (g, d) = a.points.split_at(c.snr_db.len());
    for (x, y) in g.iter().zip(d) {
        assert_eq!(x.averages, y.averages);
    }
}

#[test]
fn relay_gain_larger_at_low_snr() {
    let mut c = small(shipped("fig4_case1"), 20_000);
    c.snr_db = vec![0.0, 25.0];
    let sim = Simulation::new(&c).unwrap();
    let r = sim.sweep(&[Policy::GlobalWaterfill, Policy::DtOnly]).unwrap();
    let rate = |p: Policy, s: f64| {
        r.points.iter().find(|x| x.policy == p && x.snr_db == s).unwrap().averages.weighted_rate
    };
    let gain = |s: f64| rate(Policy::GlobalWaterfill, s) / rate(Policy::DtOnly, s);
    assert!(gain(0.0) > gain(25.0));
}

#[test]
fn idle_share_dominates_at_very_low_snr() {
    let mut c = small(shipped("fig6"), 20_000);
    c.snr_db = vec![-20.0];
    let r = relay_alloc::experiments::mode_fractions(&c, &[Policy::GlobalWaterfill]).unwrap();
    let a = &r.points[0].averages;
    assert!(a.frac_none > a.frac_df && a.frac_none > a.frac_dt);
}

#[test]
fn global_policy_dominates_constant_power() {
    let c = small(shipped("fig4_case2"), 10_000);
    let r = relay_alloc::experiments::compare_policies(&c).unwrap();
    for &s in &c.snr_db {
        let get = |p: Policy| {
            r.points.iter().find(|x| x.policy == p && x.snr_db == s).unwrap()
        };
        let g = get(Policy::GlobalWaterfill).averages.weighted_rate;
        assert!(g >= get(Policy::ConstantPerBlock).averages.weighted_rate);
        for p in &r.points {
            assert!(p.averages.avg_power <= 1.02 * p.target_power, "{} at {}", p.policy, p.snr_db);
            assert!(p.averages.user_rates.iter().all(|&x| x >= 0.0));
        }
    }
}

#[test]
fn swapping_user_labels_mirrors_allocation() {
    let c = shipped("fig7");
    let blocks = relay_alloc::fading::sample_blocks(&c.links, 3, StreamKind::Evaluation, 2_000);
    for t in [0.0, 0.2, 0.5, 0.9] {
        let mu = Weights::pair(t).unwrap();
        let swapped_mu = Weights::new(vec![1.0 - t, t]).unwrap();
        for b in &blocks {
            let mirrored = ChannelBlock::from_gains(
                vec![b.gamma_sd[1], b.gamma_sd[0]],
                b.gamma_sr.clone(),
                vec![vec![b.gamma_rd[0][1], b.gamma_rd[0][0]]],
            )
            .unwrap();
            for p in [0.1, 1.0, 10.0] {
                let solve = |blk: &ChannelBlock, m: &Weights| {
                    let vus = build_virtual_users(blk, m, RelayMode::Single).unwrap();
                    let s = solve_block(&vus, p).unwrap();
                    (s.objective, Allocation::from_grants(&vus, &s.grants).user_rates(2))
                };
                let (oa, ra) = solve(b, &mu);
                let (ob, rb) = solve(&mirrored, &swapped_mu);
                assert!((oa - ob).abs() <= 1e-12 * oa.max(1.0));
                // Rates mirror unless the optimum is not unique (weight 0 or ties).
                if t > 0.0 && t < 1.0 && t != 0.5 {
                    assert!((ra[0] - rb[1]).abs() <= 1e-9 && (ra[1] - rb[0]).abs() <= 1e-9);
                }
            }
        }
    }
}

#[test]
fn calibration_error_names_the_point() {
    // Near-deterministic links: every block switches between direct and
    // relayed transmission at almost the same price, so average power jumps
    // across any target placed inside the switch.
    let k = 1e9;
    let links = LinkTable::new(
        vec![FadingSpec::rician(1.0, k).unwrap()],
        vec![FadingSpec::rician(5.0, k).unwrap()],
        vec![vec![FadingSpec::rician(3.0, k).unwrap()]],
    )
    .unwrap();
    let eta = 2.0 * relay_alloc::relaying::alpha_gain(1.0, 5.0, 3.0).unwrap();
    let dt = |l: f64| (1.0 / l).ln() - 1.0 + l;
    let df = |l: f64| 0.5 * (0.5 * eta / l).ln() - 0.5 + l / eta;
    let (mut lo, mut hi) = (1e-3, 0.5);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if dt(mid) > df(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    // Halfway between two of the 1000 levels the staircase can take.
    let (p_dt, p_df) = (1.0 / lo - 1.0, 0.5 / lo - 1.0 / eta);
    let target = p_df + 0.5005 * (p_dt - p_df);
    let snr = 10.0 * target.log10();

    let mut c = small(ExperimentConfig::new("switch", links), 1_000);
    c.snr_db = vec![snr];
    match relay_alloc::experiments::sweep_snr(&c) {
        Err(Error::Calibration { point, message }) => {
            assert!(point.contains(&format!("{snr} dB")), "{point}");
            assert!(message.contains("jumps"), "{message}");
        }
        other => panic!("expected a calibration error, got {other:?}"),
    }
}

#[test]
fn miso_never_below_single_selection() {
    let links = LinkTable::new(
        vec![FadingSpec::rayleigh(1.0).unwrap()],
        vec![FadingSpec::rician(5.0, 10.0).unwrap(), FadingSpec::rician(4.0, 5.0).unwrap()],
        vec![vec![FadingSpec::rician(3.0, 5.0).unwrap()], vec![FadingSpec::rician(2.0, 2.0).unwrap()]],
    )
    .unwrap();
    let mut c = small(ExperimentConfig::new("two-relay", links), 5_000);
    c.snr_db = vec![0.0, 10.0];
    let single = Simulation::new(&c).unwrap().sweep(&[Policy::ConstantPerBlock]).unwrap();
    c.miso = true;
    let miso = Simulation::new(&c).unwrap().sweep(&[Policy::ConstantPerBlock]).unwrap();
    for (s, m) in single.points.iter().zip(&miso.points) {
        assert!(m.averages.weighted_rate >= s.averages.weighted_rate - 1e-12);
    }
}
