use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_relay-alloc"))
}

fn configs() -> PathBuf {
    [env!("CARGO_MANIFEST_DIR"), "..", "..", "configs"].iter().collect()
}

fn run(args: &[&str], threads: Option<&str>) -> Output {
    let mut cmd = bin();
    cmd.args(args);
    match threads {
        Some(t) => cmd.env("RELAY_ALLOC_THREADS", t),
        None => cmd.env_remove("RELAY_ALLOC_THREADS"),
    };
    cmd.output().expect("binary runs")
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "stdout:\n{}\nstderr:\n{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn small_two_user(dir: &Path) -> PathBuf {
    let text = fs::read_to_string(configs().join("fig7.toml"))
        .unwrap()
        .replace("blocks = 100000", "blocks = 3000")
        .replace("points = 41", "points = 5");
    let path = dir.join("two_user.toml");
    fs::write(&path, text).unwrap();
    path
}

#[test]
fn sweep_schema_and_byte_identical_reruns() {
    let tmp = tempfile::tempdir().unwrap();
    let config = configs().join("fig4_case1");
    let mut csvs = Vec::new();
    for (sub, threads) in [("a", Some("1")), ("b", Some("3")), ("c", None)] {
        let out = tmp.path().join(sub);
        let o = run(
            &["sweep-snr", "--config", config.to_str().unwrap(), "--blocks", "3000", "--out", out.to_str().unwrap()],
            threads,
        );
        ok(&o);
        csvs.push((fs::read(out.join("sweep.csv")).unwrap(), fs::read(out.join("manifest.json")).unwrap()));
    }
    assert!(csvs.windows(2).all(|w| w[0] == w[1]));
    let text = String::from_utf8(csvs[0].0.clone()).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "snr_db,policy,rate_bps_hz_user1,power_avg,frac_df,frac_dt,frac_none"
    );
    assert_eq!(lines.count(), 7);
    let manifest: serde_json::Value = serde_json::from_slice(&csvs[0].1).unwrap();
    assert_eq!(manifest["files"][0]["name"], "sweep.csv");
    assert_eq!(manifest["files"][0]["rows"], 7);
    assert_eq!(manifest["seed"], 1);
    assert_eq!(manifest["config"]["blocks"], 3000);
}

#[test]
fn seed_flag_changes_draws() {
    let tmp = tempfile::tempdir().unwrap();
    let config = configs().join("fig4_case1.toml");
    let mut outs = Vec::new();
    for seed in ["1", "2"] {
        let out = tmp.path().join(seed);
        ok(&run(
            &[
                "sweep-snr", "--config", config.to_str().unwrap(), "--blocks", "2000", "--seed", seed,
                "--policy", "constant-per-block", "--out", out.to_str().unwrap(),
            ],
            None,
        ));
        outs.push(fs::read_to_string(out.join("sweep.csv")).unwrap());
    }
    assert_ne!(outs[0], outs[1]);
    assert!(outs[0].contains(",constant-per-block,"));
}

#[test]
fn region_schema() {
    let tmp = tempfile::tempdir().unwrap();
    let config = small_two_user(tmp.path());
    let out = tmp.path().join("out");
    ok(&run(
        &["rate-region", "--config", config.to_str().unwrap(), "--policy", "global-waterfill", "--out", out.to_str().unwrap()],
        None,
    ));
    let text = fs::read_to_string(out.join("region.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "mu1,rate1_bps_hz,rate2_bps_hz,policy");
    assert_eq!(lines.len(), 6);
    // mu1 = 0 first: user 1 gets nothing.
    assert!(lines[1].starts_with("0.00000000000e0,0.00000000000e0,"));
    assert!(lines[5].starts_with("1.00000000000e0,") && lines[5].contains(",0.00000000000e0,global-waterfill"));
}

#[test]
fn other_subcommands_write_their_tables() {
    let tmp = tempfile::tempdir().unwrap();
    let config = configs().join("fig4_case1.toml");
    let c = config.to_str().unwrap();
    for (sub, file, header) in [
        ("mode-stats", "modes.csv", "snr_db,policy,frac_df,frac_dt,frac_none"),
        (
            "compare-policies",
            "compare.csv",
            "snr_db,policy,weighted_rate_bps_hz,rate_bps_hz_user1,power_avg,target_power",
        ),
        (
            "calibrate",
            "calibration.csv",
            "snr_db,policy,target_power,lambda_g,calibration_power,evaluation_power,evaluation_rel_error,iterations",
        ),
    ] {
        let out = tmp.path().join(sub);
        ok(&run(&[sub, "--config", c, "--blocks", "2000", "--out", out.to_str().unwrap()], Some("2")));
        let text = fs::read_to_string(out.join(file)).unwrap();
        assert_eq!(text.lines().next().unwrap(), header, "{sub}");
        assert!(out.join("manifest.json").exists());
    }
}

#[test]
fn diagnostics_and_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let bad_mu = tmp.path().join("bad_mu.toml");
    fs::write(
        &bad_mu,
        "mu = [0.45, 0.45]\n[fading]\nsd = [{ family = \"rayleigh\", mean = 1 }, { family = \"rayleigh\", mean = 1 }]\n",
    )
    .unwrap();
    let o = run(&["sweep-snr", "--config", bad_mu.to_str().unwrap()], None);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("`mu`"));

    let unknown = tmp.path().join("unknown.toml");
    fs::write(&unknown, "users = 1\nsnr = 3\n[fading]\nsd = [{ family = \"rayleigh\", mean = 1 }]\n").unwrap();
    let o = run(&["sweep-snr", "--config", unknown.to_str().unwrap()], None);
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 2") && err.contains("snr"), "{err}");

    let config = configs().join("fig4_case1.toml");
    let o = run(&["compare-policies", "--config", config.to_str().unwrap(), "--policy", "dt-only"], None);
    assert!(!o.status.success());

    let o = run(&["sweep-snr", "--config", config.to_str().unwrap(), "--blocks", "10"], None);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("`blocks`"));

    let o = run(&["sweep-snr", "--config", config.to_str().unwrap()], Some("zero"));
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("RELAY_ALLOC_THREADS"));
}

#[test]
fn selftest_passes() {
    let o = run(&["selftest"], None);
    ok(&o);
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.lines().count() >= 7);
    assert!(!text.contains("FAIL"));
}
