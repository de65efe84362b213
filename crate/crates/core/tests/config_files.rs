use std::path::Path;

use fsqkd::config::{ChannelModelKind, ExperimentConfig};
use fsqkd::selftest::replica_config;

fn bundled(name: &str) -> ExperimentConfig {
    ExperimentConfig::load(&Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name)).unwrap()
}

#[test]
fn every_bundled_config_loads() {
    for name in [
        "replica.toml",
        "satellite.toml",
        "decoy.toml",
        "pdtc.toml",
        "simulate.toml",
    ] {
        bundled(name);
    }
}

#[test]
fn replica_matches_the_acceptance_setup() {
    let cfg = bundled("replica.toml");
    assert_eq!(cfg, replica_config());
    assert_eq!(cfg.channel.model, ChannelModelKind::Lognormal);
    assert_eq!(cfg.background.bob_background_rate, 2700.0);
    assert_eq!(cfg.coincidence.window_ns, 5);
    assert_eq!(cfg.source.intrinsic_qber, 0.0234);
    assert_eq!(cfg.experiment.duration, 180.0);
}

#[test]
fn satellite_pass_is_sorted_and_uses_a_narrow_window() {
    let cfg = bundled("satellite.toml");
    let s = cfg.satellite.unwrap();
    let scenario = s.scenario().unwrap();
    assert!(scenario
        .entries
        .windows(2)
        .all(|w| w[0].mean_loss_db > w[1].mean_loss_db));
    assert_eq!(s.coincidence.window_ns, 1);
}

#[test]
fn model_keys_must_belong_to_the_model() {
    let err = ExperimentConfig::from_toml_str("[channel]\nmodel = \"degenerate\"\nsigma = 1.0\n", "mem").unwrap_err();
    assert!(err.to_string().contains("sigma"), "{err}");
    let err = ExperimentConfig::from_toml_str("[channel]\nmodel = \"lognormal\"\nsigma = 1.0\n", "mem").unwrap_err();
    assert!(err.to_string().contains("mean_eta"), "{err}");
}

#[test]
fn trace_paths_resolve_against_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("t.csv"), "block_index,eta\n0,0.5\n1,0.25\n").unwrap();
    let cfg_path = dir.path().join("c.toml");
    std::fs::write(
        &cfg_path,
        "[channel]\nmodel = \"trace\"\npath = \"t.csv\"\nblock_duration = 0.01\n",
    )
    .unwrap();
    let cfg = ExperimentConfig::load(&cfg_path).unwrap();
    assert_eq!(cfg.trace().unwrap().etas, vec![0.5, 0.25]);
}
