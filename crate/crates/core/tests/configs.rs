use std::path::Path;

use persuasion_lab::harness::{ExperimentConfig, Overrides};
use persuasion_lab::presets;
use persuasion_lab::spp::{EnvironmentConfig, EnvironmentSpec};

fn dir() -> &'static Path {
    Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/configs"))
}

#[test]
fn shipped_environments_match_presets() {
    let cases: [(&str, EnvironmentConfig); 5] = [
        ("e2", presets::e2(false, 2)),
        ("e2_confounded", presets::e2(true, 2)),
        ("degenerate", presets::degenerate(2, 0.0)),
        ("rank_violating", presets::rank_violating(1)),
        ("warehouse", presets::warehouse(2)),
    ];
    for (name, preset) in cases {
        let file = EnvironmentSpec::from_path(dir().join(format!("envs/{name}.toml"))).unwrap();
        let built = EnvironmentSpec::from_config(preset).unwrap();
        assert_eq!(file.hash(), built.hash(), "{name}");
    }
}

#[test]
fn every_experiment_config_loads() {
    let mut n = 0;
    for entry in std::fs::read_dir(dir()).unwrap() {
        let p = entry.unwrap().path();
        if p.extension().and_then(|e| e.to_str()) != Some("toml") {
            continue;
        }
        let cfg = persuasion_lab::harness::load_config(&p, &Overrides::default())
            .unwrap_or_else(|e| panic!("{}: {e}", p.display()));
        let env = cfg.load_environment().unwrap();
        cfg.behavioral(&env).unwrap();
        if !cfg.evaluation.is_empty() {
            cfg.evaluations(&env).unwrap();
        }
        if cfg.search.is_some() {
            cfg.search_family(&env).unwrap();
        }
        n += 1;
    }
    assert!(n >= 10);
    let _ = ExperimentConfig::load(dir().join("solve_bp_e2.toml")).unwrap();
}
