use almostgraph::config::{bundled, Config, BUNDLED};
use almostgraph::fnspace::{Grid, GridFn1, GridFnN};
use almostgraph::io::write_function;
use almostgraph::verify::{report_json, run};
use almostgraph::Error;

#[test]
fn scalar_tanh_passes_with_seed_42() {
    let report = run(&bundled("scalar_tanh").unwrap(), 42);
    let failed: Vec<_> = report.failed_checks().map(|c| c.name.clone()).collect();
    assert!(report.passed, "failed checks: {failed:?}");
    let contraction = report.contraction.unwrap();
    assert!(contraction.nontrivial_traces > 0);
    assert!(contraction.max_observed_ratio <= 0.55);
    assert!(report.levels.len() > 1);
}

#[test]
fn zero_rhs_passes_with_identity_maps() {
    let report = run(&bundled("zero_rhs").unwrap(), 42);
    assert!(report.passed);
    assert_eq!(report.check("chart.b_after_a").unwrap().worst, Some(0.0));
    assert_eq!(report.contraction.unwrap().nontrivial_traces, 0);
}

#[test]
fn reports_are_reproducible_json() {
    let config = bundled("scalar_tanh").unwrap();
    let a = report_json(&run(&config, 7));
    let b = report_json(&run(&config, 7));
    assert_eq!(a, b);
    let value: serde_json::Value = serde_json::from_str(&a).unwrap();
    assert_eq!(value["schema"], "almostgraph-report/1");
    assert_eq!(value["seed"], 7);
    assert!(value["checks"].as_array().unwrap().len() > 20);
}

#[test]
fn delay_outside_range_is_reported() {
    let mut config = bundled("scalar_tanh").unwrap();
    config.system.delays = vec!["2".into()];
    let report = run(&config, 42);
    assert!(!report.passed);
    let load = report.check("system.load").unwrap();
    assert!(!load.passed);
    assert!(load.note.as_deref().unwrap().contains("delay"), "{:?}", load.note);
    assert!(matches!(config.build_system(), Err(Error::DelayRange { .. })));
}

#[test]
fn bundled_configs_round_trip_through_toml() {
    for (name, _) in BUNDLED {
        let config = bundled(name).unwrap();
        let again = Config::from_toml(&config.to_toml(), None).unwrap();
        assert_eq!(again, config, "{name}");
        config.build_system().unwrap();
    }
}

#[test]
fn witness_file_is_resolved_next_to_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let grid = Grid::new(1.0, 32).unwrap();
    let witness = GridFnN::new(vec![GridFn1::constant(grid, 0.25)]).unwrap();
    write_function(&dir.path().join("w.json"), &witness).unwrap();
    let text = bundled("scalar_tanh")
        .unwrap()
        .to_toml()
        .replace("N = 256", "N = 32")
        .replace("constant = [0.0]", "file = \"w.json\"");
    let path = dir.path().join("system.toml");
    std::fs::write(&path, text).unwrap();
    let sys = Config::from_path(&path).unwrap().build_system().unwrap();
    assert_eq!(sys.witness(), &witness);
}

#[test]
fn config_errors() {
    assert!(matches!(
        Config::from_toml("schema = \"other/9\"\n[system]", None),
        Err(Error::Config(_))
    ));
    let mut config = bundled("zero_rhs").unwrap();
    config.chart.h_min = None;
    assert!(matches!(config.context(), Err(Error::Config(_))));
    let unknown = bundled("zero_rhs")
        .unwrap()
        .to_toml()
        .replace("[chart]", "[chart]\nbogus = 1");
    assert!(Config::from_toml(&unknown, None).is_err());
}
