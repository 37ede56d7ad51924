use std::path::Path;

use deepalloc::market::{synth_gbm, write_ohlc, SynthSpec};
use deepalloc_cli::pipeline::{MetricsTable, METRIC_COLUMNS};
use deepalloc_cli::{run, CliError, Command, FlagOverrides, RunConfig};

fn file_config(dir: &Path, strategies: &str, extra: &str) -> RunConfig {
    let data = dir.join("prices.csv");
    if !data.exists() {
        let series = synth_gbm(&SynthSpec::uniform(3, 300, 0.0003, 0.012, 4)).unwrap();
        write_ohlc(&series, std::fs::File::create(&data).unwrap()).unwrap();
    }
    RunConfig::from_toml(&format!(
        "seed = 1\nstrategies = [{strategies}]\noutput_dir = \"{}\"\nwindow = 10\n\n[data]\npath = \"{}\"\n{extra}",
        dir.join("out").display(),
        data.display()
    ))
    .unwrap()
}

fn table(dir: &Path) -> MetricsTable {
    serde_json::from_slice(&std::fs::read(dir.join("out/metrics.json")).unwrap()).unwrap()
}

#[test]
fn compare_lists_strategies_in_configured_order() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = file_config(dir.path(), r#""risk_parity", "equal_weight", "min_variance""#, "");
    let report = run(Command::Compare, cfg.clone()).unwrap();
    assert!(report.table.is_some());
    let t = table(dir.path());
    assert_eq!(t.columns, METRIC_COLUMNS);
    assert_eq!(t.rows.iter().map(|r| r.strategy.as_str()).collect::<Vec<_>>(), ["risk_parity", "equal_weight", "min_variance"]);
    let csv = std::fs::read_to_string(dir.path().join("out/metrics.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "strategy,Total Returns,Sharpe Ratio,Max Drawdown,Daily Turnover");
    assert_eq!(csv.lines().count(), 4);

    let single = file_config(dir.path(), r#""equal_weight""#, "");
    run(Command::Compare, single).unwrap();
    assert_eq!(table(dir.path()).rows.len(), 1);
}

#[test]
fn report_rejects_stale_results() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = file_config(dir.path(), r#""equal_weight", "mean_variance""#, "");
    run(Command::Compare, cfg.clone()).unwrap();
    let report = run(Command::Report, cfg.clone()).unwrap();
    for f in ["plot_values.csv", "plot_drawdowns.csv", "plot_stack_equal_weight.csv", "plot_stack_mean_variance.csv"] {
        assert!(report.files.iter().any(|p| p.ends_with(f)), "missing {f}");
    }
    let mut changed = cfg;
    changed.apply(&FlagOverrides { cost_bps: Some(10.0), ..Default::default() }).unwrap();
    assert!(matches!(run(Command::Report, changed), Err(CliError::Mismatch(_))));
}

#[test]
fn trained_checkpoints_are_reused() {
    let dir = tempfile::tempdir().unwrap();
    let extra = "[strategy.cnn]\nsteps = 5\nbatch_size = 8\nunits = 3\n";
    let cfg = file_config(dir.path(), r#""cnn", "equal_weight""#, extra);
    let report = run(Command::Train, cfg.clone()).unwrap();
    assert!(report.files.iter().any(|p| p.ends_with("checkpoint_cnn.json")));
    assert!(dir.path().join("out/manifest.json").exists());
    run(Command::Compare, cfg.clone()).unwrap();
    assert_eq!(table(dir.path()).rows.len(), 2);

    // Narrowing the strategy set keeps the checkpoint valid.
    let mut narrow = cfg.clone();
    narrow.apply(&FlagOverrides { strategies: Some("cnn".into()), ..Default::default() }).unwrap();
    run(Command::Backtest, narrow).unwrap();
    let first = std::fs::read(dir.path().join("out/metrics.json")).unwrap();

    // Different training settings must not silently pick up the stored weights.
    let retuned = file_config(dir.path(), r#""cnn", "equal_weight""#, "[strategy.cnn]\nsteps = 6\nbatch_size = 8\nunits = 3\n");
    match run(Command::Compare, retuned) {
        Err(CliError::Strategies(failed)) => assert!(failed.len() == 1 && failed[0].0 == "cnn" && failed[0].1.contains("rerun `train`")),
        other => panic!("expected a strategy failure, got {other:?}"),
    }
    assert_eq!(std::fs::read(dir.path().join("out/metrics.json")).unwrap(), first);
}

#[test]
fn bad_configs_name_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = file_config(dir.path(), r#""equal_weight""#, "");
    let text = cfg.to_toml();
    let err = RunConfig::from_toml(&text.replace("window = 10", "window = 1")).unwrap_err().to_string();
    assert!(err.contains("window"), "{err}");
    let err = RunConfig::from_toml(&format!("{text}\n[strategy.equal_weight]\nsteps = 3\n")).unwrap_err().to_string();
    assert!(err.contains("strategy.equal_weight"), "{err}");
}
