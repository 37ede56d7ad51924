use chrono::NaiveDate;
use deepalloc::agents::{PolicyKind, PolicySpec, PortfolioVectorMemory, WeightVector, PVM_TAIL};
use deepalloc::backtest::{portfolio_value_step, roll_weights, CostModel};
use deepalloc::market::{price_relatives, split_train_test, synth_gbm, PriceSeries, SynthSpec};
use deepalloc::numerics::AdamState;
use deepalloc::trainer::{build_batch_objective, evaluate, train, train_step, train_with, TrainConfig};

fn market(len: usize, seed: u64) -> PriceSeries {
    let spec = SynthSpec { drift: vec![0.001, 0.0, -0.0005], ..SynthSpec::uniform(3, len, 0.0, 0.01, seed) };
    synth_gbm(&spec).unwrap()
}

fn quick(kind: PolicyKind) -> TrainConfig {
    TrainConfig { steps: 12, batch_size: 8, window: 10, units: 4, seed: 3, learning_rate: 0.01, ..TrainConfig::new(kind) }
}

fn shuffled_pvm(n: usize, len: usize) -> PortfolioVectorMemory<f64> {
    let mut pvm = PortfolioVectorMemory::new(n, PVM_TAIL);
    for t in 0..len {
        let raw: Vec<f64> = (0..n).map(|i| 1.0 + ((t * 7 + i * 3) % 5) as f64).collect();
        let s: f64 = raw.iter().sum();
        pvm.write(t, WeightVector::new(raw.iter().map(|v| v / s).collect()).unwrap()).unwrap();
    }
    pvm
}

#[test]
fn zero_learning_rate_keeps_parameters() {
    let series = market(80, 1);
    for kind in PolicyKind::ALL {
        let cfg = TrainConfig { learning_rate: 0.0, ..quick(kind) };
        let (trained, history) = train(&cfg, &series).unwrap();
        let fresh = PolicySpec::init_with(cfg.policy_shape(3), cfg.seed).unwrap();
        assert_eq!(trained.params, fresh.params);
        assert_eq!(history.len(), 12);
    }
}

#[test]
fn zero_steps_returns_initialization() {
    let series = market(80, 1);
    let cfg = TrainConfig { steps: 0, ..quick(PolicyKind::Cnn) };
    let (spec, history) = train(&cfg, &series).unwrap();
    assert_eq!(spec, PolicySpec::init_with(cfg.policy_shape(3), cfg.seed).unwrap());
    assert!(history.is_empty());
}

#[test]
fn flat_market_has_no_gradient() {
    let d0 = NaiveDate::from_ymd_opt(2021, 1, 4).unwrap();
    let dates: Vec<NaiveDate> = (0..40).map(|k| d0 + chrono::Days::new(k)).collect();
    let series = PriceSeries::from_closes(vec!["A".into(), "B".into(), "C".into()], dates, vec![10.0; 120]).unwrap();
    for kind in PolicyKind::ALL {
        let spec = PolicySpec::init_with(quick(kind).policy_shape(3), 5).unwrap();
        let pvm = PortfolioVectorMemory::new(3, PVM_TAIL);
        let mut obj = build_batch_objective(&spec, &series, &(12..20).collect::<Vec<_>>(), &pvm, 0.0005, None).unwrap();
        assert_eq!(obj.value(), Some(0.0));
        let grads = obj.graph.backward().unwrap();
        let norm: f64 = grads.values().map(|g| g.norm_sq()).sum::<f64>().sqrt();
        assert!(norm <= 1e-10, "{kind}: gradient norm {norm}");
    }
}

#[test]
fn objective_is_mean_log_of_value_steps() {
    let series = market(90, 4);
    let pvm = shuffled_pvm(3, 90);
    let cost = CostModel::default();
    for kind in PolicyKind::ALL {
        let spec = PolicySpec::init_with(quick(kind).policy_shape(3), 2).unwrap();
        let batch: Vec<usize> = (30..42).collect();
        let obj = build_batch_objective(&spec, &series, &batch, &pvm, cost.mu_c, None).unwrap();
        let mut total = 0.0;
        for (&t, w) in batch.iter().zip(obj.weight_values()) {
            let held = roll_weights(pvm.get(t - 1), &price_relatives(&series, t, false).unwrap()).unwrap();
            let y = price_relatives(&series, t + 1, false).unwrap();
            total += portfolio_value_step(1.0, &w, &held, &y, cost).unwrap().value.ln();
        }
        let expected = total / batch.len() as f64;
        assert!((obj.value().unwrap() - expected).abs() < 1e-10, "{kind}");
    }
}

#[test]
fn small_step_increases_the_batch_objective() {
    let series = market(90, 6);
    for kind in PolicyKind::ALL {
        let cfg = TrainConfig { learning_rate: 1e-4, dropout: 0.0, ..quick(kind) };
        let mut spec = PolicySpec::init_with(cfg.policy_shape(3), 8).unwrap();
        let batch: Vec<usize> = (40..56).collect();
        let snapshot = shuffled_pvm(3, 90);
        let before = build_batch_objective(&spec, &series, &batch, &snapshot, cfg.cost_rate, None).unwrap().value().unwrap();
        let mut pvm = snapshot.clone();
        let mut adam = AdamState::new(spec.params.iter().map(|(_, t)| t));
        train_step(&mut spec, &batch, &series, &mut pvm, &cfg, &mut adam, None).unwrap();
        let after = build_batch_objective(&spec, &series, &batch, &snapshot, cfg.cost_rate, None).unwrap().value().unwrap();
        assert!(after > before, "{kind}: {before} -> {after}");
    }
}

#[test]
fn training_is_deterministic() {
    let series = market(100, 2);
    for kind in PolicyKind::ALL {
        let (a, ha) = train(&quick(kind), &series).unwrap();
        let (b, hb) = train(&quick(kind), &series).unwrap();
        assert_eq!(a, b);
        assert_eq!(ha.rewards, hb.rewards);
    }
}

#[test]
fn checkpoints_reproduce_backtests() {
    let series = market(160, 12);
    let (train_seg, test_seg) = split_train_test(&series, 0.6, 10).unwrap();
    for kind in PolicyKind::ALL {
        let cfg = TrainConfig { checkpoint_every: Some(5), ..quick(kind) };
        let mut saved = Vec::new();
        let (spec, _) = train_with(&cfg, &train_seg, &mut |step, s| {
            saved.push((step, s.to_json()?));
            Ok(())
        })
        .unwrap();
        assert_eq!(saved.iter().map(|(s, _)| *s).collect::<Vec<_>>(), vec![5, 10, 12]);
        let restored = PolicySpec::from_json(&saved.last().unwrap().1).unwrap();
        assert_eq!(restored, spec);
        let cost = CostModel::default();
        assert_eq!(evaluate(&restored, &test_seg, cost).unwrap(), evaluate(&spec, &test_seg, cost).unwrap());
    }
}

#[test]
fn swapping_assets_swaps_weights() {
    let series = market(120, 3);
    let (_, test_seg) = split_train_test(&series, 0.5, 10).unwrap();
    let names: Vec<String> = test_seg.tickers().iter().rev().cloned().collect();
    let reversed = test_seg.select(&names).unwrap();
    for kind in PolicyKind::ALL {
        let spec = PolicySpec::init_with(quick(kind).policy_shape(3), 4).unwrap();
        let a = evaluate(&spec, &test_seg, CostModel::default()).unwrap();
        let b = evaluate(&spec, &reversed, CostModel::default()).unwrap();
        for (wa, wb) in a.weights.iter().zip(&b.weights) {
            for i in 0..3 {
                assert!((wa[i] - wb[2 - i]).abs() < 1e-12, "{kind}");
            }
        }
        assert!((a.final_value() - b.final_value()).abs() < 1e-12);
    }
}
