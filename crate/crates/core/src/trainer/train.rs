use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::objective::build_batch_objective;
use super::sampler::sample_sequential_batch;
use super::{TrainConfig, TrainHistory};
use crate::agents::{PolicySpec, PortfolioVectorMemory, WeightVector, PVM_TAIL};
use crate::market::PriceSeries;
use crate::numerics::{adam_update, AdamConfig, AdamState, Direction, Tensor};
use crate::{Error, Result};

/// Outcome of one gradient step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    /// Batch objective at the pre-update parameters; `None` if the step was skipped.
    pub reward: Option<f64>,
    /// Global gradient norm before clipping.
    pub grad_norm: f64,
}

/// Tradable decision indices of a training series: a full window behind and a next day ahead.
pub fn training_range(series: &PriceSeries, window: usize) -> std::ops::Range<usize> {
    window.max(series.warmup()).max(1)..series.len().saturating_sub(1)
}

/// One ascent step on `batch`. Emitted weights are written back into the PVM.
pub fn train_step(
    spec: &mut PolicySpec<f64>,
    batch: &[usize],
    series: &PriceSeries,
    pvm: &mut PortfolioVectorMemory<f64>,
    cfg: &TrainConfig,
    adam: &mut AdamState<f64>,
    dropout_seed: Option<u64>,
) -> Result<StepReport> {
    let mut obj = build_batch_objective(spec, series, batch, pvm, cfg.cost_rate, dropout_seed)?;
    if let Some((k, bracket)) = obj.first_ruin() {
        log::warn!("skipping step: bracket {bracket} at t={} is not positive", batch[k]);
        return Ok(StepReport { reward: None, grad_norm: 0.0 });
    }
    let reward = obj.value();
    let grads = obj.graph.backward()?;
    let mut grads: Vec<Tensor<f64>> = spec.params.names().iter().map(|name| grads[name].clone()).collect();
    let grad_norm = grads.iter().map(|g| g.norm_sq()).sum::<f64>().sqrt();
    if let Some(clip) = cfg.grad_clip {
        if grad_norm > clip {
            let k = clip / grad_norm;
            for g in grads.iter_mut() {
                g.data_mut().iter_mut().for_each(|v| *v *= k);
            }
        }
    }
    let mut params = spec.params.to_vec();
    adam_update(&mut params, &grads, adam, cfg.learning_rate, Direction::Ascent, AdamConfig::default())?;
    spec.params.assign(params)?;
    for (&t, w) in batch.iter().zip(obj.weight_values()) {
        pvm.write(t, WeightVector::new(w)?)?;
    }
    Ok(StepReport { reward, grad_norm })
}

/// Trains a fresh policy on `series` (the training segment only).
pub fn train(cfg: &TrainConfig, series: &PriceSeries) -> Result<(PolicySpec<f64>, TrainHistory)> {
    train_with(cfg, series, &mut |_, _| Ok(()))
}

/// [`train`] with a checkpoint callback, invoked every `checkpoint_every` steps, after the
/// final step, and with the last finite parameters if training diverges.
pub fn train_with(
    cfg: &TrainConfig,
    series: &PriceSeries,
    on_checkpoint: &mut dyn FnMut(usize, &PolicySpec<f64>) -> Result<()>,
) -> Result<(PolicySpec<f64>, TrainHistory)> {
    cfg.validate()?;
    let mut spec = PolicySpec::init_with(cfg.policy_shape(series.n_assets()), cfg.seed)?;
    let mut history = TrainHistory::default();
    if cfg.steps == 0 {
        return Ok((spec, history));
    }
    let range = training_range(series, cfg.window);
    let mut pvm = PortfolioVectorMemory::new(series.n_assets(), PVM_TAIL);
    let mut adam = AdamState::new(spec.params.iter().map(|(_, t)| t));
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_d809);
    for step in 0..cfg.steps {
        let started = Instant::now();
        let batch = sample_sequential_batch(range.clone(), cfg.batch_size, step, cfg.stride())?;
        let last_good = spec.clone();
        let report = train_step(&mut spec, &batch, series, &mut pvm, cfg, &mut adam, Some(dropout_rng.random()))?;
        if let Some(name) = spec.params.first_non_finite() {
            let name = name.to_string();
            on_checkpoint(step, &last_good)?;
            return Err(Error::NonFinite(format!("parameter {name} diverged at step {step}")));
        }
        history.rewards.push(report.reward.unwrap_or(f64::NAN));
        if report.reward.is_none() {
            history.skipped.push(step);
        }
        history.param_norms.push(spec.params.norm());
        history.step_seconds.push(started.elapsed().as_secs_f64());
        if cfg.checkpoint_every.is_some_and(|every| (step + 1) % every == 0) && step + 1 != cfg.steps {
            on_checkpoint(step + 1, &spec)?;
        }
        if step % 500 == 0 {
            log::debug!("step {step}: reward {:?}, |∇| {:.3e}", report.reward, report.grad_norm);
        }
    }
    on_checkpoint(cfg.steps, &spec)?;
    Ok((spec, history))
}
