use std::fmt::Write as _;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use euslm_core::corpus::apportion;
use euslm_core::pretrain_data::PretrainExample;
use euslm_core::{rng, Error, Result};

use super::{Encoder, PretrainBatch};
use crate::graph::Graph;
use crate::optim::{AdamW, OptimizerConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PretrainConfig {
    pub optimizer: OptimizerConfig,
    pub seed: u64,
    /// Save every this many steps; 0 disables intermediate checkpoints.
    pub checkpoint_every: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub step: usize,
    pub lr: f64,
    pub mlm_loss: f64,
    pub nsp_loss: f64,
}

impl LossRecord {
    pub fn total(&self) -> f64 {
        self.mlm_loss + self.nsp_loss
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LossCurve {
    pub records: Vec<LossRecord>,
}

impl LossCurve {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,lr,mlm_loss,nsp_loss\n");
        for r in &self.records {
            writeln!(out, "{},{},{},{}", r.step, r.lr, r.mlm_loss, r.nsp_loss).unwrap();
        }
        out
    }

    /// Mean total loss of the `window` records ending at `step` (1-based).
    pub fn smoothed(&self, step: usize, window: usize) -> Option<f64> {
        let end = self.records.iter().position(|r| r.step == step)? + 1;
        let start = end.saturating_sub(window);
        let slice = &self.records[start..end];
        Some(slice.iter().map(LossRecord::total).sum::<f64>() / slice.len() as f64)
    }
}

/// Trains on `phases` in order (short sequences first). Steps are split
/// across phases in proportion to their example counts; each phase cycles
/// through its examples in a freshly shuffled order per pass.
/// `on_checkpoint` is called every `checkpoint_every` steps and after the last.
pub fn pretrain(
    encoder: &mut Encoder,
    phases: &[Vec<PretrainExample>],
    config: &PretrainConfig,
    mut on_checkpoint: impl FnMut(&Encoder, &AdamW, usize) -> Result<()>,
) -> Result<LossCurve> {
    let opt_cfg = &config.optimizer;
    opt_cfg.validate()?;
    let schedule = opt_cfg.schedule()?;
    let sizes: Vec<usize> = phases.iter().map(Vec::len).collect();
    let total_examples: usize = sizes.iter().sum();
    if total_examples == 0 {
        return Err(Error::Input("no pretraining examples".into()));
    }
    let ratios: Vec<f64> = sizes.iter().map(|&n| n as f64 / total_examples as f64).collect();
    let steps_per_phase = apportion(&ratios, opt_cfg.total_steps);

    let mut opt = AdamW::from_config(&encoder.store, opt_cfg);
    let mut curve = LossCurve::default();
    let mut step = 0;
    for (phase, (examples, &steps)) in phases.iter().zip(&steps_per_phase).enumerate() {
        if steps == 0 {
            continue;
        }
        let mut order_rng = rng::derived(config.seed, phase as u64);
        let mut order: Vec<usize> = (0..examples.len()).collect();
        let mut cursor = order.len();
        for batch_id in 0..steps {
            step += 1;
            let mut picked = Vec::with_capacity(opt_cfg.batch_size);
            while picked.len() < opt_cfg.batch_size.min(examples.len()) {
                if cursor == order.len() {
                    order.shuffle(&mut order_rng);
                    cursor = 0;
                }
                picked.push(&examples[order[cursor]]);
                cursor += 1;
            }
            let batch = PretrainBatch::new(&picked);
            let mut dropout_rng = rng::derived(config.seed, (1 << 40) | step as u64);
            let (mlm, nsp, mut grads) = {
                let mut g = Graph::new(&encoder.store);
                let out = encoder.forward_pretrain(&mut g, &batch, Some(&mut dropout_rng))?;
                let loss = Encoder::loss(&mut g, &out, &batch);
                let (mlm, nsp) = (g.value(loss.mlm).to_scalar(), g.value(loss.nsp).to_scalar());
                if !(mlm + nsp).is_finite() {
                    return Err(Error::Numeric(format!(
                        "non-finite loss at step {step} (phase {phase}, batch {batch_id}): mlm {mlm}, nsp {nsp}"
                    )));
                }
                (mlm, nsp, g.backward(loss.total))
            };
            if !grads.is_finite() {
                return Err(Error::Numeric(format!("non-finite gradient at step {step} (phase {phase}, batch {batch_id})")));
            }
            grads.clip_global_norm(opt_cfg.max_grad_norm);
            let lr = schedule.lr_at(step)?;
            opt.update(&mut encoder.store, &grads, lr);
            curve.records.push(LossRecord { step, lr, mlm_loss: mlm, nsp_loss: nsp });
            if config.checkpoint_every > 0 && step % config.checkpoint_every == 0 && step != opt_cfg.total_steps {
                on_checkpoint(encoder, &opt, step)?;
            }
        }
    }
    on_checkpoint(encoder, &opt, step)?;
    Ok(curve)
}
