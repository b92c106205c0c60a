//! Staged training loop: AdamW with decoupled weight decay, global-norm
//! gradient clipping, a linear warmup → linear-decay schedule, and a
//! freeze plan that trains the adapter first, then the encoder, then the
//! decoder through its LoRA matrices only.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use ndarray::{Array2, ArrayD, Ix2};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::autodiff::{DiffArray, Tape};
use crate::error::{CoreError, Result};
use crate::loss::{alignment_loss_resampled, output_loss, total_loss, LossBreakdown};
use crate::model::AumolModel;
use crate::params::{seeded_rng, ParamStore};
use crate::vocab::EOS;

/// Component groups the freeze schedule can unlock.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainableComponent {
    Adapter,
    Encoder,
    /// Only the LoRA A/B matrices of the decoder attention; base decoder
    /// weights never train.
    DecoderLora,
}

/// One stage of the schedule: how many epochs, and what trains.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stage {
    pub epochs: usize,
    pub trainable: BTreeSet<TrainableComponent>,
}

impl Stage {
    pub fn new(epochs: usize, trainable: &[TrainableComponent]) -> Self {
        Self {
            epochs,
            trainable: trainable.iter().copied().collect(),
        }
    }
}

/// Ordered freeze schedule. The default is the published 4-epoch plan:
/// two epochs adapter-only, one epoch encoder, one epoch decoder-LoRA.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StagePlan {
    pub stages: Vec<Stage>,
}

impl Default for StagePlan {
    fn default() -> Self {
        Self {
            stages: vec![
                Stage::new(2, &[TrainableComponent::Adapter]),
                Stage::new(1, &[TrainableComponent::Encoder]),
                Stage::new(1, &[TrainableComponent::DecoderLora]),
            ],
        }
    }
}

impl StagePlan {
    pub fn total_epochs(&self) -> usize {
        self.stages.iter().map(|s| s.epochs).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.stages.is_empty() {
            return Err(CoreError::config("stage plan has no stages"));
        }
        for (i, s) in self.stages.iter().enumerate() {
            if s.epochs == 0 {
                return Err(CoreError::config(format!("stage {i} has zero epochs")));
            }
            if s.trainable.is_empty() {
                return Err(CoreError::config(format!("stage {i} has an empty trainable set")));
            }
        }
        Ok(())
    }
}

/// Optimization hyperparameters. Full-scale reference values are a batch
/// of 64 and a 512-update warmup; the toy defaults keep CPU runs short.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub warmup_steps: usize,
    /// Steps the schedule decays over; 0 derives it from the plan and
    /// dataset size.
    pub total_steps: usize,
    pub clip_norm: f64,
    pub seed: u64,
    pub alpha: f64,
    pub base_lr: f64,
    pub weight_decay: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 4,
            warmup_steps: 16,
            total_steps: 0,
            clip_norm: 1.0,
            seed: 0,
            alpha: 1.0,
            base_lr: 3e-4,
            weight_decay: 0.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(CoreError::config("batch_size must be at least 1"));
        }
        if self.clip_norm <= 0.0 {
            return Err(CoreError::config("clip_norm must be positive"));
        }
        if self.base_lr <= 0.0 {
            return Err(CoreError::config("base_lr must be positive"));
        }
        if self.total_steps > 0 && self.warmup_steps >= self.total_steps {
            return Err(CoreError::config(format!(
                "warmup_steps {} must be below total_steps {}",
                self.warmup_steps, self.total_steps
            )));
        }
        Ok(())
    }
}

/// Piecewise-linear schedule: 0 → `base_lr` over `[0, warmup_steps]`, then
/// linear decay to 0 at `total_steps`. `cfg.total_steps` must be resolved.
pub fn lr_at(step: usize, cfg: &TrainConfig) -> Result<f64> {
    let total = cfg.total_steps;
    if total == 0 || cfg.warmup_steps >= total {
        return Err(CoreError::config(format!(
            "schedule needs warmup_steps {} < total_steps {total}",
            cfg.warmup_steps
        )));
    }
    if step > total {
        return Err(CoreError::contract(format!(
            "lr_at: step {step} outside schedule of {total} steps"
        )));
    }
    if step <= cfg.warmup_steps {
        Ok(cfg.base_lr * step as f64 / cfg.warmup_steps as f64)
    } else {
        Ok(cfg.base_lr * (total - step) as f64 / (total - cfg.warmup_steps) as f64)
    }
}

/// Scale all gradients so the global L2 norm is at most `max_norm`.
/// Returns the scale that was applied (1.0 when already within bounds).
pub fn clip_grad_norm(grads: &mut BTreeMap<String, ArrayD<f64>>, max_norm: f64) -> Result<f64> {
    if max_norm <= 0.0 {
        return Err(CoreError::config("max_norm must be positive"));
    }
    let mut sq = 0.0;
    for (name, g) in grads.iter() {
        for &v in g.iter() {
            if !v.is_finite() {
                return Err(CoreError::numeric_detail("clip_grad_norm", format!("gradient of `{name}`")));
            }
            sq += v * v;
        }
    }
    let norm = sq.sqrt();
    if norm <= max_norm {
        return Ok(1.0);
    }
    let scale = max_norm / norm;
    for g in grads.values_mut() {
        g.mapv_inplace(|v| v * scale);
    }
    Ok(scale)
}

/// Per-parameter first/second moments plus the shared step counter.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    m: BTreeMap<String, ArrayD<f64>>,
    v: BTreeMap<String, ArrayD<f64>>,
    pub step: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub base_lr: f64,
}

impl OptimizerState {
    pub fn new(weight_decay: f64, base_lr: f64) -> Self {
        Self {
            m: BTreeMap::new(),
            v: BTreeMap::new(),
            step: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            base_lr,
        }
    }
}

/// One AdamW update with bias correction and decoupled weight decay.
/// Parameters without a gradient entry (frozen ones) are untouched.
pub fn adamw_step(
    params: &mut ParamStore,
    grads: &BTreeMap<String, ArrayD<f64>>,
    state: &mut OptimizerState,
    lr: f64,
) -> Result<()> {
    state.step += 1;
    let t = state.step as f64;
    let bc1 = 1.0 - state.beta1.powf(t);
    let bc2 = 1.0 - state.beta2.powf(t);

    for (name, g) in grads {
        let p = params.get_mut(name)?;
        if !p.trainable {
            continue;
        }
        if p.value.shape() != g.shape() {
            return Err(CoreError::shape("adamw_step", p.value.shape(), g.shape()));
        }
        let m = state
            .m
            .entry(name.clone())
            .or_insert_with(|| ArrayD::zeros(p.value.raw_dim()));
        let v = state
            .v
            .entry(name.clone())
            .or_insert_with(|| ArrayD::zeros(p.value.raw_dim()));

        for ((pv, &gv), (mv, vv)) in p
            .value
            .iter_mut()
            .zip(g.iter())
            .zip(m.iter_mut().zip(v.iter_mut()))
        {
            if state.weight_decay != 0.0 {
                *pv *= 1.0 - lr * state.weight_decay;
            }
            *mv = state.beta1 * *mv + (1.0 - state.beta1) * gv;
            *vv = state.beta2 * *vv + (1.0 - state.beta2) * gv * gv;
            let m_hat = *mv / bc1;
            let v_hat = *vv / bc2;
            *pv -= lr * m_hat / (v_hat.sqrt() + state.eps);
            if !pv.is_finite() {
                return Err(CoreError::numeric_detail("adamw_step", format!("parameter `{name}`")));
            }
        }
    }
    Ok(())
}

/// Set exactly the stage's components trainable. Returns the trainable
/// names; errors if a requested component matches no parameters.
pub fn apply_stage(params: &mut ParamStore, stage: &Stage) -> Result<Vec<String>> {
    params.freeze_all();
    for comp in &stage.trainable {
        let matched = match comp {
            TrainableComponent::Adapter => params.mark_trainable(|n| n.starts_with("adapter.")),
            TrainableComponent::Encoder => params.mark_trainable(|n| n.starts_with("encoder.")),
            TrainableComponent::DecoderLora => params.mark_trainable(|n| {
                n.starts_with("decoder.") && (n.ends_with("_lora_a") || n.ends_with("_lora_b"))
            }),
        };
        if matched == 0 {
            return Err(CoreError::config(format!(
                "stage component {comp:?} matches no parameters"
            )));
        }
    }
    Ok(params.trainable_names())
}

/// One training utterance: fixed-shape features and the transcript token
/// ids (EOS is appended internally so termination is supervised).
#[derive(Debug, Clone)]
pub struct TrainSample {
    pub features: Array2<f64>,
    pub target_ids: Vec<usize>,
}

/// Progress marker handed to the training callback at each epoch end.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EpochMark {
    /// Epoch that just finished (0-based).
    pub epoch: usize,
    pub stage: usize,
    /// Global update count so far.
    pub step: usize,
    /// Whether this epoch ends its stage.
    pub stage_end: bool,
}

/// One line of the training log.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub epoch: usize,
    pub stage: usize,
    pub lr: f64,
    pub output_loss: f64,
    pub alignment_loss: f64,
    pub total: f64,
}

#[derive(Debug, Clone, Default)]
pub struct TrainLog {
    pub records: Vec<StepRecord>,
}

impl TrainLog {
    /// Line-delimited JSON, one record per step.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        for r in &self.records {
            let line = serde_json::to_string(r)
                .map_err(|e| CoreError::contract(format!("log serialization: {e}")))?;
            writeln!(w, "{line}").map_err(|e| CoreError::contract(format!("log write: {e}")))?;
        }
        Ok(())
    }
}

/// Run the staged loop over `dataset`. `on_epoch_end` fires after every
/// epoch (with [`EpochMark::stage_end`] set on stage boundaries), for
/// checkpointing.
///
/// Each update: forward every sample in the batch, average the losses,
/// backward, clip to `clip_norm`, AdamW at `lr_at(step)` (1-based, so the
/// logged schedule peaks exactly at `warmup_steps` and ends at 0).
/// Optimizer moments reset at stage boundaries. Deterministic for a fixed
/// seed.
pub fn train(
    model: &mut AumolModel,
    dataset: &[TrainSample],
    cfg: &TrainConfig,
    plan: &StagePlan,
    prompt: &str,
    mut on_epoch_end: impl FnMut(EpochMark, &AumolModel) -> Result<()>,
) -> Result<TrainLog> {
    cfg.validate()?;
    plan.validate()?;
    if dataset.is_empty() {
        return Err(CoreError::contract("train: empty dataset"));
    }

    let steps_per_epoch = dataset.len().div_ceil(cfg.batch_size);
    let derived_total = plan.total_epochs() * steps_per_epoch;
    let mut effective = cfg.clone();
    if effective.total_steps == 0 {
        effective.total_steps = derived_total;
    }
    if effective.warmup_steps >= effective.total_steps {
        return Err(CoreError::config(format!(
            "warmup_steps {} must be below total steps {}",
            effective.warmup_steps, effective.total_steps
        )));
    }

    let prompt_ids = model.prompt_ids(prompt);
    let mut log = TrainLog::default();
    let mut step = 0usize;
    let mut epoch = 0usize;

    for (stage_idx, stage) in plan.stages.iter().enumerate() {
        apply_stage(&mut model.params, stage)?;
        let mut opt = OptimizerState::new(effective.weight_decay, effective.base_lr);

        for stage_epoch in 0..stage.epochs {
            let mut order: Vec<usize> = (0..dataset.len()).collect();
            order.shuffle(&mut seeded_rng(effective.seed, &format!("epoch{epoch}")));

            for batch in order.chunks(effective.batch_size) {
                step += 1;
                let lr = lr_at(step.min(effective.total_steps), &effective)?;

                let (breakdown, grads) = batch_step(model, dataset, batch, &prompt_ids, effective.alpha)
                    .map_err(|e| annotate_step(e, step))?;

                let mut grads = grads;
                clip_grad_norm(&mut grads, effective.clip_norm).map_err(|e| annotate_step(e, step))?;
                adamw_step(&mut model.params, &grads, &mut opt, lr).map_err(|e| annotate_step(e, step))?;

                log.records.push(StepRecord {
                    step,
                    epoch,
                    stage: stage_idx,
                    lr,
                    output_loss: breakdown.output_loss,
                    alignment_loss: breakdown.alignment_loss,
                    total: breakdown.total,
                });
            }
            on_epoch_end(
                EpochMark {
                    epoch,
                    stage: stage_idx,
                    step,
                    stage_end: stage_epoch + 1 == stage.epochs,
                },
                model,
            )?;
            epoch += 1;
        }
    }
    Ok(log)
}

/// Forward/backward over one batch; returns the averaged loss terms and
/// the named gradients.
fn batch_step(
    model: &AumolModel,
    dataset: &[TrainSample],
    batch: &[usize],
    prompt_ids: &[usize],
    alpha: f64,
) -> Result<(LossBreakdown, BTreeMap<String, ArrayD<f64>>)> {
    let mut tape = Tape::new();
    let mut out_losses: Vec<DiffArray> = Vec::with_capacity(batch.len());
    let mut align_losses: Vec<DiffArray> = Vec::with_capacity(batch.len());

    for &i in batch {
        let sample = &dataset[i];
        let mut supervised = sample.target_ids.clone();
        supervised.push(EOS);

        let fwd = model.forward_utterance(&mut tape, &sample.features, prompt_ids, &supervised)?;
        let out = output_loss(&mut tape, fwd.logits, &fwd.labels)?;
        out_losses.push(out);

        // alignment target: decoder-embedding rows of the ground-truth
        // transcript tokens, detached by construction
        let e_u = embed_detached(model, &sample.target_ids)?;
        let align = alignment_loss_resampled(&mut tape, fwd.adapted_audio, &e_u.into_dyn())?;
        align_losses.push(align.loss);
    }

    let inv = 1.0 / batch.len() as f64;
    let out_mean = mean_of(&mut tape, &out_losses, inv)?;
    let align_mean = mean_of(&mut tape, &align_losses, inv)?;
    let align_weighted = tape.scale(align_mean, alpha)?;
    let total = tape.add(out_mean, align_weighted)?;

    let grads = tape.backward(total)?;
    let named: BTreeMap<String, ArrayD<f64>> = grads.named(&tape).into_iter().collect();

    let breakdown = total_loss(tape.scalar(out_mean)?, tape.scalar(align_mean)?, alpha);
    Ok((breakdown, named))
}

fn mean_of(tape: &mut Tape, losses: &[DiffArray], inv: f64) -> Result<DiffArray> {
    let mut acc = losses[0];
    for l in &losses[1..] {
        acc = tape.add(acc, *l)?;
    }
    tape.scale(acc, inv)
}

/// Embedding rows for `ids` read straight from the parameter store
/// (no tape, hence no gradient).
fn embed_detached(model: &AumolModel, ids: &[usize]) -> Result<Array2<f64>> {
    let table = model.params.get("decoder.embed")?;
    let t = table.value.view().into_dimensionality::<Ix2>().expect("2d");
    let d = t.ncols();
    let mut out = Array2::<f64>::zeros((ids.len().max(1), d));
    if ids.is_empty() {
        // degenerate empty transcript: a single zero row keeps shapes legal
        return Ok(out);
    }
    for (r, &id) in ids.iter().enumerate() {
        if id >= t.nrows() {
            return Err(CoreError::contract(format!("token id {id} outside vocabulary")));
        }
        out.row_mut(r).assign(&t.row(id));
    }
    Ok(out)
}

fn annotate_step(e: CoreError, step: usize) -> CoreError {
    match e {
        CoreError::Numeric { op, detail } => CoreError::Numeric {
            op,
            detail: Some(match detail {
                Some(d) => format!("aborted at step {step}: {d}"),
                None => format!("aborted at step {step}"),
            }),
        },
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{AumolModel, ModelConfig};
    use crate::params::seeded_rng;
    use crate::vocab::Vocabulary;
    use ndarray::IxDyn;
    use rand::Rng;

    fn cfg_total(total: usize) -> TrainConfig {
        TrainConfig {
            warmup_steps: 512,
            total_steps: total,
            base_lr: 2e-4,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn schedule_ramps_peaks_and_decays_to_zero() {
        let cfg = cfg_total(2048);
        assert_eq!(lr_at(0, &cfg).unwrap(), 0.0);
        assert_eq!(lr_at(512, &cfg).unwrap(), cfg.base_lr);
        assert_eq!(lr_at(2048, &cfg).unwrap(), 0.0);
        // strictly below the peak on either side
        assert!(lr_at(511, &cfg).unwrap() < cfg.base_lr);
        assert!(lr_at(513, &cfg).unwrap() < cfg.base_lr);
    }

    #[test]
    fn schedule_is_piecewise_linear_and_continuous() {
        let cfg = cfg_total(1024);
        for s in 1..512 {
            let d1 = lr_at(s, &cfg).unwrap() - lr_at(s - 1, &cfg).unwrap();
            let d2 = lr_at(s + 1, &cfg).unwrap() - lr_at(s, &cfg).unwrap();
            assert!((d1 - d2).abs() < 1e-15);
        }
        for s in 514..1024 {
            let d1 = lr_at(s, &cfg).unwrap() - lr_at(s - 1, &cfg).unwrap();
            let d2 = lr_at(s + 1, &cfg).unwrap() - lr_at(s, &cfg).unwrap();
            assert!((d1 - d2).abs() < 1e-15);
        }
    }

    #[test]
    fn schedule_rejects_out_of_range_steps() {
        let cfg = cfg_total(1024);
        assert!(matches!(lr_at(1025, &cfg), Err(CoreError::Contract(_))));
    }

    fn grads_of(values: &[(&str, Vec<f64>)]) -> BTreeMap<String, ArrayD<f64>> {
        values
            .iter()
            .map(|(n, v)| (n.to_string(), ArrayD::from_shape_vec(IxDyn(&[v.len()]), v.clone()).unwrap()))
            .collect()
    }

    #[test]
    fn clip_leaves_small_gradients_alone() {
        let mut g = grads_of(&[("a", vec![0.3, 0.4])]); // norm 0.5
        let scale = clip_grad_norm(&mut g, 1.0).unwrap();
        assert_eq!(scale, 1.0);
        assert_eq!(g["a"].as_slice().unwrap(), &[0.3, 0.4]);
    }

    #[test]
    fn clip_scales_large_gradients_to_the_bound() {
        let mut g = grads_of(&[("a", vec![1.2, 1.6])]); // norm 2.0
        let scale = clip_grad_norm(&mut g, 1.0).unwrap();
        assert!((scale - 0.5).abs() < 1e-12);
        let norm: f64 = g["a"].iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-9);
    }

    #[test]
    fn clip_norm_is_min_of_norm_and_bound() {
        let mut rng = seeded_rng(40, "clip");
        for _ in 0..50 {
            let n = rng.random_range(1..6);
            let vals: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
            let before: f64 = vals.iter().map(|v| v * v).sum::<f64>().sqrt();
            let mut g = grads_of(&[("p", vals)]);
            clip_grad_norm(&mut g, 1.0).unwrap();
            let after: f64 = g["p"].iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((after - before.min(1.0)).abs() < 1e-9);
        }
    }

    #[test]
    fn clip_reports_nonfinite_parameter_by_name() {
        let mut g = grads_of(&[("adapter.w1", vec![f64::NAN])]);
        let err = clip_grad_norm(&mut g, 1.0).unwrap_err();
        assert!(err.to_string().contains("adapter.w1"));
    }

    fn store_with(name: &str, v: Vec<f64>) -> ParamStore {
        let mut s = ParamStore::new();
        s.insert(name, ArrayD::from_shape_vec(IxDyn(&[v.len()]), v).unwrap());
        s.mark_trainable(|_| true);
        s
    }

    #[test]
    fn zero_gradients_without_decay_change_nothing() {
        let mut s = store_with("p", vec![1.5, -2.0]);
        let mut opt = OptimizerState::new(0.0, 1e-3);
        let g = grads_of(&[("p", vec![0.0, 0.0])]);
        adamw_step(&mut s, &g, &mut opt, 1e-3).unwrap();
        assert_eq!(s.get("p").unwrap().value.as_slice().unwrap(), &[1.5, -2.0]);
    }

    #[test]
    fn scalar_updates_match_hand_iterated_recurrence() {
        // two steps with constant gradient on one scalar, replayed by hand
        let (b1, b2, eps, lr, g) = (0.9, 0.999, 1e-8, 0.01, 0.3);
        let mut p_hand = 1.0f64;
        let (mut m, mut v) = (0.0f64, 0.0f64);
        for t in 1..=2 {
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let mh = m / (1.0 - b1.powi(t));
            let vh = v / (1.0 - b2.powi(t));
            p_hand -= lr * mh / (vh.sqrt() + eps);
        }

        let mut s = store_with("p", vec![1.0]);
        let mut opt = OptimizerState::new(0.0, lr);
        let grads = grads_of(&[("p", vec![g])]);
        adamw_step(&mut s, &grads, &mut opt, lr).unwrap();
        adamw_step(&mut s, &grads, &mut opt, lr).unwrap();
        let got = s.get("p").unwrap().value.as_slice().unwrap()[0];
        assert!((got - p_hand).abs() < 1e-15, "{got} vs {p_hand}");
    }

    #[test]
    fn decoupled_decay_shrinks_parameters_under_zero_gradient() {
        let mut s = store_with("p", vec![2.0]);
        let (lr, wd) = (0.1, 0.05);
        let mut opt = OptimizerState::new(wd, lr);
        let g = grads_of(&[("p", vec![0.0])]);
        adamw_step(&mut s, &g, &mut opt, lr).unwrap();
        let got = s.get("p").unwrap().value.as_slice().unwrap()[0];
        assert!((got - 2.0 * (1.0 - lr * wd)).abs() < 1e-15);
    }

    fn tiny_model(seed: u64) -> AumolModel {
        AumolModel::new(
            ModelConfig {
                n_mels: 8,
                d_enc: 8,
                enc_layers: 1,
                d_hidden_adapter: 6,
                d_llm: 8,
                dec_layers: 1,
                n_heads: 2,
                vocab_size: Vocabulary::char_level().size(),
                max_audio_frames: 32,
                max_text_len: 12,
                adapter_variant: crate::model::AdapterVariant::Full,
                downsample_factor: 2,
            },
            seed,
        )
        .unwrap()
    }

    fn tiny_dataset(seed: u64, n: usize) -> Vec<TrainSample> {
        let vocab = Vocabulary::char_level();
        let words = ["dose", "pain", "oral", "vein", "scan", "cast", "lung", "skin"];
        let mut rng = seeded_rng(seed, "dataset");
        (0..n)
            .map(|i| {
                let features = Array2::from_shape_fn((8, 16), |_| rng.random_range(-1.0..1.0));
                TrainSample {
                    features,
                    target_ids: vocab.encode(words[i % words.len()]),
                }
            })
            .collect()
    }

    #[test]
    fn stage_components_select_expected_parameter_sets() {
        let mut model = tiny_model(50);

        let names = apply_stage(&mut model.params, &Stage::new(1, &[TrainableComponent::Adapter])).unwrap();
        assert!(!names.is_empty() && names.iter().all(|n| n.starts_with("adapter.")));

        let names = apply_stage(&mut model.params, &Stage::new(1, &[TrainableComponent::Encoder])).unwrap();
        assert!(!names.is_empty() && names.iter().all(|n| n.starts_with("encoder.")));

        let names = apply_stage(&mut model.params, &Stage::new(1, &[TrainableComponent::DecoderLora])).unwrap();
        assert!(!names.is_empty());
        assert!(names.iter().all(|n| n.ends_with("_lora_a") || n.ends_with("_lora_b")));
        // base decoder weights are never in the set
        assert!(names.iter().all(|n| !n.ends_with(".wq") && !n.ends_with(".wv")));
    }

    #[test]
    fn training_reduces_loss_on_a_toy_dataset() {
        // 8 samples, 200 steps with everything trainable
        let mut model = tiny_model(51);
        let data = tiny_dataset(51, 8);
        let plan = StagePlan {
            stages: vec![Stage::new(
                100, // 8 samples / batch 4 = 2 steps per epoch -> 200 steps
                &[
                    TrainableComponent::Adapter,
                    TrainableComponent::Encoder,
                    TrainableComponent::DecoderLora,
                ],
            )],
        };
        let cfg = TrainConfig {
            batch_size: 4,
            warmup_steps: 16,
            base_lr: 3e-3,
            seed: 51,
            ..TrainConfig::default()
        };
        let log = train(&mut model, &data, &cfg, &plan, "t:", |_, _| Ok(())).unwrap();
        assert_eq!(log.records.len(), 200);
        let first = log.records.first().unwrap().total;
        let last = log.records.last().unwrap().total;
        assert!(last < first, "no improvement: {first} -> {last}");
    }

    #[test]
    fn frozen_parameters_are_bitwise_stable_within_stages() {
        let mut model = tiny_model(52);
        let data = tiny_dataset(52, 4);

        let all_bits = |m: &AumolModel| -> BTreeMap<String, Vec<u64>> {
            m.params
                .iter()
                .map(|(n, p)| (n.clone(), p.value.iter().map(|v| v.to_bits()).collect()))
                .collect()
        };
        let init = all_bits(&model);
        let mut snapshots: Vec<BTreeMap<String, Vec<u64>>> = Vec::new();

        let cfg = TrainConfig { seed: 52, batch_size: 2, warmup_steps: 2, ..TrainConfig::default() };
        train(&mut model, &data, &cfg, &StagePlan::default(), "t:", |mark, m| {
            if mark.stage_end {
                snapshots.push(all_bits(m));
            }
            Ok(())
        })
        .unwrap();

        let changed = |a: &BTreeMap<String, Vec<u64>>, b: &BTreeMap<String, Vec<u64>>, name: &str| a[name] != b[name];

        // stage 0 (adapter): everything but adapter.* identical to init
        for name in init.keys() {
            if !name.starts_with("adapter.") {
                assert!(!changed(&init, &snapshots[0], name), "{name} moved in stage 0");
            }
        }
        // stage 1 (encoder): adapter and decoder untouched relative to stage 0
        for name in init.keys() {
            if !name.starts_with("encoder.") {
                assert!(!changed(&snapshots[0], &snapshots[1], name), "{name} moved in stage 1");
            }
        }
        // stage 2 (decoder lora): only lora matrices move; base decoder
        // weights still bit-identical to their initialization
        for name in init.keys() {
            if !(name.ends_with("_lora_a") || name.ends_with("_lora_b")) {
                assert!(!changed(&snapshots[1], &snapshots[2], name), "{name} moved in stage 2");
            }
            if name.starts_with("decoder.") && !name.contains("_lora_") {
                assert!(!changed(&init, &snapshots[2], name), "decoder base {name} moved");
            }
        }
        // and something did train in each stage
        assert!(init.keys().any(|n| n.starts_with("adapter.") && changed(&init, &snapshots[0], n)));
        assert!(init.keys().any(|n| n.starts_with("encoder.") && changed(&snapshots[0], &snapshots[1], n)));
        assert!(init.keys().any(|n| n.contains("_lora_") && changed(&snapshots[1], &snapshots[2], n)));
    }

    #[test]
    fn same_seed_runs_are_bit_identical() {
        let run = || {
            let mut model = tiny_model(53);
            let data = tiny_dataset(53, 4);
            let cfg = TrainConfig { seed: 53, batch_size: 2, warmup_steps: 2, ..TrainConfig::default() };
            train(&mut model, &data, &cfg, &StagePlan::default(), "t:", |_, _| Ok(())).unwrap();
            model
                .params
                .iter()
                .map(|(n, p)| (n.clone(), p.value.iter().map(|v| v.to_bits()).collect::<Vec<_>>()))
                .collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn empty_dataset_is_rejected() {
        let mut model = tiny_model(54);
        let cfg = TrainConfig::default();
        assert!(matches!(
            train(&mut model, &[], &cfg, &StagePlan::default(), "t:", |_, _| Ok(())),
            Err(CoreError::Contract(_))
        ));
    }

    #[test]
    fn non_finite_values_abort_with_step_index() {
        // the engine rejects NaN/Inf at the op that first produces or
        // touches it; train() annotates the failing step
        let mut model = tiny_model(55);
        let data = tiny_dataset(55, 4);
        model.params.get_mut("adapter.b1").unwrap().value[[0]] = f64::NAN;
        let cfg = TrainConfig { seed: 55, batch_size: 4, warmup_steps: 1, ..TrainConfig::default() };
        let plan = StagePlan {
            stages: vec![Stage::new(4, &[TrainableComponent::Adapter])],
        };
        let err = train(&mut model, &data, &cfg, &plan, "t:", |_, _| Ok(())).unwrap_err();
        let msg = err.to_string();
        assert!(matches!(err, CoreError::Numeric { .. }));
        assert!(msg.contains("step 1"), "unhelpful error: {msg}");
    }
}
