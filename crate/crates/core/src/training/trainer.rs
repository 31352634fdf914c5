use std::fs::{self, OpenOptions};
use std::io::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::optim::{clip_grad_norm, cosine_lr, AdamW, AdamWConfig};
use crate::autodiff::Tape;
use crate::data::{sample_negatives, EncodedExample};
use crate::error::{Error, Result};
use crate::evaluation::{evaluate, ScoreMode};
use crate::metrics::MetricRecord;
use crate::model::{Checkpoint, MaskMode, Model, TrainingState, TurnedHistory};
use crate::objectives::{joint_loss, CandidateInstance, ObjectiveMode};

// Stream tag separating the epoch-shuffle RNG from the per-step sampling RNG.
const SHUFFLE_SALT: u64 = 0x5348_5546_464c_4531;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Negatives per positive.
    pub k: usize,
    pub lr_peak: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    /// Defaults to 5% of `total_steps`.
    pub warmup_steps: Option<u64>,
    /// Length of the schedule; training stops here even if epochs remain.
    /// Defaults to `epochs` full passes.
    pub total_steps: Option<u64>,
    /// Examples per update; instance losses are averaged.
    pub batch_size: usize,
    pub max_grad_norm: Option<f64>,
    pub seed: u64,
    pub objective: ObjectiveMode,
    pub mask: MaskMode,
    /// Validate every this many updates (0: only at the end).
    pub eval_every: u64,
    /// Size of the validation split held out from the training examples.
    pub val_examples: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let adam = AdamWConfig::default();
        Self {
            epochs: 1,
            k: 4,
            lr_peak: 3e-4,
            beta1: adam.beta1,
            beta2: adam.beta2,
            eps: adam.eps,
            weight_decay: adam.weight_decay,
            warmup_steps: None,
            total_steps: None,
            batch_size: 1,
            max_grad_norm: Some(1.0),
            seed: 0,
            objective: ObjectiveMode::Joint,
            mask: MaskMode::Standard,
            eval_every: 0,
            val_examples: 100,
        }
    }
}

impl TrainConfig {
    pub fn adamw(&self) -> AdamWConfig {
        AdamWConfig {
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
            weight_decay: self.weight_decay,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.to_string()));
        if self.k == 0 {
            return fail("k must be at least 1");
        }
        if self.batch_size == 0 {
            return fail("batch_size must be at least 1");
        }
        if !(self.lr_peak > 0.0 && self.lr_peak.is_finite()) {
            return fail("lr_peak must be positive");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return fail("betas must lie in [0, 1)");
        }
        if self.eps <= 0.0 || self.weight_decay < 0.0 {
            return fail("eps must be positive and weight_decay non-negative");
        }
        if let (Some(w), Some(t)) = (self.warmup_steps, self.total_steps) {
            if w > t {
                return fail("warmup_steps exceeds total_steps");
            }
        }
        if self.max_grad_norm.is_some_and(|n| n <= 0.0) {
            return fail("max_grad_norm must be positive");
        }
        Ok(())
    }

    pub fn steps_per_epoch(&self, n_examples: usize) -> u64 {
        n_examples.div_ceil(self.batch_size) as u64
    }

    /// `(warmup, total)` for a training set of `n_examples`.
    pub fn schedule(&self, n_examples: usize) -> (u64, u64) {
        let total = self
            .total_steps
            .unwrap_or(self.epochs as u64 * self.steps_per_epoch(n_examples));
        let warmup = self.warmup_steps.unwrap_or((total as f64 * 0.05).round() as u64);
        (warmup.min(total), total)
    }
}

/// Splits off the last `n_val` examples as a validation set.
pub fn holdout_split(examples: &[EncodedExample], n_val: usize) -> Result<(&[EncodedExample], &[EncodedExample])> {
    if n_val >= examples.len() {
        return Err(Error::Config(format!(
            "val_examples ({n_val}) leaves no training data out of {}",
            examples.len()
        )));
    }
    Ok(examples.split_at(examples.len() - n_val))
}

/// One line of the metric log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub step: u64,
    pub lr: f64,
    pub loss_d: Option<f64>,
    pub loss_p: Option<f64>,
    pub tau: f64,
    pub val: Option<MetricRecord>,
}

impl LogRecord {
    pub fn to_line(&self) -> String {
        let opt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |v| format!("{v:.6}"));
        let mut s = format!(
            "step={} lr={:.6e} loss_d={} loss_p={} tau={:.6}",
            self.step,
            self.lr,
            opt(self.loss_d),
            opt(self.loss_p),
            self.tau
        );
        if let Some(v) = &self.val {
            s.push_str(&format!(
                " val_mrr={:.6} val_ndcg5={:.6} val_ndcg10={:.6} val_hr5={:.6} val_hr10={:.6}",
                v.mrr, v.ndcg5, v.ndcg10, v.hr5, v.hr10
            ));
        }
        s
    }
}

/// Mean losses of one update.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepStats {
    pub loss: f64,
    pub loss_d: Option<f64>,
    pub loss_p: Option<f64>,
    pub instances: usize,
}

/// Accumulates the mean joint loss gradient over `batch` into the model's
/// store (gradients are zeroed first). Parameters are not updated.
pub fn accumulate_batch(
    model: &mut Model,
    batch: &[(&TurnedHistory, CandidateInstance)],
    objective: ObjectiveMode,
    masks: MaskMode,
) -> Result<StepStats> {
    if batch.is_empty() {
        return Err(Error::contract("empty batch"));
    }
    model.store_mut().zero_grad();
    let n = batch.len() as f64;
    let (mut loss, mut loss_d, mut loss_p) = (0.0, 0.0, 0.0);
    for (history, inst) in batch {
        let mut t = Tape::new();
        let jl = joint_loss(&mut t, model, history, inst, objective, masks)?;
        loss += t.value(jl.loss).item() / n;
        if let Some(d) = jl.loss_d {
            loss_d += t.value(d).item() / n;
        }
        if let Some(p) = jl.loss_p {
            loss_p += t.value(p).item() / n;
        }
        let scaled = t.scale(jl.loss, 1.0 / n);
        t.backward_into(scaled, model.store_mut())?;
    }
    Ok(StepStats {
        loss,
        loss_d: objective.uses_disc().then_some(loss_d),
        loss_p: objective.uses_ppl().then_some(loss_p),
        instances: batch.len(),
    })
}

/// Gradient accumulation, optional clipping and one AdamW update. A
/// non-finite gradient aborts before any parameter changes.
pub fn train_step(
    model: &mut Model,
    opt: &mut AdamW,
    batch: &[(&TurnedHistory, CandidateInstance)],
    objective: ObjectiveMode,
    masks: MaskMode,
    lr: f64,
    max_grad_norm: Option<f64>,
) -> Result<StepStats> {
    let stats = accumulate_batch(model, batch, objective, masks)?;
    if let Some(max) = max_grad_norm {
        clip_grad_norm(model.store_mut(), max);
    }
    opt.step(model.store_mut(), lr)?;
    Ok(stats)
}

/// Where and how training writes its artifacts.
#[derive(Clone, Debug, Default)]
pub struct TrainOptions {
    /// Receives `best.ckpt`, `last.ckpt` and `train.log`.
    pub out_dir: Option<PathBuf>,
    /// Optimizer state to resume from; the step counter continues from it.
    pub resume: Option<TrainingState>,
    /// Echo log lines to stderr.
    pub verbose: bool,
    /// Stop once the step counter reaches this value, leaving the schedule
    /// untouched so that a later resume finishes the same run.
    pub stop_after: Option<u64>,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Model with the best validation MRR (the last model without validation).
    pub best: Model,
    pub best_step: u64,
    pub best_val: Option<MetricRecord>,
    pub last: Model,
    pub optimizer: TrainingState,
    pub log: Vec<LogRecord>,
}

struct LogSink {
    file: Option<fs::File>,
    verbose: bool,
    records: Vec<LogRecord>,
}

impl LogSink {
    fn push(&mut self, rec: LogRecord) -> Result<()> {
        let line = rec.to_line();
        if let Some(f) = &mut self.file {
            writeln!(f, "{line}")?;
        }
        if self.verbose {
            eprintln!("{line}");
        }
        self.records.push(rec);
        Ok(())
    }
}

fn epoch_order(seed: u64, epoch: u64, n: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ SHUFFLE_SALT);
    rng.set_stream(epoch);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    order
}

fn save_checkpoint(dir: &Option<PathBuf>, name: &str, model: &Model, cfg: &TrainConfig, opt: &AdamW) -> Result<Option<PathBuf>> {
    let Some(dir) = dir else { return Ok(None) };
    let path = dir.join(name);
    Checkpoint::from_model(model, cfg.seed, Some(opt.state())).save(&path)?;
    Ok(Some(path))
}

/// Trains `model` on `train`, validating on `val` with the score matching the
/// objective, and keeps the best model by validation MRR.
///
/// Update `s` (1-based) uses epoch `(s-1) / steps_per_epoch` of a seeded
/// shuffle and a sampling RNG keyed by `(seed, s)`, so a resumed run replays
/// exactly the updates an uninterrupted one would have made.
pub fn train(
    mut model: Model,
    train: &[EncodedExample],
    val: &[EncodedExample],
    cfg: &TrainConfig,
    options: TrainOptions,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::contract("training set is empty"));
    }
    let mut opt = match options.resume {
        Some(state) => AdamW::from_state(cfg.adamw(), model.store(), state)?,
        None => AdamW::new(cfg.adamw(), model.store()),
    };
    let mut sink = LogSink {
        file: match &options.out_dir {
            Some(dir) => {
                fs::create_dir_all(dir)?;
                Some(OpenOptions::new().create(true).append(true).open(dir.join("train.log"))?)
            }
            None => None,
        },
        verbose: options.verbose,
        records: Vec::new(),
    };
    let spe = cfg.steps_per_epoch(train.len());
    let (warmup, total) = cfg.schedule(train.len());
    let score_mode = ScoreMode::for_objective(cfg.objective);
    let validate = |m: &Model| -> Result<Option<MetricRecord>> {
        if val.is_empty() {
            return Ok(None);
        }
        Ok(Some(evaluate(m, val, score_mode, cfg.mask)?.summary.mean))
    };

    let mut best: Option<(Model, u64, MetricRecord)> = None;
    let mut order_epoch = None;
    let mut order = Vec::new();
    let end = options.stop_after.map_or(total, |s| s.min(total));
    while opt.steps() < end {
        let step = opt.steps() + 1;
        let epoch = (step - 1) / spe;
        if order_epoch != Some(epoch) {
            order = epoch_order(cfg.seed, epoch, train.len());
            order_epoch = Some(epoch);
        }
        let b = ((step - 1) % spe) as usize;
        let picks = &order[b * cfg.batch_size..((b + 1) * cfg.batch_size).min(train.len())];
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(step);
        let mut batch = Vec::new();
        for &i in picks {
            let ex = &train[i];
            for inst in sample_negatives(ex, i, cfg.k, &mut rng)? {
                batch.push((&ex.history, inst));
            }
        }
        let lr = cosine_lr(step, warmup, total, cfg.lr_peak);
        let stats = accumulate_batch(&mut model, &batch, cfg.objective, cfg.mask)?;
        let reason = if stats.loss.is_finite() {
            if let Some(max) = cfg.max_grad_norm {
                clip_grad_norm(model.store_mut(), max);
            }
            match opt.step(model.store_mut(), lr) {
                Ok(()) => None,
                Err(Error::NonFiniteGrad(name)) => Some(format!("non-finite gradient in `{name}`")),
                Err(e) => return Err(e),
            }
        } else {
            Some("loss is not finite".to_string())
        };
        if let Some(reason) = reason {
            let saved = save_checkpoint(&options.out_dir, "last_good.ckpt", &model, cfg, &opt)?;
            return Err(Error::Diverged {
                step,
                reason,
                last_good_step: step - 1,
                saved,
            });
        }
        let due = step == total || (cfg.eval_every > 0 && step % cfg.eval_every == 0);
        let val_metrics = if due { validate(&model)? } else { None };
        if let Some(v) = val_metrics {
            if best.as_ref().is_none_or(|(_, _, b)| v.mrr > b.mrr) {
                save_checkpoint(&options.out_dir, "best.ckpt", &model, cfg, &opt)?;
                best = Some((model.clone(), step, v));
            }
        }
        sink.push(LogRecord {
            step,
            lr,
            loss_d: stats.loss_d,
            loss_p: stats.loss_p,
            tau: model.tau(),
            val: val_metrics,
        })?;
    }
    save_checkpoint(&options.out_dir, "last.ckpt", &model, cfg, &opt)?;
    let (best, best_step, best_val) = match best {
        Some((m, s, v)) => (m, s, Some(v)),
        None => {
            save_checkpoint(&options.out_dir, "best.ckpt", &model, cfg, &opt)?;
            (model.clone(), opt.steps(), None)
        }
    };
    Ok(TrainOutcome {
        best,
        best_step,
        best_val,
        last: model,
        optimizer: opt.state(),
        log: sink.records,
    })
}

/// Step numbers of a metric log, in file order.
pub fn read_log_steps(path: impl AsRef<Path>) -> Result<Vec<u64>> {
    let p = path.as_ref();
    fs::read_to_string(p)?
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.split_whitespace()
                .find_map(|kv| kv.strip_prefix("step="))
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| Error::Parse {
                    path: p.display().to_string(),
                    line: i + 1,
                    msg: "missing step field".into(),
                })
        })
        .collect()
}
