//! Optimization: learning-rate schedules, Adam, weight averaging, early
//! stopping, the epoch loop and multi-seed summaries.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{make_batch, Instance, Vocabulary};
use crate::decode::{evaluate, pointer_sum_decode, EvalOptions, EvalReport, Prediction};
use crate::model::{Assignment, Model};
use crate::nn::{Mode, ParameterStore};
use crate::objective::{target_mass, LossBreakdown, ObjectiveError};
use crate::supervision::{NarrativeConfig, SupervisionKind};
use crate::{Error, Result};

/// `d_model^-0.5 * min(step^-0.5, step * warmup^-1.5)`.
pub fn noam_lr(d_model: usize, warmup: usize, step: usize) -> Result<f64> {
    if step == 0 {
        return Err(Error::Train("learning-rate steps count from 1".into()));
    }
    if d_model == 0 || warmup == 0 {
        return Err(Error::Config("noam schedule needs positive d_model and warmup".into()));
    }
    let s = step as f64;
    Ok((d_model as f64).powf(-0.5) * s.powf(-0.5).min(s * (warmup as f64).powf(-1.5)))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleKind {
    /// Constant rate for the recurrent baseline, warmup schedule otherwise.
    Auto,
    Constant,
    Noam,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Schedule {
    Constant(f64),
    Noam { d_model: usize, warmup: usize, factor: f64 },
}

impl Schedule {
    pub fn lr(&self, step: usize) -> Result<f64> {
        match *self {
            Schedule::Constant(lr) => Ok(lr),
            Schedule::Noam {
                d_model,
                warmup,
                factor,
            } => Ok(factor * noam_lr(d_model, warmup, step)?),
        }
    }
}

/// Adam with bias correction.
#[derive(Clone, Debug)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: u64,
}

impl Adam {
    pub fn new(store: &ParameterStore) -> Self {
        let zeros: Vec<Vec<f64>> = store.tensors().iter().map(|t| vec![0.0; t.len()]).collect();
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// Applies one update. A non-finite gradient rejects the whole step and
    /// leaves parameters and moments untouched.
    pub fn step(&mut self, store: &mut ParameterStore, grads: &[Vec<f64>], lr: f64) -> Result<()> {
        if grads.len() != self.m.len() {
            return Err(Error::Train(format!(
                "{} gradients for {} parameters",
                grads.len(),
                self.m.len()
            )));
        }
        for (p, g) in grads.iter().enumerate() {
            if g.len() != self.m[p].len() {
                return Err(Error::Train(format!(
                    "gradient of `{}` has the wrong size",
                    store.name(store_id(store, p))
                )));
            }
            if let Some(i) = g.iter().position(|x| !x.is_finite()) {
                let name = store.name(store_id(store, p)).to_string();
                log::warn!("rejected update: non-finite gradient at {name}[{i}]");
                return Err(Error::Train(format!("non-finite gradient at {name}[{i}]")));
            }
        }
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        for ((tensor, g), (m, v)) in store
            .tensors_mut()
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            for (k, w) in tensor.data_mut().iter_mut().enumerate() {
                m[k] = self.beta1 * m[k] + (1.0 - self.beta1) * g[k];
                v[k] = self.beta2 * v[k] + (1.0 - self.beta2) * g[k] * g[k];
                *w -= lr * (m[k] / c1) / ((v[k] / c2).sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

fn store_id(store: &ParameterStore, index: usize) -> crate::nn::ParamId {
    store.ids().nth(index).expect("index within store")
}

/// Rescales `grads` in place so their joint L2 norm is at most `max_norm`;
/// returns the norm before clipping.
pub fn clip_global_norm(grads: &mut [Vec<f64>], max_norm: f64) -> f64 {
    let norm = grads.iter().flatten().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm && norm > 0.0 {
        let scale = max_norm / norm;
        grads.iter_mut().flatten().for_each(|g| *g *= scale);
    }
    norm
}

/// Exponential moving average of every parameter.
#[derive(Clone, Debug)]
pub struct Ema {
    pub decay: f64,
    names: Vec<String>,
    shadow: Vec<Vec<f64>>,
}

impl Ema {
    pub fn new(store: &ParameterStore, decay: f64) -> Self {
        Self {
            decay,
            names: store.iter().map(|(n, _)| n.to_string()).collect(),
            shadow: store.tensors().iter().map(|t| t.data().to_vec()).collect(),
        }
    }

    fn check(&self, store: &ParameterStore) -> Result<()> {
        if store.len() != self.names.len() || store.iter().zip(&self.names).any(|((n, _), m)| n != m) {
            return Err(Error::Train(
                "moving-average paths differ from the parameter store".into(),
            ));
        }
        Ok(())
    }

    /// `shadow <- decay * shadow + (1 - decay) * param`.
    pub fn update(&mut self, store: &ParameterStore) -> Result<()> {
        self.check(store)?;
        let d = self.decay;
        for (s, t) in self.shadow.iter_mut().zip(store.tensors()) {
            s.iter_mut()
                .zip(t.data())
                .for_each(|(s, &p)| *s = d * *s + (1.0 - d) * p);
        }
        Ok(())
    }

    /// Exchanges the averaged and the live weights; calling it again
    /// restores the live weights.
    pub fn swap(&mut self, store: &mut ParameterStore) -> Result<()> {
        self.check(store)?;
        for (s, t) in self.shadow.iter_mut().zip(store.tensors_mut()) {
            s.swap_with_slice(t.data_mut());
        }
        Ok(())
    }

    pub fn shadow(&self, path: &str) -> Option<&[f64]> {
        self.names
            .iter()
            .position(|n| n == path)
            .map(|i| self.shadow[i].as_slice())
    }
}

/// Stops once accuracy has not improved for `patience` consecutive epochs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EarlyStopping {
    pub patience: usize,
    pub best_epoch: usize,
    pub best_accuracy: f64,
    pub epochs_since_improvement: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best_epoch: 0,
            best_accuracy: f64::NEG_INFINITY,
            epochs_since_improvement: 0,
        }
    }

    /// Records epoch `epoch` (1-based); returns `(improved, stop)`.
    pub fn observe(&mut self, epoch: usize, accuracy: f64) -> (bool, bool) {
        let improved = accuracy > self.best_accuracy;
        if improved {
            self.best_accuracy = accuracy;
            self.best_epoch = epoch;
            self.epochs_since_improvement = 0;
        } else {
            self.epochs_since_improvement += 1;
        }
        (improved, self.epochs_since_improvement >= self.patience)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub eval_batch_size: usize,
    pub schedule: ScheduleKind,
    pub lr: f64,
    pub warmup: usize,
    /// Multiplier on the warmup schedule.
    pub noam_factor: f64,
    pub ema_decay: f64,
    pub clip_norm: f64,
    pub patience: usize,
    pub min_count: usize,
    pub lowercase: bool,
    pub narrative: NarrativeConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            batch_size: 128,
            eval_batch_size: 64,
            schedule: ScheduleKind::Auto,
            lr: 0.001,
            warmup: 8000,
            noam_factor: 1.0,
            ema_decay: 0.9999,
            clip_norm: 5.0,
            patience: 2,
            min_count: 1,
            lowercase: false,
            narrative: NarrativeConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn schedule_for(&self, model: &Model) -> Schedule {
        let noam = match self.schedule {
            ScheduleKind::Auto => model.config.variant != crate::model::Variant::Base,
            ScheduleKind::Constant => false,
            ScheduleKind::Noam => true,
        };
        if noam {
            Schedule::Noam {
                d_model: model.config.d_model,
                warmup: self.warmup,
                factor: self.noam_factor,
            }
        } else {
            Schedule::Constant(self.lr)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.eval_batch_size == 0 {
            return Err(Error::Config("epochs and batch sizes must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.ema_decay) {
            return Err(Error::Config(format!(
                "ema_decay must lie in [0, 1), got {}",
                self.ema_decay
            )));
        }
        if self.patience == 0 {
            return Err(Error::Config("patience must be at least 1".into()));
        }
        Ok(())
    }
}

/// One line of the metrics file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "lowercase")]
pub enum MetricRecord {
    Step {
        step: usize,
        epoch: usize,
        lr: f64,
        grad_norm: f64,
        #[serde(flatten)]
        loss: LossBreakdown,
    },
    Epoch {
        epoch: usize,
        dev_accuracy: f64,
        best_epoch: usize,
        stopped: bool,
    },
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub seed: u64,
    pub best_epoch: usize,
    pub best_dev_accuracy: f64,
    pub epochs_run: usize,
    pub records: Vec<MetricRecord>,
    /// Averaged weights from the best epoch.
    pub best: ParameterStore,
}

/// Decodes every instance with the given weights.
pub fn predict(
    model: &Model,
    store: &ParameterStore,
    instances: &[Instance],
    vocab: &Vocabulary,
    batch_size: usize,
) -> Result<Vec<Prediction>> {
    let mut out = Vec::with_capacity(instances.len());
    for chunk in instances.chunks(batch_size.max(1)) {
        let refs: Vec<&Instance> = chunk.iter().collect();
        let batch = make_batch(&refs, vocab, &[], &NarrativeConfig::default())?;
        let fwd = model.forward(store, &batch, Mode::Eval, 0)?;
        for (b, inst) in chunk.iter().enumerate() {
            out.push(pointer_sum_decode(fwd.answer_probs.row(b), &inst.context)?);
        }
    }
    Ok(out)
}

pub fn evaluate_model(
    model: &Model,
    store: &ParameterStore,
    instances: &[Instance],
    vocab: &Vocabulary,
    batch_size: usize,
    options: &EvalOptions,
) -> Result<(EvalReport, Vec<Prediction>)> {
    let preds = predict(model, store, instances, vocab, batch_size)?;
    let words: Vec<String> = preds.iter().map(|p| p.predicted_word.clone()).collect();
    Ok((evaluate(instances, &words, options)?, preds))
}

/// Mean attention mass that the head named by `assignment` puts on its gold
/// targets, pooled over all supervised rows of `instances`. `None` when no
/// instance has a supervised row.
pub fn supervised_target_mass(
    model: &Model,
    store: &ParameterStore,
    instances: &[Instance],
    vocab: &Vocabulary,
    assignment: &Assignment,
    narrative: &NarrativeConfig,
) -> Result<Option<f64>> {
    let (mut total, mut rows) = (0.0, 0usize);
    for chunk in instances.chunks(32) {
        let refs: Vec<&Instance> = chunk.iter().collect();
        let batch = make_batch(&refs, vocab, &[assignment.kind], narrative)?;
        let fwd = model.forward(store, &batch, Mode::Eval, 0)?;
        for b in 0..batch.len() {
            let input = batch.instance(b);
            let attn = fwd.attention[b]
                .head(assignment.location, assignment.layer, assignment.head)
                .ok_or_else(|| Error::Config("assignment names a missing head".into()))?;
            for mass in target_mass(attn, &input.supervision[&assignment.kind])
                .into_iter()
                .flatten()
            {
                total += mass;
                rows += 1;
            }
        }
    }
    Ok((rows > 0).then(|| total / rows as f64))
}

fn step_seed(seed: u64, step: usize) -> u64 {
    seed ^ (step as u64).wrapping_mul(0xd1b5_4a32_d192_ed03)
}

/// Trains from freshly initialized weights.
///
/// After each epoch the averaged weights are scored on `dev`; the best ones
/// (and the matching live weights) are checkpointed under `out_dir` as
/// `best.ckpt` and `best_raw.ckpt`, and every step and epoch is appended to
/// `metrics.jsonl`.
#[allow(clippy::too_many_arguments)]
pub fn train_loop(
    model: &Model,
    mut store: ParameterStore,
    train: &[Instance],
    dev: &[Instance],
    vocab: &Vocabulary,
    config: &TrainConfig,
    seed: u64,
    out_dir: Option<&Path>,
) -> Result<TrainOutcome> {
    config.validate()?;
    model.check_parameters(&store)?;
    if train.is_empty() {
        return Err(Error::Data("training set is empty".into()));
    }
    if let Some(bad) = train.iter().find(|i| i.answer_positions(false).is_empty()) {
        return Err(Error::Data(format!(
            "training instance {} has no answer in its context",
            bad.id
        )));
    }
    let kinds: Vec<SupervisionKind> = model.config.supervision_kinds();
    let schedule = config.schedule_for(model);
    let mut adam = Adam::new(&store);
    let mut ema = Ema::new(&store, config.ema_decay);
    let mut stopper = EarlyStopping::new(config.patience);
    let mut records = Vec::new();
    let mut metrics = match out_dir {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            Some(BufWriter::new(File::create(dir.join("metrics.jsonl"))?))
        }
        None => None,
    };
    let mut emit = |record: MetricRecord, records: &mut Vec<MetricRecord>| -> Result<()> {
        if let Some(w) = metrics.as_mut() {
            serde_json::to_writer(&mut *w, &record)?;
            w.write_all(b"\n")?;
        }
        records.push(record);
        Ok(())
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut best = store.clone();
    let mut step = 0;
    let mut epochs_run = 0;
    let eval_options = EvalOptions {
        lowercase: config.lowercase,
        subsets: Vec::new(),
    };
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.batch_size) {
            step += 1;
            let refs: Vec<&Instance> = chunk.iter().map(|&i| &train[i]).collect();
            let batch = make_batch(&refs, vocab, &kinds, &config.narrative)?;
            let mut g = match model.loss_and_grads(&store, &batch, step_seed(seed, step)) {
                Ok(g) => g,
                Err(Error::Objective(ObjectiveError::NonFinite { component, value })) => {
                    return Err(Error::Train(format!(
                        "step {step}: loss component {component} became {value}; last good checkpoint kept"
                    )));
                }
                Err(e) => return Err(e),
            };
            let lr = schedule.lr(step)?;
            let grad_norm = clip_global_norm(&mut g.grads, config.clip_norm);
            adam.step(&mut store, &g.grads, lr)?;
            ema.update(&store)?;
            emit(
                MetricRecord::Step {
                    step,
                    epoch,
                    lr,
                    grad_norm,
                    loss: g.loss,
                },
                &mut records,
            )?;
        }
        epochs_run = epoch;

        ema.swap(&mut store)?;
        let scored = evaluate_model(model, &store, dev, vocab, config.eval_batch_size, &eval_options);
        let (report, _) = match scored {
            Ok(r) => r,
            Err(e) => {
                ema.swap(&mut store)?;
                return Err(e);
            }
        };
        let (improved, stop) = stopper.observe(epoch, report.accuracy);
        if improved {
            best = store.clone();
            if let Some(dir) = out_dir {
                store.write_checkpoint(BufWriter::new(File::create(dir.join("best.ckpt"))?))?;
            }
        }
        ema.swap(&mut store)?;
        if improved {
            if let Some(dir) = out_dir {
                store.write_checkpoint(BufWriter::new(File::create(dir.join("best_raw.ckpt"))?))?;
            }
        }
        log::info!(
            "seed {seed} epoch {epoch}: dev accuracy {:.4} (best {:.4} at epoch {})",
            report.accuracy,
            stopper.best_accuracy,
            stopper.best_epoch
        );
        emit(
            MetricRecord::Epoch {
                epoch,
                dev_accuracy: report.accuracy,
                best_epoch: stopper.best_epoch,
                stopped: stop,
            },
            &mut records,
        )?;
        if stop {
            break;
        }
    }
    if let Some(w) = metrics.as_mut() {
        w.flush()?;
    }
    Ok(TrainOutcome {
        seed,
        best_epoch: stopper.best_epoch,
        best_dev_accuracy: stopper.best_accuracy,
        epochs_run,
        records,
        best,
    })
}

/// Mean, maximum and population standard deviation of per-seed scores.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub seeds: Vec<u64>,
    pub accuracies: Vec<f64>,
    pub mean: f64,
    pub max: f64,
    pub std: f64,
    /// Seeds whose run failed, with the reason.
    pub failed: Vec<(u64, String)>,
}

pub fn summarize(seeds: &[u64], accuracies: &[f64], failed: Vec<(u64, String)>) -> Result<SeedSummary> {
    if accuracies.is_empty() {
        return Err(Error::Train("no run finished".into()));
    }
    let n = accuracies.len() as f64;
    let mean = accuracies.iter().sum::<f64>() / n;
    let max = accuracies.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let std = (accuracies.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n).sqrt();
    Ok(SeedSummary {
        seeds: seeds.to_vec(),
        accuracies: accuracies.to_vec(),
        mean,
        max,
        std,
        failed,
    })
}

/// Runs `run` once per seed, excluding failed runs from the summary.
pub fn multi_seed<F>(seeds: &[u64], mut run: F) -> Result<(SeedSummary, Vec<TrainOutcome>)>
where
    F: FnMut(u64) -> Result<TrainOutcome>,
{
    if seeds.is_empty() {
        return Err(Error::Config("at least one seed is required".into()));
    }
    let mut outcomes = Vec::new();
    let mut failed = Vec::new();
    for &seed in seeds {
        match run(seed) {
            Ok(o) => outcomes.push(o),
            Err(e) => {
                log::error!("seed {seed} aborted: {e}");
                failed.push((seed, e.to_string()));
            }
        }
    }
    let ok: Vec<u64> = outcomes.iter().map(|o| o.seed).collect();
    let accs: Vec<f64> = outcomes.iter().map(|o| o.best_dev_accuracy).collect();
    Ok((summarize(&ok, &accs, failed)?, outcomes))
}

/// Per-seed run directory under `root`.
pub fn run_dir(root: &Path, seed: u64) -> PathBuf {
    root.join(format!("seed-{seed}"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synth_generate, SynthConfig};
    use crate::model::{ModelConfig, Variant};
    use crate::tensor::Tensor;

    #[test]
    fn noam_values() {
        let peak = noam_lr(200, 8000, 8000).unwrap();
        assert!((peak - 7.9057e-4).abs() / 7.9057e-4 < 1e-4);
        assert!((peak - (200f64 * 8000.0).powf(-0.5)).abs() < 1e-18);
        let first = noam_lr(200, 8000, 1).unwrap();
        assert!((first - 200f64.powf(-0.5) * 8000f64.powf(-1.5)).abs() < 1e-20);
        assert!((first - 9.883e-8).abs() / 9.883e-8 < 1e-3);
        assert!(noam_lr(200, 8000, 7999).unwrap() < peak);
        assert!(noam_lr(200, 8000, 8001).unwrap() < peak);
        assert!(noam_lr(200, 8000, 0).is_err());
    }

    fn store_with(values: Vec<f64>) -> ParameterStore {
        let mut s = ParameterStore::new(0);
        s.add("w", Tensor::vector(values)).unwrap();
        s
    }

    #[test]
    fn adam_first_step_and_guards() {
        let mut store = store_with(vec![1.0, -2.0, 0.5]);
        let mut adam = Adam::new(&store);
        adam.step(&mut store, &[vec![0.3, -4.0, 0.0]], 0.01).unwrap();
        let w = store.tensors()[0].data();
        assert!((w[0] - 0.99).abs() < 1e-9);
        assert!((w[1] + 1.99).abs() < 1e-9);
        assert_eq!(w[2], 0.5);

        let before = store.tensors()[0].clone();
        assert!(adam.step(&mut store, &[vec![f64::NAN, 0.0, 0.0]], 0.01).is_err());
        assert_eq!(store.tensors()[0], before);
        assert_eq!(adam.steps(), 1);
    }

    #[test]
    fn clipping() {
        let mut g = vec![vec![3.0], vec![4.0]];
        assert_eq!(clip_global_norm(&mut g, 10.0), 5.0);
        assert_eq!(g, vec![vec![3.0], vec![4.0]]);
        clip_global_norm(&mut g, 1.0);
        assert!((g[0][0] - 0.6).abs() < 1e-15 && (g[1][0] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn ema_arithmetic_and_swap() {
        let mut store = store_with(vec![1.0]);
        let mut ema = Ema::new(&store, 0.9999);
        store.tensors_mut()[0].data_mut()[0] = 0.0;
        ema.update(&store).unwrap();
        assert!((ema.shadow("w").unwrap()[0] - 0.9999).abs() < 1e-15);

        let mut store = store_with(vec![3.0]);
        let mut ema = Ema::new(&store, 0.9);
        store.tensors_mut()[0].data_mut()[0] = 1.0;
        let mut prev = 3.0;
        for s in 1..=100 {
            ema.update(&store).unwrap();
            let now = ema.shadow("w").unwrap()[0];
            assert!(now < prev);
            assert!((now - (1.0 + 2.0 * 0.9f64.powi(s))).abs() < 1e-12);
            prev = now;
        }
        ema.swap(&mut store).unwrap();
        assert_eq!(store.tensors()[0].data()[0], prev);
        ema.swap(&mut store).unwrap();
        assert_eq!(store.tensors()[0].data()[0], 1.0);
        assert!(ema.update(&store_with(vec![1.0, 2.0])).is_ok());
        let mut other = ParameterStore::new(0);
        other.add("v", Tensor::vector(vec![1.0])).unwrap();
        assert!(ema.update(&other).is_err());
    }

    #[test]
    fn early_stopping_rule() {
        let mut s = EarlyStopping::new(2);
        let stops: Vec<bool> = [0.5, 0.6, 0.6, 0.6]
            .iter()
            .enumerate()
            .map(|(e, &a)| s.observe(e + 1, a).1)
            .collect();
        assert_eq!(stops, vec![false, false, false, true]);
        assert_eq!(s.best_epoch, 2);
    }

    #[test]
    fn seed_summary() {
        let s = summarize(&[1, 2, 3, 4], &[0.60, 0.62, 0.61, 0.61], vec![]).unwrap();
        assert!((s.mean - 0.61).abs() < 1e-12);
        assert_eq!(s.max, 0.62);
        let one = summarize(&[1], &[0.4], vec![]).unwrap();
        assert_eq!((one.mean, one.max, one.std), (0.4, 0.4, 0.0));
        assert_eq!(summarize(&[1, 2], &[0.5, 0.5], vec![]).unwrap().std, 0.0);
    }

    fn tiny_setup(variant: Variant) -> (Vec<Instance>, Vec<Instance>, Vocabulary, ModelConfig) {
        let train = synth_generate(12, 1, &SynthConfig::default());
        let dev = synth_generate(6, 2, &SynthConfig::default());
        let vocab = Vocabulary::build(&train, 1);
        let mut config = ModelConfig {
            variant,
            early_layers: 1,
            heads: 2,
            d_model: 8,
            hidden: 4,
            word_dim: 4,
            char_dim: 3,
            char_filters: 4,
            char_width: 2,
            word_vocab: vocab.num_words(),
            char_vocab: vocab.num_chars(),
            ..ModelConfig::default()
        };
        if variant != Variant::Base {
            config.supervision = vec![config.default_assignment(SupervisionKind::CorefAll)];
        }
        (train, dev, vocab, config)
    }

    #[test]
    fn loop_bookkeeping_and_determinism() {
        let (train, dev, vocab, config) = tiny_setup(Variant::Early);
        let tc = TrainConfig {
            epochs: 2,
            batch_size: 4,
            warmup: 4,
            patience: 5,
            ema_decay: 0.5,
            ..TrainConfig::default()
        };
        let dir = tempfile::tempdir().unwrap();
        let run = |out: &Path| {
            let (model, store) = Model::assemble(&config, 3).unwrap();
            train_loop(&model, store, &train, &dev, &vocab, &tc, 3, Some(out)).unwrap()
        };
        let a = run(&dir.path().join("a"));
        let b = run(&dir.path().join("b"));
        let epochs = a
            .records
            .iter()
            .filter(|r| matches!(r, MetricRecord::Epoch { .. }))
            .count();
        assert_eq!(epochs, 2);
        assert_eq!(a.records.len(), 2 + 2 * 3);
        let read = |p: &str| fs::read(dir.path().join(p).join("metrics.jsonl")).unwrap();
        assert_eq!(read("a"), read("b"));
        assert_eq!(a.best.tensors(), b.best.tensors());
        assert!(dir.path().join("a/best.ckpt").exists());
        assert!(dir.path().join("a/best_raw.ckpt").exists());
        for r in &a.records {
            if let MetricRecord::Step { step, lr, .. } = r {
                assert_eq!(*lr, noam_lr(8, 4, *step).unwrap());
            }
        }
    }

    #[test]
    fn one_step_descends() {
        for variant in [Variant::Base, Variant::Both] {
            let (train, _, vocab, mut config) = tiny_setup(variant);
            config.dropout = 0.0;
            let (model, mut store) = Model::assemble(&config, 5).unwrap();
            let refs: Vec<&Instance> = train[..4].iter().collect();
            let batch = make_batch(&refs, &vocab, &config.supervision_kinds(), &NarrativeConfig::default()).unwrap();
            let g = model.loss_and_grads(&store, &batch, 0).unwrap();
            let before = g.loss.total;
            let mut adam = Adam::new(&store);
            adam.step(&mut store, &g.grads, 1e-4).unwrap();
            let after = model.loss_and_grads(&store, &batch, 0).unwrap().loss.total;
            assert!(after < before, "{variant:?}: {after} >= {before}");
        }
    }

    #[test]
    fn unanswerable_training_data_is_rejected() {
        let (mut train, dev, vocab, config) = tiny_setup(Variant::Base);
        train[0].answer = "Nobody".into();
        let (model, store) = Model::assemble(&config, 3).unwrap();
        let err = train_loop(&model, store, &train, &dev, &vocab, &TrainConfig::default(), 1, None).unwrap_err();
        assert!(matches!(err, Error::Data(_)));
    }

    #[test]
    fn multi_seed_excludes_failures() {
        let (train, dev, vocab, config) = tiny_setup(Variant::Base);
        let tc = TrainConfig {
            epochs: 1,
            batch_size: 6,
            ..TrainConfig::default()
        };
        let (summary, outcomes) = multi_seed(&[1, 2, 3], |seed| {
            if seed == 2 {
                return Err(Error::Train("boom".into()));
            }
            let (model, store) = Model::assemble(&config, seed)?;
            train_loop(&model, store, &train, &dev, &vocab, &tc, seed, None)
        })
        .unwrap();
        assert_eq!(outcomes.len(), 2);
        assert_eq!(summary.seeds, vec![1, 3]);
        assert_eq!(summary.failed.len(), 1);
    }
}
