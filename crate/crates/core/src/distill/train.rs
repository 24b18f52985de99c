use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::loss::{loss_prepared, prepare, Prepared};
use super::student::{HeadBasis, ReferencePolicy, StudentModel, StudentSize};
use super::vocab::PreferenceVocab;
use crate::error::{Error, Result};
use crate::intent::{Embedder, IntentSample, IoKdSample};
use crate::nn::{adam_step, softmax_xent, AdamConfig, ParamBundle};
use crate::preference::PreferenceVector;
use crate::seed::rng_for;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DistillConfig {
    pub beta_base: f64,
    /// Strength of the distance-based temperature reduction; 0 disables it.
    pub scale_factor: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Confidence threshold below which a prediction counts as a failure.
    /// `None` means twice the uniform probability over the vocabulary.
    pub p_min: Option<f64>,
    pub seed: u64,
    pub size: StudentSize,
    pub vocab_step: f64,
    pub head_basis: HeadBasis,
    /// Supervised epochs on the positives before the reference is frozen.
    pub warm_start_epochs: usize,
    /// Metrics are logged at epoch 0, every `eval_every` epochs and at the end.
    pub eval_every: usize,
}

impl Default for DistillConfig {
    fn default() -> Self {
        Self {
            beta_base: 0.1,
            scale_factor: 2.0,
            learning_rate: 1e-3,
            epochs: 3,
            batch_size: 32,
            p_min: None,
            seed: 0,
            size: StudentSize::Large,
            vocab_step: 0.05,
            head_basis: HeadBasis::default(),
            warm_start_epochs: 0,
            eval_every: 1,
        }
    }
}

impl DistillConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta_base > 0.0 && self.beta_base.is_finite()) {
            return Err(Error::config("beta_base must be positive"));
        }
        if !(0.0..=2.0).contains(&self.scale_factor) {
            return Err(Error::config("scale_factor must lie in [0, 2]"));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::config("learning_rate must be positive"));
        }
        if self.batch_size == 0 || self.eval_every == 0 {
            return Err(Error::config("batch_size and eval_every must be at least 1"));
        }
        if let Some(p) = self.p_min {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::config("p_min must lie in [0, 1]"));
            }
        }
        Ok(())
    }

    pub fn p_min_for(&self, vocab_len: usize) -> f64 {
        self.p_min.unwrap_or(2.0 / vocab_len as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistillMetrics {
    /// Over the four components of non-failed predictions; NaN when every
    /// prediction failed.
    pub mae: f64,
    pub mse: f64,
    pub failure_rate: f64,
}

fn metrics_from(pairs: impl Iterator<Item = (Option<PreferenceVector>, PreferenceVector)>) -> Result<DistillMetrics> {
    let (mut abs, mut sq, mut ok, mut total) = (0.0, 0.0, 0usize, 0usize);
    for (pred, truth) in pairs {
        total += 1;
        if let Some(p) = pred {
            ok += 1;
            for (a, b) in p.weights().iter().zip(truth.weights()) {
                abs += (a - b).abs();
                sq += (a - b) * (a - b);
            }
        }
    }
    if total == 0 {
        return Err(Error::Size("evaluation set is empty".into()));
    }
    let n = (4 * ok) as f64;
    Ok(DistillMetrics {
        mae: if ok > 0 { abs / n } else { f64::NAN },
        mse: if ok > 0 { sq / n } else { f64::NAN },
        failure_rate: (total - ok) as f64 / total as f64,
    })
}

pub fn evaluate(model: &StudentModel, test: &[IntentSample], p_min: f64) -> Result<DistillMetrics> {
    metrics_from(test.iter().map(|s| (model.predict(&s.prompt, p_min).preference(), s.preference)))
}

/// Metrics of the constant even predictor.
pub fn even_baseline_metrics(test: &[IntentSample]) -> Result<DistillMetrics> {
    metrics_from(test.iter().map(|s| (Some(PreferenceVector::even()), s.preference)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistillLogRow {
    pub epoch: usize,
    pub split: String,
    /// Mean pairwise loss; empty for splits without contrastive vectors.
    pub loss: Option<f64>,
    pub mae: f64,
    pub mse: f64,
    pub failure_rate: f64,
    pub mean_beta: f64,
}

#[derive(Debug, Clone)]
pub struct DistillRun {
    pub model: StudentModel,
    pub reference: ReferencePolicy,
    pub s_bar: PreferenceVector,
    pub log: Vec<DistillLogRow>,
    /// Samples dropped because a contrastive vector snapped onto the positive.
    pub skipped: usize,
}

fn warm_start(model: &mut StudentModel, data: &[IoKdSample], cfg: &DistillConfig) -> Result<()> {
    let adam = AdamConfig::with_lr(cfg.learning_rate);
    let mut rng = rng_for(cfg.seed, "distill/warm-start");
    let xs: Vec<Vec<f64>> = data.iter().map(|s| model.embed(&s.prompt).values().to_vec()).collect();
    let targets: Vec<usize> = data.iter().map(|s| model.vocab().snap(&s.preference)).collect();
    let mut order: Vec<usize> = (0..data.len()).collect();
    for epoch in 0..cfg.warm_start_epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            let mut grads = model.params().zeros_like();
            let inv = 1.0 / chunk.len() as f64;
            let mut total = 0.0;
            for &i in chunk {
                let enc = model.encode(&xs[i]);
                let (loss, mut dz) = softmax_xent(&model.logits_from(&enc), targets[i]);
                total += loss * inv;
                dz.iter_mut().for_each(|d| *d *= inv);
                model.backward_dense(&xs[i], &enc, &dz, &mut grads);
            }
            if !total.is_finite() {
                return Err(Error::Training {
                    epoch,
                    reason: "non-finite warm-start loss".into(),
                });
            }
            adam_step(model.params_mut(), &grads, &adam)?;
        }
    }
    model.params_mut().reset_optimizer();
    Ok(())
}

fn split_metrics(model: &StudentModel, xs: &[Vec<f64>], truths: &[PreferenceVector], p_min: f64) -> Result<DistillMetrics> {
    metrics_from(xs.iter().zip(truths).map(|(x, t)| (model.predict_embedded(x, p_min).preference(), *t)))
}

/// Trains a fresh student on `train`, logging metrics on the training
/// positives and, if given, on `test`.
pub fn train_distill(train: &[IoKdSample], test: Option<&[IntentSample]>, cfg: &DistillConfig) -> Result<DistillRun> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::Size("distillation dataset is empty".into()));
    }
    let vocab = PreferenceVocab::new(cfg.vocab_step)?;
    let p_min = cfg.p_min_for(vocab.len());
    let mut model = StudentModel::new(cfg.size.hidden(), vocab, Embedder::default(), cfg.head_basis, cfg.seed)?;
    if cfg.warm_start_epochs > 0 {
        warm_start(&mut model, train, cfg)?;
    }
    let reference = ReferencePolicy::freeze(&model);
    // Fixed before the first update and never recomputed.
    let s_bar = PreferenceVector::mean(train.iter().map(|s| &s.preference))?;
    let (prepared, skipped) = prepare(&reference, train, &s_bar, cfg.beta_base, cfg.scale_factor)?;

    let train_x: Vec<Vec<f64>> = train.iter().map(|s| model.embed(&s.prompt).values().to_vec()).collect();
    let train_y: Vec<PreferenceVector> = train.iter().map(|s| s.preference).collect();
    let test_x: Vec<Vec<f64>> = test.unwrap_or(&[]).iter().map(|s| model.embed(&s.prompt).values().to_vec()).collect();
    let test_y: Vec<PreferenceVector> = test.unwrap_or(&[]).iter().map(|s| s.preference).collect();
    let mean_beta = if prepared.is_empty() {
        0.0
    } else {
        prepared.iter().map(|p| p.beta).sum::<f64>() / prepared.len() as f64
    };

    let mut log = Vec::new();
    let mut record = |model: &StudentModel, epoch: usize, loss: f64| -> Result<()> {
        let m = split_metrics(model, &train_x, &train_y, p_min)?;
        log.push(DistillLogRow {
            epoch,
            split: "train".into(),
            loss: Some(loss),
            mae: m.mae,
            mse: m.mse,
            failure_rate: m.failure_rate,
            mean_beta,
        });
        if !test_x.is_empty() {
            let m = split_metrics(model, &test_x, &test_y, p_min)?;
            log.push(DistillLogRow {
                epoch,
                split: "test".into(),
                loss: None,
                mae: m.mae,
                mse: m.mse,
                failure_rate: m.failure_rate,
                mean_beta,
            });
        }
        Ok(())
    };

    let all: Vec<&Prepared> = prepared.iter().collect();
    record(&model, 0, loss_prepared(&model, &all, false).loss)?;

    let adam = AdamConfig::with_lr(cfg.learning_rate);
    let mut rng = rng_for(cfg.seed, "distill/shuffle");
    let mut order: Vec<usize> = (0..prepared.len()).collect();
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let (mut loss_sum, mut pairs) = (0.0, 0usize);
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&Prepared> = chunk.iter().map(|&i| &prepared[i]).collect();
            let out = loss_prepared(&model, &batch, true);
            if out.pairs == 0 {
                continue;
            }
            if !out.loss.is_finite() {
                return Err(Error::Training {
                    epoch,
                    reason: "non-finite distillation loss".into(),
                });
            }
            loss_sum += out.loss * out.pairs as f64;
            pairs += out.pairs;
            adam_step(model.params_mut(), &out.grads, &adam)?;
        }
        if !model.params().is_finite() {
            return Err(Error::Training {
                epoch,
                reason: "non-finite student parameters".into(),
            });
        }
        if epoch % cfg.eval_every == 0 || epoch == cfg.epochs {
            let loss = if pairs > 0 { loss_sum / pairs as f64 } else { f64::NAN };
            record(&model, epoch, loss)?;
        }
    }
    Ok(DistillRun {
        model,
        reference,
        s_bar,
        log,
        skipped,
    })
}

pub fn write_distill_log<W: Write>(w: W, rows: &[DistillLogRow]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_distill_log(path: &Path) -> Result<Vec<DistillLogRow>> {
    let mut r = csv::Reader::from_path(path)?;
    let rows = r.deserialize().collect::<std::result::Result<Vec<DistillLogRow>, _>>()?;
    Ok(rows)
}

/// Saved student: dimensions and vocabulary step in the header, flat
/// row-major parameter arrays in the body.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub input_dim: usize,
    pub hidden: usize,
    pub vocab_step: f64,
    pub head_basis: HeadBasis,
    pub seed: u64,
    pub params: ParamBundle,
}

impl Checkpoint {
    pub fn from_model(model: &StudentModel, seed: u64) -> Self {
        Self {
            input_dim: model.embedder().dim(),
            hidden: model.hidden(),
            vocab_step: model.vocab().step(),
            head_basis: model.head_basis(),
            seed,
            params: model.params().snapshot(),
        }
    }

    pub fn into_model(self) -> Result<StudentModel> {
        let mut params = self.params;
        params.reset_optimizer();
        StudentModel::from_params(params, PreferenceVocab::new(self.vocab_step)?, Embedder::new(self.input_dim), self.head_basis)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_vec(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_slice(&std::fs::read(path)?)?)
    }
}
