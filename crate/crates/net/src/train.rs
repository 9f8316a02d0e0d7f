//! Supervised training on retrospectively sub-sampled repetition sets.
//!
//! One step per slice: random repetition subset, normalization, readout
//! flip, PF sampling, forward pass, magnitude-average loss, backward pass,
//! Adam update. Model selection keeps the parameters with the best
//! validation PSNR.

use pfrecon_core::{forward, psnr, zero_fill, ComplexImage, KSpaceData, Pff, RealImage, RepetitionSet};
use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::adam::Adam;
use crate::aggregate::Aggregation;
use crate::error::{Error, Result};
use crate::loss::{loss_with_grad, magnitude_average, magnitude_average_backward, LossBreakdown, SobelProxy};
use crate::unrolled::{Model, ModelConfig, Strategy};

/// Percentile used for intensity normalization.
pub const NORM_PERCENTILE: f64 = 0.98;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PretrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub pff: Pff,
    pub strategy: Strategy,
    pub aggregation: Aggregation,
    pub iterations: usize,
    pub depth: usize,
    pub width: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub adam_betas: (f64, f64),
    pub loss_perceptual_weight: f64,
    pub repetition_fraction: f64,
    pub flip_probability: f64,
    pub seed: u64,
    /// Run validation every this many epochs (and after the last one).
    pub validate_every: usize,
    /// One-iteration pre-training stage before the main run.
    pub pretrain: Option<PretrainConfig>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let m = ModelConfig::drpf();
        Self {
            pff: m.pff,
            strategy: m.strategy,
            aggregation: m.aggregation,
            iterations: m.iterations,
            depth: m.depth,
            width: m.width,
            epochs: 200,
            learning_rate: 5e-4,
            adam_betas: (0.9, 0.999),
            loss_perceptual_weight: 0.5,
            repetition_fraction: 1.0 / 3.0,
            flip_probability: 0.5,
            seed: 0,
            validate_every: 1,
            pretrain: None,
        }
    }
}

impl TrainConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let c: Self = toml::from_str(text).map_err(|e| Error::Config(e.message().replace('\n', " ")))?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            strategy: self.strategy,
            iterations: self.iterations,
            depth: self.depth,
            width: self.width,
            aggregation: self.aggregation,
            pff: self.pff,
            lambda: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model_config().validate()?;
        let rates = std::iter::once(self.learning_rate).chain(self.pretrain.map(|p| p.learning_rate));
        for lr in rates {
            // zero is allowed: it freezes the parameters
            if !(lr >= 0.0 && lr.is_finite()) {
                return Err(Error::Config(format!("learning rate must be >= 0, got {lr}")));
            }
        }
        let (b1, b2) = self.adam_betas;
        if !((0.0..1.0).contains(&b1) && (0.0..1.0).contains(&b2)) {
            return Err(Error::Config(format!("adam betas must lie in [0, 1), got ({b1}, {b2})")));
        }
        if !(self.repetition_fraction > 0.0 && self.repetition_fraction <= 1.0) {
            return Err(Error::Config(format!(
                "repetition_fraction must lie in (0, 1], got {}",
                self.repetition_fraction
            )));
        }
        if !(self.loss_perceptual_weight >= 0.0 && self.loss_perceptual_weight.is_finite()) {
            return Err(Error::Config("loss_perceptual_weight must be >= 0".into()));
        }
        if !(0.0..=1.0).contains(&self.flip_probability) {
            return Err(Error::Config("flip_probability must lie in [0, 1]".into()));
        }
        if self.validate_every == 0 {
            return Err(Error::Config("validate_every must be positive".into()));
        }
        Ok(())
    }
}

/// Linear-interpolated percentile (`q` in `[0, 1]`) of unsorted values.
pub fn percentile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

fn set_scale<'a>(mags: impl Iterator<Item = &'a RealImage>) -> Result<f64> {
    let pooled: Vec<f64> = mags.flat_map(|m| m.data().iter().copied()).collect();
    if pooled.is_empty() {
        return Err(Error::Core(pfrecon_core::Error::EmptySet));
    }
    let p = percentile(&pooled, NORM_PERCENTILE);
    if p > 0.0 {
        return Ok(p);
    }
    // very sparse images: fall back to the maximum
    let max = pooled.iter().copied().fold(0.0, f64::max);
    if max > 0.0 {
        Ok(max)
    } else {
        Err(Error::Config("degenerate normalization scale: all magnitudes are zero".into()))
    }
}

/// Divides the set by the 98th percentile of its pooled magnitudes.
pub fn normalize_set(reps: &RepetitionSet<ComplexImage>) -> Result<(RepetitionSet<ComplexImage>, f64)> {
    let mags: Vec<RealImage> = reps.iter().map(ComplexImage::magnitude).collect();
    let scale = set_scale(mags.iter())?;
    Ok((reps.map(|x| Ok::<_, Error>(x.scale(1.0 / scale)))?, scale))
}

/// With probability `p`, mirrors every repetition along the readout axis.
pub fn augment<R: Rng + ?Sized>(reps: &RepetitionSet<ComplexImage>, p: f64, rng: &mut R) -> RepetitionSet<ComplexImage> {
    if p > 0.0 && rng.random_bool(p.min(1.0)) {
        reps.map(|x| Ok::<_, Error>(x.flip_readout())).expect("flip is infallible")
    } else {
        reps.clone()
    }
}

/// Uniform random subset of `round(fraction * B)` repetitions (at least 1),
/// kept in storage order.
pub fn sample_repetition_subset<T: Clone, R: Rng + ?Sized>(reps: &RepetitionSet<T>, fraction: f64, rng: &mut R) -> Result<RepetitionSet<T>> {
    let b = reps.len();
    if b == 0 {
        return Err(Error::Core(pfrecon_core::Error::EmptySet));
    }
    let k = ((fraction * b as f64).round() as usize).clamp(1, b);
    let mut idx = index::sample(rng, b, k).into_vec();
    idx.sort_unstable();
    Ok(reps.select(&idx))
}

/// Reconstruction at native intensity: the measurements are scaled by the
/// 98th percentile of the zero-filled magnitudes, reconstructed, and scaled
/// back.
pub fn reconstruct_normalized(model: &Model<f32>, y: &RepetitionSet<KSpaceData>) -> Result<RepetitionSet<ComplexImage>> {
    let zf: Vec<RealImage> = y
        .iter()
        .map(|k| zero_fill(k).map(|z| z.magnitude()))
        .collect::<pfrecon_core::Result<_>>()?;
    let scale = set_scale(zf.iter())?;
    let (h, w) = y.shape();
    let scaled = y.map(|k| KSpaceData::new(h, w, k.samples().iter().map(|v| v / scale).collect(), k.mask().clone()))?;
    let out = model.reconstruct(&scaled)?;
    Ok(out.map(|x| Ok::<_, Error>(x.scale(scale)))?)
}

/// Magnitude average of a set as a real image.
pub fn set_magnitude_average(reps: &RepetitionSet<ComplexImage>) -> RealImage {
    let bufs: Vec<Vec<pfrecon_core::Complex64>> = reps.iter().map(|x| x.data().to_vec()).collect();
    let (h, w) = reps.shape();
    RealImage::new(h, w, magnitude_average(&bufs)).expect("magnitudes are finite")
}

/// PF-samples every repetition.
pub fn sample_set(reps: &RepetitionSet<ComplexImage>, pff: Pff) -> Result<RepetitionSet<KSpaceData>> {
    let mask = pfrecon_core::make_pf_mask(reps.shape().1, pff)?;
    Ok(reps.map(|x| forward(x, &mask))?)
}

/// Mean PSNR of magnitude averages over a validation set.
pub fn validation_psnr(model: &Model<f32>, val: &[RepetitionSet<ComplexImage>]) -> Result<f64> {
    let mut total = 0.0;
    for gt in val {
        let y = sample_set(gt, model.config().pff)?;
        let rec = reconstruct_normalized(model, &y)?;
        total += psnr(&set_magnitude_average(&rec), &set_magnitude_average(gt), None)?;
    }
    Ok(total / val.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub stage: String,
    pub epoch: usize,
    pub step: u64,
    pub l1: f64,
    pub perceptual: f64,
    pub total: f64,
    pub val_psnr: Option<f64>,
}

pub struct TrainOutcome {
    pub model: Model<f32>,
    pub log: Vec<LogRecord>,
    pub best_val_psnr: Option<f64>,
}

/// Loss and gradient step on one ground-truth set.
fn train_step(
    model: &mut Model<f32>,
    opt: &mut Adam<f32>,
    gt: &RepetitionSet<ComplexImage>,
    config: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<LossBreakdown> {
    let subset = sample_repetition_subset(gt, config.repetition_fraction, rng)?;
    let (normalized, _) = normalize_set(&subset)?;
    let target = augment(&normalized, config.flip_probability, rng);
    let y = sample_set(&target, model.config().pff)?;
    let tape = model.forward_train(&y)?;
    let (h, w) = target.shape();
    let pred = magnitude_average(tape.outputs());
    let gt_bufs: Vec<_> = target.iter().map(|x| x.data().to_vec()).collect();
    let gt_avg = magnitude_average(&gt_bufs);
    let (l, grad) = loss_with_grad(&pred, &gt_avg, h, w, config.loss_perceptual_weight, &SobelProxy::default())?;
    if !l.total.is_finite() {
        return Err(Error::NonFinite(format!("loss {l:?}")));
    }
    let d_out = magnitude_average_backward(tape.outputs(), &grad);
    let grads = model.backward(&tape, &d_out);
    if !grads.is_finite() {
        return Err(Error::NonFinite("gradient".into()));
    }
    opt.step(model.params_mut(), &grads);
    Ok(l)
}

#[allow(clippy::too_many_arguments)]
fn run_stage(
    stage: &str,
    mut model: Model<f32>,
    epochs: usize,
    lr: f64,
    train_set: &[RepetitionSet<ComplexImage>],
    val_set: &[RepetitionSet<ComplexImage>],
    config: &TrainConfig,
    rng: &mut ChaCha8Rng,
    log: &mut Vec<LogRecord>,
    observer: &mut dyn FnMut(&LogRecord),
) -> Result<(Model<f32>, Option<f64>)> {
    let mut opt = Adam::new(model.params(), lr, config.adam_betas);
    let mut best: Option<(f64, Model<f32>)> = None;
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    for epoch in 1..=epochs {
        order.shuffle(rng);
        let (mut l1, mut perc, mut total) = (0.0, 0.0, 0.0);
        for &i in &order {
            let l = train_step(&mut model, &mut opt, &train_set[i], config, rng)
                .map_err(|e| Error::NonFinite(format!("{stage} epoch {epoch} slice {i}: {e}")))?;
            l1 += l.l1;
            perc += l.perceptual;
            total += l.total;
        }
        let n = order.len() as f64;
        let val_psnr = if !val_set.is_empty() && (epoch % config.validate_every == 0 || epoch == epochs) {
            let v = validation_psnr(&model, val_set)?;
            if best.as_ref().is_none_or(|(b, _)| v > *b) {
                best = Some((v, model.clone()));
            }
            Some(v)
        } else {
            None
        };
        let rec = LogRecord {
            stage: stage.to_string(),
            epoch,
            step: opt.steps(),
            l1: l1 / n,
            perceptual: perc / n,
            total: total / n,
            val_psnr,
        };
        observer(&rec);
        log.push(rec);
    }
    Ok(match best {
        Some((v, m)) => (m, Some(v)),
        None => (model, None),
    })
}

/// Trains a model from scratch (He initialization) following `config`,
/// including the optional one-iteration pre-training stage. `observer`
/// sees every log record as it is produced.
pub fn train(
    train_set: &[RepetitionSet<ComplexImage>],
    val_set: &[RepetitionSet<ComplexImage>],
    config: &TrainConfig,
    observer: &mut dyn FnMut(&LogRecord),
) -> Result<TrainOutcome> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(Error::Config("empty training set".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut log = Vec::new();
    let target = config.model_config();
    let model = match config.pretrain {
        Some(pre) => {
            let base_cfg = ModelConfig {
                strategy: if target.strategy == Strategy::Recurrent {
                    Strategy::Recurrent
                } else {
                    Strategy::WeightShared
                },
                iterations: 1,
                ..target
            };
            let base = Model::init(base_cfg, &mut rng)?;
            let (base, _) = run_stage("pretrain", base, pre.epochs, pre.learning_rate, train_set, val_set, config, &mut rng, &mut log, observer)?;
            base.replicate(target.strategy, target.iterations)?
        }
        None => Model::init(target, &mut rng)?,
    };
    let (model, best) = run_stage("train", model, config.epochs, config.learning_rate, train_set, val_set, config, &mut rng, &mut log, observer)?;
    Ok(TrainOutcome {
        model,
        log,
        best_val_psnr: best,
    })
}

/// Continues training an existing model with the main-stage settings.
pub fn fine_tune(
    model: Model<f32>,
    train_set: &[RepetitionSet<ComplexImage>],
    val_set: &[RepetitionSet<ComplexImage>],
    config: &TrainConfig,
    observer: &mut dyn FnMut(&LogRecord),
) -> Result<TrainOutcome> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(Error::Config("empty training set".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut log = Vec::new();
    let (model, best) = run_stage("train", model, config.epochs, config.learning_rate, train_set, val_set, config, &mut rng, &mut log, observer)?;
    Ok(TrainOutcome {
        model,
        log,
        best_val_psnr: best,
    })
}
