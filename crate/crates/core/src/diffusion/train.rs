//! Noise-prediction training with Adam, a step learning-rate schedule and
//! early stopping on a held-out split.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::dataset::ContactRecord;
use super::model::{sparse_observation, Denoiser, PoseNormalizer};
use super::network::Adam;
use super::schedule::{forward_diffuse, NoiseSchedule};
use crate::rng;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("the training set is empty")]
    EmptyDataset,
    #[error("records have {found} taxels but the first record has {expected}")]
    InconsistentRecords { expected: usize, found: usize },
    #[error("non-finite loss at epoch {epoch}, batch {batch} (last finite epoch loss {last_loss:?}, learning rate {lr})")]
    NonFiniteLoss { epoch: usize, batch: usize, last_loss: Option<f64>, lr: f64 },
}

/// Where the per-channel weights enter the squared error.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossWeighting {
    /// `‖λ ⊙ (ε̂ − ε)‖²`: each channel's gradient scales with λ².
    #[default]
    InsideNorm,
    /// `Σ λ_c (ε̂_c − ε_c)²`: each channel's gradient scales with λ.
    OutsideNorm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Epochs between learning-rate decays.
    pub lr_step: usize,
    pub lr_gamma: f64,
    /// Epochs without improvement before stopping.
    pub patience: usize,
    pub val_fraction: f64,
    pub loss_weights: [f64; 3],
    pub weighting: LossWeighting,
    pub hidden: usize,
    pub depth: usize,
    pub embed_dim: usize,
    pub schedule: NoiseSchedule,
    pub normalizer: PoseNormalizer,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 500,
            batch_size: 64,
            lr: 1e-3,
            lr_step: 100,
            lr_gamma: 0.95,
            patience: 200,
            val_fraction: 0.1,
            loss_weights: [1.0, 1.0, 0.1],
            weighting: LossWeighting::InsideNorm,
            hidden: 128,
            depth: 3,
            embed_dim: 16,
            schedule: NoiseSchedule::default(),
            normalizer: PoseNormalizer::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    pub lr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub history: Vec<EpochStats>,
    pub best_epoch: usize,
    pub best_loss: f64,
    pub stopped_early: bool,
    pub n_train: usize,
    pub n_val: usize,
}

/// Weighted squared error averaged over the batch. Writes `∂loss/∂pred`
/// into `grad`.
pub fn weighted_loss(pred: &[f32], eps: &[f32], weights: [f64; 3], weighting: LossWeighting, grad: &mut [f32]) -> f64 {
    let n = pred.len() / 3;
    let scale = 1.0 / n.max(1) as f64;
    let mut loss = 0.0;
    for (i, ((&p, &e), g)) in pred.iter().zip(eps).zip(grad.iter_mut()).enumerate() {
        let r = p as f64 - e as f64;
        let w = match weighting {
            LossWeighting::InsideNorm => weights[i % 3] * weights[i % 3],
            LossWeighting::OutsideNorm => weights[i % 3],
        };
        loss += w * r * r;
        *g = (2.0 * w * r * scale) as f32;
    }
    loss * scale
}

struct Prepared {
    x0: Vec<[f64; 3]>,
    sparse: Vec<Vec<(u32, f32)>>,
}

fn prepare(records: &[ContactRecord], normalizer: &PoseNormalizer) -> Result<Prepared, TrainError> {
    let first = records.first().ok_or(TrainError::EmptyDataset)?;
    let expected = first.obs.len();
    if let Some(bad) = records.iter().find(|r| r.obs.len() != expected) {
        return Err(TrainError::InconsistentRecords { expected, found: bad.obs.len() });
    }
    Ok(Prepared {
        x0: records.iter().map(|r| normalizer.normalize(&r.relative)).collect(),
        sparse: records.iter().map(|r| sparse_observation(&r.obs)).collect(),
    })
}

/// One noised batch: dense inputs and target noise.
fn noised_batch<R: Rng + ?Sized>(model: &Denoiser, data: &Prepared, idx: &[usize], rng: &mut R) -> (Vec<f32>, Vec<f32>) {
    let d = model.net.shape().dense_in;
    let steps = model.schedule.steps();
    let mut dense = vec![0.0f32; idx.len() * d];
    let mut eps = Vec::with_capacity(idx.len() * 3);
    for (row, &i) in dense.chunks_exact_mut(d).zip(idx) {
        let t = rng.random_range(1..=steps);
        let e: [f64; 3] = [rng.sample(StandardNormal), rng.sample(StandardNormal), rng.sample(StandardNormal)];
        let xt = forward_diffuse(data.x0[i], t, e, &model.schedule);
        model.dense_row(&xt, t, row);
        eps.extend(e.iter().map(|&v| v as f32));
    }
    (dense, eps)
}

fn batch_loss(model: &Denoiser, data: &Prepared, idx: &[usize], cfg: &TrainConfig, rng: &mut impl Rng) -> f64 {
    let (dense, eps) = noised_batch(model, data, idx, rng);
    let sparse: Vec<&[(u32, f32)]> = idx.iter().map(|&i| data.sparse[i].as_slice()).collect();
    let acts = model.net.forward(idx.len(), &dense, &sparse);
    let mut g = vec![0.0; eps.len()];
    weighted_loss(&acts.output, &eps, cfg.loss_weights, cfg.weighting, &mut g)
}

/// Mean loss over `idx` with noise drawn from a fixed generator, so values
/// are comparable between epochs.
fn fixed_loss(model: &Denoiser, data: &Prepared, idx: &[usize], cfg: &TrainConfig, seed: u64) -> f64 {
    let mut rng = rng::named_stream(seed, "validation-noise");
    let mut total = 0.0;
    for chunk in idx.chunks(256) {
        total += batch_loss(model, data, chunk, cfg, &mut rng) * chunk.len() as f64;
    }
    total / idx.len() as f64
}

/// Expected training loss of `model` on `records`, estimated with
/// `draws` noise draws per record.
pub fn evaluate_loss(model: &Denoiser, records: &[ContactRecord], cfg: &TrainConfig, draws: usize, seed: u64) -> Result<f64, TrainError> {
    let data = prepare(records, &model.normalizer)?;
    let idx: Vec<usize> = (0..records.len()).flat_map(|i| std::iter::repeat_n(i, draws)).collect();
    Ok(fixed_loss(model, &data, &idx, cfg, seed))
}

/// Trains a fresh denoiser. The returned weights are those of the epoch
/// with the lowest monitored loss (held-out if a split exists, training
/// otherwise). Identical inputs and seed give bit-identical weights.
pub fn train_denoiser(records: &[ContactRecord], cfg: &TrainConfig, seed: u64) -> Result<(Denoiser, TrainReport), TrainError> {
    let data = prepare(records, &cfg.normalizer)?;
    let n_tax = records[0].obs.len();
    let shape = Denoiser::shape_for(n_tax, cfg.hidden, cfg.depth, cfg.embed_dim);
    let mut model = Denoiser::new(shape, cfg.schedule.clone(), cfg.normalizer, &mut rng::named_stream(seed, "init"));

    let mut order: Vec<usize> = (0..records.len()).collect();
    order.shuffle(&mut rng::named_stream(seed, "split"));
    let n_val = if records.len() >= 10 { (records.len() as f64 * cfg.val_fraction).round() as usize } else { 0 };
    let (val, train) = order.split_at(n_val);
    let n_train = train.len();
    // An epoch always holds at least one full batch; tiny sets are cycled
    // with fresh noise draws.
    let reps = cfg.batch_size.div_ceil(n_train.max(1)).max(1);
    let mut train: Vec<usize> = train.iter().copied().cycle().take(n_train * reps).collect();

    let mut rng = rng::named_stream(seed, "train");
    let mut adam = Adam::new(model.net.params.len(), cfg.lr);
    let mut grads = vec![0.0f32; model.net.params.len()];
    let mut history = Vec::with_capacity(cfg.epochs);
    let (mut best, mut best_epoch, mut best_params) = (f64::INFINITY, 0, model.net.params.clone());
    let mut since_best = 0;
    let mut stopped_early = false;
    for epoch in 0..cfg.epochs {
        train.shuffle(&mut rng);
        let mut sum = 0.0;
        for (b, idx) in train.chunks(cfg.batch_size.max(1)).enumerate() {
            let (dense, eps) = noised_batch(&model, &data, idx, &mut rng);
            let sparse: Vec<&[(u32, f32)]> = idx.iter().map(|&i| data.sparse[i].as_slice()).collect();
            let acts = model.net.forward(idx.len(), &dense, &sparse);
            let mut g_out = vec![0.0f32; eps.len()];
            let loss = weighted_loss(&acts.output, &eps, cfg.loss_weights, cfg.weighting, &mut g_out);
            if !loss.is_finite() {
                return Err(TrainError::NonFiniteLoss { epoch, batch: b, last_loss: history.last().map(|h: &EpochStats| h.train_loss), lr: adam.lr });
            }
            grads.iter_mut().for_each(|g| *g = 0.0);
            model.net.backward(idx.len(), &dense, &sparse, &acts, &g_out, &mut grads);
            adam.step(&mut model.net.params, &grads);
            sum += loss * idx.len() as f64;
        }
        let train_loss = sum / train.len() as f64;
        let val_loss = (!val.is_empty()).then(|| fixed_loss(&model, &data, val, cfg, seed));
        history.push(EpochStats { epoch, train_loss, val_loss, lr: adam.lr });
        if epoch % 25 == 0 || epoch + 1 == cfg.epochs {
            log::info!("epoch {epoch}: train {train_loss:.5} val {val_loss:?}");
        } else {
            log::debug!("epoch {epoch}: train {train_loss:.5} val {val_loss:?}");
        }
        let monitored = val_loss.unwrap_or(train_loss);
        if monitored < best {
            best = monitored;
            best_epoch = epoch;
            best_params.copy_from_slice(&model.net.params);
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                stopped_early = true;
                break;
            }
        }
        if cfg.lr_step > 0 && (epoch + 1) % cfg.lr_step == 0 {
            adam.lr *= cfg.lr_gamma;
        }
    }
    model.net.params = best_params;
    let report = TrainReport { history, best_epoch, best_loss: best, stopped_early, n_train, n_val };
    Ok((model, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pose::Pose2;
    use crate::tactile::Observation;

    fn record(x: f64, active: &[usize]) -> ContactRecord {
        let mut z = vec![0.0f32; 24];
        for &i in active {
            z[i] = 0.8;
        }
        ContactRecord { relative: Pose2::new(x, 0.05, 1.0), obs: Observation(z) }
    }

    fn small_cfg(epochs: usize) -> TrainConfig {
        TrainConfig { epochs, hidden: 32, batch_size: 8, ..TrainConfig::default() }
    }

    #[test]
    fn tiny_sets_fill_a_batch() {
        let data = vec![record(0.1, &[1])];
        let (_, report) = train_denoiser(&data, &small_cfg(1), 0).unwrap();
        assert_eq!(report.n_train, 1);
        assert_eq!(report.n_val, 0);
    }

    #[test]
    fn channel_weights_scale_gradients() {
        let pred = [0.5f32, -0.2, 0.3, 0.1, 0.4, -0.6];
        let eps = [0.0f32; 6];
        let grad_theta = |w: f64, mode| {
            let mut g = [0.0f32; 6];
            weighted_loss(&pred, &eps, [1.0, 1.0, w], mode, &mut g);
            (g[2] as f64, g[0] as f64)
        };
        let (a, x_a) = grad_theta(0.1, LossWeighting::OutsideNorm);
        let (b, x_b) = grad_theta(0.2, LossWeighting::OutsideNorm);
        assert!((b / a - 2.0).abs() < 1e-6);
        assert_eq!(x_a, x_b);
        let (a, _) = grad_theta(0.1, LossWeighting::InsideNorm);
        let (b, _) = grad_theta(0.2, LossWeighting::InsideNorm);
        assert!((b / a - 4.0).abs() < 1e-5);
    }

    #[test]
    fn loss_gradient_matches_finite_differences() {
        let pred = [0.5f32, -0.2, 0.3];
        let eps = [0.1f32, 0.2, -0.7];
        let mut g = [0.0f32; 3];
        weighted_loss(&pred, &eps, [1.0, 1.0, 0.1], LossWeighting::InsideNorm, &mut g);
        for c in 0..3 {
            let h = 1e-3f32;
            let mut p = pred;
            p[c] += h;
            let up = weighted_loss(&p, &eps, [1.0, 1.0, 0.1], LossWeighting::InsideNorm, &mut [0.0; 3]);
            p[c] -= 2.0 * h;
            let dn = weighted_loss(&p, &eps, [1.0, 1.0, 0.1], LossWeighting::InsideNorm, &mut [0.0; 3]);
            assert!(((up - dn) / (2.0 * h as f64) - g[c] as f64).abs() < 1e-3);
        }
    }

    #[test]
    fn single_record_overfits() {
        let data = vec![record(0.1, &[1, 2, 3])];
        // A sanity check of the optimizer path, so a brisker step size.
        let cfg = TrainConfig { epochs: 200, lr: 3e-3, ..TrainConfig::default() };
        let init = Denoiser::new(
            Denoiser::shape_for(24, cfg.hidden, cfg.depth, cfg.embed_dim),
            cfg.schedule.clone(),
            cfg.normalizer,
            &mut rng::named_stream(5, "init"),
        );
        let before = evaluate_loss(&init, &data, &cfg, 512, 9).unwrap();
        let (model, report) = train_denoiser(&data, &cfg, 5).unwrap();
        assert_eq!(model.net.params.len(), init.net.params.len());
        let after = evaluate_loss(&model, &data, &cfg, 512, 9).unwrap();
        assert!(after < 0.1 * before, "{before} -> {after} ({:?})", report.best_epoch);
    }

    #[test]
    fn training_is_deterministic() {
        let data: Vec<_> = (0..20).map(|i| record(0.01 * i as f64, &[i % 24, (i + 5) % 24])).collect();
        let cfg = small_cfg(3);
        let (a, ra) = train_denoiser(&data, &cfg, 1).unwrap();
        let (b, rb) = train_denoiser(&data, &cfg, 1).unwrap();
        assert_eq!(a.net.params, b.net.params);
        assert_eq!(ra, rb);
        assert_eq!(ra.n_val, 2);
        let (c, _) = train_denoiser(&data, &cfg, 2).unwrap();
        assert_ne!(a.net.params, c.net.params);
    }

    #[test]
    fn empty_dataset_is_rejected() {
        assert!(matches!(train_denoiser(&[], &small_cfg(1), 0), Err(TrainError::EmptyDataset)));
    }
}
