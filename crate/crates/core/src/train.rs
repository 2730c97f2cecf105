//! Training pairs and the optimization loop.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{resample_nearest, RasterGrid, Resample};
use crate::loss::{l2h_loss, l2h_loss_with_mask, ConfidenceMask, LabelPatch, LossConfig};
use crate::net::{
    backward, forward, init_params, NetParams, ParamGrads, RPBackboneConfig, Upstream,
};
use crate::scheme::UNLABELED;
use crate::synth::COARSE_FACTOR;
use crate::tensor::TensorMap;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainConfig {
    /// Patch edge on the fine grid; a multiple of the coarse factor.
    pub patch_size: usize,
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub seed: u64,
    /// Leading epochs that train on every labeled pixel before confident-area
    /// selection takes over.
    pub warmup_epochs: usize,
    /// Cap on patches visited per epoch; 0 visits all.
    pub patches_per_epoch: usize,
    pub loss: LossConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            patch_size: 250,
            batch_size: 4,
            epochs: 10,
            learning_rate: 0.01,
            momentum: 0.9,
            seed: 0,
            warmup_epochs: 1,
            patches_per_epoch: 0,
            loss: LossConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.patch_size == 0 || !self.patch_size.is_multiple_of(COARSE_FACTOR) {
            return Err(Error::Config(format!(
                "patch size {} must be a positive multiple of {COARSE_FACTOR}",
                self.patch_size
            )));
        }
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::Config("learning rate must be non-negative".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config("momentum must lie in [0, 1)".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        self.loss.validate()
    }
}

/// One fine-image patch with its upsampled coarse labels.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingPair {
    /// Top-left pixel of the patch on the fine grid.
    pub origin: (usize, usize),
    pub image: TensorMap<f32>,
    pub labels: LabelPatch,
}

/// Cuts co-registered fine imagery and coarse labels into training pairs.
///
/// The image must be exactly `COARSE_FACTOR` times the label grid on both
/// axes with matching origins. Candidate patches sit on an aligned grid; the
/// order is a seeded shuffle and wholly unlabeled patches are dropped.
pub fn make_pairs(
    image: &RasterGrid,
    labels: &RasterGrid,
    cfg: &TrainConfig,
) -> Result<Vec<TrainingPair>> {
    cfg.validate()?;
    check_coregistered(image, labels)?;
    let values = image.band_values()?;
    let fine = resample_nearest(labels, COARSE_FACTOR, Resample::Up)?;
    let fine_labels = fine.classes()?;
    let (w, h, bands) = (image.width(), image.height(), image.bands());
    let ps = cfg.patch_size;
    let mut origins: Vec<(usize, usize)> = (0..h / ps)
        .flat_map(|r| (0..w / ps).map(move |c| (c * ps, r * ps)))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    origins.shuffle(&mut rng);

    let plane = w * h;
    let mut pairs = Vec::new();
    for (x0, y0) in origins {
        let mut lab = Vec::with_capacity(ps * ps);
        for y in y0..y0 + ps {
            lab.extend_from_slice(&fine_labels[y * w + x0..y * w + x0 + ps]);
        }
        if lab.iter().all(|&l| l == UNLABELED) {
            continue;
        }
        let mut px = Vec::with_capacity(bands * ps * ps);
        for b in 0..bands {
            for y in y0..y0 + ps {
                px.extend_from_slice(&values[b * plane + y * w + x0..b * plane + y * w + x0 + ps]);
            }
        }
        pairs.push(TrainingPair {
            origin: (x0, y0),
            image: TensorMap::from_vec(bands, ps, ps, px)?,
            labels: LabelPatch::new(ps, ps, lab)?,
        });
    }
    Ok(pairs)
}

fn check_coregistered(image: &RasterGrid, labels: &RasterGrid) -> Result<()> {
    let (gi, gl) = (image.georef(), labels.georef());
    let f = COARSE_FACTOR as f64;
    let sizes_ok = image.width() == labels.width() * COARSE_FACTOR
        && image.height() == labels.height() * COARSE_FACTOR;
    let geo_ok = (gi.origin_x - gl.origin_x).abs() <= 1e-9 * gl.pixel_size_x.abs().max(1.0)
        && (gi.origin_y - gl.origin_y).abs() <= 1e-9 * gl.pixel_size_y.abs().max(1.0)
        && (gi.pixel_size_x * f - gl.pixel_size_x).abs() <= 1e-9 * gl.pixel_size_x.abs()
        && (gi.pixel_size_y * f - gl.pixel_size_y).abs() <= 1e-9 * gl.pixel_size_y.abs();
    if sizes_ok && geo_ok {
        Ok(())
    } else {
        Err(Error::Alignment(format!(
            "image {}x{} must be exactly {COARSE_FACTOR}x the {}x{} labels with a shared origin",
            image.width(),
            image.height(),
            labels.width(),
            labels.height()
        )))
    }
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepLog {
    pub step: usize,
    pub epoch: usize,
    pub ce: f64,
    pub dva: f64,
    pub ca_fraction: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: NetParams<f32>,
    pub log: Vec<StepLog>,
}

impl TrainOutcome {
    /// Mean masked cross-entropy per epoch.
    pub fn epoch_ce(&self) -> Vec<f64> {
        let epochs = self.log.iter().map(|s| s.epoch + 1).max().unwrap_or(0);
        (0..epochs)
            .map(|e| {
                let v: Vec<f64> = self
                    .log
                    .iter()
                    .filter(|s| s.epoch == e)
                    .map(|s| s.ce)
                    .collect();
                v.iter().sum::<f64>() / v.len().max(1) as f64
            })
            .collect()
    }
}

struct PatchResult {
    grads: ParamGrads<f32>,
    ce: f64,
    dva: f64,
    ca: usize,
    labeled: usize,
}

fn patch_step(
    params: &NetParams<f32>,
    pair: &TrainingPair,
    loss: &LossConfig,
    warmup: bool,
) -> Result<PatchResult> {
    let pass = forward(params, &pair.image)?;
    let l = if warmup {
        let mask = ConfidenceMask::all_labeled(&pair.labels);
        l2h_loss_with_mask(&pass.cp_map, &pass.features, &pair.labels, mask, loss)?
    } else {
        l2h_loss(&pass.cp_map, &pass.features, &pair.labels, loss)?
    };
    let upstream = Upstream {
        logits: Some(l.grad_logits),
        features: l.grad_features.into_iter().map(Some).collect(),
    };
    let grads = backward(params, &pair.image, &pass, &upstream)?;
    Ok(PatchResult {
        grads,
        ce: l.ce,
        dva: l.dva,
        ca: l.mask.ca_count,
        labeled: l.mask.ca_count + l.mask.va_count,
    })
}

/// SGD with momentum over shuffled mini-batches. Each patch's loss is a
/// per-patch mean; a batch gradient is the average over its patches, summed
/// in batch order so results do not depend on the thread count.
pub fn train(
    pairs: &[TrainingPair],
    backbone: &RPBackboneConfig,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    let params = init_params::<f32>(backbone, cfg.seed)?;
    train_from(pairs, params, cfg)
}

pub fn train_from(
    pairs: &[TrainingPair],
    params: NetParams<f32>,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    train_observed(pairs, params, cfg, |_| {})
}

/// [`train_from`] that hands every log entry to `observe` as it is produced.
pub fn train_observed(
    pairs: &[TrainingPair],
    mut params: NetParams<f32>,
    cfg: &TrainConfig,
    mut observe: impl FnMut(&StepLog),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if pairs.is_empty() {
        return Err(Error::Config("no training pairs".into()));
    }
    let mut velocity = ParamGrads::zeros_like(&params);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5_eed0_f7a1);
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    let mut log = Vec::new();
    let mut step = 0;
    let lr = cfg.learning_rate as f32;
    let momentum = cfg.momentum as f32;
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let take = if cfg.patches_per_epoch == 0 {
            order.len()
        } else {
            cfg.patches_per_epoch.min(order.len())
        };
        let warmup = epoch < cfg.warmup_epochs;
        for batch in order[..take].chunks(cfg.batch_size) {
            let results: Vec<Result<PatchResult>> = batch
                .par_iter()
                .map(|&i| patch_step(&params, &pairs[i], &cfg.loss, warmup))
                .collect();
            let mut sum = ParamGrads::zeros_like(&params);
            let (mut ce, mut dva, mut ca, mut labeled) = (0.0, 0.0, 0, 0);
            let scale = 1.0 / batch.len() as f32;
            for r in results {
                let r = r?;
                sum.add_scaled(&r.grads, scale);
                ce += r.ce;
                dva += r.dva;
                ca += r.ca;
                labeled += r.labeled;
            }
            let n = batch.len() as f64;
            let entry = StepLog {
                step,
                epoch,
                ce: ce / n,
                dva: dva / n,
                ca_fraction: if labeled == 0 {
                    0.0
                } else {
                    ca as f64 / labeled as f64
                },
            };
            if !entry.ce.is_finite() || !entry.dva.is_finite() || !sum.all_finite() {
                return Err(Error::Divergence {
                    step,
                    reason: format!("non-finite loss (ce {}, dva {})", entry.ce, entry.dva),
                    last_good: Some(Box::new(params)),
                });
            }
            observe(&entry);
            log.push(entry);
            // v <- momentum * v + g ; theta <- theta - lr * v
            for ((p, v), g) in params
                .convs
                .iter_mut()
                .zip(&mut velocity.convs)
                .zip(&sum.convs)
            {
                for ((pw, vw), &gw) in p.weight.iter_mut().zip(&mut v.weight).zip(&g.weight) {
                    *vw = momentum * *vw + gw;
                    *pw -= lr * *vw;
                }
                for ((pb, vb), &gb) in p.bias.iter_mut().zip(&mut v.bias).zip(&g.bias) {
                    *vb = momentum * *vb + gb;
                    *pb -= lr * *vb;
                }
            }
            step += 1;
        }
    }
    Ok(TrainOutcome { params, log })
}
