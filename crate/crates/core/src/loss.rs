//! Confident-area selection and the two-part weak-supervision objective.
//!
//! Coarse labels upsampled onto the fine grid are trusted only where the
//! network already agrees with them confidently (the confident area, CA).
//! Cross-entropy is averaged over CA alone. The remaining labeled pixels form
//! the vague area (VA); a feature-space term pulls the per-class mean of VA
//! features toward the CA mean in every backbone block.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::scheme::UNLABELED;
use crate::tensor::{argmax_at, Real, TensorMap};

/// Clamp for `ln` of vanishing probabilities.
pub const LOG_EPS: f64 = 1e-12;

/// How the per-class CA/VA mean difference is turned into a penalty.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum VarianceForm {
    /// `||mu_ca - mu_va||^2`
    #[default]
    SquaredNorm,
    /// `||mu_ca - mu_va||`
    Norm,
}

/// Which class a VA pixel is grouped under when forming VA means.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum VaClassSource {
    /// The network's current argmax.
    #[default]
    Predicted,
    /// The (unreliable) coarse label.
    Label,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LossConfig {
    pub tau: f64,
    pub gamma: f64,
    pub variance_form: VarianceForm,
    pub va_class: VaClassSource,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            tau: 0.7,
            gamma: 0.05,
            variance_form: VarianceForm::SquaredNorm,
            va_class: VaClassSource::Predicted,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(Error::Config(format!(
                "tau must lie in (0, 1), got {}",
                self.tau
            )));
        }
        if !(self.gamma >= 0.0) || !self.gamma.is_finite() {
            return Err(Error::Config(format!(
                "gamma must be non-negative, got {}",
                self.gamma
            )));
        }
        Ok(())
    }
}

/// Fine-grid label patch; `0` is UNLABELED, class `id` is channel `id - 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelPatch {
    pub width: usize,
    pub height: usize,
    pub labels: Vec<u8>,
}

impl LabelPatch {
    pub fn new(width: usize, height: usize, labels: Vec<u8>) -> Result<Self> {
        if labels.len() != width * height {
            return Err(Error::Shape(format!(
                "{} labels for a {width}x{height} patch",
                labels.len()
            )));
        }
        Ok(Self {
            width,
            height,
            labels,
        })
    }

    pub fn labeled_count(&self) -> usize {
        self.labels.iter().filter(|&&l| l != UNLABELED).count()
    }

    /// True when every aligned `block`x`block` cell holds a single value.
    pub fn is_block_constant(&self, block: usize) -> bool {
        (0..self.height).all(|y| {
            (0..self.width).all(|x| {
                let anchor = (y / block * block) * self.width + x / block * block;
                self.labels[y * self.width + x] == self.labels[anchor]
            })
        })
    }
}

/// Binary CAS mask: 1 marks a confident pixel. Labeled pixels with mask 0
/// form the vague area; unlabeled pixels belong to neither set.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceMask {
    pub width: usize,
    pub height: usize,
    pub tau: f64,
    pub mask: Vec<u8>,
    pub ca_count: usize,
    pub va_count: usize,
}

impl ConfidenceMask {
    /// Every labeled pixel confident. Used while the network is still
    /// uniform and no pixel could pass the threshold.
    pub fn all_labeled(labels: &LabelPatch) -> Self {
        let mask: Vec<u8> = labels
            .labels
            .iter()
            .map(|&l| u8::from(l != UNLABELED))
            .collect();
        let ca = mask.iter().filter(|&&m| m == 1).count();
        Self {
            width: labels.width,
            height: labels.height,
            tau: 0.0,
            mask,
            ca_count: ca,
            va_count: 0,
        }
    }

    pub fn in_ca(&self, p: usize) -> bool {
        self.mask[p] == 1
    }

    /// Fraction of labeled pixels that are confident.
    pub fn ca_fraction(&self) -> f64 {
        let labeled = self.ca_count + self.va_count;
        if labeled == 0 {
            0.0
        } else {
            self.ca_count as f64 / labeled as f64
        }
    }
}

fn check_shapes<T: Real>(cp_map: &TensorMap<T>, labels: &LabelPatch) -> Result<()> {
    if cp_map.height() != labels.height || cp_map.width() != labels.width {
        return Err(Error::Shape(format!(
            "cp map {}x{} vs labels {}x{}",
            cp_map.width(),
            cp_map.height(),
            labels.width,
            labels.height
        )));
    }
    let classes = cp_map.channels();
    if let Some(&bad) = labels.labels.iter().find(|&&l| usize::from(l) > classes) {
        return Err(Error::UnknownClass(u32::from(bad)));
    }
    Ok(())
}

fn check_mask(mask: &ConfidenceMask, labels: &LabelPatch) -> Result<()> {
    if mask.width != labels.width || mask.height != labels.height {
        return Err(Error::Shape("mask and labels differ in shape".into()));
    }
    Ok(())
}

/// A pixel is confident when it is labeled, its top probability reaches
/// `tau`, and the top class is the labeled class.
pub fn cas_select<T: Real>(
    cp_map: &TensorMap<T>,
    labels: &LabelPatch,
    cfg: &LossConfig,
) -> Result<ConfidenceMask> {
    check_shapes(cp_map, labels)?;
    let tau = T::from_f64(cfg.tau);
    let mut ca = 0;
    let mut va = 0;
    let mask = labels
        .labels
        .iter()
        .enumerate()
        .map(|(p, &l)| {
            if l == UNLABELED {
                return 0;
            }
            let (k, peak) = argmax_at(cp_map, p);
            if peak >= tau && k + 1 == usize::from(l) {
                ca += 1;
                1
            } else {
                va += 1;
                0
            }
        })
        .collect();
    Ok(ConfidenceMask {
        width: labels.width,
        height: labels.height,
        tau: cfg.tau,
        mask,
        ca_count: ca,
        va_count: va,
    })
}

/// Cross-entropy averaged over the confident area. Returns the loss and its
/// gradient with respect to the logits that produced `cp_map`.
pub fn masked_ce<T: Real>(
    cp_map: &TensorMap<T>,
    labels: &LabelPatch,
    mask: &ConfidenceMask,
) -> Result<(f64, TensorMap<T>)> {
    check_shapes(cp_map, labels)?;
    check_mask(mask, labels)?;
    let (classes, h, w) = cp_map.shape();
    let plane = h * w;
    let mut grad = TensorMap::zeros(classes, h, w);
    let ca = mask.mask.iter().filter(|&&m| m == 1).count();
    if ca == 0 {
        return Ok((0.0, grad));
    }
    let scale = T::from_f64(1.0 / ca as f64);
    let cp = cp_map.values();
    let g = grad.values_mut();
    let mut sum = 0.0f64;
    for p in 0..plane {
        if mask.mask[p] != 1 {
            continue;
        }
        let l = usize::from(labels.labels[p]);
        if l == 0 {
            continue;
        }
        let y = cp[(l - 1) * plane + p];
        let yf = y.to_f64();
        if yf < LOG_EPS {
            // ln is clamped here, so the loss is flat in the logits.
            sum -= LOG_EPS.ln();
            continue;
        }
        sum -= yf.ln();
        for k in 0..classes {
            let target = if k + 1 == l { T::ONE } else { T::ZERO };
            g[k * plane + p] = (cp[k * plane + p] - target) * scale;
        }
    }
    Ok((sum / ca as f64, grad))
}

/// Class each labeled pixel is grouped under for the feature-mean term,
/// paired with whether it sits in CA. `None` for pixels outside both sets.
fn dva_groups<T: Real>(
    cp_map: &TensorMap<T>,
    labels: &LabelPatch,
    mask: &ConfidenceMask,
    source: VaClassSource,
) -> Vec<Option<(usize, bool)>> {
    labels
        .labels
        .iter()
        .enumerate()
        .map(|(p, &l)| {
            if l == UNLABELED {
                None
            } else if mask.in_ca(p) {
                Some((usize::from(l) - 1, true))
            } else {
                let k = match source {
                    VaClassSource::Predicted => argmax_at(cp_map, p).0,
                    VaClassSource::Label => usize::from(l) - 1,
                };
                Some((k, false))
            }
        })
        .collect()
}

/// Feature-space mean-difference penalty between CA and VA, summed over
/// blocks and classes and scaled by `gamma`. Class/block pairs with an empty
/// CA or VA side contribute nothing.
pub fn dva_loss<T: Real>(
    features: &[TensorMap<T>],
    cp_map: &TensorMap<T>,
    labels: &LabelPatch,
    mask: &ConfidenceMask,
    cfg: &LossConfig,
) -> Result<(f64, Vec<TensorMap<T>>)> {
    check_shapes(cp_map, labels)?;
    check_mask(mask, labels)?;
    let (classes, h, w) = cp_map.shape();
    let plane = h * w;
    let groups = dva_groups(cp_map, labels, mask, cfg.va_class);

    let mut n_ca = vec![0usize; classes];
    let mut n_va = vec![0usize; classes];
    for &(k, in_ca) in groups.iter().flatten() {
        if in_ca {
            n_ca[k] += 1;
        } else {
            n_va[k] += 1;
        }
    }
    let active: Vec<bool> = (0..classes).map(|k| n_ca[k] > 0 && n_va[k] > 0).collect();

    let mut total = 0.0f64;
    let mut grads = Vec::with_capacity(features.len());
    for f in features {
        if f.height() != h || f.width() != w {
            return Err(Error::Shape("feature map and cp map differ in size".into()));
        }
        let channels = f.channels();
        let mut grad = TensorMap::zeros(channels, h, w);
        if cfg.gamma == 0.0 || !active.iter().any(|&a| a) {
            grads.push(grad);
            continue;
        }
        // diff[k][c] = mean_ca - mean_va
        let mut diff = vec![0.0f64; classes * channels];
        for c in 0..channels {
            let fc = f.channel(c);
            let mut s_ca = vec![0.0f64; classes];
            let mut s_va = vec![0.0f64; classes];
            for (p, g) in groups.iter().enumerate() {
                if let Some((k, in_ca)) = *g {
                    if in_ca {
                        s_ca[k] += fc[p].to_f64();
                    } else {
                        s_va[k] += fc[p].to_f64();
                    }
                }
            }
            for k in 0..classes {
                if active[k] {
                    diff[k * channels + c] = s_ca[k] / n_ca[k] as f64 - s_va[k] / n_va[k] as f64;
                }
            }
        }
        // coef[k][c] multiplies +1/n_ca (CA pixels) or -1/n_va (VA pixels)
        let mut coef = vec![0.0f64; classes * channels];
        for k in (0..classes).filter(|&k| active[k]) {
            let d = &diff[k * channels..(k + 1) * channels];
            let sq: f64 = d.iter().map(|v| v * v).sum();
            match cfg.variance_form {
                VarianceForm::SquaredNorm => {
                    total += cfg.gamma * sq;
                    for c in 0..channels {
                        coef[k * channels + c] = 2.0 * cfg.gamma * d[c];
                    }
                }
                VarianceForm::Norm => {
                    let norm = sq.sqrt();
                    total += cfg.gamma * norm;
                    if norm > 0.0 {
                        for c in 0..channels {
                            coef[k * channels + c] = cfg.gamma * d[c] / norm;
                        }
                    }
                }
            }
        }
        let gv = grad.values_mut();
        for c in 0..channels {
            let gc = &mut gv[c * plane..(c + 1) * plane];
            for (p, g) in groups.iter().enumerate() {
                if let Some((k, in_ca)) = *g {
                    if !active[k] {
                        continue;
                    }
                    let a = coef[k * channels + c];
                    gc[p] = T::from_f64(if in_ca {
                        a / n_ca[k] as f64
                    } else {
                        -a / n_va[k] as f64
                    });
                }
            }
        }
        grads.push(grad);
    }
    Ok((total, grads))
}

/// Combined objective: masked cross-entropy plus the feature-mean term.
#[derive(Debug, Clone)]
pub struct L2hLoss<T> {
    pub loss: f64,
    pub ce: f64,
    pub dva: f64,
    pub grad_logits: TensorMap<T>,
    pub grad_features: Vec<TensorMap<T>>,
    pub mask: ConfidenceMask,
}

pub fn l2h_loss<T: Real>(
    cp_map: &TensorMap<T>,
    features: &[TensorMap<T>],
    labels: &LabelPatch,
    cfg: &LossConfig,
) -> Result<L2hLoss<T>> {
    let mask = cas_select(cp_map, labels, cfg)?;
    l2h_loss_with_mask(cp_map, features, labels, mask, cfg)
}

/// Same as [`l2h_loss`] with a caller-chosen mask.
pub fn l2h_loss_with_mask<T: Real>(
    cp_map: &TensorMap<T>,
    features: &[TensorMap<T>],
    labels: &LabelPatch,
    mask: ConfidenceMask,
    cfg: &LossConfig,
) -> Result<L2hLoss<T>> {
    let (ce, grad_logits) = masked_ce(cp_map, labels, &mask)?;
    let (dva, grad_features) = dva_loss(features, cp_map, labels, &mask, cfg)?;
    Ok(L2hLoss {
        loss: ce + dva,
        ce,
        dva,
        grad_logits,
        grad_features,
        mask,
    })
}
