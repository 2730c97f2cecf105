//! Tiled prediction over large images with seamless merging.
//!
//! With crop-center blending every pixel is taken from exactly one tile, the
//! one whose interior it falls in: adjacent tiles split their overlap at its
//! midpoint. Once the overlap is at least twice the receptive-field radius,
//! each kept pixel sees the same neighbourhood it would in a whole-image pass.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{tile_windows, GridData, PixelRect, RasterGrid};
use crate::net::{forward_logits, receptive_field, NetParams};
use crate::tensor::{argmax_at, softmax_channels, TensorMap};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Blend {
    #[default]
    CropCenter,
    ProbAverage,
}

impl std::str::FromStr for Blend {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "crop-center" | "crop_center" => Ok(Self::CropCenter),
            "prob-average" | "prob_average" => Ok(Self::ProbAverage),
            other => Err(Error::Config(format!("unknown blend {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MosaicPolicy {
    pub tile: usize,
    pub overlap: usize,
    pub blend: Blend,
}

impl MosaicPolicy {
    /// Default 512-pixel tiles with overlap `2R` for the given network.
    pub fn for_params(params: &NetParams<f32>) -> Self {
        Self {
            tile: 512,
            overlap: 2 * receptive_field(&params.config),
            blend: Blend::CropCenter,
        }
    }
}

/// Half-open pixel range each window owns along one axis.
fn owned_ranges(starts: &[usize], tile: usize, n: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(starts.len());
    for (i, &s) in starts.iter().enumerate() {
        let lo = if i == 0 {
            0
        } else {
            let prev_end = starts[i - 1] + tile;
            s + (prev_end - s) / 2
        };
        let hi = if i + 1 == starts.len() {
            n
        } else {
            let end = s + tile;
            let next = starts[i + 1];
            next + (end - next) / 2
        };
        out.push((lo, hi));
    }
    out
}

fn image_tensor(image: &RasterGrid, rect: PixelRect) -> Result<TensorMap<f32>> {
    let sub = image.window(rect)?;
    TensorMap::from_vec(
        sub.bands(),
        sub.height(),
        sub.width(),
        sub.band_values()?.to_vec(),
    )
}

/// Predicts a class map (ids `1..=L`) and the per-pixel top probability.
pub fn predict_tiled(
    params: &NetParams<f32>,
    image: &RasterGrid,
    policy: &MosaicPolicy,
) -> Result<(RasterGrid, RasterGrid)> {
    let cfg = &params.config;
    let r = receptive_field(cfg);
    if policy.tile < 2 * r + 1 {
        return Err(Error::Config(format!(
            "tile {} smaller than receptive field span {}",
            policy.tile,
            2 * r + 1
        )));
    }
    if policy.blend == Blend::CropCenter && policy.overlap < 2 * r {
        return Err(Error::Config(format!(
            "overlap {} below 2R = {} breaks seamless crop-center merging",
            policy.overlap,
            2 * r
        )));
    }
    if image.bands() != cfg.input_channels {
        return Err(Error::Shape(format!(
            "image has {} bands, network expects {}",
            image.bands(),
            cfg.input_channels
        )));
    }
    image.band_values()?;
    let (w, h) = (image.width(), image.height());
    let windows = tile_windows(w, h, policy.tile, policy.overlap)?;
    let mut xs: Vec<usize> = windows.iter().map(|r| r.x).collect();
    let mut ys: Vec<usize> = windows.iter().map(|r| r.y).collect();
    xs.dedup();
    ys.sort_unstable();
    ys.dedup();
    xs.sort_unstable();
    xs.dedup();
    let tw = policy.tile.min(w);
    let th = policy.tile.min(h);
    let own_x = owned_ranges(&xs, tw, w);
    let own_y = owned_ranges(&ys, th, h);

    let probs: Vec<Result<TensorMap<f32>>> = windows
        .par_iter()
        .map(|&rect| {
            let logits = forward_logits(params, &image_tensor(image, rect)?)?;
            Ok(softmax_channels(&logits))
        })
        .collect();

    let mut classes = vec![0u8; w * h];
    let mut confidence = vec![0f32; w * h];
    match policy.blend {
        Blend::CropCenter => {
            for (rect, cp) in windows.iter().zip(probs) {
                let cp = cp?;
                let ix = xs.binary_search(&rect.x).expect("window start");
                let iy = ys.binary_search(&rect.y).expect("window start");
                let (x0, x1) = own_x[ix];
                let (y0, y1) = own_y[iy];
                for y in y0..y1 {
                    for x in x0..x1 {
                        let p = (y - rect.y) * rect.width + (x - rect.x);
                        let (k, v) = argmax_at(&cp, p);
                        classes[y * w + x] = (k + 1) as u8;
                        confidence[y * w + x] = v;
                    }
                }
            }
        }
        Blend::ProbAverage => {
            let l = cfg.num_classes;
            let mut acc = vec![0f32; l * w * h];
            let mut hits = vec![0u32; w * h];
            for (rect, cp) in windows.iter().zip(probs) {
                let cp = cp?;
                let plane = rect.width * rect.height;
                for ty in 0..rect.height {
                    for tx in 0..rect.width {
                        let p = ty * rect.width + tx;
                        let q = (rect.y + ty) * w + rect.x + tx;
                        hits[q] += 1;
                        for k in 0..l {
                            acc[k * w * h + q] += cp.values()[k * plane + p];
                        }
                    }
                }
            }
            let plane = w * h;
            for q in 0..plane {
                let n = hits[q] as f32;
                let mut best = (0usize, f32::NEG_INFINITY);
                for k in 0..l {
                    let v = acc[k * plane + q] / n;
                    if v > best.1 {
                        best = (k, v);
                    }
                }
                classes[q] = (best.0 + 1) as u8;
                confidence[q] = best.1;
            }
        }
    }
    let georef = image.georef().clone();
    let class_map = RasterGrid::from_classes(w, h, georef.clone(), classes)?;
    let cp_max = RasterGrid::new(w, h, 1, f64::NAN, georef, GridData::Band(confidence))?;
    Ok((class_map, cp_max))
}

/// Whole-image prediction without tiling.
pub fn predict_full(params: &NetParams<f32>, image: &RasterGrid) -> Result<RasterGrid> {
    let rect = PixelRect {
        x: 0,
        y: 0,
        width: image.width(),
        height: image.height(),
    };
    let cp = softmax_channels(&forward_logits(params, &image_tensor(image, rect)?)?);
    let classes = (0..image.pixel_count())
        .map(|p| (argmax_at(&cp, p).0 + 1) as u8)
        .collect();
    RasterGrid::from_classes(
        image.width(),
        image.height(),
        image.georef().clone(),
        classes,
    )
}
