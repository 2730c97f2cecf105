//! Deterministic synthetic scenes: fine imagery, fine ground truth, three
//! noisy coarse products in their own legends, and road polylines.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::fusion::{rasterize_roads, HarmonizationTable};
use crate::grid::{GeoRef, RasterGrid};
use crate::scheme::{BD, CL, GL, TC, TR, WT};
use crate::vector::{Polyline, VectorLines};

/// Coarse-to-fine pixel ratio between products and imagery.
pub const COARSE_FACTOR: usize = 10;

/// Offset added to unified ids to form product `p`'s private legend.
fn product_code(p: usize, id: u8) -> u8 {
    id + 20 * (p as u8 + 1)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    /// Fine-grid size in pixels; both multiples of [`COARSE_FACTOR`].
    pub width: usize,
    pub height: usize,
    /// Area classes drawn by the blob model.
    pub classes: Vec<u8>,
    /// Target area fraction per entry of `classes`.
    pub fractions: Vec<f64>,
    /// Mean RGB per entry of `classes`.
    pub class_means: Vec<[f32; 3]>,
    /// Mean RGB of road pixels.
    pub road_mean: [f32; 3],
    pub noise_sigma: f32,
    /// Lattice spacing of the blob noise, in fine pixels.
    pub feature_size: f64,
    /// Per-product probability of replacing a coarse pixel with another class.
    pub label_noise: f64,
    pub roads: usize,
    pub road_width_px: usize,
    /// Enforce class-mean separation of at least `3 * noise_sigma`.
    pub easy: bool,
    pub seed: u64,
}

impl SceneSpec {
    /// 1000x1000, five land-cover classes plus roads, 20% product noise.
    pub fn easy() -> Self {
        Self {
            width: 1000,
            height: 1000,
            classes: vec![TC, GL, CL, BD, WT],
            fractions: vec![0.2; 5],
            class_means: vec![
                [0.15, 0.45, 0.15],
                [0.60, 0.75, 0.30],
                [0.80, 0.55, 0.75],
                [0.85, 0.25, 0.20],
                [0.10, 0.25, 0.70],
            ],
            road_mean: [0.45, 0.45, 0.45],
            noise_sigma: 0.05,
            feature_size: 80.0,
            label_noise: 0.2,
            roads: 4,
            road_width_px: 3,
            easy: true,
            seed: 7,
        }
    }

    /// Every class that can appear in truth or products.
    pub fn legend(&self) -> Vec<u8> {
        let mut ids = self.classes.clone();
        if self.roads > 0 && !ids.contains(&TR) {
            ids.push(TR);
        }
        ids.sort_unstable();
        ids
    }

    fn mean_of(&self, id: u8) -> [f32; 3] {
        match self.classes.iter().position(|&c| c == id) {
            Some(i) => self.class_means[i],
            None => self.road_mean,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.width == 0
            || self.height == 0
            || !self.width.is_multiple_of(COARSE_FACTOR)
            || !self.height.is_multiple_of(COARSE_FACTOR)
        {
            return bad(format!(
                "scene size {}x{} must be a positive multiple of {COARSE_FACTOR}",
                self.width, self.height
            ));
        }
        if self.classes.is_empty() || self.classes.len() > 11 {
            return bad("scene needs 1 to 11 classes".into());
        }
        if self.classes.iter().any(|&c| c == 0 || c > 11) {
            return bad("scene classes must be unified ids 1..=11".into());
        }
        let mut sorted = self.classes.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.classes.len() {
            return bad("duplicate scene classes".into());
        }
        if self.fractions.len() != self.classes.len()
            || self.class_means.len() != self.classes.len()
        {
            return bad("fractions and class_means must match classes".into());
        }
        if self.fractions.iter().any(|&f| !(f >= 0.0)) {
            return bad("fractions must be non-negative".into());
        }
        let sum: f64 = self.fractions.iter().sum();
        if (sum - 1.0).abs() > 1e-6 {
            return bad(format!("fractions sum to {sum}, expected 1"));
        }
        if !(0.0..1.0).contains(&self.label_noise) {
            return bad(format!("label noise {} outside [0, 1)", self.label_noise));
        }
        if self.legend().len() < 2 && self.label_noise > 0.0 {
            return bad("label noise needs at least two classes".into());
        }
        if !(self.noise_sigma >= 0.0) || !(self.feature_size > 0.0) {
            return bad("noise_sigma and feature_size must be positive".into());
        }
        if self.roads > 0 && self.road_width_px == 0 {
            return bad("road width must be positive".into());
        }
        if self.easy {
            let means: Vec<[f32; 3]> = self.legend().iter().map(|&id| self.mean_of(id)).collect();
            let min_sep = 3.0 * self.noise_sigma;
            for i in 0..means.len() {
                for j in i + 1..means.len() {
                    let d: f32 = (0..3)
                        .map(|c| (means[i][c] - means[j][c]).powi(2))
                        .sum::<f32>()
                        .sqrt();
                    if d < min_sep {
                        return bad(format!(
                            "class means {i} and {j} are {d:.3} apart, need {min_sep:.3}"
                        ));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Everything a scene produces.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    /// Three f32 bands on the fine grid.
    pub image: RasterGrid,
    pub truth: RasterGrid,
    /// Noisy coarse products in their private legends.
    pub products: [RasterGrid; 3],
    /// Crosswalks from each product legend to unified ids.
    pub tables: [HarmonizationTable; 3],
    pub roads: VectorLines,
}

fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

/// Smooth random field in `[0, 1]`: lattice values with smoothstep
/// interpolation.
struct ValueNoise {
    cols: usize,
    spacing: f64,
    lattice: Vec<f64>,
}

impl ValueNoise {
    fn new(width: usize, height: usize, spacing: f64, rng: &mut ChaCha8Rng) -> Self {
        let cols = (width as f64 / spacing).ceil() as usize + 2;
        let rows = (height as f64 / spacing).ceil() as usize + 2;
        let lattice = (0..cols * rows).map(|_| rng.random::<f64>()).collect();
        Self {
            cols,
            spacing,
            lattice,
        }
    }

    fn at(&self, x: f64, y: f64) -> f64 {
        let (gx, gy) = (x / self.spacing, y / self.spacing);
        let (ix, iy) = (gx.floor() as usize, gy.floor() as usize);
        let s = |t: f64| t * t * (3.0 - 2.0 * t);
        let (tx, ty) = (s(gx - ix as f64), s(gy - iy as f64));
        let v = |cx: usize, cy: usize| self.lattice[cy * self.cols + cx];
        let top = v(ix, iy) * (1.0 - tx) + v(ix + 1, iy) * tx;
        let bottom = v(ix, iy + 1) * (1.0 - tx) + v(ix + 1, iy + 1) * tx;
        top * (1.0 - ty) + bottom * ty
    }
}

/// Assigns each pixel the class maximizing `field_k + bias_k`, with biases
/// fitted so class areas track the requested fractions.
fn blob_classes(spec: &SceneSpec, rng: &mut ChaCha8Rng) -> Vec<u8> {
    let (w, h) = (spec.width, spec.height);
    let k = spec.classes.len();
    let fields: Vec<ValueNoise> = (0..k)
        .map(|_| ValueNoise::new(w, h, spec.feature_size, rng))
        .collect();
    let mut values = vec![0.0f64; k * w * h];
    for y in 0..h {
        for x in 0..w {
            for (c, f) in fields.iter().enumerate() {
                values[c * w * h + y * w + x] = f.at(x as f64 + 0.5, y as f64 + 0.5);
            }
        }
    }
    let pick = |bias: &[f64], p: usize| -> usize {
        let mut best = 0;
        let mut best_v = f64::NEG_INFINITY;
        for c in 0..k {
            if spec.fractions[c] <= 0.0 {
                continue;
            }
            let v = values[c * w * h + p] + bias[c];
            if v > best_v {
                best_v = v;
                best = c;
            }
        }
        best
    };
    let mut bias = vec![0.0f64; k];
    let n = (w * h) as f64;
    let mut step = 0.5;
    for _ in 0..60 {
        let mut counts = vec![0usize; k];
        for p in 0..w * h {
            counts[pick(&bias, p)] += 1;
        }
        let worst = (0..k)
            .map(|c| (counts[c] as f64 / n - spec.fractions[c]).abs())
            .fold(0.0, f64::max);
        if worst < 0.002 {
            break;
        }
        for c in 0..k {
            bias[c] += step * (spec.fractions[c] - counts[c] as f64 / n);
        }
        step *= 0.93;
    }
    (0..w * h).map(|p| spec.classes[pick(&bias, p)]).collect()
}

fn random_roads(spec: &SceneSpec, georef: &GeoRef, rng: &mut ChaCha8Rng) -> VectorLines {
    let (w, h) = (spec.width as f64, spec.height as f64);
    let lines = (0..spec.roads)
        .map(|i| {
            // Alternate west-east and north-south roads with one bend.
            let pts = if i % 2 == 0 {
                let y0 = rng.random_range(0.1..0.9) * h;
                let y1 = rng.random_range(0.1..0.9) * h;
                let xm = rng.random_range(0.3..0.7) * w;
                let ym = rng.random_range(0.1..0.9) * h;
                vec![(0.0, y0), (xm, ym), (w, y1)]
            } else {
                let x0 = rng.random_range(0.1..0.9) * w;
                let x1 = rng.random_range(0.1..0.9) * w;
                let xm = rng.random_range(0.1..0.9) * w;
                let ym = rng.random_range(0.3..0.7) * h;
                vec![(x0, 0.0), (xm, ym), (x1, h)]
            };
            // Pixel space to map space.
            let points = pts
                .into_iter()
                .map(|(px, py)| {
                    (
                        georef.origin_x + px * georef.pixel_size_x,
                        georef.origin_y + py * georef.pixel_size_y,
                    )
                })
                .collect();
            let mut attributes = std::collections::BTreeMap::new();
            attributes.insert("highway".to_string(), "synthetic".to_string());
            Polyline { points, attributes }
        })
        .collect();
    VectorLines::new(lines).expect("roads have three vertices")
}

/// Majority vote over `factor`x`factor` blocks; ties go to the lowest id.
pub fn majority_downsample(grid: &RasterGrid, factor: usize) -> Result<RasterGrid> {
    let (w, h) = (grid.width(), grid.height());
    if factor == 0 || w % factor != 0 || h % factor != 0 {
        return Err(Error::Shape(format!(
            "{w}x{h} grid not divisible by {factor}"
        )));
    }
    let src = grid.classes()?;
    let (ow, oh) = (w / factor, h / factor);
    let mut out = Vec::with_capacity(ow * oh);
    let mut hist = [0usize; 256];
    for by in 0..oh {
        for bx in 0..ow {
            hist.fill(0);
            for y in by * factor..(by + 1) * factor {
                for &v in &src[y * w + bx * factor..y * w + (bx + 1) * factor] {
                    hist[usize::from(v)] += 1;
                }
            }
            let mut best = 0;
            for (id, &n) in hist.iter().enumerate() {
                if n > hist[best] {
                    best = id;
                }
            }
            out.push(best as u8);
        }
    }
    RasterGrid::from_classes(ow, oh, grid.georef().scaled(factor as f64), out)
}

pub fn generate(spec: &SceneSpec) -> Result<Scene> {
    spec.validate()?;
    let (w, h) = (spec.width, spec.height);
    let georef = GeoRef::north_up(h, 1.0);

    let mut shape_rng = rng(spec.seed, 1);
    let mut truth = blob_classes(spec, &mut shape_rng);

    let mut road_rng = rng(spec.seed, 2);
    let roads = random_roads(spec, &georef, &mut road_rng);
    let template = RasterGrid::from_classes(w, h, georef.clone(), vec![0; w * h])?;
    if spec.roads > 0 {
        let mask = rasterize_roads(&roads, &template, spec.road_width_px)?;
        for (t, &m) in truth.iter_mut().zip(mask.classes()?) {
            if m == 1 {
                *t = TR;
            }
        }
    }
    let truth = template.with_classes(truth)?;

    let mut image_rng = rng(spec.seed, 3);
    let plane = w * h;
    let mut bands = vec![0f32; 3 * plane];
    let means: Vec<[f32; 3]> = (0..=11u8).map(|id| spec.mean_of(id)).collect();
    for (p, &c) in truth.classes()?.iter().enumerate() {
        let m = means[usize::from(c)];
        for b in 0..3 {
            let z: f32 = StandardNormal.sample(&mut image_rng);
            bands[b * plane + p] = m[b] + spec.noise_sigma * z;
        }
    }
    let image = RasterGrid::from_bands(w, h, 3, georef, bands)?;

    let coarse = majority_downsample(&truth, COARSE_FACTOR)?;
    let legend = spec.legend();
    let make_product = |p: usize| -> Result<(RasterGrid, HarmonizationTable)> {
        let mut r = rng(spec.seed, 10 + p as u64);
        let data = coarse
            .classes()?
            .iter()
            .map(|&v| {
                let id = if spec.label_noise > 0.0 && r.random::<f64>() < spec.label_noise {
                    let others: Vec<u8> = legend.iter().copied().filter(|&c| c != v).collect();
                    *others.choose(&mut r).expect("at least two classes")
                } else {
                    v
                };
                product_code(p, id)
            })
            .collect();
        let mapping = legend.iter().map(|&id| (product_code(p, id), id)).collect();
        Ok((
            coarse.with_classes(data)?,
            HarmonizationTable::new(format!("product_{}", p + 1), mapping),
        ))
    };
    let (p0, t0) = make_product(0)?;
    let (p1, t1) = make_product(1)?;
    let (p2, t2) = make_product(2)?;
    Ok(Scene {
        image,
        truth,
        products: [p0, p1, p2],
        tables: [t0, t1, t2],
        roads,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fusion::{harmonize, intersect_products};
    use crate::scheme::UNLABELED;

    fn small(noise: f64, roads: usize) -> SceneSpec {
        SceneSpec {
            width: 200,
            height: 150,
            label_noise: noise,
            roads,
            feature_size: 40.0,
            ..SceneSpec::easy()
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let a = generate(&small(0.2, 2)).unwrap();
        let b = generate(&small(0.2, 2)).unwrap();
        assert_eq!(a, b);
        let mut other = small(0.2, 2);
        other.seed += 1;
        assert_ne!(generate(&other).unwrap().truth, a.truth);
    }

    #[test]
    fn noiseless_products_intersect_to_majority_truth() {
        let s = generate(&small(0.0, 0)).unwrap();
        let h: Vec<RasterGrid> = (0..3)
            .map(|i| harmonize(&s.products[i], &s.tables[i]).unwrap())
            .collect();
        let pre = intersect_products(&h[0], &h[1], &h[2]).unwrap();
        assert!(pre.classes().unwrap().iter().all(|&v| v != UNLABELED));
        assert_eq!(pre, majority_downsample(&s.truth, COARSE_FACTOR).unwrap());
    }

    #[test]
    fn majority_ties_go_low() {
        let g = RasterGrid::from_classes(2, 2, GeoRef::default(), vec![5, 5, 2, 2]).unwrap();
        assert_eq!(majority_downsample(&g, 2).unwrap().classes().unwrap(), &[2]);
    }

    #[test]
    fn roads_are_burned_as_traffic_route() {
        let s = generate(&small(0.0, 2)).unwrap();
        assert!(s.truth.classes().unwrap().contains(&TR));
        assert_eq!(s.roads.len(), 2);
    }

    #[test]
    fn validation() {
        let mut s = small(0.0, 0);
        s.width = 205;
        assert!(s.validate().is_err());
        let mut s = small(1.0, 0);
        assert!(s.validate().is_err());
        s.label_noise = 0.1;
        s.class_means[1] = s.class_means[0];
        assert!(s.validate().is_err());
    }
}
