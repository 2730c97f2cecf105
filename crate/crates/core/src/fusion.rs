//! Training-label construction from several coarse land-cover products.
//!
//! Each product is translated into the unified legend, the three translated
//! products are intersected (only unanimous pixels survive), and rasterized
//! roads are burned on top as traffic route.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::RasterGrid;
use crate::scheme::{ClassScheme, TR, UNLABELED};
use crate::vector::VectorLines;

/// Crosswalk from one product's legend to the unified legend.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HarmonizationTable {
    pub product_name: String,
    mapping: BTreeMap<u8, u8>,
}

impl HarmonizationTable {
    pub fn new(product_name: impl Into<String>, mapping: BTreeMap<u8, u8>) -> Self {
        Self {
            product_name: product_name.into(),
            mapping,
        }
    }

    pub fn identity(product_name: impl Into<String>, scheme: &ClassScheme) -> Self {
        let mapping = scheme.classes().iter().map(|c| (c.id, c.id)).collect();
        Self::new(product_name, mapping)
    }

    pub fn get(&self, source: u8) -> Option<u8> {
        self.mapping.get(&source).copied()
    }

    pub fn mapping(&self) -> &BTreeMap<u8, u8> {
        &self.mapping
    }

    /// Checks every target against `scheme`; targets may also be UNLABELED.
    pub fn validate(&self, scheme: &ClassScheme) -> Result<()> {
        for (&src, &dst) in &self.mapping {
            if dst != UNLABELED && !scheme.contains(dst) {
                return Err(Error::Config(format!(
                    "{}: source {src} maps to {dst}, which is not in the class scheme",
                    self.product_name
                )));
            }
        }
        Ok(())
    }

    /// Parses `source_id -> unified_id` lines. `#` starts a comment.
    pub fn parse(product_name: &str, text: &str) -> Result<Self> {
        let mut mapping = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (src, dst) = line.split_once("->").ok_or_else(|| {
                Error::Format(format!("{product_name}:{}: expected `a -> b`", n + 1))
            })?;
            let parse = |s: &str| {
                s.trim().parse::<u8>().map_err(|_| {
                    Error::Format(format!("{product_name}:{}: bad class id {s:?}", n + 1))
                })
            };
            let (src, dst) = (parse(src)?, parse(dst)?);
            if mapping.insert(src, dst).is_some() {
                return Err(Error::Format(format!(
                    "{product_name}:{}: source id {src} mapped twice",
                    n + 1
                )));
            }
        }
        Ok(Self::new(product_name, mapping))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        Self::parse(&name, &std::fs::read_to_string(path)?)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("# {}\n", self.product_name);
        for (s, d) in &self.mapping {
            out.push_str(&format!("{s} -> {d}\n"));
        }
        out
    }
}

/// How rasterized roads combine with the intersected pre-labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RoadOverlay {
    /// Road pixels become TR regardless of the pre-label.
    #[default]
    Override,
    /// Road pixels become TR only where the pre-label is UNLABELED.
    FillOnly,
}

impl std::str::FromStr for RoadOverlay {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "override" => Ok(Self::Override),
            "fill-only" | "fill_only" => Ok(Self::FillOnly),
            other => Err(Error::Config(format!(
                "unknown road overlay mode {other:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FusionReport {
    pub total_pixels: usize,
    pub stable_pixels: usize,
    pub unlabeled_pixels: usize,
    pub road_pixels: usize,
    /// Output histogram keyed by class id, UNLABELED excluded.
    pub per_class: BTreeMap<u8, usize>,
}

pub fn harmonize(product: &RasterGrid, table: &HarmonizationTable) -> Result<RasterGrid> {
    let nodata = product.class_nodata();
    let src = product.classes()?;
    let mut lut: [Option<u8>; 256] = [None; 256];
    for (&s, &d) in table.mapping() {
        lut[usize::from(s)] = Some(d);
    }
    let mut out = Vec::with_capacity(src.len());
    for &v in src {
        if Some(v) == nodata {
            out.push(UNLABELED);
            continue;
        }
        match lut[usize::from(v)] {
            Some(d) => out.push(d),
            None => return Err(Error::UnknownClass(u32::from(v))),
        }
    }
    product.with_classes(out)
}

fn check_aligned(a: &RasterGrid, b: &RasterGrid, what: &str) -> Result<()> {
    if a.aligned_with(b) {
        Ok(())
    } else {
        Err(Error::Alignment(format!(
            "{what}: {}x{} {:?} vs {}x{} {:?}",
            a.width(),
            a.height(),
            a.georef(),
            b.width(),
            b.height(),
            b.georef()
        )))
    }
}

/// Keeps a pixel only where all three products agree on a real class.
pub fn intersect_products(a: &RasterGrid, b: &RasterGrid, c: &RasterGrid) -> Result<RasterGrid> {
    check_aligned(a, b, "intersect_products")?;
    check_aligned(a, c, "intersect_products")?;
    let out = a
        .classes()?
        .iter()
        .zip(b.classes()?)
        .zip(c.classes()?)
        .map(|((&x, &y), &z)| if x == y && y == z { x } else { UNLABELED })
        .collect();
    a.with_classes(out)
}

/// Columns `c` whose closed span `[c, c+1]` meets `[lo, hi]`, clipped to `0..n`.
fn closed_span(lo: f64, hi: f64, n: usize) -> Option<(usize, usize)> {
    let first = (lo.ceil() - 1.0).max(0.0);
    let last = hi.floor().min(n as f64 - 1.0);
    if first > last || hi < 0.0 || lo > n as f64 {
        None
    } else {
        Some((first as usize, last as usize))
    }
}

/// Marks every cell whose closed square meets the segment `p0`-`p1`
/// (pixel-space coordinates).
pub(crate) fn trace_segment(
    p0: (f64, f64),
    p1: (f64, f64),
    width: usize,
    height: usize,
    mut mark: impl FnMut(usize, usize),
) {
    let (x0, y0) = p0;
    let (x1, y1) = p1;
    let (xmin, xmax) = (x0.min(x1), x0.max(x1));
    let Some((c0, c1)) = closed_span(xmin, xmax, width) else {
        return;
    };
    let dx = x1 - x0;
    for c in c0..=c1 {
        // Clip the segment to the closed column strip [c, c+1].
        let (ylo, yhi) = if dx == 0.0 {
            (y0.min(y1), y0.max(y1))
        } else {
            let ta = ((c as f64 - x0) / dx).clamp(0.0, 1.0);
            let tb = ((c as f64 + 1.0 - x0) / dx).clamp(0.0, 1.0);
            let (ta, tb) = (ta.min(tb), ta.max(tb));
            let ya = y0 + (y1 - y0) * ta;
            let yb = y0 + (y1 - y0) * tb;
            (ya.min(yb), ya.max(yb))
        };
        if let Some((r0, r1)) = closed_span(ylo, yhi, height) {
            for r in r0..=r1 {
                mark(c, r);
            }
        }
    }
}

/// Burns polylines into a binary mask shaped like `template`. Cells touched
/// by a line are dilated by a square of radius `(width_px - 1) / 2`, clipped
/// at the grid border.
pub fn rasterize_roads(
    lines: &VectorLines,
    template: &RasterGrid,
    width_px: usize,
) -> Result<RasterGrid> {
    if width_px == 0 {
        return Err(Error::Config("road width must be at least 1 pixel".into()));
    }
    let (w, h) = (template.width(), template.height());
    let georef = template.georef();
    let mut traced = vec![false; w * h];
    for line in lines.lines() {
        let pts: Vec<(f64, f64)> = line
            .points
            .iter()
            .map(|&(x, y)| georef.world_to_pixel(x, y))
            .collect();
        for seg in pts.windows(2) {
            trace_segment(seg[0], seg[1], w, h, |c, r| traced[r * w + c] = true);
        }
    }
    let radius = (width_px - 1) / 2;
    let mask = if radius == 0 {
        traced.iter().map(|&t| u8::from(t)).collect()
    } else {
        dilate(&traced, w, h, radius)
    };
    RasterGrid::from_classes(w, h, georef.clone(), mask)
}

/// Separable square (Chebyshev) dilation.
fn dilate(src: &[bool], w: usize, h: usize, radius: usize) -> Vec<u8> {
    let mut horiz = vec![false; w * h];
    for r in 0..h {
        let row = &src[r * w..(r + 1) * w];
        for c in 0..w {
            let lo = c.saturating_sub(radius);
            let hi = (c + radius).min(w - 1);
            horiz[r * w + c] = row[lo..=hi].iter().any(|&v| v);
        }
    }
    let mut out = vec![0u8; w * h];
    for c in 0..w {
        for r in 0..h {
            let lo = r.saturating_sub(radius);
            let hi = (r + radius).min(h - 1);
            out[r * w + c] = u8::from((lo..=hi).any(|rr| horiz[rr * w + c]));
        }
    }
    out
}

pub fn overlay_roads(
    prelabels: &RasterGrid,
    road_mask: &RasterGrid,
    mode: RoadOverlay,
) -> Result<RasterGrid> {
    check_aligned(prelabels, road_mask, "overlay_roads")?;
    let mask = road_mask.classes()?;
    if let Some(&bad) = mask.iter().find(|&&m| m > 1) {
        return Err(Error::Format(format!(
            "road mask value {bad} is not binary"
        )));
    }
    let out = prelabels
        .classes()?
        .iter()
        .zip(mask)
        .map(|(&p, &m)| match (m, mode) {
            (1, RoadOverlay::Override) => TR,
            (1, RoadOverlay::FillOnly) if p == UNLABELED => TR,
            _ => p,
        })
        .collect();
    prelabels.with_classes(out)
}

#[derive(Debug, Clone)]
pub struct FusionOptions {
    pub road_width_px: usize,
    pub overlay: RoadOverlay,
}

impl Default for FusionOptions {
    fn default() -> Self {
        Self {
            road_width_px: 1,
            overlay: RoadOverlay::Override,
        }
    }
}

/// Full label-construction chain: harmonize, intersect, rasterize, overlay.
pub fn fuse(
    products: [&RasterGrid; 3],
    tables: [&HarmonizationTable; 3],
    lines: &VectorLines,
    options: &FusionOptions,
) -> Result<(RasterGrid, FusionReport)> {
    let a = harmonize(products[0], tables[0])?;
    let b = harmonize(products[1], tables[1])?;
    let c = harmonize(products[2], tables[2])?;
    let pre = intersect_products(&a, &b, &c)?;
    let mask = rasterize_roads(lines, &pre, options.road_width_px)?;
    let out = overlay_roads(&pre, &mask, options.overlay)?;
    let report = report_for(&out, &mask)?;
    Ok((out, report))
}

fn report_for(labels: &RasterGrid, mask: &RasterGrid) -> Result<FusionReport> {
    let mut hist = [0usize; 256];
    for &v in labels.classes()? {
        hist[usize::from(v)] += 1;
    }
    let per_class: BTreeMap<u8, usize> = hist
        .iter()
        .enumerate()
        .skip(1)
        .filter(|(_, &n)| n > 0)
        .map(|(id, &n)| (id as u8, n))
        .collect();
    let total = labels.pixel_count();
    Ok(FusionReport {
        total_pixels: total,
        stable_pixels: total - hist[0],
        unlabeled_pixels: hist[0],
        road_pixels: mask.classes()?.iter().filter(|&&m| m == 1).count(),
        per_class,
    })
}
