//! Georeferenced rasters and the `LCR` container format.
//!
//! An `LCR` file is little-endian throughout:
//!
//! | bytes | field |
//! |-------|-------|
//! | 4 | magic `LCR1` |
//! | 4 | `u32` width |
//! | 4 | `u32` height |
//! | 2 | `u16` bands |
//! | 1 | `u8` dtype (0 = u8 class ids, 1 = f32 bands) |
//! | 8 | `f64` nodata |
//! | 32 | `f64` origin_x, origin_y, pixel_size_x, pixel_size_y |
//! | 2 + n | `u16` crs tag length, then UTF-8 bytes |
//! | rest | row-major, band-sequential payload |

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::scheme::ClassScheme;

const MAGIC: &[u8; 4] = b"LCR1";

/// Affine north-up georeference. Pixel `(col, row)` covers
/// `[origin_x + col*px, origin_x + (col+1)*px)` horizontally.
#[derive(Debug, Clone, PartialEq)]
pub struct GeoRef {
    pub origin_x: f64,
    pub origin_y: f64,
    pub pixel_size_x: f64,
    pub pixel_size_y: f64,
    pub crs_tag: String,
}

impl GeoRef {
    pub fn new(origin_x: f64, origin_y: f64, pixel_size_x: f64, pixel_size_y: f64) -> Self {
        Self {
            origin_x,
            origin_y,
            pixel_size_x,
            pixel_size_y,
            crs_tag: String::new(),
        }
    }

    /// North-up grid with square pixels whose top-left corner sits at
    /// `(0, height * pixel_size)`.
    pub fn north_up(height: usize, pixel_size: f64) -> Self {
        Self::new(0.0, height as f64 * pixel_size, pixel_size, -pixel_size)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.pixel_size_x > 0.0) || !self.pixel_size_x.is_finite() {
            return Err(Error::Format(format!(
                "pixel_size_x must be positive, got {}",
                self.pixel_size_x
            )));
        }
        if self.pixel_size_y == 0.0 || !self.pixel_size_y.is_finite() {
            return Err(Error::Format("pixel_size_y must be non-zero".into()));
        }
        if self.crs_tag.len() > usize::from(u16::MAX) {
            return Err(Error::Format("crs tag longer than 65535 bytes".into()));
        }
        Ok(())
    }

    /// Map coordinates of the center of pixel `(col, row)`.
    pub fn pixel_center(&self, col: usize, row: usize) -> (f64, f64) {
        (
            self.origin_x + (col as f64 + 0.5) * self.pixel_size_x,
            self.origin_y + (row as f64 + 0.5) * self.pixel_size_y,
        )
    }

    /// Continuous pixel coordinates; a pixel center maps to `(col + 0.5, row + 0.5)`.
    pub fn world_to_pixel(&self, x: f64, y: f64) -> (f64, f64) {
        (
            (x - self.origin_x) / self.pixel_size_x,
            (y - self.origin_y) / self.pixel_size_y,
        )
    }

    /// Georeference of a sub-window starting at `(col, row)`.
    pub fn offset(&self, col: usize, row: usize) -> Self {
        Self {
            origin_x: self.origin_x + col as f64 * self.pixel_size_x,
            origin_y: self.origin_y + row as f64 * self.pixel_size_y,
            ..self.clone()
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            pixel_size_x: self.pixel_size_x * factor,
            pixel_size_y: self.pixel_size_y * factor,
            ..self.clone()
        }
    }
}

impl Default for GeoRef {
    fn default() -> Self {
        Self::new(0.0, 0.0, 1.0, -1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DType {
    Class,
    Band,
}

impl DType {
    fn code(self) -> u8 {
        match self {
            DType::Class => 0,
            DType::Band => 1,
        }
    }

    fn byte_size(self) -> usize {
        match self {
            DType::Class => 1,
            DType::Band => 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum GridData {
    Class(Vec<u8>),
    Band(Vec<f32>),
}

/// Rectangular pixel window, `x`/`y` being the top-left column/row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PixelRect {
    pub x: usize,
    pub y: usize,
    pub width: usize,
    pub height: usize,
}

impl PixelRect {
    pub fn contains(&self, col: usize, row: usize) -> bool {
        col >= self.x && col < self.x + self.width && row >= self.y && row < self.y + self.height
    }
}

/// A 2-D raster of class ids or continuous bands.
#[derive(Debug, Clone)]
pub struct RasterGrid {
    width: usize,
    height: usize,
    bands: usize,
    nodata: f64,
    georef: GeoRef,
    data: GridData,
}

/// Field-wise equality; nodata compares by bit pattern so NaN equals NaN.
impl PartialEq for RasterGrid {
    fn eq(&self, other: &Self) -> bool {
        self.width == other.width
            && self.height == other.height
            && self.bands == other.bands
            && self.nodata.to_bits() == other.nodata.to_bits()
            && self.georef == other.georef
            && self.data == other.data
    }
}

impl RasterGrid {
    pub fn new(
        width: usize,
        height: usize,
        bands: usize,
        nodata: f64,
        georef: GeoRef,
        data: GridData,
    ) -> Result<Self> {
        georef.validate()?;
        if width == 0 || height == 0 || bands == 0 {
            return Err(Error::Shape(format!(
                "degenerate grid {width}x{height}x{bands}"
            )));
        }
        if width > u32::MAX as usize || height > u32::MAX as usize || bands > u16::MAX as usize {
            return Err(Error::Shape("grid dimensions exceed format limits".into()));
        }
        let len = match &data {
            GridData::Class(v) => v.len(),
            GridData::Band(v) => v.len(),
        };
        if len != width * height * bands {
            return Err(Error::Shape(format!(
                "data length {len} != {width}x{height}x{bands}"
            )));
        }
        Ok(Self {
            width,
            height,
            bands,
            nodata,
            georef,
            data,
        })
    }

    /// Single-band class grid with nodata 0 ([`crate::scheme::UNLABELED`]).
    pub fn from_classes(
        width: usize,
        height: usize,
        georef: GeoRef,
        data: Vec<u8>,
    ) -> Result<Self> {
        Self::new(width, height, 1, 0.0, georef, GridData::Class(data))
    }

    pub fn filled_classes(width: usize, height: usize, georef: GeoRef, value: u8) -> Result<Self> {
        Self::from_classes(width, height, georef, vec![value; width * height])
    }

    pub fn from_bands(
        width: usize,
        height: usize,
        bands: usize,
        georef: GeoRef,
        data: Vec<f32>,
    ) -> Result<Self> {
        Self::new(width, height, bands, f64::NAN, georef, GridData::Band(data))
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bands(&self) -> usize {
        self.bands
    }

    pub fn nodata(&self) -> f64 {
        self.nodata
    }

    pub fn georef(&self) -> &GeoRef {
        &self.georef
    }

    pub fn dtype(&self) -> DType {
        match self.data {
            GridData::Class(_) => DType::Class,
            GridData::Band(_) => DType::Band,
        }
    }

    pub fn data(&self) -> &GridData {
        &self.data
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    /// Class payload, or a `FormatError` for band grids.
    pub fn classes(&self) -> Result<&[u8]> {
        match &self.data {
            GridData::Class(v) => Ok(v),
            GridData::Band(_) => Err(Error::Format("expected a u8 class grid".into())),
        }
    }

    pub fn band_values(&self) -> Result<&[f32]> {
        match &self.data {
            GridData::Band(v) => Ok(v),
            GridData::Class(_) => Err(Error::Format("expected an f32 band grid".into())),
        }
    }

    pub fn into_classes(self) -> Result<Vec<u8>> {
        match self.data {
            GridData::Class(v) => Ok(v),
            GridData::Band(_) => Err(Error::Format("expected a u8 class grid".into())),
        }
    }

    /// Replaces the payload, keeping shape and georeference.
    pub fn with_classes(&self, data: Vec<u8>) -> Result<Self> {
        Self::new(
            self.width,
            self.height,
            1,
            0.0,
            self.georef.clone(),
            GridData::Class(data),
        )
    }

    /// Nodata as a class id, when it is representable as one.
    pub fn class_nodata(&self) -> Option<u8> {
        let n = self.nodata;
        if n.is_finite() && (0.0..=255.0).contains(&n) && n.fract() == 0.0 {
            Some(n as u8)
        } else {
            None
        }
    }

    /// Checks every non-nodata value of a class grid against `scheme`.
    pub fn validate_classes(&self, scheme: &ClassScheme) -> Result<()> {
        let nodata = self.class_nodata();
        for &v in self.classes()? {
            if Some(v) != nodata && !scheme.contains(v) {
                return Err(Error::UnknownClass(u32::from(v)));
            }
        }
        Ok(())
    }

    /// True when shape and georeference agree.
    pub fn aligned_with(&self, other: &RasterGrid) -> bool {
        self.width == other.width && self.height == other.height && self.georef == other.georef
    }

    /// Copies out a window. The window must lie inside the grid.
    pub fn window(&self, rect: PixelRect) -> Result<RasterGrid> {
        if rect.width == 0
            || rect.height == 0
            || rect.x + rect.width > self.width
            || rect.y + rect.height > self.height
        {
            return Err(Error::Shape(format!(
                "window {rect:?} outside {}x{} grid",
                self.width, self.height
            )));
        }
        let plane = self.width * self.height;
        let n = rect.width * rect.height * self.bands;
        let data = match &self.data {
            GridData::Class(v) => {
                GridData::Class(copy_window(v, plane, self.width, self.bands, rect, n))
            }
            GridData::Band(v) => {
                GridData::Band(copy_window(v, plane, self.width, self.bands, rect, n))
            }
        };
        RasterGrid::new(
            rect.width,
            rect.height,
            self.bands,
            self.nodata,
            self.georef.offset(rect.x, rect.y),
            data,
        )
    }
}

fn copy_window<T: Copy>(
    src: &[T],
    plane: usize,
    width: usize,
    bands: usize,
    rect: PixelRect,
    n: usize,
) -> Vec<T> {
    let mut out = Vec::with_capacity(n);
    for b in 0..bands {
        for r in rect.y..rect.y + rect.height {
            let start = b * plane + r * width + rect.x;
            out.extend_from_slice(&src[start..start + rect.width]);
        }
    }
    out
}

/// Serializes a grid to `LCR` bytes.
pub fn encode_grid(grid: &RasterGrid) -> Vec<u8> {
    let crs = grid.georef.crs_tag.as_bytes();
    let payload = grid.width * grid.height * grid.bands * grid.dtype().byte_size();
    let mut out = Vec::with_capacity(61 + crs.len() + payload);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(grid.width as u32).to_le_bytes());
    out.extend_from_slice(&(grid.height as u32).to_le_bytes());
    out.extend_from_slice(&(grid.bands as u16).to_le_bytes());
    out.push(grid.dtype().code());
    out.extend_from_slice(&grid.nodata.to_le_bytes());
    for v in [
        grid.georef.origin_x,
        grid.georef.origin_y,
        grid.georef.pixel_size_x,
        grid.georef.pixel_size_y,
    ] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&(crs.len() as u16).to_le_bytes());
    out.extend_from_slice(crs);
    match &grid.data {
        GridData::Class(v) => out.extend_from_slice(v),
        GridData::Band(v) => {
            for x in v {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Format(format!(
                "truncated file while reading {what}"
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn array<const N: usize>(&mut self, what: &str) -> Result<[u8; N]> {
        let mut a = [0u8; N];
        a.copy_from_slice(self.take(N, what)?);
        Ok(a)
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.array(what)?))
    }
}

/// Parses `LCR` bytes.
pub fn decode_grid(bytes: &[u8]) -> Result<RasterGrid> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(4, "magic")? != MAGIC {
        return Err(Error::Format("missing LCR1 magic".into()));
    }
    let width = u32::from_le_bytes(r.array("width")?) as usize;
    let height = u32::from_le_bytes(r.array("height")?) as usize;
    let bands = u16::from_le_bytes(r.array("bands")?) as usize;
    let dtype = match r.take(1, "dtype")?[0] {
        0 => DType::Class,
        1 => DType::Band,
        other => return Err(Error::Format(format!("unknown dtype code {other}"))),
    };
    let nodata = r.f64("nodata")?;
    let origin_x = r.f64("georef")?;
    let origin_y = r.f64("georef")?;
    let pixel_size_x = r.f64("georef")?;
    let pixel_size_y = r.f64("georef")?;
    let crs_len = u16::from_le_bytes(r.array("crs length")?) as usize;
    let crs_tag = std::str::from_utf8(r.take(crs_len, "crs tag")?)
        .map_err(|_| Error::Format("crs tag is not UTF-8".into()))?
        .to_string();
    let georef = GeoRef {
        origin_x,
        origin_y,
        pixel_size_x,
        pixel_size_y,
        crs_tag,
    };
    let count = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(bands))
        .ok_or_else(|| Error::Format("payload size overflows".into()))?;
    let expected = count
        .checked_mul(dtype.byte_size())
        .ok_or_else(|| Error::Format("payload size overflows".into()))?;
    let remaining = bytes.len() - r.pos;
    if remaining != expected {
        return Err(Error::Format(format!(
            "payload has {remaining} bytes, header implies {expected}"
        )));
    }
    let payload = r.take(expected, "payload")?;
    let data = match dtype {
        DType::Class => GridData::Class(payload.to_vec()),
        DType::Band => GridData::Band(
            payload
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect(),
        ),
    };
    RasterGrid::new(width, height, bands, nodata, georef, data).map_err(|e| match e {
        Error::Shape(m) => Error::Format(m),
        other => other,
    })
}

pub fn write_grid(path: impl AsRef<Path>, grid: &RasterGrid) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(&encode_grid(grid))?;
    Ok(())
}

pub fn read_grid(path: impl AsRef<Path>) -> Result<RasterGrid> {
    decode_grid(&fs::read(path)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Resample {
    Up,
    Down,
}

/// Nearest-neighbour resampling by an integer factor. `Up` replicates each
/// pixel into a `factor`x`factor` block; `Down` keeps the top-left sample of
/// each block.
pub fn resample_nearest(
    src: &RasterGrid,
    factor: usize,
    direction: Resample,
) -> Result<RasterGrid> {
    if factor == 0 {
        return Err(Error::Config("resample factor must be positive".into()));
    }
    match direction {
        Resample::Up => {
            let (w, h) = (src.width * factor, src.height * factor);
            let data = match &src.data {
                GridData::Class(v) => {
                    GridData::Class(upsample(v, src.width, src.height, src.bands, factor))
                }
                GridData::Band(v) => {
                    GridData::Band(upsample(v, src.width, src.height, src.bands, factor))
                }
            };
            RasterGrid::new(
                w,
                h,
                src.bands,
                src.nodata,
                src.georef.scaled(1.0 / factor as f64),
                data,
            )
        }
        Resample::Down => {
            if !src.width.is_multiple_of(factor) || !src.height.is_multiple_of(factor) {
                return Err(Error::Shape(format!(
                    "{}x{} grid not divisible by {factor}",
                    src.width, src.height
                )));
            }
            let (w, h) = (src.width / factor, src.height / factor);
            let data = match &src.data {
                GridData::Class(v) => {
                    GridData::Class(downsample(v, src.width, src.height, src.bands, factor))
                }
                GridData::Band(v) => {
                    GridData::Band(downsample(v, src.width, src.height, src.bands, factor))
                }
            };
            RasterGrid::new(
                w,
                h,
                src.bands,
                src.nodata,
                src.georef.scaled(factor as f64),
                data,
            )
        }
    }
}

fn upsample<T: Copy>(v: &[T], w: usize, h: usize, bands: usize, f: usize) -> Vec<T> {
    let (ow, oh) = (w * f, h * f);
    let mut out = Vec::with_capacity(ow * oh * bands);
    for b in 0..bands {
        for r in 0..oh {
            let row = &v[b * w * h + (r / f) * w..][..w];
            for &x in row {
                for _ in 0..f {
                    out.push(x);
                }
            }
        }
    }
    out
}

fn downsample<T: Copy>(v: &[T], w: usize, h: usize, bands: usize, f: usize) -> Vec<T> {
    let (ow, oh) = (w / f, h / f);
    let mut out = Vec::with_capacity(ow * oh * bands);
    for b in 0..bands {
        for r in 0..oh {
            let row = &v[b * w * h + r * f * w..][..w];
            out.extend(row.iter().step_by(f).copied());
        }
    }
    out
}

/// Window start offsets along one axis of length `n`.
fn axis_starts(n: usize, tile: usize, step: usize) -> Vec<usize> {
    if n <= tile {
        return vec![0];
    }
    let mut starts = vec![0];
    loop {
        let next = starts[starts.len() - 1] + step;
        if next + tile >= n {
            starts.push(n - tile);
            break;
        }
        starts.push(next);
    }
    starts.dedup();
    starts
}

/// Row-major tile windows over a `width`x`height` grid. Interior windows step
/// by `tile - overlap`; the last window on each axis is clamped flush with the
/// grid edge. A tile larger than an axis is clamped to that axis.
pub fn tile_windows(
    width: usize,
    height: usize,
    tile: usize,
    overlap: usize,
) -> Result<Vec<PixelRect>> {
    if tile == 0 {
        return Err(Error::Config("tile size must be positive".into()));
    }
    if overlap >= tile {
        return Err(Error::Config(format!(
            "overlap {overlap} must be smaller than tile {tile}"
        )));
    }
    let step = tile - overlap;
    let xs = axis_starts(width, tile, step);
    let ys = axis_starts(height, tile, step);
    let (tw, th) = (tile.min(width), tile.min(height));
    Ok(ys
        .iter()
        .flat_map(|&y| {
            xs.iter().map(move |&x| PixelRect {
                x,
                y,
                width: tw,
                height: th,
            })
        })
        .collect())
}

/// Lazily cut tiles of a grid.
pub struct Tiles<'a> {
    grid: &'a RasterGrid,
    windows: std::vec::IntoIter<PixelRect>,
}

impl Iterator for Tiles<'_> {
    type Item = (PixelRect, RasterGrid);

    fn next(&mut self) -> Option<Self::Item> {
        let rect = self.windows.next()?;
        let sub = self
            .grid
            .window(rect)
            .expect("tile windows lie inside the grid");
        Some((rect, sub))
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        self.windows.size_hint()
    }
}

pub fn tile_iter(grid: &RasterGrid, tile: usize, overlap: usize) -> Result<Tiles<'_>> {
    let windows = tile_windows(grid.width, grid.height, tile, overlap)?;
    Ok(Tiles {
        grid,
        windows: windows.into_iter(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn class_grid(w: usize, h: usize, data: Vec<u8>) -> RasterGrid {
        RasterGrid::from_classes(w, h, GeoRef::north_up(h, 10.0), data).unwrap()
    }

    #[test]
    fn row_major_layout() {
        let g = class_grid(3, 2, vec![1, 2, 3, 4, 5, 6]);
        let back = decode_grid(&encode_grid(&g)).unwrap();
        assert_eq!(back.classes().unwrap(), &[1, 2, 3, 4, 5, 6]);
        assert_eq!(back, g);
    }

    #[test]
    fn header_bytes_are_fixed() {
        let mut g = class_grid(3, 2, vec![1, 2, 3, 4, 5, 6]);
        g.georef.crs_tag = "EPSG:32650".into();
        let bytes = encode_grid(&g);
        assert_eq!(&bytes[0..4], b"LCR1");
        assert_eq!(&bytes[4..8], &3u32.to_le_bytes());
        assert_eq!(&bytes[8..12], &2u32.to_le_bytes());
        assert_eq!(&bytes[12..14], &1u16.to_le_bytes());
        assert_eq!(bytes[14], 0);
        assert_eq!(&bytes[15..23], &0f64.to_le_bytes());
        assert_eq!(&bytes[55..57], &10u16.to_le_bytes());
        assert_eq!(&bytes[57..67], b"EPSG:32650");
        assert_eq!(&bytes[67..], &[1, 2, 3, 4, 5, 6]);
    }

    #[test]
    fn truncated_payload_is_format_error() {
        let g = class_grid(3, 2, vec![1, 2, 3, 4, 5, 6]);
        let bytes = encode_grid(&g);
        for cut in [3, 20, bytes.len() - 1] {
            assert!(
                matches!(decode_grid(&bytes[..cut]), Err(Error::Format(_))),
                "cut {cut}"
            );
        }
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(matches!(decode_grid(&extra), Err(Error::Format(_))));
    }

    #[test]
    fn bad_magic_and_dtype() {
        let g = class_grid(1, 1, vec![1]);
        let mut bytes = encode_grid(&g);
        bytes[3] = b'2';
        assert!(matches!(decode_grid(&bytes), Err(Error::Format(_))));
        let mut bytes = encode_grid(&g);
        bytes[14] = 7;
        assert!(matches!(decode_grid(&bytes), Err(Error::Format(_))));
    }

    #[test]
    fn upsample_replicates() {
        let g = class_grid(1, 1, vec![7]);
        let up = resample_nearest(&g, 10, Resample::Up).unwrap();
        assert_eq!((up.width(), up.height()), (10, 10));
        assert!(up.classes().unwrap().iter().all(|&v| v == 7));
        assert_eq!(up.georef().pixel_size_x, 1.0);
        assert_eq!(up.georef().pixel_size_y, -1.0);
    }

    #[test]
    fn downsample_takes_top_left() {
        let g = class_grid(2, 2, vec![1, 2, 3, 4]);
        let down = resample_nearest(&g, 2, Resample::Down).unwrap();
        assert_eq!(down.classes().unwrap(), &[1]);
        assert!(matches!(
            resample_nearest(&class_grid(3, 2, vec![0; 6]), 2, Resample::Down),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn tile_counts() {
        let one = tile_windows(256, 256, 256, 0).unwrap();
        assert_eq!(
            one,
            vec![PixelRect {
                x: 0,
                y: 0,
                width: 256,
                height: 256
            }]
        );
        let w = tile_windows(500, 500, 256, 32).unwrap();
        assert_eq!(w.len(), 9);
        assert_eq!(w[1].x, 224);
        assert_eq!(w[2].x, 244);
        assert!(matches!(tile_windows(10, 10, 4, 4), Err(Error::Config(_))));
    }

    #[test]
    fn window_shifts_georef() {
        let g = class_grid(4, 4, (0..16).collect());
        let sub = g
            .window(PixelRect {
                x: 1,
                y: 2,
                width: 2,
                height: 2,
            })
            .unwrap();
        assert_eq!(sub.classes().unwrap(), &[9, 10, 13, 14]);
        assert_eq!(sub.georef().origin_x, 10.0);
        assert_eq!(sub.georef().origin_y, 40.0 - 20.0);
    }

    #[test]
    fn pixel_center_round_trip() {
        let g = GeoRef::new(100.0, 500.0, 0.5, -0.5);
        for (c, r) in [(0, 0), (3, 7), (100, 2)] {
            let (x, y) = g.pixel_center(c, r);
            let (pc, pr) = g.world_to_pixel(x, y);
            assert_eq!((pc - 0.5, pr - 0.5), (c as f64, r as f64));
        }
    }
}
