//! PNG rendering of class maps and the matching legend.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use l2h_core::{ClassScheme, Error, RasterGrid, Result, UNLABELED};
use serde::Serialize;

#[derive(Serialize)]
struct LegendEntry<'a> {
    id: u8,
    code: &'a str,
    name: &'a str,
    color: [u8; 3],
    pixels: usize,
}

/// Path of the legend written next to `png`: `map.png` -> `map.legend.json`.
pub fn legend_path(png: &Path) -> PathBuf {
    png.with_extension("legend.json")
}

/// Writes an 8-bit RGB PNG (unlabeled pixels black) and a legend JSON
/// listing every class with its color and pixel count.
pub fn write_class_png(
    grid: &RasterGrid,
    scheme: &ClassScheme,
    png_path: &Path,
) -> Result<PathBuf> {
    let classes = grid.classes()?;
    let mut rgb = Vec::with_capacity(classes.len() * 3);
    let mut counts = [0usize; 256];
    for &c in classes {
        counts[usize::from(c)] += 1;
        let color = if c == UNLABELED {
            [0, 0, 0]
        } else {
            scheme.color(c)
        };
        rgb.extend_from_slice(&color);
    }
    let file = BufWriter::new(File::create(png_path)?);
    let mut encoder = png::Encoder::new(file, grid.width() as u32, grid.height() as u32);
    encoder.set_color(png::ColorType::Rgb);
    encoder.set_depth(png::BitDepth::Eight);
    let png_err = |e: png::EncodingError| Error::Format(format!("png encoding: {e}"));
    let mut writer = encoder.write_header().map_err(png_err)?;
    writer.write_image_data(&rgb).map_err(png_err)?;
    writer.finish().map_err(png_err)?;

    let legend: Vec<LegendEntry> = scheme
        .classes()
        .iter()
        .map(|c| LegendEntry {
            id: c.id,
            code: &c.code,
            name: &c.name,
            color: c.color,
            pixels: counts[usize::from(c.id)],
        })
        .collect();
    let path = legend_path(png_path);
    let text = serde_json::to_string_pretty(&legend).expect("legend serializes");
    std::fs::write(&path, text + "\n")?;
    Ok(path)
}
