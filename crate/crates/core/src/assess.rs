//! Point-sample accuracy assessment and regional area statistics.
//!
//! Confusion matrices are oriented with map classes on rows and reference
//! classes on columns. Accordingly `pa` is diagonal over the row (map-side)
//! total and `ua` is diagonal over the column (reference-side) total, the
//! layout in which national validation tables are commonly printed.

use std::collections::BTreeMap;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::RasterGrid;
use crate::scheme::{ClassScheme, UNLABELED};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SampleStrategy {
    #[default]
    Uniform,
    StratifiedByClass,
}

impl std::str::FromStr for SampleStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(Self::Uniform),
            "stratified" | "stratified-by-class" => Ok(Self::StratifiedByClass),
            other => Err(Error::Config(format!(
                "unknown sampling strategy {other:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SamplePoint {
    pub x: f64,
    pub y: f64,
    pub reference_class: Option<u8>,
    pub map_class: Option<u8>,
}

fn class_histogram(map: &RasterGrid) -> Result<[usize; 256]> {
    let mut hist = [0usize; 256];
    for &v in map.classes()? {
        hist[usize::from(v)] += 1;
    }
    Ok(hist)
}

/// Largest-remainder apportionment of `n` over `weights`; ties in the
/// remainder go to the earlier entry.
pub fn largest_remainder(n: usize, weights: &[usize]) -> Vec<usize> {
    let total: usize = weights.iter().sum();
    if total == 0 {
        return vec![0; weights.len()];
    }
    let mut alloc: Vec<usize> = weights.iter().map(|&w| n * w / total).collect();
    let mut rest: Vec<(usize, usize)> = weights
        .iter()
        .enumerate()
        .map(|(i, &w)| (i, n * w % total))
        .collect();
    rest.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    let short = n - alloc.iter().sum::<usize>();
    for &(i, _) in rest.iter().take(short) {
        alloc[i] += 1;
    }
    alloc
}

/// Draws sample locations (pixel centers, without replacement) from `map`.
/// Stratified sampling allocates points proportionally to class areas.
pub fn sample_points(
    map: &RasterGrid,
    n: usize,
    seed: u64,
    strategy: SampleStrategy,
) -> Result<Vec<SamplePoint>> {
    if n == 0 {
        return Err(Error::Config("sample count must be at least 1".into()));
    }
    let data = map.classes()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked: Vec<usize> = match strategy {
        SampleStrategy::Uniform => {
            if n > data.len() {
                return Err(Error::Config(format!(
                    "{n} samples requested from {} pixels",
                    data.len()
                )));
            }
            index::sample(&mut rng, data.len(), n).into_vec()
        }
        SampleStrategy::StratifiedByClass => {
            let hist = class_histogram(map)?;
            let ids: Vec<u8> = (1..=255u8)
                .filter(|&id| hist[usize::from(id)] > 0)
                .collect();
            let weights: Vec<usize> = ids.iter().map(|&id| hist[usize::from(id)]).collect();
            let alloc = largest_remainder(n, &weights);
            let mut out = Vec::with_capacity(n);
            for ((&id, &count), &k) in ids.iter().zip(&weights).zip(&alloc) {
                if k > count {
                    return Err(Error::Config(format!(
                        "{k} samples requested from {count} pixels of class {id}"
                    )));
                }
                let members: Vec<usize> = data
                    .iter()
                    .enumerate()
                    .filter(|(_, &v)| v == id)
                    .map(|(p, _)| p)
                    .collect();
                out.extend(
                    index::sample(&mut rng, members.len(), k)
                        .into_iter()
                        .map(|i| members[i]),
                );
            }
            if out.len() < n {
                return Err(Error::Config(
                    "map has no labeled pixels to stratify".into(),
                ));
            }
            out
        }
    };
    picked.sort_unstable();
    let w = map.width();
    Ok(picked
        .into_iter()
        .map(|p| {
            let (x, y) = map.georef().pixel_center(p % w, p / w);
            SamplePoint {
                x,
                y,
                reference_class: None,
                map_class: None,
            }
        })
        .collect())
}

fn lookup(grid: &RasterGrid, x: f64, y: f64) -> Result<u8> {
    let (c, r) = grid.georef().world_to_pixel(x, y);
    if c < 0.0 || r < 0.0 || c >= grid.width() as f64 || r >= grid.height() as f64 {
        return Err(Error::Shape(format!(
            "point ({x}, {y}) outside grid extent"
        )));
    }
    Ok(grid.classes()?[r as usize * grid.width() + c as usize])
}

/// Fills `map_class` from `map` and `reference_class` from `reference`.
pub fn label_points(
    points: &mut [SamplePoint],
    map: &RasterGrid,
    reference: &RasterGrid,
) -> Result<()> {
    for p in points {
        p.map_class = Some(lookup(map, p.x, p.y)?);
        p.reference_class = Some(lookup(reference, p.x, p.y)?);
    }
    Ok(())
}

/// `L x L` counts; `counts[map - 1][reference - 1]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    scheme: ClassScheme,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn zeros(scheme: &ClassScheme) -> Self {
        Self {
            scheme: scheme.clone(),
            counts: vec![0; scheme.len() * scheme.len()],
        }
    }

    pub fn from_counts(scheme: &ClassScheme, rows: &[Vec<u64>]) -> Result<Self> {
        let l = scheme.len();
        if rows.len() != l || rows.iter().any(|r| r.len() != l) {
            return Err(Error::Shape(format!("confusion matrix must be {l}x{l}")));
        }
        Ok(Self {
            scheme: scheme.clone(),
            counts: rows.concat(),
        })
    }

    pub fn scheme(&self) -> &ClassScheme {
        &self.scheme
    }

    pub fn size(&self) -> usize {
        self.scheme.len()
    }

    pub fn get(&self, map: usize, reference: usize) -> u64 {
        self.counts[map * self.size() + reference]
    }

    pub fn add(&mut self, map: u8, reference: u8) -> Result<()> {
        for id in [map, reference] {
            if !self.scheme.contains(id) {
                return Err(Error::UnknownClass(u32::from(id)));
            }
        }
        let l = self.size();
        self.counts[(usize::from(map) - 1) * l + usize::from(reference) - 1] += 1;
        Ok(())
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn row_totals(&self) -> Vec<u64> {
        self.counts
            .chunks(self.size())
            .map(|r| r.iter().sum())
            .collect()
    }

    pub fn col_totals(&self) -> Vec<u64> {
        let l = self.size();
        (0..l)
            .map(|c| (0..l).map(|r| self.get(r, c)).sum())
            .collect()
    }

    pub fn rows(&self) -> Vec<Vec<u64>> {
        self.counts
            .chunks(self.size())
            .map(<[u64]>::to_vec)
            .collect()
    }

    /// Element-wise sum; both matrices must share a scheme.
    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if self.scheme != other.scheme {
            return Err(Error::Shape(
                "confusion matrices use different schemes".into(),
            ));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        Ok(())
    }

    /// CSV with a header of class codes; the first column names the map class.
    pub fn to_csv(&self) -> String {
        let codes: Vec<&str> = self
            .scheme
            .classes()
            .iter()
            .map(|c| c.code.as_str())
            .collect();
        let mut out = format!("map\\reference,{}\n", codes.join(","));
        for (code, row) in codes.iter().zip(self.rows()) {
            let cells: Vec<String> = row.iter().map(u64::to_string).collect();
            out.push_str(&format!("{code},{}\n", cells.join(",")));
        }
        out
    }

    /// Parses [`ConfusionMatrix::to_csv`] output. Header and row names are
    /// class codes of `scheme` and may appear in any order; missing classes
    /// are zero. Cells may be quoted.
    pub fn from_csv(text: &str, scheme: &ClassScheme) -> Result<Self> {
        let mut lines = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'));
        let header = lines
            .next()
            .ok_or_else(|| Error::Format("empty confusion CSV".into()))?;
        let resolve = |name: &str| -> Result<usize> {
            let name = name.trim().trim_matches('"');
            scheme
                .by_code(name)
                .map(|c| usize::from(c.id) - 1)
                .ok_or_else(|| Error::Format(format!("unknown class {name:?} in confusion CSV")))
        };
        let cols: Vec<usize> = header
            .split(',')
            .skip(1)
            .map(resolve)
            .collect::<Result<_>>()?;
        let mut cm = Self::zeros(scheme);
        let l = scheme.len();
        for line in lines {
            let mut cells = line.split(',');
            let row = resolve(cells.next().unwrap_or(""))?;
            let values: Vec<&str> = cells.collect();
            if values.len() != cols.len() {
                return Err(Error::Format(format!(
                    "row {line:?} has {} cells, header has {}",
                    values.len(),
                    cols.len()
                )));
            }
            for (&col, v) in cols.iter().zip(values) {
                let v = v.trim().trim_matches('"');
                cm.counts[row * l + col] = v
                    .parse()
                    .map_err(|_| Error::Format(format!("bad count {v:?} in confusion CSV")))?;
            }
        }
        Ok(cm)
    }
}

/// Tallies labeled points into a matrix.
pub fn confusion(points: &[SamplePoint], scheme: &ClassScheme) -> Result<ConfusionMatrix> {
    let mut cm = ConfusionMatrix::zeros(scheme);
    for p in points {
        let (Some(m), Some(r)) = (p.map_class, p.reference_class) else {
            return Err(Error::State(format!(
                "point ({}, {}) is missing a class",
                p.x, p.y
            )));
        };
        cm.add(m, r)?;
    }
    Ok(cm)
}

/// Confusion over every pixel where both grids carry a class.
pub fn confusion_full(
    map: &RasterGrid,
    reference: &RasterGrid,
    scheme: &ClassScheme,
) -> Result<ConfusionMatrix> {
    if map.width() != reference.width() || map.height() != reference.height() {
        return Err(Error::Alignment("map and reference differ in size".into()));
    }
    let mut cm = ConfusionMatrix::zeros(scheme);
    for (&m, &r) in map.classes()?.iter().zip(reference.classes()?) {
        if m != UNLABELED && r != UNLABELED {
            cm.add(m, r)?;
        }
    }
    Ok(cm)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassAccuracy {
    pub id: u8,
    pub code: String,
    /// Diagonal over the map-class row total.
    pub pa: Option<f64>,
    /// Diagonal over the reference-class column total.
    pub ua: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metrics {
    pub total: u64,
    pub oa: f64,
    pub kappa: f64,
    pub classes: Vec<ClassAccuracy>,
}

impl Metrics {
    pub fn class(&self, code: &str) -> Option<&ClassAccuracy> {
        self.classes.iter().find(|c| c.code == code)
    }
}

pub fn metrics(cm: &ConfusionMatrix) -> Result<Metrics> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::EmptyMatrix);
    }
    let n = total as f64;
    let rows = cm.row_totals();
    let cols = cm.col_totals();
    let l = cm.size();
    let trace: u64 = (0..l).map(|k| cm.get(k, k)).sum();
    let po = trace as f64 / n;
    let pe: f64 = rows
        .iter()
        .zip(&cols)
        .map(|(&r, &c)| r as f64 * c as f64)
        .sum::<f64>()
        / (n * n);
    let kappa = if pe < 1.0 {
        (po - pe) / (1.0 - pe)
    } else {
        1.0
    };
    let ratio = |num: u64, den: u64| {
        if den == 0 {
            None
        } else {
            Some(num as f64 / den as f64)
        }
    };
    let classes = cm
        .scheme()
        .classes()
        .iter()
        .enumerate()
        .map(|(k, c)| ClassAccuracy {
            id: c.id,
            code: c.code.clone(),
            pa: ratio(cm.get(k, k), rows[k]),
            ua: ratio(cm.get(k, k), cols[k]),
        })
        .collect();
    Ok(Metrics {
        total,
        oa: po,
        kappa,
        classes,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassArea {
    pub class: u8,
    pub map_fraction: f64,
    pub ref_fraction: Option<f64>,
    pub delta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AreaStats {
    pub region: u32,
    pub reference_available: bool,
    pub classes: Vec<ClassArea>,
}

/// Per-region reference class shares: `region -> class -> share`. Shares are
/// normalized per region, so areas work as well as fractions.
pub type ReferenceTable = BTreeMap<u32, BTreeMap<u8, f64>>;

/// Parses `region,class,fraction` CSV (header optional). `class` is a numeric
/// id or a class code.
pub fn parse_reference_csv(text: &str, scheme: &ClassScheme) -> Result<ReferenceTable> {
    let mut table = ReferenceTable::new();
    for (n, line) in text.lines().map(str::trim).enumerate() {
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let cells: Vec<&str> = line
            .split(',')
            .map(|c| c.trim().trim_matches('"'))
            .collect();
        if cells.len() != 3 {
            return Err(Error::Format(format!(
                "reference line {}: expected 3 columns",
                n + 1
            )));
        }
        let Ok(region) = cells[0].parse::<u32>() else {
            if n == 0 {
                continue; // header
            }
            return Err(Error::Format(format!(
                "reference line {}: bad region {:?}",
                n + 1,
                cells[0]
            )));
        };
        let class = match cells[1].parse::<u8>() {
            Ok(id) => id,
            Err(_) => scheme.by_code(cells[1]).map(|c| c.id).ok_or_else(|| {
                Error::Format(format!(
                    "reference line {}: unknown class {:?}",
                    n + 1,
                    cells[1]
                ))
            })?,
        };
        let share: f64 = cells[2]
            .parse()
            .ok()
            .filter(|v: &f64| v.is_finite() && *v >= 0.0)
            .ok_or_else(|| {
                Error::Format(format!(
                    "reference line {}: bad share {:?}",
                    n + 1,
                    cells[2]
                ))
            })?;
        *table.entry(region).or_default().entry(class).or_insert(0.0) += share;
    }
    Ok(table)
}

/// Signed area misestimation (map share minus reference share) per class and
/// region. Region id 0 marks pixels outside every region.
pub fn area_misestimation(
    map: &RasterGrid,
    regions: &RasterGrid,
    reference: &ReferenceTable,
) -> Result<Vec<AreaStats>> {
    if map.width() != regions.width() || map.height() != regions.height() {
        return Err(Error::Alignment(
            "map and region grid differ in size".into(),
        ));
    }
    let mut hist: BTreeMap<u32, BTreeMap<u8, u64>> = BTreeMap::new();
    for (&m, &r) in map.classes()?.iter().zip(regions.classes()?) {
        if r == 0 || m == UNLABELED {
            continue;
        }
        *hist.entry(u32::from(r)).or_default().entry(m).or_insert(0) += 1;
    }
    let mut out = Vec::with_capacity(hist.len());
    for (region, counts) in hist {
        let total: u64 = counts.values().sum();
        let refs = reference.get(&region);
        let ref_total: f64 = refs.map(|r| r.values().sum()).unwrap_or(0.0);
        let reference_available = refs.is_some() && ref_total > 0.0;
        let mut ids: Vec<u8> = counts.keys().copied().collect();
        if let Some(r) = refs {
            ids.extend(r.keys().copied());
        }
        ids.sort_unstable();
        ids.dedup();
        let classes = ids
            .into_iter()
            .map(|class| {
                let map_fraction = counts.get(&class).copied().unwrap_or(0) as f64 / total as f64;
                let ref_fraction = if reference_available {
                    Some(refs.and_then(|r| r.get(&class)).copied().unwrap_or(0.0) / ref_total)
                } else {
                    None
                };
                ClassArea {
                    class,
                    map_fraction,
                    ref_fraction,
                    delta: ref_fraction.map(|r| map_fraction - r),
                }
            })
            .collect();
        out.push(AreaStats {
            region,
            reference_available,
            classes,
        });
    }
    Ok(out)
}

/// Long-format CSV: `region,class,map_fraction,ref_fraction,delta`.
pub fn area_stats_csv(stats: &[AreaStats], scheme: &ClassScheme) -> String {
    let mut out = String::from("region,class,map_fraction,ref_fraction,delta\n");
    let opt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_else(|| "NA".into());
    for s in stats {
        for c in &s.classes {
            let code = scheme
                .get(c.class)
                .map(|i| i.code.clone())
                .unwrap_or_else(|| c.class.to_string());
            out.push_str(&format!(
                "{},{},{:.6},{},{}\n",
                s.region,
                code,
                c.map_fraction,
                opt(c.ref_fraction),
                opt(c.delta)
            ));
        }
    }
    out
}
