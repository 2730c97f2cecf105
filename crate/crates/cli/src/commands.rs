//! Subcommand implementations. Each one reads its inputs, calls into
//! `l2h_core`, writes artifacts and a `run_manifest.json`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use l2h_core::assess::{
    area_misestimation, area_stats_csv, confusion, confusion_full, label_points, metrics,
    parse_reference_csv, sample_points, ConfusionMatrix, Metrics, SampleStrategy,
};
use l2h_core::config::KeyValues;
use l2h_core::fusion::{
    fuse as fuse_labels, harmonize, FusionOptions, FusionReport, HarmonizationTable,
};
use l2h_core::grid::{read_grid, write_grid};
use l2h_core::mosaic::{predict_tiled, Blend, MosaicPolicy};
use l2h_core::net::{read_checkpoint, receptive_field, write_checkpoint, NetParams};
use l2h_core::synth::{generate, Scene, SceneSpec};
use l2h_core::train::{make_pairs, train_observed, StepLog, TrainConfig};
use l2h_core::vector::VectorLines;
use l2h_core::{ClassScheme, Error, RPBackboneConfig, RasterGrid, Result};
use log::info;
use serde::Serialize;

use crate::manifest::Recorder;
use crate::render::write_class_png;
use crate::{
    AreasArgs, FuseArgs, InspectArgs, MatrixArgs, MetricsArgs, Overrides, PipelineArgs,
    PredictArgs, SynthArgs, TrainArgs,
};

const SCENE_KEYS: &[&str] = &[
    "width",
    "height",
    "classes",
    "fractions",
    "class_means",
    "road_mean",
    "noise_sigma",
    "feature_size",
    "label_noise",
    "roads",
    "road_width_px",
    "easy",
    "scene_seed",
];
const TRAIN_KEYS: &[&str] = &[
    "patch_size",
    "batch_size",
    "epochs",
    "learning_rate",
    "momentum",
    "seed",
    "warmup_epochs",
    "patches_per_epoch",
    "tau",
    "gamma",
    "variance_form",
    "va_class",
];
const FUSE_KEYS: &[&str] = &["road_width", "overlay"];
const MOSAIC_KEYS: &[&str] = &["tile", "overlap", "blend"];
const ASSESS_KEYS: &[&str] = &["samples", "strategy", "sample_seed"];
/// Pipeline inputs; when `image` is set the scene is read instead of generated.
const INPUT_KEYS: &[&str] = &[
    "image",
    "truth",
    "product_a",
    "product_b",
    "product_c",
    "table_a",
    "table_b",
    "table_c",
    "road_lines",
];

const ALL_KEYS: &[&[&str]] = &[
    SCENE_KEYS,
    TRAIN_KEYS,
    FUSE_KEYS,
    MOSAIC_KEYS,
    ASSESS_KEYS,
    INPUT_KEYS,
];

/// Reads the optional config file and applies `--set` overrides. Keys no
/// command knows are an error; known keys outside `used` are dropped so one
/// file can drive every stage.
fn load_config(o: &Overrides, used: &[&[&str]]) -> Result<KeyValues> {
    let mut kv = match &o.config {
        Some(p) => {
            require_exists(p)?;
            KeyValues::read(p)?
        }
        None => KeyValues::default(),
    };
    for item in &o.set {
        let (k, v) = item
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got {item:?}")))?;
        kv.set(k.trim(), v.trim());
    }
    let in_groups = |groups: &[&[&str]], k: &str| groups.iter().any(|g| g.contains(&k));
    let unknown: Vec<&String> = kv
        .entries()
        .keys()
        .filter(|k| !in_groups(ALL_KEYS, k))
        .collect();
    if !unknown.is_empty() {
        return Err(Error::Config(format!("unknown config keys: {unknown:?}")));
    }
    let mut kept = KeyValues::default();
    for (k, v) in kv.entries() {
        if in_groups(used, k) {
            kept.set(k.clone(), v.clone());
        }
    }
    Ok(kept)
}

fn require_exists(p: &Path) -> Result<()> {
    if p.exists() {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "input {} does not exist",
            p.display()
        )))
    }
}

fn parent_dir(p: &Path) -> PathBuf {
    match p.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

fn create_dir(d: &Path) -> Result<()> {
    std::fs::create_dir_all(d)?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("value serializes");
    std::fs::write(path, text + "\n")?;
    Ok(())
}

fn read_input(rec: &mut Recorder, path: &Path) -> Result<RasterGrid> {
    require_exists(path)?;
    rec.input(path);
    read_grid(path)
}

fn put_grid(rec: &mut Recorder, path: &Path, grid: &RasterGrid) -> Result<()> {
    write_grid(path, grid)?;
    rec.output(path);
    Ok(())
}

fn put_text(rec: &mut Recorder, path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text)?;
    rec.output(path);
    Ok(())
}

fn put_json<T: Serialize>(rec: &mut Recorder, path: &Path, value: &T) -> Result<()> {
    write_json(path, value)?;
    rec.output(path);
    Ok(())
}

fn put_png(rec: &mut Recorder, path: &Path, grid: &RasterGrid, scheme: &ClassScheme) -> Result<()> {
    let legend = write_class_png(grid, scheme, path)?;
    rec.output(path);
    rec.output(&legend);
    Ok(())
}

const PRODUCT_NAMES: [&str; 3] = ["a", "b", "c"];

fn write_scene(rec: &mut Recorder, dir: &Path, scene: &Scene, png: bool) -> Result<()> {
    create_dir(dir)?;
    put_grid(rec, &dir.join("image.lcr"), &scene.image)?;
    put_grid(rec, &dir.join("truth.lcr"), &scene.truth)?;
    for (i, name) in PRODUCT_NAMES.iter().enumerate() {
        put_grid(
            rec,
            &dir.join(format!("product_{name}.lcr")),
            &scene.products[i],
        )?;
        put_text(
            rec,
            &dir.join(format!("table_{name}.txt")),
            &scene.tables[i].to_text(),
        )?;
    }
    put_text(rec, &dir.join("roads.txt"), &scene.roads.to_text())?;
    if png {
        let scheme = ClassScheme::default_scheme();
        put_png(rec, &dir.join("truth.png"), &scene.truth, &scheme)?;
        for (i, name) in PRODUCT_NAMES.iter().enumerate() {
            let unified = harmonize(&scene.products[i], &scene.tables[i])?;
            put_png(
                rec,
                &dir.join(format!("product_{name}.png")),
                &unified,
                &scheme,
            )?;
        }
    }
    Ok(())
}

pub fn synth(a: SynthArgs, threads: usize) -> Result<()> {
    let mut o = a.cfg.clone();
    if a.spec.is_some() {
        o.config = a.spec.clone();
    }
    let mut kv = load_config(&o, &[SCENE_KEYS])?;
    if let Some(s) = a.seed {
        kv.set("scene_seed", s.to_string());
    }
    let spec = SceneSpec::from_kv(&kv)?;
    let mut rec = Recorder::new("synth", &kv, threads);
    rec.seed("scene_seed", spec.seed);
    if let Some(p) = &o.config {
        rec.input(p);
    }
    info!(
        "generating {}x{} scene, seed {}",
        spec.width, spec.height, spec.seed
    );
    let scene = generate(&spec)?;
    write_scene(&mut rec, &a.out, &scene, a.png)?;
    rec.finish(&a.out)?;
    Ok(())
}

fn fusion_options(kv: &KeyValues) -> Result<FusionOptions> {
    let d = FusionOptions::default();
    let opts = FusionOptions {
        road_width_px: kv.get_or("road_width", d.road_width_px)?,
        overlay: kv.get_or("overlay", d.overlay)?,
    };
    if opts.road_width_px == 0 {
        return Err(Error::Config("road width must be at least 1 pixel".into()));
    }
    Ok(opts)
}

fn read_table(rec: &mut Recorder, path: &Path) -> Result<HarmonizationTable> {
    require_exists(path)?;
    rec.input(path);
    HarmonizationTable::read(path)
}

fn read_roads(rec: &mut Recorder, path: Option<&Path>) -> Result<VectorLines> {
    match path {
        Some(p) => {
            require_exists(p)?;
            rec.input(p);
            VectorLines::read(p)
        }
        None => Ok(VectorLines::empty()),
    }
}

pub fn fuse(a: FuseArgs, threads: usize) -> Result<()> {
    let mut kv = KeyValues::default();
    kv.set("road_width", a.road_width.to_string());
    kv.set("overlay", a.overlay.clone());
    let opts = fusion_options(&kv)?;
    let mut rec = Recorder::new("fuse", &kv, threads);
    let products = [
        read_input(&mut rec, &a.a)?,
        read_input(&mut rec, &a.b)?,
        read_input(&mut rec, &a.c)?,
    ];
    let tables = [
        read_table(&mut rec, &a.table_a)?,
        read_table(&mut rec, &a.table_b)?,
        read_table(&mut rec, &a.table_c)?,
    ];
    let roads = read_roads(&mut rec, a.roads.as_deref())?;
    let (labels, report) = fuse_labels(
        [&products[0], &products[1], &products[2]],
        [&tables[0], &tables[1], &tables[2]],
        &roads,
        &opts,
    )?;
    info!(
        "fused {} pixels: {} stable, {} unlabeled, {} road",
        report.total_pixels, report.stable_pixels, report.unlabeled_pixels, report.road_pixels
    );
    let dir = parent_dir(&a.out);
    create_dir(&dir)?;
    put_grid(&mut rec, &a.out, &labels)?;
    if let Some(r) = &a.report {
        put_json(&mut rec, r, &report)?;
    }
    rec.finish(&dir)?;
    Ok(())
}

fn step_logger(total_steps: usize) -> impl FnMut(&StepLog) {
    move |s: &StepLog| {
        info!(
            "epoch {} step {}/{}: ce {:.4} dva {:.4} ca {:.3}",
            s.epoch + 1,
            s.step + 1,
            total_steps,
            s.ce,
            s.dva,
            s.ca_fraction
        );
    }
}

fn steps_per_epoch(pairs: usize, cfg: &TrainConfig) -> usize {
    let take = if cfg.patches_per_epoch == 0 {
        pairs
    } else {
        cfg.patches_per_epoch.min(pairs)
    };
    take.div_ceil(cfg.batch_size)
}

fn jsonl(log: &[StepLog]) -> String {
    log.iter()
        .map(|s| serde_json::to_string(s).expect("step serializes") + "\n")
        .collect()
}

/// Trains and writes `model.l2hp` and `train_log.jsonl` into `dir`. A
/// diverged run leaves its last finite parameters in `model.last_good.l2hp`.
fn run_training(
    rec: &mut Recorder,
    dir: &Path,
    image: &RasterGrid,
    labels: &RasterGrid,
    cfg: &TrainConfig,
    classes: usize,
) -> Result<(NetParams<f32>, Vec<StepLog>, usize)> {
    let pairs = make_pairs(image, labels, cfg)?;
    let backbone = RPBackboneConfig::new(image.bands(), classes);
    let total = steps_per_epoch(pairs.len(), cfg) * cfg.epochs;
    info!(
        "training on {} pairs of {}px, {} epochs, {} steps",
        pairs.len(),
        cfg.patch_size,
        cfg.epochs,
        total
    );
    let params = l2h_core::net::init_params::<f32>(&backbone, cfg.seed)?;
    let outcome = match train_observed(&pairs, params, cfg, step_logger(total)) {
        Ok(o) => o,
        Err(Error::Divergence {
            step,
            reason,
            last_good,
        }) => {
            if let Some(p) = &last_good {
                let path = dir.join("model.last_good.l2hp");
                write_checkpoint(&path, p.as_ref())?;
                log::warn!(
                    "training diverged; last finite parameters saved to {}",
                    path.display()
                );
            }
            return Err(Error::Divergence {
                step,
                reason,
                last_good,
            });
        }
        Err(e) => return Err(e),
    };
    let model = dir.join("model.l2hp");
    write_checkpoint(&model, &outcome.params)?;
    rec.output(&model);
    put_text(rec, &dir.join("train_log.jsonl"), &jsonl(&outcome.log))?;
    Ok((outcome.params, outcome.log, pairs.len()))
}

pub fn train(a: TrainArgs, threads: usize) -> Result<()> {
    let mut kv = load_config(&a.cfg, &[TRAIN_KEYS])?;
    if let Some(s) = a.seed {
        kv.set("seed", s.to_string());
    }
    if let Some(e) = a.epochs {
        kv.set("epochs", e.to_string());
    }
    let cfg = TrainConfig::from_kv(&kv)?;
    let mut rec = Recorder::new("train", &kv, threads);
    rec.seed("seed", cfg.seed);
    if let Some(p) = &a.cfg.config {
        rec.input(p);
    }
    let image = read_input(&mut rec, &a.image)?;
    let labels = read_input(&mut rec, &a.labels)?;
    let scheme = ClassScheme::default_scheme();
    labels.validate_classes(&scheme)?;
    create_dir(&a.out)?;
    run_training(&mut rec, &a.out, &image, &labels, &cfg, scheme.len())?;
    rec.finish(&a.out)?;
    Ok(())
}

fn whole_image_policy(params: &NetParams<f32>, image: &RasterGrid) -> MosaicPolicy {
    let overlap = 2 * receptive_field(&params.config);
    MosaicPolicy {
        tile: image.width().max(image.height()).max(overlap + 1),
        overlap,
        blend: Blend::CropCenter,
    }
}

pub fn predict(a: PredictArgs, threads: usize) -> Result<()> {
    let mut kv = KeyValues::default();
    if let Some(t) = a.tile {
        kv.set("tile", t.to_string());
    }
    if let Some(o) = a.overlap {
        kv.set("overlap", o.to_string());
    }
    if let Some(b) = &a.blend {
        kv.set("blend", b.clone());
    }
    if a.full {
        kv.set("full", "true");
    }
    let mut rec = Recorder::new("predict", &kv, threads);
    require_exists(&a.model)?;
    rec.input(&a.model);
    let params = read_checkpoint(&a.model)?;
    let image = read_input(&mut rec, &a.image)?;
    let policy = if a.full {
        whole_image_policy(&params, &image)
    } else {
        MosaicPolicy::from_kv(&kv, MosaicPolicy::for_params(&params))?
    };
    info!(
        "predicting {}x{} with tile {} overlap {}",
        image.width(),
        image.height(),
        policy.tile,
        policy.overlap
    );
    let (map, cp) = predict_tiled(&params, &image, &policy)?;
    let dir = parent_dir(&a.out);
    create_dir(&dir)?;
    put_grid(&mut rec, &a.out, &map)?;
    if let Some(p) = &a.cp {
        put_grid(&mut rec, p, &cp)?;
    }
    if let Some(p) = &a.png {
        put_png(&mut rec, p, &map, &scheme_for(&params)?)?;
    }
    rec.finish(&dir)?;
    Ok(())
}

/// The default scheme, checked against the network's class count.
fn scheme_for(params: &NetParams<f32>) -> Result<ClassScheme> {
    let scheme = ClassScheme::default_scheme();
    if params.config.num_classes != scheme.len() {
        return Err(Error::Config(format!(
            "model predicts {} classes, the class scheme has {}",
            params.config.num_classes,
            scheme.len()
        )));
    }
    Ok(scheme)
}

fn build_matrix(
    map: &RasterGrid,
    reference: &RasterGrid,
    samples: usize,
    strategy: SampleStrategy,
    seed: u64,
    scheme: &ClassScheme,
) -> Result<ConfusionMatrix> {
    if samples == 0 {
        return confusion_full(map, reference, scheme);
    }
    let mut points = sample_points(map, samples, seed, strategy)?;
    label_points(&mut points, map, reference)?;
    confusion(&points, scheme)
}

pub fn assess_matrix(a: MatrixArgs, threads: usize) -> Result<()> {
    let strategy: SampleStrategy = a.strategy.parse()?;
    let mut kv = KeyValues::default();
    kv.set("samples", a.samples.to_string());
    kv.set("strategy", a.strategy.clone());
    let mut rec = Recorder::new("assess matrix", &kv, threads);
    rec.seed("sample_seed", a.seed);
    let map = read_input(&mut rec, &a.map)?;
    let reference = read_input(&mut rec, &a.reference)?;
    let scheme = ClassScheme::default_scheme();
    let cm = build_matrix(&map, &reference, a.samples, strategy, a.seed, &scheme)?;
    let dir = parent_dir(&a.out);
    create_dir(&dir)?;
    put_text(&mut rec, &a.out, &cm.to_csv())?;
    rec.finish(&dir)?;
    Ok(())
}

fn pct(v: Option<f64>) -> String {
    v.map(|x| format!("{:.2}", 100.0 * x))
        .unwrap_or_else(|| "NA".into())
}

fn print_metrics(m: &Metrics) {
    println!("OA     {:.2}%", 100.0 * m.oa);
    println!("Kappa  {:.4}", m.kappa);
    println!("class  PA(%)   UA(%)");
    for c in &m.classes {
        println!("{:<6} {:<7} {}", c.code, pct(c.pa), pct(c.ua));
    }
}

pub fn assess_metrics(a: MetricsArgs) -> Result<()> {
    require_exists(&a.matrix)?;
    let scheme = ClassScheme::default_scheme();
    let cm = ConfusionMatrix::from_csv(&std::fs::read_to_string(&a.matrix)?, &scheme)?;
    let m = metrics(&cm)?;
    print_metrics(&m);
    if let Some(out) = &a.out {
        let mut rec = Recorder::new(
            "assess metrics",
            &KeyValues::default(),
            rayon::current_num_threads(),
        );
        rec.input(&a.matrix);
        let dir = parent_dir(out);
        create_dir(&dir)?;
        put_json(&mut rec, out, &m)?;
        rec.finish(&dir)?;
    }
    Ok(())
}

pub fn assess_areas(a: AreasArgs, threads: usize) -> Result<()> {
    let mut rec = Recorder::new("assess areas", &KeyValues::default(), threads);
    let map = read_input(&mut rec, &a.map)?;
    let regions = read_input(&mut rec, &a.regions)?;
    require_exists(&a.reference)?;
    rec.input(&a.reference);
    let scheme = ClassScheme::default_scheme();
    let table = parse_reference_csv(&std::fs::read_to_string(&a.reference)?, &scheme)?;
    let stats = area_misestimation(&map, &regions, &table)?;
    let dir = parent_dir(&a.out);
    create_dir(&dir)?;
    put_text(&mut rec, &a.out, &area_stats_csv(&stats, &scheme))?;
    rec.finish(&dir)?;
    Ok(())
}

/// Pipeline results that depend only on config and inputs.
#[derive(Serialize)]
struct Summary {
    scene: &'static str,
    fusion: FusionReport,
    train_pairs: usize,
    epochs: usize,
    steps: usize,
    epoch_ce: Vec<f64>,
    ce_decreased: bool,
    oa: Option<f64>,
    kappa: Option<f64>,
}

fn epoch_means(log: &[StepLog], epochs: usize) -> Vec<f64> {
    (0..epochs)
        .map(|e| {
            let v: Vec<f64> = log.iter().filter(|s| s.epoch == e).map(|s| s.ce).collect();
            v.iter().sum::<f64>() / v.len().max(1) as f64
        })
        .collect()
}

/// Config-relative path resolution for pipeline inputs.
fn input_path(kv: &KeyValues, key: &str, base: &Path) -> Option<PathBuf> {
    kv.get_str(key).map(|v| {
        let p = PathBuf::from(v);
        if p.is_absolute() {
            p
        } else {
            base.join(p)
        }
    })
}

struct Inputs {
    image: RasterGrid,
    truth: Option<RasterGrid>,
    products: [RasterGrid; 3],
    tables: [HarmonizationTable; 3],
    roads: VectorLines,
}

fn pipeline_inputs(
    rec: &mut Recorder,
    kv: &KeyValues,
    base: &Path,
    out: &Path,
) -> Result<(Inputs, &'static str)> {
    if kv.get_str("image").is_none() {
        if let Some(k) = INPUT_KEYS.iter().find(|k| kv.get_str(k).is_some()) {
            return Err(Error::Config(format!("{k} given without image")));
        }
        let spec = SceneSpec::from_kv(kv)?;
        rec.seed("scene_seed", spec.seed);
        info!(
            "generating {}x{} scene, seed {}",
            spec.width, spec.height, spec.seed
        );
        let scene = generate(&spec)?;
        write_scene(rec, &out.join("scene"), &scene, false)?;
        let Scene {
            image,
            truth,
            products,
            tables,
            roads,
        } = scene;
        return Ok((
            Inputs {
                image,
                truth: Some(truth),
                products,
                tables,
                roads,
            },
            "synthetic",
        ));
    }
    if let Some(k) = SCENE_KEYS.iter().find(|k| kv.get_str(k).is_some()) {
        return Err(Error::Config(format!(
            "scene key {k} conflicts with a given image"
        )));
    }
    let need = |key: &str| {
        let p = input_path(kv, key, base)
            .ok_or_else(|| Error::Config(format!("{key} is required with image")))?;
        require_exists(&p)?;
        Ok::<PathBuf, Error>(p)
    };
    let paths: Vec<PathBuf> = [
        "image",
        "product_a",
        "product_b",
        "product_c",
        "table_a",
        "table_b",
        "table_c",
    ]
    .iter()
    .map(|k| need(k))
    .collect::<Result<_>>()?;
    let truth_path = input_path(kv, "truth", base);
    let roads_path = input_path(kv, "road_lines", base);
    for p in truth_path.iter().chain(&roads_path) {
        require_exists(p)?;
    }
    let image = read_input(rec, &paths[0])?;
    let products = [
        read_input(rec, &paths[1])?,
        read_input(rec, &paths[2])?,
        read_input(rec, &paths[3])?,
    ];
    let tables = [
        read_table(rec, &paths[4])?,
        read_table(rec, &paths[5])?,
        read_table(rec, &paths[6])?,
    ];
    let truth = match &truth_path {
        Some(p) => Some(read_input(rec, p)?),
        None => None,
    };
    let roads = read_roads(rec, roads_path.as_deref())?;
    Ok((
        Inputs {
            image,
            truth,
            products,
            tables,
            roads,
        },
        "files",
    ))
}

pub fn pipeline(a: PipelineArgs, threads: usize) -> Result<()> {
    let mut kv = load_config(&a.cfg, ALL_KEYS)?;
    if let Some(s) = a.seed {
        kv.set("seed", s.to_string());
    }
    if let Some(e) = a.epochs {
        kv.set("epochs", e.to_string());
    }
    let cfg = TrainConfig::from_kv(&kv)?;
    let opts = fusion_options(&kv)?;
    let samples: usize = kv.get_or("samples", 0)?;
    let strategy: SampleStrategy = kv.get_or("strategy", SampleStrategy::StratifiedByClass)?;
    let sample_seed: u64 = kv.get_or("sample_seed", cfg.seed)?;
    MosaicPolicy::from_kv(
        &kv,
        MosaicPolicy {
            tile: 512,
            overlap: 0,
            blend: Blend::CropCenter,
        },
    )?;
    let base = a
        .cfg
        .config
        .as_deref()
        .map(parent_dir)
        .unwrap_or_else(|| PathBuf::from("."));

    create_dir(&a.out)?;
    let mut rec = Recorder::new("pipeline", &kv, threads);
    rec.seed("seed", cfg.seed);
    if let Some(p) = &a.cfg.config {
        rec.input(p);
    }
    let mut timings = BTreeMap::new();
    let clock = Instant::now();
    let (inputs, scene_kind) = pipeline_inputs(&mut rec, &kv, &base, &a.out)?;
    timings.insert("inputs", clock.elapsed().as_secs_f64());

    let clock = Instant::now();
    let p = &inputs.products;
    let t = &inputs.tables;
    let (labels, report) = fuse_labels(
        [&p[0], &p[1], &p[2]],
        [&t[0], &t[1], &t[2]],
        &inputs.roads,
        &opts,
    )?;
    put_grid(&mut rec, &a.out.join("labels.lcr"), &labels)?;
    put_json(&mut rec, &a.out.join("fusion_report.json"), &report)?;
    timings.insert("fuse", clock.elapsed().as_secs_f64());
    info!(
        "fused labels: {} stable, {} unlabeled of {}",
        report.stable_pixels, report.unlabeled_pixels, report.total_pixels
    );

    let clock = Instant::now();
    let scheme = ClassScheme::default_scheme();
    let (params, log, train_pairs) =
        run_training(&mut rec, &a.out, &inputs.image, &labels, &cfg, scheme.len())?;
    timings.insert("train", clock.elapsed().as_secs_f64());

    let clock = Instant::now();
    let policy = MosaicPolicy::from_kv(&kv, MosaicPolicy::for_params(&params))?;
    let (map, cp) = predict_tiled(&params, &inputs.image, &policy)?;
    put_grid(&mut rec, &a.out.join("map.lcr"), &map)?;
    put_grid(&mut rec, &a.out.join("cp.lcr"), &cp)?;
    put_png(&mut rec, &a.out.join("map.png"), &map, &scheme)?;
    timings.insert("predict", clock.elapsed().as_secs_f64());

    let clock = Instant::now();
    let assessed = match &inputs.truth {
        Some(truth) => {
            let cm = build_matrix(&map, truth, samples, strategy, sample_seed, &scheme)?;
            put_text(&mut rec, &a.out.join("confusion.csv"), &cm.to_csv())?;
            let m = metrics(&cm)?;
            put_json(&mut rec, &a.out.join("metrics.json"), &m)?;
            Some(m)
        }
        None => {
            log::warn!("no truth grid given; skipping accuracy assessment");
            None
        }
    };
    timings.insert("assess", clock.elapsed().as_secs_f64());

    let epoch_ce = epoch_means(&log, cfg.epochs);
    let summary = Summary {
        scene: scene_kind,
        fusion: report,
        train_pairs,
        epochs: cfg.epochs,
        steps: log.len(),
        ce_decreased: epoch_ce.len() >= 2 && epoch_ce[epoch_ce.len() - 1] < epoch_ce[0],
        epoch_ce,
        oa: assessed.as_ref().map(|m| m.oa),
        kappa: assessed.as_ref().map(|m| m.kappa),
    };
    put_json(&mut rec, &a.out.join("summary.json"), &summary)?;
    if let Some(m) = &assessed {
        print_metrics(m);
    }
    rec.timings(timings);
    rec.finish(&a.out)?;
    Ok(())
}

#[derive(Serialize)]
struct Inspect {
    blocks: usize,
    receptive_field: usize,
    param_count: usize,
    layers: Vec<Layer>,
}

#[derive(Serialize)]
struct Layer {
    name: String,
    input: usize,
    output: usize,
    kernel: usize,
    params: usize,
}

pub fn net_inspect(a: InspectArgs) -> Result<()> {
    let config = match &a.model {
        Some(p) => {
            require_exists(p)?;
            read_checkpoint(p)?.config
        }
        None => RPBackboneConfig::new(a.input_channels, a.classes),
    };
    config.validate()?;
    let branches = config.branch_kernels.len();
    let layers: Vec<Layer> = config
        .layer_shapes()
        .into_iter()
        .enumerate()
        .map(|(i, (input, output, kernel))| Layer {
            name: if i / branches < config.blocks {
                format!("block{}.branch{}", i / branches + 1, i % branches + 1)
            } else {
                "head".into()
            },
            input,
            output,
            kernel,
            params: output * input * kernel * kernel + output,
        })
        .collect();
    let report = Inspect {
        blocks: config.blocks,
        receptive_field: receptive_field(&config),
        param_count: config.param_count(),
        layers,
    };
    if a.json {
        println!(
            "{}",
            serde_json::to_string_pretty(&report).expect("inspect serializes")
        );
        return Ok(());
    }
    println!(
        "{:<16} {:>6} {:>6} {:>6} {:>9}",
        "layer", "in", "out", "kernel", "params"
    );
    for l in &report.layers {
        println!(
            "{:<16} {:>6} {:>6} {:>6} {:>9}",
            l.name, l.input, l.output, l.kernel, l.params
        );
    }
    println!("receptive field radius {}", report.receptive_field);
    println!("parameters {}", report.param_count);
    Ok(())
}
