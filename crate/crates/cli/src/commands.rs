//! Pipeline commands, callable without the argument parser.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use plotsieve::cascade::{Cascade, CascadeSession, PlotKind, ScanPartition};
use plotsieve::gan::{
    load_recognizer, save_checkpoint, train, Checkpoint, DiscriminatorConfig, GeneratorConfig, ProxyOnly,
    RecognizerKind, TrainingConfig, TrainingReport,
};
use plotsieve::raster::{
    raster_box_options, raster_scatter, raster_wafer, read_image, rotate_augment, write_image, BoxRasterSpec,
    PlotImage, ScatterRasterSpec, WaferMode, WaferRasterSpec, DEFAULT_SIDE,
};
use plotsieve::yielddata::{ingest, lot_aggregate, synth_product, ProductProfile, DEFAULT_M_MIX};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

/// Writes a product analog corpus. `wafers` overrides the profile's count.
pub fn synth(product: &str, seed: u64, wafers: Option<usize>, out: &Path) -> Result<()> {
    let mut profile = ProductProfile::by_name(product)?;
    if let Some(n) = wafers {
        profile.wafers = n;
    }
    let corpus = synth_product(&profile, DEFAULT_M_MIX, seed)?;
    corpus.write_dir(out)?;
    Ok(())
}

fn load_data(dir: &Path) -> Result<plotsieve::yielddata::ProductionData> {
    let (data, _) = ingest(&dir.join("dies.csv"), &dir.join("etests.csv"), &dir.join("tools.csv"))?;
    Ok(data)
}

fn write_images(images: &BTreeMap<String, PlotImage>, out: &Path) -> Result<usize> {
    fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    for (id, img) in images {
        write_image(img, out.join(format!("{id}.tern")))?;
    }
    Ok(images.len())
}

/// One TERN file per wafer of the corpus in `data`.
pub fn raster_wafers(data: &Path, out: &Path, mode: WaferMode, bin: Option<u16>) -> Result<usize> {
    let data = load_data(data)?;
    let spec = WaferRasterSpec {
        mode,
        bin,
        side: DEFAULT_SIDE,
    };
    let mut images = BTreeMap::new();
    for w in &data.wafers {
        images.insert(w.wafer_id.clone(), raster_wafer(w, &spec)?);
    }
    write_images(&images, out)
}

/// One correlation plot per e-test for `bin`: lot e-test mean against lot
/// fail count. An empty `etests` selects every e-test in the corpus.
pub fn raster_correlations(data: &Path, out: &Path, bin: u16, etests: &[String]) -> Result<usize> {
    let data = load_data(data)?;
    let lots = data.lots();
    let known: Vec<u16> = data.bins().into_iter().collect();
    let names: Vec<String> = if etests.is_empty() {
        let set: std::collections::BTreeSet<&String> = data.etests.iter().map(|e| &e.test_name).collect();
        set.into_iter().cloned().collect()
    } else {
        etests.to_vec()
    };
    let mut images = BTreeMap::new();
    for name in &names {
        let points = lot_aggregate(&lots, bin, name, &known)?;
        images.insert(format!("bin{bin}-{name}"), raster_scatter(&points, &ScatterRasterSpec::default())?);
    }
    write_images(&images, out)
}

/// One image per option of a two-column `option,value` CSV.
pub fn raster_boxes(values: &Path, out: &Path, y_range: (f64, f64), seed: u64) -> Result<usize> {
    let text = fs::read_to_string(values).map_err(|e| CliError::io(values, e))?;
    let mut options: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| plotsieve::Error::Parse {
            path: values.display().to_string(),
            line: i + 1,
            message,
        };
        let (opt, v) = line
            .split_once(',')
            .ok_or_else(|| parse_err("expected `option,value`".into()))?;
        let v: f64 = v.trim().parse().map_err(|e| parse_err(format!("value: {e}")))?;
        options.entry(opt.trim().to_string()).or_default().push(v);
    }
    let spec = BoxRasterSpec {
        y_range,
        jitter_seed: seed,
        side: DEFAULT_SIDE,
    };
    write_images(&raster_box_options(&options, &spec)?, out)
}

/// Training setup read by `train` and by service jobs. Missing sections
/// fall back to the reduced networks.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSpec {
    pub kind: RecognizerKind,
    pub discriminator: DiscriminatorConfig,
    pub generator: GeneratorConfig,
    pub training: TrainingConfig,
    /// Rotations per training and validation image (1 = none).
    pub rotations: usize,
}

impl Default for TrainSpec {
    fn default() -> Self {
        Self {
            kind: RecognizerKind::Interesting,
            discriminator: DiscriminatorConfig::reduced(),
            generator: GeneratorConfig::reduced(),
            training: TrainingConfig::reduced(),
            rotations: 1,
        }
    }
}

impl TrainSpec {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::json(path, e))
    }

    pub fn augment(&self, images: &[PlotImage]) -> Vec<PlotImage> {
        if self.rotations <= 1 {
            return images.to_vec();
        }
        images.iter().flat_map(|im| rotate_augment(im, self.rotations)).collect()
    }
}

/// Reads a list file: one TERN path per line, relative to the list.
pub fn read_list(path: &Path) -> Result<Vec<PlotImage>> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| Ok(read_image(base.join(l))?))
        .collect()
}

/// Trains one recognizer, writes its checkpoint to `out` and the report
/// next to it as `<out>.report.json`.
pub fn train_command(class: &str, train_list: &Path, val_list: &Path, spec: &TrainSpec, out: &Path) -> Result<TrainingReport> {
    let train_set = spec.augment(&read_list(train_list)?);
    let val_set = spec.augment(&read_list(val_list)?);
    let outcome = train(
        &train_set,
        &val_set,
        class,
        spec.kind,
        &spec.discriminator,
        &spec.generator,
        &spec.training,
        &mut ProxyOnly,
    )?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    save_checkpoint(&Checkpoint::Recognizer(outcome.model), out)?;
    let report_path = report_path(out);
    let json = serde_json::to_string_pretty(&outcome.report).expect("report serializes");
    fs::write(&report_path, json).map_err(|e| CliError::io(&report_path, e))?;
    Ok(outcome.report)
}

pub fn report_path(checkpoint: &Path) -> PathBuf {
    let mut name = checkpoint.file_name().unwrap_or_default().to_os_string();
    name.push(".report.json");
    checkpoint.with_file_name(name)
}

/// Loads a cascade file: a JSON array of checkpoint paths, resolved
/// against the file's directory and then its `models/` subdirectory (so a
/// session's `cascade.json` works as is).
pub fn load_cascade(path: &Path) -> Result<Cascade> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let files: Vec<PathBuf> = serde_json::from_str(&text).map_err(|e| CliError::json(path, e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut models = Vec::new();
    for f in files {
        let direct = base.join(&f);
        let resolved = if direct.exists() { direct } else { base.join("models").join(&f) };
        models.push(load_recognizer(&resolved)?);
    }
    let side = models.first().map_or(DEFAULT_SIDE, |m| m.side());
    let mut cascade = Cascade::new(side, "cli");
    for m in models {
        cascade.push(m)?;
    }
    Ok(cascade)
}

/// Every `*.tern` file in `dir`, keyed by file stem, in name order.
pub fn load_plots(dir: &Path) -> Result<Vec<(String, PlotImage)>> {
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| CliError::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "tern"))
        .collect();
    entries.sort();
    entries
        .into_iter()
        .map(|p| {
            let id = p.file_stem().unwrap_or_default().to_string_lossy().into_owned();
            Ok((id, read_image(&p)?))
        })
        .collect()
}

pub fn scan_command(cascade: &Path, plots: &Path) -> Result<ScanPartition> {
    let cascade = load_cascade(cascade)?;
    Ok(cascade.scan(&load_plots(plots)?)?)
}

/// Creates a session store from a directory of TERN plots.
pub fn init_session(session: &Path, plots: &Path, kind: PlotKind) -> Result<usize> {
    let plots = load_plots(plots)?;
    let n = plots.len();
    CascadeSession::create(session, kind, "ternary-48", plots)?;
    Ok(n)
}
