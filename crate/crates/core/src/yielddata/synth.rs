//! Seeded synthetic stand-ins for production data.
//!
//! Every entity draws from its own stream keyed by `(spec hash, index)`, so
//! growing a corpus never changes the entities already in it.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::model::{Die, ETestSeries, ProductionData, SiteValue, ToolVisit, WaferMap};
use crate::error::{Error, Result};
use crate::rng;

/// Spatial failure pattern of one wafer class. Probabilities are per die.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "class", rename_all = "snake_case")]
pub enum WaferPattern {
    SparseRandom { p: f64 },
    DenseRandom { p: f64 },
    HighDensity { p: f64 },
    /// Fails at every die with `x % pitch == phase.0 && y % pitch == phase.1`.
    Grid { pitch: u32, phase: (u32, u32), background: f64 },
    /// Fails with probability `q` within `band` dies of the wafer edge.
    EdgeRing { band: f64, q: f64, interior: f64 },
    /// Mostly failing wafer with passing sub-clusters near the center.
    CenterPassCluster { clusters: usize, radius: f64, fail: f64 },
    /// A straight band of fails at a random offset from the center.
    Stripe { width: f64, angle_deg: f64, q: f64, background: f64 },
    /// One quadrant (0..4, clockwise from top-left) failing with probability `q`.
    Quadrant { quadrant: u8, q: f64, background: f64 },
}

pub const CLASS_NAMES: &[&str] = &[
    "sparse_random",
    "dense_random",
    "high_density",
    "grid",
    "edge_ring",
    "center_pass_cluster",
    "stripe",
    "quadrant",
];

/// Product-M analog class mix: 85% sparse+dense random, 5% high density,
/// 2% grid, 1% edge, 7% novel.
pub const DEFAULT_M_MIX: &[(&str, f64)] = &[
    ("sparse_random", 0.55),
    ("dense_random", 0.30),
    ("high_density", 0.05),
    ("grid", 0.02),
    ("edge_ring", 0.01),
    ("stripe", 0.035),
    ("quadrant", 0.035),
];

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

impl WaferPattern {
    pub fn name(&self) -> &'static str {
        match self {
            WaferPattern::SparseRandom { .. } => "sparse_random",
            WaferPattern::DenseRandom { .. } => "dense_random",
            WaferPattern::HighDensity { .. } => "high_density",
            WaferPattern::Grid { .. } => "grid",
            WaferPattern::EdgeRing { .. } => "edge_ring",
            WaferPattern::CenterPassCluster { .. } => "center_pass_cluster",
            WaferPattern::Stripe { .. } => "stripe",
            WaferPattern::Quadrant { .. } => "quadrant",
        }
    }

    /// Classes with no recognizer in the reference cascade.
    pub fn is_novel(name: &str) -> bool {
        matches!(name, "stripe" | "quadrant" | "center_pass_cluster")
    }

    /// Fixed, documented parameters for a class.
    pub fn default_for(name: &str) -> Result<Self> {
        Ok(match name {
            "sparse_random" => WaferPattern::SparseRandom { p: 0.01 },
            "dense_random" => WaferPattern::DenseRandom { p: 0.05 },
            "high_density" => WaferPattern::HighDensity { p: 0.35 },
            "grid" => WaferPattern::Grid {
                pitch: 4,
                phase: (0, 0),
                background: 0.0,
            },
            "edge_ring" => WaferPattern::EdgeRing {
                band: 3.0,
                q: 0.9,
                interior: 0.01,
            },
            "center_pass_cluster" => WaferPattern::CenterPassCluster {
                clusters: 3,
                radius: 4.0,
                fail: 0.8,
            },
            "stripe" => WaferPattern::Stripe {
                width: 3.0,
                angle_deg: 0.0,
                q: 0.85,
                background: 0.008,
            },
            "quadrant" => WaferPattern::Quadrant {
                quadrant: 0,
                q: 0.65,
                background: 0.008,
            },
            other => {
                return Err(Error::Unknown {
                    what: "wafer class",
                    name: other.to_string(),
                })
            }
        })
    }

    /// Per-wafer parameters drawn from the documented class ranges.
    pub fn sample(name: &str, diameter: u32, rng: &mut ChaCha8Rng) -> Result<Self> {
        let r = diameter as f64 / 2.0;
        Ok(match name {
            "sparse_random" => WaferPattern::SparseRandom { p: uniform(rng, 0.004, 0.015) },
            "dense_random" => WaferPattern::DenseRandom { p: uniform(rng, 0.03, 0.07) },
            "high_density" => WaferPattern::HighDensity { p: uniform(rng, 0.25, 0.5) },
            "grid" => WaferPattern::Grid {
                pitch: 4,
                phase: (rng.random_range(0..4), rng.random_range(0..4)),
                background: uniform(rng, 0.002, 0.006),
            },
            "edge_ring" => WaferPattern::EdgeRing {
                band: uniform(rng, 2.0, 4.0) * diameter as f64 / 52.0,
                q: uniform(rng, 0.6, 0.95),
                interior: uniform(rng, 0.003, 0.012),
            },
            "center_pass_cluster" => WaferPattern::CenterPassCluster {
                clusters: 3,
                radius: uniform(rng, 0.12, 0.2) * r,
                fail: uniform(rng, 0.7, 0.9),
            },
            "stripe" => WaferPattern::Stripe {
                width: uniform(rng, 2.0, 4.0) * diameter as f64 / 52.0,
                angle_deg: uniform(rng, 0.0, 180.0),
                q: uniform(rng, 0.7, 0.95),
                background: uniform(rng, 0.003, 0.012),
            },
            "quadrant" => WaferPattern::Quadrant {
                quadrant: rng.random_range(0..4),
                q: uniform(rng, 0.5, 0.8),
                background: uniform(rng, 0.003, 0.012),
            },
            other => {
                return Err(Error::Unknown {
                    what: "wafer class",
                    name: other.to_string(),
                })
            }
        })
    }
}

/// Dies of a circular wafer on a `diameter`×`diameter` grid, row-major.
pub fn wafer_footprint(diameter: u32) -> Vec<(u32, u32)> {
    let c = diameter as f64 / 2.0;
    let mut out = Vec::new();
    for y in 0..diameter {
        for x in 0..diameter {
            let (dx, dy) = (x as f64 + 0.5 - c, y as f64 + 0.5 - c);
            if dx * dx + dy * dy <= c * c {
                out.push((x, y));
            }
        }
    }
    out
}

const BIN_WEIGHTS: [f64; 8] = [0.35, 0.2, 0.15, 0.1, 0.08, 0.05, 0.04, 0.03];

fn draw_bin(rng: &mut ChaCha8Rng) -> u16 {
    let mut u = rng.random::<f64>();
    for (i, w) in BIN_WEIGHTS.iter().enumerate() {
        if u < *w {
            return i as u16 + 1;
        }
        u -= w;
    }
    BIN_WEIGHTS.len() as u16
}

/// Draws one wafer. `extra_bin1` adds independent bin-1 fails at that rate.
fn generate_wafer(
    pattern: &WaferPattern,
    diameter: u32,
    rng: &mut ChaCha8Rng,
    wafer_id: String,
    lot_id: String,
    extra_bin1: f64,
) -> WaferMap {
    let c = diameter as f64 / 2.0;
    // per-wafer geometry drawn before the per-die loop
    let centers: Vec<(f64, f64)> = match pattern {
        WaferPattern::CenterPassCluster { clusters, .. } => (0..*clusters)
            .map(|_| {
                let (a, d) = (uniform(rng, 0.0, std::f64::consts::TAU), uniform(rng, 0.1, 0.45) * c);
                (d * a.cos(), d * a.sin())
            })
            .collect(),
        _ => Vec::new(),
    };
    let offset = match pattern {
        WaferPattern::Stripe { .. } => uniform(rng, -0.5, 0.5) * c,
        _ => 0.0,
    };
    let dies = wafer_footprint(diameter)
        .into_iter()
        .map(|(x, y)| {
            let (dx, dy) = (x as f64 + 0.5 - c, y as f64 + 0.5 - c);
            let p = match pattern {
                WaferPattern::SparseRandom { p } | WaferPattern::DenseRandom { p } | WaferPattern::HighDensity { p } => *p,
                WaferPattern::Grid { pitch, phase, background } => {
                    if x % pitch == phase.0 && y % pitch == phase.1 {
                        1.0
                    } else {
                        *background
                    }
                }
                WaferPattern::EdgeRing { band, q, interior } => {
                    if c - (dx * dx + dy * dy).sqrt() < *band {
                        *q
                    } else {
                        *interior
                    }
                }
                WaferPattern::CenterPassCluster { radius, fail, .. } => {
                    if centers.iter().any(|(cx, cy)| (dx - cx).hypot(dy - cy) <= *radius) {
                        0.0
                    } else {
                        *fail
                    }
                }
                WaferPattern::Stripe { width, angle_deg, q, background } => {
                    let a = angle_deg.to_radians();
                    // distance from the line through offset·normal with direction a
                    let dist = (-a.sin() * dx + a.cos() * dy - offset).abs();
                    if dist < width / 2.0 {
                        *q
                    } else {
                        *background
                    }
                }
                WaferPattern::Quadrant { quadrant, q, background } => {
                    let which = match (dx >= 0.0, dy >= 0.0) {
                        (false, false) => 0,
                        (true, false) => 1,
                        (true, true) => 2,
                        (false, true) => 3,
                    };
                    if which == *quadrant {
                        *q
                    } else {
                        *background
                    }
                }
            };
            let u: f64 = rng.random();
            let bin = if p >= 1.0 || u < p {
                Some(draw_bin(rng))
            } else if extra_bin1 > 0.0 && rng.random::<f64>() < extra_bin1 {
                Some(1)
            } else {
                None
            };
            Die {
                x,
                y,
                pass: bin.is_none(),
                bin,
            }
        })
        .collect();
    WaferMap {
        wafer_id,
        lot_id,
        width: diameter,
        height: diameter,
        dies,
    }
}

/// A class, its parameters, the die grid and counts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub pattern: WaferPattern,
    pub diameter: u32,
    pub lots: usize,
    pub wafers_per_lot: usize,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn new(pattern: WaferPattern, diameter: u32, wafers: usize, seed: u64) -> Self {
        Self {
            pattern,
            diameter,
            lots: 1,
            wafers_per_lot: wafers,
            seed,
        }
    }

    /// Identity of the stream family; excludes counts.
    fn stream_key(&self) -> u64 {
        let key = serde_json::json!({"pattern": self.pattern, "diameter": self.diameter, "seed": self.seed});
        rng::hash64(key.to_string().as_bytes())
    }

    fn validate(&self) -> Result<()> {
        let prob_ok = |p: f64| (0.0..=1.0).contains(&p);
        let ok = self.diameter >= 2
            && match &self.pattern {
                WaferPattern::SparseRandom { p } | WaferPattern::DenseRandom { p } | WaferPattern::HighDensity { p } => prob_ok(*p),
                WaferPattern::Grid { pitch, phase, background } => *pitch >= 1 && phase.0 < *pitch && phase.1 < *pitch && prob_ok(*background),
                WaferPattern::EdgeRing { band, q, interior } => *band >= 0.0 && prob_ok(*q) && prob_ok(*interior),
                WaferPattern::CenterPassCluster { radius, fail, .. } => *radius >= 0.0 && prob_ok(*fail),
                WaferPattern::Stripe { width, q, background, .. } => *width > 0.0 && prob_ok(*q) && prob_ok(*background),
                WaferPattern::Quadrant { quadrant, q, background } => *quadrant < 4 && prob_ok(*q) && prob_ok(*background),
            };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("synthetic parameters out of range: {self:?}")))
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledWafer {
    pub wafer: WaferMap,
    pub label: String,
}

/// `lots × wafers_per_lot` wafers of one class, each labeled with it.
pub fn synth_wafers(spec: &SyntheticSpec) -> Result<Vec<LabeledWafer>> {
    spec.validate()?;
    let key = spec.stream_key();
    let mut out = Vec::with_capacity(spec.lots * spec.wafers_per_lot);
    for lot in 0..spec.lots {
        for w in 0..spec.wafers_per_lot {
            let index = (lot * spec.wafers_per_lot + w) as u64;
            let mut r = rng::stream(key, index);
            let wafer = generate_wafer(
                &spec.pattern,
                spec.diameter,
                &mut r,
                format!("L{lot:04}-W{w:02}"),
                format!("L{lot:04}"),
                0.0,
            );
            out.push(LabeledWafer {
                wafer,
                label: spec.pattern.name().to_string(),
            });
        }
    }
    Ok(out)
}

/// `n` wafers of one class, each with parameters drawn from the class
/// ranges. Wafer `i` depends only on `(class, diameter, seed, i)`.
pub fn synth_class_wafers(class: &str, diameter: u32, n: usize, seed: u64) -> Result<Vec<LabeledWafer>> {
    WaferPattern::default_for(class)?;
    let key = rng::hash64(
        serde_json::json!({"class": class, "diameter": diameter, "seed": seed})
            .to_string()
            .as_bytes(),
    );
    (0..n)
        .map(|i| {
            let mut r = rng::stream(key, i as u64);
            let pattern = WaferPattern::sample(class, diameter, &mut r)?;
            Ok(LabeledWafer {
                wafer: generate_wafer(&pattern, diameter, &mut r, format!("{class}-{i:05}"), format!("{class}-{seed}"), 0.0),
                label: class.to_string(),
            })
        })
        .collect()
}

/// Scale of a product analog.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProductProfile {
    pub name: String,
    pub wafers: usize,
    pub diameter: u32,
    pub wafers_per_lot: usize,
    pub etests: usize,
    pub sites: u32,
    pub stages: usize,
    /// Plants one falling and one rising e-test dependency of bin 1.
    pub planted_trends: bool,
}

impl ProductProfile {
    /// 8,300 wafers of ~2,100 dies, 501 e-tests.
    pub fn product_m() -> Self {
        Self {
            name: "M".into(),
            wafers: 8300,
            diameter: 52,
            wafers_per_lot: 25,
            etests: 501,
            sites: 5,
            stages: 20,
            planted_trends: false,
        }
    }

    /// 7,052 wafers of ~440 dies, 596 e-tests.
    pub fn product_a() -> Self {
        Self {
            name: "A".into(),
            wafers: 7052,
            diameter: 24,
            wafers_per_lot: 25,
            etests: 596,
            sites: 5,
            stages: 20,
            planted_trends: true,
        }
    }

    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "M" | "m" => Ok(Self::product_m()),
            "A" | "a" => Ok(Self::product_a()),
            other => Err(Error::Unknown {
                what: "product",
                name: other.to_string(),
            }),
        }
    }
}

/// A generated product: wafers with ground-truth classes, compact per-lot
/// e-test means, and tool history.
#[derive(Clone, Debug)]
pub struct ProductCorpus {
    pub profile: ProductProfile,
    pub seed: u64,
    pub wafers: Vec<LabeledWafer>,
    pub etest_names: Vec<String>,
    /// `lot_means[lot][etest]`.
    pub lot_means: Vec<Vec<f32>>,
    pub tools: Vec<ToolVisit>,
}

fn class_counts(mix: &[(&str, f64)], n: usize) -> Vec<(String, usize)> {
    let total: f64 = mix.iter().map(|m| m.1).sum();
    let exact: Vec<f64> = mix.iter().map(|m| m.1 / total * n as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut order: Vec<usize> = (0..mix.len()).collect();
    order.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())).then(a.cmp(&b)));
    let missing = n - counts.iter().sum::<usize>();
    for &i in order.iter().take(missing) {
        counts[i] += 1;
    }
    mix.iter().zip(counts).map(|(m, c)| (m.0.to_string(), c)).collect()
}

/// Generates a product analog with exactly `round(mix·wafers)` wafers per
/// class (largest remainder), shuffled by seed.
pub fn synth_product(profile: &ProductProfile, mix: &[(&str, f64)], seed: u64) -> Result<ProductCorpus> {
    for (name, w) in mix {
        WaferPattern::default_for(name)?;
        if !(*w >= 0.0) {
            return Err(Error::Config(format!("negative weight for {name}")));
        }
    }
    if mix.iter().map(|m| m.1).sum::<f64>() <= 0.0 {
        return Err(Error::Config("class mix sums to zero".into()));
    }
    let key = rng::hash64(
        serde_json::json!({"profile": profile.name, "diameter": profile.diameter, "seed": seed})
            .to_string()
            .as_bytes(),
    );
    let mut classes: Vec<String> = class_counts(mix, profile.wafers)
        .into_iter()
        .flat_map(|(name, c)| std::iter::repeat_n(name, c))
        .collect();
    classes.shuffle(&mut rng::stream(key, u64::MAX));

    let lots = profile.wafers.div_ceil(profile.wafers_per_lot.max(1));
    let etest_names: Vec<String> = (0..profile.etests).map(|i| format!("ET{i:04}")).collect();
    let lot_means: Vec<Vec<f32>> = (0..lots)
        .map(|lot| {
            let mut r = rng::stream(rng::derive(key, "etest"), lot as u64);
            (0..profile.etests)
                .map(|_| StandardNormal.sample(&mut r))
                .collect()
        })
        .collect();

    let wafers = classes
        .iter()
        .enumerate()
        .map(|(i, class)| {
            let lot = i / profile.wafers_per_lot.max(1);
            let w = i % profile.wafers_per_lot.max(1);
            let mut r = rng::stream(key, i as u64);
            let pattern = WaferPattern::sample(class, profile.diameter, &mut r)?;
            let extra = if profile.planted_trends && profile.etests >= 2 {
                let m = &lot_means[lot];
                0.004 * ((m[1] - m[0]) as f64).exp()
            } else {
                0.0
            };
            Ok(LabeledWafer {
                wafer: generate_wafer(&pattern, profile.diameter, &mut r, format!("L{lot:04}-W{w:02}"), format!("L{lot:04}"), extra),
                label: class.clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut tools = Vec::with_capacity(lots * profile.stages);
    for lot in 0..lots {
        let mut r = rng::stream(rng::derive(key, "tools"), lot as u64);
        for s in 0..profile.stages {
            let n_tools = 2 + s % 3;
            tools.push(ToolVisit {
                lot_id: format!("L{lot:04}"),
                stage: format!("S{s:03}"),
                tool_id: format!("S{s:03}-T{}", r.random_range(0..n_tools)),
                timestamp: (lot * 100 + s) as i64,
            });
        }
    }
    Ok(ProductCorpus {
        profile: profile.clone(),
        seed,
        wafers,
        etest_names,
        lot_means,
        tools,
    })
}

impl ProductCorpus {
    fn site_values(&self, wafer_index: usize, etest: usize) -> impl Iterator<Item = (u32, f64)> {
        let lot = wafer_index / self.profile.wafers_per_lot.max(1);
        let mean = self.lot_means[lot][etest] as f64;
        let mut r = rng::stream(
            rng::derive(self.seed, &format!("sites/{}", self.profile.name)),
            (wafer_index * self.profile.etests + etest) as u64,
        );
        let noise = Normal::<f64>::new(0.0, 0.25).unwrap();
        (0..self.profile.sites).map(move |s| (s + 1, mean + noise.sample(&mut r)))
    }

    /// Materializes the corpus as an in-memory data model.
    pub fn to_production_data(&self) -> ProductionData {
        let etests = self
            .etest_names
            .iter()
            .enumerate()
            .map(|(e, name)| ETestSeries {
                test_name: name.clone(),
                values: self
                    .wafers
                    .iter()
                    .enumerate()
                    .flat_map(|(i, w)| {
                        self.site_values(i, e).map(move |(site, value)| SiteValue {
                            lot_id: w.wafer.lot_id.clone(),
                            wafer_id: w.wafer.wafer_id.clone(),
                            site,
                            value,
                        })
                    })
                    .collect(),
            })
            .collect();
        ProductionData {
            wafers: self.wafers.iter().map(|w| w.wafer.clone()).collect(),
            etests,
            tools: self.tools.clone(),
        }
    }

    /// Writes `dies.csv`, `etests.csv`, `tools.csv` and `labels.csv`
    /// without materializing the e-test table.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        let data = ProductionData {
            wafers: self.wafers.iter().map(|w| w.wafer.clone()).collect(),
            etests: Vec::new(),
            tools: self.tools.clone(),
        };
        super::write_csv(&data, dir)?;
        let path = dir.join("etests.csv");
        let f = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut w = std::io::BufWriter::new(f);
        let io = |e| Error::io(dir.join("etests.csv"), e);
        writeln!(w, "lot_id,wafer_id,site,test_name,value").map_err(io)?;
        for (e, name) in self.etest_names.iter().enumerate() {
            for (i, lw) in self.wafers.iter().enumerate() {
                for (site, value) in self.site_values(i, e) {
                    writeln!(w, "{},{},{site},{name},{value}", lw.wafer.lot_id, lw.wafer.wafer_id).map_err(io)?;
                }
            }
        }
        w.flush().map_err(io)?;
        let path = dir.join("labels.csv");
        let mut text = String::from("wafer_id,label\n");
        for lw in &self.wafers {
            text.push_str(&format!("{},{}\n", lw.wafer.wafer_id, lw.label));
        }
        fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrelationClass {
    /// Fails concentrated near zero plus one lot far above the rest.
    NoCorr,
    /// As `NoCorr` with a much larger outlying lot.
    NoCorrSpiked,
    /// Smaller e-test value tends to have more fails.
    TrendA,
    /// Larger e-test value tends to have more fails.
    TrendB,
}

impl CorrelationClass {
    pub fn name(self) -> &'static str {
        match self {
            CorrelationClass::NoCorr => "no_corr",
            CorrelationClass::NoCorrSpiked => "no_corr_spiked",
            CorrelationClass::TrendA => "trend_a",
            CorrelationClass::TrendB => "trend_b",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        Ok(match name {
            "no_corr" => CorrelationClass::NoCorr,
            "no_corr_spiked" => CorrelationClass::NoCorrSpiked,
            "trend_a" => CorrelationClass::TrendA,
            "trend_b" => CorrelationClass::TrendB,
            other => {
                return Err(Error::Unknown {
                    what: "correlation class",
                    name: other.to_string(),
                })
            }
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledPoints {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

/// One correlation plot: `x` a lot e-test mean, `y` the lot fail count.
pub fn synth_correlation(class: CorrelationClass, n_lots: usize, seed: u64) -> Result<LabeledPoints> {
    if n_lots < 2 {
        return Err(Error::Config(format!("need at least 2 lots, got {n_lots}")));
    }
    let mut r = rng::stream(rng::derive(seed, class.name()), n_lots as u64);
    let xs: Vec<f64> = (0..n_lots).map(|_| StandardNormal.sample(&mut r)).collect();
    let points = match class {
        CorrelationClass::NoCorr | CorrelationClass::NoCorrSpiked => {
            let base = Normal::<f64>::new(1.0, 0.6).unwrap();
            let mut ys: Vec<f64> = (0..n_lots).map(|_| base.sample(&mut r).exp().round()).collect();
            let factor = match class {
                CorrelationClass::NoCorr => uniform(&mut r, 2.5, 5.0),
                _ => uniform(&mut r, 8.0, 16.0),
            };
            let spike = r.random_range(0..n_lots);
            ys[spike] = 0.0;
            let top = ys.iter().cloned().fold(1.0, f64::max);
            ys[spike] = (top * factor).ceil();
            xs.into_iter().zip(ys).collect()
        }
        CorrelationClass::TrendA | CorrelationClass::TrendB => {
            let sign = if class == CorrelationClass::TrendA { -1.0 } else { 1.0 };
            let noise = Normal::<f64>::new(0.0, 0.5).unwrap();
            xs.into_iter()
                .map(|x| (x, (1.0 + 0.7 * sign * x + noise.sample(&mut r)).exp().round()))
                .collect()
        }
    };
    Ok(LabeledPoints {
        label: class.name().to_string(),
        points,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptionKind {
    NormalYield,
    /// Location shifted down and spread widened.
    BiasedLow,
    /// Normal distribution but only `few` values per option.
    FewLots,
}

impl OptionKind {
    pub fn name(self) -> &'static str {
        match self {
            OptionKind::NormalYield => "normal_yield",
            OptionKind::BiasedLow => "biased_low",
            OptionKind::FewLots => "few_lots",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        Ok(match name {
            "normal_yield" => OptionKind::NormalYield,
            "biased_low" => OptionKind::BiasedLow,
            "few_lots" => OptionKind::FewLots,
            other => {
                return Err(Error::Unknown {
                    what: "option kind",
                    name: other.to_string(),
                })
            }
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptionParams {
    pub options: usize,
    pub values_per_option: usize,
    pub few: usize,
    pub location: f64,
    pub scale: f64,
    /// Downward shift of `BiasedLow`.
    pub shift: f64,
    /// Scale multiplier of `BiasedLow`.
    pub widen: f64,
    /// Values are clamped into this range (the shared y axis).
    pub range: (f64, f64),
}

impl Default for OptionParams {
    fn default() -> Self {
        Self {
            options: 1,
            values_per_option: 200,
            few: 5,
            location: 0.62,
            scale: 0.06,
            shift: 0.12,
            widen: 2.0,
            range: (0.0, 1.0),
        }
    }
}

/// Values per option, named `opt000`, `opt001`, …; option `k` draws from
/// stream `k` of `seed`.
pub fn synth_option_distributions(kind: OptionKind, params: &OptionParams, seed: u64) -> Result<BTreeMap<String, Vec<f64>>> {
    if params.options == 0 {
        return Err(Error::Config("need at least one option".into()));
    }
    if !(params.scale > 0.0 && params.widen > 0.0 && params.range.0 < params.range.1) {
        return Err(Error::Config(format!("invalid option parameters {params:?}")));
    }
    let (loc, scale, n) = match kind {
        OptionKind::NormalYield => (params.location, params.scale, params.values_per_option),
        OptionKind::BiasedLow => (params.location - params.shift, params.scale * params.widen, params.values_per_option),
        OptionKind::FewLots => (params.location, params.scale, params.few),
    };
    let dist = Normal::new(loc, scale).map_err(|e| Error::Config(e.to_string()))?;
    Ok((0..params.options)
        .map(|k| {
            let mut r = rng::stream(rng::derive(seed, kind.name()), k as u64);
            let values = (0..n)
                .map(|_| dist.sample(&mut r).clamp(params.range.0, params.range.1))
                .collect();
            (format!("opt{k:03}"), values)
        })
        .collect())
}

#[cfg(test)]
mod tests;
