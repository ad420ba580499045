//! Plot-to-image transforms onto the ternary recognizer input.
//!
//! Pixel alphabet: `+1` positive color, `-1` negative color, `0` no color.

mod image;
mod tern;

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::yielddata::WaferMap;

pub use image::{PlotImage, Provenance, DEFAULT_SIDE};
pub use tern::{parse_tern, read_image, to_tern_string, write_image, write_png, png_bytes};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WaferMode {
    MarkFails,
    MarkPasses,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WaferRasterSpec {
    pub mode: WaferMode,
    /// Restricts foreground to fails in this bin (only with `MarkFails`).
    pub bin: Option<u16>,
    pub side: usize,
}

impl Default for WaferRasterSpec {
    fn default() -> Self {
        Self {
            mode: WaferMode::MarkFails,
            bin: None,
            side: DEFAULT_SIDE,
        }
    }
}

/// Pixel range `[lo, hi)` covered by grid cell `i` of `extent` cells.
fn cell_span(i: u32, extent: u32, side: usize) -> (usize, usize) {
    let lo = i as usize * side / extent as usize;
    let hi = ((i as usize + 1) * side / extent as usize).max(lo + 1).min(side);
    (lo, hi)
}

/// Foreground dies → +1, other dies → −1, off-wafer → 0. A pixel covering
/// several dies is +1 if any of them is foreground.
pub fn raster_wafer(wafer: &WaferMap, spec: &WaferRasterSpec) -> Result<PlotImage> {
    if wafer.dies.is_empty() {
        return Err(Error::Empty(format!("wafer {} has no dies", wafer.wafer_id)));
    }
    let side = spec.side;
    let mut px = vec![0i8; side * side];
    for d in &wafer.dies {
        let fg = match spec.mode {
            WaferMode::MarkFails => !d.pass && spec.bin.is_none_or(|b| d.bin == Some(b)),
            WaferMode::MarkPasses => d.pass,
        };
        let (r0, r1) = cell_span(d.y, wafer.height, side);
        let (c0, c1) = cell_span(d.x, wafer.width, side);
        for r in r0..r1 {
            for c in c0..c1 {
                let p = &mut px[r * side + c];
                if fg {
                    *p = 1;
                } else if *p == 0 {
                    *p = -1;
                }
            }
        }
    }
    PlotImage::new(side, px).map(|img| {
        img.with_provenance(Provenance {
            source: wafer.wafer_id.clone(),
            transform: format!("wafer:{:?}:{:?}", spec.mode, spec.bin).to_lowercase(),
            ..Provenance::default()
        })
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Normalization {
    /// Per-plot min-max on each axis.
    MinMax,
    /// Shared ranges; points outside are clamped to the edge.
    Fixed { x: (f64, f64), y: (f64, f64) },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScatterRasterSpec {
    pub normalization: Normalization,
    pub side: usize,
}

impl Default for ScatterRasterSpec {
    fn default() -> Self {
        Self {
            normalization: Normalization::MinMax,
            side: DEFAULT_SIDE,
        }
    }
}

/// Maps `v` in `[lo, hi]` onto `0..side`; a degenerate range maps to 0.
fn axis_index(v: f64, lo: f64, hi: f64, side: usize) -> usize {
    if hi <= lo {
        return 0;
    }
    let t = ((v - lo) / (hi - lo)).clamp(0.0, 1.0);
    (t * (side - 1) as f64).round() as usize
}

/// One +1 pixel per point, background 0; larger y is nearer row 0.
pub fn raster_scatter(points: &[(f64, f64)], spec: &ScatterRasterSpec) -> Result<PlotImage> {
    if let Some(p) = points.iter().find(|(x, y)| !x.is_finite() || !y.is_finite()) {
        return Err(Error::non_finite(format!("scatter point ({}, {})", p.0, p.1)));
    }
    let side = spec.side;
    let mut px = vec![0i8; side * side];
    if !points.is_empty() {
        let ((xl, xh), (yl, yh)) = match spec.normalization {
            Normalization::MinMax => {
                let ext = |f: fn(&(f64, f64)) -> f64| {
                    points.iter().map(f).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
                };
                (ext(|p| p.0), ext(|p| p.1))
            }
            Normalization::Fixed { x, y } => (x, y),
        };
        for &(x, y) in points {
            let col = axis_index(x, xl, xh, side);
            let row = side - 1 - axis_index(y, yl, yh, side);
            px[row * side + col] = 1;
        }
    }
    PlotImage::new(side, px).map(|img| {
        img.with_provenance(Provenance {
            transform: "scatter".into(),
            ..Provenance::default()
        })
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxRasterSpec {
    /// Shared y range for every option in one analysis.
    pub y_range: (f64, f64),
    pub jitter_seed: u64,
    pub side: usize,
}

/// One image per option: y from the shared range, x from a seeded uniform
/// stream keyed by the option name.
pub fn raster_box_options(options: &BTreeMap<String, Vec<f64>>, spec: &BoxRasterSpec) -> Result<BTreeMap<String, PlotImage>> {
    if options.is_empty() {
        return Err(Error::Empty("box plot without options".into()));
    }
    let (lo, hi) = spec.y_range;
    if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
        return Err(Error::Config(format!("invalid y range [{lo}, {hi}]")));
    }
    let side = spec.side;
    let mut out = BTreeMap::new();
    for (name, values) in options {
        let mut rng = rng::stream(spec.jitter_seed, rng::hash64(name.as_bytes()));
        let mut px = vec![0i8; side * side];
        for &v in values {
            if !(v >= lo && v <= hi) {
                return Err(Error::OutOfRange { value: v, lo, hi });
            }
            let row = side - 1 - axis_index(v, lo, hi, side);
            let col = rng.random_range(0..side);
            px[row * side + col] = 1;
        }
        let img = PlotImage::new(side, px)?.with_provenance(Provenance {
            source: name.clone(),
            transform: "box_option".into(),
            seed: Some(spec.jitter_seed),
            ..Provenance::default()
        });
        out.insert(name.clone(), img);
    }
    Ok(out)
}

/// `n` rotations by `k·360/n` degrees about the image center with
/// nearest-neighbor resampling; pixels rotated in from outside are 0.
pub fn rotate_augment(image: &PlotImage, n: usize) -> Vec<PlotImage> {
    (0..n).map(|k| rotate(image, k as f64 * 360.0 / n as f64)).collect()
}

/// Rotates counterclockwise (as displayed, row 0 at the top) by `degrees`.
pub fn rotate(image: &PlotImage, degrees: f64) -> PlotImage {
    let side = image.side();
    let theta = degrees.to_radians();
    let snap = |v: f64| if v.abs() < 1e-12 { 0.0 } else if (v.abs() - 1.0).abs() < 1e-12 { v.signum() } else { v };
    let (s, c) = (snap(theta.sin()), snap(theta.cos()));
    let center = (side as f64 - 1.0) / 2.0;
    let mut px = vec![0i8; side * side];
    for r in 0..side {
        for col in 0..side {
            let (dx, dy) = (col as f64 - center, r as f64 - center);
            // inverse of (dx, dy) -> (c·dx + s·dy, −s·dx + c·dy)
            let sx = (center + c * dx - s * dy).round();
            let sy = (center + s * dx + c * dy).round();
            if sx >= 0.0 && sy >= 0.0 && (sx as usize) < side && (sy as usize) < side {
                px[r * side + col] = image.get(sy as usize, sx as usize);
            }
        }
    }
    let mut prov = image.provenance().clone();
    prov.transform = if prov.transform.is_empty() {
        format!("rot{degrees}")
    } else {
        format!("{}+rot{degrees}", prov.transform)
    };
    PlotImage::new(side, px).expect("rotation preserves the alphabet").with_provenance(prov)
}

#[cfg(test)]
mod tests;
