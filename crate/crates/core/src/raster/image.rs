use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const DEFAULT_SIDE: usize = 48;

/// Where an image came from. The ground-truth label travels here and is
/// never inferred from pixels.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub source: String,
    pub transform: String,
    pub seed: Option<u64>,
    pub label: Option<String>,
}

/// Square ternary raster, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PlotImage {
    side: usize,
    pixels: Vec<i8>,
    provenance: Provenance,
}

impl PlotImage {
    pub fn new(side: usize, pixels: Vec<i8>) -> Result<Self> {
        if side == 0 || pixels.len() != side * side {
            return Err(Error::Shape(format!(
                "{} pixels for a {side}x{side} image",
                pixels.len()
            )));
        }
        if let Some(bad) = pixels.iter().find(|p| !(-1..=1).contains(*p)) {
            return Err(Error::Shape(format!("pixel value {bad} outside {{-1,0,1}}")));
        }
        Ok(Self {
            side,
            pixels,
            provenance: Provenance::default(),
        })
    }

    pub fn blank(side: usize) -> Self {
        Self {
            side,
            pixels: vec![0; side * side],
            provenance: Provenance::default(),
        }
    }

    pub fn with_provenance(mut self, provenance: Provenance) -> Self {
        self.provenance = provenance;
        self
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.provenance.label = Some(label.into());
        self
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn pixels(&self) -> &[i8] {
        &self.pixels
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn provenance_mut(&mut self) -> &mut Provenance {
        &mut self.provenance
    }

    pub fn label(&self) -> Option<&str> {
        self.provenance.label.as_deref()
    }

    pub fn get(&self, row: usize, col: usize) -> i8 {
        self.pixels[row * self.side + col]
    }

    pub fn set(&mut self, row: usize, col: usize, v: i8) {
        assert!((-1..=1).contains(&v));
        self.pixels[row * self.side + col] = v;
    }

    pub fn count(&self, v: i8) -> usize {
        self.pixels.iter().filter(|&&p| p == v).count()
    }

    /// Same pixels regardless of provenance.
    pub fn same_pixels(&self, other: &Self) -> bool {
        self.side == other.side && self.pixels == other.pixels
    }

    /// Stacks images into an `[n, 1, side, side]` batch.
    pub fn batch(images: &[&PlotImage]) -> Result<Tensor> {
        let first = images
            .first()
            .ok_or_else(|| Error::Empty("no images to batch".into()))?;
        let side = first.side;
        let mut data = Vec::with_capacity(images.len() * side * side);
        for img in images {
            if img.side != side {
                return Err(Error::Geometry {
                    expected: side,
                    got: img.side,
                });
            }
            data.extend(img.pixels.iter().map(|&p| p as f32));
        }
        Tensor::new(vec![images.len(), 1, side, side], data)
    }

    /// Quantizes continuous values in [-1, 1]: `> 1/3 → 1`, `< -1/3 → -1`, else 0.
    pub fn quantize(side: usize, values: &[f32]) -> Result<Self> {
        let third = 1.0 / 3.0;
        Self::new(
            side,
            values
                .iter()
                .map(|&v| if v > third { 1 } else if v < -third { -1 } else { 0 })
                .collect(),
        )
    }
}
