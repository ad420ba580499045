use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Die {
    pub x: u32,
    pub y: u32,
    pub pass: bool,
    /// Hard bin; present iff the die failed.
    pub bin: Option<u16>,
}

/// Pass/fail/bin grid of one wafer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WaferMap {
    pub wafer_id: String,
    pub lot_id: String,
    /// Grid extent in x (columns) and y (rows); die coordinates are below these.
    pub width: u32,
    pub height: u32,
    pub dies: Vec<Die>,
}

impl WaferMap {
    /// Validates coordinate uniqueness, extents and the bin/pass invariant.
    pub fn new(wafer_id: impl Into<String>, lot_id: impl Into<String>, width: u32, height: u32, dies: Vec<Die>) -> Result<Self> {
        let wafer_id = wafer_id.into();
        let mut seen = BTreeSet::new();
        for d in &dies {
            if d.x >= width || d.y >= height {
                return Err(Error::Shape(format!(
                    "wafer {wafer_id}: die ({}, {}) outside {width}x{height} grid",
                    d.x, d.y
                )));
            }
            if d.pass == d.bin.is_some() {
                return Err(Error::Config(format!(
                    "wafer {wafer_id}: die ({}, {}) must carry a bin iff it fails",
                    d.x, d.y
                )));
            }
            if !seen.insert((d.x, d.y)) {
                return Err(Error::Conflict(format!(
                    "wafer {wafer_id}: duplicate die coordinate ({}, {})",
                    d.x, d.y
                )));
            }
        }
        Ok(Self {
            wafer_id,
            lot_id: lot_id.into(),
            width,
            height,
            dies,
        })
    }

    pub fn fail_count(&self) -> usize {
        self.dies.iter().filter(|d| !d.pass).count()
    }

    pub fn bin_count(&self, bin: u16) -> usize {
        self.dies.iter().filter(|d| d.bin == Some(bin)).count()
    }
}

/// One e-test measurement at a wafer site.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SiteValue {
    pub lot_id: String,
    pub wafer_id: String,
    pub site: u32,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ETestSeries {
    pub test_name: String,
    pub values: Vec<SiteValue>,
}

/// One lot passing through one tool at one stage.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolVisit {
    pub lot_id: String,
    pub stage: String,
    pub tool_id: String,
    pub timestamp: i64,
}

/// Lot-level aggregate of fail counts and e-test means.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LotRecord {
    pub lot_id: String,
    pub wafer_ids: Vec<String>,
    pub bin_fails: BTreeMap<u16, u64>,
    pub etest_means: BTreeMap<String, f64>,
    pub tools: BTreeMap<String, String>,
    /// Earliest tool timestamp seen for the lot, if any.
    pub timestamp: Option<i64>,
}

/// Everything read from one set of input files.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ProductionData {
    pub wafers: Vec<WaferMap>,
    pub etests: Vec<ETestSeries>,
    pub tools: Vec<ToolVisit>,
}

impl ProductionData {
    pub fn bins(&self) -> BTreeSet<u16> {
        self.wafers
            .iter()
            .flat_map(|w| w.dies.iter().filter_map(|d| d.bin))
            .collect()
    }

    /// Lots in first-appearance order across wafers, e-tests and tools.
    pub fn lot_ids(&self) -> Vec<String> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        let ids = self
            .wafers
            .iter()
            .map(|w| &w.lot_id)
            .chain(self.etests.iter().flat_map(|e| e.values.iter().map(|v| &v.lot_id)))
            .chain(self.tools.iter().map(|t| &t.lot_id));
        for id in ids {
            if seen.insert(id.clone()) {
                out.push(id.clone());
            }
        }
        out
    }

    /// Builds one [`LotRecord`] per lot.
    pub fn lots(&self) -> Vec<LotRecord> {
        self.lot_ids()
            .into_iter()
            .map(|lot_id| {
                let wafers: Vec<&WaferMap> = self.wafers.iter().filter(|w| w.lot_id == lot_id).collect();
                let mut bin_fails = BTreeMap::new();
                for w in &wafers {
                    for d in &w.dies {
                        if let Some(b) = d.bin {
                            *bin_fails.entry(b).or_insert(0) += 1;
                        }
                    }
                }
                let mut etest_means = BTreeMap::new();
                for e in &self.etests {
                    let vals: Vec<f64> = e.values.iter().filter(|v| v.lot_id == lot_id).map(|v| v.value).collect();
                    if !vals.is_empty() {
                        etest_means.insert(e.test_name.clone(), mean_sorted(vals));
                    }
                }
                let visits: Vec<&ToolVisit> = self.tools.iter().filter(|t| t.lot_id == lot_id).collect();
                LotRecord {
                    wafer_ids: wafers.iter().map(|w| w.wafer_id.clone()).collect(),
                    bin_fails,
                    etest_means,
                    tools: visits.iter().map(|t| (t.stage.clone(), t.tool_id.clone())).collect(),
                    timestamp: visits.iter().map(|t| t.timestamp).min(),
                    lot_id,
                }
            })
            .collect()
    }
}

/// Mean that does not depend on the input order.
pub(crate) fn mean_sorted(mut vals: Vec<f64>) -> f64 {
    vals.sort_by(f64::total_cmp);
    vals.iter().sum::<f64>() / vals.len() as f64
}
