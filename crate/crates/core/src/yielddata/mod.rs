//! Production test data: wafers, e-tests, tool history, lot aggregation,
//! box-plot statistics, and seeded synthetic stand-ins for product data.

mod boxplot;
mod ingest;
mod model;
mod synth;

use crate::error::{Error, Result};

pub use boxplot::{boxplot_stats, quantile_sorted, BoxStats};
pub use ingest::{ingest, write_csv, IngestCounts};
pub use model::{Die, ETestSeries, LotRecord, ProductionData, SiteValue, ToolVisit, WaferMap};
pub use synth::{
    synth_class_wafers, synth_correlation, synth_option_distributions, synth_product, synth_wafers, CorrelationClass,
    LabeledPoints, LabeledWafer, OptionKind, OptionParams, ProductCorpus, ProductProfile, SyntheticSpec,
    wafer_footprint, WaferPattern, CLASS_NAMES, DEFAULT_M_MIX,
};

/// One point per lot: `(mean e-test value, fail count in bin)`. Lots
/// without a measurement of `etest` are skipped.
pub fn lot_aggregate(lots: &[LotRecord], bin: u16, etest: &str, known_bins: &[u16]) -> Result<Vec<(f64, f64)>> {
    if !known_bins.contains(&bin) {
        return Err(Error::Unknown {
            what: "bin",
            name: bin.to_string(),
        });
    }
    if !lots.iter().any(|l| l.etest_means.contains_key(etest)) {
        return Err(Error::Unknown {
            what: "e-test",
            name: etest.to_string(),
        });
    }
    Ok(lots
        .iter()
        .filter_map(|l| {
            l.etest_means
                .get(etest)
                .map(|x| (*x, l.bin_fails.get(&bin).copied().unwrap_or(0) as f64))
        })
        .collect())
}

/// The `k` bins with the most fails, most-failing first (ties by bin id).
pub fn top_bins(data: &ProductionData, k: usize) -> Vec<u16> {
    let mut counts = std::collections::BTreeMap::<u16, usize>::new();
    for w in &data.wafers {
        for d in &w.dies {
            if let Some(b) = d.bin {
                *counts.entry(b).or_default() += 1;
            }
        }
    }
    let mut v: Vec<(u16, usize)> = counts.into_iter().collect();
    v.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    v.into_iter().take(k).map(|(b, _)| b).collect()
}

/// Every (bin, e-test) pairing that yields one correlation plot.
pub fn correlation_datasets(bins: &[u16], etests: &[String]) -> Vec<(u16, String)> {
    bins.iter()
        .flat_map(|b| etests.iter().map(move |e| (*b, e.clone())))
        .collect()
}
