use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Five-number summary with 1.5·IQR fences.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxStats {
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    /// Most extreme data points inside the fences.
    pub whisker_lo: f64,
    pub whisker_hi: f64,
    /// Points strictly outside the fences, ascending.
    pub outliers: Vec<f64>,
}

/// Quantile by linear interpolation between closest ranks of sorted data.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn boxplot_stats(values: &[f64]) -> Result<BoxStats> {
    if values.is_empty() {
        return Err(Error::Empty("box plot of no values".into()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::non_finite("box plot input"));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let q1 = quantile_sorted(&sorted, 0.25);
    let median = quantile_sorted(&sorted, 0.5);
    let q3 = quantile_sorted(&sorted, 0.75);
    let iqr = q3 - q1;
    let (lo_fence, hi_fence) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
    let inside = || sorted.iter().copied().filter(|v| *v >= lo_fence && *v <= hi_fence);
    Ok(BoxStats {
        median,
        q1,
        q3,
        whisker_lo: inside().next().unwrap_or(q1),
        whisker_hi: inside().last().unwrap_or(q3),
        outliers: sorted
            .iter()
            .copied()
            .filter(|v| *v < lo_fence || *v > hi_fence)
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_data() {
        let s = boxplot_stats(&[2.5; 3]).unwrap();
        assert_eq!((s.median, s.q1, s.q3), (2.5, 2.5, 2.5));
        assert!(s.outliers.is_empty());
    }

    #[test]
    fn one_to_five() {
        let s = boxplot_stats(&[5.0, 3.0, 1.0, 4.0, 2.0]).unwrap();
        assert_eq!((s.median, s.q1, s.q3), (3.0, 2.0, 4.0));
        assert_eq!((s.whisker_lo, s.whisker_hi), (1.0, 5.0));
        assert!(s.outliers.is_empty());
    }

    #[test]
    fn far_point_is_outlier() {
        let s = boxplot_stats(&[1.0, 2.0, 3.0, 4.0, 5.0, 100.0]).unwrap();
        assert_eq!(s.outliers, vec![100.0]);
        assert_eq!((s.q1, s.q3), (2.25, 4.75));
        assert_eq!(s.whisker_hi, 5.0);
    }

    #[test]
    fn empty_rejected() {
        assert!(boxplot_stats(&[]).is_err());
    }
}
