use std::io::Write;

use serde::Serialize;

use crate::binary::{IntervalKind, Method, Target};
use crate::error::Result;
use crate::stats::{sample_sd, CompensatedSum};

/// What one successful replicate contributes to a summary row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub point: f64,
    pub se: Option<f64>,
    /// `(lower, upper)`.
    pub interval: Option<(f64, f64)>,
}

/// Identifies one summary row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RowKey {
    pub method: Method,
    pub target: Target,
    /// `None` for point-only rows.
    pub coverage_kind: Option<IntervalKind>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub method: Method,
    pub target: Target,
    pub coverage_kind: Option<IntervalKind>,
    pub mean: Option<f64>,
    /// Absent with fewer than two successful replicates.
    pub sd: Option<f64>,
    pub avg_se: Option<f64>,
    pub avg_width: Option<f64>,
    pub coverage_pct: Option<f64>,
    pub n_failed: usize,
    pub n_reps: usize,
}

impl SummaryRow {
    pub fn key(&self) -> RowKey {
        RowKey {
            method: self.method,
            target: self.target,
            coverage_kind: self.coverage_kind,
        }
    }

    /// Monte Carlo standard error of `mean`.
    pub fn mc_se(&self) -> Option<f64> {
        let ok = self.n_reps - self.n_failed;
        Some(self.sd? / (ok as f64).sqrt())
    }
}

fn avg(values: impl Iterator<Item = f64>) -> Option<f64> {
    let mut n = 0usize;
    let s: CompensatedSum = values.inspect(|_| n += 1).collect();
    (n > 0).then(|| s.value() / n as f64)
}

/// Summarizes one row from per-replicate outcomes (`None` = failed replicate).
/// Coverage counts intervals containing `truth`, endpoints included.
pub fn summarize(key: RowKey, outcomes: &[Option<Observation>], truth: f64) -> SummaryRow {
    let ok: Vec<Observation> = outcomes.iter().flatten().copied().collect();
    let points: Vec<f64> = ok.iter().map(|o| o.point).collect();
    let intervals: Vec<(f64, f64)> = ok.iter().filter_map(|o| o.interval).collect();
    let covered = intervals
        .iter()
        .filter(|(lo, hi)| *lo <= truth && truth <= *hi)
        .count();
    SummaryRow {
        method: key.method,
        target: key.target,
        coverage_kind: key.coverage_kind,
        mean: avg(points.iter().copied()),
        sd: sample_sd(&points),
        avg_se: avg(ok.iter().filter_map(|o| o.se)),
        avg_width: avg(intervals.iter().map(|(lo, hi)| hi - lo)),
        coverage_pct: (!intervals.is_empty())
            .then(|| 100.0 * covered as f64 / intervals.len() as f64),
        n_failed: outcomes.len() - ok.len(),
        n_reps: outcomes.len(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonteCarloSummary {
    pub rows: Vec<SummaryRow>,
}

pub const SUMMARY_COLUMNS: [&str; 10] = [
    "method",
    "target",
    "mean",
    "sd",
    "avg_se",
    "avg_width",
    "coverage_pct",
    "coverage_kind",
    "n_failed",
    "n_reps",
];

impl MonteCarloSummary {
    pub fn row(&self, method: Method, target: Target, kind: Option<IntervalKind>) -> Option<&SummaryRow> {
        self.rows.iter().find(|r| r.key() == RowKey { method, target, coverage_kind: kind })
    }

    /// Writes the summary table; absent values are empty fields.
    pub fn write_csv(&self, w: impl Write) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(SUMMARY_COLUMNS)?;
        let num = |x: Option<f64>| x.map(format_sig6).unwrap_or_default();
        for r in &self.rows {
            out.write_record([
                r.method.as_str().to_string(),
                r.target.as_str().to_string(),
                num(r.mean),
                num(r.sd),
                num(r.avg_se),
                num(r.avg_width),
                num(r.coverage_pct),
                r.coverage_kind.map(|k| k.as_str()).unwrap_or("none").to_string(),
                r.n_failed.to_string(),
                r.n_reps.to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }
}

/// Fixed-point rendering with six significant digits; magnitudes outside
/// `[1e-4, 1e15)` fall back to scientific notation.
pub fn format_sig6(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    if x == 0.0 {
        return "0.00000".to_string();
    }
    let mag = x.abs();
    if !(1e-4..1e15).contains(&mag) {
        return format!("{x:.5e}");
    }
    let digits = |d: i32| (5 - d).max(0) as usize;
    let exp = mag.log10().floor() as i32;
    let s = format!("{:.*}", digits(exp), x);
    // rounding can carry into a new leading digit, e.g. 9.999996 -> 10.00000
    let carried: f64 = s.parse::<f64>().map(f64::abs).unwrap_or(mag);
    if carried >= 10f64.powi(exp + 1) {
        format!("{:.*}", digits(exp + 1), x)
    } else {
        s
    }
}
