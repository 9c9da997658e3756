//! Single-stream and two-sample capture-recapture estimators.

use crate::binary::report::{
    wald_interval, Diagnostic, EstimateReport, Interval, IntervalKind, Method, Target,
};
use crate::error::{Error, Result};
use crate::model::{groups, Arm, CellCounts, CondensedCounts};
use crate::stats::z_critical;

fn binomial(
    method: Method,
    arm: Arm,
    hits: u64,
    n: u64,
    level: f64,
    what: &str,
) -> Result<EstimateReport> {
    if n == 0 {
        return Err(Error::NoData(format!("no {what} members for arm {arm}")));
    }
    let p = hits as f64 / n as f64;
    let se = (p * (1.0 - p) / n as f64).sqrt();
    Ok(EstimateReport::new(method, Target::Arm(arm), p).with_wald(se, level))
}

/// Response rate among Stream-2 members randomized to `arm`. No finite
/// population correction.
pub fn rs_estimate(cells: &CellCounts, arm: Arm, level: f64) -> Result<EstimateReport> {
    binomial(
        Method::Rs,
        arm,
        cells.sum(groups::stream2_responders(arm)),
        cells.sum(groups::stream2(arm)),
        level,
        "Stream-2",
    )
}

/// Response rate among Stream-1 members assigned to and receiving `arm`.
pub fn stream1_naive(cells: &CellCounts, arm: Arm, level: f64) -> Result<EstimateReport> {
    binomial(
        Method::Stream1Naive,
        arm,
        cells.sum(groups::stream1_kept_responders(arm)),
        cells.sum(groups::stream1_kept(arm)),
        level,
        "unswitched Stream-1",
    )
}

/// Chapman estimate of the responder proportion with its variance, no interval.
pub fn chapman_estimate(cond: &CondensedCounts) -> Result<EstimateReport> {
    if cond.n_tot_arm == 0 {
        return Err(Error::NoData(format!(
            "effective population for arm {} is empty",
            cond.arm
        )));
    }
    let n = cond.n_tot_arm as f64;
    let m11 = cond.m11 as f64;
    let row = cond.stream1_total() as f64;
    let col = cond.stream2_total() as f64;

    let point = ((row + 1.0) * (col + 1.0) / (m11 + 1.0) - 1.0) / n;
    let variance =
        (row + 1.0) * (col + 1.0) * row * col / ((m11 + 1.0).powi(2) * (m11 + 2.0)) / (n * n);

    let mut report = EstimateReport::new(Method::Chapman, Target::Arm(cond.arm), point);
    report.se = Some(variance.sqrt());
    if point > 1.0 {
        report.flag(Diagnostic::EstimateAboveOne);
    }
    Ok(report)
}

/// Log-transformed interval for the Chapman estimate, anchored at the distinct
/// observed responder count `d`:
/// `d + (N - d) exp(-+ z sigma / (N - d))` on the count scale, divided by `n`.
///
/// When the estimated unseen count `N - d` is not positive, returns a Wald interval
/// truncated to `[d / n, 1]` with [`Diagnostic::LogitFallback`]. An upper bound
/// above 1 is clipped and flagged.
pub fn chapman_logit_ci(
    cond: &CondensedCounts,
    level: f64,
) -> Result<(Interval, Vec<Diagnostic>)> {
    let est = chapman_estimate(cond)?;
    let se = est.se.unwrap_or(0.0);
    let n = cond.n_tot_arm as f64;
    let d = cond.distinct() as f64;
    let n_hat = n * est.point;
    let sigma = n * se;
    let unseen = n_hat - d;

    // N - d = m10 * m01 / (m11 + 1) exactly; guard against rounding residue.
    if unseen <= 1e-9 * d.max(1.0) {
        let floor = (d / n).min(1.0);
        let (mut wald, _) = wald_interval(est.point, se, level, (floor, 1.0));
        wald.lower = wald.lower.min(wald.upper);
        return Ok((wald, vec![Diagnostic::LogitFallback]));
    }

    let spread = (z_critical(level) * sigma / unseen).exp();
    let upper = (d + unseen * spread) / n;
    let mut diagnostics = Vec::new();
    if upper > 1.0 {
        diagnostics.push(Diagnostic::IntervalTruncated);
    }
    Ok((
        Interval {
            kind: IntervalKind::TransformedLogit,
            level,
            lower: ((d + unseen / spread) / n).min(1.0),
            upper: upper.min(1.0),
        },
        diagnostics,
    ))
}

/// Chapman point, se and transformed-logit interval in one report.
pub fn chapman_report(cond: &CondensedCounts, level: f64) -> Result<EstimateReport> {
    let mut report = chapman_estimate(cond)?;
    let (interval, diags) = chapman_logit_ci(cond, level)?;
    report.interval = Some(interval);
    diags.into_iter().for_each(|d| report.flag(d));
    Ok(report)
}
