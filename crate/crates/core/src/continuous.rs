//! Continuous-outcome means: the direct-standardization estimator, single-stream
//! comparison means, and bootstrap inference over the observed list.
//!
//! For arm A the population splits into three parts: Stream-1 members assigned A
//! (share `phi_a * phi`), Stream-1 members assigned B (share `(1 - phi_a) * phi`) and
//! everyone outside Stream 1 (share `1 - phi`). The randomized anchor sample supplies
//! outcomes for the last two parts; the standardized mean weights the three part
//! means by their estimated shares. Arm B mirrors this.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::binary::{Diagnostic, EstimateReport, Interval, IntervalKind, Method, Target};
use crate::error::{Error, Result};
use crate::model::{Arm, IndividualRecord};
use crate::rng::substream;
use crate::stats::{percentile_bounds, sample_sd};

/// Outcome groups tracked per resample.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Group {
    KeptA = 0,
    SwitchedToA,
    OutsideA,
    KeptB,
    SwitchedToB,
    OutsideB,
    Stream2A,
    Stream2B,
}

const NUM_GROUPS: usize = 8;

impl Group {
    fn parts(arm: Arm) -> [Group; 3] {
        match arm {
            Arm::A => [Group::KeptA, Group::SwitchedToA, Group::OutsideA],
            Arm::B => [Group::KeptB, Group::SwitchedToB, Group::OutsideB],
        }
    }

    fn name(self) -> &'static str {
        match self {
            Group::KeptA => "Stream-1 assigned and received A",
            Group::SwitchedToA => "Stream-1 assigned B, switched to A",
            Group::OutsideA => "outside Stream 1, randomized to A",
            Group::KeptB => "Stream-1 assigned and received B",
            Group::SwitchedToB => "Stream-1 assigned A, switched to B",
            Group::OutsideB => "outside Stream 1, randomized to B",
            Group::Stream2A => "Stream 2 randomized to A",
            Group::Stream2B => "Stream 2 randomized to B",
        }
    }

    fn stream2(arm: Arm) -> Group {
        match arm {
            Arm::A => Group::Stream2A,
            Arm::B => Group::Stream2B,
        }
    }

    fn kept(arm: Arm) -> Group {
        Group::parts(arm)[0]
    }
}

/// An observed member reduced to what the estimators read.
#[derive(Debug, Clone, Copy)]
struct Unit {
    s1: bool,
    s1_assigned_a: bool,
    /// Bitmask over [`Group`].
    groups: u8,
    y: f64,
}

impl Unit {
    fn from_record(r: &IndividualRecord) -> Result<Option<Unit>> {
        r.validate()?;
        if !r.is_observed() {
            return Ok(None);
        }
        let y = r.y_cont.ok_or_else(|| Error::MalformedRecord {
            id: r.id,
            reason: "observed member has no continuous outcome".into(),
        })?;
        let received = r.final_treatment.expect("observed members are treated");
        let part = match (r.t1, r.t2) {
            (Some(t1), _) if t1 == received => 0,
            (Some(_), _) => 1,
            (None, _) => 2,
        };
        let mut groups = 1u8 << (Group::parts(received)[part] as u8);
        if let Some(t2) = r.t2 {
            groups |= 1 << (Group::stream2(t2) as u8);
        }
        Ok(Some(Unit {
            s1: r.s1,
            s1_assigned_a: r.t1 == Some(Arm::A),
            groups,
            y,
        }))
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Tally {
    n_s1: u64,
    n_s1_a: u64,
    count: [u64; NUM_GROUPS],
    sum: [f64; NUM_GROUPS],
}

impl Tally {
    fn add(&mut self, u: &Unit) {
        self.n_s1 += u.s1 as u64;
        self.n_s1_a += u.s1_assigned_a as u64;
        let mut bits = u.groups;
        while bits != 0 {
            let g = bits.trailing_zeros() as usize;
            self.count[g] += 1;
            self.sum[g] += u.y;
            bits &= bits - 1;
        }
    }

    fn mean(&self, g: Group) -> Option<f64> {
        let n = self.count[g as usize];
        (n > 0).then(|| self.sum[g as usize] / n as f64)
    }

    fn inputs(&self, n_tot: f64, arm: Arm) -> Result<StandardizationInputs> {
        if self.n_s1 == 0 {
            return Err(Error::DegenerateCell { parameter: "phi_a" });
        }
        let [kept, switched, outside] = Group::parts(arm);
        let mean = |g: Group| self.mean(g).ok_or(Error::DegenerateStratum(g.name()));
        let phi = self.n_s1 as f64 / n_tot;
        let phi_a = self.n_s1_a as f64 / self.n_s1 as f64;
        let own = match arm {
            Arm::A => phi_a,
            Arm::B => 1.0 - phi_a,
        };
        Ok(StandardizationInputs {
            y_bar_s1_arm: mean(kept)?,
            y_bar_switch_arm: mean(switched)?,
            y_bar_not_s1_arm: mean(outside)?,
            w_s1_arm: own * phi,
            w_switch_arm: (1.0 - own) * phi,
            w_not_s1: 1.0 - phi,
        })
    }

    fn estimate(&self, n_tot: f64, kind: ContinuousEstimator, arm: Arm) -> Option<f64> {
        match kind {
            ContinuousEstimator::Standardized => self.inputs(n_tot, arm).ok().map(|i| i.mean()),
            ContinuousEstimator::Stream2 => self.mean(Group::stream2(arm)),
            ContinuousEstimator::Stream1 => self.mean(Group::kept(arm)),
        }
    }

    fn target(&self, n_tot: f64, kind: ContinuousEstimator, target: Target) -> Option<f64> {
        match target {
            Target::Arm(arm) => self.estimate(n_tot, kind, arm),
            Target::Ate => Some(
                self.estimate(n_tot, kind, Arm::A)? - self.estimate(n_tot, kind, Arm::B)?,
            ),
        }
    }
}

/// Part means and shares entering the standardized mean for one arm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StandardizationInputs {
    pub y_bar_s1_arm: f64,
    pub y_bar_switch_arm: f64,
    pub y_bar_not_s1_arm: f64,
    pub w_s1_arm: f64,
    pub w_switch_arm: f64,
    pub w_not_s1: f64,
}

impl StandardizationInputs {
    pub fn mean(&self) -> f64 {
        self.y_bar_s1_arm * self.w_s1_arm
            + self.y_bar_switch_arm * self.w_switch_arm
            + self.y_bar_not_s1_arm * self.w_not_s1
    }

    pub fn weight_sum(&self) -> f64 {
        self.w_s1_arm + self.w_switch_arm + self.w_not_s1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ContinuousEstimator {
    /// Direct standardization over both streams.
    Standardized,
    /// Mean among Stream-2 members randomized to the arm.
    Stream2,
    /// Mean among Stream-1 members assigned to and receiving the arm.
    Stream1,
}

impl ContinuousEstimator {
    pub fn method(self) -> Method {
        match self {
            ContinuousEstimator::Standardized => Method::Standardized,
            ContinuousEstimator::Stream2 => Method::Stream2Only,
            ContinuousEstimator::Stream1 => Method::Stream1Naive,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapResult {
    pub se: f64,
    pub interval: Interval,
    /// Degenerate resamples that were discarded and redrawn.
    pub n_redrawn: usize,
    pub replicates: Vec<f64>,
}

impl BootstrapResult {
    /// Attaches se, percentile interval and the redraw diagnostic to a point report.
    pub fn apply(&self, mut report: EstimateReport) -> EstimateReport {
        report.se = Some(self.se);
        report.interval = Some(self.interval);
        if self.n_redrawn > 0 {
            report.flag(Diagnostic::DegenerateResamples);
        }
        report
    }
}

/// Observed members with continuous outcomes, ready for repeated estimation.
#[derive(Debug, Clone)]
pub struct ContinuousData {
    units: Vec<Unit>,
    n_tot: u64,
    full: Tally,
}

impl ContinuousData {
    pub fn from_records(records: &[IndividualRecord], n_tot: u64) -> Result<Self> {
        let mut units = Vec::with_capacity(records.len());
        for r in records {
            if let Some(u) = Unit::from_record(r)? {
                units.push(u);
            }
        }
        if units.len() as u64 > n_tot {
            return Err(Error::Inconsistent(format!(
                "{} observed members exceed n_tot = {n_tot}",
                units.len()
            )));
        }
        let mut full = Tally::default();
        units.iter().for_each(|u| full.add(u));
        Ok(ContinuousData { units, n_tot, full })
    }

    pub fn n_observed(&self) -> usize {
        self.units.len()
    }

    pub fn inputs(&self, arm: Arm) -> Result<StandardizationInputs> {
        self.full.inputs(self.n_tot as f64, arm)
    }

    pub fn point(&self, kind: ContinuousEstimator, target: Target) -> Result<f64> {
        match (kind, target) {
            (ContinuousEstimator::Standardized, Target::Arm(arm)) => Ok(self.inputs(arm)?.mean()),
            (_, Target::Arm(arm)) => {
                let g = match kind {
                    ContinuousEstimator::Stream2 => Group::stream2(arm),
                    _ => Group::kept(arm),
                };
                self.full
                    .mean(g)
                    .ok_or_else(|| Error::NoData(format!("{} is empty", g.name())))
            }
            (_, Target::Ate) => Ok(self.point(kind, Target::Arm(Arm::A))?
                - self.point(kind, Target::Arm(Arm::B))?),
        }
    }

    pub fn report(&self, kind: ContinuousEstimator, target: Target) -> Result<EstimateReport> {
        Ok(EstimateReport::new(kind.method(), target, self.point(kind, target)?))
    }

    /// Bootstraps several estimators over one stream of resamples. Attempt `k` uses
    /// substream `k` of `seed`; each estimator keeps its first `m` non-degenerate
    /// resamples, so the result for any one estimator equals a solo run.
    pub fn bootstrap(
        &self,
        specs: &[(ContinuousEstimator, Target)],
        m: usize,
        level: f64,
        seed: u64,
    ) -> Result<Vec<Result<BootstrapResult>>> {
        if m < 2 {
            return Err(Error::invalid("bootstrap size", "need at least 2 resamples"));
        }
        if self.units.is_empty() {
            return Err(Error::NoData("no observed members to resample".into()));
        }
        let n_tot = self.n_tot as f64;
        let n_obs = self.units.len();

        let mut kept: Vec<Vec<f64>> = specs.iter().map(|_| Vec::with_capacity(m)).collect();
        let mut rejected = vec![0usize; specs.len()];
        let mut done = vec![false; specs.len()];
        let mut attempt = 0u64;

        while done.iter().any(|d| !d) {
            let mut rng = substream(seed, attempt);
            attempt += 1;
            let mut tally = Tally::default();
            for _ in 0..n_obs {
                tally.add(&self.units[rng.random_range(0..n_obs)]);
            }
            for (i, &(kind, target)) in specs.iter().enumerate() {
                if done[i] {
                    continue;
                }
                match tally.target(n_tot, kind, target) {
                    Some(v) => kept[i].push(v),
                    None => rejected[i] += 1,
                }
                done[i] = kept[i].len() == m || rejected[i] > m;
            }
        }

        Ok(kept
            .into_iter()
            .zip(rejected)
            .map(|(values, rejected)| {
                if rejected > m {
                    return Err(Error::BootstrapFailure {
                        rejected,
                        attempts: rejected + values.len(),
                    });
                }
                let se = sample_sd(&values).unwrap_or(0.0);
                let mut sorted = values.clone();
                let (lower, upper) = percentile_bounds(&mut sorted, level);
                Ok(BootstrapResult {
                    se,
                    interval: Interval {
                        kind: IntervalKind::Percentile,
                        level,
                        lower,
                        upper,
                    },
                    n_redrawn: rejected,
                    replicates: values,
                })
            })
            .collect())
    }
}

pub fn standardization_inputs(
    records: &[IndividualRecord],
    n_tot: u64,
    arm: Arm,
) -> Result<StandardizationInputs> {
    ContinuousData::from_records(records, n_tot)?.inputs(arm)
}

/// Direct-standardization mean for `arm`; no se (see [`bootstrap_ci`]).
pub fn standardized_mean(
    records: &[IndividualRecord],
    n_tot: u64,
    arm: Arm,
) -> Result<EstimateReport> {
    ContinuousData::from_records(records, n_tot)?
        .report(ContinuousEstimator::Standardized, Target::Arm(arm))
}

/// Mean outcome among Stream-2 members randomized to `arm`.
pub fn stream2_mean(records: &[IndividualRecord], arm: Arm) -> Result<EstimateReport> {
    single_stream(records, ContinuousEstimator::Stream2, arm)
}

/// Mean outcome among Stream-1 members assigned to and receiving `arm`.
pub fn stream1_mean(records: &[IndividualRecord], arm: Arm) -> Result<EstimateReport> {
    single_stream(records, ContinuousEstimator::Stream1, arm)
}

fn single_stream(
    records: &[IndividualRecord],
    kind: ContinuousEstimator,
    arm: Arm,
) -> Result<EstimateReport> {
    let observed = records.iter().filter(|r| r.is_observed()).count() as u64;
    ContinuousData::from_records(records, observed.max(1))?.report(kind, Target::Arm(arm))
}

pub fn bootstrap_ci(
    records: &[IndividualRecord],
    n_tot: u64,
    kind: ContinuousEstimator,
    target: Target,
    m: usize,
    level: f64,
    seed: u64,
) -> Result<BootstrapResult> {
    ContinuousData::from_records(records, n_tot)?
        .bootstrap(&[(kind, target)], m, level, seed)?
        .pop()
        .expect("one spec requested")
}
