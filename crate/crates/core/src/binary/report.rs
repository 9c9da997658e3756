use std::fmt;

use serde::{Deserialize, Serialize};

use crate::model::Arm;
use crate::stats::z_critical;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "RS")]
    Rs,
    Chapman,
    #[serde(rename = "CRC")]
    Crc,
    PsiHat,
    Stream1Naive,
    Stream2Only,
    Standardized,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Rs => "RS",
            Method::Chapman => "Chapman",
            Method::Crc => "CRC",
            Method::PsiHat => "PsiHat",
            Method::Stream1Naive => "Stream1Naive",
            Method::Stream2Only => "Stream2Only",
            Method::Standardized => "Standardized",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// An arm mean or the difference between them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Target {
    Arm(Arm),
    Ate,
}

impl Target {
    pub const ALL: [Target; 3] = [Target::Arm(Arm::A), Target::Arm(Arm::B), Target::Ate];

    pub fn as_str(self) -> &'static str {
        match self {
            Target::Arm(Arm::A) => "A",
            Target::Arm(Arm::B) => "B",
            Target::Ate => "ATE",
        }
    }
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Target {
    type Err = crate::Error;

    fn from_str(s: &str) -> crate::Result<Self> {
        match s.trim() {
            "ATE" | "ate" => Ok(Target::Ate),
            other => other.parse().map(Target::Arm),
        }
    }
}

impl Serialize for Target {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for Target {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

impl From<Arm> for Target {
    fn from(arm: Arm) -> Self {
        Target::Arm(arm)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IntervalKind {
    Wald,
    TransformedLogit,
    Credible,
    Percentile,
}

impl IntervalKind {
    pub fn as_str(self) -> &'static str {
        match self {
            IntervalKind::Wald => "wald",
            IntervalKind::TransformedLogit => "transformed-logit",
            IntervalKind::Credible => "credible",
            IntervalKind::Percentile => "percentile",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub kind: IntervalKind,
    pub level: f64,
    pub lower: f64,
    pub upper: f64,
}

impl Interval {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lower <= x && x <= self.upper
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Diagnostic {
    /// Some cell makes a parameter variance degenerate (estimate at 0 or 1).
    DegenerateCell,
    EstimateAboveOne,
    /// Interval clipped to the parameter range.
    IntervalTruncated,
    /// Transformed-logit interval unavailable; truncated Wald used instead.
    LogitFallback,
    /// Some bootstrap resamples were degenerate and redrawn.
    DegenerateResamples,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub method: Method,
    #[serde(rename = "arm")]
    pub target: Target,
    pub point: f64,
    pub se: Option<f64>,
    pub interval: Option<Interval>,
    pub diagnostics: Vec<Diagnostic>,
}

impl EstimateReport {
    pub fn new(method: Method, target: Target, point: f64) -> Self {
        EstimateReport {
            method,
            target,
            point,
            se: None,
            interval: None,
            diagnostics: Vec::new(),
        }
    }

    pub fn flag(&mut self, d: Diagnostic) {
        if !self.diagnostics.contains(&d) {
            self.diagnostics.push(d);
        }
    }

    /// Attaches an se and the matching Wald interval, clipped to the target's range.
    pub fn with_wald(mut self, se: f64, level: f64) -> Self {
        let (interval, clipped) = wald_interval(self.point, se, level, self.target.range());
        self.se = Some(se);
        self.interval = Some(interval);
        if clipped {
            self.flag(Diagnostic::IntervalTruncated);
        }
        self
    }
}

impl Target {
    /// Parameter range used to clip Wald intervals.
    pub fn range(self) -> (f64, f64) {
        match self {
            Target::Arm(_) => (0.0, 1.0),
            Target::Ate => (-1.0, 1.0),
        }
    }
}

/// Wald interval clipped to `range`; the flag reports whether clipping happened.
pub fn wald_interval(point: f64, se: f64, level: f64, range: (f64, f64)) -> (Interval, bool) {
    let half = z_critical(level) * se;
    let (raw_lo, raw_hi) = (point - half, point + half);
    let lower = raw_lo.max(range.0);
    let upper = raw_hi.min(range.1);
    let clipped = lower != raw_lo || upper != raw_hi;
    (
        Interval {
            kind: IntervalKind::Wald,
            level,
            lower: lower.min(upper),
            upper,
        },
        clipped,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn report_json_shape() {
        let r = EstimateReport::new(Method::Rs, Target::Arm(Arm::A), 0.98).with_wald(0.0116, 0.95);
        let v: serde_json::Value = serde_json::to_value(&r).unwrap();
        assert_eq!(v["method"], "RS");
        assert_eq!(v["arm"], "A");
        assert_eq!(v["interval"]["kind"], "wald");
        assert_eq!(v["interval"]["upper"], 1.0);
        assert_eq!(v["diagnostics"][0], "interval-truncated");
        let back: EstimateReport = serde_json::from_value(v).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn ate_target_round_trips() {
        let s = serde_json::to_string(&Target::Ate).unwrap();
        assert_eq!(s, "\"ATE\"");
        assert_eq!(serde_json::from_str::<Target>(&s).unwrap(), Target::Ate);
    }

    #[test]
    fn unclipped_wald_is_symmetric() {
        let (i, clipped) = wald_interval(0.5, 0.1, 0.95, (0.0, 1.0));
        assert!(!clipped);
        assert!(((i.upper - 0.5) - (0.5 - i.lower)).abs() < 1e-15);
        assert!((i.width() - 2.0 * 1.959_963_985 * 0.1).abs() < 1e-8);
    }
}
