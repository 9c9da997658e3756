//! Population records, the 17-cell observation table, and its multinomial cell model.
//!
//! Cells are numbered `c1..c17`. Cell `j` sits at index `j - 1` of every array in this crate.
//!
//! | cells   | Stream 1        | Stream 2          |
//! |---------|-----------------|-------------------|
//! | c1, c2  | assigned A      | randomized to A   |
//! | c3, c4  | assigned A      | not sampled       |
//! | c5, c6  | assigned B      | switched to A     |
//! | c7, c8  | assigned B      | randomized to B   |
//! | c9, c10 | assigned B      | not sampled       |
//! | c11, c12| assigned A      | switched to B     |
//! | c13, c14| not sampled     | randomized to A   |
//! | c15, c16| not sampled     | randomized to B   |
//! | c17     | not sampled     | not sampled       |
//!
//! Within each observed pair the odd cell holds responders (`y = 1`).

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const NUM_CELLS: usize = 17;

/// Cell-indexed vector of counts or proportions.
pub type CellVector = [f64; NUM_CELLS];

/// Treatment arm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Arm {
    A,
    B,
}

impl Arm {
    pub const BOTH: [Arm; 2] = [Arm::A, Arm::B];

    pub fn other(self) -> Arm {
        match self {
            Arm::A => Arm::B,
            Arm::B => Arm::A,
        }
    }
}

impl fmt::Display for Arm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Arm::A => "A",
            Arm::B => "B",
        })
    }
}

impl FromStr for Arm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "A" | "a" => Ok(Arm::A),
            "B" | "b" => Ok(Arm::B),
            other => Err(Error::invalid("arm", format!("expected \"A\" or \"B\", got {other:?}"))),
        }
    }
}

/// Cell groups (1-based cell numbers) shared by the estimators.
pub(crate) mod groups {
    use super::Arm;

    /// Stream-2 members randomized to the arm.
    pub fn stream2(arm: Arm) -> &'static [usize] {
        match arm {
            Arm::A => &[1, 2, 5, 6, 13, 14],
            Arm::B => &[7, 8, 11, 12, 15, 16],
        }
    }

    pub fn stream2_responders(arm: Arm) -> &'static [usize] {
        match arm {
            Arm::A => &[1, 5, 13],
            Arm::B => &[7, 11, 15],
        }
    }

    /// Stream-1 members assigned to the arm who also received it.
    pub fn stream1_kept(arm: Arm) -> &'static [usize] {
        match arm {
            Arm::A => &[1, 2, 3, 4],
            Arm::B => &[7, 8, 9, 10],
        }
    }

    pub fn stream1_kept_responders(arm: Arm) -> &'static [usize] {
        match arm {
            Arm::A => &[1, 3],
            Arm::B => &[7, 9],
        }
    }

    /// Stream-1 members assigned to the other arm and switched to this one.
    pub fn switched_in(arm: Arm) -> &'static [usize] {
        match arm {
            Arm::A => &[5, 6],
            Arm::B => &[11, 12],
        }
    }

    /// Members outside Stream 1 randomized to the arm.
    pub fn outside_stream1(arm: Arm) -> &'static [usize] {
        match arm {
            Arm::A => &[13, 14],
            Arm::B => &[15, 16],
        }
    }

    /// All Stream-1 members assigned to the arm by their provider.
    pub fn stream1_assigned(arm: Arm) -> &'static [usize] {
        match arm {
            Arm::A => &[1, 2, 3, 4, 11, 12],
            Arm::B => &[5, 6, 7, 8, 9, 10],
        }
    }

    pub const STREAM1: &[usize] = &[1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12];
}

/// Sum of the given 1-based cells.
pub(crate) fn sum_cells(v: &CellVector, cells: &[usize]) -> f64 {
    cells.iter().map(|&j| v[j - 1]).sum()
}

/// One member of the target population.
#[derive(Debug, Clone, PartialEq)]
pub struct IndividualRecord {
    pub id: u64,
    pub stratum: u32,
    pub s1: bool,
    pub t1: Option<Arm>,
    pub s2: bool,
    pub t2: Option<Arm>,
    pub final_treatment: Option<Arm>,
    pub y: Option<bool>,
    pub y_cont: Option<f64>,
}

impl IndividualRecord {
    /// Builds a record, deriving the final treatment from the label-switching rule.
    pub fn new(
        id: u64,
        stratum: u32,
        t1: Option<Arm>,
        t2: Option<Arm>,
        y: Option<bool>,
        y_cont: Option<f64>,
    ) -> Self {
        IndividualRecord {
            id,
            stratum,
            s1: t1.is_some(),
            t1,
            s2: t2.is_some(),
            t2,
            final_treatment: t2.or(t1),
            y,
            y_cont,
        }
    }

    pub fn is_observed(&self) -> bool {
        self.s1 || self.s2
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |reason: &str| {
            Err(Error::MalformedRecord {
                id: self.id,
                reason: reason.to_string(),
            })
        };
        if self.t1.is_some() != self.s1 {
            return bad("t1 must be present exactly when s1 = 1");
        }
        if self.t2.is_some() != self.s2 {
            return bad("t2 must be present exactly when s2 = 1");
        }
        if self.final_treatment != self.t2.or(self.t1) {
            return bad("final treatment must equal t2 when sampled in Stream 2, else t1");
        }
        if self.y.is_some() != self.final_treatment.is_some() {
            return bad("y must be present exactly when a treatment was received");
        }
        if self.y_cont.is_some() && self.final_treatment.is_none() {
            return bad("y_cont present for an untreated member");
        }
        if let Some(v) = self.y_cont {
            if !v.is_finite() {
                return bad("y_cont must be finite");
            }
        }
        Ok(())
    }

    /// 1-based cell for this record. Unobserved members map to c17.
    pub fn cell(&self) -> Result<usize> {
        self.validate()?;
        let miss = |j: usize| if self.y == Some(true) { j } else { j + 1 };
        Ok(match (self.t1, self.t2) {
            (Some(Arm::A), Some(Arm::A)) => miss(1),
            (Some(Arm::A), None) => miss(3),
            (Some(Arm::B), Some(Arm::A)) => miss(5),
            (Some(Arm::B), Some(Arm::B)) => miss(7),
            (Some(Arm::B), None) => miss(9),
            (Some(Arm::A), Some(Arm::B)) => miss(11),
            (None, Some(Arm::A)) => miss(13),
            (None, Some(Arm::B)) => miss(15),
            (None, None) => 17,
        })
    }
}

/// Counts for the 17 observation cells plus the known population size.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawCellCounts", into = "RawCellCounts")]
pub struct CellCounts {
    cells: [u64; NUM_CELLS],
    n_tot: u64,
}

#[derive(Serialize, Deserialize)]
struct RawCellCounts {
    n_tot: u64,
    cells: Vec<u64>,
}

impl TryFrom<RawCellCounts> for CellCounts {
    type Error = Error;

    fn try_from(raw: RawCellCounts) -> Result<Self> {
        let cells: [u64; NUM_CELLS] = raw.cells.as_slice().try_into().map_err(|_| {
            Error::invalid(
                "cells",
                format!("expected {NUM_CELLS} counts, got {}", raw.cells.len()),
            )
        })?;
        CellCounts::new(cells, raw.n_tot)
    }
}

impl From<CellCounts> for RawCellCounts {
    fn from(c: CellCounts) -> Self {
        RawCellCounts {
            n_tot: c.n_tot,
            cells: c.cells.to_vec(),
        }
    }
}

impl CellCounts {
    pub fn new(cells: [u64; NUM_CELLS], n_tot: u64) -> Result<Self> {
        if n_tot == 0 {
            return Err(Error::invalid("n_tot", "must be positive"));
        }
        let total: u64 = cells.iter().sum();
        if total != n_tot {
            return Err(Error::Inconsistent(format!(
                "cell counts sum to {total} but n_tot is {n_tot}"
            )));
        }
        Ok(CellCounts { cells, n_tot })
    }

    /// Builds the table from the 16 observed cells; c17 is whatever remains of `n_tot`.
    pub fn from_observed(observed: [u64; NUM_CELLS - 1], n_tot: u64) -> Result<Self> {
        let seen: u64 = observed.iter().sum();
        if seen > n_tot {
            return Err(Error::Inconsistent(format!(
                "{seen} observed members exceed n_tot = {n_tot}"
            )));
        }
        let mut cells = [0; NUM_CELLS];
        cells[..NUM_CELLS - 1].copy_from_slice(&observed);
        cells[NUM_CELLS - 1] = n_tot - seen;
        CellCounts::new(cells, n_tot)
    }

    /// Count in 1-based cell `j`.
    pub fn get(&self, j: usize) -> u64 {
        self.cells[j - 1]
    }

    pub fn cells(&self) -> &[u64; NUM_CELLS] {
        &self.cells
    }

    pub fn n_tot(&self) -> u64 {
        self.n_tot
    }

    pub fn as_f64(&self) -> CellVector {
        self.cells.map(|c| c as f64)
    }

    /// Cell proportions `c_j / n_tot`.
    pub fn proportions(&self) -> CellVector {
        let n = self.n_tot as f64;
        self.cells.map(|c| c as f64 / n)
    }

    pub(crate) fn sum(&self, cells: &[usize]) -> u64 {
        cells.iter().map(|&j| self.cells[j - 1]).sum()
    }

    /// Parses `{"n_tot": .., "cells": [..]}`. Schema errors come back as JSON errors;
    /// a table that fails conservation keeps its own error variant.
    pub fn from_json_reader(r: impl Read) -> Result<Self> {
        let raw: RawCellCounts = serde_json::from_reader(r)?;
        raw.try_into()
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        Self::from_json_reader(s.as_bytes())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("cell counts serialize")
    }

    /// One synthetic record per cell occupant, unobserved members included.
    pub fn expand(&self) -> Vec<IndividualRecord> {
        use Arm::{A, B};
        let kinds: [(Option<Arm>, Option<Arm>); 8] = [
            (Some(A), Some(A)),
            (Some(A), None),
            (Some(B), Some(A)),
            (Some(B), Some(B)),
            (Some(B), None),
            (Some(A), Some(B)),
            (None, Some(A)),
            (None, Some(B)),
        ];
        let mut out = Vec::with_capacity(self.n_tot as usize);
        let mut id = 0u64;
        for (k, &(t1, t2)) in kinds.iter().enumerate() {
            for (offset, y) in [(0, true), (1, false)] {
                for _ in 0..self.cells[2 * k + offset] {
                    out.push(IndividualRecord::new(id, 1, t1, t2, Some(y), None));
                    id += 1;
                }
            }
        }
        for _ in 0..self.cells[NUM_CELLS - 1] {
            out.push(IndividualRecord::new(id, 1, None, None, None, None));
            id += 1;
        }
        out
    }
}

/// Maps every observed record to its cell. Unobserved records are ignored; c17 is
/// `n_tot` minus the number of observed records.
pub fn tabulate_cells(records: &[IndividualRecord], n_tot: u64) -> Result<CellCounts> {
    let mut observed = [0u64; NUM_CELLS - 1];
    for r in records {
        let j = r.cell()?;
        if j < NUM_CELLS {
            observed[j - 1] += 1;
        }
    }
    CellCounts::from_observed(observed, n_tot)
}

/// Two-stream responder table for a single arm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CondensedCounts {
    pub arm: Arm,
    /// Responders captured by both streams.
    pub m11: u64,
    /// Responders captured by Stream 1 only.
    pub m10: u64,
    /// Responders captured by Stream 2 only.
    pub m01: u64,
    /// Effective population: everyone except those randomized to the other arm.
    pub n_tot_arm: u64,
}

impl CondensedCounts {
    pub fn stream1_total(&self) -> u64 {
        self.m11 + self.m10
    }

    pub fn stream2_total(&self) -> u64 {
        self.m11 + self.m01
    }

    /// Distinct responders seen by at least one stream.
    pub fn distinct(&self) -> u64 {
        self.m11 + self.m10 + self.m01
    }
}

pub fn condense(cells: &CellCounts, arm: Arm) -> CondensedCounts {
    let (m11, m10, m01) = match arm {
        Arm::A => (cells.get(1), cells.get(3), cells.get(5) + cells.get(13)),
        Arm::B => (cells.get(7), cells.get(9), cells.get(11) + cells.get(15)),
    };
    CondensedCounts {
        arm,
        m11,
        m10,
        m01,
        n_tot_arm: cells.n_tot() - cells.sum(groups::stream2(arm.other())),
    }
}

/// Parameters of the 17-cell multinomial model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DesignParams {
    /// Stream-2 sampling rate.
    pub psi: f64,
    /// Share of Stream 2 randomized to A.
    pub xi_a: f64,
    /// Stream-1 inclusion probability.
    pub phi: f64,
    /// P(assigned A | Stream 1).
    pub phi_a: f64,
    pub pi_s1_a: f64,
    pub pi_s1b_a: f64,
    pub pi_na_a: f64,
    pub pi_s1_b: f64,
    pub pi_s1a_b: f64,
    pub pi_na_b: f64,
}

impl DesignParams {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("psi", self.psi),
            ("xi_a", self.xi_a),
            ("phi", self.phi),
            ("phi_a", self.phi_a),
            ("pi_s1_a", self.pi_s1_a),
            ("pi_s1b_a", self.pi_s1b_a),
            ("pi_na_a", self.pi_na_a),
            ("pi_s1_b", self.pi_s1_b),
            ("pi_s1a_b", self.pi_s1a_b),
            ("pi_na_b", self.pi_na_b),
        ];
        for (name, v) in fields {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::invalid(name, format!("{v} is not a probability")));
            }
        }
        Ok(())
    }
}

/// Multinomial cell probabilities `p1..p17` implied by the design parameters.
pub fn cell_probabilities(p: &DesignParams) -> CellVector {
    let DesignParams {
        psi,
        xi_a,
        phi,
        phi_a,
        ..
    } = *p;
    let xi_b = 1.0 - xi_a;
    let a_side = phi_a * phi;
    let b_side = (1.0 - phi_a) * phi;
    let outside = 1.0 - phi;
    let pair = |share: f64, pi: f64| [share * pi, share * (1.0 - pi)];

    let mut out = [0.0; NUM_CELLS];
    let blocks = [
        pair(xi_a * psi * a_side, p.pi_s1_a),
        pair((1.0 - psi) * a_side, p.pi_s1_a),
        pair(xi_a * psi * b_side, p.pi_s1b_a),
        pair(xi_b * psi * b_side, p.pi_s1_b),
        pair((1.0 - psi) * b_side, p.pi_s1_b),
        pair(xi_b * psi * a_side, p.pi_s1a_b),
        pair(xi_a * psi * outside, p.pi_na_a),
        pair(xi_b * psi * outside, p.pi_na_b),
    ];
    for (k, block) in blocks.iter().enumerate() {
        out[2 * k] = block[0];
        out[2 * k + 1] = block[1];
    }
    out[NUM_CELLS - 1] = (1.0 - psi) * outside;
    out
}

#[derive(Debug, Serialize, Deserialize)]
struct RecordRow {
    id: u64,
    stratum: u32,
    s1: u8,
    t1: Option<Arm>,
    s2: u8,
    t2: Option<Arm>,
    y: Option<u8>,
    y_cont: Option<f64>,
}

fn flag(id: u64, name: &str, v: u8) -> Result<bool> {
    match v {
        0 => Ok(false),
        1 => Ok(true),
        _ => Err(Error::MalformedRecord {
            id,
            reason: format!("{name} must be 0 or 1, got {v}"),
        }),
    }
}

impl TryFrom<RecordRow> for IndividualRecord {
    type Error = Error;

    fn try_from(row: RecordRow) -> Result<Self> {
        let rec = IndividualRecord {
            id: row.id,
            stratum: row.stratum,
            s1: flag(row.id, "s1", row.s1)?,
            t1: row.t1,
            s2: flag(row.id, "s2", row.s2)?,
            t2: row.t2,
            final_treatment: row.t2.or(row.t1),
            y: row.y.map(|v| flag(row.id, "y", v)).transpose()?,
            y_cont: row.y_cont,
        };
        rec.validate()?;
        Ok(rec)
    }
}

/// Reads records from CSV with header `id,stratum,s1,t1,s2,t2,y,y_cont`.
pub fn read_records_csv(r: impl Read) -> Result<Vec<IndividualRecord>> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
    let headers = reader.headers()?.clone();
    let expected = ["id", "stratum", "s1", "t1", "s2", "t2", "y", "y_cont"];
    if headers.iter().ne(expected.iter().copied()) {
        return Err(Error::invalid(
            "header",
            format!("expected {}", expected.join(",")),
        ));
    }
    reader
        .deserialize::<RecordRow>()
        .map(|row| IndividualRecord::try_from(row?))
        .collect()
}

pub fn write_records_csv(records: &[IndividualRecord], w: impl Write) -> Result<()> {
    let mut writer = csv::Writer::from_writer(w);
    for r in records {
        writer.serialize(RecordRow {
            id: r.id,
            stratum: r.stratum,
            s1: r.s1 as u8,
            t1: r.t1,
            s2: r.s2 as u8,
            t2: r.t2,
            y: r.y.map(u8::from),
            y_cont: r.y_cont,
        })?;
    }
    writer.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::tunisia;
    use proptest::prelude::*;

    fn params_strategy() -> impl Strategy<Value = DesignParams> {
        prop::array::uniform10(0.0f64..=1.0).prop_map(|v| DesignParams {
            psi: v[0],
            xi_a: v[1],
            phi: v[2],
            phi_a: v[3],
            pi_s1_a: v[4],
            pi_s1b_a: v[5],
            pi_na_a: v[6],
            pi_s1_b: v[7],
            pi_s1a_b: v[8],
            pi_na_b: v[9],
        })
    }

    fn cells_strategy() -> impl Strategy<Value = CellCounts> {
        prop::array::uniform17(0u64..40).prop_map(|cells| {
            let n: u64 = cells.iter().sum::<u64>().max(1);
            let mut cells = cells;
            if cells.iter().all(|&c| c == 0) {
                cells[16] = 1;
            }
            CellCounts::new(cells, n).unwrap()
        })
    }

    #[test]
    fn switched_record_lands_in_c11() {
        let r = IndividualRecord::new(0, 1, Some(Arm::A), Some(Arm::B), Some(true), None);
        let cells = tabulate_cells(&[r], 1).unwrap();
        let mut expected = [0; NUM_CELLS];
        expected[10] = 1;
        assert_eq!(cells.cells(), &expected);
    }

    #[test]
    fn table_examples_map_to_documented_cells() {
        let r = IndividualRecord::new(3, 2, Some(Arm::B), None, Some(false), None);
        assert_eq!(r.cell().unwrap(), 10);
        let r = IndividualRecord::new(4, 2, None, Some(Arm::B), Some(true), None);
        assert_eq!(r.cell().unwrap(), 15);
        let r = IndividualRecord::new(5, 1, Some(Arm::A), Some(Arm::A), Some(true), None);
        assert_eq!(r.cell().unwrap(), 1);
    }

    #[test]
    fn empty_records_put_everyone_in_c17() {
        let cells = tabulate_cells(&[], 5).unwrap();
        assert_eq!(cells.get(17), 5);
        assert_eq!(cells.cells()[..16].iter().sum::<u64>(), 0);
    }

    #[test]
    fn malformed_record_reports_its_id() {
        let mut r = IndividualRecord::new(42, 1, Some(Arm::A), None, Some(true), None);
        r.s1 = false;
        match tabulate_cells(&[r], 10) {
            Err(Error::MalformedRecord { id, .. }) => assert_eq!(id, 42),
            other => panic!("unexpected {other:?}"),
        }
        let mut r = IndividualRecord::new(7, 1, None, Some(Arm::B), Some(true), None);
        r.y = None;
        assert!(matches!(r.validate(), Err(Error::MalformedRecord { id: 7, .. })));
    }

    #[test]
    fn too_many_observed_records_is_inconsistent() {
        let recs: Vec<_> = (0..3)
            .map(|i| IndividualRecord::new(i, 1, Some(Arm::A), None, Some(true), None))
            .collect();
        assert!(matches!(tabulate_cells(&recs, 2), Err(Error::Inconsistent(_))));
    }

    #[test]
    fn cells_must_sum_to_n_tot() {
        assert!(matches!(
            CellCounts::new([1; NUM_CELLS], 16),
            Err(Error::Inconsistent(_))
        ));
        let err = CellCounts::from_json_str(r#"{"n_tot": 3, "cells": [1,2]}"#).unwrap_err();
        assert!(err.to_string().contains("17"));
    }

    #[test]
    fn json_schema_round_trips() {
        let t = tunisia();
        let json = t.to_json();
        assert!(json.starts_with(r#"{"n_tot":2000,"cells":[12,1,281"#));
        assert_eq!(CellCounts::from_json_str(&json).unwrap(), t);
    }

    #[test]
    fn condense_tunisia() {
        let t = tunisia();
        let a = condense(&t, Arm::A);
        assert_eq!((a.m11, a.m10, a.m01, a.n_tot_arm), (12, 281, 73, 1917));
        let b = condense(&t, Arm::B);
        assert_eq!((b.m11, b.m10, b.m01, b.n_tot_arm), (18, 490, 53, 1914));
    }

    #[test]
    fn condense_nobody_observed() {
        let mut cells = [0; NUM_CELLS];
        cells[16] = 9;
        let c = CellCounts::new(cells, 9).unwrap();
        for arm in Arm::BOTH {
            let k = condense(&c, arm);
            assert_eq!((k.m11, k.m10, k.m01, k.n_tot_arm), (0, 0, 0, 9));
        }
    }

    #[test]
    fn p17_for_simulation_scenario() {
        let p = DesignParams {
            psi: 0.1,
            xi_a: 0.5,
            phi: 0.82,
            phi_a: 0.3,
            pi_s1_a: 0.2,
            pi_s1b_a: 0.4,
            pi_na_a: 0.6,
            pi_s1_b: 0.8,
            pi_s1a_b: 0.1,
            pi_na_b: 0.9,
        };
        let probs = cell_probabilities(&p);
        assert!((probs[16] - 0.9 * 0.18).abs() < 1e-15);
        assert!((probs[4] - 0.5 * 0.1 * 0.4 * 0.7 * 0.82).abs() < 1e-15);
    }

    #[test]
    fn no_stream2_cells_without_sampling() {
        let p = DesignParams {
            psi: 0.0,
            xi_a: 0.3,
            phi: 0.6,
            phi_a: 0.5,
            pi_s1_a: 0.5,
            pi_s1b_a: 0.5,
            pi_na_a: 0.5,
            pi_s1_b: 0.5,
            pi_s1a_b: 0.5,
            pi_na_b: 0.5,
        };
        let probs = cell_probabilities(&p);
        for j in [1, 2, 5, 6, 7, 8, 11, 12, 13, 14, 15, 16] {
            assert_eq!(probs[j - 1], 0.0, "p{j}");
        }
    }

    #[test]
    fn csv_round_trip_preserves_records() {
        let recs = vec![
            IndividualRecord::new(0, 1, Some(Arm::A), Some(Arm::B), Some(true), Some(3.5)),
            IndividualRecord::new(1, 2, None, None, None, None),
            IndividualRecord::new(2, 2, None, Some(Arm::A), Some(false), None),
        ];
        let mut buf = Vec::new();
        write_records_csv(&recs, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("id,stratum,s1,t1,s2,t2,y,y_cont\n0,1,1,A,1,B,1,3.5\n1,2,0,,0,,,\n"));
        assert_eq!(read_records_csv(buf.as_slice()).unwrap(), recs);
    }

    #[test]
    fn csv_rejects_bad_flags_and_inconsistent_rows() {
        let text = "id,stratum,s1,t1,s2,t2,y,y_cont\n9,1,2,A,0,,1,\n";
        assert!(matches!(
            read_records_csv(text.as_bytes()),
            Err(Error::MalformedRecord { id: 9, .. })
        ));
        let text = "id,stratum,s1,t1,s2,t2,y,y_cont\n4,1,1,,0,,1,\n";
        assert!(matches!(
            read_records_csv(text.as_bytes()),
            Err(Error::MalformedRecord { id: 4, .. })
        ));
    }

    #[test]
    fn probability_closure_over_fuzzed_params() {
        // Fixed-seed sweep of 10^4 parameter sets.
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10_000 {
            let mut v = [0.0; 10];
            v.iter_mut().for_each(|x| *x = rng.random::<f64>());
            let p = DesignParams {
                psi: v[0],
                xi_a: v[1],
                phi: v[2],
                phi_a: v[3],
                pi_s1_a: v[4],
                pi_s1b_a: v[5],
                pi_na_a: v[6],
                pi_s1_b: v[7],
                pi_s1a_b: v[8],
                pi_na_b: v[9],
            };
            let probs = cell_probabilities(&p);
            assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(probs.iter().all(|x| (0.0..=1.0).contains(x)));
        }
    }

    proptest! {
        #[test]
        fn cell_probabilities_sum_to_one(p in params_strategy()) {
            let probs = cell_probabilities(&p);
            prop_assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn expand_then_tabulate_is_identity(cells in cells_strategy()) {
            let recs = cells.expand();
            let back = tabulate_cells(&recs, cells.n_tot()).unwrap();
            prop_assert_eq!(back.cells().iter().sum::<u64>(), cells.n_tot());
            prop_assert_eq!(back, cells);
        }

        #[test]
        fn condensed_stream1_matches_kept_responders(cells in cells_strategy()) {
            let a = condense(&cells, Arm::A);
            prop_assert_eq!(a.m11 + a.m10, cells.get(1) + cells.get(3));
            let b = condense(&cells, Arm::B);
            prop_assert_eq!(b.m11 + b.m10, cells.get(7) + cells.get(9));
            prop_assert!(a.distinct() <= a.n_tot_arm && b.distinct() <= b.n_tot_arm);
        }
    }
}
