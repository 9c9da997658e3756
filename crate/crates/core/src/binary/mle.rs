//! Closed-form multinomial MLEs and the estimators built from them.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{groups, sum_cells, Arm, CellCounts, CellVector, DesignParams, NUM_CELLS};

/// A binomial-type proportion `estimate = hits / denominator`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Proportion {
    pub estimate: f64,
    pub denominator: f64,
}

impl Proportion {
    fn from_counts(hits: f64, denominator: f64) -> Self {
        Proportion {
            estimate: hits / denominator,
            denominator,
        }
    }

    pub fn variance(&self) -> f64 {
        self.estimate * (1.0 - self.estimate) / self.denominator
    }
}

pub const PARAMETER_NAMES: [&str; 8] = [
    "phi", "phi_a", "pi_s1_a", "pi_s1b_a", "pi_na_a", "pi_s1_b", "pi_s1a_b", "pi_na_b",
];

/// The eight closed-form MLEs. Their sampling covariances are all zero.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MLEstimates {
    /// Stream-1 inclusion.
    pub phi: Proportion,
    /// A-assignment among Stream 1.
    pub phi_a: Proportion,
    /// Response: assigned and received A.
    pub pi_s1_a: Proportion,
    /// Response: assigned B, switched to A.
    pub pi_s1b_a: Proportion,
    /// Response: outside Stream 1, randomized to A.
    pub pi_na_a: Proportion,
    pub pi_s1_b: Proportion,
    pub pi_s1a_b: Proportion,
    pub pi_na_b: Proportion,
    /// Stream-1 size.
    pub n1: u64,
    /// Stream-1 members assigned A.
    pub n1_a: u64,
    /// Parameters whose estimate sits at 0 or 1, so the variance degenerates to zero.
    pub degenerate: Vec<&'static str>,
}

impl MLEstimates {
    /// Parameters in [`PARAMETER_NAMES`] order.
    pub fn params(&self) -> [Proportion; 8] {
        [
            self.phi,
            self.phi_a,
            self.pi_s1_a,
            self.pi_s1b_a,
            self.pi_na_a,
            self.pi_s1_b,
            self.pi_s1a_b,
            self.pi_na_b,
        ]
    }

    pub fn variances(&self) -> [f64; 8] {
        self.params().map(|p| p.variance())
    }

    /// Plugs the estimates into the cell model together with the known design rates.
    pub fn to_design_params(&self, psi: f64, xi_a: f64) -> DesignParams {
        DesignParams {
            psi,
            xi_a,
            phi: self.phi.estimate,
            phi_a: self.phi_a.estimate,
            pi_s1_a: self.pi_s1_a.estimate,
            pi_s1b_a: self.pi_s1b_a.estimate,
            pi_na_a: self.pi_na_a.estimate,
            pi_s1_b: self.pi_s1_b.estimate,
            pi_s1a_b: self.pi_s1a_b.estimate,
            pi_na_b: self.pi_na_b.estimate,
        }
    }
}

/// Stream-1 inclusion `phi = N1 / n_tot` and A-assignment share `phi_a = N1A / N1`.
/// These need no outcome cells, so they exist whenever Stream 1 is non-empty.
pub fn stream1_shares(cells: &CellCounts) -> Result<(Proportion, Proportion)> {
    let v = cells.as_f64();
    let n1 = sum_cells(&v, groups::STREAM1);
    if n1 <= 0.0 {
        return Err(Error::DegenerateCell { parameter: "phi_a" });
    }
    let n1_a = sum_cells(&v, groups::stream1_assigned(Arm::A));
    Ok((
        Proportion::from_counts(n1, cells.n_tot() as f64),
        Proportion::from_counts(n1_a, n1),
    ))
}

pub fn mle_params(cells: &CellCounts) -> Result<MLEstimates> {
    let v = cells.as_f64();
    let ratio = |name: &'static str, hits: &[usize], den: &[usize]| {
        let d = sum_cells(&v, den);
        if d <= 0.0 {
            Err(Error::DegenerateCell { parameter: name })
        } else {
            Ok(Proportion::from_counts(sum_cells(&v, hits), d))
        }
    };

    let (phi, phi_a) = stream1_shares(cells)?;

    let mut est = MLEstimates {
        phi,
        phi_a,
        pi_s1_a: ratio("pi_s1_a", &[1, 3], &[1, 2, 3, 4])?,
        pi_s1b_a: ratio("pi_s1b_a", &[5], &[5, 6])?,
        pi_na_a: ratio("pi_na_a", &[13], &[13, 14])?,
        pi_s1_b: ratio("pi_s1_b", &[7, 9], &[7, 8, 9, 10])?,
        pi_s1a_b: ratio("pi_s1a_b", &[11], &[11, 12])?,
        pi_na_b: ratio("pi_na_b", &[15], &[15, 16])?,
        n1: cells.sum(groups::STREAM1),
        n1_a: cells.sum(groups::stream1_assigned(Arm::A)),
        degenerate: Vec::new(),
    };
    est.degenerate = PARAMETER_NAMES
        .iter()
        .zip(est.params())
        .filter(|(_, p)| p.estimate == 0.0 || p.estimate == 1.0)
        .map(|(name, _)| *name)
        .collect();
    Ok(est)
}

/// Full-table CRC means `(mu_A, mu_B)`.
pub fn crc_point(m: &MLEstimates) -> (f64, f64) {
    let phi = m.phi.estimate;
    let phi_a = m.phi_a.estimate;
    let mu_a = m.pi_s1_a.estimate * phi_a * phi
        + m.pi_s1b_a.estimate * (1.0 - phi_a) * phi
        + m.pi_na_a.estimate * (1.0 - phi);
    let mu_b = m.pi_s1_b.estimate * (1.0 - phi_a) * phi
        + m.pi_s1a_b.estimate * phi_a * phi
        + m.pi_na_b.estimate * (1.0 - phi);
    (mu_a, mu_b)
}

/// One `response rate x population share` term of the CRC mean, written over cells.
#[derive(Debug, Clone, Copy)]
pub(crate) struct RatioTerm {
    pub num: &'static [usize],
    pub den: &'static [usize],
    pub weight: &'static [usize],
}

const STREAM1_A: &[usize] = &[1, 2, 3, 4, 11, 12];
const STREAM1_B: &[usize] = &[5, 6, 7, 8, 9, 10];
const OUTSIDE: &[usize] = &[13, 14, 15, 16, 17];

/// The CRC mean as a function of the cell vector. Homogeneous of degree one:
/// applied to proportions it returns the mean, applied to counts it returns the mean
/// times the total.
pub(crate) fn crc_terms(arm: Arm) -> [RatioTerm; 3] {
    match arm {
        Arm::A => [
            RatioTerm { num: &[1, 3], den: &[1, 2, 3, 4], weight: STREAM1_A },
            RatioTerm { num: &[5], den: &[5, 6], weight: STREAM1_B },
            RatioTerm { num: &[13], den: &[13, 14], weight: OUTSIDE },
        ],
        Arm::B => [
            RatioTerm { num: &[7, 9], den: &[7, 8, 9, 10], weight: STREAM1_B },
            RatioTerm { num: &[11], den: &[11, 12], weight: STREAM1_A },
            RatioTerm { num: &[15], den: &[15, 16], weight: OUTSIDE },
        ],
    }
}

pub(crate) fn crc_functional(v: &CellVector, arm: Arm) -> f64 {
    crc_terms(arm)
        .iter()
        .map(|t| sum_cells(v, t.num) / sum_cells(v, t.den) * sum_cells(v, t.weight))
        .sum()
}

/// Analytic gradient of [`crc_functional`].
pub(crate) fn crc_gradient(v: &CellVector, arm: Arm) -> CellVector {
    let mut grad = [0.0; NUM_CELLS];
    for t in crc_terms(arm) {
        let den = sum_cells(v, t.den);
        let r = sum_cells(v, t.num) / den;
        let w = sum_cells(v, t.weight);
        for &j in t.num {
            grad[j - 1] += w / den;
        }
        for &j in t.den {
            grad[j - 1] -= r * w / den;
        }
        for &j in t.weight {
            grad[j - 1] += r;
        }
    }
    grad
}

/// CRC means from a real-valued count vector whose entries sum to `n_tot`.
/// Returns `None` when a conditional denominator is zero.
pub fn crc_means_from_counts(v: &CellVector, n_tot: f64) -> Option<(f64, f64)> {
    let ok = |arm| crc_terms(arm).iter().all(|t| sum_cells(v, t.den) > 0.0);
    if !ok(Arm::A) || !ok(Arm::B) {
        return None;
    }
    Some((
        crc_functional(v, Arm::A) / n_tot,
        crc_functional(v, Arm::B) / n_tot,
    ))
}

/// Condensed-table estimate for `arm` from a real-valued count vector, along with
/// the estimated sampling fraction. Population size `n_tot` is the table total.
pub(crate) fn psi_hat_from_counts(v: &CellVector, n_tot: f64, arm: Arm) -> Option<(f64, f64)> {
    let n_arm = n_tot - sum_cells(v, groups::stream2(arm.other()));
    let kept = sum_cells(v, groups::stream1_kept(arm));
    let eligible = n_arm - kept;
    let captured =
        sum_cells(v, groups::switched_in(arm)) + sum_cells(v, groups::outside_stream1(arm));
    if eligible <= 0.0 || captured <= 0.0 {
        return None;
    }
    let psi = captured / eligible;
    let (m11, m10, m01) = match arm {
        Arm::A => (v[0], v[2], v[4] + v[12]),
        Arm::B => (v[6], v[8], v[10] + v[14]),
    };
    Some(((m11 + m10 + m01 / psi) / n_arm, psi))
}

/// Degree-one homogeneous form of the condensed-table estimator over cell proportions.
pub(crate) fn psi_functional(p: &CellVector, arm: Arm) -> f64 {
    let total: f64 = p.iter().sum();
    psi_hat_from_counts(p, total, arm).map_or(f64::NAN, |(mu, _)| mu * total)
}
