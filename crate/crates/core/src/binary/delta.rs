//! Delta-method variances and the report-level CRC and condensed-table estimators.
//!
//! Two routes are provided for the CRC estimator. The parameter route sums squared
//! partials of the mean against the eight (uncorrelated) MLE variances. The multinomial
//! route differentiates the estimator with respect to the 17 cell proportions `p` and
//! evaluates `(1/N) [sum p_i g_i^2 - (sum p_i g_i)^2]`.

use serde::{Deserialize, Serialize};

use crate::binary::mle::{
    crc_functional, crc_gradient, crc_point, mle_params, psi_functional, psi_hat_from_counts,
    MLEstimates,
};
use crate::binary::report::{Diagnostic, EstimateReport, Method, Target};
use crate::error::{Error, Result};
use crate::model::{Arm, CellCounts, CellVector, NUM_CELLS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DeltaMode {
    FullMultinomial,
    #[default]
    DiagonalParameter,
}

/// How the variance of an arm difference is formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AteVariance {
    /// Delta method on `mu_A - mu_B` jointly, keeping shared-parameter covariance.
    #[default]
    Joint,
    /// `se_A^2 + se_B^2`.
    Independent,
}

/// Partials of `mu_A` and `mu_B` with respect to the eight MLEs.
fn parameter_gradients(m: &MLEstimates) -> ([f64; 8], [f64; 8]) {
    let phi = m.phi.estimate;
    let phi_a = m.phi_a.estimate;
    let (s1a, s1ba, naa) = (m.pi_s1_a.estimate, m.pi_s1b_a.estimate, m.pi_na_a.estimate);
    let (s1b, s1ab, nab) = (m.pi_s1_b.estimate, m.pi_s1a_b.estimate, m.pi_na_b.estimate);
    let grad_a = [
        s1a * phi_a + s1ba * (1.0 - phi_a) - naa,
        (s1a - s1ba) * phi,
        phi_a * phi,
        (1.0 - phi_a) * phi,
        1.0 - phi,
        0.0,
        0.0,
        0.0,
    ];
    let grad_b = [
        s1b * (1.0 - phi_a) + s1ab * phi_a - nab,
        (s1ab - s1b) * phi,
        0.0,
        0.0,
        0.0,
        (1.0 - phi_a) * phi,
        phi_a * phi,
        1.0 - phi,
    ];
    (grad_a, grad_b)
}

fn target_gradient(grad_a: &[f64], grad_b: &[f64], target: Target) -> Vec<f64> {
    match target {
        Target::Arm(Arm::A) => grad_a.to_vec(),
        Target::Arm(Arm::B) => grad_b.to_vec(),
        Target::Ate => grad_a.iter().zip(grad_b).map(|(a, b)| a - b).collect(),
    }
}

/// Variance of a function of multinomial proportions from its gradient.
pub fn multinomial_delta_variance(p: &CellVector, grad: &CellVector, n_tot: f64) -> f64 {
    let first: f64 = p.iter().zip(grad).map(|(p, g)| p * g).sum();
    let second: f64 = p.iter().zip(grad).map(|(p, g)| p * g * g).sum();
    ((second - first * first) / n_tot).max(0.0)
}

/// Central differences on the count scale: cell `i` moves by `1e-6 * max(c_i, 1)`
/// counts, then everything is divided by `n_tot`.
pub fn finite_difference_gradient(
    f: impl Fn(&CellVector) -> f64,
    p: &CellVector,
    n_tot: f64,
) -> CellVector {
    let mut grad = [0.0; NUM_CELLS];
    for i in 0..NUM_CELLS {
        let h = 1e-6 * (p[i] * n_tot).max(1.0) / n_tot;
        let mut up = *p;
        let mut down = *p;
        up[i] += h;
        down[i] -= h;
        grad[i] = (f(&up) - f(&down)) / (2.0 * h);
    }
    grad
}

/// Gradient of the CRC target with respect to cell proportions.
pub fn crc_proportion_gradient(p: &CellVector, target: Target) -> CellVector {
    match target {
        Target::Arm(arm) => crc_gradient(p, arm),
        Target::Ate => {
            let a = crc_gradient(p, Arm::A);
            let b = crc_gradient(p, Arm::B);
            std::array::from_fn(|i| a[i] - b[i])
        }
    }
}

/// CRC target as a degree-one homogeneous function of the cell proportions.
pub fn crc_target_functional(p: &CellVector, target: Target) -> f64 {
    match target {
        Target::Arm(arm) => crc_functional(p, arm),
        Target::Ate => crc_functional(p, Arm::A) - crc_functional(p, Arm::B),
    }
}

/// Condensed-table target as a degree-one homogeneous function of the cell proportions.
pub fn psi_hat_target_functional(p: &CellVector, target: Target) -> f64 {
    match target {
        Target::Arm(arm) => psi_functional(p, arm),
        Target::Ate => psi_functional(p, Arm::A) - psi_functional(p, Arm::B),
    }
}

/// Delta-method variance of the CRC estimator of `target`.
pub fn delta_variance(cells: &CellCounts, target: Target, mode: DeltaMode) -> Result<f64> {
    let m = mle_params(cells)?;
    Ok(delta_variance_with(&m, cells, target, mode))
}

fn delta_variance_with(m: &MLEstimates, cells: &CellCounts, target: Target, mode: DeltaMode) -> f64 {
    match mode {
        DeltaMode::DiagonalParameter => {
            let (ga, gb) = parameter_gradients(m);
            target_gradient(&ga, &gb, target)
                .iter()
                .zip(m.variances())
                .map(|(g, v)| g * g * v)
                .sum()
        }
        DeltaMode::FullMultinomial => {
            let p = cells.proportions();
            let grad = crc_proportion_gradient(&p, target);
            multinomial_delta_variance(&p, &grad, cells.n_tot() as f64)
        }
    }
}

/// Multinomial delta variance of the condensed-table estimator, with a
/// finite-difference gradient.
pub fn psi_hat_variance(cells: &CellCounts, target: Target) -> Result<f64> {
    let p = cells.proportions();
    let n = cells.n_tot() as f64;
    for arm in arm_set(target) {
        psi_hat_from_counts(&p, 1.0, arm).ok_or(Error::NoSwitchData(arm))?;
    }
    let grad = finite_difference_gradient(|q| psi_hat_target_functional(q, target), &p, n);
    Ok(multinomial_delta_variance(&p, &grad, n))
}

fn arm_set(target: Target) -> Vec<Arm> {
    match target {
        Target::Arm(arm) => vec![arm],
        Target::Ate => Arm::BOTH.to_vec(),
    }
}

/// Full-table CRC report with Wald interval.
pub fn crc_estimate(
    cells: &CellCounts,
    target: Target,
    level: f64,
    mode: DeltaMode,
    ate_variance: AteVariance,
) -> Result<EstimateReport> {
    let m = mle_params(cells)?;
    let (mu_a, mu_b) = crc_point(&m);
    let point = match target {
        Target::Arm(Arm::A) => mu_a,
        Target::Arm(Arm::B) => mu_b,
        Target::Ate => mu_a - mu_b,
    };
    let variance = match (target, ate_variance) {
        (Target::Ate, AteVariance::Independent) => {
            delta_variance_with(&m, cells, Target::Arm(Arm::A), mode)
                + delta_variance_with(&m, cells, Target::Arm(Arm::B), mode)
        }
        _ => delta_variance_with(&m, cells, target, mode),
    };
    let mut report = EstimateReport::new(Method::Crc, target, point).with_wald(variance.sqrt(), level);
    if !m.degenerate.is_empty() {
        report.flag(Diagnostic::DegenerateCell);
    }
    Ok(report)
}

/// Condensed-table point estimate for one arm.
pub fn psi_hat_point(cells: &CellCounts, arm: Arm) -> Result<f64> {
    psi_hat_from_counts(&cells.as_f64(), cells.n_tot() as f64, arm)
        .map(|(mu, _)| mu)
        .ok_or(Error::NoSwitchData(arm))
}

/// Condensed-table report; se from the multinomial delta method.
pub fn psi_hat_estimate(
    cells: &CellCounts,
    target: Target,
    level: f64,
    ate_variance: AteVariance,
) -> Result<EstimateReport> {
    let point = match target {
        Target::Arm(arm) => psi_hat_point(cells, arm)?,
        Target::Ate => psi_hat_point(cells, Arm::A)? - psi_hat_point(cells, Arm::B)?,
    };
    let variance = match (target, ate_variance) {
        (Target::Ate, AteVariance::Independent) => {
            psi_hat_variance(cells, Target::Arm(Arm::A))?
                + psi_hat_variance(cells, Target::Arm(Arm::B))?
        }
        _ => psi_hat_variance(cells, target)?,
    };
    let mut report =
        EstimateReport::new(Method::PsiHat, target, point).with_wald(variance.sqrt(), level);
    if matches!(target, Target::Arm(_)) && point > 1.0 {
        report.flag(Diagnostic::EstimateAboveOne);
    }
    Ok(report)
}

/// Second moment input for [`ate`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AteInput {
    /// Covariance between the two arm estimates.
    Covariance(f64),
    /// Precomputed variance of the difference.
    Variance(f64),
}

/// Composes two arm reports of the same method into a difference report.
pub fn ate(
    report_a: &EstimateReport,
    report_b: &EstimateReport,
    input: AteInput,
    level: f64,
) -> Result<EstimateReport> {
    if report_a.method != report_b.method {
        return Err(Error::Composition(format!(
            "methods differ: {} vs {}",
            report_a.method, report_b.method
        )));
    }
    if report_a.target != Target::Arm(Arm::A) || report_b.target != Target::Arm(Arm::B) {
        return Err(Error::Composition(format!(
            "expected arms A and B, got {} and {}",
            report_a.target, report_b.target
        )));
    }
    let levels: Vec<f64> = [report_a, report_b]
        .iter()
        .filter_map(|r| r.interval.map(|i| i.level))
        .collect();
    if levels.iter().any(|&l| (l - level).abs() > 1e-12) {
        return Err(Error::Composition(format!(
            "interval levels {levels:?} differ from requested {level}"
        )));
    }
    let variance = match input {
        AteInput::Variance(v) => v,
        AteInput::Covariance(cov) => {
            let (sa, sb) = report_a.se.zip(report_b.se).ok_or_else(|| {
                Error::Composition("both reports need a standard error".into())
            })?;
            sa * sa + sb * sb - 2.0 * cov
        }
    };
    let point = report_a.point - report_b.point;
    Ok(EstimateReport::new(report_a.method, Target::Ate, point).with_wald(variance.max(0.0).sqrt(), level))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::binary::classical::rs_estimate;
    use crate::fixtures::tunisia;
    use proptest::prelude::*;

    fn fuzzed_cells() -> impl Strategy<Value = CellCounts> {
        prop::array::uniform17(1u64..200).prop_map(|cells| {
            let n = cells.iter().sum();
            CellCounts::new(cells, n).unwrap()
        })
    }

    #[test]
    fn tunisia_b_se_matches_table() {
        let se = delta_variance(&tunisia(), Target::Arm(Arm::B), DeltaMode::DiagonalParameter)
            .unwrap()
            .sqrt();
        assert!((se - 0.0292).abs() < 5e-5, "{se}");
    }

    #[test]
    fn tunisia_a_se_from_counts() {
        for mode in [DeltaMode::DiagonalParameter, DeltaMode::FullMultinomial] {
            let se = delta_variance(&tunisia(), Target::Arm(Arm::A), mode).unwrap().sqrt();
            assert!((se - 0.00302).abs() < 5e-6, "{mode:?}: {se}");
        }
    }

    #[test]
    fn tunisia_crc_b_wald_interval() {
        let r = crc_estimate(
            &tunisia(),
            Target::Arm(Arm::B),
            0.95,
            DeltaMode::DiagonalParameter,
            AteVariance::Joint,
        )
        .unwrap();
        let i = r.interval.unwrap();
        assert!((r.point - 0.88541).abs() < 5e-6);
        assert!((i.lower - 0.828).abs() < 5e-4 && (i.upper - 0.943).abs() < 5e-4);
    }

    #[test]
    fn degenerate_cells_flagged_on_crc_report() {
        let r = crc_estimate(
            &tunisia(),
            Target::Arm(Arm::A),
            0.95,
            DeltaMode::DiagonalParameter,
            AteVariance::Joint,
        )
        .unwrap();
        assert!(r.diagnostics.contains(&Diagnostic::DegenerateCell));
    }

    #[test]
    fn tunisia_independent_ate_se() {
        let r = crc_estimate(
            &tunisia(),
            Target::Ate,
            0.95,
            DeltaMode::DiagonalParameter,
            AteVariance::Independent,
        )
        .unwrap();
        assert!((r.se.unwrap() - 0.02936).abs() < 5e-5);
    }

    #[test]
    fn tunisia_psi_hat_points() {
        let t = tunisia();
        assert!((psi_hat_point(&t, Arm::A).unwrap() - 0.98226).abs() < 5e-6);
        // (508 + 53 / (60 / 1343)) / 1914; the rounded oracle is 0.88523
        let b = psi_hat_point(&t, Arm::B).unwrap();
        assert!((b - (508.0 + 53.0 * 1343.0 / 60.0) / 1914.0).abs() < 1e-12);
        assert!((b - 0.88523).abs() < 1e-5);
        let r = psi_hat_estimate(&t, Target::Arm(Arm::B), 0.95, AteVariance::Joint).unwrap();
        assert!(r.se.unwrap() > 0.0);
    }

    #[test]
    fn complete_capture_psi_hat() {
        // every B-assigned Stream-1 member and every outsider is captured by Stream 2
        let mut cells = [0u64; NUM_CELLS];
        cells[0] = 4; // c1
        cells[1] = 1; // c2
        cells[2] = 6; // c3
        cells[3] = 2; // c4
        cells[4] = 3; // c5
        cells[5] = 2; // c6
        cells[12] = 5; // c13
        cells[13] = 1; // c14
        let c = CellCounts::new(cells, 24).unwrap();
        let (_, psi) = psi_hat_from_counts(&c.as_f64(), 24.0, Arm::A).unwrap();
        assert_eq!(psi, 1.0);
        let cond = crate::model::condense(&c, Arm::A);
        let expected = cond.distinct() as f64 / cond.n_tot_arm as f64;
        assert!((psi_hat_point(&c, Arm::A).unwrap() - expected).abs() < 1e-15);
    }

    #[test]
    fn psi_hat_without_switch_data_errors() {
        let mut cells = *tunisia().cells();
        for j in [5, 6, 13, 14] {
            cells[16] += cells[j - 1];
            cells[j - 1] = 0;
        }
        let c = CellCounts::new(cells, 2000).unwrap();
        assert!(matches!(psi_hat_point(&c, Arm::A), Err(Error::NoSwitchData(Arm::A))));
    }

    #[test]
    fn rs_ate_matches_table() {
        let t = tunisia();
        let a = rs_estimate(&t, Arm::A, 0.95).unwrap();
        let b = rs_estimate(&t, Arm::B, 0.95).unwrap();
        let d = ate(&a, &b, AteInput::Covariance(0.0), 0.95).unwrap();
        assert!((d.point - 0.13295).abs() < 5e-6);
        assert!((d.se.unwrap() - 0.0403).abs() < 5e-5);
    }

    #[test]
    fn identical_reports_cancel() {
        let a = EstimateReport::new(Method::Rs, Target::Arm(Arm::A), 0.4).with_wald(0.5, 0.95);
        let mut b = a.clone();
        b.target = Target::Arm(Arm::B);
        let d = ate(&a, &b, AteInput::Covariance(0.25), 0.95).unwrap();
        assert_eq!(d.point, 0.0);
        assert!(d.se.unwrap().abs() < 1e-9);
    }

    #[test]
    fn mismatched_methods_do_not_compose() {
        let a = EstimateReport::new(Method::Rs, Target::Arm(Arm::A), 0.4).with_wald(0.1, 0.95);
        let b = EstimateReport::new(Method::Crc, Target::Arm(Arm::B), 0.4).with_wald(0.1, 0.95);
        assert!(matches!(
            ate(&a, &b, AteInput::Covariance(0.0), 0.95),
            Err(Error::Composition(_))
        ));
    }

    proptest! {
        #[test]
        fn euler_identity(cells in fuzzed_cells()) {
            let p = cells.proportions();
            for target in Target::ALL {
                let g = crc_proportion_gradient(&p, target);
                let lhs: f64 = p.iter().zip(&g).map(|(p, g)| p * g).sum();
                prop_assert!((lhs - crc_target_functional(&p, target)).abs() < 1e-10);

                let gp = finite_difference_gradient(|q| psi_hat_target_functional(q, target), &p, cells.n_tot() as f64);
                let lhs: f64 = p.iter().zip(&gp).map(|(p, g)| p * g).sum();
                prop_assert!((lhs - psi_hat_target_functional(&p, target)).abs() < 1e-7);
            }
        }

        #[test]
        fn analytic_gradient_matches_finite_difference(cells in fuzzed_cells()) {
            let p = cells.proportions();
            let n = cells.n_tot() as f64;
            for target in Target::ALL {
                let analytic = crc_proportion_gradient(&p, target);
                let numeric = finite_difference_gradient(|q| crc_target_functional(q, target), &p, n);
                for (a, f) in analytic.iter().zip(&numeric) {
                    prop_assert!((a - f).abs() <= 1e-6 * a.abs().max(1.0), "{a} vs {f}");
                }
            }
        }

        #[test]
        fn delta_modes_agree(cells in fuzzed_cells()) {
            for target in Target::ALL {
                let d = delta_variance(&cells, target, DeltaMode::DiagonalParameter).unwrap();
                let f = delta_variance(&cells, target, DeltaMode::FullMultinomial).unwrap();
                prop_assert!((d - f).abs() <= 0.2 * d.max(f), "{d} vs {f}");
            }
        }
    }
}
