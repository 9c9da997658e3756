use std::collections::BTreeMap;
use std::io::Write;

use rand::RngCore;
use rayon::prelude::*;

use crate::bayes::{posterior_samples, PosteriorEstimator};
use crate::binary::{
    ate, chapman_report, crc_estimate, psi_hat_estimate, rs_estimate, stream1_naive, AteInput,
    AteVariance, DeltaMode, EstimateReport, IntervalKind, Method, Target,
};
use crate::continuous::{ContinuousData, ContinuousEstimator};
use crate::error::{Error, Result};
use crate::model::{condense, tabulate_cells, Arm, CellCounts, IndividualRecord};
use crate::rng::substream;
use crate::sim::scenario::{generate_population, OutcomeKind, ScenarioConfig};
use crate::sim::summary::{format_sig6, summarize, MonteCarloSummary, Observation, RowKey};
use crate::stats::sample_sd;

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationOptions {
    pub n_reps: usize,
    /// Empty selects the defaults for the scenario's outcome kind.
    pub methods: Vec<Method>,
    pub level: f64,
    pub n_posterior_draws: usize,
    pub bootstrap_m: usize,
    pub seed: u64,
}

impl Default for SimulationOptions {
    fn default() -> Self {
        SimulationOptions {
            n_reps: 2000,
            methods: Vec::new(),
            level: 0.95,
            n_posterior_draws: 1000,
            bootstrap_m: 1000,
            seed: 0,
        }
    }
}

pub const BINARY_METHODS: [Method; 5] = [
    Method::Stream1Naive,
    Method::Rs,
    Method::Chapman,
    Method::Crc,
    Method::PsiHat,
];

pub const CONTINUOUS_METHODS: [Method; 3] =
    [Method::Standardized, Method::Stream2Only, Method::Stream1Naive];

/// One output row and the outcome its truth refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct RowSpec {
    key: RowKey,
    outcome: OutcomeKind,
}

/// Rows for a method set. In continuous scenarios `Stream1Naive` is the
/// continuous Stream-1 mean; the other binary methods still run on `y`.
fn row_specs(outcome: OutcomeKind, methods: &[Method]) -> Result<Vec<RowSpec>> {
    let defaults: &[Method] = match outcome {
        OutcomeKind::Binary => &BINARY_METHODS,
        OutcomeKind::Continuous => &CONTINUOUS_METHODS,
    };
    let methods = if methods.is_empty() { defaults } else { methods };
    let mut out = Vec::new();
    let mut seen = Vec::new();
    for &m in methods {
        if seen.contains(&m) {
            continue;
        }
        seen.push(m);
        let continuous = matches!(m, Method::Standardized | Method::Stream2Only)
            || (m == Method::Stream1Naive && outcome == OutcomeKind::Continuous);
        if continuous && outcome == OutcomeKind::Binary {
            return Err(Error::invalid(
                "methods",
                format!("{m} needs a continuous-outcome scenario"),
            ));
        }
        let row_outcome = if continuous {
            OutcomeKind::Continuous
        } else {
            OutcomeKind::Binary
        };
        let kinds: &[IntervalKind] = match (m, continuous) {
            (_, true) => &[IntervalKind::Percentile],
            (Method::Crc | Method::PsiHat, _) => &[IntervalKind::Wald, IntervalKind::Credible],
            (Method::Chapman, _) => &[IntervalKind::TransformedLogit],
            _ => &[IntervalKind::Wald],
        };
        for target in Target::ALL {
            for &kind in kinds {
                // the Chapman difference has no logit form; it uses Wald
                let kind = if m == Method::Chapman && target == Target::Ate {
                    IntervalKind::Wald
                } else {
                    kind
                };
                out.push(RowSpec {
                    key: RowKey {
                        method: m,
                        target,
                        coverage_kind: Some(kind),
                    },
                    outcome: row_outcome,
                });
            }
        }
    }
    Ok(out)
}

fn observe(r: &EstimateReport) -> Observation {
    Observation {
        point: r.point,
        se: r.se,
        interval: r.interval.map(|i| (i.lower, i.upper)),
    }
}

type Outcomes = BTreeMap<RowKey, Option<Observation>>;

fn record(out: &mut Outcomes, method: Method, target: Target, kind: IntervalKind, obs: Option<Observation>) {
    out.insert(
        RowKey {
            method,
            target,
            coverage_kind: Some(kind),
        },
        obs,
    );
}

fn per_arm_with_wald_ate(
    out: &mut Outcomes,
    method: Method,
    arm_kind: IntervalKind,
    level: f64,
    f: impl Fn(Arm) -> Result<EstimateReport>,
) {
    let a = f(Arm::A);
    let b = f(Arm::B);
    // the arm estimates come from disjoint cells, so they are uncorrelated
    let d = match (&a, &b) {
        (Ok(a), Ok(b)) => ate(a, b, AteInput::Covariance(0.0), level).ok(),
        _ => None,
    };
    record(out, method, Target::Arm(Arm::A), arm_kind, a.ok().as_ref().map(observe));
    record(out, method, Target::Arm(Arm::B), arm_kind, b.ok().as_ref().map(observe));
    record(out, method, Target::Ate, IntervalKind::Wald, d.as_ref().map(observe));
}

fn binary_methods(
    out: &mut Outcomes,
    cells: &CellCounts,
    methods: &[Method],
    opts: &SimulationOptions,
    posterior_seed: u64,
) {
    let level = opts.level;
    let mut posterior: Vec<(Method, PosteriorEstimator)> = Vec::new();
    for &m in methods {
        match m {
            Method::Stream1Naive => per_arm_with_wald_ate(out, m, IntervalKind::Wald, level, |a| {
                stream1_naive(cells, a, level)
            }),
            Method::Rs => per_arm_with_wald_ate(out, m, IntervalKind::Wald, level, |a| {
                rs_estimate(cells, a, level)
            }),
            Method::Chapman => {
                per_arm_with_wald_ate(out, m, IntervalKind::TransformedLogit, level, |a| {
                    chapman_report(&condense(cells, a), level)
                })
            }
            Method::Crc | Method::PsiHat => {
                for target in Target::ALL {
                    let r = if m == Method::Crc {
                        crc_estimate(cells, target, level, DeltaMode::default(), AteVariance::default())
                    } else {
                        psi_hat_estimate(cells, target, level, AteVariance::default())
                    };
                    record(out, m, target, IntervalKind::Wald, r.ok().as_ref().map(observe));
                }
                posterior.push((
                    m,
                    if m == Method::Crc {
                        PosteriorEstimator::Crc
                    } else {
                        PosteriorEstimator::PsiHat
                    },
                ));
            }
            _ => {}
        }
    }
    if posterior.is_empty() || opts.n_posterior_draws < 2 {
        return;
    }
    let estimators: Vec<PosteriorEstimator> = posterior.iter().map(|p| p.1).collect();
    let samples = posterior_samples(cells, &estimators, opts.n_posterior_draws, posterior_seed);
    for ((m, _), sample) in posterior.iter().zip(&samples) {
        for target in Target::ALL {
            let wald = RowKey {
                method: *m,
                target,
                coverage_kind: Some(IntervalKind::Wald),
            };
            // the credible row shares the point estimate, so it fails with it
            let obs = out.get(&wald).copied().flatten().map(|w| {
                let i = sample.interval(target, level);
                Observation {
                    point: w.point,
                    se: sample_sd(sample.values(target)),
                    interval: Some((i.lower, i.upper)),
                }
            });
            record(out, *m, target, IntervalKind::Credible, obs);
        }
    }
}

fn continuous_methods(
    out: &mut Outcomes,
    pop: &[IndividualRecord],
    n_tot: u64,
    methods: &[Method],
    opts: &SimulationOptions,
    bootstrap_seed: u64,
) {
    let kinds: Vec<ContinuousEstimator> = methods
        .iter()
        .filter_map(|m| match m {
            Method::Standardized => Some(ContinuousEstimator::Standardized),
            Method::Stream2Only => Some(ContinuousEstimator::Stream2),
            Method::Stream1Naive => Some(ContinuousEstimator::Stream1),
            _ => None,
        })
        .collect();
    if kinds.is_empty() {
        return;
    }
    let specs: Vec<(ContinuousEstimator, Target)> = kinds
        .iter()
        .flat_map(|&k| Target::ALL.map(|t| (k, t)))
        .collect();
    let data = match ContinuousData::from_records(pop, n_tot) {
        Ok(d) => d,
        Err(_) => {
            for (k, t) in specs {
                record(out, k.method(), t, IntervalKind::Percentile, None);
            }
            return;
        }
    };
    let boots = data.bootstrap(&specs, opts.bootstrap_m, opts.level, bootstrap_seed);
    for (i, &(k, t)) in specs.iter().enumerate() {
        let boot = boots.as_ref().ok().and_then(|all| all[i].as_ref().ok());
        let obs = data.point(k, t).ok().zip(boot).map(|(point, b)| Observation {
            point,
            se: Some(b.se),
            interval: Some((b.interval.lower, b.interval.upper)),
        });
        record(out, k.method(), t, IntervalKind::Percentile, obs);
    }
}

/// Per-replicate outcomes plus their summary.
#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloRun {
    pub summary: MonteCarloSummary,
    pub keys: Vec<RowKey>,
    /// `outcomes[i][r]` is replicate `i`'s result for row `keys[r]`.
    pub outcomes: Vec<Vec<Option<Observation>>>,
}

impl MonteCarloRun {
    /// Tidy per-replicate table for external plotting.
    pub fn write_replicates_csv(&self, w: impl Write) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record([
            "replicate", "method", "target", "coverage_kind", "point", "se", "lower", "upper",
        ])?;
        let num = |x: Option<f64>| x.map(format_sig6).unwrap_or_default();
        for (i, row) in self.outcomes.iter().enumerate() {
            for (key, obs) in self.keys.iter().zip(row) {
                let Some(o) = obs else { continue };
                out.write_record([
                    i.to_string(),
                    key.method.as_str().to_string(),
                    key.target.as_str().to_string(),
                    key.coverage_kind.map(|k| k.as_str()).unwrap_or("none").to_string(),
                    format_sig6(o.point),
                    num(o.se),
                    num(o.interval.map(|i| i.0)),
                    num(o.interval.map(|i| i.1)),
                ])?;
            }
        }
        out.flush()?;
        Ok(())
    }
}

/// Runs one replicate: draws the child seeds, generates the population, then
/// every requested estimator.
fn replicate(cfg: &ScenarioConfig, opts: &SimulationOptions, specs: &[RowSpec], i: u64) -> Vec<Option<Observation>> {
    let mut rng = substream(opts.seed, i);
    let posterior_seed = rng.next_u64();
    let bootstrap_seed = rng.next_u64();
    let pop = generate_population(cfg, &mut rng).expect("scenario validated before the run");

    let mut binary: Vec<Method> = Vec::new();
    let mut continuous: Vec<Method> = Vec::new();
    for s in specs {
        let list = match s.outcome {
            OutcomeKind::Binary => &mut binary,
            OutcomeKind::Continuous => &mut continuous,
        };
        if !list.contains(&s.key.method) {
            list.push(s.key.method);
        }
    }

    let mut out = Outcomes::new();
    if !binary.is_empty() {
        let cells = tabulate_cells(&pop, cfg.n_tot).expect("generated records are consistent");
        binary_methods(&mut out, &cells, &binary, opts, posterior_seed);
    }
    continuous_methods(&mut out, &pop, cfg.n_tot, &continuous, opts, bootstrap_seed);
    specs
        .iter()
        .map(|s| out.get(&s.key).copied().flatten())
        .collect()
}

/// Monte Carlo study of the requested estimators. Replicate `i` owns substream `i`
/// of the master seed and results are combined in replicate order, so output does
/// not depend on the rayon pool size.
pub fn run_monte_carlo(cfg: &ScenarioConfig, opts: &SimulationOptions) -> Result<MonteCarloRun> {
    cfg.validate()?;
    if opts.n_reps == 0 {
        return Err(Error::invalid("n_reps", "need at least one replicate"));
    }
    if !(opts.level > 0.0 && opts.level < 1.0) {
        return Err(Error::invalid("level", "must lie strictly between 0 and 1"));
    }
    let specs = row_specs(cfg.outcome, &opts.methods)?;
    if specs.iter().any(|s| s.key.coverage_kind == Some(IntervalKind::Percentile)) && opts.bootstrap_m < 2 {
        return Err(Error::invalid("bootstrap_m", "need at least 2 resamples"));
    }
    let truths: Vec<f64> = specs
        .iter()
        .map(|s| cfg.truth(s.outcome, s.key.target))
        .collect::<Result<_>>()?;

    let outcomes: Vec<Vec<Option<Observation>>> = (0..opts.n_reps as u64)
        .into_par_iter()
        .map(|i| replicate(cfg, opts, &specs, i))
        .collect();

    let rows = specs
        .iter()
        .enumerate()
        .map(|(r, s)| {
            let column: Vec<Option<Observation>> = outcomes.iter().map(|o| o[r]).collect();
            summarize(s.key, &column, truths[r])
        })
        .collect();

    Ok(MonteCarloRun {
        summary: MonteCarloSummary { rows },
        keys: specs.iter().map(|s| s.key).collect(),
        outcomes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick(methods: Vec<Method>, reps: usize) -> SimulationOptions {
        SimulationOptions {
            n_reps: reps,
            methods,
            n_posterior_draws: 50,
            bootstrap_m: 20,
            seed: 9,
            ..Default::default()
        }
    }

    #[test]
    fn default_binary_rows() {
        let specs = row_specs(OutcomeKind::Binary, &[]).unwrap();
        // naive, RS, Chapman: 3 rows each; CRC and psi-hat: 6 each
        assert_eq!(specs.len(), 21);
        let chapman_ate = specs
            .iter()
            .find(|s| s.key.method == Method::Chapman && s.key.target == Target::Ate)
            .unwrap();
        assert_eq!(chapman_ate.key.coverage_kind, Some(IntervalKind::Wald));
        assert!(row_specs(OutcomeKind::Binary, &[Method::Standardized]).is_err());
    }

    #[test]
    fn single_replicate_reports_mean_without_sd() {
        let run = run_monte_carlo(&ScenarioConfig::default(), &quick(vec![Method::Rs], 1)).unwrap();
        let row = run.summary.row(Method::Rs, Target::Arm(Arm::A), Some(IntervalKind::Wald)).unwrap();
        assert_eq!(row.sd, None);
        assert_eq!(row.mean, run.outcomes[0][0].map(|o| o.point));
    }

    #[test]
    fn repeated_runs_are_identical() {
        let cfg = ScenarioConfig::default();
        let opts = quick(vec![], 6);
        let a = run_monte_carlo(&cfg, &opts).unwrap();
        let b = run_monte_carlo(&cfg, &opts).unwrap();
        assert_eq!(a.summary.to_csv_string().unwrap(), b.summary.to_csv_string().unwrap());
        let other = run_monte_carlo(&cfg, &SimulationOptions { seed: 10, ..opts }).unwrap();
        assert_ne!(a.outcomes, other.outcomes);
    }

    #[test]
    fn continuous_run_produces_all_rows() {
        let cfg = ScenarioConfig {
            outcome: OutcomeKind::Continuous,
            ..Default::default()
        };
        let run = run_monte_carlo(&cfg, &quick(vec![], 3)).unwrap();
        assert_eq!(run.summary.rows.len(), 9);
        for row in &run.summary.rows {
            assert_eq!(row.n_reps, 3);
            assert!(row.n_failed <= row.n_reps);
        }
        let mut buf = Vec::new();
        run.write_replicates_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("replicate,method,target"));
    }

    #[test]
    fn tiny_anchor_stream_fails_are_counted() {
        let cfg = ScenarioConfig {
            n_tot: 100,
            p2: 0.01,
            ..Default::default()
        };
        let run = run_monte_carlo(&cfg, &quick(vec![Method::Crc], 20)).unwrap();
        let row = run.summary.row(Method::Crc, Target::Arm(Arm::A), Some(IntervalKind::Wald)).unwrap();
        assert!(row.n_failed > 0);
        assert_eq!(row.n_reps, 20);
    }
}
