use std::fs;
use std::path::Path;

use serde_json::{json, Value};

use crc_core::bayes::{posterior_samples, PosteriorEstimator, PosteriorSample};
use crc_core::binary::{
    ate, chapman_report, crc_estimate, psi_hat_estimate, rs_estimate, stream1_naive, AteInput,
    AteVariance, DeltaMode, Diagnostic, EstimateReport, IntervalKind, Method, Target,
};
use crc_core::continuous::{ContinuousData, ContinuousEstimator};
use crc_core::fixtures;
use crc_core::model::{read_records_csv, tabulate_cells, IndividualRecord};
use crc_core::sim::{run_monte_carlo, ScenarioConfig, SimulationOptions, SUMMARY_COLUMNS};
use crc_core::{Arm, CellCounts};

use crate::args::{
    DeltaModeArg, EstimateArgs, ExampleArgs, Format, GlobalOpts, MethodArg, OutcomeArg,
    SimulateArgs, TargetArg, ValidateArgs,
};
use crate::error::{CliError, CliResult};
use crate::manifest::RunManifest;
use crate::render;

/// A rendered result plus its provenance.
pub struct Output {
    pub body: String,
    pub manifest: RunManifest,
    /// Extra files (path, contents) written next to the main output.
    pub side_files: Vec<(std::path::PathBuf, String)>,
}

fn read(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::read(path, e))
}

fn require_seed(g: &GlobalOpts, why: &str) -> CliResult<u64> {
    g.seed
        .ok_or_else(|| CliError::input(format!("--seed is required {why}")))
}

fn load_records(path: &Path, n_tot: Option<u64>) -> CliResult<(Vec<IndividualRecord>, u64)> {
    let text = read(path)?;
    let records = read_records_csv(text.as_bytes())?;
    let n = n_tot.unwrap_or(records.len() as u64);
    Ok((records, n))
}

fn json_body(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("values serialize");
    s.push('\n');
    s
}

fn targets(args: &[TargetArg]) -> Vec<Target> {
    let mut out = Vec::new();
    for a in args {
        let add: &[Target] = match a {
            TargetArg::A => &[Target::Arm(Arm::A)],
            TargetArg::B => &[Target::Arm(Arm::B)],
            TargetArg::Ate => &[Target::Ate],
            TargetArg::All => &Target::ALL,
        };
        for t in add {
            if !out.contains(t) {
                out.push(*t);
            }
        }
    }
    out.sort();
    out
}

const BINARY_ORDER: [Method; 5] = [
    Method::Stream1Naive,
    Method::Rs,
    Method::Chapman,
    Method::PsiHat,
    Method::Crc,
];

fn binary_methods(args: &[MethodArg]) -> CliResult<Vec<Method>> {
    let mut out = Vec::new();
    for a in args {
        let add: &[Method] = match a {
            MethodArg::All => &BINARY_ORDER,
            MethodArg::Rs => &[Method::Rs],
            MethodArg::Chapman => &[Method::Chapman],
            MethodArg::Crc => &[Method::Crc],
            MethodArg::PsiHat => &[Method::PsiHat],
            MethodArg::Naive => &[Method::Stream1Naive],
            other => {
                return Err(CliError::input(format!(
                    "--method {other:?} needs --records with --outcome continuous"
                )))
            }
        };
        for m in add {
            if !out.contains(m) {
                out.push(*m);
            }
        }
    }
    Ok(out)
}

fn continuous_methods(args: &[MethodArg]) -> CliResult<Vec<ContinuousEstimator>> {
    use ContinuousEstimator as C;
    let mut out = Vec::new();
    for a in args {
        let add: &[C] = match a {
            MethodArg::All => &[C::Stream1, C::Stream2, C::Standardized],
            MethodArg::Standardized => &[C::Standardized],
            MethodArg::Stream2 => &[C::Stream2],
            MethodArg::Stream1 | MethodArg::Naive => &[C::Stream1],
            other => {
                return Err(CliError::input(format!(
                    "--method {other:?} applies to binary outcomes only"
                )))
            }
        };
        for m in add {
            if !out.contains(m) {
                out.push(*m);
            }
        }
    }
    Ok(out)
}

/// Options shared by `estimate` and `example` for the binary estimators.
struct BinaryRun<'a> {
    cells: &'a CellCounts,
    methods: Vec<Method>,
    targets: Vec<Target>,
    level: f64,
    delta_mode: DeltaMode,
    ate_variance: AteVariance,
    /// Posterior draws and seed for credible intervals.
    bayes: Option<(usize, u64)>,
}

/// Reports in method order; CRC and psi-hat add a credible report after each
/// Wald report when posterior draws are requested.
type Posteriors = Vec<(PosteriorEstimator, PosteriorSample)>;

fn binary_reports(run: &BinaryRun) -> CliResult<(Vec<EstimateReport>, Posteriors)> {
    let (cells, level) = (run.cells, run.level);
    let posterior: Posteriors = match run.bayes {
        Some((draws, seed)) => {
            let est: Vec<PosteriorEstimator> = run
                .methods
                .iter()
                .filter_map(|m| match m {
                    Method::Crc => Some(PosteriorEstimator::Crc),
                    Method::PsiHat => Some(PosteriorEstimator::PsiHat),
                    _ => None,
                })
                .collect();
            est.iter().copied().zip(posterior_samples(cells, &est, draws, seed)).collect()
        }
        None => Vec::new(),
    };

    let mut out = Vec::new();
    for &m in &run.methods {
        let arm = |a: Arm| -> crc_core::Result<EstimateReport> {
            match m {
                Method::Stream1Naive => stream1_naive(cells, a, level),
                Method::Rs => rs_estimate(cells, a, level),
                Method::Chapman => chapman_report(&crc_core::condense(cells, a), level),
                _ => unreachable!("per-arm methods only"),
            }
        };
        for &t in &run.targets {
            let report = match (m, t) {
                (Method::Crc, _) => crc_estimate(cells, t, level, run.delta_mode, run.ate_variance)?,
                (Method::PsiHat, _) => psi_hat_estimate(cells, t, level, run.ate_variance)?,
                (_, Target::Arm(a)) => arm(a)?,
                (_, Target::Ate) => {
                    ate(&arm(Arm::A)?, &arm(Arm::B)?, AteInput::Covariance(0.0), level)?
                }
            };
            let which = match m {
                Method::Crc => Some(PosteriorEstimator::Crc),
                Method::PsiHat => Some(PosteriorEstimator::PsiHat),
                _ => None,
            };
            let credible = posterior
                .iter()
                .find(|(e, _)| Some(*e) == which)
                .map(|(_, sample)| {
                    let mut r = report.clone();
                    r.interval = Some(sample.interval(t, level));
                    r.diagnostics.retain(|d| *d != Diagnostic::IntervalTruncated);
                    r
                });
            out.push(report);
            out.extend(credible);
        }
    }
    Ok((out, posterior))
}

fn draws_csv(posterior: &[(PosteriorEstimator, PosteriorSample)]) -> String {
    let mut s = String::from("estimator,draw_index,mu_a,mu_b,ate\n");
    for (est, sample) in posterior {
        let name = match est {
            PosteriorEstimator::Crc => "CRC",
            PosteriorEstimator::PsiHat => "PsiHat",
        };
        for i in 0..sample.len() {
            s.push_str(&format!(
                "{name},{i},{},{},{}\n",
                sample.mu_a[i], sample.mu_b[i], sample.ate[i]
            ));
        }
    }
    s
}

fn render_reports(format: Format, reports: &[EstimateReport], extra: Value) -> String {
    match format {
        Format::Json => {
            let mut v = extra;
            v["reports"] = serde_json::to_value(reports).expect("reports serialize");
            json_body(&v)
        }
        Format::Csv => render::reports_csv(reports),
        Format::Table => render::reports_table(reports),
    }
}

pub fn estimate(g: &GlobalOpts, a: &EstimateArgs) -> CliResult<Output> {
    let format = g.format.unwrap_or(Format::Json);
    let targets = targets(&a.arm);
    let mut config = json!({
        "command": "estimate",
        "level": g.level,
        "methods": format!("{:?}", a.method),
        "targets": targets.iter().map(|t| t.as_str()).collect::<Vec<_>>(),
        "outcome": format!("{:?}", a.outcome),
        "bayes_draws": a.bayes_draws,
        "bootstrap": a.bootstrap,
        "delta_mode": format!("{:?}", a.delta_mode),
        "independent_ate": a.independent_ate,
    });

    if a.outcome == OutcomeArg::Continuous {
        let path = a
            .records
            .as_deref()
            .ok_or_else(|| CliError::input("--outcome continuous needs --records"))?;
        if a.bayes_draws.is_some() {
            return Err(CliError::input("--bayes-draws applies to binary outcomes only"));
        }
        let (records, n_tot) = load_records(path, a.n_tot)?;
        config["records"] = Value::String(read(path)?);
        config["n_tot"] = json!(n_tot);
        let data = ContinuousData::from_records(&records, n_tot)?;
        let kinds = continuous_methods(&a.method)?;
        let specs: Vec<(ContinuousEstimator, Target)> = kinds
            .iter()
            .flat_map(|&k| targets.iter().map(move |&t| (k, t)))
            .collect();
        let mut reports = specs
            .iter()
            .map(|&(k, t)| data.report(k, t))
            .collect::<crc_core::Result<Vec<_>>>()?;
        if let Some(m) = a.bootstrap {
            let seed = require_seed(g, "with --bootstrap")?;
            let boots = data.bootstrap(&specs, m, g.level, seed)?;
            for (r, b) in reports.iter_mut().zip(boots) {
                *r = b?.apply(r.clone());
            }
        }
        let manifest = RunManifest::new("estimate", &config, g.seed);
        return Ok(Output {
            body: render_reports(format, &reports, json!({ "n_tot": n_tot })),
            manifest,
            side_files: Vec::new(),
        });
    }

    if a.bootstrap.is_some() {
        return Err(CliError::input("--bootstrap applies to --outcome continuous only"));
    }
    let cells = match (&a.cells, &a.records) {
        (Some(p), _) => CellCounts::from_json_str(&read(p)?)?,
        (None, Some(p)) => {
            let (records, n_tot) = load_records(p, a.n_tot)?;
            tabulate_cells(&records, n_tot)?
        }
        (None, None) => return Err(CliError::input("one of --cells or --records is required")),
    };
    config["cells"] = serde_json::to_value(&cells).expect("cells serialize");
    let bayes = match a.bayes_draws {
        Some(0) | Some(1) => return Err(CliError::input("--bayes-draws must be at least 2")),
        Some(n) => Some((n, require_seed(g, "with --bayes-draws")?)),
        None => None,
    };
    let run = BinaryRun {
        cells: &cells,
        methods: binary_methods(&a.method)?,
        targets,
        level: g.level,
        delta_mode: match a.delta_mode {
            DeltaModeArg::Parameter => DeltaMode::DiagonalParameter,
            DeltaModeArg::Multinomial => DeltaMode::FullMultinomial,
        },
        ate_variance: if a.independent_ate {
            AteVariance::Independent
        } else {
            AteVariance::Joint
        },
        bayes,
    };
    let (reports, posterior) = binary_reports(&run)?;
    let mut side_files = Vec::new();
    if let Some(p) = &a.draws_out {
        side_files.push((p.clone(), draws_csv(&posterior)));
    }
    Ok(Output {
        body: render_reports(format, &reports, json!({ "n_tot": cells.n_tot() })),
        manifest: RunManifest::new("estimate", &config, g.seed),
        side_files,
    })
}

fn method_for_sim(a: MethodArg) -> Option<Method> {
    Some(match a {
        MethodArg::Rs => Method::Rs,
        MethodArg::Chapman => Method::Chapman,
        MethodArg::Crc => Method::Crc,
        MethodArg::PsiHat => Method::PsiHat,
        MethodArg::Naive | MethodArg::Stream1 => Method::Stream1Naive,
        MethodArg::Standardized => Method::Standardized,
        MethodArg::Stream2 => Method::Stream2Only,
        MethodArg::All => return None,
    })
}

pub fn simulate(g: &GlobalOpts, a: &SimulateArgs) -> CliResult<Output> {
    let seed = require_seed(g, "for simulate")?;
    let cfg = match &a.scenario {
        Some(p) => ScenarioConfig::from_json_str(&read(p)?)?,
        None => ScenarioConfig::default(),
    };
    let methods: Vec<Method> = if a.methods.contains(&MethodArg::All) {
        Vec::new()
    } else {
        a.methods.iter().filter_map(|m| method_for_sim(*m)).collect()
    };
    let opts = SimulationOptions {
        n_reps: a.reps,
        methods,
        level: g.level,
        n_posterior_draws: a.bayes_draws,
        bootstrap_m: a.bootstrap,
        seed,
    };
    let config = json!({
        "command": "simulate",
        "scenario": serde_json::to_value(&cfg).expect("scenario serializes"),
        "reps": opts.n_reps,
        "methods": opts.methods.iter().map(|m| m.as_str()).collect::<Vec<_>>(),
        "level": opts.level,
        "bayes_draws": opts.n_posterior_draws,
        "bootstrap": opts.bootstrap_m,
    });
    let run = run_monte_carlo(&cfg, &opts)?;
    let body = match g.format.unwrap_or(Format::Csv) {
        Format::Csv => run.summary.to_csv_string()?,
        Format::Json => json_body(&json!({ "rows": run.summary.rows })),
        Format::Table => {
            let csv = run.summary.to_csv_string()?;
            let rows: Vec<Vec<String>> = csv
                .lines()
                .skip(1)
                .map(|l| l.split(',').map(str::to_string).collect())
                .collect();
            render::table(&SUMMARY_COLUMNS, &rows)
        }
    };
    let mut side_files = Vec::new();
    if let Some(p) = &a.replicates_out {
        let mut buf = Vec::new();
        run.write_replicates_csv(&mut buf)?;
        side_files.push((p.clone(), String::from_utf8(buf).expect("csv is utf-8")));
    }
    Ok(Output {
        body,
        manifest: RunManifest::new("simulate", &config, Some(seed)),
        side_files,
    })
}

fn margins(c: &CellCounts) -> Value {
    let sum = |js: &[usize]| js.iter().map(|&j| c.get(j)).sum::<u64>();
    let group = |members: &[usize], responders: &[usize]| {
        json!({ "members": sum(members), "responders": sum(responders) })
    };
    json!({
        "stream1_kept_a": group(&[1, 2, 3, 4], &[1, 3]),
        "stream1_kept_b": group(&[7, 8, 9, 10], &[7, 9]),
        "stream2_a": group(&[1, 2, 5, 6, 13, 14], &[1, 5, 13]),
        "stream2_b": group(&[7, 8, 11, 12, 15, 16], &[7, 11, 15]),
        "unobserved": c.get(17),
    })
}

fn footnotes(reports: &[EstimateReport]) -> Vec<String> {
    let mut notes = Vec::new();
    if let Some(r) = reports.iter().find(|r| {
        r.method == Method::Crc
            && r.target == Target::Arm(Arm::A)
            && r.interval.map(|i| i.kind) == Some(IntervalKind::Wald)
    }) {
        notes.push(format!(
            "CRC arm A: the printed cell counts give {:.1}% (SE {:.4}); the reference row for this fixture reads 98.0% (SE 0.0059). \
             The counts are used as printed, so that row is not reproduced.",
            100.0 * r.point,
            r.se.unwrap_or(f64::NAN)
        ));
    }
    let above: Vec<String> = reports
        .iter()
        .filter(|r| r.diagnostics.contains(&Diagnostic::EstimateAboveOne))
        .map(|r| format!("{} {}", r.method, r.target))
        .collect();
    if !above.is_empty() {
        notes.push(format!(
            "Point estimates above 100% (left unclipped): {}.",
            dedup(above).join(", ")
        ));
    }
    if reports
        .iter()
        .any(|r| r.diagnostics.contains(&Diagnostic::IntervalTruncated))
    {
        notes.push("Interval limits beyond the parameter range are truncated to it.".into());
    }
    notes.push(
        "ATE intervals for Stream1Naive, RS and Chapman treat the two arm estimates as independent."
            .into(),
    );
    notes
}

fn dedup(mut v: Vec<String>) -> Vec<String> {
    let mut seen = Vec::new();
    v.retain(|s| {
        let fresh = !seen.contains(s);
        seen.push(s.clone());
        fresh
    });
    v
}

/// Wide layout: one line per method (and per credible variant), one column per target.
fn example_table(name: &str, cells: &CellCounts, reports: &[EstimateReport], notes: &[String]) -> String {
    let cell = |r: Option<&EstimateReport>| match r {
        Some(r) => {
            let i = r.interval.expect("fixture reports carry intervals");
            format!(
                "{:.1}% ({:.4}) [{:.1}%, {:.1}%]",
                100.0 * r.point,
                r.se.unwrap_or(f64::NAN),
                100.0 * i.lower,
                100.0 * i.upper
            )
        }
        None => String::new(),
    };
    let credible = |r: &EstimateReport| r.interval.map(|i| i.kind) == Some(IntervalKind::Credible);
    let mut keys: Vec<(Method, bool)> = Vec::new();
    for r in reports {
        if !keys.contains(&(r.method, credible(r))) {
            keys.push((r.method, credible(r)));
        }
    }
    let rows: Vec<Vec<String>> = keys
        .iter()
        .map(|&(m, cred)| {
            let find = |t: Target| {
                reports
                    .iter()
                    .find(|r| r.method == m && r.target == t && credible(r) == cred)
            };
            let label = if cred { format!("{m} (credible)") } else { m.to_string() };
            vec![
                label,
                cell(find(Target::Arm(Arm::A))),
                cell(find(Target::Arm(Arm::B))),
                cell(find(Target::Ate)),
            ]
        })
        .collect();
    let mut out = format!(
        "Fixture {name}: n_tot = {}, cells = {:?}\n\n",
        cells.n_tot(),
        cells.cells()
    );
    out.push_str(&render::table(
        &["method", "A: estimate (se) [interval]", "B", "ATE"],
        &rows,
    ));
    out.push('\n');
    for (i, n) in notes.iter().enumerate() {
        out.push_str(&format!("{}. {n}\n", i + 1));
    }
    out
}

pub fn example(g: &GlobalOpts, a: &ExampleArgs) -> CliResult<Output> {
    let cells = fixtures::by_name(&a.name).ok_or_else(|| CliError::Input {
        code: "unknown-fixture".into(),
        message: format!("unknown fixture {:?}; available: tunisia", a.name),
    })?;
    let seed = require_seed(g, "for the credible intervals")?;
    if a.bayes_draws < 2 {
        return Err(CliError::input("--bayes-draws must be at least 2"));
    }
    let run = BinaryRun {
        cells: &cells,
        methods: BINARY_ORDER.to_vec(),
        targets: Target::ALL.to_vec(),
        level: g.level,
        delta_mode: DeltaMode::default(),
        ate_variance: AteVariance::default(),
        bayes: Some((a.bayes_draws, seed)),
    };
    let (reports, _) = binary_reports(&run)?;
    let notes = footnotes(&reports);
    let config = json!({
        "command": "example",
        "name": a.name,
        "level": g.level,
        "bayes_draws": a.bayes_draws,
    });
    let body = match g.format.unwrap_or(Format::Json) {
        Format::Table => example_table(&a.name, &cells, &reports, &notes),
        f => render_reports(
            f,
            &reports,
            json!({
                "fixture": a.name,
                "n_tot": cells.n_tot(),
                "cells": cells.cells(),
                "margins": margins(&cells),
                "footnotes": notes,
            }),
        ),
    };
    Ok(Output {
        body,
        manifest: RunManifest::new("example", &config, Some(seed)),
        side_files: Vec::new(),
    })
}

pub fn validate(g: &GlobalOpts, a: &ValidateArgs) -> CliResult<Output> {
    let (kind, detail, config) = if let Some(p) = &a.cells {
        let text = read(p)?;
        let c = CellCounts::from_json_str(&text)?;
        ("cells", json!({ "n_tot": c.n_tot() }), json!({ "cells": text }))
    } else if let Some(p) = &a.records {
        let (records, n_tot) = load_records(p, a.n_tot)?;
        let c = tabulate_cells(&records, n_tot)?;
        let observed = n_tot - c.get(17);
        (
            "records",
            json!({ "n_records": records.len(), "n_tot": n_tot, "observed": observed }),
            json!({ "records": read(p)?, "n_tot": n_tot }),
        )
    } else if let Some(p) = &a.scenario {
        let text = read(p)?;
        let cfg = ScenarioConfig::from_json_str(&text)?;
        (
            "scenario",
            serde_json::to_value(&cfg).expect("scenario serializes"),
            json!({ "scenario": text }),
        )
    } else {
        return Err(CliError::input("one of --cells, --records or --scenario is required"));
    };
    let body = match g.format.unwrap_or(Format::Json) {
        Format::Json => json_body(&json!({ "valid": true, "kind": kind, "detail": detail })),
        _ => format!("valid {kind}\n"),
    };
    Ok(Output {
        body,
        manifest: RunManifest::new("validate", &config, g.seed),
        side_files: Vec::new(),
    })
}
