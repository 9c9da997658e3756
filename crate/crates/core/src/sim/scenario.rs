use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::binary::Target;
use crate::error::{Error, Result};
use crate::model::{Arm, IndividualRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutcomeKind {
    #[default]
    Binary,
    Continuous,
}

/// Response probabilities per stratum, one vector per arm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseProb {
    #[serde(rename = "A")]
    pub a: Vec<f64>,
    #[serde(rename = "B")]
    pub b: Vec<f64>,
}

impl ResponseProb {
    pub fn get(&self, arm: Arm) -> &[f64] {
        match arm {
            Arm::A => &self.a,
            Arm::B => &self.b,
        }
    }
}

impl Default for ResponseProb {
    fn default() -> Self {
        ResponseProb {
            a: vec![0.5, 0.8],
            b: vec![0.3, 0.7],
        }
    }
}

/// Normal outcome component for members of `stratum` (1-based) with binary
/// response `response` who received `arm`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub stratum: u32,
    pub response: bool,
    pub arm: Arm,
    pub mean: f64,
    pub sd: f64,
}

fn default_components() -> Vec<Component> {
    let c = |stratum, response, arm, mean, sd| Component {
        stratum,
        response,
        arm,
        mean,
        sd,
    };
    vec![
        c(1, true, Arm::A, 10.0, 0.75),
        c(1, false, Arm::A, 2.5, 1.2),
        c(2, true, Arm::A, 5.0, 0.5),
        c(2, false, Arm::A, 1.0, 1.5),
        c(1, true, Arm::B, 15.0, 0.75),
        c(1, false, Arm::B, 7.5, 1.2),
        c(2, true, Arm::B, 10.0, 0.5),
        c(2, false, Arm::B, 6.0, 1.5),
    ]
}

/// Simulated population design. Absent JSON keys take the defaults of the
/// two-stratum reference scenario; camelCase key spellings are accepted too.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(alias = "nTot")]
    pub n_tot: u64,
    #[serde(alias = "stratumWeights")]
    pub stratum_weights: Vec<f64>,
    #[serde(alias = "s1InclusionByStratum")]
    pub s1_inclusion: Vec<f64>,
    #[serde(alias = "chooseAByStratum")]
    pub choose_a: Vec<f64>,
    pub p2: f64,
    #[serde(alias = "xiA")]
    pub xi_a: f64,
    #[serde(alias = "responseProb")]
    pub response_prob: ResponseProb,
    pub outcome: OutcomeKind,
    #[serde(alias = "continuousComponents")]
    pub continuous_components: Vec<Component>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            n_tot: 1000,
            stratum_weights: vec![0.4, 0.6],
            s1_inclusion: vec![0.7, 0.9],
            choose_a: vec![0.3, 0.8],
            p2: 0.1,
            xi_a: 0.5,
            response_prob: ResponseProb::default(),
            outcome: OutcomeKind::Binary,
            continuous_components: default_components(),
        }
    }
}

impl ScenarioConfig {
    pub fn from_json_str(s: &str) -> Result<Self> {
        let cfg: ScenarioConfig = serde_json::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn n_strata(&self) -> usize {
        self.stratum_weights.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_tot == 0 {
            return Err(Error::invalid("n_tot", "must be positive"));
        }
        let k = self.n_strata();
        if k == 0 {
            return Err(Error::invalid("stratum_weights", "need at least one stratum"));
        }
        let probs = |field: &str, v: &[f64]| -> Result<()> {
            if v.len() != k {
                return Err(Error::invalid(
                    field,
                    format!("expected {k} entries (one per stratum), got {}", v.len()),
                ));
            }
            check_probs(field, v)
        };
        probs("stratum_weights", &self.stratum_weights)?;
        let total: f64 = self.stratum_weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::invalid("stratum_weights", format!("sum to {total}, not 1")));
        }
        probs("s1_inclusion", &self.s1_inclusion)?;
        probs("choose_a", &self.choose_a)?;
        probs("response_prob.A", &self.response_prob.a)?;
        probs("response_prob.B", &self.response_prob.b)?;
        check_probs("p2", &[self.p2])?;
        check_probs("xi_a", &[self.xi_a])?;
        if self.outcome == OutcomeKind::Continuous {
            self.component_table()?;
        }
        Ok(())
    }

    /// Components indexed by `[stratum - 1][response][arm]`.
    fn component_table(&self) -> Result<Vec<[[Component; 2]; 2]>> {
        let k = self.n_strata();
        let mut table: Vec<[[Option<Component>; 2]; 2]> = vec![[[None; 2]; 2]; k];
        for c in &self.continuous_components {
            let field = format!(
                "continuous_components[stratum={}, response={}, arm={}]",
                c.stratum, c.response as u8, c.arm
            );
            if c.stratum == 0 || c.stratum as usize > k {
                return Err(Error::invalid(field, format!("stratum must be in 1..={k}")));
            }
            if !(c.sd > 0.0 && c.sd.is_finite()) || !c.mean.is_finite() {
                return Err(Error::invalid(field, "need finite mean and sd > 0"));
            }
            let slot = &mut table[c.stratum as usize - 1][c.response as usize][c.arm as usize];
            if slot.replace(*c).is_some() {
                return Err(Error::invalid(field, "duplicate component"));
            }
        }
        table
            .into_iter()
            .enumerate()
            .map(|(s, rows)| {
                let pick = |r: usize, a: usize| {
                    rows[r][a].ok_or_else(|| {
                        Error::invalid(
                            "continuous_components",
                            format!(
                                "missing component for stratum {}, response {r}, arm {}",
                                s + 1,
                                Arm::BOTH[a]
                            ),
                        )
                    })
                };
                Ok([[pick(0, 0)?, pick(0, 1)?], [pick(1, 0)?, pick(1, 1)?]])
            })
            .collect()
    }

    /// Population mean of the binary outcome under `arm`.
    pub fn binary_truth(&self, arm: Arm) -> f64 {
        self.stratum_weights
            .iter()
            .zip(self.response_prob.get(arm))
            .map(|(w, p)| w * p)
            .sum()
    }

    /// Population mean of the continuous outcome under `arm`.
    pub fn continuous_truth(&self, arm: Arm) -> Result<f64> {
        let table = self.component_table()?;
        Ok(self
            .stratum_weights
            .iter()
            .zip(self.response_prob.get(arm))
            .zip(&table)
            .map(|((w, p), c)| {
                w * (p * c[1][arm as usize].mean + (1.0 - p) * c[0][arm as usize].mean)
            })
            .sum())
    }

    pub fn truth(&self, outcome: OutcomeKind, target: Target) -> Result<f64> {
        let arm = |a| match outcome {
            OutcomeKind::Binary => Ok(self.binary_truth(a)),
            OutcomeKind::Continuous => self.continuous_truth(a),
        };
        match target {
            Target::Arm(a) => arm(a),
            Target::Ate => Ok(arm(Arm::A)? - arm(Arm::B)?),
        }
    }
}

fn check_probs(field: &str, v: &[f64]) -> Result<()> {
    match v.iter().position(|p| !(0.0..=1.0).contains(p)) {
        Some(i) => Err(Error::invalid(
            field,
            format!("entry {i} = {} is not a probability", v[i]),
        )),
        None => Ok(()),
    }
}

/// Draws one population. Records are numbered from 0; strata from 1.
pub fn generate_population(cfg: &ScenarioConfig, rng: &mut impl Rng) -> Result<Vec<IndividualRecord>> {
    cfg.validate()?;
    let components: Option<Vec<[[Normal<f64>; 2]; 2]>> = match cfg.outcome {
        OutcomeKind::Binary => None,
        OutcomeKind::Continuous => Some(
            cfg.component_table()?
                .into_iter()
                .map(|rows| rows.map(|r| r.map(|c| Normal::new(c.mean, c.sd).expect("validated sd"))))
                .collect(),
        ),
    };
    let last = cfg.n_strata() - 1;
    let arm = |rng: &mut _, p_a: f64| {
        if Rng::random_bool(rng, p_a) {
            Arm::A
        } else {
            Arm::B
        }
    };

    let mut out = Vec::with_capacity(cfg.n_tot as usize);
    for id in 0..cfg.n_tot {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let s = cfg
            .stratum_weights
            .iter()
            .position(|w| {
                acc += w;
                u < acc
            })
            .unwrap_or(last);

        let t1 = rng
            .random_bool(cfg.s1_inclusion[s])
            .then(|| arm(rng, cfg.choose_a[s]));
        let t2 = rng.random_bool(cfg.p2).then(|| arm(rng, cfg.xi_a));
        let received = t2.or(t1);
        let y = received.map(|a| rng.random_bool(cfg.response_prob.get(a)[s]));
        let y_cont = match (&components, received, y) {
            (Some(table), Some(a), Some(resp)) => {
                Some(table[s][resp as usize][a as usize].sample(rng))
            }
            _ => None,
        };
        out.push(IndividualRecord::new(id, s as u32 + 1, t1, t2, y, y_cont));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::tabulate_cells;
    use crate::rng::substream;

    #[test]
    fn default_truths() {
        let cfg = ScenarioConfig::default();
        assert!((cfg.binary_truth(Arm::A) - 0.68).abs() < 1e-12);
        assert!((cfg.binary_truth(Arm::B) - 0.54).abs() < 1e-12);
        assert!((cfg.truth(OutcomeKind::Binary, Target::Ate).unwrap() - 0.14).abs() < 1e-12);
        // 0.4 (0.5 * 10 + 0.5 * 2.5) + 0.6 (0.8 * 5 + 0.2 * 1)
        assert!((cfg.continuous_truth(Arm::A).unwrap() - 5.02).abs() < 1e-12);
        // 0.4 (0.3 * 15 + 0.7 * 7.5) + 0.6 (0.7 * 10 + 0.3 * 6)
        assert!((cfg.continuous_truth(Arm::B).unwrap() - 9.18).abs() < 1e-12);
    }

    #[test]
    fn json_defaults_and_aliases() {
        let cfg = ScenarioConfig::from_json_str(r#"{"nTot": 500, "p2": 0.05}"#).unwrap();
        assert_eq!(cfg.n_tot, 500);
        assert_eq!(cfg.stratum_weights, vec![0.4, 0.6]);
        let back: ScenarioConfig = serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
        let cont = ScenarioConfig::from_json_str(r#"{"outcome": "continuous"}"#).unwrap();
        assert_eq!(cont.outcome, OutcomeKind::Continuous);
    }

    #[test]
    fn invalid_configs_name_the_field() {
        let bad = |json: &str, field: &str| match ScenarioConfig::from_json_str(json) {
            Err(Error::InvalidInput { field: f, .. }) => assert!(f.starts_with(field), "{f}"),
            other => panic!("{json}: {other:?}"),
        };
        bad(r#"{"stratum_weights": [0.5, 0.6]}"#, "stratum_weights");
        bad(r#"{"p2": 1.5}"#, "p2");
        bad(r#"{"choose_a": [0.3]}"#, "choose_a");
        bad(r#"{"n_tot": 0}"#, "n_tot");
        bad(
            r#"{"outcome": "continuous", "continuous_components": [{"stratum": 1, "response": true, "arm": "A", "mean": 1, "sd": 0}]}"#,
            "continuous_components",
        );
        bad(
            r#"{"outcome": "continuous", "continuous_components": []}"#,
            "continuous_components",
        );
        assert!(matches!(
            ScenarioConfig::from_json_str(r#"{"n_tott": 5}"#),
            Err(Error::Json(_))
        ));
    }

    #[test]
    fn population_sizes_within_binomial_bounds() {
        let cfg = ScenarioConfig::default();
        let mut rng = substream(11, 0);
        let pop = generate_population(&cfg, &mut rng).unwrap();
        assert_eq!(pop.len(), 1000);
        let n1 = pop.iter().filter(|r| r.s1).count() as f64;
        let n2 = pop.iter().filter(|r| r.s2).count() as f64;
        let four_sigma = |p: f64| 4.0 * (1000.0 * p * (1.0 - p)).sqrt();
        assert!((n1 - 820.0).abs() < four_sigma(0.82));
        assert!((n2 - 100.0).abs() < four_sigma(0.1));
        assert_eq!(tabulate_cells(&pop, 1000).unwrap().cells().iter().sum::<u64>(), 1000);
        assert!(pop.iter().all(|r| r.validate().is_ok() && r.y_cont.is_none()));
    }

    #[test]
    fn continuous_population_has_outcomes_for_treated() {
        let cfg = ScenarioConfig {
            outcome: OutcomeKind::Continuous,
            ..Default::default()
        };
        let pop = generate_population(&cfg, &mut substream(3, 0)).unwrap();
        for r in &pop {
            assert_eq!(r.y_cont.is_some(), r.final_treatment.is_some());
        }
    }

    #[test]
    fn stream_indicators_are_uncorrelated() {
        let cfg = ScenarioConfig::default();
        let reps = 200u64;
        let (mut n, mut sx, mut sy, mut sxy) = (0.0, 0.0, 0.0, 0.0);
        for i in 0..reps {
            for r in generate_population(&cfg, &mut substream(21, i)).unwrap() {
                let (x, y) = (r.s1 as u8 as f64, r.s2 as u8 as f64);
                n += 1.0;
                sx += x;
                sy += y;
                sxy += x * y;
            }
        }
        let (mx, my) = (sx / n, sy / n);
        // for 0/1 indicators the second moments equal the means
        let corr = (sxy / n - mx * my) / ((mx - mx * mx) * (my - my * my)).sqrt();
        assert!(corr.abs() < 3.0 / n.sqrt(), "corr = {corr}");
    }

    #[test]
    fn stratum_shares_follow_weights() {
        let cfg = ScenarioConfig {
            n_tot: 200_000,
            ..Default::default()
        };
        let pop = generate_population(&cfg, &mut substream(8, 0)).unwrap();
        let share1 = pop.iter().filter(|r| r.stratum == 1).count() as f64 / 200_000.0;
        assert!((share1 - 0.4).abs() < 4.0 * (0.24f64 / 200_000.0).sqrt());
    }
}
