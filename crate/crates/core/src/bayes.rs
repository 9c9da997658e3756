//! Jeffreys-Dirichlet posterior over the 17 cells and percentile credible intervals.
//!
//! Draw `j` uses substream `j` of the caller's seed: 17 unit-scale gamma variates with
//! shapes `c_k + 0.5`, normalized to probabilities and scaled by `n_tot` into
//! real-valued posterior counts.

use std::io::Write;

use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::binary::{crc_means_from_counts, psi_hat_from_counts, Interval, IntervalKind, Target};
use crate::error::Result;
use crate::model::{Arm, CellCounts, CellVector, NUM_CELLS};
use crate::rng::substream;
use crate::stats::percentile_bounds;

#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorDraw {
    pub probs: CellVector,
    /// `n_tot * probs`, left unrounded.
    pub counts: CellVector,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PosteriorEstimator {
    #[serde(rename = "CRC")]
    Crc,
    PsiHat,
}

struct DirichletSampler {
    gammas: [Gamma<f64>; NUM_CELLS],
    n_tot: f64,
}

impl DirichletSampler {
    fn new(cells: &CellCounts) -> Self {
        DirichletSampler {
            gammas: cells
                .cells()
                .map(|c| Gamma::new(c as f64 + 0.5, 1.0).expect("positive gamma shape")),
            n_tot: cells.n_tot() as f64,
        }
    }

    fn draw(&self, seed: u64, index: u64) -> PosteriorDraw {
        let mut rng = substream(seed, index);
        let mut g = [0.0; NUM_CELLS];
        for (x, dist) in g.iter_mut().zip(&self.gammas) {
            *x = dist.sample(&mut rng);
        }
        let total: f64 = g.iter().sum();
        let probs = g.map(|x| x / total);
        PosteriorDraw {
            probs,
            counts: probs.map(|p| p * self.n_tot),
        }
    }
}

pub fn posterior_draws(cells: &CellCounts, n_draws: usize, seed: u64) -> Vec<PosteriorDraw> {
    let sampler = DirichletSampler::new(cells);
    (0..n_draws as u64).map(|j| sampler.draw(seed, j)).collect()
}

/// Posterior values of `mu_A`, `mu_B` and their difference, one entry per draw.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PosteriorSample {
    pub mu_a: Vec<f64>,
    pub mu_b: Vec<f64>,
    pub ate: Vec<f64>,
}

impl PosteriorSample {
    pub fn len(&self) -> usize {
        self.mu_a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mu_a.is_empty()
    }

    pub fn values(&self, target: Target) -> &[f64] {
        match target {
            Target::Arm(Arm::A) => &self.mu_a,
            Target::Arm(Arm::B) => &self.mu_b,
            Target::Ate => &self.ate,
        }
    }

    /// Equal-tailed percentile interval for `target`.
    pub fn interval(&self, target: Target, level: f64) -> Interval {
        let mut v = self.values(target).to_vec();
        let (lower, upper) = percentile_bounds(&mut v, level);
        Interval {
            kind: IntervalKind::Credible,
            level,
            lower,
            upper,
        }
    }

    /// CSV with columns `draw_index,mu_a,mu_b,ate`.
    pub fn write_csv(&self, w: impl Write) -> Result<()> {
        let mut writer = csv::Writer::from_writer(w);
        writer.write_record(["draw_index", "mu_a", "mu_b", "ate"])?;
        for i in 0..self.len() {
            writer.write_record([
                i.to_string(),
                self.mu_a[i].to_string(),
                self.mu_b[i].to_string(),
                self.ate[i].to_string(),
            ])?;
        }
        writer.flush()?;
        Ok(())
    }
}

fn evaluate(estimator: PosteriorEstimator, counts: &CellVector, n_tot: f64) -> (f64, f64) {
    // every posterior cell is strictly positive, so no denominator vanishes
    match estimator {
        PosteriorEstimator::Crc => {
            crc_means_from_counts(counts, n_tot).expect("posterior cells are positive")
        }
        PosteriorEstimator::PsiHat => {
            let arm = |a| {
                psi_hat_from_counts(counts, n_tot, a)
                    .map(|(mu, _)| mu)
                    .expect("posterior cells are positive")
            };
            (arm(Arm::A), arm(Arm::B))
        }
    }
}

/// Evaluates each estimator on the same posterior draws.
pub fn posterior_samples(
    cells: &CellCounts,
    estimators: &[PosteriorEstimator],
    n_draws: usize,
    seed: u64,
) -> Vec<PosteriorSample> {
    let sampler = DirichletSampler::new(cells);
    let mut out: Vec<PosteriorSample> = estimators
        .iter()
        .map(|_| PosteriorSample {
            mu_a: Vec::with_capacity(n_draws),
            mu_b: Vec::with_capacity(n_draws),
            ate: Vec::with_capacity(n_draws),
        })
        .collect();
    for j in 0..n_draws as u64 {
        let draw = sampler.draw(seed, j);
        for (est, sample) in estimators.iter().zip(out.iter_mut()) {
            let (a, b) = evaluate(*est, &draw.counts, sampler.n_tot);
            sample.mu_a.push(a);
            sample.mu_b.push(b);
            sample.ate.push(a - b);
        }
    }
    out
}

pub fn posterior_sample(
    cells: &CellCounts,
    estimator: PosteriorEstimator,
    n_draws: usize,
    seed: u64,
) -> PosteriorSample {
    posterior_samples(cells, &[estimator], n_draws, seed)
        .pop()
        .expect("one estimator requested")
}

pub fn credible_interval(
    cells: &CellCounts,
    estimator: PosteriorEstimator,
    target: Target,
    n_draws: usize,
    level: f64,
    seed: u64,
) -> Interval {
    posterior_sample(cells, estimator, n_draws, seed).interval(target, level)
}
