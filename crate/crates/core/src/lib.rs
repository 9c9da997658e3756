//! Capture-recapture estimation of treatment-response means and average treatment
//! effects in a closed population, combining an observational cohort (Stream 1)
//! with a small randomized anchor sample (Stream 2).
//!
//! Modules follow the analysis pipeline: [`model`] tabulates individual records into
//! the 17-cell observation table, [`binary`] holds the point estimators and delta-method
//! variances, [`bayes`] the Dirichlet credible intervals, [`continuous`] the
//! standardization estimator with bootstrap inference, and [`sim`] the scenario
//! generator and Monte Carlo harness.

pub mod bayes;
pub mod binary;
pub mod continuous;
pub mod error;
pub mod fixtures;
pub mod model;
pub mod rng;
pub mod sim;
pub mod stats;

pub use error::{Error, Result};
pub use model::{
    cell_probabilities, condense, tabulate_cells, Arm, CellCounts, CellVector, CondensedCounts,
    DesignParams, IndividualRecord, NUM_CELLS,
};
