//! Built-in data sets.

use crate::model::CellCounts;

/// Synthetic vaccine-response population of 2000: Stream 1 is an observational
/// cohort, Stream 2 a randomized sample of 169.
pub const TUNISIA_CELLS: [u64; 17] = [
    12, 1, 281, 33, 33, 0, 18, 5, 490, 58, 14, 2, 40, 0, 39, 5, 969,
];
pub const TUNISIA_N_TOT: u64 = 2000;

pub fn tunisia() -> CellCounts {
    CellCounts::new(TUNISIA_CELLS, TUNISIA_N_TOT).expect("fixture is consistent")
}

/// Looks up a fixture by name.
pub fn by_name(name: &str) -> Option<CellCounts> {
    match name {
        "tunisia" => Some(tunisia()),
        _ => None,
    }
}
