//! Warm-start hyperparameter optimization over precomputed surrogate tables.

mod gp;
mod grid;
mod search;
mod surrogate;

pub use gp::{matern32, GpModel};
pub use grid::{Axis, AxisLevels, ConfigGrid, GridManifest};
pub use search::{
    adtm, gp_smbo, random_search, result_rows, warm_start, write_results_csv, HpoRun,
    LibraryEntry, ResultRow,
};
pub use surrogate::{synth_surrogate, SurrogateTable, SynthCorpus};
