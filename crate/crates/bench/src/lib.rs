//! Inputs shared by the benchmarks.

use oneshot_core::sim::{balanced_design, generate_dataset};
use oneshot_core::DeviceData;

/// A replicate of the balanced simulation design with `k_cell` devices per cell.
pub fn balanced_sample(k_cell: u64, contaminated: bool) -> DeviceData {
    let mut design = balanced_design(k_cell, 0.0, 6.0, contaminated).expect("valid design");
    design.seed = 2024;
    generate_dataset(&design, 0).expect("valid replicate")
}
