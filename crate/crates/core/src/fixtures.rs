//! Reference datasets.

use crate::model::{DeviceData, TestPlan};

/// Electric Current data: 120 devices under four temperature/current
/// conditions, ten per cell, inspected at 2, 5 and 8 time units.
pub fn electric_current() -> DeviceData {
    let plan = TestPlan::balanced(
        vec![2.0, 5.0, 8.0],
        vec![vec![55.0, 70.0], vec![80.0, 70.0], vec![55.0, 100.0], vec![80.0, 100.0]],
        10,
    )
    .expect("valid plan");
    DeviceData::new(plan, vec![vec![4, 8, 9, 8], vec![7, 9, 9, 9], vec![6, 10, 9, 10]]).expect("valid counts")
}

/// Normal operating condition used for reliability predictions on this data.
pub const ELECTRIC_CURRENT_NORMAL: [f64; 2] = [25.0, 35.0];
