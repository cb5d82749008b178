//! Shared inputs for the benchmarks.

use clfd_core::node::{normalized_timestamps, DemonstrationSet, Trajectory};

/// A 2-D task of `demos` wavy demonstrations with `steps` points each.
pub fn wave_task(demos: usize, steps: usize) -> DemonstrationSet {
    let ts = normalized_timestamps(steps, None);
    let sets = (0..demos)
        .map(|k| {
            let rows: Vec<Vec<f64>> = ts
                .iter()
                .map(|&t| vec![-1.0 + t, 0.3 * (6.0 * t + 0.1 * k as f64).sin()])
                .collect();
            Trajectory::from_rows(&rows, ts.clone()).expect("valid synthetic rows")
        })
        .collect();
    DemonstrationSet::new("wave", sets, None).expect("uniform demonstrations")
}
