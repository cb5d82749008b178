//! Demonstration dataset files.
//!
//! ```json
//! {
//!   "name": "lasa-subset",
//!   "kind": "position",
//!   "dim": 2,
//!   "recording_frequency": null,
//!   "tasks": [
//!     { "task_name": "Angle", "demonstrations": [[[x, y], ...], ...] }
//!   ]
//! }
//! ```
//!
//! Quaternion datasets store scalar-first unit quaternions (`dim` = 4).

use std::fs;
use std::path::Path;

use anyhow::{bail, ensure, Context, Result};
use serde::{Deserialize, Serialize};

use clfd_core::node::{normalized_timestamps, DemonstrationSet, Trajectory};
use clfd_core::so3::{to_tangent_trajectory, QuaternionTrajectory, UnitQuaternion};

/// Largest accepted deviation of a stored quaternion from unit norm.
pub const UNIT_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataKind {
    Position,
    Quaternion,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskData {
    pub task_name: String,
    pub demonstrations: Vec<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetFile {
    pub name: String,
    pub kind: DataKind,
    pub dim: usize,
    #[serde(default)]
    pub recording_frequency: Option<f64>,
    pub tasks: Vec<TaskData>,
}

impl DatasetFile {
    /// Reads, validates and (for quaternion data) hemisphere-aligns a file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading dataset {}", path.display()))?;
        let mut data: DatasetFile =
            serde_json::from_str(&text).with_context(|| format!("parsing dataset {}", path.display()))?;
        data.validate()?;
        data.canonicalize();
        Ok(data)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string(self)?).with_context(|| format!("writing dataset {}", path.display()))
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(!self.tasks.is_empty(), "tasks: dataset has no tasks");
        if self.kind == DataKind::Quaternion {
            ensure!(self.dim == 4, "dim: quaternion datasets have dim 4, got {}", self.dim);
        }
        ensure!(self.dim > 0, "dim: must be positive");
        if let Some(f) = self.recording_frequency {
            ensure!(f.is_finite() && f > 0.0, "recording_frequency: must be positive, got {f}");
        }
        for (i, task) in self.tasks.iter().enumerate() {
            let field = format!("tasks[{i}]");
            ensure!(!task.demonstrations.is_empty(), "{field}.demonstrations: task has no demonstrations");
            let steps = task.demonstrations[0].len();
            ensure!(steps >= 2, "{field}.demonstrations[0]: needs at least 2 points, got {steps}");
            for (k, demo) in task.demonstrations.iter().enumerate() {
                ensure!(
                    demo.len() == steps,
                    "{field}.demonstrations[{k}]: expected {steps} points like demonstration 0, got {}",
                    demo.len()
                );
                for (t, point) in demo.iter().enumerate() {
                    let at = format!("{field}.demonstrations[{k}][{t}]");
                    ensure!(point.len() == self.dim, "{at}: expected {} values, got {}", self.dim, point.len());
                    ensure!(point.iter().all(|v| v.is_finite()), "{at}: non-finite value");
                    if self.kind == DataKind::Quaternion {
                        let norm = point.iter().map(|v| v * v).sum::<f64>().sqrt();
                        ensure!(
                            (norm - 1.0).abs() <= UNIT_TOLERANCE,
                            "{at}: quaternion norm {norm} is not unit within {UNIT_TOLERANCE}"
                        );
                    }
                }
            }
        }
        Ok(())
    }

    /// Sign-flips quaternions so consecutive samples share a hemisphere.
    /// Only negation is applied, so values stay bit-exact otherwise.
    pub fn canonicalize(&mut self) {
        if self.kind != DataKind::Quaternion {
            return;
        }
        for demo in self.tasks.iter_mut().flat_map(|t| t.demonstrations.iter_mut()) {
            for t in 1..demo.len() {
                let dot: f64 = demo[t].iter().zip(&demo[t - 1]).map(|(a, b)| a * b).sum();
                if dot < 0.0 {
                    demo[t].iter_mut().for_each(|v| *v = -*v);
                }
            }
        }
    }

    pub fn num_tasks(&self) -> usize {
        self.tasks.len()
    }

    /// Dimension of the trajectories the learner sees: the tangent space
    /// (3) for quaternion data.
    pub fn state_dim(&self) -> usize {
        match self.kind {
            DataKind::Position => self.dim,
            DataKind::Quaternion => 3,
        }
    }

    /// Every task subsampled to `steps` points (when given).
    pub fn subsampled(&self, steps: Option<usize>) -> Result<DatasetFile> {
        let Some(count) = steps else {
            return Ok(self.clone());
        };
        let mut out = self.clone();
        for (i, task) in out.tasks.iter_mut().enumerate() {
            let len = task.demonstrations[0].len();
            ensure!(count >= 2, "subsample_steps must be at least 2");
            if count >= len {
                continue;
            }
            let idx = clfd_core::node::subsample_indices(len, count)
                .with_context(|| format!("subsampling task {i}"))?;
            for demo in &mut task.demonstrations {
                *demo = idx.iter().map(|&j| demo[j].clone()).collect();
            }
        }
        // resampling changes the effective rate
        if let (Some(f), Some(first)) = (out.recording_frequency, self.tasks.first()) {
            let original = first.demonstrations[0].len();
            let now = out.tasks[0].demonstrations[0].len();
            out.recording_frequency = Some(f * (now - 1) as f64 / (original - 1) as f64);
        }
        Ok(out)
    }

    pub fn timestamps(&self, task: usize) -> Vec<f64> {
        normalized_timestamps(self.tasks[task].demonstrations[0].len(), self.recording_frequency)
    }

    /// Position demonstrations of one task, or the tangent-space form of
    /// quaternion demonstrations.
    pub fn demonstration_set(&self, task: usize) -> Result<DemonstrationSet> {
        let data = self.tasks.get(task).with_context(|| format!("no task {task}"))?;
        let ts = self.timestamps(task);
        let demos = match self.kind {
            DataKind::Position => data
                .demonstrations
                .iter()
                .map(|d| Trajectory::from_rows(d, ts.clone()))
                .collect::<clfd_core::Result<Vec<_>>>()?,
            DataKind::Quaternion => (0..data.demonstrations.len())
                .map(|k| {
                    let qt = self.quaternion_demo(task, k)?;
                    Ok(to_tangent_trajectory(&qt)?)
                })
                .collect::<Result<Vec<_>>>()?,
        };
        Ok(DemonstrationSet::new(data.task_name.clone(), demos, self.recording_frequency)?)
    }

    pub fn quaternion_demo(&self, task: usize, demo: usize) -> Result<QuaternionTrajectory> {
        if self.kind != DataKind::Quaternion {
            bail!("dataset '{}' holds positions, not quaternions", self.name);
        }
        let rows = &self.tasks[task].demonstrations[demo];
        let quats = rows
            .iter()
            .map(|q| UnitQuaternion::from_array_checked([q[0], q[1], q[2], q[3]], UNIT_TOLERANCE))
            .collect::<clfd_core::Result<Vec<_>>>()?;
        Ok(QuaternionTrajectory::new(quats, self.timestamps(task))?)
    }

    /// Total number of demonstration points, the denominator of storage
    /// metrics.
    pub fn point_count(&self) -> usize {
        self.tasks
            .iter()
            .flat_map(|t| t.demonstrations.iter())
            .map(Vec::len)
            .sum()
    }

    /// The dataset with its tasks rearranged.
    pub fn reordered(&self, order: &[usize]) -> Result<DatasetFile> {
        check_permutation(order, self.num_tasks())?;
        let mut out = self.clone();
        out.tasks = order.iter().map(|&i| self.tasks[i].clone()).collect();
        Ok(out)
    }
}

pub fn check_permutation(order: &[usize], n: usize) -> Result<()> {
    let mut seen = vec![false; n];
    ensure!(order.len() == n, "task_order has {} entries for {n} tasks", order.len());
    for &i in order {
        ensure!(i < n, "task_order names task {i}, dataset has {n}");
        ensure!(!seen[i], "task_order repeats task {i}");
        seen[i] = true;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal() -> DatasetFile {
        DatasetFile {
            name: "m".into(),
            kind: DataKind::Position,
            dim: 2,
            recording_frequency: None,
            tasks: vec![TaskData {
                task_name: "a".into(),
                demonstrations: vec![vec![vec![0.0, 0.0], vec![1.0, 1.0]], vec![vec![0.0, 0.1], vec![1.0, 1.1]]],
            }],
        }
    }

    #[test]
    fn minimal_file_validates() {
        minimal().validate().unwrap();
        let set = minimal().demonstration_set(0).unwrap();
        assert_eq!((set.len(), set.steps(), set.dim()), (2, 2, 2));
    }

    #[test]
    fn ragged_demonstrations_are_rejected() {
        let mut d = minimal();
        d.tasks[0].demonstrations[1].push(vec![2.0, 2.0]);
        let err = d.validate().unwrap_err().to_string();
        assert!(err.contains("tasks[0].demonstrations[1]"), "{err}");
    }

    #[test]
    fn wrong_point_width_names_the_point() {
        let mut d = minimal();
        d.tasks[0].demonstrations[0][1] = vec![1.0];
        let err = d.validate().unwrap_err().to_string();
        assert!(err.contains("tasks[0].demonstrations[0][1]"), "{err}");
    }

    #[test]
    fn non_unit_quaternion_is_rejected() {
        let d = DatasetFile {
            kind: DataKind::Quaternion,
            dim: 4,
            tasks: vec![TaskData {
                task_name: "q".into(),
                demonstrations: vec![vec![vec![1.0, 0.0, 0.0, 0.0], vec![1.0, 0.01, 0.0, 0.0]]],
            }],
            ..minimal()
        };
        assert!(d.validate().unwrap_err().to_string().contains("norm"));
    }

    #[test]
    fn canonicalization_flips_hemisphere() {
        let mut d = DatasetFile {
            kind: DataKind::Quaternion,
            dim: 4,
            tasks: vec![TaskData {
                task_name: "q".into(),
                demonstrations: vec![vec![vec![1.0, 0.0, 0.0, 0.0], vec![-1.0, 0.0, 0.0, 0.0]]],
            }],
            ..minimal()
        };
        d.canonicalize();
        assert_eq!(d.tasks[0].demonstrations[0][1], vec![1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn permutation_checks() {
        check_permutation(&[2, 0, 1], 3).unwrap();
        assert!(check_permutation(&[0, 0, 1], 3).is_err());
        assert!(check_permutation(&[0, 1], 3).is_err());
        assert!(check_permutation(&[0, 1, 3], 3).is_err());
    }

    #[test]
    fn subsampling_keeps_endpoints() {
        let mut d = minimal();
        d.tasks[0].demonstrations = vec![(0..10).map(|i| vec![i as f64, 0.0]).collect()];
        let s = d.subsampled(Some(4)).unwrap();
        let demo = &s.tasks[0].demonstrations[0];
        assert_eq!(demo.len(), 4);
        assert_eq!(demo[0][0], 0.0);
        assert_eq!(demo[3][0], 9.0);
    }
}
