//! Continual-learning evaluation.
//!
//! After every task `i`, all tasks `j ≤ i` are evaluated. Each cell of the
//! resulting lower-triangular matrix holds one error per demonstration; a
//! DTW threshold turns those into accuracies, from which the six base
//! metrics (ACC, REM, MS, TE, FS, SSS) and their aggregates are computed.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::node::Trajectory;
use crate::traj_metrics::dtw;

/// `errors[i][j]` (for `j ≤ i`): per-demo errors on task `j` after training
/// task `i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationMatrix {
    errors: Vec<Vec<Vec<f64>>>,
}

impl EvaluationMatrix {
    pub fn new(num_tasks: usize) -> Self {
        Self {
            errors: (0..num_tasks).map(|i| vec![Vec::new(); i + 1]).collect(),
        }
    }

    pub fn num_tasks(&self) -> usize {
        self.errors.len()
    }

    pub fn set(&mut self, after_task: usize, eval_task: usize, errors: Vec<f64>) -> Result<()> {
        if eval_task > after_task || after_task >= self.num_tasks() {
            return Err(Error::InvalidInput(format!(
                "cell ({after_task}, {eval_task}) is outside the lower triangle of {} tasks",
                self.num_tasks()
            )));
        }
        self.errors[after_task][eval_task] = errors;
        Ok(())
    }

    pub fn get(&self, after_task: usize, eval_task: usize) -> Option<&[f64]> {
        self.errors
            .get(after_task)
            .and_then(|row| row.get(eval_task))
            .map(Vec::as_slice)
    }

    /// Fails when any cell of the lower triangle is empty.
    pub fn validate(&self) -> Result<()> {
        for (i, row) in self.errors.iter().enumerate() {
            for (j, cell) in row.iter().enumerate() {
                if cell.is_empty() {
                    return Err(Error::InvalidInput(format!("evaluation cell ({i}, {j}) is empty")));
                }
            }
        }
        Ok(())
    }
}

/// Largest pairwise inter-demo DTW over all tasks, times `multiplier`.
pub fn dtw_threshold<'a, I>(tasks: I, multiplier: f64) -> Result<f64>
where
    I: IntoIterator<Item = &'a [Trajectory]>,
{
    let mut worst: f64 = 0.0;
    for (k, demos) in tasks.into_iter().enumerate() {
        if demos.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "task {k} has {} demonstration(s); a threshold needs at least 2",
                demos.len()
            )));
        }
        for a in 0..demos.len() {
            for b in a + 1..demos.len() {
                worst = worst.max(dtw(&demos[a], &demos[b])?);
            }
        }
    }
    Ok(worst * multiplier)
}

/// Lower-triangular accuracies: `A[i][j]` is the fraction of task-`j`
/// predictions whose error is below `threshold`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyMatrix(pub Vec<Vec<f64>>);

impl AccuracyMatrix {
    pub fn num_tasks(&self) -> usize {
        self.0.len()
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.0[i][j]
    }
}

pub fn accuracy_matrix(ev: &EvaluationMatrix, threshold: f64) -> AccuracyMatrix {
    AccuracyMatrix(
        ev.errors
            .iter()
            .map(|row| {
                row.iter()
                    .map(|cell| {
                        if cell.is_empty() {
                            0.0
                        } else {
                            cell.iter().filter(|&&e| e < threshold).count() as f64 / cell.len() as f64
                        }
                    })
                    .collect()
            })
            .collect(),
    )
}

/// Resource usage of one run, one entry per task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunLedger {
    /// Time to learn each task. Any positive unit works; only ratios matter.
    pub train_times: Vec<f64>,
    /// Trainable scalars after each task.
    pub param_sizes: Vec<usize>,
    /// Stored training points after each task.
    pub stored_sample_sizes: Vec<usize>,
    /// Points in the whole dataset (all tasks).
    pub total_dataset_size: usize,
    /// Size of the largest compared model; defaults to this run's final size.
    pub largest_model_size: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub acc: f64,
    pub rem: f64,
    pub ms: f64,
    pub te: f64,
    pub fs: f64,
    pub sss: f64,
    /// Mean of the six base metrics.
    pub cl_score: f64,
    /// Plain sum of the six base metrics.
    pub cl_score_sum: f64,
    /// One minus the sample standard deviation of the six base metrics.
    pub cl_stability: f64,
    pub bwt: f64,
    /// Mean accuracy over all tasks after the last one was learned.
    pub final_accuracy: f64,
}

impl MetricsRecord {
    pub fn base(&self) -> [f64; 6] {
        [self.acc, self.rem, self.ms, self.te, self.fs, self.sss]
    }
}

pub fn compute_metrics(a: &AccuracyMatrix, ledger: &RunLedger) -> Result<MetricsRecord> {
    let m = a.num_tasks();
    if m == 0 {
        return Err(Error::InvalidInput("no tasks to evaluate".into()));
    }
    for (name, len) in [
        ("train_times", ledger.train_times.len()),
        ("param_sizes", ledger.param_sizes.len()),
        ("stored_sample_sizes", ledger.stored_sample_sizes.len()),
    ] {
        if len != m {
            return Err(Error::ShapeMismatch(format!("{name} has {len} entries for {m} tasks")));
        }
    }
    if let Some(i) = ledger.train_times.iter().position(|&t| !(t > 0.0)) {
        return Err(Error::InvalidInput(format!("training time of task {i} is not positive")));
    }
    if let Some(i) = ledger.param_sizes.iter().position(|&s| s == 0) {
        return Err(Error::InvalidInput(format!("model size after task {i} is zero")));
    }
    if ledger.total_dataset_size == 0 {
        return Err(Error::InvalidInput("total dataset size is zero".into()));
    }
    let final_size = ledger.param_sizes[m - 1];
    let largest = ledger.largest_model_size.unwrap_or(final_size);
    if largest < final_size {
        return Err(Error::InvalidInput(format!(
            "largest compared model ({largest}) is smaller than this model ({final_size})"
        )));
    }
    let mf = m as f64;

    let mut acc_sum = 0.0;
    let mut cells = 0usize;
    let mut bwt_sum = 0.0;
    let mut bwt_cells = 0usize;
    for i in 0..m {
        for j in 0..=i {
            acc_sum += a.at(i, j);
            cells += 1;
            if j < i {
                bwt_sum += a.at(i, j) - a.at(j, j);
                bwt_cells += 1;
            }
        }
    }
    let acc = acc_sum / cells as f64;
    let bwt = if bwt_cells == 0 {
        0.0
    } else {
        bwt_sum / bwt_cells as f64
    };
    let rem = 1.0 - bwt.min(0.0).abs();

    let size0 = ledger.param_sizes[0] as f64;
    let ms = (ledger.param_sizes.iter().map(|&s| size0 / s as f64).sum::<f64>() / mf).min(1.0);

    let total = ledger.total_dataset_size as f64;
    let storage = ledger
        .stored_sample_sizes
        .iter()
        .map(|&s| s as f64 / total)
        .sum::<f64>()
        / mf;
    let sss = 1.0 - storage.min(1.0);

    let t0 = ledger.train_times[0];
    let te = (ledger.train_times.iter().map(|t| t0 / t).sum::<f64>() / mf).min(1.0);

    let fs = 1.0 - final_size as f64 / largest as f64;

    let base = [acc, rem, ms, te, fs, sss];
    let sum: f64 = base.iter().sum();
    let mean = sum / 6.0;
    let var = base.iter().map(|c| (c - mean) * (c - mean)).sum::<f64>() / 5.0;

    let last = &a.0[m - 1];
    let final_accuracy = last.iter().sum::<f64>() / last.len() as f64;

    Ok(MetricsRecord {
        acc,
        rem,
        ms,
        te,
        fs,
        sss,
        cl_score: mean,
        cl_score_sum: sum,
        cl_stability: 1.0 - var.sqrt(),
        bwt,
        final_accuracy,
    })
}
