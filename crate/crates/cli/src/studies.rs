//! Robustness studies: perturbed starting positions and task orderings.

use std::fs;
use std::path::Path;

use anyhow::{ensure, Context, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use clfd_core::strategies::{Learner, Method};

use crate::config::ExperimentConfig;
use crate::dataset::{check_permutation, DataKind, DatasetFile};
use crate::experiment::{cell_dir, load_bundle_dataset, read_eval_rows, run_experiment, CellLedger, EvalRow};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StartSample {
    pub sample_idx: usize,
    pub start_delta: f64,
    pub end_delta: f64,
    pub start: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobustnessReport {
    pub method: Method,
    pub task: usize,
    pub radius: f64,
    pub samples: Vec<StartSample>,
}

impl RobustnessReport {
    pub fn median_end_delta(&self) -> f64 {
        median(self.samples.iter().map(|s| s.end_delta).collect())
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
        let dim = self.samples.first().map_or(0, |s| s.start.len());
        let mut head = vec!["sample_idx".to_string(), "start_delta".into(), "end_delta".into()];
        head.extend((0..dim).map(|i| format!("start_x{i}")));
        w.write_record(&head)?;
        for s in &self.samples {
            let mut rec = vec![s.sample_idx.to_string(), s.start_delta.to_string(), s.end_delta.to_string()];
            rec.extend(s.start.iter().map(f64::to_string));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn median(mut values: Vec<f64>) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Uniform sample from the closed ball of `radius` around `center`.
pub fn sample_in_ball<R: Rng>(center: &[f64], radius: f64, rng: &mut R) -> Vec<f64> {
    let d = center.len();
    let dir: Vec<f64> = (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
    let r = radius * rng.random::<f64>().powf(1.0 / d as f64);
    center.iter().zip(&dir).map(|(c, u)| c + r * u / norm).collect()
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Starts the learned `task` from `n_samples` points drawn uniformly in a
/// ball around the first demonstration's start and records how far each
/// prediction ends from the demonstrated goal.
pub fn robustness_start(
    learner: &Learner,
    data: &DatasetFile,
    task: usize,
    n_samples: usize,
    radius: f64,
    seed: u64,
) -> Result<RobustnessReport> {
    ensure!(data.kind == DataKind::Position, "start-position robustness needs a position dataset");
    ensure!(radius >= 0.0 && radius.is_finite(), "radius must be non-negative");
    ensure!(task < learner.tasks_learned(), "unknown task {task}");
    let set = data.demonstration_set(task)?;
    let demo = &set.demos()[0];
    let center = demo.start();
    let goal = demo.end();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = Vec::with_capacity(n_samples);
    for idx in 0..n_samples {
        let start = sample_in_ball(&center, radius, &mut rng);
        let pred = learner.predict(task, &start, demo.timestamps())?;
        samples.push(StartSample {
            sample_idx: idx,
            start_delta: distance(&start, &center),
            end_delta: distance(&pred.end(), &goal),
            start,
        });
    }
    Ok(RobustnessReport {
        method: learner.method(),
        task,
        radius,
        samples,
    })
}

/// Robustness study on a trained cell directory.
pub fn robustness_for_cell(cell: &Path, task: usize, n_samples: usize, radius: f64) -> Result<RobustnessReport> {
    let learner = Learner::load(&cell.join("learner"))?;
    let data = load_bundle_dataset(cell)?;
    let ledger: CellLedger = serde_json::from_str(&fs::read_to_string(cell.join("ledger.json"))?)?;
    robustness_start(&learner, &data, task, n_samples, radius, ledger.seed)
}

/// One row of the task-order report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderRow {
    pub order_idx: usize,
    pub order: String,
    pub method: Method,
    pub seed: u64,
    pub acc: f64,
    pub final_accuracy: f64,
    pub rem: f64,
    pub cl_score: f64,
    /// Mean DTW on each dataset task right after it was learned, indexed by
    /// the original task number, `;`-separated.
    pub diagonal_errors: String,
    /// Mean DTW on each dataset task after the last task.
    pub final_errors: String,
}

/// Per-dataset-task mean errors on the diagonal and final row.
pub fn order_curves(ledger: &CellLedger, rows: &[EvalRow]) -> (Vec<f64>, Vec<f64>) {
    let m = ledger.task_names.len();
    let mean = |after: usize, task: usize| {
        let errs: Vec<f64> = rows
            .iter()
            .filter(|r| r.after_task == after && r.eval_task == task)
            .filter_map(|r| r.error(ledger.error_measure))
            .collect();
        errs.iter().sum::<f64>() / errs.len().max(1) as f64
    };
    let mut diag = vec![0.0; m];
    let mut last = vec![0.0; m];
    for (pos, &orig) in ledger.task_order.iter().enumerate() {
        diag[orig] = mean(pos, pos);
        last[orig] = mean(m - 1, pos);
    }
    (diag, last)
}

fn join(values: &[f64]) -> String {
    values.iter().map(f64::to_string).collect::<Vec<_>>().join(";")
}

pub fn load_orders(path: &Path) -> Result<Vec<Vec<usize>>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading orders {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing orders {}", path.display()))
}

/// Runs the experiment once per task order (into `out/order-<k>`) and
/// collects the side-by-side report, also written to
/// `out/task_order_report.csv`.
pub fn run_task_order_study(
    cfg: &ExperimentConfig,
    dataset: &DatasetFile,
    orders: &[Vec<usize>],
    out: &Path,
) -> Result<Vec<OrderRow>> {
    ensure!(!orders.is_empty(), "at least one task order is required");
    for order in orders {
        check_permutation(order, dataset.num_tasks())?;
    }
    let mut report = Vec::new();
    for (k, order) in orders.iter().enumerate() {
        let mut run_cfg = cfg.clone();
        run_cfg.task_order = Some(order.clone());
        let dir = out.join(format!("order-{k}"));
        let summary = run_experiment(&run_cfg, dataset, &dir)?;
        for (ledger, metrics) in &summary.cells {
            let rows = read_eval_rows(&cell_dir(&dir, ledger.method, ledger.seed).join("eval_matrix.csv"))?;
            let (diag, last) = order_curves(ledger, &rows);
            report.push(OrderRow {
                order_idx: k,
                order: order.iter().map(usize::to_string).collect::<Vec<_>>().join("-"),
                method: ledger.method,
                seed: ledger.seed,
                acc: metrics.metrics.acc,
                final_accuracy: metrics.metrics.final_accuracy,
                rem: metrics.metrics.rem,
                cl_score: metrics.metrics.cl_score,
                diagonal_errors: join(&diag),
                final_errors: join(&last),
            });
        }
    }
    fs::create_dir_all(out)?;
    let mut w = csv::Writer::from_path(out.join("task_order_report.csv"))?;
    for row in &report {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(report)
}
