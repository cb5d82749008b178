//! Sequential continual-learning experiments and their on-disk bundles.
//!
//! A bundle directory looks like
//!
//! ```text
//! <out>/config.json            configuration echo
//! <out>/dataset.json           the dataset as trained (reordered, subsampled)
//! <out>/metrics.json           metrics of every cell
//! <out>/summary.csv            one row per (method, seed)
//! <out>/<METHOD>/seed-<s>/     one cell
//!     eval_matrix.csv  ledger.json  metrics.json  timing.json
//!     predictions/     learner/     snapshots/after-<i>/
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use serde::{Deserialize, Serialize};

use clfd_core::cl_metrics::{accuracy_matrix, compute_metrics, dtw_threshold, EvaluationMatrix, MetricsRecord, RunLedger};
use clfd_core::node::{DemonstrationSet, Trajectory};
use clfd_core::so3::{from_tangent_trajectory, quat_traj_error};
use clfd_core::strategies::{Learner, Method};
use clfd_core::traj_metrics::position_errors;

use crate::config::{ExperimentConfig, TimeMeasure};
use crate::dataset::{DataKind, DatasetFile};

/// Which per-demo error decides accuracy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorMeasure {
    Dtw,
    QuatError,
}

/// One row of `eval_matrix.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub after_task: usize,
    pub eval_task: usize,
    pub demo_idx: usize,
    pub dtw: Option<f64>,
    pub frechet: Option<f64>,
    pub swept_area: Option<f64>,
    pub quat_error: Option<f64>,
}

impl EvalRow {
    pub fn error(&self, measure: ErrorMeasure) -> Option<f64> {
        match measure {
            ErrorMeasure::Dtw => self.dtw,
            ErrorMeasure::QuatError => self.quat_error,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellLedger {
    pub method: Method,
    pub seed: u64,
    pub task_names: Vec<String>,
    /// Dataset task index trained at each position.
    pub task_order: Vec<usize>,
    pub error_measure: ErrorMeasure,
    pub threshold: f64,
    pub time_measure: TimeMeasure,
    #[serde(flatten)]
    pub ledger: RunLedger,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub wall_clock_seconds: Vec<f64>,
    pub flops: Vec<u64>,
    pub final_losses: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellMetrics {
    pub method: Method,
    pub seed: u64,
    pub threshold: f64,
    pub accuracy_matrix: Vec<Vec<f64>>,
    pub largest_model_size: usize,
    #[serde(flatten)]
    pub metrics: MetricsRecord,
}

#[derive(Debug, Clone)]
pub struct CellResult {
    pub rows: Vec<EvalRow>,
    pub ledger: CellLedger,
    pub timing: Timing,
    pub learner: Learner,
}

impl CellResult {
    pub fn evaluation(&self) -> Result<EvaluationMatrix> {
        evaluation_matrix(&self.rows, self.ledger.task_names.len(), self.ledger.error_measure)
    }
}

pub fn evaluation_matrix(rows: &[EvalRow], num_tasks: usize, measure: ErrorMeasure) -> Result<EvaluationMatrix> {
    let mut cells = vec![vec![Vec::new(); num_tasks]; num_tasks];
    for r in rows {
        let e = r
            .error(measure)
            .with_context(|| format!("row ({}, {}, {}) lacks its error", r.after_task, r.eval_task, r.demo_idx))?;
        ensure!(r.after_task < num_tasks && r.eval_task <= r.after_task, "row outside the evaluated region");
        cells[r.after_task][r.eval_task].push(e);
    }
    let mut ev = EvaluationMatrix::new(num_tasks);
    for (i, row) in cells.into_iter().enumerate() {
        for (j, errs) in row.into_iter().enumerate().take(i + 1) {
            ev.set(i, j, errs)?;
        }
    }
    ev.validate()?;
    Ok(ev)
}

/// Reorders and subsamples the dataset as the configuration asks.
pub fn prepare_dataset(cfg: &ExperimentConfig, data: &DatasetFile) -> Result<(DatasetFile, Vec<usize>)> {
    let order = cfg
        .task_order
        .clone()
        .unwrap_or_else(|| (0..data.num_tasks()).collect());
    let prepared = data.reordered(&order)?.subsampled(cfg.subsample_steps)?;
    Ok((prepared, order))
}

pub fn demonstration_sets(data: &DatasetFile) -> Result<Vec<DemonstrationSet>> {
    (0..data.num_tasks()).map(|i| data.demonstration_set(i)).collect()
}

/// Accuracy threshold for the dataset: a multiple of the largest
/// inter-demonstration DTW for positions, a fixed angle for orientations.
pub fn accuracy_threshold(cfg: &ExperimentConfig, data: &DatasetFile, sets: &[DemonstrationSet]) -> Result<(ErrorMeasure, f64)> {
    Ok(match data.kind {
        DataKind::Position => (
            ErrorMeasure::Dtw,
            dtw_threshold(sets.iter().map(DemonstrationSet::demos), cfg.threshold_multiplier)?,
        ),
        DataKind::Quaternion => (ErrorMeasure::QuatError, cfg.orientation_threshold_deg.to_radians()),
    })
}

/// Prediction for one demonstration: the learner starts from the demo's
/// first state and follows its timestamps.
pub fn predict_demo(learner: &Learner, task: usize, demo: &Trajectory) -> Result<Trajectory> {
    Ok(learner.predict(task, &demo.start(), demo.timestamps())?)
}

/// Evaluates tasks `0..=after` on every demonstration.
pub fn evaluate(learner: &Learner, data: &DatasetFile, sets: &[DemonstrationSet], after: usize) -> Result<Vec<EvalRow>> {
    let mut rows = Vec::new();
    for (j, set) in sets.iter().enumerate().take(after + 1) {
        for (k, demo) in set.demos().iter().enumerate() {
            let pred = predict_demo(learner, j, demo)?;
            let row = match data.kind {
                DataKind::Position => {
                    let e = position_errors(&pred, demo)?;
                    EvalRow {
                        after_task: after,
                        eval_task: j,
                        demo_idx: k,
                        dtw: Some(e.dtw),
                        frechet: Some(e.frechet),
                        swept_area: e.swept_area,
                        quat_error: None,
                    }
                }
                DataKind::Quaternion => {
                    let gt = data.quaternion_demo(j, k)?;
                    let q = from_tangent_trajectory(&pred, &gt.goal())?;
                    EvalRow {
                        after_task: after,
                        eval_task: j,
                        demo_idx: k,
                        dtw: None,
                        frechet: None,
                        swept_area: None,
                        quat_error: Some(quat_traj_error(&gt, &q)?),
                    }
                }
            };
            rows.push(row);
        }
    }
    Ok(rows)
}

/// Trains one (method, seed) cell over every task of the prepared dataset.
/// When `dir` is given, learner snapshots are written as training goes.
pub fn run_cell(
    cfg: &ExperimentConfig,
    data: &DatasetFile,
    order: &[usize],
    method: Method,
    seed: u64,
    dir: Option<&Path>,
) -> Result<CellResult> {
    let sets = demonstration_sets(data)?;
    let (measure, threshold) = accuracy_threshold(cfg, data, &sets)?;
    let mut learner = Learner::new(cfg.strategy_config(method, data.state_dim(), seed))?;
    let mut rows = Vec::new();
    let mut ledger = RunLedger {
        train_times: Vec::new(),
        param_sizes: Vec::new(),
        stored_sample_sizes: Vec::new(),
        total_dataset_size: data.point_count(),
        largest_model_size: None,
    };
    let mut timing = Timing {
        wall_clock_seconds: Vec::new(),
        flops: Vec::new(),
        final_losses: Vec::new(),
    };
    for (i, set) in sets.iter().enumerate() {
        log::info!("{method} seed {seed}: learning task {i} ({})", set.name);
        let report = learner
            .learn_task(set)
            .with_context(|| format!("{method} seed {seed}: learning task {i} ({})", set.name))?;
        ledger.train_times.push(match cfg.time_measure {
            TimeMeasure::Flops => report.flops as f64,
            TimeMeasure::WallClock => report.wall_clock_seconds,
        });
        ledger.param_sizes.push(learner.param_count());
        ledger.stored_sample_sizes.push(learner.stored_samples());
        timing.wall_clock_seconds.push(report.wall_clock_seconds);
        timing.flops.push(report.flops);
        timing.final_losses.push(report.final_loss().unwrap_or(f64::NAN));
        if let (Some(dir), true) = (dir, cfg.save_snapshots) {
            learner.save(&dir.join("snapshots").join(format!("after-{i}")))?;
        }
        rows.extend(evaluate(&learner, data, &sets, i).with_context(|| format!("evaluating after task {i}"))?);
    }
    Ok(CellResult {
        rows,
        ledger: CellLedger {
            method,
            seed,
            task_names: sets.iter().map(|s| s.name.clone()).collect(),
            task_order: order.to_vec(),
            error_measure: measure,
            threshold,
            time_measure: cfg.time_measure,
            ledger,
        },
        timing,
        learner,
    })
}

pub fn cell_metrics(ledger: &CellLedger, rows: &[EvalRow], largest_model_size: usize) -> Result<CellMetrics> {
    let ev = evaluation_matrix(rows, ledger.task_names.len(), ledger.error_measure)?;
    let a = accuracy_matrix(&ev, ledger.threshold);
    let mut run = ledger.ledger.clone();
    run.largest_model_size = Some(largest_model_size);
    Ok(CellMetrics {
        method: ledger.method,
        seed: ledger.seed,
        threshold: ledger.threshold,
        accuracy_matrix: a.0.clone(),
        largest_model_size,
        metrics: compute_metrics(&a, &run)?,
    })
}

pub fn cell_dir(out: &Path, method: Method, seed: u64) -> PathBuf {
    out.join(method.name()).join(format!("seed-{seed}"))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    // write-then-rename keeps readers from seeing half-written files
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, text).with_context(|| format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, path).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

pub fn write_eval_rows(path: &Path, rows: &[EvalRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_eval_rows(path: &Path) -> Result<Vec<EvalRow>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    r.deserialize()
        .collect::<std::result::Result<Vec<EvalRow>, _>>()
        .with_context(|| format!("parsing {}", path.display()))
}

fn write_trajectory_csv(path: &Path, traj: &Trajectory, header: &[String]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut head = vec!["t".to_string()];
    head.extend(header.iter().cloned());
    w.write_record(&head)?;
    for (t, row) in traj.timestamps().iter().zip(traj.rows()) {
        let mut rec = vec![t.to_string()];
        rec.extend(row.iter().map(f64::to_string));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

fn write_predictions(dir: &Path, learner: &Learner, data: &DatasetFile, sets: &[DemonstrationSet]) -> Result<()> {
    fs::create_dir_all(dir)?;
    for (j, set) in sets.iter().enumerate() {
        for (k, demo) in set.demos().iter().enumerate() {
            let pred = predict_demo(learner, j, demo)?;
            let path = dir.join(format!("task-{j}_demo-{k}.csv"));
            match data.kind {
                DataKind::Position => {
                    let header: Vec<String> = (0..pred.dim()).map(|i| format!("x{i}")).collect();
                    write_trajectory_csv(&path, &pred, &header)?;
                }
                DataKind::Quaternion => {
                    let goal = data.quaternion_demo(j, k)?.goal();
                    let q = from_tangent_trajectory(&pred, &goal)?;
                    let rows: Vec<Vec<f64>> = q.quats().iter().map(|q| q.to_array().to_vec()).collect();
                    let traj = Trajectory::from_rows(&rows, q.timestamps().to_vec())?;
                    let header = ["qw", "qx", "qy", "qz"].map(String::from);
                    write_trajectory_csv(&path, &traj, &header)?;
                }
            }
        }
    }
    Ok(())
}

/// Everything a finished run produced, in memory.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub cells: Vec<(CellLedger, CellMetrics)>,
}

impl RunSummary {
    pub fn metrics_for(&self, method: Method) -> Vec<&CellMetrics> {
        self.cells.iter().filter(|(l, _)| l.method == method).map(|(_, m)| m).collect()
    }
}

fn write_summary(out: &Path, metrics: &[CellMetrics]) -> Result<()> {
    write_json(&out.join("metrics.json"), &metrics)?;
    let mut w = csv::Writer::from_path(out.join("summary.csv"))?;
    w.write_record([
        "method",
        "seed",
        "acc",
        "final_accuracy",
        "rem",
        "ms",
        "te",
        "fs",
        "sss",
        "cl_score",
        "cl_stability",
    ])?;
    for m in metrics {
        let r = &m.metrics;
        w.write_record([
            m.method.name().to_string(),
            m.seed.to_string(),
            r.acc.to_string(),
            r.final_accuracy.to_string(),
            r.rem.to_string(),
            r.ms.to_string(),
            r.te.to_string(),
            r.fs.to_string(),
            r.sss.to_string(),
            r.cl_score.to_string(),
            r.cl_stability.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Runs every (method, seed) cell and writes the bundle into `out`.
pub fn run_experiment(cfg: &ExperimentConfig, dataset: &DatasetFile, out: &Path) -> Result<RunSummary> {
    cfg.validate()?;
    let (data, order) = prepare_dataset(cfg, dataset)?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    write_json(&out.join("config.json"), cfg)?;
    data.save(&out.join("dataset.json"))?;
    let sets = demonstration_sets(&data)?;

    let mut finished = Vec::new();
    for &method in &cfg.methods {
        for &seed in &cfg.seeds {
            let dir = cell_dir(out, method, seed);
            if dir.exists() {
                fs::remove_dir_all(&dir)?;
            }
            fs::create_dir_all(&dir)?;
            let cell = run_cell(cfg, &data, &order, method, seed, Some(&dir))?;
            write_eval_rows(&dir.join("eval_matrix.csv"), &cell.rows)?;
            write_json(&dir.join("ledger.json"), &cell.ledger)?;
            write_json(&dir.join("timing.json"), &cell.timing)?;
            cell.learner.save(&dir.join("learner"))?;
            if cfg.save_predictions {
                write_predictions(&dir.join("predictions"), &cell.learner, &data, &sets)?;
            }
            finished.push((dir, cell.ledger, cell.rows));
        }
    }

    // the size normalizer is shared by every method of the run
    let largest = largest_final_size(finished.iter().map(|(_, l, _)| l));
    let mut cells = Vec::new();
    for (dir, ledger, rows) in finished {
        let m = cell_metrics(&ledger, &rows, largest)?;
        write_json(&dir.join("metrics.json"), &m)?;
        cells.push((ledger, m));
    }
    write_summary(out, &cells.iter().map(|(_, m)| m.clone()).collect::<Vec<_>>())?;
    Ok(RunSummary { cells })
}

fn largest_final_size<'a>(ledgers: impl Iterator<Item = &'a CellLedger>) -> usize {
    ledgers
        .filter_map(|l| l.ledger.param_sizes.last().copied())
        .max()
        .unwrap_or(0)
}

/// Every cell directory in a bundle (or the directory itself when it is a
/// cell).
pub fn cell_dirs(bundle: &Path) -> Result<Vec<PathBuf>> {
    if bundle.join("ledger.json").exists() {
        return Ok(vec![bundle.to_path_buf()]);
    }
    let mut found = Vec::new();
    for method in Method::ALL {
        let mdir = bundle.join(method.name());
        if !mdir.is_dir() {
            continue;
        }
        let mut seeds: Vec<PathBuf> = fs::read_dir(&mdir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.join("ledger.json").exists())
            .collect();
        seeds.sort();
        found.extend(seeds);
    }
    if found.is_empty() {
        bail!("{} holds no experiment cells", bundle.display());
    }
    Ok(found)
}

/// The bundle root of a cell directory.
fn bundle_root(cell: &Path) -> Result<PathBuf> {
    cell.parent()
        .and_then(Path::parent)
        .map(Path::to_path_buf)
        .with_context(|| format!("{} is not inside a bundle", cell.display()))
}

pub fn load_cell(cell: &Path) -> Result<(CellLedger, Vec<EvalRow>)> {
    Ok((read_json(&cell.join("ledger.json"))?, read_eval_rows(&cell.join("eval_matrix.csv"))?))
}

pub fn load_bundle_dataset(cell: &Path) -> Result<DatasetFile> {
    DatasetFile::load(&bundle_root(cell)?.join("dataset.json"))
}

pub fn load_bundle_config(cell: &Path) -> Result<ExperimentConfig> {
    read_json(&bundle_root(cell)?.join("config.json"))
}

/// Result of re-evaluating a cell from its snapshots.
#[derive(Debug, Clone)]
pub struct Reevaluation {
    pub cell: PathBuf,
    pub rows: Vec<EvalRow>,
    pub matches_recorded: bool,
}

/// Recomputes the evaluation matrix of every cell from its learner
/// snapshots and compares it with the recorded one.
pub fn eval_bundle(bundle: &Path) -> Result<Vec<Reevaluation>> {
    let mut out = Vec::new();
    for cell in cell_dirs(bundle)? {
        let (ledger, recorded) = load_cell(&cell)?;
        let data = load_bundle_dataset(&cell)?;
        let sets = demonstration_sets(&data)?;
        let mut rows = Vec::new();
        for i in 0..ledger.task_names.len() {
            let snap = cell.join("snapshots").join(format!("after-{i}"));
            ensure!(
                snap.exists(),
                "{} has no snapshot after task {i}; train with save_snapshots enabled",
                cell.display()
            );
            let learner = Learner::load(&snap)?;
            rows.extend(evaluate(&learner, &data, &sets, i)?);
        }
        out.push(Reevaluation {
            matches_recorded: rows == recorded,
            cell,
            rows,
        });
    }
    Ok(out)
}

/// Metrics over one or more bundles with the model-size normalizer shared
/// across all of their cells.
pub fn compare_bundles(bundles: &[PathBuf]) -> Result<Vec<CellMetrics>> {
    let mut cells = Vec::new();
    for b in bundles {
        for dir in cell_dirs(b)? {
            cells.push(load_cell(&dir)?);
        }
    }
    let largest = largest_final_size(cells.iter().map(|(l, _)| l));
    cells
        .iter()
        .map(|(ledger, rows)| cell_metrics(ledger, rows, largest))
        .collect()
}
