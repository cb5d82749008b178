use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use clfd::experiment::{cell_dirs, compare_bundles, eval_bundle, run_experiment, write_eval_rows};
use clfd::studies::{load_orders, robustness_for_cell, run_task_order_study};
use clfd::{gen_synthetic, DatasetFile, ExperimentConfig, SyntheticSpec};

#[derive(Parser)]
#[command(name = "clfd", version, about = "Continual learning from demonstration experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset from a shape specification.
    GenSynthetic {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train every configured (method, seed) cell and write a result bundle.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the dataset named in the config.
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Overrides the output directory named in the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Recompute evaluation matrices from the saved learner snapshots.
    Eval {
        #[arg(long)]
        bundle: PathBuf,
    },
    /// Print metrics as CSV, sharing the model-size normalizer across bundles.
    Metrics {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long, num_args = 1..)]
        compare: Vec<PathBuf>,
    },
    /// Start a learned task from random points around its demonstrated start.
    Robustness {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        task: usize,
        #[arg(long, default_value_t = 100)]
        samples: usize,
        #[arg(long)]
        radius: f64,
    },
    /// Repeat an experiment for several task orders.
    TaskOrder {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        orders: PathBuf,
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn resolve(cfg: &ExperimentConfig, dataset: Option<PathBuf>, out: Option<PathBuf>) -> Result<(DatasetFile, PathBuf)> {
    let Some(dataset) = dataset.or_else(|| cfg.dataset.clone()) else {
        bail!("no dataset: pass --dataset or set \"dataset\" in the config");
    };
    let Some(out) = out.or_else(|| cfg.output_dir.clone()) else {
        bail!("no output directory: pass --out or set \"output_dir\" in the config");
    };
    Ok((DatasetFile::load(&dataset)?, out))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenSynthetic { spec, out } => {
            let text = fs::read_to_string(&spec).with_context(|| format!("reading {}", spec.display()))?;
            let spec: SyntheticSpec = serde_json::from_str(&text).with_context(|| format!("parsing {}", spec.display()))?;
            let data = gen_synthetic(&spec)?;
            data.save(&out)?;
            println!("wrote {} tasks to {}", data.num_tasks(), out.display());
        }
        Command::Train { config, dataset, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            let (data, out) = resolve(&cfg, dataset, out)?;
            let summary = run_experiment(&cfg, &data, &out)?;
            println!("method,seed,acc,final_accuracy,rem,cl_score");
            for (_, m) in &summary.cells {
                let r = &m.metrics;
                println!("{},{},{},{},{},{}", m.method, m.seed, r.acc, r.final_accuracy, r.rem, r.cl_score);
            }
        }
        Command::Eval { bundle } => {
            let mut mismatched = 0;
            for re in eval_bundle(&bundle)? {
                write_eval_rows(&re.cell.join("eval_matrix.reeval.csv"), &re.rows)?;
                println!("{}: {}", re.cell.display(), if re.matches_recorded { "matches" } else { "differs" });
                mismatched += usize::from(!re.matches_recorded);
            }
            if mismatched > 0 {
                bail!("{mismatched} cell(s) differ from their recorded evaluation");
            }
        }
        Command::Metrics { bundle, compare } => {
            let mut bundles = vec![bundle];
            bundles.extend(compare);
            let mut w = csv::Writer::from_writer(std::io::stdout());
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
                "cl_score_sum",
                "cl_stability",
                "largest_model_size",
            ])?;
            for m in compare_bundles(&bundles)? {
                let r = &m.metrics;
                w.write_record([
                    m.method.to_string(),
                    m.seed.to_string(),
                    r.acc.to_string(),
                    r.final_accuracy.to_string(),
                    r.rem.to_string(),
                    r.ms.to_string(),
                    r.te.to_string(),
                    r.fs.to_string(),
                    r.sss.to_string(),
                    r.cl_score.to_string(),
                    r.cl_score_sum.to_string(),
                    r.cl_stability.to_string(),
                    m.largest_model_size.to_string(),
                ])?;
            }
            w.flush()?;
        }
        Command::Robustness { bundle, task, samples, radius } => {
            for cell in cell_dirs(&bundle)? {
                let report = robustness_for_cell(&cell, task, samples, radius)?;
                let path = cell.join(format!("robustness_task-{task}.csv"));
                report.write_csv(&path)?;
                println!(
                    "{}: median end distance {} ({})",
                    cell.display(),
                    report.median_end_delta(),
                    path.display()
                );
            }
        }
        Command::TaskOrder { config, orders, dataset, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            let (data, out) = resolve(&cfg, dataset, out)?;
            let orders = load_orders(&orders)?;
            let rows = run_task_order_study(&cfg, &data, &orders, &out)?;
            println!("{} rows written to {}", rows.len(), Path::new(&out).join("task_order_report.csv").display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let line = serde_json::json!({ "error": format!("{e:#}") });
            eprintln!("{line}");
            ExitCode::FAILURE
        }
    }
}
