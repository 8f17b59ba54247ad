//! `rpg train`: run a configuration and write its artifacts.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use rpg_core::metric_net::{checkpoint_to_bytes, checkpoint_to_json};
use rpg_core::trainer::{run_training_with, RunSummary, TrainConfig};

use crate::error::{CliError, CliResult};
use crate::metrics_log::{LogRow, MetricsWriter};

pub const METRICS_FILE: &str = "metrics.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const CHECKPOINT_FILE: &str = "metric.rpgp";
pub const CHECKPOINT_JSON_FILE: &str = "metric.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryFile {
    pub seed: u64,
    pub updates: usize,
    pub final_return: f64,
    pub best_return: f64,
    pub ratio_below_one: f64,
    pub final_cost: Option<f64>,
    pub optimal_cost: Option<f64>,
    pub aborted: Option<String>,
    pub config: TrainConfig,
}

impl From<&RunSummary> for SummaryFile {
    fn from(s: &RunSummary) -> Self {
        Self {
            seed: s.config.seed,
            updates: s.records.len(),
            final_return: s.final_return,
            best_return: s.best_return,
            ratio_below_one: s.ratio_below_one,
            final_cost: s.final_cost,
            optimal_cost: s.optimal_cost,
            aborted: s.aborted.clone(),
            config: s.config.clone(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub summary: SummaryFile,
    pub files: Vec<PathBuf>,
}

/// Runs `cfg`, streaming the metrics log, then writes the summary and the
/// metric-network checkpoint (binary and JSON) into `out`.
pub fn train(cfg: &TrainConfig, out: &Path) -> CliResult<TrainOutput> {
    std::fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    let csv_path = out.join(METRICS_FILE);
    let file = File::create(&csv_path).map_err(|e| CliError::io(&csv_path, e))?;
    let mut log = MetricsWriter::new(BufWriter::new(file))?;
    let mut log_error = None;
    let run = run_training_with(cfg, |record| {
        if log_error.is_none() {
            log_error = log.write(&LogRow::from(record)).err();
        }
    })?;
    if let Some(e) = log_error {
        return Err(e);
    }
    log.flush()?;

    let summary = SummaryFile::from(&run.summary);
    let summary_path = out.join(SUMMARY_FILE);
    let text = serde_json::to_string_pretty(&summary)? + "\n";
    std::fs::write(&summary_path, text).map_err(|e| CliError::io(&summary_path, e))?;

    let bin_path = out.join(CHECKPOINT_FILE);
    std::fs::write(&bin_path, checkpoint_to_bytes(&run.net, &run.phi)?).map_err(|e| CliError::io(&bin_path, e))?;
    let json_path = out.join(CHECKPOINT_JSON_FILE);
    let json = serde_json::to_string(&checkpoint_to_json(&run.net, &run.phi))? + "\n";
    std::fs::write(&json_path, json).map_err(|e| CliError::io(&json_path, e))?;

    Ok(TrainOutput { summary, files: vec![csv_path, summary_path, bin_path, json_path] })
}
