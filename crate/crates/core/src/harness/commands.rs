use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::checkpoint::Checkpoint;
use super::config::RunConfig;
use super::pipeline::{evaluate, from_checkpoint, metrics_report, to_checkpoint, train, trial_split, RunData, TrainOutcome};
use crate::data::OpenSetSplit;
use crate::error::{Error, Result};
use crate::eval::{histogram, write_emb_csv, write_hist_csv, write_metrics_json, write_scores_csv, EmbRow, MetricsReport};

pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const TRAIN_LOG_FILE: &str = "train.log";
pub const RESOLVED_CONFIG_FILE: &str = "config.resolved";
pub const SPLIT_FILE: &str = "split.txt";
pub const METRICS_FILE: &str = "metrics.json";
pub const SCORES_FILE: &str = "scores.csv";
pub const AGGREGATE_FILE: &str = "aggregate.json";
pub const HIST_FILE: &str = "hist.csv";
pub const EMB_FILE: &str = "emb.csv";

/// Bins of exported score histograms.
pub const HIST_BINS: usize = 50;

fn write_train_outputs(out: &Path, cfg: &RunConfig, split: &OpenSetSplit, outcome: &TrainOutcome) -> Result<()> {
    std::fs::create_dir_all(out)?;
    to_checkpoint(&outcome.model, cfg, split)?.save(&out.join(CHECKPOINT_FILE))?;
    let mut log = String::new();
    for rec in &outcome.log {
        log.push_str(&rec.to_line());
        log.push('\n');
    }
    std::fs::write(out.join(TRAIN_LOG_FILE), log)?;
    std::fs::write(out.join(RESOLVED_CONFIG_FILE), cfg.to_text())?;
    std::fs::write(out.join(SPLIT_FILE), split.to_text())?;
    Ok(())
}

/// Train on trial 0's split and write `checkpoint.bin`, `train.log`,
/// `config.resolved` and `split.txt` to `out`. Epoch lines are also passed
/// to `progress`.
pub fn cmd_train(cfg: &RunConfig, out: &Path, progress: &mut dyn FnMut(&str)) -> Result<TrainOutcome> {
    let root = cfg.resolve_data_root()?;
    let data = RunData::load(cfg, &root)?;
    let split = trial_split(cfg, 0)?;
    let outcome = train(cfg, &data, &split, &mut |rec| progress(&rec.to_line()))?;
    write_train_outputs(out, cfg, &split, &outcome)?;
    Ok(outcome)
}

/// Score the test data of `split_path` with a trained checkpoint and write
/// `metrics.json` and `scores.csv`. The split must name the checkpoint's
/// known classes; its unknown classes may differ.
pub fn cmd_eval(checkpoint: &Path, data_root: &Path, split_path: &Path, out: &Path) -> Result<MetricsReport> {
    let start = Instant::now();
    let restored = from_checkpoint(&Checkpoint::load(checkpoint)?)?;
    let split = OpenSetSplit::from_text(&std::fs::read_to_string(split_path)?)?;
    if split.known != restored.split.known || split.cross_source != restored.split.cross_source {
        return Err(Error::config(format!(
            "split known classes {:?} do not match the checkpoint's {:?}",
            split.known, restored.split.known
        )));
    }
    let data = RunData::load(&restored.config, data_root)?;
    let eval = evaluate(&restored.model, &data, &split)?;
    let report = metrics_report(&eval, &restored.model, &restored.config, &restored.split, start.elapsed().as_secs_f64())?;
    std::fs::create_dir_all(out)?;
    write_metrics_json(&out.join(METRICS_FILE), &report)?;
    write_scores_csv(&out.join(SCORES_FILE), &eval.table)?;
    Ok(report)
}

/// Sample mean and standard deviation (n - 1 denominator; 0 for one value).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
}

impl Stat {
    pub fn of(values: &[f64]) -> Option<Stat> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        };
        Some(Stat { mean, std })
    }
}

/// Contents of `aggregate.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialsReport {
    pub config_digest: String,
    pub trials: Vec<MetricsReport>,
    pub closed_accuracy: Stat,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub auroc: Option<Stat>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub aupr_known: Option<Stat>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub aupr_unknown: Option<Stat>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub mean_margin: Option<Stat>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub separation: Option<Stat>,
}

impl TrialsReport {
    pub fn from_trials(config_digest: String, trials: Vec<MetricsReport>) -> Result<Self> {
        let all = |f: fn(&MetricsReport) -> Option<f64>| -> Option<Stat> {
            let v: Option<Vec<f64>> = trials.iter().map(f).collect();
            v.and_then(|v| Stat::of(&v))
        };
        Ok(TrialsReport {
            closed_accuracy: all(|r| Some(r.closed_accuracy)).ok_or_else(|| Error::contract("no trials to aggregate"))?,
            auroc: all(|r| r.auroc),
            aupr_known: all(|r| r.aupr_known),
            aupr_unknown: all(|r| r.aupr_unknown),
            mean_margin: all(|r| r.mean_margin),
            separation: all(|r| r.separation),
            config_digest,
            trials,
        })
    }
}

/// Split, train and evaluate `n` trials with trial-indexed seeds; each
/// trial's artifacts go to `out/trial_<i>`, the summary to `aggregate.json`.
pub fn cmd_trials(cfg: &RunConfig, n: usize, out: &Path, progress: &mut dyn FnMut(&str)) -> Result<TrialsReport> {
    if n == 0 {
        return Err(Error::config("trials must be >= 1"));
    }
    let root = cfg.resolve_data_root()?;
    let data = RunData::load(cfg, &root)?;
    let mut reports = Vec::with_capacity(n);
    for trial in 0..n {
        let wrap = |e: Error| Error::Trial {
            trial,
            source: Box::new(e),
        };
        let report = run_trial(cfg, &data, trial as u64, &out.join(format!("trial_{trial}")), progress).map_err(wrap)?;
        progress(&format!(
            "trial={trial} closed_accuracy={:.4} auroc={}",
            report.closed_accuracy,
            report.auroc.map_or("-".into(), |a| format!("{a:.4}"))
        ));
        reports.push(report);
    }
    let agg = TrialsReport::from_trials(cfg.digest(), reports)?;
    std::fs::create_dir_all(out)?;
    let mut f = std::io::BufWriter::new(std::fs::File::create(out.join(AGGREGATE_FILE))?);
    serde_json::to_writer_pretty(&mut f, &agg)?;
    writeln!(f)?;
    f.flush()?;
    Ok(agg)
}

fn run_trial(cfg: &RunConfig, data: &RunData, trial: u64, dir: &Path, progress: &mut dyn FnMut(&str)) -> Result<MetricsReport> {
    let start = Instant::now();
    let split = trial_split(cfg, trial)?;
    let outcome = train(cfg, data, &split, &mut |rec| progress(&format!("trial={trial} {}", rec.to_line())))?;
    write_train_outputs(dir, cfg, &split, &outcome)?;
    let eval = evaluate(&outcome.model, data, &split)?;
    let report = metrics_report(&eval, &outcome.model, cfg, &split, start.elapsed().as_secs_f64())?;
    write_metrics_json(&dir.join(METRICS_FILE), &report)?;
    write_scores_csv(&dir.join(SCORES_FILE), &eval.table)?;
    Ok(report)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExportKind {
    /// Known and unknown score histograms.
    Hist,
    /// Test embeddings with reciprocal points and prototypes.
    Emb,
}

impl FromStr for ExportKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hist" => Ok(ExportKind::Hist),
            "emb" => Ok(ExportKind::Emb),
            other => Err(Error::Usage(format!("unknown export kind {other:?}; expected hist or emb"))),
        }
    }
}

impl fmt::Display for ExportKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ExportKind::Hist => "hist",
            ExportKind::Emb => "emb",
        })
    }
}

/// Write `hist.csv` or `emb.csv` for the checkpoint's own split. Returns the
/// written path.
pub fn cmd_export(checkpoint: &Path, data_root: &Path, what: ExportKind, out: &Path) -> Result<PathBuf> {
    let restored = from_checkpoint(&Checkpoint::load(checkpoint)?)?;
    let data = RunData::load(&restored.config, data_root)?;
    let eval = evaluate(&restored.model, &data, &restored.split)?;
    std::fs::create_dir_all(out)?;
    match what {
        ExportKind::Hist => {
            let h = histogram(&eval.table.known_scores(), &eval.table.unknown_scores(), HIST_BINS)?;
            let path = out.join(HIST_FILE);
            write_hist_csv(&path, &h)?;
            Ok(path)
        }
        ExportKind::Emb => {
            let mut rows: Vec<EmbRow> = eval
                .table
                .rows
                .iter()
                .enumerate()
                .map(|(i, r)| EmbRow {
                    kind: "sample",
                    class: r.true_label,
                    values: eval.embeddings.row(i).to_vec(),
                })
                .collect();
            if let Some(r) = &restored.model.reciprocal {
                rows.extend(tagged("rp", &r.points.value, r.per_class()));
            }
            if let Some(p) = &restored.model.prototypes {
                rows.extend(tagged("proto", &p.protos.value, p.per_class()));
            }
            let path = out.join(EMB_FILE);
            write_emb_csv(&path, &rows)?;
            Ok(path)
        }
    }
}

/// One row per stored point; point `i` of a set with `per_class` points per
/// class belongs to class `i / per_class`.
fn tagged(kind: &'static str, t: &crate::tensor::Tensor, per_class: usize) -> Vec<EmbRow> {
    (0..t.shape()[0])
        .map(|i| EmbRow {
            kind,
            class: (i / per_class) as i64,
            values: t.row(i).to_vec(),
        })
        .collect()
}
