//! Open-set metrics and the artifacts written by evaluation runs.

mod export;
mod metrics;

use serde::{Deserialize, Serialize};

pub use export::{histogram, write_emb_csv, write_hist_csv, write_metrics_json, write_scores_csv, EmbRow, Histogram};
pub use metrics::{aupr, auroc, closed_accuracy, f1_at_threshold, openness, Positive};

/// Posterior threshold below which a sample is rejected in the F1 protocol.
pub const F1_THRESHOLD: f64 = 0.1;

/// One evaluated test sample.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreRow {
    pub id: usize,
    pub is_known: bool,
    /// Higher means more likely known.
    pub score: f64,
    pub pred: usize,
    /// Relabelled class, or -1 for unknown samples.
    pub true_label: i64,
    pub posterior: Option<Vec<f64>>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ScoreTable {
    pub rows: Vec<ScoreRow>,
}

impl ScoreTable {
    pub fn known_scores(&self) -> Vec<f64> {
        self.rows.iter().filter(|r| r.is_known).map(|r| r.score).collect()
    }

    pub fn unknown_scores(&self) -> Vec<f64> {
        self.rows.iter().filter(|r| !r.is_known).map(|r| r.score).collect()
    }

    pub fn known_only(&self) -> ScoreTable {
        ScoreTable {
            rows: self.rows.iter().filter(|r| r.is_known).cloned().collect(),
        }
    }

    pub fn has_unknowns(&self) -> bool {
        self.rows.iter().any(|r| !r.is_known)
    }

    /// AUROC, both AUPRs and closed-set accuracy. Open-set metrics are `None`
    /// when the table holds no unknown samples.
    pub fn summary(&self) -> crate::Result<Summary> {
        let closed_accuracy = closed_accuracy(&self.known_only())?;
        if !self.has_unknowns() {
            return Ok(Summary {
                closed_accuracy,
                ..Summary::default()
            });
        }
        let scores: Vec<f64> = self.rows.iter().map(|r| r.score).collect();
        let flags: Vec<bool> = self.rows.iter().map(|r| r.is_known).collect();
        Ok(Summary {
            closed_accuracy,
            auroc: Some(auroc(&self.known_scores(), &self.unknown_scores())?),
            aupr_known: Some(aupr(&scores, &flags, Positive::Known)?),
            aupr_unknown: Some(aupr(&scores, &flags, Positive::Unknown)?),
        })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Summary {
    pub closed_accuracy: f64,
    pub auroc: Option<f64>,
    pub aupr_known: Option<f64>,
    pub aupr_unknown: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct F1Row {
    pub openness: f64,
    pub f1: f64,
}

/// Contents of `metrics.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub closed_accuracy: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub auroc: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub aupr_known: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub aupr_unknown: Option<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub f1: Vec<F1Row>,
    /// Mean learned margin, for models with reciprocal points.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub mean_margin: Option<f64>,
    /// Share of known samples farther from their own reciprocal points than
    /// the median non-class sample.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub separation: Option<f64>,
    pub seed: u64,
    pub trial: u64,
    pub config_digest: String,
    pub runtime_secs: f64,
}

impl MetricsReport {
    pub fn from_summary(s: Summary, seed: u64, trial: u64, config_digest: String, runtime_secs: f64) -> Self {
        MetricsReport {
            closed_accuracy: s.closed_accuracy,
            auroc: s.auroc,
            aupr_known: s.aupr_known,
            aupr_unknown: s.aupr_unknown,
            f1: Vec::new(),
            mean_margin: None,
            separation: None,
            seed,
            trial,
            config_digest,
            runtime_secs,
        }
    }
}
