use std::path::Path;
use std::time::Instant;

use super::checkpoint::{ArrayData, Checkpoint, NamedArray};
use super::config::{DatasetSpec, RunConfig};
use crate::data::{load_dataset, make_cross_split, make_split_with_unknowns, Batches, DatasetPair, LabeledImages, OpenSetSplit};
use crate::error::{Error, Result};
use crate::eval::{f1_at_threshold, openness, F1Row, MetricsReport, ScoreRow, ScoreTable, F1_THRESHOLD};
use crate::model::OpenSetModel;
use crate::optim::{lr_schedule, Optimizer};
use crate::reciprocal::{prototype_init_from_embeddings, separation_fraction, PrototypeSet};
use crate::tensor::Tensor;

/// Images per forward pass at evaluation time.
const EVAL_CHUNK: usize = 500;

/// Datasets of one run, after the per-class caps of the config.
#[derive(Clone, Debug)]
pub struct RunData {
    pub known: DatasetPair,
    /// Second source of a cross-dataset run.
    pub unknown: Option<DatasetPair>,
}

impl RunData {
    pub fn load(cfg: &RunConfig, root: &Path) -> Result<Self> {
        let cap = |d: LabeledImages, k: usize| if k == 0 { d } else { d.take_per_class(k) };
        let mut known = load_dataset(cfg.dataset.known_source(), root)?;
        known.train = cap(known.train, cfg.train_per_class);
        known.test = cap(known.test, cfg.test_per_class);
        let unknown = match cfg.dataset {
            DatasetSpec::Single(_) => None,
            DatasetSpec::Cross { unknown, .. } => {
                let mut pair = load_dataset(unknown, root)?;
                pair.test = cap(pair.test, cfg.test_per_class);
                Some(pair)
            }
        };
        Ok(RunData { known, unknown })
    }

    fn unknown_test(&self) -> &LabeledImages {
        self.unknown.as_ref().map_or(&self.known.test, |p| &p.test)
    }
}

/// The known/unknown split of trial `trial`.
pub fn trial_split(cfg: &RunConfig, trial: u64) -> Result<OpenSetSplit> {
    match cfg.dataset {
        DatasetSpec::Single(d) => make_split_with_unknowns(d.classes(), cfg.n_known, cfg.unknown_count(), cfg.seed, trial),
        DatasetSpec::Cross { known, unknown } => make_cross_split(
            known.classes(),
            cfg.n_known,
            unknown.classes(),
            cfg.unknown_count(),
            cfg.seed,
            trial,
        ),
    }
}

/// Mean losses of one epoch.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub classification: f64,
    pub open: f64,
    pub prototype: f64,
    pub lr: f64,
    pub secs: f64,
}

impl EpochRecord {
    pub fn to_line(&self) -> String {
        format!(
            "epoch={} loss={:.6} lc={:.6} lo={:.6} lpl={:.6} lr={} secs={:.2}",
            self.epoch, self.loss, self.classification, self.open, self.prototype, self.lr, self.secs
        )
    }
}

pub struct TrainOutcome {
    pub model: OpenSetModel,
    pub log: Vec<EpochRecord>,
    /// Loss of the first batch, before any update.
    pub first_loss: Option<f64>,
}

fn check_split_fits(split: &OpenSetSplit, data: &RunData) -> Result<()> {
    let known_classes = data.known.train.classes;
    if let Some(&k) = split.known.iter().find(|&&k| k >= known_classes) {
        return Err(Error::config(format!("split names known class {k}, dataset has {known_classes}")));
    }
    if split.cross_source != data.unknown.is_some() {
        return Err(Error::config("split and dataset disagree on cross-source unknowns"));
    }
    let unknown_classes = data.unknown_test().classes;
    if let Some(&u) = split.unknown.iter().find(|&&u| u >= unknown_classes) {
        return Err(Error::config(format!("split names unknown class {u}, source has {unknown_classes}")));
    }
    Ok(())
}

/// Build a fresh model and run the training loop of `cfg` on the known
/// classes of `split`. `on_epoch` sees every epoch record as it completes.
pub fn train(
    cfg: &RunConfig,
    data: &RunData,
    split: &OpenSetSplit,
    on_epoch: &mut dyn FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    check_split_fits(split, data)?;
    let seed = cfg.trial_seed(split.trial);
    let tc = cfg.train_config(seed);
    let mut model = OpenSetModel::new(cfg.encoder_config(seed), &tc, split.n_known())?;
    let train = &data.known.train;

    if cfg.mode.uses_prototypes() {
        let idx = train.indices_of(&split.known);
        if idx.is_empty() {
            return Err(Error::Data(format!("{} has no known-class samples", train.source)));
        }
        let labels: Vec<usize> = idx.iter().map(|&i| split.relabel(train.labels[i]).expect("known")).collect();
        let emb = embed_indices(&model, train, &idx)?;
        model.prototypes = Some(prototype_init_from_embeddings(&emb, &labels, split.n_known(), cfg.c, cfg.beta)?);
    }

    let mut opt = Optimizer::new(cfg.optimizer);
    let mut log = Vec::with_capacity(cfg.epochs);
    let mut first_loss = None;
    for epoch in 0..cfg.epochs {
        let start = Instant::now();
        let lr = lr_schedule(epoch, cfg.lr);
        let mut sums = [0.0; 4];
        let mut seen = 0usize;
        for (step, batch) in Batches::new(train, split, cfg.batch_size, seed, epoch as u64)?.enumerate() {
            let batch = batch?;
            let diverged = |e: Error| Error::Diverged {
                epoch,
                step,
                source: Box::new(e),
            };
            let s = model.train_step(&batch.images, &batch.labels, &mut opt, lr).map_err(|e| match e {
                Error::NonFinite { .. } => diverged(e),
                other => other,
            })?;
            if !s.total.is_finite() {
                return Err(diverged(Error::NonFinite { op: "loss" }));
            }
            first_loss.get_or_insert(s.total);
            let n = batch.labels.len() as f64;
            for (acc, v) in sums.iter_mut().zip([s.total, s.classification, s.open, s.prototype]) {
                *acc += v * n;
            }
            seen += batch.labels.len();
        }
        let n = seen as f64;
        let rec = EpochRecord {
            epoch,
            loss: sums[0] / n,
            classification: sums[1] / n,
            open: sums[2] / n,
            prototype: sums[3] / n,
            lr,
            secs: start.elapsed().as_secs_f64(),
        };
        on_epoch(&rec);
        log.push(rec);
    }
    Ok(TrainOutcome { model, log, first_loss })
}

fn embed_indices(model: &OpenSetModel, data: &LabeledImages, idx: &[usize]) -> Result<Tensor> {
    let d = model.encoder.embed_dim();
    let mut out = Vec::with_capacity(idx.len() * d);
    for chunk in idx.chunks(EVAL_CHUNK) {
        out.extend_from_slice(model.encoder.embed(&data.gather(chunk)?)?.data());
    }
    Tensor::new(vec![idx.len(), d], out)
}

/// One test sample: where it comes from and what it is.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct TestItem {
    from_unknown_source: bool,
    index: usize,
    label: i64,
    /// Original class id of an unknown sample.
    unknown_class: Option<usize>,
}

fn test_items(data: &RunData, split: &OpenSetSplit) -> Vec<TestItem> {
    let mut items = Vec::new();
    for (i, &y) in data.known.test.labels.iter().enumerate() {
        if let Some(k) = split.relabel(y) {
            items.push(TestItem {
                from_unknown_source: false,
                index: i,
                label: k as i64,
                unknown_class: None,
            });
        } else if !split.cross_source && split.is_unknown(y) {
            items.push(TestItem {
                from_unknown_source: false,
                index: i,
                label: -1,
                unknown_class: Some(y),
            });
        }
    }
    if let Some(pair) = &data.unknown {
        for (i, &y) in pair.test.labels.iter().enumerate() {
            if split.is_unknown(y) {
                items.push(TestItem {
                    from_unknown_source: true,
                    index: i,
                    label: -1,
                    unknown_class: Some(y),
                });
            }
        }
    }
    items
}

/// Per-sample outputs of scoring a test set.
#[derive(Clone, Debug)]
pub struct Evaluation {
    pub table: ScoreTable,
    /// (samples, d)
    pub embeddings: Tensor,
    /// Original class of each unknown row, `None` for known rows.
    pub unknown_class: Vec<Option<usize>>,
}

/// Score every known-class and unknown-class test sample of `split`.
pub fn evaluate(model: &OpenSetModel, data: &RunData, split: &OpenSetSplit) -> Result<Evaluation> {
    check_split_fits(split, data)?;
    if model.classes != split.n_known() {
        return Err(Error::config(format!(
            "model has {} classes, split has {} known",
            model.classes,
            split.n_known()
        )));
    }
    let items = test_items(data, split);
    if !items.iter().any(|t| t.label >= 0) {
        return Err(Error::Data("test set has no known-class samples".into()));
    }
    let (c, h, w) = data.known.test.dims;
    let per = c * h * w;
    let mut rows = Vec::with_capacity(items.len());
    let mut emb = Vec::new();
    for chunk in items.chunks(EVAL_CHUNK) {
        let mut pixels = Vec::with_capacity(chunk.len() * per);
        for t in chunk {
            let src = if t.from_unknown_source { data.unknown_test() } else { &data.known.test };
            pixels.extend(src.image(t.index).iter().map(|&v| f64::from(v)));
        }
        let out = model.score(&Tensor::new(vec![chunk.len(), c, h, w], pixels)?)?;
        for (j, t) in chunk.iter().enumerate() {
            rows.push(ScoreRow {
                id: rows.len(),
                is_known: t.label >= 0,
                score: out.scores[j],
                pred: out.predictions[j],
                true_label: t.label,
                posterior: Some(out.posteriors.row(j).to_vec()),
            });
        }
        emb.extend_from_slice(out.embeddings.data());
    }
    let d = model.encoder.embed_dim();
    Ok(Evaluation {
        table: ScoreTable { rows },
        embeddings: Tensor::new(vec![items.len(), d], emb)?,
        unknown_class: items.iter().map(|t| t.unknown_class).collect(),
    })
}

/// F1 at the fixed threshold and its openness for the unknown classes
/// present in `table`.
pub fn f1_row(table: &ScoreTable, n_known: usize, n_unknown: usize) -> Result<F1Row> {
    Ok(F1Row {
        openness: openness(n_known, n_known + n_unknown)?,
        f1: f1_at_threshold(table, F1_THRESHOLD)?,
    })
}

/// F1 against openness, keeping the first `u` unknown classes of the split
/// for every `u` in `levels`.
pub fn f1_openness_sweep(eval: &Evaluation, split: &OpenSetSplit, levels: &[usize]) -> Result<Vec<F1Row>> {
    levels
        .iter()
        .map(|&u| {
            if u > split.unknown.len() {
                return Err(Error::config(format!(
                    "openness level {u} exceeds the {} unknown classes",
                    split.unknown.len()
                )));
            }
            let keep = &split.unknown[..u];
            let rows = eval
                .table
                .rows
                .iter()
                .zip(&eval.unknown_class)
                .filter(|(_, c)| c.map_or(true, |c| keep.contains(&c)))
                .map(|(r, _)| r.clone())
                .collect();
            f1_row(&ScoreTable { rows }, split.n_known(), u)
        })
        .collect()
}

pub fn metrics_report(
    eval: &Evaluation,
    model: &OpenSetModel,
    cfg: &RunConfig,
    split: &OpenSetSplit,
    runtime_secs: f64,
) -> Result<MetricsReport> {
    let summary = eval.table.summary()?;
    let present: std::collections::BTreeSet<usize> = eval.unknown_class.iter().flatten().copied().collect();
    let mut report = MetricsReport::from_summary(summary, cfg.trial_seed(split.trial), split.trial, cfg.digest(), runtime_secs);
    report.f1 = vec![f1_row(&eval.table, split.n_known(), present.len())?];
    if let Some(r) = &model.reciprocal {
        report.mean_margin = Some(r.mean_margin());
        let labels: Vec<i64> = eval.table.rows.iter().map(|row| row.true_label).collect();
        report.separation = separation_fraction(&r.distances(&eval.embeddings)?, &labels)?;
    }
    Ok(report)
}

const CONFIG_ARRAY: &str = "meta.config";
const SPLIT_ARRAY: &str = "meta.split";

/// Model parameters plus the resolved config and split they came from.
pub fn to_checkpoint(model: &OpenSetModel, cfg: &RunConfig, split: &OpenSetSplit) -> Result<Checkpoint> {
    let mut ckpt = Checkpoint::new(cfg.digest_bytes());
    ckpt.arrays.push(NamedArray::bytes(CONFIG_ARRAY, cfg.to_text().as_bytes()));
    ckpt.arrays.push(NamedArray::bytes(SPLIT_ARRAY, split.to_text().as_bytes()));
    for p in model.params() {
        ckpt.arrays.push(NamedArray::new(
            p.name.clone(),
            p.value.shape().to_vec(),
            ArrayData::F64(p.value.data().to_vec()),
        )?);
    }
    Ok(ckpt)
}

pub struct Restored {
    pub config: RunConfig,
    pub split: OpenSetSplit,
    pub model: OpenSetModel,
}

fn text_array(ckpt: &Checkpoint, name: &str) -> Result<String> {
    match ckpt.get(name).map(|a| &a.data) {
        Some(ArrayData::U8(b)) => String::from_utf8(b.clone()).map_err(|_| Error::Format(format!("{name} is not UTF-8"))),
        _ => Err(Error::Format(format!("checkpoint lacks {name}"))),
    }
}

fn f64_array(ckpt: &Checkpoint, name: &str) -> Result<Tensor> {
    match ckpt.get(name) {
        Some(NamedArray {
            dims,
            data: ArrayData::F64(v),
            ..
        }) => Tensor::new(dims.clone(), v.clone()),
        Some(_) => Err(Error::Format(format!("checkpoint array {name} is not f64"))),
        None => Err(Error::Format(format!("checkpoint lacks {name}"))),
    }
}

pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Restored> {
    let config = RunConfig::parse(&text_array(ckpt, CONFIG_ARRAY)?)?;
    if config.digest_bytes() != ckpt.digest {
        return Err(Error::Consistency("stored config does not match the checkpoint digest".into()));
    }
    let split = OpenSetSplit::from_text(&text_array(ckpt, SPLIT_ARRAY)?)?;
    let seed = config.trial_seed(split.trial);
    let mut model = OpenSetModel::new(config.encoder_config(seed), &config.train_config(seed), split.n_known())?;
    if config.mode.uses_prototypes() {
        model.prototypes = Some(PrototypeSet::from_tensor(
            f64_array(ckpt, "proto.points")?,
            split.n_known(),
            config.beta,
        )?);
    }
    let mut used = 2;
    for p in model.params_mut() {
        let t = f64_array(ckpt, &p.name)?;
        if t.shape() != p.value.shape() {
            return Err(Error::Consistency(format!(
                "{}: stored shape {:?}, model expects {:?}",
                p.name,
                t.shape(),
                p.value.shape()
            )));
        }
        p.value = t;
        used += 1;
    }
    if used != ckpt.arrays.len() {
        return Err(Error::Consistency(format!(
            "checkpoint holds {} arrays, the model uses {used}",
            ckpt.arrays.len()
        )));
    }
    Ok(Restored { config, split, model })
}
