//! Reciprocal points, prototypes, and the losses and scores built on them.
//!
//! A [`ReciprocalSet`] holds `M` learnable points per known class, stored as
//! a `(N*M, d)` matrix whose rows `k*M .. (k+1)*M` belong to class `k`, plus
//! one learnable margin per class. The distance of an embedding to class `k`
//! is the mean squared Euclidean distance to that class's points; a sample
//! is assigned to the class whose reciprocal points are *farthest* away.
//!
//! Graph-level functions take [`Var`]s so that losses can be differentiated
//! through the encoder; value-level helpers ([`class_posterior`],
//! [`detect_score`]) work on plain tensors at evaluation time.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Encoder, Parameter};
use crate::optim::OptimizerKind;
use crate::rng::{normal_vec, stream_rng, Stream};
use crate::tensor::{logsumexp_row, Graph, Tensor, Var};

/// Standard deviation of the reciprocal-point initialisation.
pub const RP_INIT_STD: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    #[serde(rename = "softmax-baseline")]
    SoftmaxBaseline,
    #[serde(rename = "gcpl-baseline")]
    GcplBaseline,
    #[serde(rename = "rpl")]
    Rpl,
    #[serde(rename = "rpl++")]
    RplPlus,
}

impl Mode {
    pub fn uses_reciprocal_points(self) -> bool {
        matches!(self, Mode::Rpl | Mode::RplPlus)
    }

    pub fn uses_prototypes(self) -> bool {
        matches!(self, Mode::GcplBaseline | Mode::RplPlus)
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::SoftmaxBaseline => "softmax-baseline",
            Mode::GcplBaseline => "gcpl-baseline",
            Mode::Rpl => "rpl",
            Mode::RplPlus => "rpl++",
        })
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "softmax-baseline" | "softmax" => Ok(Mode::SoftmaxBaseline),
            "gcpl-baseline" | "gcpl" => Ok(Mode::GcplBaseline),
            "rpl" => Ok(Mode::Rpl),
            "rpl++" => Ok(Mode::RplPlus),
            other => Err(Error::config(format!("unknown mode {other:?}"))),
        }
    }
}

/// Hyperparameters of one training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub mode: Mode,
    /// Weight of the open-space term.
    pub lambda: f64,
    /// Hardness of the distance softmax.
    pub gamma: f64,
    /// Weight of the prototype term.
    pub beta: f64,
    /// Reciprocal points per class.
    pub points_per_class: usize,
    /// Prototypes per class.
    pub protos_per_class: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerKind,
    pub lr: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            mode: Mode::Rpl,
            lambda: 0.1,
            gamma: 0.5,
            beta: 0.1,
            points_per_class: 1,
            protos_per_class: 1,
            epochs: 20,
            batch_size: 128,
            optimizer: OptimizerKind::Adam,
            lr: 0.001,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0) {
            return Err(Error::config(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if !(self.gamma > 0.0) {
            return Err(Error::config(format!("gamma must be > 0, got {}", self.gamma)));
        }
        if !(self.beta >= 0.0) {
            return Err(Error::config(format!("beta must be >= 0, got {}", self.beta)));
        }
        if self.points_per_class == 0 || self.protos_per_class == 0 {
            return Err(Error::config("points and prototypes per class must be >= 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch size must be >= 1"));
        }
        if !(self.lr > 0.0) {
            return Err(Error::config(format!("learning rate must be > 0, got {}", self.lr)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReciprocalSet {
    /// (N*M, d); rows of class k are k*M .. (k+1)*M.
    pub points: Parameter,
    /// (N), one margin per class shared by its M points.
    pub margins: Parameter,
    pub gamma: f64,
    classes: usize,
    per_class: usize,
}

impl ReciprocalSet {
    pub fn init(classes: usize, per_class: usize, dim: usize, gamma: f64, seed: u64) -> Result<Self> {
        if classes < 2 {
            return Err(Error::config(format!("need at least 2 known classes, got {classes}")));
        }
        if per_class == 0 || dim == 0 {
            return Err(Error::config("reciprocal points need M >= 1 and d >= 1"));
        }
        if !(gamma > 0.0) {
            return Err(Error::config(format!("gamma must be > 0, got {gamma}")));
        }
        let mut rng = stream_rng(seed, Stream::Reciprocal, 0);
        let n = classes * per_class * dim;
        let points = Tensor::from_parts(
            vec![classes * per_class, dim],
            normal_vec(&mut rng, n, 0.0, RP_INIT_STD),
        );
        Ok(ReciprocalSet {
            points: Parameter::new("rp.points", points),
            margins: Parameter::new("rp.margins", Tensor::zeros(&[classes])),
            gamma,
            classes,
            per_class,
        })
    }

    /// Rebuild from stored arrays (checkpoint loading).
    pub fn from_tensors(points: Tensor, margins: Tensor, per_class: usize, gamma: f64) -> Result<Self> {
        let classes = margins.numel();
        if points.shape().len() != 2 || points.shape()[0] != classes * per_class {
            return Err(Error::dim("reciprocal set", points.shape(), margins.shape()));
        }
        Ok(ReciprocalSet {
            points: Parameter::new("rp.points", points),
            margins: Parameter::new("rp.margins", margins),
            gamma,
            classes,
            per_class,
        })
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn per_class(&self) -> usize {
        self.per_class
    }

    pub fn dim(&self) -> usize {
        self.points.value.shape()[1]
    }

    pub fn mean_margin(&self) -> f64 {
        self.margins.value.data().iter().sum::<f64>() / self.classes as f64
    }

    pub fn bind(&self, g: &mut Graph, trainable: bool) -> BoundReciprocal {
        let leaf = |g: &mut Graph, t: &Tensor| if trainable { g.param(t.clone()) } else { g.input(t.clone()) };
        BoundReciprocal {
            points: leaf(g, &self.points.value),
            margins: leaf(g, &self.margins.value),
            classes: self.classes,
            per_class: self.per_class,
            gamma: self.gamma,
        }
    }

    /// Class distances (B, N) of plain embeddings.
    pub fn distances(&self, emb: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let bound = self.bind(&mut g, false);
        let e = g.input(emb.clone());
        let d = rp_distance(&mut g, e, &bound)?;
        Ok(g.value(d).clone())
    }
}

/// A [`ReciprocalSet`] placed on a graph.
#[derive(Clone, Copy, Debug)]
pub struct BoundReciprocal {
    pub points: Var,
    pub margins: Var,
    pub classes: usize,
    pub per_class: usize,
    pub gamma: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PrototypeSet {
    /// (N*C, d); rows of class k are k*C .. (k+1)*C.
    pub protos: Parameter,
    pub beta: f64,
    classes: usize,
    per_class: usize,
}

impl PrototypeSet {
    pub fn from_tensor(protos: Tensor, classes: usize, beta: f64) -> Result<Self> {
        let rows = protos.shape().first().copied().unwrap_or(0);
        if protos.shape().len() != 2 || classes == 0 || rows % classes != 0 || rows == 0 {
            return Err(Error::dim("prototype set", protos.shape(), &[classes]));
        }
        Ok(PrototypeSet {
            protos: Parameter::new("proto.points", protos),
            beta,
            classes,
            per_class: rows / classes,
        })
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn per_class(&self) -> usize {
        self.per_class
    }

    pub fn bind(&self, g: &mut Graph, trainable: bool) -> BoundPrototypes {
        let v = if trainable {
            g.param(self.protos.value.clone())
        } else {
            g.input(self.protos.value.clone())
        };
        BoundPrototypes {
            protos: v,
            classes: self.classes,
            per_class: self.per_class,
        }
    }

    /// Mean squared distance (B, N) to each class's prototypes.
    pub fn distances(&self, emb: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let bound = self.bind(&mut g, false);
        let e = g.input(emb.clone());
        let sq = g.pairwise_sq_dist(e, bound.protos)?;
        let d = group_mean(&mut g, sq, bound.classes, bound.per_class)?;
        Ok(g.value(d).clone())
    }
}

#[derive(Clone, Copy, Debug)]
pub struct BoundPrototypes {
    pub protos: Var,
    pub classes: usize,
    pub per_class: usize,
}

fn check_labels(labels: &[usize], classes: usize, rows: usize) -> Result<()> {
    if labels.len() != rows {
        return Err(Error::contract(format!(
            "{} labels for a batch of {rows}",
            labels.len()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= classes) {
        return Err(Error::contract(format!("label {bad} outside [0, {classes})")));
    }
    Ok(())
}

/// (B, N*M) -> (B, N): mean over each class's group of M columns.
fn group_mean(g: &mut Graph, sq: Var, classes: usize, per_class: usize) -> Result<Var> {
    let rows = g.shape(sq)[0];
    let grouped = g.reshape(sq, &[rows, classes, per_class])?;
    g.mean_last(grouped)
}

/// Columns `k*M .. (k+1)*M` of row b for each sample's label k: (B, M).
fn own_class_columns(g: &mut Graph, sq: Var, labels: &[usize], per_class: usize) -> Result<Var> {
    let cols = g.shape(sq)[1];
    let index = labels
        .iter()
        .enumerate()
        .flat_map(|(b, &k)| (0..per_class).map(move |i| b * cols + k * per_class + i))
        .collect();
    g.index_select(sq, index, &[labels.len(), per_class])
}

fn check_dim(g: &Graph, emb: Var, table: Var) -> Result<()> {
    let (se, st) = (g.shape(emb), g.shape(table));
    if se.len() != 2 || se[1] != st[1] {
        return Err(Error::dim("distance", se, st));
    }
    Ok(())
}

/// Squared distance of every embedding to every reciprocal point: (B, N*M).
pub fn point_sq_distances(g: &mut Graph, emb: Var, rps: &BoundReciprocal) -> Result<Var> {
    check_dim(g, emb, rps.points)?;
    g.pairwise_sq_dist(emb, rps.points)
}

/// Mean squared distance of each embedding to each class's reciprocal
/// points: (B, d) -> (B, N).
pub fn rp_distance(g: &mut Graph, emb: Var, rps: &BoundReciprocal) -> Result<Var> {
    let sq = point_sq_distances(g, emb, rps)?;
    group_mean(g, sq, rps.classes, rps.per_class)
}

/// Mean negative log-likelihood of `labels` under a softmax over `logits`.
pub fn softmax_cross_entropy(g: &mut Graph, logits: Var, labels: &[usize]) -> Result<Var> {
    let s = g.shape(logits).to_vec();
    if s.len() != 2 {
        return Err(Error::dim("cross entropy", &s, &[0, 0]));
    }
    check_labels(labels, s[1], s[0])?;
    let lse = g.logsumexp(logits)?;
    let index = labels.iter().enumerate().map(|(b, &y)| b * s[1] + y).collect();
    let picked = g.index_select(logits, index, &[s[0]])?;
    let nll = g.sub(lse, picked)?;
    g.mean(nll)
}

/// Classification loss over reciprocal distances: cross entropy of the
/// posterior `softmax(gamma * dist)`.
pub fn loss_classification(g: &mut Graph, dist: Var, labels: &[usize], gamma: f64) -> Result<Var> {
    let logits = g.scale(dist, gamma)?;
    softmax_cross_entropy(g, logits, labels)
}

/// Open-space term: batch mean of `(1/M) sum_i (||f - p_i^k||^2 - R^k)^2`
/// over each sample's own class k.
pub fn loss_open(g: &mut Graph, emb: Var, labels: &[usize], rps: &BoundReciprocal) -> Result<Var> {
    let sq = point_sq_distances(g, emb, rps)?;
    loss_open_from_sq(g, sq, labels, rps)
}

/// [`loss_open`] reusing precomputed per-point squared distances (B, N*M).
pub fn loss_open_from_sq(g: &mut Graph, sq: Var, labels: &[usize], rps: &BoundReciprocal) -> Result<Var> {
    check_labels(labels, rps.classes, g.shape(sq)[0])?;
    let own = own_class_columns(g, sq, labels, rps.per_class)?;
    let margin_index = labels
        .iter()
        .flat_map(|&k| std::iter::repeat(k).take(rps.per_class))
        .collect();
    let margins = g.index_select(rps.margins, margin_index, &[labels.len(), rps.per_class])?;
    let diff = g.sub(own, margins)?;
    let sq_diff = g.square(diff)?;
    g.mean(sq_diff)
}

/// Prototype term: batch mean of `(1/C) sum_i ||f - m_i^k||^2`.
pub fn loss_prototype(g: &mut Graph, emb: Var, labels: &[usize], protos: &BoundPrototypes) -> Result<Var> {
    check_dim(g, emb, protos.protos)?;
    check_labels(labels, protos.classes, g.shape(emb)[0])?;
    let sq = g.pairwise_sq_dist(emb, protos.protos)?;
    let own = own_class_columns(g, sq, labels, protos.per_class)?;
    g.mean(own)
}

/// Mean squared distance (B, N) to the prototypes of each class.
pub fn prototype_distance(g: &mut Graph, emb: Var, protos: &BoundPrototypes) -> Result<Var> {
    check_dim(g, emb, protos.protos)?;
    let sq = g.pairwise_sq_dist(emb, protos.protos)?;
    group_mean(g, sq, protos.classes, protos.per_class)
}

/// Class centres of `emb` (rows labelled by `labels` in [0, classes)),
/// each replicated over `per_class` prototype slots.
pub fn prototype_init_from_embeddings(
    emb: &Tensor,
    labels: &[usize],
    classes: usize,
    per_class: usize,
    beta: f64,
) -> Result<PrototypeSet> {
    let d = emb.shape()[1];
    let mut sums = vec![0.0; classes * d];
    let mut counts = vec![0usize; classes];
    for (b, &y) in labels.iter().enumerate() {
        if y >= classes {
            return Err(Error::contract(format!("label {y} outside [0, {classes})")));
        }
        counts[y] += 1;
        sums[y * d..(y + 1) * d]
            .iter_mut()
            .zip(emb.row(b))
            .for_each(|(s, v)| *s += v);
    }
    if let Some(empty) = counts.iter().position(|&c| c == 0) {
        return Err(Error::Data(format!("known class {empty} has no training samples")));
    }
    let mut protos = Vec::with_capacity(classes * per_class * d);
    for k in 0..classes {
        let centre: Vec<f64> = sums[k * d..(k + 1) * d]
            .iter()
            .map(|s| s / counts[k] as f64)
            .collect();
        for _ in 0..per_class {
            protos.extend_from_slice(&centre);
        }
    }
    PrototypeSet::from_tensor(Tensor::from_parts(vec![classes * per_class, d], protos), classes, beta)
}

/// Prototypes at the class means of the current encoder's embeddings of the
/// known-class training images (labels already relabelled to [0, N)).
pub fn prototype_init(
    encoder: &Encoder,
    images: &Tensor,
    labels: &[usize],
    classes: usize,
    per_class: usize,
    beta: f64,
) -> Result<PrototypeSet> {
    let emb = encoder.embed_all(images)?;
    prototype_init_from_embeddings(&emb, labels, classes, per_class, beta)
}

/// The individual loss terms of one batch.
#[derive(Clone, Copy, Debug)]
pub struct LossTerms {
    pub classification: Var,
    pub open: Option<Var>,
    pub prototype: Option<Var>,
}

/// Weighted sum of the loss terms required by `mode`:
/// rpl `Lc + lambda*Lo`, rpl++ `Lc + lambda*Lo + beta*Lpl`,
/// gcpl `Lc + beta*Lpl`, softmax `Lc`.
pub fn total_loss(g: &mut Graph, terms: LossTerms, lambda: f64, beta: f64, mode: Mode) -> Result<Var> {
    let need = |t: Option<Var>, name: &str| {
        t.ok_or_else(|| Error::contract(format!("mode {mode} requires the {name} loss term")))
    };
    let mut total = terms.classification;
    if mode.uses_reciprocal_points() {
        let lo = g.scale(need(terms.open, "open-space")?, lambda)?;
        total = g.add(total, lo)?;
    }
    if mode.uses_prototypes() {
        let lp = g.scale(need(terms.prototype, "prototype")?, beta)?;
        total = g.add(total, lp)?;
    }
    Ok(total)
}

/// Row-wise `softmax(gamma * dist)`.
pub fn class_posterior(dist: &Tensor, gamma: f64) -> Result<Tensor> {
    if !(gamma > 0.0) {
        return Err(Error::config(format!("gamma must be > 0, got {gamma}")));
    }
    softmax_rows(dist, gamma)
}

/// Row-wise `softmax(scale * x)` of a (B, N) tensor.
pub fn softmax_rows(x: &Tensor, scale: f64) -> Result<Tensor> {
    let s = x.shape();
    if s.len() != 2 {
        return Err(Error::dim("softmax", s, &[0, 0]));
    }
    let n = s[1];
    let mut out = Vec::with_capacity(x.numel());
    let mut logits = vec![0.0; n];
    for row in x.data().chunks_exact(n) {
        logits.iter_mut().zip(row).for_each(|(l, v)| *l = scale * v);
        let lse = logsumexp_row(&logits);
        out.extend(logits.iter().map(|l| (l - lse).exp()));
    }
    let t = Tensor::from_parts(s.to_vec(), out);
    if !t.all_finite() {
        return Err(Error::NonFinite { op: "softmax" });
    }
    Ok(t)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Detection {
    /// Higher means more likely known.
    pub score: f64,
    pub class: usize,
}

/// Known-ness score per row: the row maximum, with the arg max (lowest index
/// on ties) as the predicted class.
pub fn detect_score(dist: &Tensor) -> Vec<Detection> {
    let n = dist.shape()[dist.shape().len() - 1];
    dist.data()
        .chunks_exact(n)
        .map(|row| {
            let mut best = 0;
            for (k, &v) in row.iter().enumerate().skip(1) {
                if v > row[best] {
                    best = k;
                }
            }
            Detection {
                score: row[best],
                class: best,
            }
        })
        .collect()
}

/// Fraction of (known sample, own class k) pairs whose distance to `P^k`
/// exceeds the median distance of every other sample (other known classes
/// and unknowns, label < 0) to `P^k`. Classes with no own or no other
/// samples are skipped; `None` when nothing is left to count.
pub fn separation_fraction(dist: &Tensor, labels: &[i64]) -> Result<Option<f64>> {
    let s = dist.shape();
    if s.len() != 2 || s[0] != labels.len() {
        return Err(Error::dim("separation_fraction", s, &[labels.len()]));
    }
    let n = s[1];
    let (mut hit, mut total) = (0usize, 0usize);
    for k in 0..n {
        let col = |i: usize| dist.data()[i * n + k];
        let mut others: Vec<f64> = (0..labels.len()).filter(|&i| labels[i] != k as i64).map(col).collect();
        let own: Vec<f64> = (0..labels.len()).filter(|&i| labels[i] == k as i64).map(col).collect();
        if others.is_empty() || own.is_empty() {
            continue;
        }
        others.sort_by(f64::total_cmp);
        let m = others.len();
        let median = if m % 2 == 1 { others[m / 2] } else { 0.5 * (others[m / 2 - 1] + others[m / 2]) };
        hit += own.iter().filter(|&&d| d > median).count();
        total += own.len();
    }
    Ok((total > 0).then(|| hit as f64 / total as f64))
}
