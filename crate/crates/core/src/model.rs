//! An encoder plus the head its training mode needs, with the training step
//! and the known-vs-unknown scoring used at evaluation time.
//!
//! | mode             | head                         | score                  |
//! |------------------|------------------------------|------------------------|
//! | rpl, rpl++       | reciprocal points (+ protos) | max reciprocal distance|
//! | gcpl-baseline    | prototypes                   | minus min proto distance|
//! | softmax-baseline | linear layer                 | max softmax probability|

use crate::error::{Error, Result};
use crate::nn::{Encoder, EncoderConfig, Parameter};
use crate::optim::Optimizer;
use crate::reciprocal::{
    self, detect_score, loss_classification, loss_open_from_sq, loss_prototype, point_sq_distances,
    prototype_distance, softmax_cross_entropy, softmax_rows, total_loss, LossTerms, Mode,
    PrototypeSet, ReciprocalSet, TrainConfig,
};
use crate::rng::{normal_vec, stream_rng, Stream};
use crate::tensor::{Graph, Tensor, Var};

/// Linear classifier over embeddings for the softmax baseline.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearHead {
    /// (d, N)
    pub weight: Parameter,
    /// (N)
    pub bias: Parameter,
}

impl LinearHead {
    pub fn init(dim: usize, classes: usize, seed: u64) -> Self {
        let mut rng = stream_rng(seed, Stream::Head, 0);
        let std = (2.0 / dim as f64).sqrt();
        LinearHead {
            weight: Parameter::new(
                "head.weight",
                Tensor::from_parts(vec![dim, classes], normal_vec(&mut rng, dim * classes, 0.0, std)),
            ),
            bias: Parameter::new("head.bias", Tensor::zeros(&[classes])),
        }
    }
}

/// Loss values of one batch.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StepLoss {
    pub total: f64,
    pub classification: f64,
    pub open: f64,
    pub prototype: f64,
}

/// Per-sample evaluation outputs of a model.
#[derive(Clone, Debug)]
pub struct ScoreOutput {
    /// Higher means more likely known.
    pub scores: Vec<f64>,
    pub predictions: Vec<usize>,
    /// (B, N), rows sum to one.
    pub posteriors: Tensor,
    /// (B, N) distances to each class's reciprocal points (rpl modes) or
    /// prototypes (gcpl); `None` for the softmax baseline.
    pub distances: Option<Tensor>,
    pub embeddings: Tensor,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OpenSetModel {
    pub mode: Mode,
    pub lambda: f64,
    pub gamma: f64,
    pub beta: f64,
    pub classes: usize,
    pub encoder: Encoder,
    pub reciprocal: Option<ReciprocalSet>,
    pub prototypes: Option<PrototypeSet>,
    pub linear: Option<LinearHead>,
}

impl OpenSetModel {
    /// Fresh model. Prototype modes still need [`OpenSetModel::init_prototypes`]
    /// before training.
    pub fn new(encoder: EncoderConfig, cfg: &TrainConfig, classes: usize) -> Result<Self> {
        cfg.validate()?;
        if classes < 2 {
            return Err(Error::config(format!("need at least 2 known classes, got {classes}")));
        }
        let encoder = Encoder::new(encoder)?;
        let dim = encoder.embed_dim();
        let reciprocal = if cfg.mode.uses_reciprocal_points() {
            Some(ReciprocalSet::init(classes, cfg.points_per_class, dim, cfg.gamma, cfg.seed)?)
        } else {
            None
        };
        let linear = (cfg.mode == Mode::SoftmaxBaseline).then(|| LinearHead::init(dim, classes, cfg.seed));
        Ok(OpenSetModel {
            mode: cfg.mode,
            lambda: cfg.lambda,
            gamma: cfg.gamma,
            beta: cfg.beta,
            classes,
            encoder,
            reciprocal,
            prototypes: None,
            linear,
        })
    }

    /// Place prototypes at the known-class centres of the current encoder.
    pub fn init_prototypes(&mut self, images: &Tensor, labels: &[usize], per_class: usize) -> Result<()> {
        self.prototypes = Some(reciprocal::prototype_init(
            &self.encoder,
            images,
            labels,
            self.classes,
            per_class,
            self.beta,
        )?);
        Ok(())
    }

    /// Every trainable tensor, in a stable order: encoder, reciprocal points,
    /// margins, prototypes, linear head.
    pub fn params(&self) -> Vec<&Parameter> {
        let mut out: Vec<&Parameter> = self.encoder.params().iter().collect();
        if let Some(r) = &self.reciprocal {
            out.push(&r.points);
            out.push(&r.margins);
        }
        if let Some(p) = &self.prototypes {
            out.push(&p.protos);
        }
        if let Some(h) = &self.linear {
            out.push(&h.weight);
            out.push(&h.bias);
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Parameter> {
        let mut out: Vec<&mut Parameter> = self.encoder.params_mut().iter_mut().collect();
        if let Some(r) = &mut self.reciprocal {
            out.push(&mut r.points);
            out.push(&mut r.margins);
        }
        if let Some(p) = &mut self.prototypes {
            out.push(&mut p.protos);
        }
        if let Some(h) = &mut self.linear {
            out.push(&mut h.weight);
            out.push(&mut h.bias);
        }
        out
    }

    fn check_ready(&self) -> Result<()> {
        if self.mode.uses_prototypes() && self.prototypes.is_none() {
            return Err(Error::contract(format!("mode {} needs initialised prototypes", self.mode)));
        }
        Ok(())
    }

    /// Build the training loss of a batch on `g`. Returns the bound parameter
    /// vars (same order as [`OpenSetModel::params`]), the total loss and its
    /// terms.
    pub fn build_loss(&self, g: &mut Graph, images: &Tensor, labels: &[usize]) -> Result<(Vec<Var>, Var, LossTerms)> {
        self.check_ready()?;
        let mut vars = self.encoder.bind(g, true);
        let x = g.input(images.clone());
        let emb = self.encoder.forward(g, &vars, x)?;

        let mut terms = None;
        if let Some(rps) = &self.reciprocal {
            let b = rps.bind(g, true);
            vars.push(b.points);
            vars.push(b.margins);
            let sq = point_sq_distances(g, emb, &b)?;
            let grouped = g.reshape(sq, &[labels.len(), b.classes, b.per_class])?;
            let dist = g.mean_last(grouped)?;
            let lc = loss_classification(g, dist, labels, self.gamma)?;
            let lo = loss_open_from_sq(g, sq, labels, &b)?;
            terms = Some(LossTerms {
                classification: lc,
                open: Some(lo),
                prototype: None,
            });
        }
        if let Some(protos) = &self.prototypes {
            let b = protos.bind(g, true);
            vars.push(b.protos);
            let lpl = loss_prototype(g, emb, labels, &b)?;
            terms = Some(match terms {
                Some(t) => LossTerms {
                    prototype: Some(lpl),
                    ..t
                },
                None => {
                    // distance-based classification toward the nearest prototype
                    let dist = prototype_distance(g, emb, &b)?;
                    let lc = loss_classification(g, dist, labels, -self.gamma)?;
                    LossTerms {
                        classification: lc,
                        open: None,
                        prototype: Some(lpl),
                    }
                }
            });
        }
        if let Some(head) = &self.linear {
            let w = g.param(head.weight.value.clone());
            let bias = g.param(head.bias.value.clone());
            vars.push(w);
            vars.push(bias);
            let z = g.matmul(emb, w)?;
            let logits = g.add(z, bias)?;
            terms = Some(LossTerms {
                classification: softmax_cross_entropy(g, logits, labels)?,
                open: None,
                prototype: None,
            });
        }
        let terms = terms.ok_or_else(|| Error::contract("model has no head"))?;
        let total = total_loss(g, terms, self.lambda, self.beta, self.mode)?;
        Ok((vars, total, terms))
    }

    /// Forward, backward and one optimizer update on a batch.
    pub fn train_step(&mut self, images: &Tensor, labels: &[usize], opt: &mut Optimizer, lr: f64) -> Result<StepLoss> {
        let mut g = Graph::new();
        let (vars, total, terms) = self.build_loss(&mut g, images, labels)?;
        g.backward(total)?;
        let value = |v: Option<Var>| v.map_or(0.0, |v| g.value(v).data()[0]);
        let stats = StepLoss {
            total: g.value(total).data()[0],
            classification: value(Some(terms.classification)),
            open: value(terms.open),
            prototype: value(terms.prototype),
        };
        let mut params = self.params_mut();
        for (p, &v) in params.iter_mut().zip(&vars) {
            p.grad = g.grad(v);
            if !p.grad.all_finite() {
                return Err(Error::NonFinite { op: "backward" });
            }
        }
        opt.step(&mut params, lr)?;
        Ok(stats)
    }

    /// Scores, predictions and posteriors for a batch of images.
    pub fn score(&self, images: &Tensor) -> Result<ScoreOutput> {
        self.check_ready()?;
        let emb = self.encoder.embed_all(images)?;
        self.score_embeddings(emb)
    }

    pub fn score_embeddings(&self, emb: Tensor) -> Result<ScoreOutput> {
        let (known_ness, posteriors, distances) = match (self.mode, &self.reciprocal, &self.prototypes, &self.linear) {
            (Mode::Rpl | Mode::RplPlus, Some(rps), _, _) => {
                let d = rps.distances(&emb)?;
                let post = softmax_rows(&d, self.gamma)?;
                (d.clone(), post, Some(d))
            }
            (Mode::GcplBaseline, _, Some(protos), _) => {
                let d = protos.distances(&emb)?;
                let neg = Tensor::from_parts(d.shape().to_vec(), d.data().iter().map(|v| -v).collect());
                let post = softmax_rows(&d, -self.gamma)?;
                (neg, post, Some(d))
            }
            (Mode::SoftmaxBaseline, _, _, Some(head)) => {
                let mut g = Graph::new();
                let e = g.input(emb.clone());
                let w = g.input(head.weight.value.clone());
                let b = g.input(head.bias.value.clone());
                let z = g.matmul(e, w)?;
                let logits = g.add(z, b)?;
                let post = softmax_rows(g.value(logits), 1.0)?;
                (post.clone(), post, None)
            }
            _ => return Err(Error::contract(format!("model lacks the head for mode {}", self.mode))),
        };
        let det = detect_score(&known_ness);
        Ok(ScoreOutput {
            scores: det.iter().map(|d| d.score).collect(),
            predictions: det.iter().map(|d| d.class).collect(),
            posteriors,
            distances,
            embeddings: emb,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optim::OptimizerKind;

    fn tiny_cfg(mode: Mode) -> TrainConfig {
        TrainConfig {
            mode,
            seed: 11,
            lr: 0.01,
            optimizer: OptimizerKind::Adam,
            ..TrainConfig::default()
        }
    }

    fn blobs() -> (Tensor, Vec<usize>) {
        // three well separated 1x2x2 "images"
        let mut data = Vec::new();
        let mut labels = Vec::new();
        for i in 0..30 {
            let k = i % 3;
            let mut img = [0.05 * (i as f64 / 30.0); 4];
            img[k] += 1.0;
            data.extend_from_slice(&img);
            labels.push(k);
        }
        (Tensor::new(vec![30, 1, 2, 2], data).unwrap(), labels)
    }

    #[test]
    fn every_mode_learns_separable_blobs() {
        let (x, y) = blobs();
        for mode in [Mode::Rpl, Mode::RplPlus, Mode::GcplBaseline, Mode::SoftmaxBaseline] {
            let cfg = tiny_cfg(mode);
            let mut m = OpenSetModel::new(EncoderConfig::mlp_small((1, 2, 2), 8, 3), &cfg, 3).unwrap();
            if mode.uses_prototypes() {
                m.init_prototypes(&x, &y, 1).unwrap();
            }
            let mut opt = Optimizer::new(cfg.optimizer);
            let first = m.train_step(&x, &y, &mut opt, cfg.lr).unwrap().total;
            let mut last = first;
            for _ in 0..150 {
                last = m.train_step(&x, &y, &mut opt, cfg.lr).unwrap().total;
            }
            assert!(last < first, "{mode}: {first} -> {last}");
            let out = m.score(&x).unwrap();
            let acc = out.predictions.iter().zip(&y).filter(|(p, t)| p == t).count();
            assert_eq!(acc, 30, "{mode}");
            for row in out.posteriors.data().chunks(3) {
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn prototype_modes_require_init() {
        let (x, y) = blobs();
        let m = OpenSetModel::new(EncoderConfig::mlp_small((1, 2, 2), 8, 3), &tiny_cfg(Mode::RplPlus), 3).unwrap();
        let mut g = Graph::new();
        assert!(matches!(m.build_loss(&mut g, &x, &y), Err(Error::Contract(_))));
    }

    #[test]
    fn param_order_matches_bound_vars() {
        let (x, y) = blobs();
        let mut m = OpenSetModel::new(EncoderConfig::mlp_small((1, 2, 2), 8, 3), &tiny_cfg(Mode::RplPlus), 3).unwrap();
        m.init_prototypes(&x, &y, 2).unwrap();
        let mut g = Graph::new();
        let (vars, _, _) = m.build_loss(&mut g, &x, &y).unwrap();
        let params = m.params();
        assert_eq!(vars.len(), params.len());
        for (v, p) in vars.iter().zip(params) {
            assert_eq!(g.value(*v).shape(), p.value.shape(), "{}", p.name);
        }
    }
}
