#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rpl::reciprocal::{
    loss_classification, loss_open, loss_prototype, prototype_distance, rp_distance, softmax_cross_entropy,
    total_loss, BoundPrototypes, BoundReciprocal, LossTerms, Mode,
};
use rpl::rng::SeededRng;
use rpl::tensor::{gradient_check, Graph, Tensor, Var};

pub const GRAD_EPS: f64 = 1e-5;
pub const GRAD_TOL: f64 = 1e-4;
pub const GRAD_INSTANCES: usize = 20;

pub fn rng(seed: u64) -> SeededRng {
    SeededRng::seed_from_u64(seed)
}

pub fn randn(r: &mut SeededRng, shape: &[usize], std: f64) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n).map(|_| std * rpl::rng::standard_normal(r)).collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

/// Contract `out` with fixed random weights so every output coordinate
/// contributes to the scalar.
fn project(g: &mut Graph, out: Var) -> rpl::Result<Var> {
    let shape = g.shape(out).to_vec();
    let w = g.input(randn(&mut rng(0xfeed), &shape, 1.0));
    let p = g.mul(out, w)?;
    g.sum(p)
}

type Case = Box<dyn Fn(&mut Graph, &[Var]) -> rpl::Result<Var>>;

/// One randomized instance: the scalar function and its inputs.
pub struct Instance {
    pub f: Case,
    pub inputs: Vec<Tensor>,
}

fn dims(r: &mut SeededRng, lo: usize, hi: usize) -> usize {
    r.gen_range(lo..=hi)
}

fn labels(r: &mut SeededRng, b: usize, n: usize) -> Vec<usize> {
    (0..b).map(|_| r.gen_range(0..n)).collect()
}

/// Randomized instance generators, by name: every graph op and every loss.
pub fn gradient_cases() -> Vec<(&'static str, fn(&mut SeededRng) -> Instance)> {
    vec![
        ("add", |r| {
            let s = [dims(r, 1, 4), dims(r, 1, 4)];
            Instance {
                f: Box::new(|g, v| {
                    let o = g.add(v[0], v[1])?;
                    project(g, o)
                }),
                inputs: vec![randn(r, &s, 1.0), randn(r, &s, 1.0)],
            }
        }),
        ("add_broadcast", |r| {
            let (a, b) = (dims(r, 1, 4), dims(r, 1, 4));
            Instance {
                f: Box::new(|g, v| {
                    let o = g.add(v[0], v[1])?;
                    project(g, o)
                }),
                inputs: vec![randn(r, &[a, b], 1.0), randn(r, &[b], 1.0)],
            }
        }),
        ("sub", |r| {
            let (a, b) = (dims(r, 1, 4), dims(r, 1, 4));
            Instance {
                f: Box::new(|g, v| {
                    let o = g.sub(v[0], v[1])?;
                    project(g, o)
                }),
                inputs: vec![randn(r, &[a, b], 1.0), randn(r, &[b], 1.0)],
            }
        }),
        ("mul", |r| {
            let (a, b, c) = (dims(r, 1, 3), dims(r, 1, 3), dims(r, 1, 3));
            Instance {
                f: Box::new(|g, v| {
                    let o = g.mul(v[0], v[1])?;
                    project(g, o)
                }),
                inputs: vec![randn(r, &[a, b, c], 1.0), randn(r, &[b, c], 1.0)],
            }
        }),
        ("scale", |r| {
            let c: f64 = r.gen_range(-2.0..2.0);
            let n = dims(r, 1, 6);
            Instance {
                f: Box::new(move |g, v| {
                    let o = g.scale(v[0], c)?;
                    project(g, o)
                }),
                inputs: vec![randn(r, &[n], 1.0)],
            }
        }),
        ("square", |r| {
            let n = dims(r, 1, 6);
            Instance {
                f: Box::new(|g, v| {
                    let o = g.square(v[0])?;
                    project(g, o)
                }),
                inputs: vec![randn(r, &[n, 2], 1.0)],
            }
        }),
        ("relu", |r| {
            let n = dims(r, 2, 8);
            Instance {
                f: Box::new(|g, v| {
                    let o = g.relu(v[0])?;
                    project(g, o)
                }),
                inputs: vec![randn(r, &[n], 1.0)],
            }
        }),
        ("matmul", |r| {
            let (m, k, n) = (dims(r, 1, 4), dims(r, 1, 4), dims(r, 1, 4));
            Instance {
                f: Box::new(|g, v| {
                    let o = g.matmul(v[0], v[1])?;
                    project(g, o)
                }),
                inputs: vec![randn(r, &[m, k], 1.0), randn(r, &[k, n], 1.0)],
            }
        }),
        ("conv2d", |r| {
            let (b, cin, cout) = (dims(r, 1, 2), dims(r, 1, 2), dims(r, 1, 3));
            let k = dims(r, 1, 3);
            let stride = dims(r, 1, 2);
            let pad = dims(r, 0, 1);
            // pick the output size, then an input size that yields it exactly
            let side = |r: &mut SeededRng| {
                let mut out = dims(r, 1, 3);
                while (out - 1) * stride + k < 2 * pad + 1 {
                    out += 1;
                }
                (out - 1) * stride + k - 2 * pad
            };
            let (h, w) = (side(r), side(r));
            let with_bias = r.gen_bool(0.5);
            let mut inputs = vec![randn(r, &[b, cin, h, w], 1.0), randn(r, &[cout, cin, k, k], 1.0)];
            if with_bias {
                inputs.push(randn(r, &[cout], 1.0));
            }
            Instance {
                f: Box::new(move |g, v| {
                    let o = g.conv2d(v[0], v[1], v.get(2).copied(), stride, pad)?;
                    project(g, o)
                }),
                inputs,
            }
        }),
        ("maxpool2", |r| {
            let (b, c) = (dims(r, 1, 2), dims(r, 1, 2));
            let (h, w) = (2 * dims(r, 1, 3), 2 * dims(r, 1, 3));
            Instance {
                f: Box::new(|g, v| {
                    let o = g.maxpool2(v[0])?;
                    project(g, o)
                }),
                inputs: vec![randn(r, &[b, c, h, w], 1.0)],
            }
        }),
        ("global_avg_pool", |r| {
            let s = [dims(r, 1, 2), dims(r, 1, 3), dims(r, 1, 4), dims(r, 1, 4)];
            Instance {
                f: Box::new(|g, v| {
                    let o = g.global_avg_pool(v[0])?;
                    project(g, o)
                }),
                inputs: vec![randn(r, &s, 1.0)],
            }
        }),
        ("sum", |r| {
            let s = [dims(r, 1, 4), dims(r, 1, 4)];
            Instance {
                f: Box::new(|g, v| {
                    let sq = g.square(v[0])?;
                    g.sum(sq)
                }),
                inputs: vec![randn(r, &s, 1.0)],
            }
        }),
        ("mean", |r| {
            let s = [dims(r, 1, 4), dims(r, 1, 4)];
            Instance {
                f: Box::new(|g, v| {
                    let sq = g.square(v[0])?;
                    g.mean(sq)
                }),
                inputs: vec![randn(r, &s, 1.0)],
            }
        }),
        ("sum_last", |r| {
            let s = [dims(r, 1, 3), dims(r, 1, 3), dims(r, 1, 4)];
            Instance {
                f: Box::new(|g, v| {
                    let o = g.sum_last(v[0])?;
                    project(g, o)
                }),
                inputs: vec![randn(r, &s, 1.0)],
            }
        }),
        ("mean_last", |r| {
            let s = [dims(r, 1, 3), dims(r, 1, 4)];
            Instance {
                f: Box::new(|g, v| {
                    let o = g.mean_last(v[0])?;
                    project(g, o)
                }),
                inputs: vec![randn(r, &s, 1.0)],
            }
        }),
        ("logsumexp", |r| {
            let s = [dims(r, 1, 3), dims(r, 1, 5)];
            Instance {
                f: Box::new(|g, v| {
                    let o = g.logsumexp(v[0])?;
                    project(g, o)
                }),
                inputs: vec![randn(r, &s, 3.0)],
            }
        }),
        ("reshape", |r| {
            let (a, b) = (dims(r, 1, 4), dims(r, 1, 4));
            Instance {
                f: Box::new(move |g, v| {
                    let o = g.reshape(v[0], &[b, a])?;
                    project(g, o)
                }),
                inputs: vec![randn(r, &[a, b], 1.0)],
            }
        }),
        ("index_select", |r| {
            let n = dims(r, 2, 8);
            let k = dims(r, 1, 10);
            // repeats allowed, so gradients accumulate
            let index: Vec<usize> = (0..k).map(|_| r.gen_range(0..n)).collect();
            Instance {
                f: Box::new(move |g, v| {
                    let o = g.index_select(v[0], index.clone(), &[k])?;
                    project(g, o)
                }),
                inputs: vec![randn(r, &[n], 1.0)],
            }
        }),
        ("pairwise_sq_dist", |r| {
            let (b, k, d) = (dims(r, 1, 4), dims(r, 1, 4), dims(r, 1, 5));
            Instance {
                f: Box::new(|g, v| {
                    let o = g.pairwise_sq_dist(v[0], v[1])?;
                    project(g, o)
                }),
                inputs: vec![randn(r, &[b, d], 1.0), randn(r, &[k, d], 1.0)],
            }
        }),
        ("reciprocal_distance", |r| {
            let (b, n, m, d) = (dims(r, 1, 4), dims(r, 2, 4), dims(r, 1, 3), dims(r, 2, 5));
            Instance {
                f: Box::new(move |g, v| {
                    let rps = bound_rps(v[1], v[2], n, m);
                    let o = rp_distance(g, v[0], &rps)?;
                    project(g, o)
                }),
                inputs: vec![randn(r, &[b, d], 1.0), randn(r, &[n * m, d], 1.0), randn(r, &[n], 1.0)],
            }
        }),
        ("classification_loss", |r| {
            let (b, n) = (dims(r, 1, 6), dims(r, 2, 5));
            let y = labels(r, b, n);
            let gamma = r.gen_range(0.1..1.5);
            Instance {
                f: Box::new(move |g, v| loss_classification(g, v[0], &y, gamma)),
                inputs: vec![randn(r, &[b, n], 2.0)],
            }
        }),
        ("classification_loss_from_embeddings", |r| {
            let (b, n, m, d) = (dims(r, 1, 4), dims(r, 2, 4), dims(r, 1, 2), dims(r, 2, 4));
            let y = labels(r, b, n);
            Instance {
                f: Box::new(move |g, v| {
                    let rps = bound_rps(v[1], v[2], n, m);
                    let dist = rp_distance(g, v[0], &rps)?;
                    loss_classification(g, dist, &y, 0.5)
                }),
                inputs: vec![randn(r, &[b, d], 1.0), randn(r, &[n * m, d], 1.0), randn(r, &[n], 1.0)],
            }
        }),
        ("open_space_loss", |r| {
            let (b, n, m, d) = (dims(r, 1, 4), dims(r, 2, 4), dims(r, 1, 3), dims(r, 2, 4));
            let y = labels(r, b, n);
            Instance {
                f: Box::new(move |g, v| {
                    let rps = bound_rps(v[1], v[2], n, m);
                    loss_open(g, v[0], &y, &rps)
                }),
                inputs: vec![randn(r, &[b, d], 1.0), randn(r, &[n * m, d], 1.0), randn(r, &[n], 1.0)],
            }
        }),
        ("prototype_loss", |r| {
            let (b, n, c, d) = (dims(r, 1, 4), dims(r, 2, 4), dims(r, 1, 3), dims(r, 2, 4));
            let y = labels(r, b, n);
            Instance {
                f: Box::new(move |g, v| {
                    let protos = BoundPrototypes {
                        protos: v[1],
                        classes: n,
                        per_class: c,
                    };
                    loss_prototype(g, v[0], &y, &protos)
                }),
                inputs: vec![randn(r, &[b, d], 1.0), randn(r, &[n * c, d], 1.0)],
            }
        }),
        ("joint_loss", |r| {
            let (b, n, m, d) = (dims(r, 1, 4), dims(r, 2, 4), dims(r, 1, 2), dims(r, 2, 4));
            let y = labels(r, b, n);
            let lambda = r.gen_range(0.0..1.0);
            Instance {
                f: Box::new(move |g, v| {
                    let rps = bound_rps(v[1], v[2], n, m);
                    let dist = rp_distance(g, v[0], &rps)?;
                    let terms = LossTerms {
                        classification: loss_classification(g, dist, &y, 0.5)?,
                        open: Some(loss_open(g, v[0], &y, &rps)?),
                        prototype: None,
                    };
                    total_loss(g, terms, lambda, 0.0, Mode::Rpl)
                }),
                inputs: vec![randn(r, &[b, d], 1.0), randn(r, &[n * m, d], 1.0), randn(r, &[n], 1.0)],
            }
        }),
        ("joint_loss_with_prototypes", |r| {
            let (b, n, d) = (dims(r, 1, 4), dims(r, 2, 4), dims(r, 2, 4));
            let y = labels(r, b, n);
            Instance {
                f: Box::new(move |g, v| {
                    let rps = bound_rps(v[1], v[2], n, 1);
                    let protos = BoundPrototypes {
                        protos: v[3],
                        classes: n,
                        per_class: 1,
                    };
                    let dist = rp_distance(g, v[0], &rps)?;
                    let terms = LossTerms {
                        classification: loss_classification(g, dist, &y, 0.5)?,
                        open: Some(loss_open(g, v[0], &y, &rps)?),
                        prototype: Some(loss_prototype(g, v[0], &y, &protos)?),
                    };
                    total_loss(g, terms, 0.1, 0.1, Mode::RplPlus)
                }),
                inputs: vec![
                    randn(r, &[b, d], 1.0),
                    randn(r, &[n, d], 1.0),
                    randn(r, &[n], 1.0),
                    randn(r, &[n, d], 1.0),
                ],
            }
        }),
        ("prototype_classification_loss", |r| {
            let (b, n, c, d) = (dims(r, 1, 4), dims(r, 2, 4), dims(r, 1, 2), dims(r, 2, 4));
            let y = labels(r, b, n);
            Instance {
                f: Box::new(move |g, v| {
                    let protos = BoundPrototypes {
                        protos: v[1],
                        classes: n,
                        per_class: c,
                    };
                    let dist = prototype_distance(g, v[0], &protos)?;
                    loss_classification(g, dist, &y, -0.5)
                }),
                inputs: vec![randn(r, &[b, d], 1.0), randn(r, &[n * c, d], 1.0)],
            }
        }),
        ("softmax_cross_entropy", |r| {
            let (b, n) = (dims(r, 1, 6), dims(r, 2, 5));
            let y = labels(r, b, n);
            Instance {
                f: Box::new(move |g, v| softmax_cross_entropy(g, v[0], &y)),
                inputs: vec![randn(r, &[b, n], 2.0)],
            }
        }),
    ]
}

fn bound_rps(points: Var, margins: Var, classes: usize, per_class: usize) -> BoundReciprocal {
    BoundReciprocal {
        points,
        margins,
        classes,
        per_class,
        gamma: 0.5,
    }
}

#[derive(Debug)]
pub struct CaseResult {
    pub name: &'static str,
    pub instances: usize,
    pub max_rel_error: f64,
    pub checked: usize,
    pub skipped: usize,
}

/// Run `instances` randomized checks of one case.
pub fn run_gradient_case(name: &'static str, make: fn(&mut SeededRng) -> Instance, instances: usize) -> CaseResult {
    let mut r = rng(name.bytes().fold(17u64, |h, b| h.wrapping_mul(31).wrapping_add(b as u64)));
    let mut res = CaseResult {
        name,
        instances,
        max_rel_error: 0.0,
        checked: 0,
        skipped: 0,
    };
    for _ in 0..instances {
        let inst = make(&mut r);
        let report = gradient_check(&inst.f, &inst.inputs, GRAD_EPS).unwrap_or_else(|e| panic!("{name}: {e}"));
        res.max_rel_error = res.max_rel_error.max(report.max_rel_error);
        res.checked += report.checked;
        res.skipped += report.skipped.len();
    }
    res
}

/// Pairwise AUROC: fraction of (known, unknown) pairs ordered correctly,
/// ties counting one half.
pub fn auroc_pairwise(known: &[f64], unknown: &[f64]) -> f64 {
    let mut wins = 0.0;
    for &k in known {
        for &u in unknown {
            if k > u {
                wins += 1.0;
            } else if k == u {
                wins += 0.5;
            }
        }
    }
    wins / (known.len() * unknown.len()) as f64
}

/// Average precision by sweeping every distinct threshold and recounting
/// the confusion matrix from scratch: sum of (recall step) x precision.
pub fn ap_threshold_sweep(scores: &[f64], positive: &[bool]) -> f64 {
    let mut thresholds: Vec<f64> = scores.to_vec();
    thresholds.sort_by(|a, b| b.partial_cmp(a).unwrap());
    thresholds.dedup();
    let total_pos = positive.iter().filter(|&&p| p).count() as f64;
    let mut prev_recall = 0.0;
    let mut ap = 0.0;
    for t in thresholds {
        let (mut tp, mut fp) = (0.0, 0.0);
        for (s, &p) in scores.iter().zip(positive) {
            if *s >= t {
                if p {
                    tp += 1.0;
                } else {
                    fp += 1.0;
                }
            }
        }
        let recall = tp / total_pos;
        ap += (recall - prev_recall) * (tp / (tp + fp));
        prev_recall = recall;
    }
    ap
}

/// A random scored test set with at least one known and one unknown
/// sample; about a third of the sets draw from a coarse grid to force ties.
pub fn random_score_set(r: &mut SeededRng, max_n: usize) -> (Vec<f64>, Vec<bool>) {
    let n = r.gen_range(2..=max_n);
    let coarse = r.gen_bool(0.33);
    let mut flags: Vec<bool> = (0..n).map(|_| r.gen_bool(0.5)).collect();
    flags[0] = true;
    flags[1] = false;
    let scores = (0..n)
        .map(|_| {
            if coarse {
                r.gen_range(0..8) as f64 * 0.25
            } else {
                rpl::rng::standard_normal(r)
            }
        })
        .collect();
    (scores, flags)
}

pub struct OracleResult {
    pub sets: usize,
    pub max_auroc_diff: f64,
    pub max_aupr_diff: f64,
}

pub fn run_metric_oracles(sets: usize, max_n: usize, seed: u64) -> OracleResult {
    use rpl::eval::{aupr, auroc, Positive};
    let mut r = rng(seed);
    let mut out = OracleResult {
        sets,
        max_auroc_diff: 0.0,
        max_aupr_diff: 0.0,
    };
    for _ in 0..sets {
        let (scores, flags) = random_score_set(&mut r, max_n);
        let known: Vec<f64> = scores.iter().zip(&flags).filter(|p| *p.1).map(|p| *p.0).collect();
        let unknown: Vec<f64> = scores.iter().zip(&flags).filter(|p| !*p.1).map(|p| *p.0).collect();
        let a = auroc(&known, &unknown).unwrap();
        out.max_auroc_diff = out.max_auroc_diff.max((a - auroc_pairwise(&known, &unknown)).abs());

        let ak = aupr(&scores, &flags, Positive::Known).unwrap();
        out.max_aupr_diff = out.max_aupr_diff.max((ak - ap_threshold_sweep(&scores, &flags)).abs());
        let neg: Vec<f64> = scores.iter().map(|s| -s).collect();
        let inv: Vec<bool> = flags.iter().map(|f| !f).collect();
        let au = aupr(&scores, &flags, Positive::Unknown).unwrap();
        out.max_aupr_diff = out.max_aupr_diff.max((au - ap_threshold_sweep(&neg, &inv)).abs());
    }
    out
}
