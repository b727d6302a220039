use std::cmp::Ordering;

use super::ScoreTable;
use crate::error::{Error, Result};

fn cmp_f64(a: &f64, b: &f64) -> Ordering {
    a.partial_cmp(b).expect("scores are finite")
}

fn check_finite(scores: &[f64], what: &str) -> Result<()> {
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::contract(format!("{what} scores must be finite")));
    }
    Ok(())
}

/// Probability that a known sample scores higher than an unknown one, ties
/// counting one half; computed from mid-ranks (Mann-Whitney U).
pub fn auroc(known: &[f64], unknown: &[f64]) -> Result<f64> {
    if known.is_empty() || unknown.is_empty() {
        return Err(Error::contract("AUROC needs at least one known and one unknown score"));
    }
    check_finite(known, "known")?;
    check_finite(unknown, "unknown")?;
    let mut all: Vec<(f64, bool)> = known
        .iter()
        .map(|&s| (s, true))
        .chain(unknown.iter().map(|&s| (s, false)))
        .collect();
    all.sort_by(|a, b| cmp_f64(&a.0, &b.0));

    // sum of 1-based mid-ranks of the known scores, doubled to stay integral
    let mut twice_rank_sum: u128 = 0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j < all.len() && all[j].0 == all[i].0 {
            j += 1;
        }
        let knowns_in_block = all[i..j].iter().filter(|x| x.1).count() as u128;
        // mid-rank of positions i+1..=j is (i+1+j)/2
        twice_rank_sum += knowns_in_block * (i as u128 + 1 + j as u128);
        i = j;
    }
    let n1 = known.len() as u128;
    let n0 = unknown.len() as u128;
    // 2U = 2R - n1(n1+1)
    let twice_u = twice_rank_sum - n1 * (n1 + 1);
    Ok(twice_u as f64 / (2 * n1 * n0) as f64)
}

/// Which group counts as positive for [`aupr`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Positive {
    Known,
    Unknown,
}

/// Average precision with known-ness `scores` (higher = more likely known)
/// and `is_known` flags. For `Positive::Unknown` the ranking is reversed.
/// Tied scores form one threshold step.
pub fn aupr(scores: &[f64], is_known: &[bool], positive: Positive) -> Result<f64> {
    if scores.len() != is_known.len() {
        return Err(Error::contract("scores and labels differ in length"));
    }
    check_finite(scores, "AUPR")?;
    let (ranked, pos): (Vec<f64>, Vec<bool>) = match positive {
        Positive::Known => (scores.to_vec(), is_known.to_vec()),
        Positive::Unknown => (scores.iter().map(|s| -s).collect(), is_known.iter().map(|k| !k).collect()),
    };
    let total_pos = pos.iter().filter(|&&p| p).count();
    if total_pos == 0 || total_pos == pos.len() {
        return Err(Error::contract("AUPR needs at least one positive and one negative"));
    }
    let mut order: Vec<usize> = (0..ranked.len()).collect();
    order.sort_by(|&a, &b| cmp_f64(&ranked[b], &ranked[a]));

    let (mut tp, mut seen) = (0usize, 0usize);
    let mut ap = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        let mut block_pos = 0;
        while j < order.len() && ranked[order[j]] == ranked[order[i]] {
            block_pos += usize::from(pos[order[j]]);
            j += 1;
        }
        tp += block_pos;
        seen += j - i;
        if block_pos > 0 {
            ap += (block_pos as f64 / total_pos as f64) * (tp as f64 / seen as f64);
        }
        i = j;
    }
    Ok(ap)
}

/// Fraction of known test samples whose predicted class is their true class.
pub fn closed_accuracy(table: &ScoreTable) -> Result<f64> {
    if table.rows.is_empty() {
        return Err(Error::contract("accuracy of an empty table"));
    }
    if table.rows.iter().any(|r| !r.is_known) {
        return Err(Error::contract("closed-set accuracy is defined on known samples only"));
    }
    let correct = table
        .rows
        .iter()
        .filter(|r| r.pred as i64 == r.true_label)
        .count();
    Ok(correct as f64 / table.rows.len() as f64)
}

/// `1 - sqrt(2 * n_train / (n_train + n_test))`.
pub fn openness(n_train: usize, n_test: usize) -> Result<f64> {
    if n_train == 0 || n_test < n_train {
        return Err(Error::contract(format!(
            "openness needs n_test >= n_train >= 1, got ({n_train}, {n_test})"
        )));
    }
    Ok(1.0 - (2.0 * n_train as f64 / (n_train + n_test) as f64).sqrt())
}

/// Macro-F1 over the N known classes plus one "unknown" class, where a
/// sample is rejected as unknown when its maximum posterior is below
/// `threshold`. Classes with neither support nor predictions are left out
/// of the average.
pub fn f1_at_threshold(table: &ScoreTable, threshold: f64) -> Result<f64> {
    let n = match table.rows.first().and_then(|r| r.posterior.as_ref()) {
        Some(p) => p.len(),
        None => return Err(Error::contract("F1 needs per-class posteriors")),
    };
    let unknown = n;
    let mut tp = vec![0usize; n + 1];
    let mut fp = vec![0usize; n + 1];
    let mut fneg = vec![0usize; n + 1];
    for r in &table.rows {
        let post = r
            .posterior
            .as_ref()
            .filter(|p| p.len() == n)
            .ok_or_else(|| Error::contract(format!("row {} lacks an {n}-class posterior", r.id)))?;
        let sum: f64 = post.iter().sum();
        if (sum - 1.0).abs() > 1e-6 {
            return Err(Error::contract(format!("posterior of row {} sums to {sum}", r.id)));
        }
        let (arg, max) = post
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (k, &p)| if p > best.1 { (k, p) } else { best });
        let pred = if max < threshold { unknown } else { arg };
        let truth = if r.true_label < 0 { unknown } else { r.true_label as usize };
        if truth > unknown {
            return Err(Error::contract(format!("row {} has label {truth} >= {n}", r.id)));
        }
        if pred == truth {
            tp[truth] += 1;
        } else {
            fp[pred] += 1;
            fneg[truth] += 1;
        }
    }
    let scores: Vec<f64> = (0..=n)
        .filter(|&c| tp[c] + fp[c] + fneg[c] > 0)
        .map(|c| 2.0 * tp[c] as f64 / (2 * tp[c] + fp[c] + fneg[c]) as f64)
        .collect();
    if scores.is_empty() {
        return Err(Error::contract("F1 of an empty table"));
    }
    Ok(scores.iter().sum::<f64>() / scores.len() as f64)
}
