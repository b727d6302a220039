use std::io::Write;
use std::path::Path;

use super::{MetricsReport, ScoreTable};
use crate::error::{Error, Result};

/// Equal-width histogram of known and unknown scores over shared edges.
#[derive(Clone, Debug, PartialEq)]
pub struct Histogram {
    /// `bins + 1` edges.
    pub edges: Vec<f64>,
    pub known: Vec<usize>,
    pub unknown: Vec<usize>,
}

fn bin_of(v: f64, lo: f64, width: f64, bins: usize) -> usize {
    if width == 0.0 {
        return 0;
    }
    (((v - lo) / width) as usize).min(bins - 1)
}

/// The last bin is closed on the right so the maximum is counted.
pub fn histogram(known: &[f64], unknown: &[f64], bins: usize) -> Result<Histogram> {
    if bins == 0 {
        return Err(Error::contract("histogram needs at least one bin"));
    }
    let all = known.iter().chain(unknown);
    if all.clone().any(|v| !v.is_finite()) {
        return Err(Error::contract("histogram of non-finite scores"));
    }
    let lo = all.clone().copied().fold(f64::INFINITY, f64::min);
    let hi = all.copied().fold(f64::NEG_INFINITY, f64::max);
    if !lo.is_finite() {
        return Err(Error::contract("histogram of no scores"));
    }
    let width = (hi - lo) / bins as f64;
    let edges = (0..=bins)
        .map(|i| if i == bins { hi } else { lo + width * i as f64 })
        .collect();
    let count = |xs: &[f64]| {
        let mut c = vec![0usize; bins];
        for &v in xs {
            c[bin_of(v, lo, width, bins)] += 1;
        }
        c
    };
    Ok(Histogram {
        edges,
        known: count(known),
        unknown: count(unknown),
    })
}

fn create(path: &Path) -> Result<std::io::BufWriter<std::fs::File>> {
    Ok(std::io::BufWriter::new(std::fs::File::create(path)?))
}

/// `id,is_known,score,pred,true`
pub fn write_scores_csv(path: &Path, table: &ScoreTable) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "id,is_known,score,pred,true")?;
    for r in &table.rows {
        writeln!(w, "{},{},{:e},{},{}", r.id, u8::from(r.is_known), r.score, r.pred, r.true_label)?;
    }
    w.flush()?;
    Ok(())
}

/// `population,bin_lo,bin_hi,count`; an empty population is left out.
pub fn write_hist_csv(path: &Path, h: &Histogram) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "population,bin_lo,bin_hi,count")?;
    for (name, counts) in [("known", &h.known), ("unknown", &h.unknown)] {
        if counts.iter().all(|&c| c == 0) {
            continue;
        }
        for (i, c) in counts.iter().enumerate() {
            writeln!(w, "{name},{:e},{:e},{c}", h.edges[i], h.edges[i + 1])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// One row of `emb.csv`.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbRow {
    /// `sample`, `rp` or `proto`.
    pub kind: &'static str,
    /// Relabelled class, -1 for unknown samples.
    pub class: i64,
    pub values: Vec<f64>,
}

/// `kind,class,dim0,...`
pub fn write_emb_csv(path: &Path, rows: &[EmbRow]) -> Result<()> {
    let dim = rows.first().map_or(0, |r| r.values.len());
    if rows.iter().any(|r| r.values.len() != dim) {
        return Err(Error::contract("embedding rows differ in width"));
    }
    let mut w = create(path)?;
    let header: Vec<String> = (0..dim).map(|i| format!("dim{i}")).collect();
    writeln!(w, "kind,class,{}", header.join(","))?;
    for r in rows {
        let vals: Vec<String> = r.values.iter().map(|v| format!("{v:e}")).collect();
        writeln!(w, "{},{},{}", r.kind, r.class, vals.join(","))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_metrics_json(path: &Path, report: &MetricsReport) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, report)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}
