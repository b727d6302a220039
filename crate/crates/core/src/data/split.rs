use crate::error::{Error, Result};
use crate::rng::{shuffle, stream_rng, Stream};

/// Label given to unknown-class test samples after relabelling.
pub const UNKNOWN_LABEL: i64 = -1;

/// Partition of a label space into known (trained on) and unknown (test-only)
/// classes. Known class `known[i]` is relabelled to `i`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OpenSetSplit {
    pub known: Vec<usize>,
    pub unknown: Vec<usize>,
    /// Unknown ids index a second source's label space (CIFAR+N style).
    pub cross_source: bool,
    pub seed: u64,
    pub trial: u64,
}

impl OpenSetSplit {
    /// Build from explicit class lists, checking disjointness.
    pub fn from_classes(
        mut known: Vec<usize>,
        mut unknown: Vec<usize>,
        cross_source: bool,
        seed: u64,
        trial: u64,
    ) -> Result<Self> {
        known.sort_unstable();
        unknown.sort_unstable();
        if known.len() < 2 {
            return Err(Error::config("a split needs at least 2 known classes"));
        }
        if known.windows(2).any(|w| w[0] == w[1]) || unknown.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::config("duplicate class id in split"));
        }
        if !cross_source && known.iter().any(|k| unknown.binary_search(k).is_ok()) {
            return Err(Error::config("known and unknown classes overlap"));
        }
        Ok(OpenSetSplit {
            known,
            unknown,
            cross_source,
            seed,
            trial,
        })
    }

    pub fn n_known(&self) -> usize {
        self.known.len()
    }

    /// Original id -> [0, N), if known.
    pub fn relabel(&self, original: usize) -> Option<usize> {
        self.known.binary_search(&original).ok()
    }

    /// [0, N) -> original id.
    pub fn original(&self, relabelled: usize) -> Option<usize> {
        self.known.get(relabelled).copied()
    }

    pub fn is_unknown(&self, original: usize) -> bool {
        self.unknown.binary_search(&original).is_ok()
    }

    /// Relabelled id for a known sample, [`UNKNOWN_LABEL`] otherwise.
    pub fn test_label(&self, original: usize) -> i64 {
        self.relabel(original).map_or(UNKNOWN_LABEL, |k| k as i64)
    }

    /// Plain-text `key=value` form, used for split files next to checkpoints.
    pub fn to_text(&self) -> String {
        let join = |v: &[usize]| v.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(",");
        format!(
            "known={}\nunknown={}\ncross_source={}\nseed={}\ntrial={}\n",
            join(&self.known),
            join(&self.unknown),
            self.cross_source,
            self.seed,
            self.trial
        )
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut known = None;
        let mut unknown = None;
        let mut cross = false;
        let mut seed = 0;
        let mut trial = 0;
        let list = |v: &str| -> Result<Vec<usize>> {
            if v.trim().is_empty() {
                return Ok(Vec::new());
            }
            v.split(',')
                .map(|s| s.trim().parse().map_err(|_| Error::config(format!("bad class id {s:?}"))))
                .collect()
        };
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::config(format!("split line without '=': {line:?}")))?;
            let bad = |_| Error::config(format!("bad value for {k}: {v:?}"));
            match k.trim() {
                "known" => known = Some(list(v)?),
                "unknown" => unknown = Some(list(v)?),
                "cross_source" => cross = v.trim().parse().map_err(|_| Error::config(format!("bad cross_source {v:?}")))?,
                "seed" => seed = v.trim().parse().map_err(bad)?,
                "trial" => trial = v.trim().parse().map_err(bad)?,
                other => return Err(Error::config(format!("unknown split key {other:?}"))),
            }
        }
        OpenSetSplit::from_classes(
            known.ok_or_else(|| Error::config("split file lacks known="))?,
            unknown.unwrap_or_default(),
            cross,
            seed,
            trial,
        )
    }
}

/// `n_known` classes of `total` drawn uniformly without replacement; the
/// remaining classes are unknown.
pub fn make_split(total: usize, n_known: usize, seed: u64, trial: u64) -> Result<OpenSetSplit> {
    make_split_with_unknowns(total, n_known, total.saturating_sub(n_known), seed, trial)
}

/// Like [`make_split`] but keeps only `n_unknown` of the remaining classes
/// as unknowns (openness sweeps).
pub fn make_split_with_unknowns(
    total: usize,
    n_known: usize,
    n_unknown: usize,
    seed: u64,
    trial: u64,
) -> Result<OpenSetSplit> {
    if n_known < 2 || n_known > total {
        return Err(Error::config(format!(
            "n_known must lie in [2, {total}], got {n_known}"
        )));
    }
    if n_known + n_unknown > total {
        return Err(Error::config(format!(
            "{n_known} known + {n_unknown} unknown exceeds {total} classes"
        )));
    }
    let mut rng = stream_rng(seed, Stream::Split, trial);
    let mut classes: Vec<usize> = (0..total).collect();
    shuffle(&mut rng, &mut classes);
    let known = classes[..n_known].to_vec();
    let unknown = classes[n_known..n_known + n_unknown].to_vec();
    OpenSetSplit::from_classes(known, unknown, false, seed, trial)
}

/// Knowns from one source, unknowns from a second source's label space.
pub fn make_cross_split(
    known_total: usize,
    n_known: usize,
    unknown_total: usize,
    n_unknown: usize,
    seed: u64,
    trial: u64,
) -> Result<OpenSetSplit> {
    if n_known < 2 || n_known > known_total {
        return Err(Error::config(format!(
            "n_known must lie in [2, {known_total}], got {n_known}"
        )));
    }
    if n_unknown > unknown_total {
        return Err(Error::config(format!(
            "cannot draw {n_unknown} unknown classes from {unknown_total}"
        )));
    }
    let mut rng = stream_rng(seed, Stream::Split, trial);
    let mut known: Vec<usize> = (0..known_total).collect();
    shuffle(&mut rng, &mut known);
    let mut unknown: Vec<usize> = (0..unknown_total).collect();
    shuffle(&mut rng, &mut unknown);
    OpenSetSplit::from_classes(
        known[..n_known].to_vec(),
        unknown[..n_unknown].to_vec(),
        true,
        seed,
        trial,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn six_four_split() {
        let s = make_split(10, 6, 1, 0).unwrap();
        assert_eq!(s.known.len(), 6);
        assert_eq!(s.unknown.len(), 4);
        assert!(s.known.iter().all(|k| !s.unknown.contains(k)));
        for (i, &k) in s.known.iter().enumerate() {
            assert_eq!(s.relabel(k), Some(i));
            assert_eq!(s.original(i), Some(k));
        }
        for &u in &s.unknown {
            assert_eq!(s.test_label(u), UNKNOWN_LABEL);
        }
    }

    #[test]
    fn split_is_deterministic_and_trial_dependent() {
        assert_eq!(make_split(10, 6, 9, 2).unwrap(), make_split(10, 6, 9, 2).unwrap());
        let distinct: std::collections::BTreeSet<Vec<usize>> =
            (0..5).map(|t| make_split(10, 6, 9, t).unwrap().known).collect();
        assert!(distinct.len() > 1);
    }

    #[test]
    fn closed_set_and_range_errors() {
        let s = make_split(10, 10, 0, 0).unwrap();
        assert!(s.unknown.is_empty());
        assert!(make_split(10, 1, 0, 0).is_err());
        assert!(make_split(10, 11, 0, 0).is_err());
        assert!(make_split_with_unknowns(10, 6, 5, 0, 0).is_err());
    }

    #[test]
    fn cross_split_draws_from_second_source() {
        let s = make_cross_split(10, 4, 100, 10, 3, 0).unwrap();
        assert_eq!(s.known.len(), 4);
        assert_eq!(s.unknown.len(), 10);
        assert!(s.cross_source);
        assert!(s.unknown.iter().all(|&u| u < 100));
    }

    #[test]
    fn text_round_trip() {
        let s = make_split_with_unknowns(10, 6, 2, 4, 1).unwrap();
        assert_eq!(OpenSetSplit::from_text(&s.to_text()).unwrap(), s);
        assert!(OpenSetSplit::from_text("known=1,2\nbogus=3").is_err());
        assert!(OpenSetSplit::from_text("known=1,2\nunknown=2").is_err());
    }
}
