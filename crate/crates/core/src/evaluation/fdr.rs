use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{CafdError, Result};
use crate::ranking::RankedList;
use crate::tensorio::Split;

/// Cluster id used for failures that belong to no fault.
pub const NOISE: i64 = -1;

/// Failing test input id -> fault cluster id (or [`NOISE`]).
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct FaultClustering {
    pub cluster_of: BTreeMap<usize, i64>,
}

impl FaultClustering {
    pub fn new(cluster_of: BTreeMap<usize, i64>) -> Self {
        Self { cluster_of }
    }

    /// Number of distinct non-noise clusters.
    pub fn n_faults(&self) -> usize {
        self.cluster_of
            .values()
            .filter(|&&c| c >= 0)
            .collect::<BTreeSet<_>>()
            .len()
    }

    /// Every key must be a failing input of `split`.
    pub fn validate_against(&self, split: &Split) -> Result<()> {
        for &id in self.cluster_of.keys() {
            if id >= split.len() || split.pred[id] == split.labels[id] {
                return Err(CafdError::NotAFailure(id));
            }
        }
        Ok(())
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        #[derive(Deserialize)]
        struct Row {
            input_id: usize,
            cluster_id: i64,
        }
        let mut reader = csv::Reader::from_path(path.as_ref())?;
        let mut cluster_of = BTreeMap::new();
        for row in reader.deserialize::<Row>() {
            let row = row?;
            if row.cluster_id < NOISE {
                return Err(CafdError::invalid(format!(
                    "cluster id {} below -1",
                    row.cluster_id
                )));
            }
            if cluster_of.insert(row.input_id, row.cluster_id).is_some() {
                return Err(CafdError::invalid(format!(
                    "input {} listed twice in clustering",
                    row.input_id
                )));
            }
        }
        Ok(Self { cluster_of })
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("input_id,cluster_id\n");
        for (id, c) in &self.cluster_of {
            out.push_str(&format!("{id},{c}\n"));
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_csv_string()).map_err(|e| CafdError::io(path, e))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FdrResult {
    pub budget_fraction: f64,
    pub b: usize,
    pub detected: usize,
    pub total: usize,
    pub fdr: f64,
}

/// Budget in inputs: `round(fraction * n_test)`, at least 1.
pub fn budget_size(budget_fraction: f64, n_test: usize) -> Result<usize> {
    if !(budget_fraction > 0.0 && budget_fraction <= 1.0) {
        return Err(CafdError::invalid(format!(
            "budget fraction {budget_fraction} outside (0, 1]"
        )));
    }
    if n_test == 0 {
        return Err(CafdError::invalid("budget over an empty test set"));
    }
    Ok(((budget_fraction * n_test as f64).round() as usize).max(1))
}

/// Distinct non-noise clusters hit by the first `b` ranked inputs.
pub fn faults_detected(ranking: &RankedList, clustering: &FaultClustering, b: usize) -> usize {
    ranking
        .top(b)
        .iter()
        .filter_map(|e| clustering.cluster_of.get(&e.input_id))
        .filter(|&&c| c >= 0)
        .collect::<BTreeSet<_>>()
        .len()
}

/// `|F_T| / min(b, |F|)` over the first `b` entries of `ranking`.
pub fn fdr(
    ranking: &RankedList,
    clustering: &FaultClustering,
    budget_fraction: f64,
    n_test: usize,
) -> Result<FdrResult> {
    if ranking.is_empty() {
        return Err(CafdError::invalid("empty ranking"));
    }
    let b = budget_size(budget_fraction, n_test)?;
    let total = clustering.n_faults();
    if total == 0 {
        return Err(CafdError::UndefinedFdr);
    }
    let detected = faults_detected(ranking, clustering, b);
    Ok(FdrResult {
        budget_fraction,
        b,
        detected,
        total,
        fdr: detected as f64 / b.min(total) as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ranking::Direction;

    fn clustering(pairs: &[(usize, i64)]) -> FaultClustering {
        FaultClustering::new(pairs.iter().copied().collect())
    }

    fn identity_ranking(n: usize) -> RankedList {
        let scores: Vec<f64> = (0..n).map(|i| -(i as f64)).collect();
        RankedList::from_scores(&scores, Direction::Descending)
    }

    #[test]
    fn full_coverage_is_one() {
        let c = clustering(&[(0, 0), (1, 1), (2, 2), (5, 1)]);
        let r = fdr(&identity_ranking(10), &c, 0.5, 10).unwrap();
        assert_eq!((r.b, r.detected, r.total), (5, 3, 3));
        assert_eq!(r.fdr, 1.0);
    }

    #[test]
    fn no_failures_in_subset_is_zero() {
        let c = clustering(&[(8, 0), (9, 1)]);
        let r = fdr(&identity_ranking(10), &c, 0.3, 10).unwrap();
        assert_eq!(r.fdr, 0.0);
    }

    #[test]
    fn normalizes_by_budget_when_faults_exceed_it() {
        // 319 clusters, budget 10, 7 of them reached
        let mut pairs: Vec<(usize, i64)> = (0..7).map(|i| (i, i as i64)).collect();
        pairs.extend((0..312).map(|i| (100 + i, 7 + i as i64)));
        let c = clustering(&pairs);
        assert_eq!(c.n_faults(), 319);
        let r = fdr(&identity_ranking(1000), &c, 0.01, 1000).unwrap();
        assert_eq!(r.b, 10);
        assert_eq!(r.fdr, 0.7);
    }

    #[test]
    fn noise_is_ignored() {
        let c = clustering(&[(0, NOISE), (1, NOISE), (2, 0)]);
        assert_eq!(c.n_faults(), 1);
        let r = fdr(&identity_ranking(4), &c, 0.5, 4).unwrap();
        assert_eq!(r.detected, 0);
    }

    #[test]
    fn error_paths() {
        let c = clustering(&[(0, 0)]);
        assert!(fdr(&RankedList::default(), &c, 0.1, 10).is_err());
        assert!(fdr(&identity_ranking(3), &c, 0.0, 3).is_err());
        assert!(fdr(&identity_ranking(3), &c, 1.5, 3).is_err());
        assert!(matches!(
            fdr(&identity_ranking(3), &FaultClustering::default(), 0.5, 3),
            Err(CafdError::UndefinedFdr)
        ));
        assert_eq!(budget_size(0.001, 10).unwrap(), 1);
        assert_eq!(budget_size(0.05, 10).unwrap(), 1);
        assert_eq!(budget_size(0.15, 10).unwrap(), 2);
    }

    #[test]
    fn csv_roundtrip() {
        let c = clustering(&[(3, 0), (4, NOISE), (9, 2)]);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.csv");
        c.write_csv(&path).unwrap();
        assert_eq!(FaultClustering::read_csv(&path).unwrap(), c);
        fs::write(&path, "input_id,cluster_id\n1,0\n1,2\n").unwrap();
        assert!(FaultClustering::read_csv(&path).is_err());
    }
}
