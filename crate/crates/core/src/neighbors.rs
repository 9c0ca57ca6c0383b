//! Exact k-nearest-neighbour search over training latents, the
//! distance-weighted class support of each query, and the DATIS score.
//!
//! Batch search screens candidates with a blocked `f32` matrix product and a
//! rigorous rounding bound, then re-scores the survivors with the exact
//! `f64` distance. The result is identical to a full scan with [`sq_dist`].

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array2, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CafdError, Result};
use crate::ranking::{Direction, RankedList};
use crate::tensorio::DatasetBundle;

pub const DEFAULT_K: usize = 10;
pub const DEFAULT_TAU: f64 = 1.0;
pub const DEFAULT_EPSILON: f64 = 1e-12;

const QUERY_BLOCK: usize = 64;
const TRAIN_BLOCK: usize = 2048;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NeighborConfig {
    pub k: usize,
    pub tau: f64,
    pub epsilon: f64,
}

impl Default for NeighborConfig {
    fn default() -> Self {
        Self {
            k: DEFAULT_K,
            tau: DEFAULT_TAU,
            epsilon: DEFAULT_EPSILON,
        }
    }
}

impl NeighborConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(CafdError::invalid("K must be at least 1"));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(CafdError::invalid(format!("tau must be positive, got {}", self.tau)));
        }
        if !(self.epsilon >= 0.0) {
            return Err(CafdError::invalid("epsilon must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NeighborSet {
    pub query_id: usize,
    pub neighbor_ids: Vec<usize>,
    pub sq_dists: Vec<f64>,
}

/// Squared Euclidean distance of `f32` vectors accumulated in `f64`, summed
/// in index order.
#[inline]
pub fn sq_dist(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum()
}

fn by_dist_then_index(a: &(f64, usize), b: &(f64, usize)) -> Ordering {
    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
}

fn finish(query_id: usize, mut scored: Vec<(f64, usize)>, k: usize) -> NeighborSet {
    if scored.len() > k {
        scored.select_nth_unstable_by(k - 1, by_dist_then_index);
        scored.truncate(k);
    }
    scored.sort_by(by_dist_then_index);
    NeighborSet {
        query_id,
        neighbor_ids: scored.iter().map(|s| s.1).collect(),
        sq_dists: scored.iter().map(|s| s.0).collect(),
    }
}

fn check_k(k: usize, available: usize) -> Result<()> {
    if k == 0 || k > available {
        return Err(CafdError::invalid(format!(
            "K = {k} outside [1, {available}]"
        )));
    }
    Ok(())
}

/// Exhaustive search for one query.
pub fn knn(query: &[f32], train: ArrayView2<'_, f32>, k: usize) -> Result<NeighborSet> {
    check_k(k, train.nrows())?;
    if query.len() != train.ncols() {
        return Err(CafdError::DimensionMismatch {
            expected: train.ncols(),
            found: query.len(),
        });
    }
    let scored: Vec<(f64, usize)> = train
        .outer_iter()
        .enumerate()
        .map(|(i, row)| (sq_dist(query, row.as_slice().expect("standard layout")), i))
        .collect();
    Ok(finish(0, scored, k))
}

#[derive(Clone, Copy, PartialEq)]
struct Bound(f64);

impl Eq for Bound {}

impl PartialOrd for Bound {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Bound {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// Per-query running state of the screening pass.
struct Screen {
    k: usize,
    /// max-heap of the K smallest distance upper bounds seen so far
    upper: BinaryHeap<Bound>,
    candidates: Vec<(f64, usize)>,
}

impl Screen {
    fn new(k: usize) -> Self {
        Self {
            k,
            upper: BinaryHeap::with_capacity(k + 1),
            candidates: Vec::with_capacity(4 * k + 64),
        }
    }

    fn threshold(&self) -> f64 {
        if self.upper.len() < self.k {
            f64::INFINITY
        } else {
            self.upper.peek().map_or(f64::INFINITY, |b| b.0)
        }
    }

    #[inline]
    fn offer(&mut self, j: usize, lower: f64, upper: f64) {
        if self.upper.len() < self.k {
            self.upper.push(Bound(upper));
        } else if upper < self.upper.peek().unwrap().0 {
            self.upper.pop();
            self.upper.push(Bound(upper));
        }
        if lower <= self.threshold() {
            self.candidates.push((lower, j));
            if self.candidates.len() > 8 * self.k + 256 {
                self.prune();
            }
        }
    }

    fn prune(&mut self) {
        let t = self.threshold();
        self.candidates.retain(|c| c.0 <= t);
    }
}

/// Exact K nearest neighbours of every query row among `train` rows.
///
/// With `exclude_self`, query `i` never matches training row `i` (used when
/// the queries are the training set itself).
pub fn knn_batch(
    queries: ArrayView2<'_, f32>,
    train: ArrayView2<'_, f32>,
    k: usize,
    exclude_self: bool,
) -> Result<Vec<NeighborSet>> {
    let available = train.nrows() - usize::from(exclude_self && train.nrows() > 0);
    check_k(k, available)?;
    if queries.ncols() != train.ncols() {
        return Err(CafdError::DimensionMismatch {
            expected: train.ncols(),
            found: queries.ncols(),
        });
    }
    let train = train.as_standard_layout();
    let queries = queries.as_standard_layout();
    let d = train.ncols();
    let sq_norm = |row: &[f32]| row.iter().map(|&v| v as f64 * v as f64).sum::<f64>();
    let train_sq: Vec<f64> = train
        .outer_iter()
        .map(|r| sq_norm(r.as_slice().unwrap()))
        .collect();
    // f32 dot products err by at most gamma_d * |q| * |t|
    let unit = f32::EPSILON as f64 / 2.0;
    let gamma = (d as f64 + 2.0) * unit / (1.0 - (d as f64 + 2.0) * unit);
    let dot_slack = 2.0 * gamma * 1.01;

    let n_blocks = queries.nrows().div_ceil(QUERY_BLOCK);
    let blocks: Vec<Vec<NeighborSet>> = (0..n_blocks)
        .into_par_iter()
        .map(|b| {
            let q0 = b * QUERY_BLOCK;
            let q1 = (q0 + QUERY_BLOCK).min(queries.nrows());
            let qblock = queries.slice(s![q0..q1, ..]);
            let q_sq: Vec<f64> = qblock
                .outer_iter()
                .map(|r| sq_norm(r.as_slice().unwrap()))
                .collect();
            let mut screens: Vec<Screen> = (q0..q1).map(|_| Screen::new(k)).collect();
            let mut gram = Array2::<f32>::zeros((q1 - q0, TRAIN_BLOCK.min(train.nrows())));
            for t0 in (0..train.nrows()).step_by(TRAIN_BLOCK) {
                let t1 = (t0 + TRAIN_BLOCK).min(train.nrows());
                let tblock = train.slice(s![t0..t1, ..]);
                let mut g = gram.slice_mut(s![.., ..t1 - t0]);
                general_mat_mul(1.0, &qblock, &tblock.t(), 0.0, &mut g);
                for (qi, screen) in screens.iter_mut().enumerate() {
                    let qn = q_sq[qi];
                    let qlen = qn.sqrt();
                    let query_id = q0 + qi;
                    for (tj, &dot) in g.row(qi).iter().enumerate() {
                        let j = t0 + tj;
                        if exclude_self && j == query_id {
                            continue;
                        }
                        let tn = train_sq[j];
                        let approx = qn + tn - 2.0 * dot as f64;
                        let err = dot_slack * qlen * tn.sqrt() + 1e-12 * (qn + tn);
                        screen.offer(j, approx - err, approx + err);
                    }
                }
            }
            screens
                .into_iter()
                .enumerate()
                .map(|(qi, mut screen)| {
                    screen.prune();
                    let q = qblock.row(qi);
                    let q = q.as_slice().unwrap();
                    let scored = screen
                        .candidates
                        .iter()
                        .map(|&(_, j)| (sq_dist(q, train.row(j).as_slice().unwrap()), j))
                        .collect();
                    finish(q0 + qi, scored, k)
                })
                .collect()
        })
        .collect();
    Ok(blocks.into_iter().flatten().collect())
}

/// Distance-weighted support of every class among a query's neighbours.
#[derive(Debug, Clone, PartialEq)]
pub struct SupportVector {
    pub query_id: usize,
    pub support: Vec<f64>,
    pub tau: f64,
    pub k: usize,
}

/// `support[c] = sum_i w_i [y_i = c] / sum_i w_i` with `w_i = exp(-d_i / tau)`.
///
/// Weights are shifted by the nearest distance before exponentiation; the
/// shift cancels in the ratio and keeps the denominator at least one.
pub fn support_from_neighbors(
    neighbors: &NeighborSet,
    train_labels: &[usize],
    num_classes: usize,
    tau: f64,
) -> Result<SupportVector> {
    if !(tau > 0.0) {
        return Err(CafdError::invalid(format!("tau must be positive, got {tau}")));
    }
    let nearest = neighbors.sq_dists.first().copied().unwrap_or(0.0);
    let mut support = vec![0.0; num_classes];
    let mut total = 0.0;
    for (&id, &dist) in neighbors.neighbor_ids.iter().zip(&neighbors.sq_dists) {
        let w = (-(dist - nearest) / tau).exp();
        let label = train_labels[id];
        if label >= num_classes {
            return Err(CafdError::invalid(format!("training label {label} out of range")));
        }
        support[label] += w;
        total += w;
    }
    support.iter_mut().for_each(|s| *s /= total);
    Ok(SupportVector {
        query_id: neighbors.query_id,
        support,
        tau,
        k: neighbors.neighbor_ids.len(),
    })
}

/// Class support for a single query; `support[pred]` is the NED score.
pub fn ned_support(
    query: &[f32],
    train_latent: ArrayView2<'_, f32>,
    train_labels: &[usize],
    num_classes: usize,
    k: usize,
    tau: f64,
) -> Result<SupportVector> {
    let neighbors = knn(query, train_latent, k)?;
    support_from_neighbors(&neighbors, train_labels, num_classes, tau)
}

/// Class supports for every query row.
pub fn supports_batch(
    queries: ArrayView2<'_, f32>,
    train_latent: ArrayView2<'_, f32>,
    train_labels: &[usize],
    num_classes: usize,
    config: &NeighborConfig,
    exclude_self: bool,
) -> Result<Vec<SupportVector>> {
    config.validate()?;
    if train_labels.len() != train_latent.nrows() {
        return Err(CafdError::DimensionMismatch {
            expected: train_latent.nrows(),
            found: train_labels.len(),
        });
    }
    knn_batch(queries, train_latent, config.k, exclude_self)?
        .par_iter()
        .map(|n| support_from_neighbors(n, train_labels, num_classes, config.tau))
        .collect()
}

/// Best rival support over predicted-class support.
pub fn datis_score(support: &SupportVector, pred: usize, epsilon: f64) -> f64 {
    let rival = support
        .support
        .iter()
        .enumerate()
        .filter(|&(c, _)| c != pred)
        .map(|(_, &s)| s)
        .fold(0.0, f64::max);
    rival / (support.support[pred] + epsilon)
}

/// DATIS scores of the bundle's test inputs.
pub fn datis_scores(bundle: &DatasetBundle, config: &NeighborConfig) -> Result<Vec<f64>> {
    let supports = supports_batch(
        bundle.test.latent.view(),
        bundle.train.latent.view(),
        &bundle.train.labels,
        bundle.num_classes,
        config,
        false,
    )?;
    Ok(supports
        .iter()
        .zip(&bundle.test.pred)
        .map(|(s, &p)| datis_score(s, p, config.epsilon))
        .collect())
}

pub fn rank_by_datis(bundle: &DatasetBundle, config: &NeighborConfig) -> Result<RankedList> {
    Ok(RankedList::from_scores(
        &datis_scores(bundle, config)?,
        Direction::Descending,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Array2<f32> {
        Array2::from_shape_fn((n, d), |_| rng.gen_range(-1.0f32..1.0))
    }

    #[test]
    fn identical_row_is_nearest() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let train = random_matrix(&mut rng, 20, 4);
        let q = train.row(7).to_vec();
        let n = knn(&q, train.view(), 1).unwrap();
        assert_eq!(n.neighbor_ids, vec![7]);
        assert_eq!(n.sq_dists, vec![0.0]);
    }

    #[test]
    fn equidistant_tie_prefers_lower_index() {
        let train = array![[2.0f32, 0.0], [-1.0, 0.0], [1.0, 0.0]];
        let n = knn(&[0.0, 0.0], train.view(), 1).unwrap();
        assert_eq!(n.neighbor_ids, vec![1]);
        let b = knn_batch(array![[0.0f32, 0.0]].view(), train.view(), 2, false).unwrap();
        assert_eq!(b[0].neighbor_ids, vec![1, 2]);
    }

    #[test]
    fn k_and_dimension_errors() {
        let train = array![[0.0f32, 0.0], [1.0, 1.0]];
        assert!(knn(&[0.0, 0.0], train.view(), 0).is_err());
        assert!(knn(&[0.0, 0.0], train.view(), 3).is_err());
        assert!(knn(&[0.0], train.view(), 1).is_err());
        assert!(knn_batch(train.view(), train.view(), 2, true).is_err());
    }

    #[test]
    fn batch_matches_single_query_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let train = random_matrix(&mut rng, 3000, 12);
        let queries = random_matrix(&mut rng, 150, 12);
        let batch = knn_batch(queries.view(), train.view(), 7, false).unwrap();
        for (i, got) in batch.iter().enumerate() {
            let want = knn(queries.row(i).as_slice().unwrap(), train.view(), 7).unwrap();
            assert_eq!(got.neighbor_ids, want.neighbor_ids);
            assert_eq!(got.sq_dists, want.sq_dists);
            assert_eq!(got.query_id, i);
        }
    }

    #[test]
    fn exclude_self_skips_own_row() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let train = random_matrix(&mut rng, 50, 3);
        let got = knn_batch(train.view(), train.view(), 3, true).unwrap();
        for (i, n) in got.iter().enumerate() {
            assert!(!n.neighbor_ids.contains(&i));
        }
    }

    #[test]
    fn support_edge_cases() {
        let labels = [1, 1, 0, 2];
        let all_match = NeighborSet {
            query_id: 0,
            neighbor_ids: vec![0, 1],
            sq_dists: vec![0.3, 0.9],
        };
        let s = support_from_neighbors(&all_match, &labels, 3, 1.0).unwrap();
        assert_eq!(s.support[1], 1.0);
        assert_eq!(s.support[0], 0.0);

        let equidistant = NeighborSet {
            query_id: 0,
            neighbor_ids: vec![1, 2],
            sq_dists: vec![2.0, 2.0],
        };
        let s = support_from_neighbors(&equidistant, &labels, 3, 1.0).unwrap();
        assert_eq!(s.support[1], 0.5);
        assert_eq!(s.support[0], 0.5);
        assert_eq!(s.support[2], 0.0);

        assert!(support_from_neighbors(&equidistant, &labels, 3, 0.0).is_err());
    }

    #[test]
    fn far_neighbors_do_not_underflow() {
        let n = NeighborSet {
            query_id: 0,
            neighbor_ids: vec![0, 1],
            sq_dists: vec![1e6, 1e6 + 1.0],
        };
        let s = support_from_neighbors(&n, &[0, 1], 2, 1.0).unwrap();
        let e = (-1.0f64).exp();
        assert!((s.support[0] - 1.0 / (1.0 + e)).abs() < 1e-15);
    }

    #[test]
    fn datis_reference_values() {
        let sv = |support: Vec<f64>| SupportVector {
            query_id: 0,
            support,
            tau: 1.0,
            k: 10,
        };
        assert_eq!(datis_score(&sv(vec![1.0, 0.0, 0.0]), 0, 1e-12), 0.0);
        assert_eq!(datis_score(&sv(vec![0.0, 1.0]), 0, 1e-12), 1e12);
        assert!((datis_score(&sv(vec![0.5, 0.3, 0.2]), 0, 1e-12) - 0.6).abs() < 1e-9);
    }

    #[test]
    fn latent_scaling_rescales_tau() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let train = random_matrix(&mut rng, 200, 6);
        let labels: Vec<usize> = (0..200).map(|_| rng.gen_range(0..4)).collect();
        let scale = 4.0f32; // power of two keeps the scaled distances exact
        let scaled = train.mapv(|v| v * scale);
        for q in 0..20 {
            let query = random_matrix(&mut rng, 1, 6);
            let base = ned_support(query.row(0).as_slice().unwrap(), train.view(), &labels, 4, 8, 0.7)
                .unwrap();
            let sq = query.mapv(|v| v * scale);
            let other = ned_support(
                sq.row(0).as_slice().unwrap(),
                scaled.view(),
                &labels,
                4,
                8,
                0.7 * (scale * scale) as f64,
            )
            .unwrap();
            for (a, b) in base.support.iter().zip(&other.support) {
                assert!((a - b).abs() < 1e-9, "query {q}");
            }
        }
    }
}
