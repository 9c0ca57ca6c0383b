//! Density-based clustering of failing inputs, used when no precomputed
//! fault clustering is available.
//!
//! A point is core when at least `min_pts` points (itself included) lie
//! within `eps`. Clusters are the connected components of core points; each
//! border point joins the cluster of its lowest-index core neighbour; all
//! other points are noise. Cluster ids are assigned in order of each
//! cluster's smallest member index.

use std::collections::{BTreeMap, VecDeque};

use ndarray::ArrayView2;
use rayon::prelude::*;

use super::fdr::{FaultClustering, NOISE};
use crate::error::{CafdError, Result};

fn within(a: &[f64], b: &[f64], eps_sq: f64) -> bool {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() <= eps_sq
}

/// Cluster label per row (`-1` for noise).
pub fn dbscan(points: ArrayView2<'_, f64>, eps: f64, min_pts: usize) -> Result<Vec<i64>> {
    if points.ncols() == 0 {
        return Err(CafdError::invalid("cannot cluster zero-dimensional points"));
    }
    if !(eps > 0.0) || min_pts == 0 {
        return Err(CafdError::invalid("need eps > 0 and min_pts >= 1"));
    }
    let points = points.as_standard_layout();
    let n = points.nrows();
    let eps_sq = eps * eps;
    let rows: Vec<&[f64]> = points.outer_iter().map(|r| r.to_slice().unwrap()).collect();
    let neighbors: Vec<Vec<usize>> = (0..n)
        .into_par_iter()
        .map(|i| (0..n).filter(|&j| within(rows[i], rows[j], eps_sq)).collect())
        .collect();
    let core: Vec<bool> = neighbors.iter().map(|nb| nb.len() >= min_pts).collect();

    let mut component = vec![usize::MAX; n];
    let mut n_components = 0;
    for start in 0..n {
        if !core[start] || component[start] != usize::MAX {
            continue;
        }
        let id = n_components;
        n_components += 1;
        component[start] = id;
        let mut queue = VecDeque::from([start]);
        while let Some(p) = queue.pop_front() {
            for &q in &neighbors[p] {
                if core[q] && component[q] == usize::MAX {
                    component[q] = id;
                    queue.push_back(q);
                }
            }
        }
    }
    for i in 0..n {
        if !core[i] {
            if let Some(&c) = neighbors[i].iter().find(|&&j| core[j]) {
                component[i] = component[c];
            }
        }
    }

    // renumber by smallest member
    let mut renumber = vec![None; n_components];
    let mut next = 0i64;
    let mut labels = vec![NOISE; n];
    for i in 0..n {
        if component[i] == usize::MAX {
            continue;
        }
        let slot = &mut renumber[component[i]];
        let id = *slot.get_or_insert_with(|| {
            next += 1;
            next - 1
        });
        labels[i] = id;
    }
    Ok(labels)
}

/// Clusters failing inputs; `input_ids[i]` names the input described by row `i`.
pub fn dbscan_substitute(
    features: ArrayView2<'_, f64>,
    input_ids: &[usize],
    eps: f64,
    min_pts: usize,
) -> Result<FaultClustering> {
    if input_ids.len() != features.nrows() {
        return Err(CafdError::DimensionMismatch {
            expected: features.nrows(),
            found: input_ids.len(),
        });
    }
    let labels = dbscan(features, eps, min_pts)?;
    Ok(FaultClustering::new(
        input_ids.iter().copied().zip(labels).collect::<BTreeMap<_, _>>(),
    ))
}
