//! Softmax-based uncertainty scores and the rankers built on them.

use std::fmt;
use std::str::FromStr;

use ndarray::ArrayView2;
use rayon::prelude::*;

use crate::error::{CafdError, Result};
use crate::ranking::{Direction, RankedList};
use crate::tensorio::DatasetBundle;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    DeepGini,
    Vanilla,
    Margin,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::DeepGini, Metric::Vanilla, Metric::Margin];

    pub fn score(self, probs: &[f64]) -> Result<f64> {
        match self {
            Metric::DeepGini => Ok(deepgini(probs)),
            Metric::Vanilla => Ok(vanilla(probs)),
            Metric::Margin => margin(probs),
        }
    }

    /// Margin is small when uncertain, so its ranker runs ascending.
    pub fn direction(self) -> Direction {
        match self {
            Metric::Margin => Direction::Ascending,
            _ => Direction::Descending,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Metric::DeepGini => "deepgini",
            Metric::Vanilla => "vanilla",
            Metric::Margin => "margin",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = CafdError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "deepgini" => Ok(Metric::DeepGini),
            "vanilla" => Ok(Metric::Vanilla),
            "margin" => Ok(Metric::Margin),
            other => Err(CafdError::invalid(format!("unknown metric `{other}`"))),
        }
    }
}

/// `1 - sum(p_i^2)`.
pub fn deepgini(probs: &[f64]) -> f64 {
    1.0 - probs.iter().map(|p| p * p).sum::<f64>()
}

/// `1 - max(p_i)`.
pub fn vanilla(probs: &[f64]) -> f64 {
    1.0 - probs.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// Gap between the two largest probabilities.
pub fn margin(probs: &[f64]) -> Result<f64> {
    if probs.len() < 2 {
        return Err(CafdError::invalid("margin needs at least two classes"));
    }
    let (mut first, mut second) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for &p in probs {
        if p > first {
            second = first;
            first = p;
        } else if p > second {
            second = p;
        }
    }
    Ok(first - second)
}

/// Scores every row of a probability matrix.
pub fn score_rows(probs: ArrayView2<'_, f32>, metric: Metric) -> Result<Vec<f64>> {
    (0..probs.nrows())
        .into_par_iter()
        .map(|i| {
            let row: Vec<f64> = probs.row(i).iter().map(|&p| p as f64).collect();
            metric.score(&row)
        })
        .collect()
}

/// Ranks the bundle's test inputs, most uncertain first.
pub fn rank_by_metric(bundle: &DatasetBundle, metric: Metric) -> Result<RankedList> {
    let scores = score_rows(bundle.test.probs.view(), metric)?;
    Ok(RankedList::from_scores(&scores, metric.direction()))
}
