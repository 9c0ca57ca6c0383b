//! Method-by-budget FDR comparison tables.

use serde::Serialize;

use super::fdr::{fdr, FaultClustering};
use super::wilcoxon::{wilcoxon_signed_rank, WilcoxonResult};
use crate::error::{CafdError, Result};
use crate::ranking::RankedList;

/// Budgets evaluated by default, as fractions of the test set.
pub const DEFAULT_BUDGETS: [f64; 6] = [0.01, 0.03, 0.05, 0.07, 0.10, 0.12];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub methods: Vec<String>,
    pub budgets: Vec<f64>,
    /// `fdr[budget][method]`
    pub fdr: Vec<Vec<f64>>,
    pub primary: String,
    /// Two-sided Wilcoxon test of the primary method against each other
    /// method across budgets; `None` for the primary itself or when the
    /// paired FDRs are identical.
    pub tests: Vec<Option<WilcoxonResult>>,
}

/// `(ours - second) / (1 - second) * 100`: the share of the remaining
/// headroom closed by `ours`.
pub fn improvement_percentage(ours: f64, second_best: f64) -> f64 {
    (ours - second_best) / (1.0 - second_best) * 100.0
}

/// Evaluates every ranking at every budget and tests `primary` against the
/// rest.
pub fn compare(
    rankings: &[(String, RankedList)],
    primary: &str,
    clustering: &FaultClustering,
    budgets: &[f64],
    n_test: usize,
) -> Result<ComparisonReport> {
    if rankings.is_empty() {
        return Err(CafdError::invalid("no rankings to compare"));
    }
    let primary_idx = rankings
        .iter()
        .position(|(name, _)| name == primary)
        .ok_or_else(|| CafdError::invalid(format!("primary method `{primary}` not among rankings")))?;
    let mut table = Vec::with_capacity(budgets.len());
    for &budget in budgets {
        let row = rankings
            .iter()
            .map(|(_, r)| fdr(r, clustering, budget, n_test).map(|f| f.fdr))
            .collect::<Result<Vec<_>>>()?;
        table.push(row);
    }
    let column = |j: usize| -> Vec<f64> { table.iter().map(|row| row[j]).collect() };
    let ours = column(primary_idx);
    let tests = (0..rankings.len())
        .map(|j| {
            if j == primary_idx {
                return Ok(None);
            }
            match wilcoxon_signed_rank(&ours, &column(j)) {
                Ok(r) => Ok(Some(r)),
                Err(CafdError::DegeneratePairs) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ComparisonReport {
        methods: rankings.iter().map(|(n, _)| n.clone()).collect(),
        budgets: budgets.to_vec(),
        fdr: table,
        primary: primary.to_string(),
        tests,
    })
}

/// Rank (0 = best, 1 = second) of each cell within its budget row; other
/// cells get `None`. Equal values share a place.
fn podium(row: &[f64]) -> Vec<Option<usize>> {
    let mut distinct: Vec<f64> = row.to_vec();
    distinct.sort_by(|a, b| b.total_cmp(a));
    distinct.dedup();
    row.iter()
        .map(|v| distinct.iter().position(|d| d == v).filter(|&p| p < 2))
        .collect()
}

impl ComparisonReport {
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("budget");
        for m in &self.methods {
            out.push(',');
            out.push_str(m);
        }
        out.push('\n');
        for (budget, row) in self.budgets.iter().zip(&self.fdr) {
            out.push_str(&budget.to_string());
            for v in row {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out.push_str("wilcoxon_p");
        for t in &self.tests {
            match t {
                Some(r) => out.push_str(&format!(",{}", r.p_value)),
                None => out.push(','),
            }
        }
        out.push('\n');
        out
    }

    /// Aligned plain-text table; `*` marks the best and `+` the second-best
    /// method in each budget row.
    pub fn to_text_table(&self) -> String {
        let width = self.methods.iter().map(|m| m.len()).max().unwrap_or(0).max(9);
        let mut out = format!("{:<8}", "budget");
        for m in &self.methods {
            out.push_str(&format!(" {m:>width$}"));
        }
        out.push('\n');
        for (budget, row) in self.budgets.iter().zip(&self.fdr) {
            out.push_str(&format!("{:<8}", format!("{}%", budget * 100.0)));
            for (v, place) in row.iter().zip(podium(row)) {
                let mark = match place {
                    Some(0) => "*",
                    Some(1) => "+",
                    _ => " ",
                };
                out.push_str(&format!(" {:>w$}", format!("{v:.3}{mark}"), w = width));
            }
            out.push('\n');
        }
        out.push_str(&format!("{:<8}", "p-value"));
        for t in &self.tests {
            let cell = match t {
                Some(r) => format!("{:.4}", r.p_value),
                None => "-".to_string(),
            };
            out.push_str(&format!(" {cell:>width$}"));
        }
        out.push('\n');
        out
    }
}
