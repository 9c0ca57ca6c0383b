//! Ranking evaluation: fault detection rate, clustering of failures,
//! significance testing and comparison tables.

pub mod dbscan;
pub mod fdr;
pub mod report;
pub mod wilcoxon;

pub use dbscan::{dbscan, dbscan_substitute};
pub use fdr::{budget_size, faults_detected, fdr, FaultClustering, FdrResult, NOISE};
pub use report::{compare, improvement_percentage, ComparisonReport, DEFAULT_BUDGETS};
pub use wilcoxon::{wilcoxon_signed_rank, wilcoxon_signed_rank_with, Alternative, WilcoxonResult};
