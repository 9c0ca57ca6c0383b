use std::cmp::Ordering;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{CafdError, Result};

/// Which end of the score scale is ranked first.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Descending,
    Ascending,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankedEntry {
    pub input_id: usize,
    pub score: f64,
}

/// A total order over test inputs, most fault-revealing first.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RankedList {
    entries: Vec<RankedEntry>,
}

impl RankedList {
    /// Sorts `scores[i]` (input id `i`) in `direction`; ties go to the lower id.
    pub fn from_scores(scores: &[f64], direction: Direction) -> Self {
        let mut entries: Vec<RankedEntry> = scores
            .iter()
            .enumerate()
            .map(|(input_id, &score)| RankedEntry { input_id, score })
            .collect();
        entries.sort_by(|a, b| {
            let primary = match direction {
                Direction::Descending => b.score.total_cmp(&a.score),
                Direction::Ascending => a.score.total_cmp(&b.score),
            };
            primary.then(a.input_id.cmp(&b.input_id))
        });
        Self { entries }
    }

    pub fn from_entries(entries: Vec<RankedEntry>) -> Self {
        Self { entries }
    }

    pub fn entries(&self) -> &[RankedEntry] {
        &self.entries
    }

    pub fn ids(&self) -> Vec<usize> {
        self.entries.iter().map(|e| e.input_id).collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// The first `b` inputs (or all of them, when fewer).
    pub fn top(&self, b: usize) -> &[RankedEntry] {
        &self.entries[..b.min(self.entries.len())]
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("rank,input_id,score\n");
        for (i, e) in self.entries.iter().enumerate() {
            out.push_str(&format!("{},{},{}\n", i + 1, e.input_id, e.score));
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut file = fs::File::create(path).map_err(|e| CafdError::io(path, e))?;
        file.write_all(self.to_csv_string().as_bytes())
            .map_err(|e| CafdError::io(path, e))
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        #[derive(Deserialize)]
        struct Row {
            rank: usize,
            input_id: usize,
            score: f64,
        }
        let mut reader = csv::Reader::from_path(path.as_ref())?;
        let mut entries = Vec::new();
        for (i, row) in reader.deserialize::<Row>().enumerate() {
            let row = row?;
            if row.rank != i + 1 {
                return Err(CafdError::invalid(format!(
                    "ranking row {} carries rank {}",
                    i + 1,
                    row.rank
                )));
            }
            entries.push(RankedEntry {
                input_id: row.input_id,
                score: row.score,
            });
        }
        Ok(Self { entries })
    }
}

pub(crate) fn cmp_desc_then_index(a: (f64, usize), b: (f64, usize)) -> Ordering {
    b.0.total_cmp(&a.0).then(a.1.cmp(&b.1))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ties_resolve_by_input_id() {
        let r = RankedList::from_scores(&[0.5, 0.7, 0.5, 0.7], Direction::Descending);
        assert_eq!(r.ids(), vec![1, 3, 0, 2]);
        let r = RankedList::from_scores(&[0.5, 0.7, 0.5, 0.7], Direction::Ascending);
        assert_eq!(r.ids(), vec![0, 2, 1, 3]);
    }

    #[test]
    fn csv_roundtrip() {
        let r = RankedList::from_scores(&[0.25, 1e-12, 3.5], Direction::Descending);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        r.write_csv(&path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("rank,input_id,score\n1,2,3.5\n"));
        assert_eq!(RankedList::read_csv(&path).unwrap(), r);
    }
}
