//! Feature assembly and z-score standardization for the fault detector.
//!
//! Column layout: `[probs | logits | onehot(pred) | deepgini | ned_pred | cfr_1..cfr_m]`,
//! so `F = 3C + 2 + m`.

use std::fs;
use std::ops::Range;
use std::path::Path;

use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CafdError, Result};
use crate::neighbors::SupportVector;
use crate::tensorio::{read_tensor, write_tensor, Split, TensorFile};
use crate::uncertainty::deepgini;

/// Columns whose training std falls below this map to zero.
pub const MIN_STD: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnGroup {
    pub name: String,
    pub start: usize,
    pub end: usize,
}

impl ColumnGroup {
    pub fn range(&self) -> Range<usize> {
        self.start..self.end
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnMap {
    pub groups: Vec<ColumnGroup>,
}

impl ColumnMap {
    pub fn cafd(num_classes: usize, m: usize) -> Self {
        let sizes = [
            ("probs", num_classes),
            ("logits", num_classes),
            ("pred", num_classes),
            ("deepgini", 1),
            ("ned", 1),
            ("cfr", m),
        ];
        let mut start = 0;
        let groups = sizes
            .iter()
            .map(|&(name, width)| {
                let g = ColumnGroup {
                    name: name.to_string(),
                    start,
                    end: start + width,
                };
                start += width;
                g
            })
            .collect();
        Self { groups }
    }

    pub fn width(&self) -> usize {
        self.groups.last().map_or(0, |g| g.end)
    }

    pub fn group(&self, name: &str) -> Option<&ColumnGroup> {
        self.groups.iter().find(|g| g.name == name)
    }

    /// Human-readable label for every column, e.g. `logits[3]`.
    pub fn labels(&self) -> Vec<String> {
        self.groups
            .iter()
            .flat_map(|g| {
                let width = g.end - g.start;
                (0..width).map(move |i| {
                    if width == 1 {
                        g.name.clone()
                    } else {
                        format!("{}[{i}]", g.name)
                    }
                })
            })
            .collect()
    }

    /// SHA-256 of the canonical JSON form.
    pub fn digest(&self) -> String {
        let json = serde_json::to_string(self).expect("column map serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    /// Population mean and standard deviation of every column.
    pub fn fit(x: ArrayView2<'_, f64>) -> Result<Self> {
        if x.nrows() == 0 {
            return Err(CafdError::invalid("cannot standardize zero rows"));
        }
        let mean = x.mean_axis(Axis(0)).unwrap();
        let std = x
            .axis_iter(Axis(1))
            .zip(mean.iter())
            .map(|(col, &mu)| {
                (col.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / x.nrows() as f64).sqrt()
            })
            .collect();
        Ok(Self {
            mean: mean.to_vec(),
            std,
        })
    }

    pub fn apply(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.mean.len() {
            return Err(CafdError::LayoutMismatch {
                expected: self.mean.len(),
                found: x.ncols(),
            });
        }
        let mut out = x.to_owned();
        for (j, mut col) in out.axis_iter_mut(Axis(1)).enumerate() {
            let (mu, sd) = (self.mean[j], self.std[j]);
            if sd < MIN_STD {
                col.fill(0.0);
            } else {
                col.mapv_inplace(|v| (v - mu) / sd);
            }
        }
        Ok(out)
    }
}

/// Assembled feature rows for a set of inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub x: Array2<f64>,
    pub column_map: ColumnMap,
    /// Statistics the rows were standardized with, if any.
    pub scaling: Option<Standardizer>,
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    column_map: ColumnMap,
    standardized: bool,
    mean: Option<Vec<f64>>,
    std: Option<Vec<f64>>,
}

impl FeatureMatrix {
    pub fn nrows(&self) -> usize {
        self.x.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.x.ncols()
    }

    pub fn is_standardized(&self) -> bool {
        self.scaling.is_some()
    }

    /// Builds the raw feature matrix for `split`. `supports[i]` and
    /// `cfr.row(i)` must describe input `i`.
    pub fn assemble(
        split: &Split,
        num_classes: usize,
        supports: &[SupportVector],
        cfr: ArrayView2<'_, f64>,
    ) -> Result<Self> {
        let n = split.len();
        for found in [supports.len(), cfr.nrows(), split.probs.nrows()] {
            if found != n {
                return Err(CafdError::DimensionMismatch { expected: n, found });
            }
        }
        let logits = split
            .logits
            .as_ref()
            .ok_or_else(|| CafdError::MissingTensor("logits".into()))?;
        let map = ColumnMap::cafd(num_classes, cfr.ncols());
        let c = num_classes;
        let mut x = Array2::zeros((n, map.width()));
        for (i, mut row) in x.outer_iter_mut().enumerate() {
            let probs: Vec<f64> = split.probs.row(i).iter().map(|&p| p as f64).collect();
            for j in 0..c {
                row[j] = probs[j];
                row[c + j] = logits[[i, j]] as f64;
            }
            let pred = split.pred[i];
            row[2 * c + pred] = 1.0;
            row[3 * c] = deepgini(&probs);
            if supports[i].support.len() != c {
                return Err(CafdError::DimensionMismatch {
                    expected: c,
                    found: supports[i].support.len(),
                });
            }
            row[3 * c + 1] = supports[i].support[pred];
            for (j, &v) in cfr.row(i).iter().enumerate() {
                row[3 * c + 2 + j] = v;
            }
        }
        Ok(Self {
            x,
            column_map: map,
            scaling: None,
        })
    }

    /// Fits statistics on these (training) rows and standardizes them.
    pub fn standardize_fit(&self) -> Result<Self> {
        let stats = Standardizer::fit(self.raw()?)?;
        self.standardize_apply(&stats)
    }

    /// Standardizes raw rows with previously fitted statistics.
    pub fn standardize_apply(&self, stats: &Standardizer) -> Result<Self> {
        Ok(Self {
            x: stats.apply(self.raw()?)?,
            column_map: self.column_map.clone(),
            scaling: Some(stats.clone()),
        })
    }

    fn raw(&self) -> Result<ArrayView2<'_, f64>> {
        if self.scaling.is_some() {
            return Err(CafdError::invalid("feature matrix is already standardized"));
        }
        Ok(self.x.view())
    }

    /// The standardized matrix, or [`CafdError::NotFitted`].
    pub fn standardized(&self) -> Result<ArrayView2<'_, f64>> {
        match self.scaling {
            Some(_) => Ok(self.x.view()),
            None => Err(CafdError::NotFitted),
        }
    }

    /// Writes `<stem>.tensor` plus a `<stem>.json` sidecar.
    pub fn save(&self, dir: impl AsRef<Path>, stem: &str) -> Result<()> {
        let dir = dir.as_ref();
        write_tensor(
            dir.join(format!("{stem}.tensor")),
            &TensorFile::from_matrix_f64(self.x.view())?,
        )?;
        let sidecar = Sidecar {
            column_map: self.column_map.clone(),
            standardized: self.scaling.is_some(),
            mean: self.scaling.as_ref().map(|s| s.mean.clone()),
            std: self.scaling.as_ref().map(|s| s.std.clone()),
        };
        let path = dir.join(format!("{stem}.json"));
        fs::write(&path, serde_json::to_string_pretty(&sidecar)?).map_err(|e| CafdError::io(&path, e))
    }

    pub fn load(dir: impl AsRef<Path>, stem: &str) -> Result<Self> {
        let dir = dir.as_ref();
        let path = dir.join(format!("{stem}.json"));
        let text = fs::read_to_string(&path).map_err(|e| CafdError::io(&path, e))?;
        let sidecar: Sidecar = serde_json::from_str(&text)?;
        let x = read_tensor(dir.join(format!("{stem}.tensor")))?
            .to_matrix()?
            .mapv(|v| v as f64);
        if x.ncols() != sidecar.column_map.width() {
            return Err(CafdError::LayoutMismatch {
                expected: sidecar.column_map.width(),
                found: x.ncols(),
            });
        }
        let scaling = match (sidecar.standardized, sidecar.mean, sidecar.std) {
            (true, Some(mean), Some(std)) => Some(Standardizer { mean, std }),
            (false, _, _) => None,
            _ => return Err(CafdError::Manifest(format!("{stem}.json lacks statistics"))),
        };
        Ok(Self {
            x,
            column_map: sidecar.column_map,
            scaling,
        })
    }
}
