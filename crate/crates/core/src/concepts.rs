//! Concept extraction through a linear aligner into the shared embedding
//! space, the representative concept set and per-concept failure ratios.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CafdError, Result};
use crate::linalg::{cholesky, cholesky_solve};
use crate::ranking::cmp_desc_then_index;
use crate::tensorio::{read_tensor, write_tensor, TensorFile};

pub const DEFAULT_M: usize = 10;
pub const DEFAULT_ALIGNER_LAMBDA: f64 = 1e-3;

/// Affine map from latent space to the shared embedding space. The last row
/// of `weights` is the bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aligner {
    pub weights: Array2<f64>,
    pub lambda: f64,
    pub r2: f64,
}

impl Aligner {
    pub fn latent_dim(&self) -> usize {
        self.weights.nrows() - 1
    }

    pub fn embed_dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn transform(&self, latent: &[f32]) -> Result<Vec<f64>> {
        let d = self.latent_dim();
        if latent.len() != d {
            return Err(CafdError::DimensionMismatch {
                expected: d,
                found: latent.len(),
            });
        }
        let mut out = self.weights.row(d).to_vec();
        for (&x, w) in latent.iter().zip(self.weights.outer_iter()) {
            let x = x as f64;
            out.iter_mut().zip(w.iter()).for_each(|(o, &wi)| *o += x * wi);
        }
        Ok(out)
    }

    pub fn transform_rows(&self, latent: ArrayView2<'_, f32>) -> Result<Array2<f64>> {
        if latent.ncols() != self.latent_dim() {
            return Err(CafdError::DimensionMismatch {
                expected: self.latent_dim(),
                found: latent.ncols(),
            });
        }
        let x = latent.mapv(|v| v as f64);
        let d = self.latent_dim();
        let mut out = x.dot(&self.weights.slice(ndarray::s![..d, ..]));
        out += &self.weights.row(d);
        Ok(out)
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let json = serde_json::to_string(self)?;
        fs::write(path, json).map_err(|e| CafdError::io(path, e))
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| CafdError::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Ridge regression of `clip_img` on `[latent | 1]` with an unpenalised bias.
///
/// Columns are centred first, which is equivalent for an unpenalised
/// intercept and better conditioned.
pub fn fit_aligner(
    latent: ArrayView2<'_, f32>,
    clip_img: ArrayView2<'_, f32>,
    lambda: f64,
) -> Result<Aligner> {
    let (n, d) = latent.dim();
    if clip_img.nrows() != n {
        return Err(CafdError::DimensionMismatch {
            expected: n,
            found: clip_img.nrows(),
        });
    }
    if n == 0 {
        return Err(CafdError::invalid("cannot fit an aligner on zero rows"));
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(CafdError::invalid(format!("ridge strength must be >= 0, got {lambda}")));
    }
    let x = latent.mapv(|v| v as f64);
    let y = clip_img.mapv(|v| v as f64);
    let x_mean = x.mean_axis(Axis(0)).unwrap();
    let y_mean = y.mean_axis(Axis(0)).unwrap();
    let xc = &x - &x_mean;
    let yc = &y - &y_mean;

    let mut gram = xc.t().dot(&xc);
    for i in 0..d {
        gram[[i, i]] += lambda;
    }
    let mut coef = xc.t().dot(&yc);
    if d > 0 {
        if !cholesky(&mut gram) {
            return Err(if lambda == 0.0 {
                CafdError::SingularSystem
            } else {
                CafdError::Internal("ridge system is not positive definite".into())
            });
        }
        cholesky_solve(&gram, &mut coef);
    }
    let bias: Array1<f64> = &y_mean - &x_mean.dot(&coef);

    let mut weights = Array2::zeros((d + 1, y.ncols()));
    weights.slice_mut(ndarray::s![..d, ..]).assign(&coef);
    weights.row_mut(d).assign(&bias);

    let pred = xc.dot(&coef);
    let r2 = r_squared(yc.view(), pred.view());
    Ok(Aligner {
        weights,
        lambda,
        r2,
    })
}

/// Uniform mean over output columns of `1 - SS_res / SS_tot`, where the
/// targets are already centred. Constant columns contribute 0.
fn r_squared(centred_y: ArrayView2<'_, f64>, centred_pred: ArrayView2<'_, f64>) -> f64 {
    let cols = centred_y.ncols();
    if cols == 0 {
        return 0.0;
    }
    let total: f64 = (0..cols)
        .map(|j| {
            let y = centred_y.column(j);
            let p = centred_pred.column(j);
            let ss_tot: f64 = y.iter().map(|v| v * v).sum();
            if ss_tot == 0.0 {
                return 0.0;
            }
            let ss_res: f64 = y.iter().zip(p.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
            1.0 - ss_res / ss_tot
        })
        .sum();
    total / cols as f64
}

/// R^2 of an aligner on arbitrary data, using the data's own column means.
pub fn aligner_r2(aligner: &Aligner, latent: ArrayView2<'_, f32>, clip_img: ArrayView2<'_, f32>) -> Result<f64> {
    let pred = aligner.transform_rows(latent)?;
    let y = clip_img.mapv(|v| v as f64);
    let mean = y.mean_axis(Axis(0)).unwrap_or_else(|| Array1::zeros(y.ncols()));
    Ok(r_squared((&y - &mean).view(), (&pred - &mean).view()))
}

fn normalized(v: ArrayView1<'_, f64>, row: usize) -> Result<Array1<f64>> {
    let norm = v.dot(&v).sqrt();
    if !(norm > 0.0) || !norm.is_finite() {
        return Err(CafdError::DegenerateEmbedding(row));
    }
    Ok(v.mapv(|x| x / norm))
}

/// A set of candidate concepts with unit-norm text embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct ConceptBank {
    pub ids: Vec<usize>,
    pub embeddings: Array2<f64>,
}

impl ConceptBank {
    /// Bank over a full vocabulary; ids are row indices.
    pub fn from_text_embeddings(text: ArrayView2<'_, f32>) -> Result<Self> {
        let ids: Vec<usize> = (0..text.nrows()).collect();
        Self::from_rows(ids, text.mapv(|v| v as f64).view())
    }

    pub fn from_rows(ids: Vec<usize>, rows: ArrayView2<'_, f64>) -> Result<Self> {
        let mut embeddings = Array2::zeros(rows.dim());
        for (i, r) in rows.outer_iter().enumerate() {
            embeddings.row_mut(i).assign(&normalized(r, ids[i])?);
        }
        Ok(Self { ids, embeddings })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// The top-m concepts of one input.
#[derive(Debug, Clone, PartialEq)]
pub struct ConceptAssignment {
    pub input_id: usize,
    pub concept_ids: Vec<usize>,
    pub similarities: Vec<f64>,
}

/// Top-m concepts for an embedding by cosine similarity; ties go to the
/// lower concept id.
pub fn top_concepts(
    input_id: usize,
    embedding: &[f64],
    bank: &ConceptBank,
    m: usize,
) -> Result<ConceptAssignment> {
    if m == 0 || m > bank.len() {
        return Err(CafdError::invalid(format!(
            "m = {m} outside [1, {}]",
            bank.len()
        )));
    }
    if embedding.len() != bank.embeddings.ncols() {
        return Err(CafdError::DimensionMismatch {
            expected: bank.embeddings.ncols(),
            found: embedding.len(),
        });
    }
    let norm = embedding.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !(norm > 0.0) || !norm.is_finite() {
        return Err(CafdError::DegenerateEmbedding(input_id));
    }
    let unit: Vec<f64> = embedding.iter().map(|v| v / norm).collect();
    let mut scored: Vec<(f64, usize)> = bank
        .embeddings
        .outer_iter()
        .zip(&bank.ids)
        .map(|(row, &id)| (row.iter().zip(&unit).map(|(a, b)| a * b).sum(), id))
        .collect();
    let cmp = |a: &(f64, usize), b: &(f64, usize)| cmp_desc_then_index(*a, *b);
    if scored.len() > m {
        scored.select_nth_unstable_by(m - 1, cmp);
        scored.truncate(m);
    }
    scored.sort_by(cmp);
    Ok(ConceptAssignment {
        input_id,
        concept_ids: scored.iter().map(|s| s.1).collect(),
        similarities: scored.iter().map(|s| s.0).collect(),
    })
}

/// Maps a latent vector through the aligner and returns its top-m concepts.
pub fn extract_concepts(
    input_id: usize,
    latent_row: &[f32],
    aligner: &Aligner,
    bank: &ConceptBank,
    m: usize,
) -> Result<ConceptAssignment> {
    let aligned = aligner.transform(latent_row)?;
    top_concepts(input_id, &aligned, bank, m)
}

pub fn extract_concepts_batch(
    latent: ArrayView2<'_, f32>,
    aligner: &Aligner,
    bank: &ConceptBank,
    m: usize,
) -> Result<Vec<ConceptAssignment>> {
    let latent = latent.as_standard_layout();
    (0..latent.nrows())
        .into_par_iter()
        .map(|i| extract_concepts(i, latent.row(i).as_slice().unwrap(), aligner, bank, m))
        .collect()
}

/// The representative concept set with failure statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct ConceptTable {
    /// Ascending vocabulary ids.
    pub concept_ids: Vec<usize>,
    pub names: Vec<String>,
    /// Unit-norm rows aligned with `concept_ids`.
    pub text_emb: Array2<f64>,
    pub total_count: Vec<u64>,
    pub faulty_count: Vec<u64>,
    pub cfr: Vec<f64>,
    pub m: usize,
}

impl ConceptTable {
    pub fn len(&self) -> usize {
        self.concept_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.concept_ids.is_empty()
    }

    pub fn position(&self, concept_id: usize) -> Option<usize> {
        self.concept_ids.binary_search(&concept_id).ok()
    }

    pub fn cfr_of(&self, concept_id: usize) -> Result<f64> {
        self.position(concept_id)
            .map(|p| self.cfr[p])
            .ok_or(CafdError::UnknownConcept(concept_id))
    }

    /// A bank restricted to the table's members, for test-time extraction.
    pub fn bank(&self) -> ConceptBank {
        ConceptBank {
            ids: self.concept_ids.clone(),
            embeddings: self.text_emb.clone(),
        }
    }

    /// Writes `<stem>.tensor` (embeddings) and `<stem>.csv` (statistics).
    pub fn save(&self, dir: impl AsRef<Path>, stem: &str) -> Result<()> {
        let dir = dir.as_ref();
        write_tensor(
            dir.join(format!("{stem}.tensor")),
            &TensorFile::from_matrix_f64(self.text_emb.view())?,
        )?;
        let path = dir.join(format!("{stem}.csv"));
        let mut writer = csv::Writer::from_path(&path)?;
        writer.write_record(["concept_id", "name", "total_count", "faulty_count", "cfr"])?;
        for i in 0..self.len() {
            writer.write_record([
                self.concept_ids[i].to_string(),
                self.names[i].clone(),
                self.total_count[i].to_string(),
                self.faulty_count[i].to_string(),
                self.cfr[i].to_string(),
            ])?;
        }
        writer.flush().map_err(|e| CafdError::io(&path, e))?;
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>, stem: &str, m: usize) -> Result<Self> {
        #[derive(Deserialize)]
        struct Row {
            concept_id: usize,
            name: String,
            total_count: u64,
            faulty_count: u64,
            cfr: f64,
        }
        let dir = dir.as_ref();
        let emb = read_tensor(dir.join(format!("{stem}.tensor")))?.to_matrix()?;
        let mut reader = csv::Reader::from_path(dir.join(format!("{stem}.csv")))?;
        let rows: Vec<Row> = reader.deserialize().collect::<std::result::Result<_, _>>()?;
        if rows.len() != emb.nrows() {
            return Err(CafdError::ShapeMismatch {
                tensor: format!("{stem}.tensor"),
                expected: vec![rows.len(), emb.ncols()],
                found: vec![emb.nrows(), emb.ncols()],
            });
        }
        let ids: Vec<usize> = rows.iter().map(|r| r.concept_id).collect();
        let bank = ConceptBank::from_rows(ids, emb.mapv(|v| v as f64).view())?;
        Ok(Self {
            concept_ids: bank.ids,
            names: rows.iter().map(|r| r.name.clone()).collect(),
            text_emb: bank.embeddings,
            total_count: rows.iter().map(|r| r.total_count).collect(),
            faulty_count: rows.iter().map(|r| r.faulty_count).collect(),
            cfr: rows.iter().map(|r| r.cfr).collect(),
            m,
        })
    }
}

/// Union of all assigned concepts, ascending, with zeroed statistics.
pub fn build_rcs(
    assignments: &[ConceptAssignment],
    vocabulary: &ConceptBank,
    names: &[String],
) -> Result<ConceptTable> {
    let Some(first) = assignments.first() else {
        return Err(CafdError::invalid("cannot build a concept set from zero inputs"));
    };
    let m = first.concept_ids.len();
    let mut member = vec![false; vocabulary.len()];
    for a in assignments {
        for &c in &a.concept_ids {
            let pos = vocabulary
                .ids
                .binary_search(&c)
                .map_err(|_| CafdError::UnknownConcept(c))?;
            member[pos] = true;
        }
    }
    let positions: Vec<usize> = (0..vocabulary.len()).filter(|&p| member[p]).collect();
    let n = positions.len();
    let mut text_emb = Array2::zeros((n, vocabulary.embeddings.ncols()));
    for (row, &p) in positions.iter().enumerate() {
        text_emb.row_mut(row).assign(&vocabulary.embeddings.row(p));
    }
    Ok(ConceptTable {
        concept_ids: positions.iter().map(|&p| vocabulary.ids[p]).collect(),
        names: positions
            .iter()
            .map(|&p| names.get(vocabulary.ids[p]).cloned().unwrap_or_default())
            .collect(),
        text_emb,
        total_count: vec![0; n],
        faulty_count: vec![0; n],
        cfr: vec![0.0; n],
        m,
    })
}

/// Fills counts and ratios: a concept is contained in input `i` when it is
/// among the input's top-m assignment.
pub fn compute_cfr(
    table: &ConceptTable,
    assignments: &[ConceptAssignment],
    failed: &[bool],
) -> Result<ConceptTable> {
    if assignments.len() != failed.len() {
        return Err(CafdError::DimensionMismatch {
            expected: assignments.len(),
            found: failed.len(),
        });
    }
    let mut total = vec![0u64; table.len()];
    let mut faulty = vec![0u64; table.len()];
    for (a, &fail) in assignments.iter().zip(failed) {
        for &c in &a.concept_ids {
            let p = table.position(c).ok_or(CafdError::UnknownConcept(c))?;
            total[p] += 1;
            if fail {
                faulty[p] += 1;
            }
        }
    }
    let mut cfr = Vec::with_capacity(table.len());
    for (p, (&t, &f)) in total.iter().zip(&faulty).enumerate() {
        if t == 0 {
            return Err(CafdError::Internal(format!(
                "concept {} in the representative set was never assigned",
                table.concept_ids[p]
            )));
        }
        cfr.push(f as f64 / t as f64);
    }
    Ok(ConceptTable {
        total_count: total,
        faulty_count: faulty,
        cfr,
        ..table.clone()
    })
}

/// CFR values of an input's concepts, in similarity order.
pub fn concept_feature(assignment: &ConceptAssignment, table: &ConceptTable) -> Result<Vec<f64>> {
    assignment
        .concept_ids
        .iter()
        .map(|&c| table.cfr_of(c))
        .collect()
}

/// Feature matrix `[n, m]` of CFR vectors.
pub fn concept_features(assignments: &[ConceptAssignment], table: &ConceptTable) -> Result<Array2<f64>> {
    let m = table.m;
    let mut out = Array2::zeros((assignments.len(), m));
    for (i, a) in assignments.iter().enumerate() {
        if a.concept_ids.len() != m {
            return Err(CafdError::DimensionMismatch {
                expected: m,
                found: a.concept_ids.len(),
            });
        }
        for (j, v) in concept_feature(a, table)?.into_iter().enumerate() {
            out[[i, j]] = v;
        }
    }
    Ok(out)
}
