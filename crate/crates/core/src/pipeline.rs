//! End-to-end fit and scoring of the concept-aware fault detector.

use std::fs;
use std::path::Path;

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::concepts::{
    build_rcs, compute_cfr, concept_features, extract_concepts_batch, fit_aligner, Aligner,
    ConceptAssignment, ConceptBank, ConceptTable, DEFAULT_ALIGNER_LAMBDA, DEFAULT_M,
};
use crate::error::{CafdError, Result};
use crate::features::{ColumnMap, FeatureMatrix, Standardizer};
use crate::lrmodel::{train, LrModel, TrainConfig};
use crate::neighbors::{supports_batch, NeighborConfig, SupportVector};
use crate::ranking::RankedList;
use crate::tensorio::{DatasetBundle, Split};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CafdConfig {
    pub neighbors: NeighborConfig,
    pub m: usize,
    pub aligner_lambda: f64,
    pub train: TrainConfig,
    /// Fit on at most this many training rows, taken at evenly spaced
    /// indices. Test-time neighbour search always uses the full split.
    pub max_train_rows: Option<usize>,
}

impl Default for CafdConfig {
    fn default() -> Self {
        Self {
            neighbors: NeighborConfig::default(),
            m: DEFAULT_M,
            aligner_lambda: DEFAULT_ALIGNER_LAMBDA,
            train: TrainConfig::default(),
            max_train_rows: None,
        }
    }
}

impl CafdConfig {
    pub fn validate(&self) -> Result<()> {
        self.neighbors.validate()?;
        self.train.validate()?;
        if self.m == 0 {
            return Err(CafdError::invalid("m must be at least 1"));
        }
        if self.max_train_rows == Some(0) {
            return Err(CafdError::invalid("max_train_rows must be at least 1"));
        }
        Ok(())
    }
}

/// Every fitted artefact needed to score new inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct CafdModel {
    pub config: CafdConfig,
    pub num_classes: usize,
    pub aligner: Aligner,
    pub table: ConceptTable,
    pub standardizer: Standardizer,
    pub column_map: ColumnMap,
    pub model: LrModel,
}

/// Intermediate training-side products, exposed for inspection.
#[derive(Debug, Clone)]
pub struct TrainingArtifacts {
    pub rows: Vec<usize>,
    pub assignments: Vec<ConceptAssignment>,
    pub features: FeatureMatrix,
    pub failed: Vec<bool>,
}

/// Evenly spaced row subset `floor(i * n / r)`, or every row.
pub fn training_rows(n: usize, max_rows: Option<usize>) -> Vec<usize> {
    match max_rows {
        Some(r) if r < n => (0..r).map(|i| i * n / r).collect(),
        _ => (0..n).collect(),
    }
}

fn select_split(split: &Split, rows: &[usize]) -> Split {
    if rows.len() == split.len() {
        return split.clone();
    }
    Split {
        logits: split.logits.as_ref().map(|l| l.select(Axis(0), rows)),
        probs: split.probs.select(Axis(0), rows),
        latent: split.latent.select(Axis(0), rows),
        labels: rows.iter().map(|&i| split.labels[i]).collect(),
        pred: rows.iter().map(|&i| split.pred[i]).collect(),
    }
}

/// Leave-one-out supports over the training rows themselves: a training
/// input is never its own neighbour.
pub fn training_supports(split: &Split, num_classes: usize, config: &NeighborConfig) -> Result<Vec<SupportVector>> {
    supports_batch(
        split.latent.view(),
        split.latent.view(),
        &split.labels,
        num_classes,
        config,
        true,
    )
}

/// Raw training features from the assignments that built `table`.
pub fn raw_training_features(
    split: &Split,
    num_classes: usize,
    assignments: &[ConceptAssignment],
    table: &ConceptTable,
    neighbors: &NeighborConfig,
) -> Result<FeatureMatrix> {
    let supports = training_supports(split, num_classes, neighbors)?;
    let cfr = concept_features(assignments, table)?;
    FeatureMatrix::assemble(split, num_classes, &supports, cfr.view())
}

/// Concept bank over the representative set, rebuilt from the bundle's text
/// embeddings so fitted and reloaded tables extract identically.
pub fn rcs_bank(bundle: &DatasetBundle, table: &ConceptTable) -> Result<ConceptBank> {
    let e = bundle.concept_text.ncols();
    let mut rows = Array2::zeros((table.len(), e));
    for (r, &id) in table.concept_ids.iter().enumerate() {
        if id >= bundle.concept_text.nrows() {
            return Err(CafdError::UnknownConcept(id));
        }
        rows.row_mut(r).assign(&bundle.concept_text.row(id).mapv(|v| v as f64));
    }
    ConceptBank::from_rows(table.concept_ids.clone(), rows.view())
}

/// Raw test features: concepts extracted over the representative set,
/// neighbours searched among all training inputs.
pub fn raw_test_features(
    bundle: &DatasetBundle,
    aligner: &Aligner,
    table: &ConceptTable,
    neighbors: &NeighborConfig,
) -> Result<FeatureMatrix> {
    let bank = rcs_bank(bundle, table)?;
    let assignments = extract_concepts_batch(bundle.test.latent.view(), aligner, &bank, table.m)?;
    let cfr = concept_features(&assignments, table)?;
    let supports = supports_batch(
        bundle.test.latent.view(),
        bundle.train.latent.view(),
        &bundle.train.labels,
        bundle.num_classes,
        neighbors,
        false,
    )?;
    FeatureMatrix::assemble(&bundle.test, bundle.num_classes, &supports, cfr.view())
}

impl CafdModel {
    pub fn fit(bundle: &DatasetBundle, config: &CafdConfig) -> Result<Self> {
        Self::fit_with_artifacts(bundle, config).map(|(model, _)| model)
    }

    pub fn fit_with_artifacts(bundle: &DatasetBundle, config: &CafdConfig) -> Result<(Self, TrainingArtifacts)> {
        config.validate()?;
        let c = bundle.num_classes;
        let rows = training_rows(bundle.n_train(), config.max_train_rows);
        let split = select_split(&bundle.train, &rows);
        let clip = bundle
            .clip_img_train
            .as_ref()
            .ok_or_else(|| CafdError::MissingTensor("clip_img_train".into()))?
            .select(Axis(0), &rows);

        let aligner = fit_aligner(split.latent.view(), clip.view(), config.aligner_lambda)?;
        let vocabulary = ConceptBank::from_text_embeddings(bundle.concept_text.view())?;
        let assignments = extract_concepts_batch(split.latent.view(), &aligner, &vocabulary, config.m)?;
        let failed = split.failures();
        let table = build_rcs(&assignments, &vocabulary, &bundle.concept_names)?;
        let table = compute_cfr(&table, &assignments, &failed)?;

        let raw = raw_training_features(&split, c, &assignments, &table, &config.neighbors)?;
        let features = raw.standardize_fit()?;
        let model = train(features.standardized()?, &failed, &config.train)?;
        let fitted = Self {
            config: *config,
            num_classes: c,
            aligner,
            table,
            standardizer: features.scaling.clone().expect("standardized"),
            column_map: features.column_map.clone(),
            model,
        };
        Ok((
            fitted,
            TrainingArtifacts {
                rows,
                assignments,
                features,
                failed,
            },
        ))
    }

    /// Standardized test features, in test-input order.
    pub fn test_features(&self, bundle: &DatasetBundle) -> Result<FeatureMatrix> {
        if bundle.num_classes != self.num_classes {
            return Err(CafdError::DimensionMismatch {
                expected: self.num_classes,
                found: bundle.num_classes,
            });
        }
        let raw = raw_test_features(bundle, &self.aligner, &self.table, &self.config.neighbors)?;
        if raw.column_map != self.column_map {
            return Err(CafdError::LayoutMismatch {
                expected: self.column_map.width(),
                found: raw.column_map.width(),
            });
        }
        raw.standardize_apply(&self.standardizer)
    }

    /// Fault-revealing probability of every test input.
    pub fn score(&self, bundle: &DatasetBundle) -> Result<Vec<f64>> {
        let features = self.test_features(bundle)?;
        self.model.predict_proba(features.standardized()?)
    }

    /// Test inputs ordered by descending fault-revealing probability.
    pub fn rank(&self, bundle: &DatasetBundle) -> Result<RankedList> {
        let features = self.test_features(bundle)?;
        self.model.rank(features.standardized()?)
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| CafdError::io(dir, e))?;
        self.aligner.save_json(dir.join("aligner.json"))?;
        self.table.save(dir, "rcs")?;
        let digest = self.column_map.digest();
        self.model.save(dir, "lr", &digest)?;
        let meta = Meta {
            config: self.config,
            num_classes: self.num_classes,
            m: self.table.m,
            standardizer: self.standardizer.clone(),
            column_map: self.column_map.clone(),
        };
        let path = dir.join("cafd.json");
        fs::write(&path, serde_json::to_string_pretty(&meta)?).map_err(|e| CafdError::io(&path, e))
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let path = dir.join("cafd.json");
        let text = fs::read_to_string(&path).map_err(|e| CafdError::io(&path, e))?;
        let meta: Meta = serde_json::from_str(&text)?;
        let model = LrModel::load(dir, "lr", &meta.column_map.digest())?;
        Ok(Self {
            config: meta.config,
            num_classes: meta.num_classes,
            aligner: Aligner::load_json(dir.join("aligner.json"))?,
            table: ConceptTable::load(dir, "rcs", meta.m)?,
            standardizer: meta.standardizer,
            column_map: meta.column_map,
            model,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct Meta {
    config: CafdConfig,
    num_classes: usize,
    m: usize,
    standardizer: Standardizer,
    column_map: ColumnMap,
}
