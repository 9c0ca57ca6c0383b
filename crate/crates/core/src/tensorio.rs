//! Binary tensor files, dataset manifests and bundle loading.
//!
//! A tensor file is a fixed 8-byte header, `ndim` little-endian `u64`
//! dimensions, then the row-major little-endian payload:
//!
//! ```text
//! 0..4   magic "CAFD"
//! 4      version (1)
//! 5      dtype (1 = float32, 2 = int64)
//! 6      ndim (1..=4)
//! 7      reserved (0)
//! 8..    dims as u64, then payload
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{CafdError, Result};

pub const MAGIC: [u8; 4] = *b"CAFD";
pub const VERSION: u8 = 1;
pub const MAX_NDIM: usize = 4;
const FIXED_HEADER: usize = 8;

/// Tolerance on probability row sums.
pub const PROB_SUM_TOL: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DType {
    Float32,
    Int64,
}

impl DType {
    pub fn code(self) -> u8 {
        match self {
            DType::Float32 => 1,
            DType::Int64 => 2,
        }
    }

    pub fn from_code(code: u8) -> Result<Self> {
        match code {
            1 => Ok(DType::Float32),
            2 => Ok(DType::Int64),
            other => Err(CafdError::UnsupportedDtype(other)),
        }
    }

    pub fn width(self) -> usize {
        match self {
            DType::Float32 => 4,
            DType::Int64 => 8,
        }
    }

    fn name(self) -> &'static str {
        match self {
            DType::Float32 => "float32",
            DType::Int64 => "int64",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TensorData {
    Float32(Vec<f32>),
    Int64(Vec<i64>),
}

impl TensorData {
    pub fn dtype(&self) -> DType {
        match self {
            TensorData::Float32(_) => DType::Float32,
            TensorData::Int64(_) => DType::Int64,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            TensorData::Float32(v) => v.len(),
            TensorData::Int64(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// An in-memory tensor file: shape plus row-major payload.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorFile {
    shape: Vec<usize>,
    data: TensorData,
}

impl TensorFile {
    pub fn new(shape: Vec<usize>, data: TensorData) -> Result<Self> {
        if shape.is_empty() || shape.len() > MAX_NDIM || shape.contains(&0) {
            return Err(CafdError::InvalidShape(
                shape.iter().map(|&d| d as u64).collect(),
            ));
        }
        let count = element_count(&shape.iter().map(|&d| d as u64).collect::<Vec<_>>())?;
        if count != data.len() {
            return Err(CafdError::PayloadLength {
                len: data.len(),
                shape,
            });
        }
        Ok(Self { shape, data })
    }

    pub fn from_f32(shape: Vec<usize>, values: Vec<f32>) -> Result<Self> {
        Self::new(shape, TensorData::Float32(values))
    }

    pub fn from_i64(shape: Vec<usize>, values: Vec<i64>) -> Result<Self> {
        Self::new(shape, TensorData::Int64(values))
    }

    pub fn from_matrix(matrix: ArrayView2<'_, f32>) -> Result<Self> {
        let shape = vec![matrix.nrows(), matrix.ncols()];
        Self::from_f32(shape, matrix.iter().copied().collect())
    }

    pub fn from_matrix_f64(matrix: ArrayView2<'_, f64>) -> Result<Self> {
        let shape = vec![matrix.nrows(), matrix.ncols()];
        Self::from_f32(shape, matrix.iter().map(|&v| v as f32).collect())
    }

    pub fn from_class_ids(ids: &[usize]) -> Result<Self> {
        Self::from_i64(vec![ids.len()], ids.iter().map(|&v| v as i64).collect())
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn dtype(&self) -> DType {
        self.data.dtype()
    }

    pub fn data(&self) -> &TensorData {
        &self.data
    }

    pub fn as_f32(&self) -> Result<&[f32]> {
        match &self.data {
            TensorData::Float32(v) => Ok(v),
            other => Err(CafdError::DtypeMismatch {
                expected: "float32",
                found: other.dtype().name(),
            }),
        }
    }

    pub fn as_i64(&self) -> Result<&[i64]> {
        match &self.data {
            TensorData::Int64(v) => Ok(v),
            other => Err(CafdError::DtypeMismatch {
                expected: "int64",
                found: other.dtype().name(),
            }),
        }
    }

    /// Views a rank-2 float tensor as a matrix.
    pub fn to_matrix(&self) -> Result<Array2<f32>> {
        let values = self.as_f32()?;
        if self.shape.len() != 2 {
            return Err(CafdError::ShapeMismatch {
                tensor: "<matrix>".into(),
                expected: vec![0, 0],
                found: self.shape.clone(),
            });
        }
        Ok(Array2::from_shape_vec((self.shape[0], self.shape[1]), values.to_vec())
            .expect("shape validated at construction"))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let dtype = self.dtype();
        let mut out = Vec::with_capacity(
            FIXED_HEADER + 8 * self.shape.len() + dtype.width() * self.data.len(),
        );
        out.extend_from_slice(&MAGIC);
        out.push(VERSION);
        out.push(dtype.code());
        out.push(self.shape.len() as u8);
        out.push(0);
        for &dim in &self.shape {
            out.extend_from_slice(&(dim as u64).to_le_bytes());
        }
        match &self.data {
            TensorData::Float32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            TensorData::Int64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < FIXED_HEADER {
            return Err(CafdError::Truncated {
                expected: FIXED_HEADER,
                actual: bytes.len(),
            });
        }
        let magic: [u8; 4] = bytes[0..4].try_into().unwrap();
        if magic != MAGIC {
            return Err(CafdError::BadMagic(magic));
        }
        if bytes[4] != VERSION {
            return Err(CafdError::VersionMismatch(bytes[4]));
        }
        let dtype = DType::from_code(bytes[5])?;
        let ndim = bytes[6] as usize;
        if ndim == 0 || ndim > MAX_NDIM {
            return Err(CafdError::InvalidShape(vec![0; ndim]));
        }
        let header = FIXED_HEADER + 8 * ndim;
        if bytes.len() < header {
            return Err(CafdError::Truncated {
                expected: header,
                actual: bytes.len(),
            });
        }
        let dims: Vec<u64> = bytes[FIXED_HEADER..header]
            .chunks_exact(8)
            .map(|c| u64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        if dims.contains(&0) {
            return Err(CafdError::InvalidShape(dims));
        }
        let count = element_count(&dims)?;
        let payload_len = count
            .checked_mul(dtype.width())
            .and_then(|p| p.checked_add(header))
            .ok_or_else(|| CafdError::DimensionOverflow(dims.clone()))?;
        if bytes.len() < payload_len {
            return Err(CafdError::Truncated {
                expected: payload_len,
                actual: bytes.len(),
            });
        }
        if bytes.len() > payload_len {
            return Err(CafdError::TrailingBytes(bytes.len() - payload_len));
        }
        let payload = &bytes[header..];
        let data = match dtype {
            DType::Float32 => TensorData::Float32(
                payload
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
            ),
            DType::Int64 => TensorData::Int64(
                payload
                    .chunks_exact(8)
                    .map(|c| i64::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
            ),
        };
        Ok(Self {
            shape: dims.iter().map(|&d| d as usize).collect(),
            data,
        })
    }
}

fn element_count(dims: &[u64]) -> Result<usize> {
    dims.iter()
        .try_fold(1usize, |acc, &d| {
            usize::try_from(d).ok().and_then(|d| acc.checked_mul(d))
        })
        .ok_or_else(|| CafdError::DimensionOverflow(dims.to_vec()))
}

pub fn write_tensor(path: impl AsRef<Path>, tensor: &TensorFile) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, tensor.to_bytes()).map_err(|e| CafdError::io(path, e))
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<TensorFile> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| CafdError::io(path, e))?;
    TensorFile::from_bytes(&bytes)
}

/// JSON manifest describing a dataset bundle on disk. Tensor paths are
/// relative to the manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub n_train: usize,
    pub n_test: usize,
    pub num_classes: usize,
    pub latent_dim: usize,
    pub clip_dim: usize,
    pub tensors: BTreeMap<String, String>,
    pub concept_names: String,
}

/// Model outputs and latent vectors for one split.
#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub logits: Option<Array2<f32>>,
    pub probs: Array2<f32>,
    pub latent: Array2<f32>,
    pub labels: Vec<usize>,
    pub pred: Vec<usize>,
}

impl Split {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Misprediction flags: `pred != label`.
    pub fn failures(&self) -> Vec<bool> {
        self.pred
            .iter()
            .zip(&self.labels)
            .map(|(p, l)| p != l)
            .collect()
    }
}

/// Every tensor needed to analyse one model under test.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetBundle {
    pub num_classes: usize,
    pub latent_dim: usize,
    pub clip_dim: usize,
    pub train: Split,
    pub test: Split,
    pub clip_img_train: Option<Array2<f32>>,
    pub concept_text: Array2<f32>,
    pub concept_names: Vec<String>,
}

impl DatasetBundle {
    pub fn n_train(&self) -> usize {
        self.train.len()
    }

    pub fn n_test(&self) -> usize {
        self.test.len()
    }

    /// Checks every cross-tensor invariant; the first violation is returned.
    pub fn validate(&self) -> Result<()> {
        let c = self.num_classes;
        if c == 0 {
            return Err(CafdError::Manifest("num_classes must be at least 1".into()));
        }
        for (name, split) in [("train", &self.train), ("test", &self.test)] {
            let n = split.labels.len();
            check_shape(&format!("probs_{name}"), split.probs.dim(), (n, c))?;
            check_shape(
                &format!("latent_{name}"),
                split.latent.dim(),
                (n, self.latent_dim),
            )?;
            if split.pred.len() != n {
                return Err(CafdError::ShapeMismatch {
                    tensor: format!("pred_{name}"),
                    expected: vec![n],
                    found: vec![split.pred.len()],
                });
            }
            check_ids(&format!("labels_{name}"), &split.labels, c)?;
            check_ids(&format!("pred_{name}"), &split.pred, c)?;
            check_probs(&format!("probs_{name}"), split.probs.view())?;
            if let Some(logits) = &split.logits {
                check_shape(&format!("logits_{name}"), logits.dim(), (n, c))?;
                for (row, (logit_row, &stored)) in
                    logits.outer_iter().zip(&split.pred).enumerate()
                {
                    let argmax = argmax_iter(logit_row.iter().copied());
                    if argmax != stored {
                        return Err(CafdError::PredMismatch {
                            tensor: format!("pred_{name}"),
                            row,
                            stored,
                            argmax,
                        });
                    }
                }
            }
        }
        if let Some(clip) = &self.clip_img_train {
            check_shape("clip_img_train", clip.dim(), (self.n_train(), self.clip_dim))?;
        }
        check_shape(
            "concept_text",
            self.concept_text.dim(),
            (self.concept_names.len(), self.clip_dim),
        )?;
        Ok(())
    }
}

fn check_shape(tensor: &str, found: (usize, usize), expected: (usize, usize)) -> Result<()> {
    if found != expected {
        return Err(CafdError::ShapeMismatch {
            tensor: tensor.to_string(),
            expected: vec![expected.0, expected.1],
            found: vec![found.0, found.1],
        });
    }
    Ok(())
}

fn check_ids(tensor: &str, ids: &[usize], num_classes: usize) -> Result<()> {
    match ids.iter().position(|&v| v >= num_classes) {
        Some(row) => Err(CafdError::LabelOutOfRange {
            tensor: tensor.to_string(),
            row,
            value: ids[row] as i64,
            num_classes,
        }),
        None => Ok(()),
    }
}

fn check_probs(tensor: &str, probs: ArrayView2<'_, f32>) -> Result<()> {
    for (row, values) in probs.outer_iter().enumerate() {
        let sum: f64 = values.iter().map(|&p| p as f64).sum();
        let min = values.iter().fold(f64::INFINITY, |m, &p| m.min(p as f64));
        if !(sum - 1.0).abs().le(&PROB_SUM_TOL) || !min.ge(&0.0) {
            return Err(CafdError::InvalidProbability {
                tensor: tensor.to_string(),
                row,
                sum,
                min,
            });
        }
    }
    Ok(())
}

/// Index of the largest entry; ties resolve to the lowest index.
pub fn argmax_lowest(values: &[f32]) -> usize {
    argmax_iter(values.iter().copied())
}

fn argmax_iter(values: impl IntoIterator<Item = f32>) -> usize {
    let mut best = (0, f32::NEG_INFINITY);
    for (i, v) in values.into_iter().enumerate() {
        if i == 0 || v > best.1 {
            best = (i, v);
        }
    }
    best.0
}

const REQUIRED: [&str; 9] = [
    "probs_train",
    "probs_test",
    "latent_train",
    "latent_test",
    "labels_train",
    "labels_test",
    "pred_train",
    "pred_test",
    "concept_text",
];

/// Loads a bundle from its manifest and verifies every invariant.
pub fn load_bundle(manifest_path: impl AsRef<Path>) -> Result<DatasetBundle> {
    let manifest_path = manifest_path.as_ref();
    let text = fs::read_to_string(manifest_path).map_err(|e| CafdError::io(manifest_path, e))?;
    let manifest: Manifest =
        serde_json::from_str(&text).map_err(|e| CafdError::Manifest(e.to_string()))?;
    let root = manifest_path.parent().unwrap_or_else(|| Path::new("."));

    for name in REQUIRED {
        if !manifest.tensors.contains_key(name) {
            return Err(CafdError::MissingTensor(name.to_string()));
        }
    }
    let resolve = |name: &str| -> Option<PathBuf> { manifest.tensors.get(name).map(|p| root.join(p)) };
    let load = |name: &str| -> Result<Option<TensorFile>> {
        match resolve(name) {
            None => Ok(None),
            Some(path) if !path.exists() => Err(CafdError::MissingTensor(name.to_string())),
            Some(path) => read_tensor(path).map(Some),
        }
    };
    let matrix = |name: &str, rows: usize, cols: usize| -> Result<Option<Array2<f32>>> {
        let Some(t) = load(name)? else { return Ok(None) };
        if t.shape() != [rows, cols] {
            return Err(CafdError::ShapeMismatch {
                tensor: name.to_string(),
                expected: vec![rows, cols],
                found: t.shape().to_vec(),
            });
        }
        t.to_matrix().map(Some)
    };
    let ids = |name: &str, len: usize| -> Result<Vec<usize>> {
        let t = load(name)?.ok_or_else(|| CafdError::MissingTensor(name.to_string()))?;
        if t.shape() != [len] {
            return Err(CafdError::ShapeMismatch {
                tensor: name.to_string(),
                expected: vec![len],
                found: t.shape().to_vec(),
            });
        }
        t.as_i64()?
            .iter()
            .enumerate()
            .map(|(row, &v)| {
                usize::try_from(v)
                    .ok()
                    .filter(|&u| u < manifest.num_classes)
                    .ok_or(CafdError::LabelOutOfRange {
                        tensor: name.to_string(),
                        row,
                        value: v,
                        num_classes: manifest.num_classes,
                    })
            })
            .collect()
    };
    let required = |m: Option<Array2<f32>>, name: &str| {
        m.ok_or_else(|| CafdError::MissingTensor(name.to_string()))
    };

    let (c, d) = (manifest.num_classes, manifest.latent_dim);
    let mut splits = Vec::with_capacity(2);
    for (name, n) in [("train", manifest.n_train), ("test", manifest.n_test)] {
        splits.push(Split {
            logits: matrix(&format!("logits_{name}"), n, c)?,
            probs: required(matrix(&format!("probs_{name}"), n, c)?, &format!("probs_{name}"))?,
            latent: required(
                matrix(&format!("latent_{name}"), n, d)?,
                &format!("latent_{name}"),
            )?,
            labels: ids(&format!("labels_{name}"), n)?,
            pred: ids(&format!("pred_{name}"), n)?,
        });
    }
    let test = splits.pop().unwrap();
    let train = splits.pop().unwrap();

    let names_path = root.join(&manifest.concept_names);
    let names_text =
        fs::read_to_string(&names_path).map_err(|e| CafdError::io(&names_path, e))?;
    let concept_names: Vec<String> = names_text.lines().map(str::to_string).collect();
    let concept_text = required(
        matrix("concept_text", concept_names.len(), manifest.clip_dim)?,
        "concept_text",
    )?;

    let bundle = DatasetBundle {
        num_classes: c,
        latent_dim: d,
        clip_dim: manifest.clip_dim,
        clip_img_train: matrix("clip_img_train", manifest.n_train, manifest.clip_dim)?,
        train,
        test,
        concept_text,
        concept_names,
    };
    bundle.validate()?;
    Ok(bundle)
}

/// Writes a bundle as tensor files plus `manifest.json`; the manifest is
/// written last so an interrupted save is detectable. Returns the manifest path.
pub fn save_bundle(dir: impl AsRef<Path>, bundle: &DatasetBundle) -> Result<PathBuf> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| CafdError::io(dir, e))?;
    let mut tensors = BTreeMap::new();
    let mut put = |name: &str, tensor: TensorFile| -> Result<()> {
        let file = format!("{name}.tensor");
        write_tensor(dir.join(&file), &tensor)?;
        tensors.insert(name.to_string(), file);
        Ok(())
    };
    for (name, split) in [("train", &bundle.train), ("test", &bundle.test)] {
        if let Some(logits) = &split.logits {
            put(&format!("logits_{name}"), TensorFile::from_matrix(logits.view())?)?;
        }
        put(&format!("probs_{name}"), TensorFile::from_matrix(split.probs.view())?)?;
        put(&format!("latent_{name}"), TensorFile::from_matrix(split.latent.view())?)?;
        put(&format!("labels_{name}"), TensorFile::from_class_ids(&split.labels)?)?;
        put(&format!("pred_{name}"), TensorFile::from_class_ids(&split.pred)?)?;
    }
    if let Some(clip) = &bundle.clip_img_train {
        put("clip_img_train", TensorFile::from_matrix(clip.view())?)?;
    }
    put("concept_text", TensorFile::from_matrix(bundle.concept_text.view())?)?;

    let names_file = "concept_names.txt";
    let mut names = bundle.concept_names.join("\n");
    names.push('\n');
    fs::write(dir.join(names_file), names).map_err(|e| CafdError::io(dir.join(names_file), e))?;

    let manifest = Manifest {
        n_train: bundle.n_train(),
        n_test: bundle.n_test(),
        num_classes: bundle.num_classes,
        latent_dim: bundle.latent_dim,
        clip_dim: bundle.clip_dim,
        tensors,
        concept_names: names_file.to_string(),
    };
    let path = dir.join("manifest.json");
    let json = serde_json::to_string_pretty(&manifest)?;
    fs::write(&path, json).map_err(|e| CafdError::io(&path, e))?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn two_by_two_float_layout() {
        // 8-byte fixed header, two u64 dims, four f32 values
        let t = TensorFile::from_f32(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let bytes = t.to_bytes();
        assert_eq!(bytes.len(), 8 + 16 + 16);
        assert_eq!(&bytes[0..8], &[b'C', b'A', b'F', b'D', 1, 1, 2, 0]);
        assert_eq!(&bytes[8..16], &2u64.to_le_bytes());
        assert_eq!(&bytes[16..24], &2u64.to_le_bytes());
        assert_eq!(&bytes[24..28], &1.0f32.to_le_bytes());
        assert_eq!(&bytes[36..40], &4.0f32.to_le_bytes());
    }

    #[test]
    fn int64_payload_is_twos_complement_le() {
        let t = TensorFile::from_i64(vec![3], vec![-1, 0, 7]).unwrap();
        let bytes = t.to_bytes();
        assert_eq!(bytes.len(), 8 + 8 + 24);
        assert_eq!(&bytes[16..24], &[0xff; 8]);
        assert_eq!(&bytes[24..32], &[0; 8]);
        assert_eq!(&bytes[32..40], &[7, 0, 0, 0, 0, 0, 0, 0]);
    }

    #[test]
    fn decode_errors_are_distinct() {
        let good = TensorFile::from_f32(vec![3], vec![1.0, 2.0, 3.0]).unwrap().to_bytes();

        let mut bad = good.clone();
        bad[0] = b'X';
        assert!(matches!(TensorFile::from_bytes(&bad), Err(CafdError::BadMagic(m)) if &m == b"XAFD"));

        let mut bad = good.clone();
        bad[4] = 2;
        assert!(matches!(TensorFile::from_bytes(&bad), Err(CafdError::VersionMismatch(2))));

        let mut bad = good.clone();
        bad[5] = 9;
        assert!(matches!(TensorFile::from_bytes(&bad), Err(CafdError::UnsupportedDtype(9))));

        let short = &good[..good.len() - 1];
        assert!(matches!(TensorFile::from_bytes(short), Err(CafdError::Truncated { .. })));

        let mut long = good.clone();
        long.push(0);
        assert!(matches!(TensorFile::from_bytes(&long), Err(CafdError::TrailingBytes(1))));

        let mut huge = good.clone();
        huge[8..16].copy_from_slice(&u64::MAX.to_le_bytes());
        assert!(matches!(TensorFile::from_bytes(&huge), Err(CafdError::DimensionOverflow(_))));

        let mut zero_dim = good;
        zero_dim[6] = 0;
        assert!(matches!(TensorFile::from_bytes(&zero_dim), Err(CafdError::InvalidShape(_))));
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(TensorFile::from_f32(vec![], vec![]).is_err());
        assert!(TensorFile::from_f32(vec![1, 1, 1, 1, 1], vec![0.0]).is_err());
        assert!(TensorFile::from_f32(vec![2, 0], vec![]).is_err());
        assert!(TensorFile::from_f32(vec![2, 2], vec![0.0; 3]).is_err());
    }

    #[test]
    fn argmax_prefers_lowest_index() {
        assert_eq!(argmax_lowest(&[0.1, 0.5, 0.5]), 1);
        assert_eq!(argmax_lowest(&[2.0, 2.0]), 0);
    }

    fn arb_tensor() -> impl Strategy<Value = TensorFile> {
        prop::collection::vec(1usize..5, 1..=4).prop_flat_map(|shape| {
            let n: usize = shape.iter().product();
            prop_oneof![
                prop::collection::vec(any::<f32>(), n)
                    .prop_map({
                        let shape = shape.clone();
                        move |v| TensorFile::from_f32(shape.clone(), v).unwrap()
                    }),
                prop::collection::vec(any::<i64>(), n)
                    .prop_map(move |v| TensorFile::from_i64(shape.clone(), v).unwrap()),
            ]
        })
    }

    proptest! {
        #[test]
        fn roundtrip_is_identity(t in arb_tensor()) {
            let bytes = t.to_bytes();
            let back = TensorFile::from_bytes(&bytes).unwrap();
            // compare bit patterns so NaN payloads count as equal
            prop_assert_eq!(back.shape(), t.shape());
            prop_assert_eq!(back.to_bytes(), bytes);
        }
    }
}
