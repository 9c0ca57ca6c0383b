use std::fs;
use std::path::{Path, PathBuf};

use cafd::synthgen::{generate, SynthConfig};
use cafd::tensorio::{write_tensor, TensorFile};
use cafd::{load_bundle, save_bundle, CafdError, DatasetBundle};

fn small() -> DatasetBundle {
    generate(&SynthConfig {
        seed: 9,
        n_train: 60,
        n_test: 30,
        num_classes: 4,
        latent_dim: 6,
        embed_dim: 8,
        n_concepts: 20,
        n_planted: 3,
        m: 5,
        ..SynthConfig::default()
    })
    .unwrap()
    .0
}

fn saved(bundle: &DatasetBundle) -> (tempfile::TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let manifest = save_bundle(dir.path(), bundle).unwrap();
    (dir, manifest)
}

fn load_mutated(mutate: impl FnOnce(&mut DatasetBundle)) -> CafdError {
    let mut b = small();
    mutate(&mut b);
    let (_dir, manifest) = saved(&b);
    load_bundle(&manifest).expect_err("mutated bundle must be rejected")
}

fn edit_manifest(path: &Path, edit: impl FnOnce(&mut serde_json::Value)) {
    let mut json: serde_json::Value = serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap();
    edit(&mut json);
    fs::write(path, serde_json::to_string(&json).unwrap()).unwrap();
}

#[test]
fn synthetic_bundle_roundtrips_exactly() {
    let b = small();
    let (_dir, manifest) = saved(&b);
    assert_eq!(load_bundle(&manifest).unwrap(), b);
}

#[test]
fn cifar10_shaped_bundle() {
    let (b, _) = generate(&SynthConfig {
        seed: 0,
        n_train: 50_000,
        n_test: 10_000,
        num_classes: 10,
        ..SynthConfig::default()
    })
    .unwrap();
    assert_eq!((b.n_train(), b.n_test(), b.num_classes), (50_000, 10_000, 10));
    b.validate().unwrap();
}

#[test]
fn saves_are_byte_identical() {
    let b = small();
    let (d1, _) = saved(&b);
    let (d2, _) = saved(&b);
    let mut names: Vec<_> = fs::read_dir(d1.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert!(names.len() >= 12);
    for name in names {
        assert_eq!(
            fs::read(d1.path().join(&name)).unwrap(),
            fs::read(d2.path().join(&name)).unwrap(),
            "{name:?}"
        );
    }
}

#[test]
fn probability_row_summing_to_point_nine() {
    let err = load_mutated(|b| {
        let row = b.test.probs.row(3).to_owned() * 0.9;
        b.test.probs.row_mut(3).assign(&row);
        b.test.logits = None;
    });
    assert!(matches!(err, CafdError::InvalidProbability { row: 3, ref tensor, .. } if tensor == "probs_test"), "{err}");
}

#[test]
fn negative_probability() {
    let err = load_mutated(|b| {
        b.train.probs[[0, 0]] += 0.5;
        b.train.probs[[0, 1]] -= 0.5 + b.train.probs[[0, 1]].max(0.0) + 0.01;
        let s: f32 = b.train.probs.row(0).sum();
        b.train.probs[[0, 2]] += 1.0 - s;
        b.train.logits = None;
    });
    assert!(matches!(err, CafdError::InvalidProbability { row: 0, .. }), "{err}");
}

#[test]
fn label_out_of_range() {
    let err = load_mutated(|b| b.train.labels[5] = 4);
    assert!(matches!(err, CafdError::LabelOutOfRange { row: 5, value: 4, .. }), "{err}");
}

#[test]
fn negative_label() {
    let b = small();
    let (_dir, manifest) = saved(&b);
    let mut labels: Vec<i64> = b.test.labels.iter().map(|&v| v as i64).collect();
    labels[2] = -1;
    write_tensor(
        manifest.parent().unwrap().join("labels_test.tensor"),
        &TensorFile::from_i64(vec![labels.len()], labels).unwrap(),
    )
    .unwrap();
    let err = load_bundle(&manifest).unwrap_err();
    assert!(matches!(err, CafdError::LabelOutOfRange { row: 2, value: -1, .. }), "{err}");
}

#[test]
fn prediction_out_of_range() {
    let err = load_mutated(|b| {
        b.test.pred[0] = 9;
        b.test.logits = None;
    });
    assert!(matches!(err, CafdError::LabelOutOfRange { ref tensor, .. } if tensor == "pred_test"), "{err}");
}

#[test]
fn prediction_disagrees_with_logits() {
    let err = load_mutated(|b| b.train.pred[7] = (b.train.pred[7] + 1) % 4);
    assert!(matches!(err, CafdError::PredMismatch { row: 7, .. }), "{err}");
}

#[test]
fn logits_are_optional() {
    let mut b = small();
    b.train.logits = None;
    b.test.logits = None;
    b.clip_img_train = None;
    let (_dir, manifest) = saved(&b);
    assert_eq!(load_bundle(&manifest).unwrap(), b);
}

#[test]
fn latent_width_disagrees_with_manifest() {
    let b = small();
    let (_dir, manifest) = saved(&b);
    edit_manifest(&manifest, |j| j["latent_dim"] = 7.into());
    let err = load_bundle(&manifest).unwrap_err();
    assert!(matches!(err, CafdError::ShapeMismatch { ref tensor, .. } if tensor == "latent_train"), "{err}");
}

#[test]
fn row_count_disagrees_with_manifest() {
    let b = small();
    let (_dir, manifest) = saved(&b);
    edit_manifest(&manifest, |j| j["n_test"] = 31.into());
    assert!(matches!(load_bundle(&manifest).unwrap_err(), CafdError::ShapeMismatch { .. }));
}

#[test]
fn label_vector_length() {
    let b = small();
    let (_dir, manifest) = saved(&b);
    write_tensor(
        manifest.parent().unwrap().join("labels_train.tensor"),
        &TensorFile::from_class_ids(&b.train.labels[..59]).unwrap(),
    )
    .unwrap();
    let err = load_bundle(&manifest).unwrap_err();
    assert!(matches!(err, CafdError::ShapeMismatch { ref tensor, .. } if tensor == "labels_train"), "{err}");
}

#[test]
fn label_tensor_with_float_dtype() {
    let b = small();
    let (_dir, manifest) = saved(&b);
    write_tensor(
        manifest.parent().unwrap().join("pred_train.tensor"),
        &TensorFile::from_f32(vec![60], vec![0.0; 60]).unwrap(),
    )
    .unwrap();
    assert!(matches!(load_bundle(&manifest).unwrap_err(), CafdError::DtypeMismatch { .. }));
}

#[test]
fn clip_embeddings_wrong_width() {
    let b = small();
    let (_dir, manifest) = saved(&b);
    write_tensor(
        manifest.parent().unwrap().join("clip_img_train.tensor"),
        &TensorFile::from_f32(vec![60, 9], vec![0.5; 540]).unwrap(),
    )
    .unwrap();
    let err = load_bundle(&manifest).unwrap_err();
    assert!(matches!(err, CafdError::ShapeMismatch { ref tensor, .. } if tensor == "clip_img_train"), "{err}");
}

#[test]
fn concept_names_and_text_rows_disagree() {
    let b = small();
    let (dir, manifest) = saved(&b);
    let names = dir.path().join("concept_names.txt");
    let mut text = fs::read_to_string(&names).unwrap();
    text.push_str("extra\n");
    fs::write(&names, text).unwrap();
    let err = load_bundle(&manifest).unwrap_err();
    assert!(matches!(err, CafdError::ShapeMismatch { ref tensor, .. } if tensor == "concept_text"), "{err}");
}

#[test]
fn zero_classes() {
    let b = small();
    let (_dir, manifest) = saved(&b);
    edit_manifest(&manifest, |j| j["num_classes"] = 0.into());
    assert!(load_bundle(&manifest).is_err());
}

#[test]
fn required_tensor_missing_from_manifest() {
    let b = small();
    let (_dir, manifest) = saved(&b);
    edit_manifest(&manifest, |j| {
        j["tensors"].as_object_mut().unwrap().remove("latent_test");
    });
    assert!(matches!(load_bundle(&manifest).unwrap_err(), CafdError::MissingTensor(ref n) if n == "latent_test"));
}

#[test]
fn listed_tensor_file_absent() {
    let b = small();
    let (dir, manifest) = saved(&b);
    fs::remove_file(dir.path().join("probs_train.tensor")).unwrap();
    assert!(matches!(load_bundle(&manifest).unwrap_err(), CafdError::MissingTensor(ref n) if n == "probs_train"));
}

#[test]
fn malformed_manifest() {
    let b = small();
    let (_dir, manifest) = saved(&b);
    fs::write(&manifest, "{\"n_train\": 60").unwrap();
    assert!(matches!(load_bundle(&manifest).unwrap_err(), CafdError::Manifest(_)));
}

#[test]
fn corrupted_tensor_magic() {
    let b = small();
    let (dir, manifest) = saved(&b);
    let path = dir.path().join("latent_train.tensor");
    let mut bytes = fs::read(&path).unwrap();
    bytes[0] = b'X';
    fs::write(&path, bytes).unwrap();
    assert!(matches!(load_bundle(&manifest).unwrap_err(), CafdError::BadMagic(_)));
}
