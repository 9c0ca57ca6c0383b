//! Seeded synthetic bundles with planted failure-correlated concepts.
//!
//! Everything is drawn from one ChaCha8 stream in this order:
//!
//! 1. class centres, `C x d` normals scaled by [`CENTER_SCALE`];
//! 2. the shared-space map `A` (`e x d`, normals over `sqrt(d)`) and offset
//!    `b` (`e` normals scaled by [`OFFSET_SCALE`]);
//! 3. concept text embeddings, `n_concepts x e` normals, normalized;
//! 4. one anchor latent `r` per planted concept `j` (class `j mod C`, drawn
//!    like an input); concept `j` becomes the unit image of `A r + b`
//!    blended with the part of its random embedding orthogonal to the range
//!    of `A` (see [`PLANTED_ALIGNMENT`]);
//! 5. per input, training split first: class, `d` noise normals, a flip
//!    uniform and a flip-target index.
//!
//! Every draw happens regardless of earlier outcomes, so the stream position
//! of an input never depends on another input's values.
//!
//! The simulated model scores latents with a nearest-centroid linear
//! classifier. An input's true label equals the prediction unless it is
//! flipped, with probability `base_error_rate`, plus `planted_error_boost`
//! when its top-m concepts (by its exact shared-space embedding) include a
//! planted concept. Planted concepts occupy ids `0..n_planted`.

use std::collections::BTreeMap;

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::concepts::{top_concepts, ConceptBank};
use crate::error::{CafdError, Result};
use crate::evaluation::FaultClustering;
use crate::tensorio::{argmax_lowest, DatasetBundle, Split};

pub const CENTER_SCALE: f64 = 1.0;
pub const OFFSET_SCALE: f64 = 0.1;
/// Weight of the anchor direction in a planted concept; the rest points
/// away from every image embedding, so only inputs close to the anchor rank
/// the concept among their top-m.
pub const PLANTED_ALIGNMENT: f64 = 0.25;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_train: usize,
    pub n_test: usize,
    pub num_classes: usize,
    pub latent_dim: usize,
    pub embed_dim: usize,
    pub n_concepts: usize,
    pub n_planted: usize,
    pub base_error_rate: f64,
    pub planted_error_boost: f64,
    pub cluster_spread: f64,
    /// Concepts per input used to decide whether a planted concept applies.
    pub m: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            n_train: 5000,
            n_test: 2000,
            num_classes: 10,
            latent_dim: 16,
            embed_dim: 32,
            n_concepts: 64,
            n_planted: 8,
            base_error_rate: 0.01,
            planted_error_boost: 0.5,
            cluster_spread: 1.0,
            m: 10,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let infeasible = |msg: String| Err(CafdError::Infeasible(msg));
        for (name, v) in [
            ("n_train", self.n_train),
            ("n_test", self.n_test),
            ("latent_dim", self.latent_dim),
            ("embed_dim", self.embed_dim),
            ("n_concepts", self.n_concepts),
            ("n_planted", self.n_planted),
            ("m", self.m),
        ] {
            if v == 0 {
                return infeasible(format!("{name} must be at least 1"));
            }
        }
        if self.num_classes < 2 {
            return infeasible("need at least 2 classes".into());
        }
        if self.n_planted > self.n_concepts {
            return infeasible(format!(
                "n_planted = {} exceeds n_concepts = {}",
                self.n_planted, self.n_concepts
            ));
        }
        if self.m > self.n_concepts {
            return infeasible(format!("m = {} exceeds n_concepts = {}", self.m, self.n_concepts));
        }
        for (name, r) in [
            ("base_error_rate", self.base_error_rate),
            ("planted_error_boost", self.planted_error_boost),
        ] {
            if !(0.0..1.0).contains(&r) {
                return infeasible(format!("{name} = {r} outside [0, 1)"));
            }
        }
        if !(self.cluster_spread > 0.0 && self.cluster_spread.is_finite()) {
            return infeasible("cluster_spread must be positive".into());
        }
        Ok(())
    }

    /// Ids of the failure-correlated concepts.
    pub fn planted_concepts(&self) -> Vec<usize> {
        (0..self.n_planted).collect()
    }
}

struct World {
    centers: Array2<f64>,
    a: Array2<f64>,
    b: Array1<f64>,
    concept_text: Array2<f32>,
    bank: ConceptBank,
}

fn normals(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.sample::<f64, _>(StandardNormal) * scale).collect()
}

impl World {
    fn embed(&self, z: &[f32]) -> Vec<f64> {
        self.a
            .outer_iter()
            .zip(self.b.iter())
            .map(|(row, &bi)| bi + row.iter().zip(z).map(|(w, &x)| w * x as f64).sum::<f64>())
            .collect()
    }

    fn logits(&self, z: &[f32]) -> Vec<f32> {
        self.centers
            .outer_iter()
            .map(|mu| {
                let dot: f64 = mu.iter().zip(z).map(|(m, &x)| m * x as f64).sum();
                let half_sq: f64 = 0.5 * mu.iter().map(|m| m * m).sum::<f64>();
                (dot - half_sq) as f32
            })
            .collect()
    }
}

fn latent_sample(rng: &mut ChaCha8Rng, cfg: &SynthConfig, center: ndarray::ArrayView1<'_, f64>) -> Vec<f32> {
    let noise = normals(rng, cfg.latent_dim, cfg.cluster_spread);
    center.iter().zip(noise).map(|(c, e)| (c + e) as f32).collect()
}

fn unit_in_place(row: &mut ndarray::ArrayViewMut1<'_, f64>) -> Result<()> {
    let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !(norm > 0.0) {
        return Err(CafdError::Infeasible("degenerate concept embedding".into()));
    }
    row.mapv_inplace(|v| v / norm);
    Ok(())
}

/// Orthonormal basis of the column space of `a` (modified Gram-Schmidt).
fn orthonormal_columns(a: &Array2<f64>) -> Vec<Array1<f64>> {
    let mut basis: Vec<Array1<f64>> = Vec::new();
    for col in a.columns() {
        let mut v = col.to_owned();
        for q in &basis {
            let along = v.dot(q);
            v.scaled_add(-along, q);
        }
        let norm = v.dot(&v).sqrt();
        if norm > 1e-10 {
            basis.push(v / norm);
        }
    }
    basis
}

fn softmax(logits: &[f32]) -> Vec<f32> {
    let max = logits.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v as f64));
    let exps: Vec<f64> = logits.iter().map(|&v| (v as f64 - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.iter().map(|e| (e / total) as f32).collect()
}

struct Draw {
    split: Split,
    clip: Array2<f32>,
    /// Planted concept nearest to each input whose top-m holds one.
    planted_hit: Vec<Option<usize>>,
}

fn draw_split(rng: &mut ChaCha8Rng, cfg: &SynthConfig, world: &World, n: usize) -> Result<Draw> {
    let (c, d, e) = (cfg.num_classes, cfg.latent_dim, cfg.embed_dim);
    let mut latent = Array2::zeros((n, d));
    let mut logits = Array2::zeros((n, c));
    let mut probs = Array2::zeros((n, c));
    let mut clip = Array2::zeros((n, e));
    let mut labels = Vec::with_capacity(n);
    let mut pred = Vec::with_capacity(n);
    let mut planted_hit = Vec::with_capacity(n);
    for i in 0..n {
        let class = rng.gen_range(0..c);
        let z = latent_sample(rng, cfg, world.centers.row(class));
        let flip_u: f64 = rng.gen();
        let flip_target = rng.gen_range(0..c - 1);

        let row_logits = world.logits(&z);
        let p = argmax_lowest(&row_logits);
        let embedding = world.embed(&z);
        let assignment = top_concepts(i, &embedding, &world.bank, cfg.m)?;
        let hit = assignment
            .concept_ids
            .iter()
            .find(|&&id| id < cfg.n_planted)
            .copied();
        let rate = cfg.base_error_rate + if hit.is_some() { cfg.planted_error_boost } else { 0.0 };
        let label = if flip_u < rate {
            if flip_target >= p {
                flip_target + 1
            } else {
                flip_target
            }
        } else {
            p
        };

        latent.row_mut(i).assign(&Array1::from(z));
        probs.row_mut(i).assign(&Array1::from(softmax(&row_logits)));
        logits.row_mut(i).assign(&Array1::from(row_logits));
        clip.row_mut(i).assign(&embedding.iter().map(|&v| v as f32).collect::<Array1<f32>>());
        labels.push(label);
        pred.push(p);
        planted_hit.push(hit);
    }
    Ok(Draw {
        split: Split {
            logits: Some(logits),
            probs,
            latent,
            labels,
            pred,
        },
        clip,
        planted_hit,
    })
}

/// A validated bundle plus the ground-truth clustering of its failing test
/// inputs.
pub fn generate(cfg: &SynthConfig) -> Result<(DatasetBundle, FaultClustering)> {
    cfg.validate()?;
    let (c, d, e) = (cfg.num_classes, cfg.latent_dim, cfg.embed_dim);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let centers = Array2::from_shape_vec((c, d), normals(&mut rng, c * d, CENTER_SCALE)).unwrap();
    let a = Array2::from_shape_vec((e, d), normals(&mut rng, e * d, 1.0 / (d as f64).sqrt())).unwrap();
    let b = Array1::from(normals(&mut rng, e, OFFSET_SCALE));
    let mut text = Array2::from_shape_vec((cfg.n_concepts, e), normals(&mut rng, cfg.n_concepts * e, 1.0)).unwrap();

    let mut world = World {
        centers,
        a,
        b,
        concept_text: Array2::zeros((0, e)),
        bank: ConceptBank {
            ids: Vec::new(),
            embeddings: Array2::zeros((0, e)),
        },
    };
    for mut row in text.outer_iter_mut() {
        unit_in_place(&mut row)?;
    }
    let basis = orthonormal_columns(&world.a);
    for j in 0..cfg.n_planted {
        let anchor = latent_sample(&mut rng, cfg, world.centers.row(j % c));
        let mut u = Array1::from(world.embed(&anchor));
        unit_in_place(&mut u.view_mut())?;
        let mut w = text.row(j).to_owned();
        for q in &basis {
            let along = w.dot(q);
            w.scaled_add(-along, q);
        }
        unit_in_place(&mut w.view_mut())?;
        let mut blended = &u * PLANTED_ALIGNMENT + &w * (1.0 - PLANTED_ALIGNMENT * PLANTED_ALIGNMENT).sqrt();
        unit_in_place(&mut blended.view_mut())?;
        text.row_mut(j).assign(&blended);
    }
    world.concept_text = text.mapv(|v| v as f32);
    world.bank = ConceptBank::from_text_embeddings(world.concept_text.view())?;

    let train = draw_split(&mut rng, cfg, &world, cfg.n_train)?;
    let test = draw_split(&mut rng, cfg, &world, cfg.n_test)?;

    let mut clusters = BTreeMap::new();
    for (i, (&label, &p)) in test.split.labels.iter().zip(&test.split.pred).enumerate() {
        if label != p {
            let cluster = match test.planted_hit[i] {
                Some(j) => j,
                None => cfg.n_planted + p,
            };
            clusters.insert(i, cluster as i64);
        }
    }

    let bundle = DatasetBundle {
        num_classes: c,
        latent_dim: d,
        clip_dim: e,
        train: train.split,
        test: test.split,
        clip_img_train: Some(train.clip),
        concept_text: world.concept_text,
        concept_names: (0..cfg.n_concepts).map(|j| format!("concept_{j:03}")).collect(),
    };
    bundle.validate()?;
    Ok((bundle, FaultClustering::new(clusters)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(seed: u64) -> SynthConfig {
        SynthConfig {
            seed,
            n_train: 300,
            n_test: 200,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let (a, ca) = generate(&small(7)).unwrap();
        let (b, cb) = generate(&small(7)).unwrap();
        assert_eq!(a, b);
        assert_eq!(ca, cb);
        let (c, _) = generate(&small(8)).unwrap();
        assert_ne!(a.train.latent, c.train.latent);
    }

    #[test]
    fn no_flips_means_no_failures() {
        let cfg = SynthConfig {
            base_error_rate: 0.0,
            planted_error_boost: 0.0,
            ..small(3)
        };
        let (bundle, clusters) = generate(&cfg).unwrap();
        assert!(bundle.train.failures().iter().all(|f| !f));
        assert!(bundle.test.failures().iter().all(|f| !f));
        assert_eq!(clusters.n_faults(), 0);
    }

    #[test]
    fn clustering_covers_exactly_the_failures() {
        let (bundle, clusters) = generate(&small(11)).unwrap();
        let failing: Vec<usize> = bundle
            .test
            .failures()
            .iter()
            .enumerate()
            .filter(|(_, f)| **f)
            .map(|(i, _)| i)
            .collect();
        assert_eq!(clusters.cluster_of.keys().copied().collect::<Vec<_>>(), failing);
        clusters.validate_against(&bundle.test).unwrap();
    }

    #[test]
    fn probs_are_softmax_of_logits() {
        let (bundle, _) = generate(&small(5)).unwrap();
        let logits = bundle.test.logits.as_ref().unwrap();
        for (l, p) in logits.outer_iter().zip(bundle.test.probs.outer_iter()) {
            let max = l.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v as f64));
            let total: f64 = l.iter().map(|&v| (v as f64 - max).exp()).sum();
            for (&lv, &pv) in l.iter().zip(p.iter()) {
                assert!(((lv as f64 - max).exp() / total - pv as f64).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn infeasible_configs() {
        let bad = [
            SynthConfig { n_planted: 65, ..SynthConfig::default() },
            SynthConfig { n_train: 0, ..SynthConfig::default() },
            SynthConfig { num_classes: 1, ..SynthConfig::default() },
            SynthConfig { base_error_rate: 1.0, ..SynthConfig::default() },
            SynthConfig { cluster_spread: 0.0, ..SynthConfig::default() },
            SynthConfig { m: 65, ..SynthConfig::default() },
        ];
        for cfg in bad {
            assert!(matches!(generate(&cfg), Err(CafdError::Infeasible(_))), "{cfg:?}");
        }
    }

    #[test]
    fn config_json_defaults_and_unknown_fields() {
        let cfg: SynthConfig = serde_json::from_str(r#"{"seed": 4, "n_test": 10}"#).unwrap();
        assert_eq!(cfg.seed, 4);
        assert_eq!(cfg.n_test, 10);
        assert_eq!(cfg.n_train, 5000);
        assert!(serde_json::from_str::<SynthConfig>(r#"{"bogus": 1}"#).is_err());
    }
}
