//! Class-weighted, L2-regularized logistic regression used as the fault
//! detector, plus coefficient-based feature importance and RFE.

use std::fs;
use std::path::Path;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CafdError, Result};
use crate::linalg::{cholesky, cholesky_solve};
use crate::ranking::{Direction, RankedList};
use crate::tensorio::{write_tensor, TensorFile};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassWeight {
    Balanced,
    None,
}

impl FromStr for ClassWeight {
    type Err = CafdError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "balanced" => Ok(ClassWeight::Balanced),
            "none" => Ok(ClassWeight::None),
            other => Err(CafdError::invalid(format!("unknown class weighting `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Solver {
    /// Limited-memory BFGS with backtracking line search.
    Lbfgs,
    /// Newton steps on the exact Hessian with backtracking.
    Newton,
}

impl FromStr for Solver {
    type Err = CafdError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lbfgs" => Ok(Solver::Lbfgs),
            "newton" => Ok(Solver::Newton),
            other => Err(CafdError::invalid(format!("unknown solver `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lambda_l2: f64,
    pub tol: f64,
    pub max_iters: usize,
    pub class_weight: ClassWeight,
    pub solver: Solver,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lambda_l2: 1.0,
            tol: 1e-6,
            max_iters: 5000,
            class_weight: ClassWeight::Balanced,
            solver: Solver::Lbfgs,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_l2 >= 0.0 && self.lambda_l2.is_finite()) {
            return Err(CafdError::invalid("l2 strength must be finite and >= 0"));
        }
        if !(self.tol > 0.0) {
            return Err(CafdError::invalid("tolerance must be positive"));
        }
        if self.max_iters == 0 {
            return Err(CafdError::invalid("max_iters must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LrModel {
    pub beta: Vec<f64>,
    pub bias: f64,
    pub lambda_l2: f64,
    /// `(w_pos, w_neg)`
    pub class_weights: (f64, f64),
    pub converged: bool,
    pub n_iters: usize,
    /// Gradient norm at the solution relative to the norm at zero.
    pub grad_norm: f64,
}

/// Balanced weights `n / (2 n_pos)` and `n / (2 n_neg)`.
pub fn class_weights(y: &[bool], scheme: ClassWeight) -> Result<(f64, f64)> {
    let n = y.len();
    let n_pos = y.iter().filter(|&&v| v).count();
    if n_pos == 0 || n_pos == n {
        return Err(CafdError::SingleClass);
    }
    Ok(match scheme {
        ClassWeight::Balanced => (
            n as f64 / (2.0 * n_pos as f64),
            n as f64 / (2.0 * (n - n_pos) as f64),
        ),
        ClassWeight::None => (1.0, 1.0),
    })
}

/// `log(1 + exp(t))` without overflow.
#[inline]
fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

/// Logistic function with the branch that never exponentiates a large
/// positive number.
#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// The weighted negative log-likelihood plus `lambda/2 |beta|^2` over
/// parameters `theta = [beta, bias]`.
pub struct Objective<'a> {
    x: ArrayView2<'a, f64>,
    y: &'a [bool],
    weights: Vec<f64>,
    lambda: f64,
}

impl<'a> Objective<'a> {
    pub fn new(
        x: ArrayView2<'a, f64>,
        y: &'a [bool],
        sample_weight: Option<&[f64]>,
        class_weights: (f64, f64),
        lambda: f64,
    ) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(CafdError::DimensionMismatch {
                expected: x.nrows(),
                found: y.len(),
            });
        }
        if let Some(sw) = sample_weight {
            if sw.len() != y.len() {
                return Err(CafdError::DimensionMismatch {
                    expected: y.len(),
                    found: sw.len(),
                });
            }
        }
        let weights = y
            .iter()
            .enumerate()
            .map(|(i, &yi)| {
                let cw = if yi { class_weights.0 } else { class_weights.1 };
                cw * sample_weight.map_or(1.0, |sw| sw[i])
            })
            .collect();
        Ok(Self {
            x,
            y,
            weights,
            lambda,
        })
    }

    pub fn dim(&self) -> usize {
        self.x.ncols() + 1
    }

    fn margins(&self, theta: &[f64]) -> Vec<f64> {
        let f = self.x.ncols();
        let beta = ArrayView1::from(&theta[..f]);
        let bias = theta[f];
        (0..self.x.nrows())
            .into_par_iter()
            .map(|i| self.x.row(i).dot(&beta) + bias)
            .collect()
    }

    pub fn value(&self, theta: &[f64]) -> f64 {
        let f = self.x.ncols();
        let z = self.margins(theta);
        let loss: f64 = z
            .iter()
            .zip(self.y)
            .zip(&self.weights)
            .map(|((&zi, &yi), &w)| w * softplus(if yi { -zi } else { zi }))
            .sum();
        let reg: f64 = theta[..f].iter().map(|b| b * b).sum();
        loss + 0.5 * self.lambda * reg
    }

    pub fn value_and_gradient(&self, theta: &[f64]) -> (f64, Vec<f64>) {
        let f = self.x.ncols();
        let z = self.margins(theta);
        let mut loss = 0.0;
        let mut residual = Array1::zeros(z.len());
        for (i, ((&zi, &yi), &w)) in z.iter().zip(self.y).zip(&self.weights).enumerate() {
            loss += w * softplus(if yi { -zi } else { zi });
            residual[i] = w * (sigmoid(zi) - if yi { 1.0 } else { 0.0 });
        }
        let mut grad = self.x.t().dot(&residual).to_vec();
        for (g, &b) in grad.iter_mut().zip(&theta[..f]) {
            *g += self.lambda * b;
        }
        grad.push(residual.sum());
        let reg: f64 = theta[..f].iter().map(|b| b * b).sum();
        (loss + 0.5 * self.lambda * reg, grad)
    }

    pub fn gradient(&self, theta: &[f64]) -> Vec<f64> {
        self.value_and_gradient(theta).1
    }

    fn hessian(&self, theta: &[f64]) -> Array2<f64> {
        let f = self.x.ncols();
        let z = self.margins(theta);
        let mut h = Array2::zeros((f + 1, f + 1));
        let mut design = Array2::ones((self.x.nrows(), f + 1));
        design.slice_mut(ndarray::s![.., ..f]).assign(&self.x);
        let scaled = {
            let mut s = design.clone();
            for (i, mut row) in s.axis_iter_mut(Axis(0)).enumerate() {
                let p = sigmoid(z[i]);
                row *= self.weights[i] * p * (1.0 - p);
            }
            s
        };
        h += &design.t().dot(&scaled);
        for j in 0..f {
            h[[j, j]] += self.lambda;
        }
        h
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

struct Outcome {
    theta: Vec<f64>,
    converged: bool,
    iters: usize,
    rel_grad: f64,
}

/// Armijo backtracking along `direction`; returns the accepted step and
/// the new value/gradient, or None if no decrease was found. Once the
/// objective can no longer resolve the predicted decrease, a step that
/// shrinks the gradient norm is accepted instead.
fn line_search(
    obj: &Objective<'_>,
    theta: &[f64],
    value: f64,
    grad: &[f64],
    direction: &[f64],
) -> Option<(Vec<f64>, f64, Vec<f64>)> {
    let slope = dot(grad, direction);
    if !(slope < 0.0) {
        return None;
    }
    let mut step = 1.0;
    for _ in 0..60 {
        let candidate: Vec<f64> = theta.iter().zip(direction).map(|(t, d)| t + step * d).collect();
        let (v, g) = obj.value_and_gradient(&candidate);
        if v.is_finite() && v <= value + 1e-4 * step * slope {
            return Some((candidate, v, g));
        }
        let flat = (v - value).abs() <= 8.0 * f64::EPSILON * value.abs().max(1.0);
        if flat && norm(&g) < norm(grad) {
            return Some((candidate, v, g));
        }
        step *= 0.5;
    }
    None
}

fn lbfgs(obj: &Objective<'_>, config: &TrainConfig) -> Outcome {
    const MEMORY: usize = 10;
    let mut theta = vec![0.0; obj.dim()];
    let (mut value, mut grad) = obj.value_and_gradient(&theta);
    let scale = norm(&grad).max(1.0);
    let mut history: Vec<(Vec<f64>, Vec<f64>, f64)> = Vec::with_capacity(MEMORY);
    let mut iters = 0;
    while iters < config.max_iters {
        if norm(&grad) / scale <= config.tol {
            break;
        }
        iters += 1;
        // two-loop recursion
        let mut q = grad.clone();
        let mut alphas = Vec::with_capacity(history.len());
        for (s, y, rho) in history.iter().rev() {
            let a = rho * dot(s, &q);
            q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
            alphas.push(a);
        }
        let gamma = history
            .last()
            .map_or(1.0 / scale, |(s, y, _)| dot(s, y) / dot(y, y));
        q.iter_mut().for_each(|v| *v *= gamma);
        for ((s, y, rho), a) in history.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &q);
            q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - b) * si);
        }
        let direction: Vec<f64> = q.iter().map(|v| -v).collect();
        let step = line_search(obj, &theta, value, &grad, &direction).or_else(|| {
            history.clear();
            let steepest: Vec<f64> = grad.iter().map(|g| -g / scale).collect();
            line_search(obj, &theta, value, &grad, &steepest)
        });
        let Some((next, next_value, next_grad)) = step else {
            break;
        };
        if next == theta {
            break;
        }
        let s: Vec<f64> = next.iter().zip(&theta).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = next_grad.iter().zip(&grad).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * norm(&s) * norm(&y) {
            if history.len() == MEMORY {
                history.remove(0);
            }
            history.push((s, y, 1.0 / sy));
        }
        theta = next;
        value = next_value;
        grad = next_grad;
    }
    let rel_grad = norm(&grad) / scale;
    Outcome {
        theta,
        converged: rel_grad <= config.tol,
        iters,
        rel_grad,
    }
}

fn newton(obj: &Objective<'_>, config: &TrainConfig) -> Outcome {
    let mut theta = vec![0.0; obj.dim()];
    let (mut value, mut grad) = obj.value_and_gradient(&theta);
    let scale = norm(&grad).max(1.0);
    let mut iters = 0;
    while iters < config.max_iters {
        if norm(&grad) / scale <= config.tol {
            break;
        }
        iters += 1;
        let h = obj.hessian(&theta);
        let diag_max = h.diag().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        // damp until positive definite (only needed when lambda = 0)
        let mut damping = 0.0;
        let direction = loop {
            let mut hd = h.clone();
            for j in 0..hd.nrows() {
                hd[[j, j]] += damping;
            }
            if cholesky(&mut hd) {
                let mut rhs = Array2::from_shape_vec((grad.len(), 1), grad.iter().map(|g| -g).collect())
                    .expect("column vector");
                cholesky_solve(&hd, &mut rhs);
                break Some(rhs.column(0).to_vec());
            }
            damping = if damping == 0.0 { 1e-10 * diag_max.max(1.0) } else { damping * 10.0 };
            if damping > 1e10 * diag_max.max(1.0) {
                break None;
            }
        };
        let Some(direction) = direction else { break };
        let Some((next, v, g)) = line_search(obj, &theta, value, &grad, &direction) else {
            break;
        };
        if next == theta {
            break;
        }
        theta = next;
        value = v;
        grad = g;
    }
    let rel_grad = norm(&grad) / scale;
    Outcome {
        theta,
        converged: rel_grad <= config.tol,
        iters,
        rel_grad,
    }
}

fn check_finite(x: ArrayView2<'_, f64>) -> Result<()> {
    for ((row, col), v) in x.indexed_iter() {
        if !v.is_finite() {
            return Err(CafdError::NonFinite { row, col });
        }
    }
    Ok(())
}

/// Fits the detector from an all-zero start. `y[i]` is true when the model
/// under test mispredicts input `i`.
pub fn train(x: ArrayView2<'_, f64>, y: &[bool], config: &TrainConfig) -> Result<LrModel> {
    train_weighted(x, y, None, config)
}

/// [`train`] with per-row multiplicative weights on top of the class weights.
pub fn train_weighted(
    x: ArrayView2<'_, f64>,
    y: &[bool],
    sample_weight: Option<&[f64]>,
    config: &TrainConfig,
) -> Result<LrModel> {
    config.validate()?;
    check_finite(x)?;
    let cw = class_weights(y, config.class_weight)?;
    let obj = Objective::new(x.view(), y, sample_weight, cw, config.lambda_l2)?;
    let outcome = match config.solver {
        Solver::Lbfgs => lbfgs(&obj, config),
        Solver::Newton => newton(&obj, config),
    };
    let f = x.ncols();
    Ok(LrModel {
        beta: outcome.theta[..f].to_vec(),
        bias: outcome.theta[f],
        lambda_l2: config.lambda_l2,
        class_weights: cw,
        converged: outcome.converged,
        n_iters: outcome.iters,
        grad_norm: outcome.rel_grad,
    })
}

impl LrModel {
    pub fn n_features(&self) -> usize {
        self.beta.len()
    }

    pub fn decision(&self, x: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        if x.ncols() != self.beta.len() {
            return Err(CafdError::LayoutMismatch {
                expected: self.beta.len(),
                found: x.ncols(),
            });
        }
        let beta = ArrayView1::from(&self.beta);
        Ok((0..x.nrows())
            .into_par_iter()
            .map(|i| x.row(i).dot(&beta) + self.bias)
            .collect())
    }

    /// `sigmoid(x beta + b)` for every row.
    pub fn predict_proba(&self, x: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        Ok(self.decision(x)?.into_iter().map(sigmoid).collect())
    }

    /// Ranks rows by descending fault probability.
    ///
    /// Sorting uses the decision value, which is monotone in the probability
    /// but does not saturate; reported scores are the probabilities.
    pub fn rank(&self, x: ArrayView2<'_, f64>) -> Result<RankedList> {
        let z = self.decision(x)?;
        let order = RankedList::from_scores(&z, Direction::Descending);
        Ok(RankedList::from_entries(
            order
                .entries()
                .iter()
                .map(|e| crate::ranking::RankedEntry {
                    input_id: e.input_id,
                    score: sigmoid(e.score),
                })
                .collect(),
        ))
    }

    /// Writes `<stem>.tensor` (`[beta..., bias]`) and `<stem>.json`, whose
    /// parameters are the exact values used on reload.
    pub fn save(&self, dir: impl AsRef<Path>, stem: &str, column_digest: &str) -> Result<()> {
        #[derive(Serialize)]
        struct Meta<'a> {
            #[serde(flatten)]
            model: &'a LrModel,
            column_map_sha256: &'a str,
        }
        let dir = dir.as_ref();
        let mut params: Vec<f32> = self.beta.iter().map(|&b| b as f32).collect();
        params.push(self.bias as f32);
        write_tensor(
            dir.join(format!("{stem}.tensor")),
            &TensorFile::from_f32(vec![params.len()], params)?,
        )?;
        let path = dir.join(format!("{stem}.json"));
        let meta = Meta {
            model: self,
            column_map_sha256: column_digest,
        };
        fs::write(&path, serde_json::to_string_pretty(&meta)?).map_err(|e| CafdError::io(&path, e))
    }

    /// Loads a model and checks it was trained on the expected column layout.
    pub fn load(dir: impl AsRef<Path>, stem: &str, column_digest: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Meta {
            #[serde(flatten)]
            model: LrModel,
            column_map_sha256: String,
        }
        let path = dir.as_ref().join(format!("{stem}.json"));
        let text = fs::read_to_string(&path).map_err(|e| CafdError::io(&path, e))?;
        let meta: Meta = serde_json::from_str(&text)?;
        if meta.column_map_sha256 != column_digest {
            return Err(CafdError::invalid(
                "model was trained on a different feature layout",
            ));
        }
        Ok(meta.model)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImportanceReport {
    pub coef_magnitude: Vec<f64>,
    pub odds_ratio: Vec<f64>,
    /// Feature indices in elimination order; the last one survived.
    pub rfe_order: Vec<usize>,
}

/// Coefficient magnitudes, odds ratios and a recursive feature elimination
/// that retrains after every round and drops the `ceil(step * remaining)`
/// smallest-|beta| features (ties to the lower index).
pub fn importance(
    model: &LrModel,
    x: ArrayView2<'_, f64>,
    y: &[bool],
    config: &TrainConfig,
    rfe_step: f64,
) -> Result<ImportanceReport> {
    if !(rfe_step > 0.0 && rfe_step <= 0.5) {
        return Err(CafdError::invalid(format!("rfe step {rfe_step} outside (0, 0.5]")));
    }
    if x.ncols() != model.n_features() {
        return Err(CafdError::LayoutMismatch {
            expected: model.n_features(),
            found: x.ncols(),
        });
    }
    let mut remaining: Vec<usize> = (0..x.ncols()).collect();
    let mut order = Vec::with_capacity(x.ncols());
    while remaining.len() > 1 {
        let sub = x.select(Axis(1), &remaining);
        let fit = train(sub.view(), y, config)?;
        let mut ranked: Vec<(f64, usize)> = fit
            .beta
            .iter()
            .zip(&remaining)
            .map(|(b, &j)| (b.abs(), j))
            .collect();
        ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let drop = ((rfe_step * remaining.len() as f64).ceil() as usize).clamp(1, remaining.len() - 1);
        let eliminated: Vec<usize> = ranked[..drop].iter().map(|r| r.1).collect();
        order.extend(&eliminated);
        remaining.retain(|j| !eliminated.contains(j));
    }
    order.extend(remaining);
    Ok(ImportanceReport {
        coef_magnitude: model.beta.iter().map(|b| b.abs()).collect(),
        odds_ratio: model.beta.iter().map(|b| b.exp()).collect(),
        rfe_order: order,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_problem(seed: u64, n: usize, f: usize) -> (Array2<f64>, Vec<bool>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Array2::from_shape_fn((n, f), |_| rng.gen_range(-2.0..2.0));
        let w: Vec<f64> = (0..f).map(|_| rng.gen_range(-1.5..1.5)).collect();
        let y = x
            .outer_iter()
            .map(|r| {
                let z: f64 = r.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() - 1.0;
                rng.gen::<f64>() < sigmoid(z)
            })
            .collect();
        (x, y)
    }

    #[test]
    fn separable_one_dimensional() {
        let x = array![[-1.0], [1.0]];
        let y = [false, true];
        let cfg = TrainConfig {
            lambda_l2: 0.1,
            ..Default::default()
        };
        let model = train(x.view(), &y, &cfg).unwrap();
        assert!(model.converged);
        assert!(model.beta[0] > 0.0);
        let p = model.predict_proba(x.view()).unwrap();
        assert!(p[1] > 0.5 && p[0] < 0.5);
    }

    #[test]
    fn balanced_weights() {
        assert_eq!(class_weights(&[true, false, true, false], ClassWeight::Balanced).unwrap(), (1.0, 1.0));
        assert_eq!(class_weights(&[true, false, false, false], ClassWeight::Balanced).unwrap(), (2.0, 4.0 / 6.0));
        assert!(matches!(class_weights(&[true, true], ClassWeight::None), Err(CafdError::SingleClass)));
    }

    #[test]
    fn rejects_non_finite() {
        let x = array![[1.0], [f64::NAN]];
        assert!(matches!(
            train(x.view(), &[true, false], &TrainConfig::default()),
            Err(CafdError::NonFinite { row: 1, col: 0 })
        ));
    }

    #[test]
    fn sigmoid_is_stable() {
        assert_eq!(sigmoid(0.0), 0.5);
        let hi = sigmoid(1000.0);
        let lo = sigmoid(-1000.0);
        assert!(hi <= 1.0 && hi.is_finite());
        assert!(lo >= 0.0 && lo.is_finite());
        assert!(sigmoid(-700.0) > 0.0 && sigmoid(-700.0) < 1.0);
        assert_eq!(softplus(1e4), 1e4);
        assert!(softplus(-1e4) >= 0.0);
    }

    #[test]
    fn zero_model_is_half() {
        let model = LrModel {
            beta: vec![0.0; 3],
            bias: 0.0,
            lambda_l2: 1.0,
            class_weights: (1.0, 1.0),
            converged: true,
            n_iters: 0,
            grad_norm: 0.0,
        };
        let x = array![[1.0, 2.0, 3.0], [-5.0, 0.0, 9.0]];
        assert_eq!(model.predict_proba(x.view()).unwrap(), vec![0.5, 0.5]);
        assert!(model.predict_proba(array![[1.0]].view()).is_err());
    }

    #[test]
    fn ranking_follows_positive_feature() {
        let model = LrModel {
            beta: vec![2.0],
            bias: -1.0,
            lambda_l2: 1.0,
            class_weights: (1.0, 1.0),
            converged: true,
            n_iters: 0,
            grad_norm: 0.0,
        };
        let x = array![[0.3], [5.0], [-2.0], [5.0], [400.0]];
        assert_eq!(model.rank(x.view()).unwrap().ids(), vec![4, 1, 3, 0, 2]);
    }

    #[test]
    fn solution_beats_perturbations() {
        let (x, y) = random_problem(21, 300, 4);
        let cfg = TrainConfig::default();
        let model = train(x.view(), &y, &cfg).unwrap();
        assert!(model.converged);
        let cw = class_weights(&y, cfg.class_weight).unwrap();
        let obj = Objective::new(x.view(), &y, None, cw, cfg.lambda_l2).unwrap();
        let mut theta = model.beta.clone();
        theta.push(model.bias);
        let best = obj.value(&theta);
        assert!(best <= obj.value(&vec![0.0; theta.len()]));
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..100 {
            let probe: Vec<f64> = theta.iter().map(|t| t + rng.gen_range(-0.05..0.05)).collect();
            assert!(best <= obj.value(&probe) + 1e-9);
        }
    }

    #[test]
    fn duplicated_row_equals_double_weight() {
        let (x, y) = random_problem(5, 60, 3);
        let cfg = TrainConfig {
            class_weight: ClassWeight::None,
            solver: Solver::Newton,
            tol: 1e-10,
            ..Default::default()
        };
        let mut xd = x.clone();
        xd.push_row(x.row(7)).unwrap();
        let mut yd = y.clone();
        yd.push(y[7]);
        let dup = train(xd.view(), &yd, &cfg).unwrap();
        let mut w = vec![1.0; 60];
        w[7] = 2.0;
        let weighted = train_weighted(x.view(), &y, Some(&w), &cfg).unwrap();
        for (a, b) in dup.beta.iter().zip(&weighted.beta) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn training_is_bitwise_deterministic() {
        let (x, y) = random_problem(13, 200, 5);
        let a = train(x.view(), &y, &TrainConfig::default()).unwrap();
        let b = train(x.view(), &y, &TrainConfig::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn importance_definitions() {
        let model = LrModel {
            beta: vec![2.0, -3.0, 0.5],
            bias: 0.0,
            lambda_l2: 1.0,
            class_weights: (1.0, 1.0),
            converged: true,
            n_iters: 0,
            grad_norm: 0.0,
        };
        let (x, y) = random_problem(2, 100, 3);
        let report = importance(&model, x.view(), &y, &TrainConfig::default(), 0.1).unwrap();
        assert_eq!(report.coef_magnitude, vec![2.0, 3.0, 0.5]);
        assert_eq!(report.odds_ratio, vec![2f64.exp(), (-3f64).exp(), 0.5f64.exp()]);
        let mut sorted = report.rfe_order.clone();
        sorted.sort();
        assert_eq!(sorted, vec![0, 1, 2]);
        assert!(importance(&model, x.view(), &y, &TrainConfig::default(), 0.7).is_err());
    }

    #[test]
    fn saved_model_reloads_exactly() {
        let (x, y) = random_problem(3, 80, 2);
        let model = train(x.view(), &y, &TrainConfig::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        model.save(dir.path(), "lr", "abc").unwrap();
        assert_eq!(LrModel::load(dir.path(), "lr", "abc").unwrap(), model);
        assert!(LrModel::load(dir.path(), "lr", "other").is_err());
    }
}
