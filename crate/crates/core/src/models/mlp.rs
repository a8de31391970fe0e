//! Multilayer perceptron with rectifier hidden layers and sigmoid outputs,
//! trained with Adam on weighted binary cross-entropy.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_shapes, ModelError};
use crate::evaluate::{confusion, macro_scores};
use crate::sparse::SparseMatrix;

pub const PROB_EPSILON: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MlpConfig {
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    /// Beta of the validation macro f-score used for early stopping.
    pub early_stopping_beta: f64,
}

impl Default for MlpConfig {
    fn default() -> Self {
        Self {
            hidden: vec![512],
            learning_rate: 1e-3,
            batch_size: 256,
            max_epochs: 100,
            patience: 5,
            early_stopping_beta: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn new(lr: f64) -> Self {
        Self { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// First and second moment estimates of one parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        Self { m: vec![0.0; len], v: vec![0.0; len] }
    }
}

/// One bias-corrected Adam update at step `t` (1-based).
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamState, t: u64, cfg: &AdamConfig) {
    assert!(t >= 1, "adam step counter starts at 1");
    let c1 = 1.0 - cfg.beta1.powi(t as i32);
    let c2 = 1.0 - cfg.beta2.powi(t as i32);
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
        state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
        let m_hat = state.m[i] / c1;
        let v_hat = state.v[i] / c2;
        params[i] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
    }
}

/// `-sum_l [w_l y_l ln p_l + (1 - y_l) ln(1 - p_l)]` with `p` clamped to `[eps, 1 - eps]`.
pub fn weighted_bce_loss(p: &[f64], y: &[bool], w: &[f64]) -> f64 {
    let mut loss = 0.0;
    for l in 0..p.len() {
        let q = p[l].clamp(PROB_EPSILON, 1.0 - PROB_EPSILON);
        loss -= if y[l] { w[l] * q.ln() } else { (1.0 - q).ln() };
    }
    loss
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    /// `[input, hidden..., outputs]`.
    pub dims: Vec<usize>,
    /// Layer `k` weights, row-major `dims[k] x dims[k + 1]`.
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl Gradients {
    fn zeros(m: &Mlp) -> Self {
        Self {
            weights: m.weights.iter().map(|w| vec![0.0; w.len()]).collect(),
            biases: m.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
        }
    }
}

impl Mlp {
    /// Weights uniform in `±1/sqrt(fan_in)`, biases zero.
    pub fn init(dims: &[usize], seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::init_with(dims, &mut rng)
    }

    fn init_with(dims: &[usize], rng: &mut ChaCha8Rng) -> Self {
        assert!(dims.len() >= 2, "need at least input and output layers");
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for k in 0..dims.len() - 1 {
            let fan = (dims[k] + dims[k + 1]).max(1) as f64;
            let gain = if k + 2 == dims.len() { 2.0 } else { 6.0 };
            let bound = (gain / fan).sqrt();
            weights.push((0..dims[k] * dims[k + 1]).map(|_| rng.gen_range(-bound..bound)).collect());
            biases.push(vec![0.0; dims[k + 1]]);
        }
        Self { dims: dims.to_vec(), weights, biases }
    }

    pub fn zeros(dims: &[usize]) -> Self {
        Self {
            dims: dims.to_vec(),
            weights: (0..dims.len() - 1).map(|k| vec![0.0; dims[k] * dims[k + 1]]).collect(),
            biases: (1..dims.len()).map(|k| vec![0.0; dims[k]]).collect(),
        }
    }

    pub fn n_features(&self) -> usize {
        self.dims[0]
    }

    pub fn n_labels(&self) -> usize {
        *self.dims.last().unwrap()
    }

    /// Activations of every layer after the input; the last is the sigmoid output.
    fn forward(&self, idx: &[u32], val: &[f64]) -> Vec<Vec<f64>> {
        let layers = self.weights.len();
        let mut acts: Vec<Vec<f64>> = Vec::with_capacity(layers);
        for k in 0..layers {
            let out = self.dims[k + 1];
            let w = &self.weights[k];
            let mut z = self.biases[k].clone();
            if k == 0 {
                for (c, v) in idx.iter().zip(val) {
                    let row = &w[*c as usize * out..(*c as usize + 1) * out];
                    for (zj, wj) in z.iter_mut().zip(row) {
                        *zj += v * wj;
                    }
                }
            } else {
                for (i, a) in acts[k - 1].iter().enumerate() {
                    if *a != 0.0 {
                        let row = &w[i * out..(i + 1) * out];
                        for (zj, wj) in z.iter_mut().zip(row) {
                            *zj += a * wj;
                        }
                    }
                }
            }
            if k + 1 == layers {
                z.iter_mut().for_each(|v| *v = sigmoid(*v));
            } else {
                z.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            acts.push(z);
        }
        acts
    }

    pub fn proba_row(&self, idx: &[u32], val: &[f64]) -> Vec<f64> {
        self.forward(idx, val).pop().unwrap()
    }

    pub fn predict_proba(&self, x: &SparseMatrix) -> Result<Vec<Vec<f64>>, ModelError> {
        super::check_dims(self.n_features(), x)?;
        Ok((0..x.rows())
            .map(|r| {
                let (i, v) = x.row(r);
                self.proba_row(i, v)
            })
            .collect())
    }

    fn accumulate(&self, idx: &[u32], val: &[f64], y: &[bool], w: &[f64], g: &mut Gradients) -> f64 {
        let acts = self.forward(idx, val);
        let layers = self.weights.len();
        let p = &acts[layers - 1];
        let loss = weighted_bce_loss(p, y, w);
        // derivative of the loss with respect to the output pre-activations
        let mut delta: Vec<f64> = (0..p.len())
            .map(|l| {
                let yl = if y[l] { 1.0 } else { 0.0 };
                p[l] * (w[l] * yl + 1.0 - yl) - w[l] * yl
            })
            .collect();
        for k in (0..layers).rev() {
            let out = self.dims[k + 1];
            for (gb, d) in g.biases[k].iter_mut().zip(&delta) {
                *gb += d;
            }
            if k == 0 {
                for (c, v) in idx.iter().zip(val) {
                    let row = &mut g.weights[0][*c as usize * out..(*c as usize + 1) * out];
                    for (gw, d) in row.iter_mut().zip(&delta) {
                        *gw += v * d;
                    }
                }
            } else {
                let prev = &acts[k - 1];
                let w_k = &self.weights[k];
                let mut next = vec![0.0; self.dims[k]];
                for (i, a) in prev.iter().enumerate() {
                    let row = &mut g.weights[k][i * out..(i + 1) * out];
                    if *a > 0.0 {
                        let mut back = 0.0;
                        for ((gw, d), wij) in row.iter_mut().zip(&delta).zip(&w_k[i * out..(i + 1) * out]) {
                            *gw += a * d;
                            back += wij * d;
                        }
                        next[i] = back;
                    }
                }
                delta = next;
            }
        }
        loss
    }

    /// Mean weighted cross-entropy over `rows` and its gradients.
    pub fn loss_and_gradients(&self, x: &SparseMatrix, y: &[Vec<bool>], w: &[f64], rows: &[usize]) -> (f64, Gradients) {
        let mut g = Gradients::zeros(self);
        let mut loss = 0.0;
        for &r in rows {
            let (i, v) = x.row(r);
            loss += self.accumulate(i, v, &y[r], w, &mut g);
        }
        let scale = 1.0 / rows.len().max(1) as f64;
        for t in g.weights.iter_mut().chain(g.biases.iter_mut()) {
            t.iter_mut().for_each(|v| *v *= scale);
        }
        (loss * scale, g)
    }

    pub fn mean_loss(&self, x: &SparseMatrix, y: &[Vec<bool>], w: &[f64]) -> f64 {
        let total: f64 = (0..x.rows())
            .map(|r| {
                let (i, v) = x.row(r);
                weighted_bce_loss(&self.proba_row(i, v), &y[r], w)
            })
            .sum();
        total / x.rows().max(1) as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub validation_score: Option<f64>,
    pub validation_loss: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct MlpTraining {
    pub model: Mlp,
    pub best_epoch: usize,
    pub history: Vec<EpochLog>,
}

fn validation_score(m: &Mlp, x: &SparseMatrix, y: &[Vec<bool>], threshold: f64, beta: f64) -> Result<f64, ModelError> {
    let pred: Vec<Vec<bool>> =
        m.predict_proba(x)?.into_iter().map(|r| r.iter().map(|p| *p >= threshold).collect()).collect();
    let counts = confusion(y, &pred).map_err(|e| ModelError::InvalidConfig(e.to_string()))?;
    Ok(macro_scores(&counts, beta).1)
}

/// Mini-batch training with early stopping on the validation macro f-score,
/// ties broken by validation loss.
/// Without validation rows the model from the last epoch is returned.
#[allow(clippy::too_many_arguments)]
pub fn train_mlp(
    x: &SparseMatrix,
    y: &[Vec<bool>],
    validation: Option<(&SparseMatrix, &[Vec<bool>])>,
    w: &[f64],
    cfg: &MlpConfig,
    threshold: f64,
    seed: u64,
) -> Result<MlpTraining, ModelError> {
    check_shapes(x, y, w)?;
    if cfg.batch_size == 0 || cfg.hidden.contains(&0) {
        return Err(ModelError::InvalidConfig("batch size and hidden sizes must be positive".into()));
    }
    let validation = validation.filter(|(vx, _)| vx.rows() > 0);
    if let Some((vx, vy)) = validation {
        check_shapes(vx, vy, w)?;
        super::check_dims(x.cols(), vx)?;
    }
    let mut dims = vec![x.cols()];
    dims.extend(&cfg.hidden);
    dims.push(w.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = Mlp::init_with(&dims, &mut rng);
    let adam = AdamConfig::new(cfg.learning_rate);
    let mut w_state: Vec<AdamState> = model.weights.iter().map(|t| AdamState::new(t.len())).collect();
    let mut b_state: Vec<AdamState> = model.biases.iter().map(|t| AdamState::new(t.len())).collect();
    let mut step = 0u64;
    let mut order: Vec<usize> = (0..x.rows()).collect();
    let mut best = ((f64::NEG_INFINITY, f64::INFINITY), model.clone(), 0usize);
    let mut waited = 0;
    let mut history = Vec::new();

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            let (loss, g) = model.loss_and_gradients(x, y, w, batch);
            if !loss.is_finite() {
                return Err(ModelError::NonFiniteLoss { epoch, batch: b, loss });
            }
            epoch_loss += loss * batch.len() as f64;
            step += 1;
            for k in 0..model.weights.len() {
                adam_step(&mut model.weights[k], &g.weights[k], &mut w_state[k], step, &adam);
                adam_step(&mut model.biases[k], &g.biases[k], &mut b_state[k], step, &adam);
            }
        }
        let train_loss = epoch_loss / x.rows().max(1) as f64;
        let score = match validation {
            Some((vx, vy)) => Some((
                validation_score(&model, vx, vy, threshold, cfg.early_stopping_beta)?,
                model.mean_loss(vx, vy, w),
            )),
            None => None,
        };
        history.push(EpochLog {
            epoch,
            train_loss,
            validation_score: score.map(|s| s.0),
            validation_loss: score.map(|s| s.1),
        });
        match score {
            // equal scores fall back to the validation loss
            Some(s) if s.0 > best.0 .0 || (s.0 == best.0 .0 && s.1 < best.0 .1) => {
                best = (s, model.clone(), epoch);
                waited = 0;
            }
            Some(_) => {
                waited += 1;
                if waited >= cfg.patience.max(1) {
                    break;
                }
            }
            None => best = (best.0, model.clone(), epoch),
        }
    }
    Ok(MlpTraining { model: best.1, best_epoch: best.2, history })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn loss_examples() {
        assert!(weighted_bce_loss(&[1.0], &[true], &[1.0]) < 1e-6);
        assert_abs_diff_eq!(weighted_bce_loss(&[0.5], &[true], &[1.0]), 2f64.ln(), epsilon = 1e-12);
        let one = weighted_bce_loss(&[0.3], &[true], &[1.0]);
        assert_abs_diff_eq!(weighted_bce_loss(&[0.3], &[true], &[2.0]), 2.0 * one, epsilon = 1e-12);
        assert!(weighted_bce_loss(&[0.0], &[true], &[1.0]).is_finite());
    }

    #[test]
    fn adam_examples() {
        let cfg = AdamConfig::new(0.001);
        let mut p = vec![1.0];
        let mut s = AdamState::new(1);
        adam_step(&mut p, &[0.0], &mut s, 1, &cfg);
        assert_eq!(p, vec![1.0]);

        let mut p = vec![0.0];
        let mut s = AdamState::new(1);
        adam_step(&mut p, &[1.0], &mut s, 1, &cfg);
        assert_abs_diff_eq!(p[0], -0.001, epsilon = 1e-10);

        let mut p = vec![0.0];
        let mut s = AdamState::new(1);
        let mut last = 0.0;
        for t in 1..=2000 {
            let before = p[0];
            adam_step(&mut p, &[-3.0], &mut s, t, &cfg);
            last = p[0] - before;
        }
        assert_abs_diff_eq!(last, 0.001, epsilon = 1e-8);
    }

    #[test]
    fn zero_network_outputs_half() {
        let m = Mlp::zeros(&[3, 4, 2]);
        let x = SparseMatrix::from_dense(3, &[vec![1.0, 2.0, 3.0]]);
        assert_eq!(m.predict_proba(&x).unwrap(), vec![vec![0.5, 0.5]]);
    }

    #[test]
    fn zero_epochs_returns_initialization() {
        let x = SparseMatrix::from_dense(2, &[vec![1.0, 0.0], vec![0.0, 1.0]]);
        let y = vec![vec![true], vec![false]];
        let cfg = MlpConfig { hidden: vec![3], max_epochs: 0, ..Default::default() };
        let t = train_mlp(&x, &y, None, &[1.0], &cfg, 0.5, 11).unwrap();
        assert_eq!(t.model, Mlp::init(&[2, 3, 1], 11));
        assert!(t.history.is_empty());
    }

    #[test]
    fn learns_separable_toy_set() {
        let dense: Vec<Vec<f64>> = (0..40)
            .map(|i| if i % 2 == 0 { vec![1.0, 0.1 * (i % 5) as f64] } else { vec![0.1 * (i % 3) as f64, 1.0] })
            .collect();
        let y: Vec<Vec<bool>> = (0..40).map(|i| vec![i % 2 == 0, i % 2 == 1]).collect();
        let x = SparseMatrix::from_dense(2, &dense);
        let cfg = MlpConfig {
            hidden: vec![8],
            batch_size: 8,
            max_epochs: 200,
            learning_rate: 0.01,
            patience: 200,
            ..Default::default()
        };
        let t = train_mlp(&x, &y, Some((&x, &y)), &[1.0, 1.0], &cfg, 0.5, 1).unwrap();
        assert_eq!(validation_score(&t.model, &x, &y, 0.5, 1.0).unwrap(), 1.0);
    }
}
