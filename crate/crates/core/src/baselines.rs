//! Flat-feature comparators: logistic regression and a one-hidden-layer
//! tanh network, trained with the same mini-batch Adam loop as the GRU
//! models. The plain GRU classifier is [`ModelConfig::plain_gru`].
//!
//! [`ModelConfig::plain_gru`]: crate::model::ModelConfig::plain_gru

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::data::EncodedSet;
use crate::model::{ModelConfig, SofaNet};
use crate::nn::{
    linear_backward, linear_forward, sigmoid, softmax, softmax_cross_entropy_batch, AdamState,
    LinearGrads, NnError, ParamSet, TensorBuffer,
};
use crate::train::{train_local, EpochSampler, LocalHistory, TrainConfig, TrainError};

#[derive(Debug, Error, PartialEq)]
pub enum BaselineError {
    #[error("training labels contain a single class")]
    SingleClass,
    #[error("no training samples")]
    Empty,
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Train(#[from] TrainError),
}

/// Flattened window rows with binary labels.
#[derive(Debug, Clone, PartialEq)]
pub struct FlatData {
    pub x: Array2<f64>,
    pub y: Vec<u8>,
}

impl FlatData {
    pub fn new(x: Array2<f64>, y: Vec<u8>) -> Self {
        assert_eq!(x.nrows(), y.len(), "one label per row");
        Self { x, y }
    }

    /// `T · 2F` features per window, hour-major.
    pub fn from_set(set: &EncodedSet) -> Self {
        let d = set.steps * set.input_dim;
        let x =
            Array2::from_shape_vec((set.len(), d), set.inputs.clone()).expect("contiguous rows");
        Self::new(x, set.sepsis.clone())
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    fn rows(&self, idx: &[usize]) -> (Array2<f64>, Vec<u8>) {
        (
            self.x.select(Axis(0), idx),
            idx.iter().map(|&i| self.y[i]).collect(),
        )
    }

    fn check(&self) -> Result<(), BaselineError> {
        if self.is_empty() {
            return Err(BaselineError::Empty);
        }
        let pos = self.y.iter().filter(|&&l| l == 1).count();
        if pos == 0 || pos == self.len() {
            return Err(BaselineError::SingleClass);
        }
        Ok(())
    }
}

/// Logistic regression `p = σ(w·x + b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Logistic {
    pub params: ParamSet,
}

impl Logistic {
    pub fn zeros(dim: usize) -> Self {
        let mut params = ParamSet::new();
        params.push("lr.weight", TensorBuffer::zeros(&[dim]));
        params.push("lr.bias", TensorBuffer::zeros(&[1]));
        Self { params }
    }

    pub fn predict_proba(&self, x: ArrayView2<f64>) -> Vec<f64> {
        let w = self.params.get(0).view1();
        let b = self.params.get(1).values()[0];
        x.dot(&w).iter().map(|&s| sigmoid(s + b)).collect()
    }

    /// Mean binary cross-entropy and its gradient.
    pub fn loss_grad(&self, x: ArrayView2<f64>, y: &[u8]) -> (f64, ParamSet) {
        let w = self.params.get(0).view1();
        let b = self.params.get(1).values()[0];
        let n = y.len() as f64;
        let logits = x.dot(&w) + b;
        let mut loss = 0.0;
        let mut dlogit = Array1::zeros(y.len());
        for (i, (&s, &label)) in logits.iter().zip(y).enumerate() {
            let t = label as f64;
            // log(1 + e^s) − t·s, stable for either sign of s
            loss += s.max(0.0) + (-s.abs()).exp().ln_1p() - t * s;
            dlogit[i] = (sigmoid(s) - t) / n;
        }
        let mut grads = self.params.zeros_like();
        grads.get_mut(0).view1_mut().assign(&x.t().dot(&dlogit));
        grads.get_mut(1).values_mut()[0] = dlogit.sum();
        (loss / n, grads)
    }
}

/// One tanh hidden layer and a 2-class softmax output.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub params: ParamSet,
}

impl Mlp {
    pub fn init(dim: usize, hidden: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        for (name, out, fan) in [("nn.hidden", hidden, dim), ("nn.out", 2, hidden)] {
            let bound = (1.0 / fan as f64).sqrt();
            let w = (0..out * fan)
                .map(|_| rng.random_range(-bound..bound))
                .collect();
            params.push(
                format!("{name}.weight"),
                TensorBuffer::from_vec(&[out, fan], w).expect("shape"),
            );
            params.push(format!("{name}.bias"), TensorBuffer::zeros(&[out]));
        }
        Self { params }
    }

    fn hidden(&self, x: ArrayView2<f64>) -> Result<Array2<f64>, NnError> {
        let pre = linear_forward(x, self.params.get(0).view2(), self.params.get(1).view1())?;
        Ok(pre.mapv(f64::tanh))
    }

    pub fn logits(&self, x: ArrayView2<f64>) -> Result<Array2<f64>, NnError> {
        let h = self.hidden(x)?;
        linear_forward(
            h.view(),
            self.params.get(2).view2(),
            self.params.get(3).view1(),
        )
    }

    pub fn predict_proba(&self, x: ArrayView2<f64>) -> Result<Vec<f64>, NnError> {
        Ok(self
            .logits(x)?
            .rows()
            .into_iter()
            .map(|r| softmax(r)[1])
            .collect())
    }

    pub fn loss_grad(&self, x: ArrayView2<f64>, y: &[u8]) -> Result<(f64, ParamSet), NnError> {
        let h = self.hidden(x)?;
        let logits = linear_forward(
            h.view(),
            self.params.get(2).view2(),
            self.params.get(3).view1(),
        )?;
        let labels: Vec<usize> = y.iter().map(|&l| l as usize).collect();
        let (loss, dlogits) = softmax_cross_entropy_batch(logits.view(), &labels)?;
        let w2 = self.params.get(2).view2();
        let mut g2 = LinearGrads::zeros(w2.nrows(), w2.ncols());
        let dh = linear_backward(h.view(), w2, dlogits.view(), &mut g2)?;
        let dpre = dh * h.mapv(|v| 1.0 - v * v);
        let w1 = self.params.get(0).view2();
        let mut g1 = LinearGrads::zeros(w1.nrows(), w1.ncols());
        linear_backward(x, w1, dpre.view(), &mut g1)?;
        let mut grads = self.params.zeros_like();
        grads.get_mut(0).view2_mut().assign(&g1.w);
        grads.get_mut(1).view1_mut().assign(&g1.b);
        grads.get_mut(2).view2_mut().assign(&g2.w);
        grads.get_mut(3).view1_mut().assign(&g2.b);
        Ok((loss, grads))
    }
}

fn adam_loop(
    data: &FlatData,
    cfg: &TrainConfig,
    params: &mut ParamSet,
    mut step: impl FnMut(&ParamSet, ArrayView2<f64>, &[u8]) -> Result<(f64, ParamSet), NnError>,
) -> Result<LocalHistory, BaselineError> {
    cfg.validate()?;
    data.check()?;
    let mut sampler = EpochSampler::new(data.len(), cfg.batch_size, cfg.batch_seed(0));
    let mut adam = AdamState::new(params.len(), cfg.adam());
    let mut history = LocalHistory::default();
    for _ in 0..cfg.rounds {
        let (x, y) = data.rows(sampler.next_batch());
        let (loss, grads) = step(params, x.view(), &y)?;
        adam.step(params, &grads.flatten())?;
        history.losses.push(loss);
    }
    Ok(history)
}

pub fn train_lr(
    data: &FlatData,
    cfg: &TrainConfig,
) -> Result<(Logistic, LocalHistory), BaselineError> {
    let mut model = Logistic::zeros(data.x.ncols());
    let history = adam_loop(data, cfg, &mut model.params, |p, x, y| {
        Ok(Logistic { params: p.clone() }.loss_grad(x, y))
    })?;
    Ok((model, history))
}

pub fn train_nn(
    data: &FlatData,
    cfg: &TrainConfig,
    hidden: usize,
) -> Result<(Mlp, LocalHistory), BaselineError> {
    let mut model = Mlp::init(data.x.ncols(), hidden, cfg.seed);
    let history = adam_loop(data, cfg, &mut model.params, |p, x, y| {
        Mlp { params: p.clone() }.loss_grad(x, y)
    })?;
    Ok((model, history))
}

/// Single GRU of width `4·hidden_dim` with the sepsis head only.
pub fn train_gru(
    set: &EncodedSet,
    cfg: &TrainConfig,
    model: ModelConfig,
) -> Result<(SofaNet, ParamSet, LocalHistory), BaselineError> {
    let net = SofaNet::new(model.plain_gru()).map_err(TrainError::from)?;
    let (params, history) = train_local(&net, cfg, set)?;
    Ok((net, params, history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::compare_gradient;
    use ndarray::Array2;

    /// Points at least 0.1 from the separating line `x₀ + x₁/2 = 0.1`.
    fn toy(n: usize, d: usize, seed: u64) -> FlatData {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows = Vec::new();
        let mut y = Vec::new();
        while y.len() < n {
            let r: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
            let s = r[0] + 0.5 * r[1] - 0.1;
            if s.abs() >= 0.1 {
                y.push((s > 0.0) as u8);
                rows.extend(r);
            }
        }
        FlatData::new(Array2::from_shape_vec((n, d), rows).unwrap(), y)
    }

    #[test]
    fn zero_logistic_predicts_half() {
        let m = Logistic::zeros(3);
        let x = Array2::from_shape_fn((4, 3), |(i, j)| (i * j) as f64 - 2.0);
        assert!(m.predict_proba(x.view()).iter().all(|&p| p == 0.5));
    }

    #[test]
    fn logistic_separates_toy_set() {
        let data = toy(200, 2, 1);
        let cfg = TrainConfig {
            rounds: 200,
            lr: 0.1,
            ..TrainConfig::default()
        };
        let (m, _) = train_lr(&data, &cfg).unwrap();
        let p = m.predict_proba(data.x.view());
        let acc = p
            .iter()
            .zip(&data.y)
            .filter(|(p, &y)| (**p > 0.5) == (y == 1))
            .count();
        assert_eq!(acc, data.len());
    }

    #[test]
    fn mlp_separates_toy_set() {
        let data = toy(200, 2, 2);
        let cfg = TrainConfig {
            rounds: 200,
            lr: 0.05,
            ..TrainConfig::default()
        };
        let (m, _) = train_nn(&data, &cfg, 8).unwrap();
        let p = m.predict_proba(data.x.view()).unwrap();
        let acc = p
            .iter()
            .zip(&data.y)
            .filter(|(p, &y)| (**p > 0.5) == (y == 1))
            .count();
        assert_eq!(acc, data.len());
    }

    #[test]
    fn zero_mlp_predicts_half() {
        let mut m = Mlp::init(3, 4, 0);
        m.params.for_each_value_mut(|_, v| *v = 0.0);
        let x = Array2::from_elem((2, 3), 1.7);
        assert!(m.predict_proba(x.view()).unwrap().iter().all(|&p| p == 0.5));
    }

    #[test]
    fn logistic_finite_difference() {
        for seed in 0..5 {
            let data = toy(6, 4, seed);
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 10);
            let mut m = Logistic::zeros(4);
            m.params
                .for_each_value_mut(|_, v| *v = rng.random_range(-1.0..1.0));
            let (_, g) = m.loss_grad(data.x.view(), &data.y);
            let mut theta = m.params.flatten();
            let r = compare_gradient(
                |th| {
                    let p = ParamSet::unflatten(&m.params, th).unwrap();
                    Logistic { params: p }.loss_grad(data.x.view(), &data.y).0
                },
                &mut theta,
                &g.flatten(),
                1e-6,
            );
            assert!(r.worst_rel < 1e-6 && r.worst_abs < 1e-9, "{r:?}");
        }
    }

    #[test]
    fn mlp_finite_difference() {
        for seed in 0..5 {
            let data = toy(5, 3, seed);
            let m = Mlp::init(3, 4, seed);
            let (_, g) = m.loss_grad(data.x.view(), &data.y).unwrap();
            let mut theta = m.params.flatten();
            let r = compare_gradient(
                |th| {
                    let p = ParamSet::unflatten(&m.params, th).unwrap();
                    Mlp { params: p }
                        .loss_grad(data.x.view(), &data.y)
                        .unwrap()
                        .0
                },
                &mut theta,
                &g.flatten(),
                1e-6,
            );
            assert!(r.worst_rel < 1e-6 && r.worst_abs < 1e-9, "{r:?}");
        }
    }

    #[test]
    fn single_class_rejected() {
        let x = Array2::zeros((3, 2));
        let data = FlatData::new(x, vec![1, 1, 1]);
        assert_eq!(
            train_lr(&data, &TrainConfig::default()).unwrap_err(),
            BaselineError::SingleClass
        );
        assert_eq!(
            train_nn(&data, &TrainConfig::default(), 4).unwrap_err(),
            BaselineError::SingleClass
        );
    }
}
