//! Multi-channel GRU network with SOFA auxiliary heads.
//!
//! Every channel reads the same `T × 2F` input (original plus differential
//! features). Channel `i`'s last hidden state feeds SOFA head `i` (5 classes);
//! the concatenation `z` of all last hidden states feeds the 2-class sepsis
//! head. The local loss is `CE_sepsis + α · Σᵢ CE_sofaᵢ`, averaged over the
//! batch.
//!
//! With `multi_channel = false` a single GRU of width `4H` replaces the four
//! channels and all heads read its last state. Disabling `sofa_heads` as well
//! yields the plain GRU classifier.

use ndarray::{concatenate, s, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::EncodedSet;
use crate::nn::{
    gru_backward, gru_forward_seq, linear_backward, linear_forward, softmax,
    softmax_cross_entropy_batch, GruCache, GruGrads, GruWeights, LinearGrads, NnError, ParamSet,
    TensorBuffer,
};

/// Coagulation, liver, cardiovascular, renal.
pub const SOFA_SYSTEMS: usize = 4;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    Config(String),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("parameter manifest does not match the model")]
    Manifest,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Raw feature count `F`; the network input is `2F` wide.
    pub n_features: usize,
    pub hidden_dim: usize,
    pub n_channels: usize,
    pub n_sofa_classes: usize,
    pub alpha: f64,
    pub multi_channel: bool,
    pub sofa_heads: bool,
}

impl ModelConfig {
    pub fn new(n_features: usize) -> Self {
        Self {
            n_features,
            hidden_dim: 32,
            n_channels: SOFA_SYSTEMS,
            n_sofa_classes: 5,
            alpha: 0.5,
            multi_channel: true,
            sofa_heads: true,
        }
    }

    /// Single shared GRU of width `n_channels · hidden_dim`, all heads kept.
    pub fn without_multi_channel(self) -> Self {
        Self {
            multi_channel: false,
            ..self
        }
    }

    /// Single GRU with the sepsis head only.
    pub fn plain_gru(self) -> Self {
        Self {
            multi_channel: false,
            sofa_heads: false,
            ..self
        }
    }

    pub fn input_dim(&self) -> usize {
        2 * self.n_features
    }

    pub fn z_dim(&self) -> usize {
        self.n_channels * self.hidden_dim
    }

    fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::Config(m.into()));
        if self.n_features == 0 || self.hidden_dim == 0 || self.n_channels == 0 {
            return bad("feature, hidden and channel counts must be positive");
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return bad("alpha must be non-negative");
        }
        if self.sofa_heads && self.n_sofa_classes < 5 {
            return bad("SOFA heads need 5 classes");
        }
        if self.multi_channel && self.sofa_heads && self.n_channels != SOFA_SYSTEMS {
            return bad("multi-channel SOFA supervision needs one channel per system");
        }
        Ok(())
    }

    /// Scalar parameter count implied by the architecture.
    pub fn param_count(&self) -> usize {
        let d = self.input_dim();
        let gru = |h: usize| 3 * (h * d + h * h + h);
        let (grus, head_in) = if self.multi_channel {
            (self.n_channels * gru(self.hidden_dim), self.hidden_dim)
        } else {
            (gru(self.z_dim()), self.z_dim())
        };
        let sofa = if self.sofa_heads {
            SOFA_SYSTEMS * (self.n_sofa_classes * head_in + self.n_sofa_classes)
        } else {
            0
        };
        grus + sofa + 2 * self.z_dim() + 2
    }
}

#[derive(Debug, Clone, Copy)]
struct GruSlots {
    w_input: usize,
    w_hidden: usize,
    bias: usize,
}

#[derive(Debug, Clone, Copy)]
struct LinearSlots {
    weight: usize,
    bias: usize,
}

/// A training batch: per-step input matrices plus labels.
#[derive(Debug, Clone)]
pub struct Batch {
    pub inputs: Vec<Array2<f64>>,
    pub sepsis: Vec<u8>,
    pub sofa: Vec<[u8; 4]>,
}

impl Batch {
    pub fn from_set(set: &EncodedSet, rows: &[usize]) -> Self {
        Self {
            inputs: set.gather(rows),
            sepsis: rows.iter().map(|&i| set.sepsis[i]).collect(),
            sofa: rows.iter().map(|&i| set.sofa[i]).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.sepsis.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sepsis.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct Forward {
    /// One `n × 5` matrix per SOFA system (empty without SOFA heads).
    pub sofa_logits: Vec<Array2<f64>>,
    pub sepsis_logits: Array2<f64>,
    /// `n × z_dim` hidden representation.
    pub z: Array2<f64>,
    caches: Vec<GruCache>,
}

#[derive(Debug, Clone)]
pub struct LocalLoss {
    pub total: f64,
    pub sepsis: f64,
    pub sofa: Vec<f64>,
    pub d_sepsis: Array2<f64>,
    /// Already scaled by α.
    pub d_sofa: Vec<Array2<f64>>,
}

#[derive(Debug, Clone)]
pub struct SofaNet {
    config: ModelConfig,
    grus: Vec<GruSlots>,
    sofa: Vec<LinearSlots>,
    sepsis: LinearSlots,
    template: ParamSet,
}

impl SofaNet {
    pub fn new(config: ModelConfig) -> Result<Self, ModelError> {
        config.validate()?;
        let mut template = ParamSet::new();
        let d = config.input_dim();
        let mut grus = Vec::new();
        let (n_grus, gru_h) = if config.multi_channel {
            (config.n_channels, config.hidden_dim)
        } else {
            (1, config.z_dim())
        };
        for c in 0..n_grus {
            let prefix = if config.multi_channel {
                format!("gru{c}")
            } else {
                "gru".to_string()
            };
            grus.push(GruSlots {
                w_input: template.push(
                    format!("{prefix}.w_input"),
                    TensorBuffer::zeros(&[3 * gru_h, d]),
                ),
                w_hidden: template.push(
                    format!("{prefix}.w_hidden"),
                    TensorBuffer::zeros(&[3 * gru_h, gru_h]),
                ),
                bias: template.push(format!("{prefix}.bias"), TensorBuffer::zeros(&[3 * gru_h])),
            });
        }
        let mut sofa = Vec::new();
        if config.sofa_heads {
            let head_in = if config.multi_channel {
                config.hidden_dim
            } else {
                config.z_dim()
            };
            for i in 0..SOFA_SYSTEMS {
                sofa.push(LinearSlots {
                    weight: template.push(
                        format!("sofa{i}.weight"),
                        TensorBuffer::zeros(&[config.n_sofa_classes, head_in]),
                    ),
                    bias: template.push(
                        format!("sofa{i}.bias"),
                        TensorBuffer::zeros(&[config.n_sofa_classes]),
                    ),
                });
            }
        }
        let sepsis = LinearSlots {
            weight: template.push("sepsis.weight", TensorBuffer::zeros(&[2, config.z_dim()])),
            bias: template.push("sepsis.bias", TensorBuffer::zeros(&[2])),
        };
        Ok(Self {
            config,
            grus,
            sofa,
            sepsis,
            template,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    /// All-zero parameters with the model's manifest.
    pub fn zero_params(&self) -> ParamSet {
        self.template.clone()
    }

    /// Uniform `±√(1/fan)` weights (fan = hidden width for GRUs, input width
    /// for heads), zero biases.
    pub fn init_params(&self, seed: u64) -> ParamSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = self.template.clone();
        for g in &self.grus {
            let h = p.get(g.w_hidden).shape()[1];
            let bound = (1.0 / h as f64).sqrt();
            for slot in [g.w_input, g.w_hidden] {
                for v in p.get_mut(slot).values_mut() {
                    *v = rng.random_range(-bound..bound);
                }
            }
        }
        for l in self.sofa.iter().chain(std::iter::once(&self.sepsis)) {
            let fan = p.get(l.weight).shape()[1];
            let bound = (1.0 / fan as f64).sqrt();
            for v in p.get_mut(l.weight).values_mut() {
                *v = rng.random_range(-bound..bound);
            }
        }
        p
    }

    fn check_params(&self, params: &ParamSet) -> Result<(), ModelError> {
        if params.same_manifest(&self.template) {
            Ok(())
        } else {
            Err(ModelError::Manifest)
        }
    }

    fn gru_weights<'a>(&self, params: &'a ParamSet, g: GruSlots) -> GruWeights<'a> {
        GruWeights {
            w_input: params.get(g.w_input).view2(),
            w_hidden: params.get(g.w_hidden).view2(),
            bias: params.get(g.bias).view1(),
        }
    }

    fn head_input<'a>(&self, fwd_z: &'a Array2<f64>, i: usize) -> ArrayView2<'a, f64> {
        if self.config.multi_channel {
            let h = self.config.hidden_dim;
            fwd_z.slice(s![.., i * h..(i + 1) * h])
        } else {
            fwd_z.view()
        }
    }

    pub fn forward(
        &self,
        params: &ParamSet,
        inputs: &[Array2<f64>],
    ) -> Result<Forward, ModelError> {
        self.check_params(params)?;
        if inputs.iter().any(|x| x.ncols() != self.config.input_dim()) {
            return Err(NnError::ShapeMismatch(format!(
                "inputs must be {} wide",
                self.config.input_dim()
            ))
            .into());
        }
        let caches = self
            .grus
            .iter()
            .map(|&g| gru_forward_seq(inputs, None, &self.gru_weights(params, g)))
            .collect::<Result<Vec<_>, _>>()?;
        let lasts: Vec<ArrayView2<f64>> = caches.iter().map(|c| c.last_hidden().view()).collect();
        let z = concatenate(Axis(1), &lasts).map_err(|e| NnError::ShapeMismatch(e.to_string()))?;
        let sofa_logits = self
            .sofa
            .iter()
            .enumerate()
            .map(|(i, l)| {
                linear_forward(
                    self.head_input(&z, i),
                    params.get(l.weight).view2(),
                    params.get(l.bias).view1(),
                )
            })
            .collect::<Result<Vec<_>, _>>()?;
        let sepsis_logits = linear_forward(
            z.view(),
            params.get(self.sepsis.weight).view2(),
            params.get(self.sepsis.bias).view1(),
        )?;
        Ok(Forward {
            sofa_logits,
            sepsis_logits,
            z,
            caches,
        })
    }

    pub fn local_loss(
        &self,
        fwd: &Forward,
        sepsis: &[u8],
        sofa: &[[u8; 4]],
    ) -> Result<LocalLoss, ModelError> {
        let labels: Vec<usize> = sepsis.iter().map(|&l| l as usize).collect();
        let (sepsis_loss, d_sepsis) =
            softmax_cross_entropy_batch(fwd.sepsis_logits.view(), &labels)?;
        let alpha = self.config.alpha;
        let mut total = sepsis_loss;
        let mut sofa_losses = Vec::new();
        let mut d_sofa = Vec::new();
        for (i, logits) in fwd.sofa_logits.iter().enumerate() {
            let labels: Vec<usize> = sofa.iter().map(|s| s[i] as usize).collect();
            let (l, mut g) = softmax_cross_entropy_batch(logits.view(), &labels)?;
            total += alpha * l;
            g *= alpha;
            sofa_losses.push(l);
            d_sofa.push(g);
        }
        Ok(LocalLoss {
            total,
            sepsis: sepsis_loss,
            sofa: sofa_losses,
            d_sepsis,
            d_sofa,
        })
    }

    /// Gradients of the local loss (plus an optional extra gradient on `z`,
    /// e.g. from an alignment term) with respect to every parameter.
    pub fn backward(
        &self,
        params: &ParamSet,
        inputs: &[Array2<f64>],
        fwd: &Forward,
        loss: &LocalLoss,
        dz_extra: Option<ArrayView2<f64>>,
    ) -> Result<ParamSet, ModelError> {
        self.check_params(params)?;
        let mut grads = self.template.clone();
        let mut lg = LinearGrads::zeros(2, self.config.z_dim());
        let mut dz = linear_backward(
            fwd.z.view(),
            params.get(self.sepsis.weight).view2(),
            loss.d_sepsis.view(),
            &mut lg,
        )?;
        write_linear(&mut grads, self.sepsis, lg);
        if let Some(extra) = dz_extra {
            if extra.dim() != dz.dim() {
                return Err(NnError::ShapeMismatch("extra z gradient".into()).into());
            }
            dz += &extra;
        }
        for (i, (l, d_logits)) in self.sofa.iter().zip(&loss.d_sofa).enumerate() {
            let w = params.get(l.weight).view2();
            let mut g = LinearGrads::zeros(w.nrows(), w.ncols());
            let x = self.head_input(&fwd.z, i);
            let dx = linear_backward(x, w, d_logits.view(), &mut g)?;
            write_linear(&mut grads, *l, g);
            if self.config.multi_channel {
                let h = self.config.hidden_dim;
                let mut block = dz.slice_mut(s![.., i * h..(i + 1) * h]);
                block += &dx;
            } else {
                dz += &dx;
            }
        }
        let t_len = inputs.len();
        for (c, (&g, cache)) in self.grus.iter().zip(&fwd.caches).enumerate() {
            let w = self.gru_weights(params, g);
            let dh_last = if self.config.multi_channel {
                let h = self.config.hidden_dim;
                dz.slice(s![.., c * h..(c + 1) * h]).to_owned()
            } else {
                dz.clone()
            };
            let mut dh = vec![None; t_len];
            dh[t_len - 1] = Some(dh_last);
            let mut gg = GruGrads::zeros(w.hidden(), w.input());
            gru_backward(cache, inputs, &dh, &w, &mut gg, false)?;
            grads.get_mut(g.w_input).view2_mut().assign(&gg.w_input);
            grads.get_mut(g.w_hidden).view2_mut().assign(&gg.w_hidden);
            grads.get_mut(g.bias).view1_mut().assign(&gg.bias);
        }
        Ok(grads)
    }

    /// Positive-class probability for each row of a batch.
    pub fn predict_proba(
        &self,
        params: &ParamSet,
        inputs: &[Array2<f64>],
    ) -> Result<Vec<f64>, ModelError> {
        let fwd = self.forward(params, inputs)?;
        Ok(fwd
            .sepsis_logits
            .rows()
            .into_iter()
            .map(|r| softmax(r)[1])
            .collect())
    }

    /// Scores every sample of an encoded set in chunks of `chunk`.
    pub fn score_set(
        &self,
        params: &ParamSet,
        set: &EncodedSet,
        chunk: usize,
    ) -> Result<Vec<f64>, ModelError> {
        let mut out = Vec::with_capacity(set.len());
        let rows: Vec<usize> = (0..set.len()).collect();
        for part in rows.chunks(chunk.max(1)) {
            out.extend(self.predict_proba(params, &set.gather(part))?);
        }
        Ok(out)
    }

    /// Hidden representations for a batch.
    pub fn hidden(
        &self,
        params: &ParamSet,
        inputs: &[Array2<f64>],
    ) -> Result<Array2<f64>, ModelError> {
        Ok(self.forward(params, inputs)?.z)
    }
}

fn write_linear(grads: &mut ParamSet, slots: LinearSlots, g: LinearGrads) {
    grads.get_mut(slots.weight).view2_mut().assign(&g.w);
    grads.get_mut(slots.bias).view1_mut().assign(&g.b);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::check_gradient;
    use crate::nn::{gru_forward_seq, linear_forward};

    fn small(multi: bool, heads: bool) -> ModelConfig {
        ModelConfig {
            n_features: 2,
            hidden_dim: 3,
            multi_channel: multi,
            sofa_heads: heads,
            ..ModelConfig::new(2)
        }
    }

    fn random_batch(rng: &mut ChaCha8Rng, n: usize, f: usize, t: usize) -> Batch {
        Batch {
            inputs: (0..t)
                .map(|_| Array2::from_shape_fn((n, 2 * f), |_| rng.random_range(-1.0..1.0)))
                .collect(),
            sepsis: (0..n).map(|_| rng.random_range(0..2)).collect(),
            sofa: (0..n)
                .map(|_| std::array::from_fn(|_| rng.random_range(0..5)))
                .collect(),
        }
    }

    #[test]
    fn manifest_matches_formula() {
        for (f, h) in [(27, 32), (2, 3), (5, 1), (10, 7)] {
            for (multi, heads) in [(true, true), (false, true), (false, false)] {
                let cfg = ModelConfig {
                    hidden_dim: h,
                    multi_channel: multi,
                    sofa_heads: heads,
                    ..ModelConfig::new(f)
                };
                let net = SofaNet::new(cfg).unwrap();
                assert_eq!(net.zero_params().len(), cfg.param_count());
                if multi {
                    let per_channel = 3 * (h * 2 * f + h * h + h);
                    let gru_total: usize = net
                        .zero_params()
                        .iter()
                        .filter(|(n, _)| n.starts_with("gru"))
                        .map(|(_, t)| t.len())
                        .sum();
                    assert_eq!(gru_total, 4 * per_channel);
                }
            }
        }
    }

    #[test]
    fn plain_gru_differs_only_in_heads() {
        let womc = SofaNet::new(small(false, true)).unwrap().zero_params();
        let gru = SofaNet::new(small(false, false)).unwrap().zero_params();
        let without_heads: Vec<_> = womc
            .iter()
            .filter(|(n, _)| !n.starts_with("sofa"))
            .map(|(n, t)| (n.to_string(), t.shape().to_vec()))
            .collect();
        let plain: Vec<_> = gru
            .iter()
            .map(|(n, t)| (n.to_string(), t.shape().to_vec()))
            .collect();
        assert_eq!(without_heads, plain);
    }

    #[test]
    fn zero_params_zero_outputs() {
        let net = SofaNet::new(small(true, true)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let b = random_batch(&mut rng, 3, 2, 6);
        let fwd = net.forward(&net.zero_params(), &b.inputs).unwrap();
        assert!(fwd.z.iter().all(|&v| v == 0.0));
        assert!(fwd.sepsis_logits.iter().all(|&v| v == 0.0));
        assert!(fwd.sofa_logits.iter().all(|m| m.iter().all(|&v| v == 0.0)));
        let p = net.predict_proba(&net.zero_params(), &b.inputs).unwrap();
        assert!(p.iter().all(|&v| v == 0.5));
    }

    #[test]
    fn channel_permutation_symmetry() {
        let net = SofaNet::new(small(true, true)).unwrap();
        let params = net.init_params(3);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let b = random_batch(&mut rng, 2, 2, 6);
        // swap channel 0 and 2 (GRU and SOFA head); permute sepsis head columns accordingly
        let mut swapped = params.clone();
        let swap = |p: &mut ParamSet, a: &str, b: &str| {
            let (ia, ib) = (p.index_of(a).unwrap(), p.index_of(b).unwrap());
            let ta = p.get(ia).clone();
            let tb = p.get(ib).clone();
            *p.get_mut(ia) = tb;
            *p.get_mut(ib) = ta;
        };
        for suffix in ["w_input", "w_hidden", "bias"] {
            swap(
                &mut swapped,
                &format!("gru0.{suffix}"),
                &format!("gru2.{suffix}"),
            );
        }
        swap(&mut swapped, "sofa0.weight", "sofa2.weight");
        swap(&mut swapped, "sofa0.bias", "sofa2.bias");
        let h = 3;
        let si = swapped.index_of("sepsis.weight").unwrap();
        {
            let mut w = swapped.get_mut(si).view2_mut();
            for r in 0..2 {
                for k in 0..h {
                    w.swap([r, k], [r, 2 * h + k]);
                }
            }
        }
        let a = net.forward(&params, &b.inputs).unwrap();
        let c = net.forward(&swapped, &b.inputs).unwrap();
        assert_eq!(a.sofa_logits[0], c.sofa_logits[2]);
        assert_eq!(a.sofa_logits[2], c.sofa_logits[0]);
        assert_eq!(a.z.slice(s![.., ..h]), c.z.slice(s![.., 2 * h..3 * h]));
        for (x, y) in a.sepsis_logits.iter().zip(c.sepsis_logits.iter()) {
            assert!((x - y).abs() < 1e-14);
        }
    }

    #[test]
    fn matches_composed_kernels() {
        let net = SofaNet::new(small(true, true)).unwrap();
        let params = net.init_params(5);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let b = random_batch(&mut rng, 2, 2, 6);
        let fwd = net.forward(&params, &b.inputs).unwrap();
        let mut lasts = Vec::new();
        for c in 0..4 {
            let w = GruWeights {
                w_input: params.by_name(&format!("gru{c}.w_input")).unwrap().view2(),
                w_hidden: params.by_name(&format!("gru{c}.w_hidden")).unwrap().view2(),
                bias: params.by_name(&format!("gru{c}.bias")).unwrap().view1(),
            };
            let h = gru_forward_seq(&b.inputs, None, &w)
                .unwrap()
                .last_hidden()
                .clone();
            let logits = linear_forward(
                h.view(),
                params.by_name(&format!("sofa{c}.weight")).unwrap().view2(),
                params.by_name(&format!("sofa{c}.bias")).unwrap().view1(),
            )
            .unwrap();
            assert_eq!(logits, fwd.sofa_logits[c]);
            lasts.push(h);
        }
        let views: Vec<_> = lasts.iter().map(|h| h.view()).collect();
        let z = concatenate(Axis(1), &views).unwrap();
        assert_eq!(z, fwd.z);
    }

    #[test]
    fn loss_arithmetic_and_alpha_zero() {
        let mut cfg = small(true, true);
        cfg.alpha = 0.0;
        let net = SofaNet::new(cfg).unwrap();
        let params = net.init_params(7);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let b = random_batch(&mut rng, 4, 2, 6);
        let fwd = net.forward(&params, &b.inputs).unwrap();
        let loss = net.local_loss(&fwd, &b.sepsis, &b.sofa).unwrap();
        assert_eq!(loss.total, loss.sepsis);
        let grads = net.backward(&params, &b.inputs, &fwd, &loss, None).unwrap();
        for (name, t) in grads.iter() {
            if name.starts_with("sofa") {
                assert!(t.values().iter().all(|&v| v == 0.0), "{name}");
            }
        }

        cfg.alpha = 0.5;
        let net = SofaNet::new(cfg).unwrap();
        let loss = net.local_loss(&fwd, &b.sepsis, &b.sofa).unwrap();
        let expect = loss.sepsis + 0.5 * loss.sofa.iter().sum::<f64>();
        assert!((loss.total - expect).abs() < 1e-15);
        assert!(loss.total >= 0.0);
        // 1.0 + 0.5 · (4 · 0.2)
        assert!((1.0f64 + 0.5 * (4.0 * 0.2) - 1.4).abs() < 1e-15);
    }

    #[test]
    fn sofa_head_grads_scale_with_alpha() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let b = random_batch(&mut rng, 3, 2, 6);
        let grads_for = |alpha: f64| {
            let mut cfg = small(true, true);
            cfg.alpha = alpha;
            let net = SofaNet::new(cfg).unwrap();
            let params = net.init_params(8);
            let fwd = net.forward(&params, &b.inputs).unwrap();
            let loss = net.local_loss(&fwd, &b.sepsis, &b.sofa).unwrap();
            net.backward(&params, &b.inputs, &fwd, &loss, None).unwrap()
        };
        let g1 = grads_for(0.5);
        let g2 = grads_for(1.0);
        for ((name, a), (_, b)) in g1.iter().zip(g2.iter()) {
            if name.starts_with("sofa") {
                for (x, y) in a.values().iter().zip(b.values()) {
                    assert!((2.0 * x - y).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn channel_independence() {
        let net = SofaNet::new(small(true, true)).unwrap();
        let params = net.init_params(9);
        let mut zeroed = params.clone();
        let i = zeroed.index_of("gru1.w_input").unwrap();
        zeroed.get_mut(i).values_mut().fill(0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let b = random_batch(&mut rng, 2, 2, 6);
        let a = net.forward(&params, &b.inputs).unwrap();
        let c = net.forward(&zeroed, &b.inputs).unwrap();
        let h = 3;
        for ch in [0, 2, 3] {
            assert_eq!(
                a.z.slice(s![.., ch * h..(ch + 1) * h]),
                c.z.slice(s![.., ch * h..(ch + 1) * h])
            );
        }
        assert_ne!(a.z.slice(s![.., h..2 * h]), c.z.slice(s![.., h..2 * h]));
    }

    #[test]
    fn manifest_mismatch_rejected() {
        let a = SofaNet::new(small(true, true)).unwrap();
        let b = SofaNet::new(small(false, true)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let batch = random_batch(&mut rng, 1, 2, 6);
        assert_eq!(
            a.forward(&b.zero_params(), &batch.inputs).unwrap_err(),
            ModelError::Manifest
        );
    }

    pub(crate) fn full_model_gradcheck(cfg: ModelConfig, seed: u64) -> f64 {
        let net = SofaNet::new(cfg).unwrap();
        let params = net.init_params(seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
        let b = random_batch(&mut rng, 3, cfg.n_features, 6);
        let fwd = net.forward(&params, &b.inputs).unwrap();
        let loss = net.local_loss(&fwd, &b.sepsis, &b.sofa).unwrap();
        let grads = net.backward(&params, &b.inputs, &fwd, &loss, None).unwrap();
        let mut theta = params.flatten();
        let f = |th: &[f64]| {
            let p = ParamSet::unflatten(&params, th).unwrap();
            let fwd = net.forward(&p, &b.inputs).unwrap();
            net.local_loss(&fwd, &b.sepsis, &b.sofa).unwrap().total
        };
        check_gradient(f, &mut theta, &grads.flatten(), 1e-6)
    }

    #[test]
    fn finite_difference_full_model() {
        for (multi, heads) in [(true, true), (false, true), (false, false)] {
            let worst = full_model_gradcheck(small(multi, heads), 11);
            assert!(worst < 1e-5, "multi={multi} heads={heads}: {worst}");
        }
    }

    #[test]
    fn config_validation() {
        let mut cfg = small(true, true);
        cfg.alpha = -1.0;
        assert!(SofaNet::new(cfg).is_err());
        let mut cfg = small(true, true);
        cfg.n_channels = 3;
        assert!(SofaNet::new(cfg).is_err());
        let mut cfg = small(true, true);
        cfg.hidden_dim = 0;
        assert!(SofaNet::new(cfg).is_err());
    }
}
