//! Attention gate, global average pool and dense head chained into one
//! binary classifier.

use super::arch::Architecture;
use super::head::{HeadCache, HeadGrads, MlpHead};
use crate::attention::{AttentionCache, SpatialAttention};
use crate::data::Sample;
use crate::error::{Error, Result};
use crate::seed::Rng;
use crate::tensor::{self, Tensor};

pub const LOSS_EPSILON: f64 = 1e-7;

/// Binary cross-entropy with the probability clamped to `[ε, 1-ε]`.
pub fn bce_loss(prob: f64, label: u8) -> f64 {
    let p = prob.clamp(LOSS_EPSILON, 1.0 - LOSS_EPSILON);
    if label == 1 {
        -p.ln()
    } else {
        -(1.0 - p).ln()
    }
}

/// Positive iff `prob >= threshold`.
pub fn decide(prob: f32, threshold: f32) -> u8 {
    u8::from(prob >= threshold)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionClassifier {
    attention: SpatialAttention,
    head: MlpHead,
}

#[derive(Debug, Clone)]
pub struct ClassifierCache {
    attention: AttentionCache,
    head: HeadCache,
    spatial: (usize, usize),
}

impl ClassifierCache {
    pub fn attention(&self) -> &AttentionCache {
        &self.attention
    }

    pub fn head(&self) -> &HeadCache {
        &self.head
    }
}

/// Gradients for every parameter of an [`AttentionClassifier`].
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierGrads {
    pub kernel: Vec<f32>,
    pub bias: f32,
    pub head: HeadGrads,
}

impl ClassifierGrads {
    /// Flattened in the same order as [`AttentionClassifier::parameters`].
    pub fn flatten(&self) -> Vec<f32> {
        let mut out = self.kernel.clone();
        out.push(self.bias);
        for l in &self.head.layers {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.bias);
        }
        out
    }

    fn add_scaled(&mut self, other: &ClassifierGrads, scale: f32) {
        fn axpy(dst: &mut [f32], src: &[f32], s: f32) {
            for (d, &v) in dst.iter_mut().zip(src) {
                *d += s * v;
            }
        }
        axpy(&mut self.kernel, &other.kernel, scale);
        self.bias += scale * other.bias;
        for (d, s) in self.head.layers.iter_mut().zip(&other.head.layers) {
            axpy(&mut d.weights, &s.weights, scale);
            axpy(&mut d.bias, &s.bias, scale);
        }
    }

    fn scale(&mut self, s: f32) {
        self.kernel.iter_mut().for_each(|v| *v *= s);
        self.bias *= s;
        for l in &mut self.head.layers {
            l.weights.iter_mut().chain(l.bias.iter_mut()).for_each(|v| *v *= s);
        }
    }

    fn is_finite(&self) -> bool {
        self.flatten().iter().all(|v| v.is_finite())
    }
}

impl AttentionClassifier {
    pub fn new(attention: SpatialAttention, head: MlpHead) -> Self {
        AttentionClassifier { attention, head }
    }

    /// Fresh model: attention weights first, then the head, from one stream.
    pub fn init(
        kernel_size: usize,
        arch: &Architecture,
        channels: usize,
        rng: &mut Rng,
    ) -> Result<Self> {
        let attention = SpatialAttention::init(kernel_size, rng)?;
        let head = MlpHead::build(arch, channels, rng)?;
        Ok(AttentionClassifier { attention, head })
    }

    pub fn attention(&self) -> &SpatialAttention {
        &self.attention
    }

    pub fn head(&self) -> &MlpHead {
        &self.head
    }

    pub fn channels(&self) -> usize {
        self.head.input_dim()
    }

    pub fn parameter_count(&self) -> usize {
        self.attention.kernel().len() + 1 + self.head.parameter_count()
    }

    pub fn check_input(&self, x: &Tensor) -> Result<()> {
        let (_, _, c) = x.dims3()?;
        if c != self.channels() {
            return Err(Error::Shape(format!(
                "model expects {} channels, feature map has shape {:?}",
                self.channels(),
                x.shape()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, x: &Tensor) -> Result<(f32, ClassifierCache)> {
        self.check_input(x)?;
        let (h, w, _) = x.dims3()?;
        let (gated, _, attention) = self.attention.forward(x)?;
        let pooled = tensor::global_avg_pool(&gated)?;
        let (prob, head) = self.head.forward(&pooled)?;
        Ok((
            prob,
            ClassifierCache {
                attention,
                head,
                spatial: (h, w),
            },
        ))
    }

    pub fn probability(&self, x: &Tensor) -> Result<f32> {
        self.check_input(x)?;
        let gated = tensor::gate_broadcast(x, &self.attention.attention_map(x)?)?;
        let (prob, _) = self.head.forward(&tensor::global_avg_pool(&gated)?)?;
        Ok(prob)
    }

    pub fn predict(&self, x: &Tensor, threshold: f32) -> Result<u8> {
        Ok(decide(self.probability(x)?, threshold))
    }

    /// Backpropagates `d_logit` (loss derivative at the output logit) through
    /// head, pooling and attention.
    pub fn backward(&self, cache: &ClassifierCache, d_logit: f32) -> Result<ClassifierGrads> {
        let head = self.head.backward(&cache.head, d_logit)?;
        let (h, w) = cache.spatial;
        let c = head.d_input.len();
        let scale = 1.0 / (h * w) as f32;
        let per_position: Vec<f32> = head.d_input.iter().map(|&g| g * scale).collect();
        let d_gated = Tensor::from_parts(
            vec![h, w, c],
            per_position.iter().copied().cycle().take(h * w * c).collect(),
        );
        let att = self.attention.backward(&cache.attention, &d_gated)?;
        Ok(ClassifierGrads {
            kernel: att.d_kernel.into_data(),
            bias: att.d_bias,
            head,
        })
    }

    /// Mean binary cross-entropy over `batch`.
    pub fn loss(&self, batch: &[Sample]) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::Config("cannot evaluate an empty batch".into()));
        }
        let mut total = 0.0;
        for s in batch {
            total += bce_loss(f64::from(self.probability(&s.features)?), s.label);
        }
        Ok(total / batch.len() as f64)
    }

    /// Mean loss over `batch` and its gradient.
    pub fn loss_and_grads<'a, I>(&self, batch: I) -> Result<(f64, ClassifierGrads)>
    where
        I: IntoIterator<Item = &'a Sample>,
    {
        let mut total = 0.0;
        let mut count = 0usize;
        let mut acc: Option<ClassifierGrads> = None;
        for s in batch {
            let (prob, cache) = self.forward(&s.features)?;
            total += bce_loss(f64::from(prob), s.label);
            let g = self.backward(&cache, prob - f32::from(s.label))?;
            match acc.as_mut() {
                None => acc = Some(g),
                Some(a) => a.add_scaled(&g, 1.0),
            }
            count += 1;
        }
        let mut grads = acc.ok_or_else(|| Error::Config("cannot train on an empty batch".into()))?;
        grads.scale(1.0 / count as f32);
        Ok((total / count as f64, grads))
    }

    /// All trainable values: attention kernel, attention bias, then each head
    /// layer's weights followed by its bias.
    pub fn parameters(&self) -> Vec<f32> {
        let mut out = self.attention.kernel().data().to_vec();
        out.push(self.attention.bias());
        for l in self.head.layers() {
            out.extend_from_slice(l.weights().data());
            out.extend_from_slice(l.bias().data());
        }
        out
    }

    pub fn set_parameters(&mut self, values: &[f32]) -> Result<()> {
        if values.len() != self.parameter_count() {
            return Err(Error::Shape(format!(
                "expected {} parameters, got {}",
                self.parameter_count(),
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite parameter value".into()));
        }
        let mut rest = values;
        let (kernel, bias) = self.attention.params_mut();
        let (head_k, tail) = rest.split_at(kernel.len());
        kernel.copy_from_slice(head_k);
        *bias = tail[0];
        rest = &tail[1..];
        for (w, b) in self.head.layer_params_mut() {
            let (wv, tail) = rest.split_at(w.len());
            w.copy_from_slice(wv);
            let (bv, tail) = tail.split_at(b.len());
            b.copy_from_slice(bv);
            rest = tail;
        }
        Ok(())
    }

    /// Plain gradient step `θ ← θ − lr·g`.
    pub fn apply_gradients(&mut self, grads: &ClassifierGrads, learning_rate: f32) -> Result<()> {
        if !grads.is_finite() {
            return Err(Error::Numeric("non-finite gradient".into()));
        }
        let (kernel, bias) = self.attention.params_mut();
        for (p, g) in kernel.iter_mut().zip(&grads.kernel) {
            *p -= learning_rate * g;
        }
        *bias -= learning_rate * grads.bias;
        for ((w, b), g) in self.head.layer_params_mut().zip(&grads.head.layers) {
            for (p, d) in w.iter_mut().zip(&g.weights) {
                *p -= learning_rate * d;
            }
            for (p, d) in b.iter_mut().zip(&g.bias) {
                *p -= learning_rate * d;
            }
        }
        Ok(())
    }
}
