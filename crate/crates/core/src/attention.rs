//! Trainable spatial attention gate.
//!
//! The map is `M = sigmoid(conv([mean_c X, max_c X]))` and the layer output is
//! `X * M` broadcast over channels. The backward pass routes the max-pool
//! gradient to the lowest-indexed maximal channel.

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::seed::Rng;
use crate::tensor::{self, Tensor};

pub const DEFAULT_KERNEL_SIZE: usize = 7;

#[derive(Debug, Clone, PartialEq)]
pub struct SpatialAttention {
    kernel: Tensor,
    bias: f32,
}

/// Intermediates saved by [`SpatialAttention::forward`].
#[derive(Debug, Clone)]
pub struct AttentionCache {
    input: Tensor,
    pooled: Tensor,
    argmax: Vec<usize>,
    map: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionGrads {
    pub d_input: Tensor,
    pub d_kernel: Tensor,
    pub d_bias: f32,
}

impl SpatialAttention {
    pub fn new(kernel: Tensor, bias: f32) -> Result<Self> {
        let (k, k2, c) = kernel.dims3()?;
        if k != k2 || k % 2 == 0 || c != 2 {
            return Err(Error::Parameter(format!(
                "attention kernel must be k×k×2 with odd k, got {:?}",
                kernel.shape()
            )));
        }
        if !bias.is_finite() {
            return Err(Error::Parameter("attention bias must be finite".into()));
        }
        Ok(SpatialAttention { kernel, bias })
    }

    /// All-zero kernel and bias; the map is then 0.5 everywhere.
    pub fn zeroed(kernel_size: usize) -> Result<Self> {
        check_kernel_size(kernel_size)?;
        SpatialAttention::new(Tensor::zeros(&[kernel_size, kernel_size, 2])?, 0.0)
    }

    /// Uniform init in `[-s, s]` with `s = sqrt(6 / (2k² + 1))`, zero bias.
    pub fn init(kernel_size: usize, rng: &mut Rng) -> Result<Self> {
        check_kernel_size(kernel_size)?;
        let k = kernel_size;
        let bound = init_bound(k);
        let data = (0..k * k * 2)
            .map(|_| rng.random_range(-bound..=bound))
            .collect();
        SpatialAttention::new(Tensor::new(&[k, k, 2], data)?, 0.0)
    }

    pub fn kernel_size(&self) -> usize {
        self.kernel.shape()[0]
    }

    pub fn kernel(&self) -> &Tensor {
        &self.kernel
    }

    pub fn bias(&self) -> f32 {
        self.bias
    }

    /// Attention map only, `H×W×1`.
    pub fn attention_map(&self, x: &Tensor) -> Result<Tensor> {
        let pooled = tensor::concat_channels(&tensor::channel_mean(x)?, &tensor::channel_max(x)?)?;
        Ok(tensor::sigmoid_map(&tensor::conv2d_same(
            &pooled,
            &self.kernel,
            self.bias,
        )?))
    }

    /// Returns `(gated, map, cache)`.
    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, Tensor, AttentionCache)> {
        let avg = tensor::channel_mean(x)?;
        let max = tensor::channel_max(x)?;
        let argmax = tensor::channel_argmax(x)?;
        let pooled = tensor::concat_channels(&avg, &max)?;
        let logits = tensor::conv2d_same(&pooled, &self.kernel, self.bias)?;
        let map = tensor::sigmoid_map(&logits);
        let gated = tensor::gate_broadcast(x, &map)?;
        let cache = AttentionCache {
            input: x.clone(),
            pooled,
            argmax,
            map: map.clone(),
        };
        Ok((gated, map, cache))
    }

    pub fn backward(&self, cache: &AttentionCache, d_gated: &Tensor) -> Result<AttentionGrads> {
        if d_gated.shape() != cache.input.shape() {
            return Err(Error::Shape(format!(
                "upstream gradient {:?} does not match cached input {:?}",
                d_gated.shape(),
                cache.input.shape()
            )));
        }
        if cache.pooled.shape()[..2] != cache.input.shape()[..2] {
            return Err(Error::Shape("attention cache is inconsistent".into()));
        }
        let (h, w, c) = cache.input.dims3()?;
        let k = self.kernel_size();
        let r = (k / 2) as isize;
        let x = cache.input.data();
        let dg = d_gated.data();
        let m = cache.map.data();
        let pooled = cache.pooled.data();
        let kern = self.kernel.data();

        // Gate path and the gradient reaching the pre-sigmoid logits.
        let mut d_input = vec![0f32; h * w * c];
        let mut d_logit = vec![0f64; h * w];
        for p in 0..h * w {
            let mut dm = 0f64;
            for ch in 0..c {
                let i = p * c + ch;
                d_input[i] = dg[i] * m[p];
                dm += f64::from(dg[i]) * f64::from(x[i]);
            }
            let mp = f64::from(m[p]);
            d_logit[p] = dm * mp * (1.0 - mp);
        }

        let d_bias: f64 = d_logit.iter().sum();
        let mut d_kernel = vec![0f64; k * k * 2];
        let mut d_pooled = vec![0f64; h * w * 2];
        for px in 0..h as isize {
            for py in 0..w as isize {
                let g = d_logit[px as usize * w + py as usize];
                if g == 0.0 {
                    continue;
                }
                for i in 0..k as isize {
                    let sx = px + i - r;
                    if sx < 0 || sx >= h as isize {
                        continue;
                    }
                    for j in 0..k as isize {
                        let sy = py + j - r;
                        if sy < 0 || sy >= w as isize {
                            continue;
                        }
                        let src = (sx as usize * w + sy as usize) * 2;
                        let ko = (i as usize * k + j as usize) * 2;
                        for ch in 0..2 {
                            d_kernel[ko + ch] += g * f64::from(pooled[src + ch]);
                            d_pooled[src + ch] += g * f64::from(kern[ko + ch]);
                        }
                    }
                }
            }
        }

        // Pooling paths: the mean spreads evenly, the max goes to its argmax.
        for p in 0..h * w {
            let d_avg = d_pooled[p * 2] / c as f64;
            for ch in 0..c {
                d_input[p * c + ch] += d_avg as f32;
            }
            d_input[p * c + cache.argmax[p]] += d_pooled[p * 2 + 1] as f32;
        }

        Ok(AttentionGrads {
            d_input: Tensor::from_parts(vec![h, w, c], d_input),
            d_kernel: Tensor::from_parts(vec![k, k, 2], d_kernel.into_iter().map(|v| v as f32).collect()),
            d_bias: d_bias as f32,
        })
    }

    pub(crate) fn params_mut(&mut self) -> (&mut [f32], &mut f32) {
        (self.kernel.data_mut(), &mut self.bias)
    }
}

impl AttentionCache {
    /// Channel chosen by the max pool at each position.
    pub fn argmax_channels(&self) -> &[usize] {
        &self.argmax
    }

    pub fn map(&self) -> &Tensor {
        &self.map
    }
}

pub fn init_bound(kernel_size: usize) -> f32 {
    (6.0 / (kernel_size * kernel_size * 2 + 1) as f32).sqrt()
}

fn check_kernel_size(k: usize) -> Result<()> {
    if k == 0 || k.is_multiple_of(2) {
        return Err(Error::Parameter(format!(
            "kernel size must be odd and positive, got {k}"
        )));
    }
    Ok(())
}
