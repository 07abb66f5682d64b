//! Dense classifier head: rectified hidden layers and one sigmoid output.

use rand::Rng as _;

use super::arch::Architecture;
use crate::error::{Error, Result};
use crate::seed::Rng;
use crate::tensor::{sigmoid, Tensor};

/// Weights are stored `fan_in × fan_out`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    weights: Tensor,
    bias: Tensor,
}

impl Dense {
    pub fn new(weights: Tensor, bias: Tensor) -> Result<Self> {
        match (weights.shape(), bias.shape()) {
            (&[_, fo], &[fb]) if fo == fb => Ok(Dense { weights, bias }),
            (w, b) => Err(Error::Shape(format!(
                "dense layer needs fan_in×fan_out weights and fan_out bias, got {w:?} and {b:?}"
            ))),
        }
    }

    pub fn fan_in(&self) -> usize {
        self.weights.shape()[0]
    }

    pub fn fan_out(&self) -> usize {
        self.weights.shape()[1]
    }

    pub fn weights(&self) -> &Tensor {
        &self.weights
    }

    pub fn bias(&self) -> &Tensor {
        &self.bias
    }

    fn affine(&self, input: &[f32]) -> Vec<f32> {
        let fo = self.fan_out();
        let mut acc: Vec<f64> = self.bias.data().iter().map(|&b| f64::from(b)).collect();
        for (&a, row) in input.iter().zip(self.weights.data().chunks_exact(fo)) {
            if a == 0.0 {
                continue;
            }
            let a = f64::from(a);
            for (z, &w) in acc.iter_mut().zip(row) {
                *z += a * f64::from(w);
            }
        }
        acc.into_iter().map(|z| z as f32).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpHead {
    layers: Vec<Dense>,
}

/// Per-layer inputs and pre-activations from one forward pass.
#[derive(Debug, Clone)]
pub struct HeadCache {
    inputs: Vec<Vec<f32>>,
    pre_activations: Vec<Vec<f32>>,
}

impl HeadCache {
    /// Sign pattern of the hidden pre-activations (`true` = rectifier open).
    pub fn active_units(&self) -> Vec<bool> {
        let hidden = self.pre_activations.len() - 1;
        self.pre_activations[..hidden]
            .iter()
            .flatten()
            .map(|&z| z > 0.0)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseGrads {
    pub weights: Vec<f32>,
    pub bias: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeadGrads {
    pub layers: Vec<DenseGrads>,
    pub d_input: Vec<f32>,
}

impl MlpHead {
    pub fn new(layers: Vec<Dense>) -> Result<Self> {
        if layers.len() < 2 {
            return Err(Error::Validation("head needs a hidden layer and an output layer".into()));
        }
        for pair in layers.windows(2) {
            if pair[0].fan_out() != pair[1].fan_in() {
                return Err(Error::Shape(format!(
                    "layer widths do not chain: {} then {}",
                    pair[0].fan_out(),
                    pair[1].fan_in()
                )));
            }
        }
        if layers.last().map(Dense::fan_out) != Some(1) {
            return Err(Error::Shape("output layer must have width 1".into()));
        }
        Ok(MlpHead { layers })
    }

    /// Uniform init in `±sqrt(6 / (fan_in + fan_out))` per layer, zero biases.
    pub fn build(arch: &Architecture, input_dim: usize, rng: &mut Rng) -> Result<Self> {
        if input_dim == 0 {
            return Err(Error::Validation("input dimension must be positive".into()));
        }
        let arch = Architecture::new(arch.widths().to_vec())?;
        let mut dims = vec![input_dim];
        dims.extend_from_slice(arch.widths());
        dims.push(1);
        let layers = dims
            .windows(2)
            .map(|d| {
                let (fi, fo) = (d[0], d[1]);
                let bound = (6.0 / (fi + fo) as f32).sqrt();
                let w = (0..fi * fo).map(|_| rng.random_range(-bound..=bound)).collect();
                Dense::new(Tensor::new(&[fi, fo], w)?, Tensor::zeros(&[fo])?)
            })
            .collect::<Result<Vec<_>>>()?;
        MlpHead::new(layers)
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].fan_in()
    }

    pub fn architecture(&self) -> Architecture {
        Architecture::from_widths(
            self.layers[..self.layers.len() - 1]
                .iter()
                .map(Dense::fan_out)
                .collect(),
        )
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// Returns the output probability and the cache for [`MlpHead::backward`].
    pub fn forward(&self, features: &Tensor) -> Result<(f32, HeadCache)> {
        if features.shape() != [self.input_dim()] {
            return Err(Error::Shape(format!(
                "head expects a {}-vector, got {:?}",
                self.input_dim(),
                features.shape()
            )));
        }
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut a = features.data().to_vec();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let z = layer.affine(&a);
            let next = if i < last {
                z.iter().map(|&v| v.max(0.0)).collect()
            } else {
                z.clone()
            };
            inputs.push(std::mem::replace(&mut a, next));
            pre.push(z);
        }
        let prob = sigmoid(a[0]);
        Ok((
            prob,
            HeadCache {
                inputs,
                pre_activations: pre,
            },
        ))
    }

    /// Gradients given the derivative of the loss with respect to the output
    /// logit.
    pub fn backward(&self, cache: &HeadCache, d_logit: f32) -> Result<HeadGrads> {
        if cache.inputs.len() != self.layers.len() {
            return Err(Error::Shape("head cache does not match this head".into()));
        }
        let mut delta = vec![d_logit];
        let mut grads = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let input = &cache.inputs[i];
            let fo = layer.fan_out();
            let mut dw = vec![0f32; layer.weights.len()];
            for (row, &a) in dw.chunks_exact_mut(fo).zip(input) {
                for (g, &d) in row.iter_mut().zip(&delta) {
                    *g = a * d;
                }
            }
            let d_in: Vec<f32> = layer
                .weights
                .data()
                .chunks_exact(fo)
                .map(|row| {
                    row.iter()
                        .zip(&delta)
                        .map(|(&w, &d)| f64::from(w) * f64::from(d))
                        .sum::<f64>() as f32
                })
                .collect();
            grads.push(DenseGrads {
                weights: dw,
                bias: delta.clone(),
            });
            delta = if i > 0 {
                d_in.iter()
                    .zip(&cache.pre_activations[i - 1])
                    .map(|(&g, &z)| if z > 0.0 { g } else { 0.0 })
                    .collect()
            } else {
                d_in
            };
        }
        grads.reverse();
        Ok(HeadGrads {
            layers: grads,
            d_input: delta,
        })
    }

    pub(crate) fn layer_params_mut(&mut self) -> impl Iterator<Item = (&mut [f32], &mut [f32])> {
        self.layers
            .iter_mut()
            .map(|l| (l.weights.data_mut(), l.bias.data_mut()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_from_seed;
    use proptest::prelude::*;

    fn count_params(input_dim: usize, widths: &[usize]) -> usize {
        let mut total = 0;
        let mut fan_in = input_dim;
        for &w in widths.iter().chain(std::iter::once(&1)) {
            total += (fan_in + 1) * w;
            fan_in = w;
        }
        total
    }

    #[test]
    fn reported_architecture_parameter_count() {
        // (2048+1)·66 + (66+1)·805 + (805+1)·218 + (218+1)·382 + (382+1)·1
        let arch: Architecture = "66-805-218-382".parse().unwrap();
        let head = MlpHead::build(&arch, 2048, &mut rng_from_seed(0)).unwrap();
        assert_eq!(head.parameter_count(), 448_918);
        assert_eq!(head.architecture(), arch);
    }

    #[test]
    fn small_parameter_count_and_determinism() {
        let arch: Architecture = "4".parse().unwrap();
        let a = MlpHead::build(&arch, 3, &mut rng_from_seed(8)).unwrap();
        assert_eq!(a.parameter_count(), 21);
        let b = MlpHead::build(&arch, 3, &mut rng_from_seed(8)).unwrap();
        assert_eq!(a, b);
        assert!(MlpHead::build(&arch, 0, &mut rng_from_seed(8)).is_err());
    }

    #[test]
    fn zero_head_outputs_half() {
        let layers = vec![
            Dense::new(Tensor::zeros(&[3, 4]).unwrap(), Tensor::zeros(&[4]).unwrap()).unwrap(),
            Dense::new(Tensor::zeros(&[4, 1]).unwrap(), Tensor::zeros(&[1]).unwrap()).unwrap(),
        ];
        let head = MlpHead::new(layers).unwrap();
        let (p, _) = head.forward(&Tensor::new(&[3], vec![5.0, -2.0, 9.0]).unwrap()).unwrap();
        assert_eq!(p, 0.5);
        assert!(matches!(head.forward(&Tensor::zeros(&[4]).unwrap()), Err(Error::Shape(_))));
    }

    #[test]
    fn saturated_output() {
        let layers = vec![
            Dense::new(Tensor::new(&[1, 1], vec![10.0]).unwrap(), Tensor::zeros(&[1]).unwrap()).unwrap(),
            Dense::new(Tensor::new(&[1, 1], vec![10.0]).unwrap(), Tensor::zeros(&[1]).unwrap()).unwrap(),
        ];
        let head = MlpHead::new(layers).unwrap();
        let (p, _) = head.forward(&Tensor::new(&[1], vec![1.0]).unwrap()).unwrap();
        assert!((p - 1.0).abs() < 1e-6);
    }

    #[test]
    fn rejects_unchained_layers() {
        let layers = vec![
            Dense::new(Tensor::zeros(&[3, 4]).unwrap(), Tensor::zeros(&[4]).unwrap()).unwrap(),
            Dense::new(Tensor::zeros(&[5, 1]).unwrap(), Tensor::zeros(&[1]).unwrap()).unwrap(),
        ];
        assert!(matches!(MlpHead::new(layers), Err(Error::Shape(_))));
        let layers = vec![
            Dense::new(Tensor::zeros(&[3, 4]).unwrap(), Tensor::zeros(&[4]).unwrap()).unwrap(),
            Dense::new(Tensor::zeros(&[4, 2]).unwrap(), Tensor::zeros(&[2]).unwrap()).unwrap(),
        ];
        assert!(matches!(MlpHead::new(layers), Err(Error::Shape(_))));
    }

    #[test]
    #[allow(clippy::needless_range_loop)] // index-by-index oracle
    fn forward_matches_per_neuron_loop() {
        let arch: Architecture = "7-5-3".parse().unwrap();
        let mut rng = rng_from_seed(4);
        let head = MlpHead::build(&arch, 6, &mut rng).unwrap();
        let x: Vec<f32> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (p, _) = head.forward(&Tensor::new(&[6], x.clone()).unwrap()).unwrap();

        let mut a: Vec<f64> = x.iter().map(|&v| v as f64).collect();
        let n = head.layers().len();
        for (li, layer) in head.layers().iter().enumerate() {
            let mut next = vec![];
            for o in 0..layer.fan_out() {
                let mut z = layer.bias().data()[o] as f64;
                for i in 0..layer.fan_in() {
                    z += a[i] * layer.weights().data()[i * layer.fan_out() + o] as f64;
                }
                next.push(if li + 1 < n { z.max(0.0) } else { z });
            }
            a = next;
        }
        let expected = 1.0 / (1.0 + (-a[0]).exp());
        assert!((p as f64 - expected).abs() < 1e-5);
    }

    proptest! {
        #[test]
        fn parameter_count_matches_counting_loop(
            input_dim in 1usize..40,
            widths in prop::collection::vec(1usize..40, 1..=5),
            seed in any::<u64>(),
        ) {
            let arch = Architecture::new(widths.clone()).unwrap();
            let head = MlpHead::build(&arch, input_dim, &mut rng_from_seed(seed)).unwrap();
            prop_assert_eq!(head.parameter_count(), count_params(input_dim, &widths));
            for l in head.layers() {
                let bound = (6.0 / (l.fan_in() + l.fan_out()) as f32).sqrt();
                prop_assert!(l.weights().data().iter().all(|w| w.abs() <= bound));
                prop_assert!(l.bias().data().iter().all(|&b| b == 0.0));
            }
        }
    }
}
