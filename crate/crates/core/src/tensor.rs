//! Dense rank 1..3 tensors of `f32` and the primitive operations the
//! attention layer is composed from.
//!
//! Layout is row-major with the last index fastest, so an `H×W×C` feature map
//! stores all channels of one spatial position contiguously.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f32>,
}

impl Tensor {
    /// Builds a tensor, rejecting bad shapes and non-finite values.
    pub fn new(shape: &[usize], data: Vec<f32>) -> Result<Self> {
        check_shape(shape)?;
        let expected = element_count(shape)?;
        if expected != data.len() {
            return Err(Error::Shape(format!(
                "shape {shape:?} needs {expected} values, got {}",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Parameter(format!(
                "non-finite value {} at element {i}",
                data[i]
            )));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn filled(shape: &[usize], value: f32) -> Result<Self> {
        check_shape(shape)?;
        let n = element_count(shape)?;
        Tensor::new(shape, vec![value; n])
    }

    pub fn zeros(shape: &[usize]) -> Result<Self> {
        Tensor::filled(shape, 0.0)
    }

    /// Internal constructor for outputs of shape-checked operations.
    pub(crate) fn from_parts(shape: Vec<usize>, data: Vec<f32>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Tensor { shape, data }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub(crate) fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    /// `(H, W, C)` of a rank-3 tensor.
    pub fn dims3(&self) -> Result<(usize, usize, usize)> {
        match self.shape.as_slice() {
            &[h, w, c] => Ok((h, w, c)),
            other => Err(Error::Shape(format!(
                "expected a rank-3 tensor, got shape {other:?}"
            ))),
        }
    }

    /// Element at `(x, y, c)` of a rank-3 tensor.
    pub fn at3(&self, x: usize, y: usize, c: usize) -> f32 {
        let (w, ch) = (self.shape[1], self.shape[2]);
        self.data[(x * w + y) * ch + c]
    }

    /// Extracts one channel of a rank-3 tensor as an `H×W×1` tensor.
    pub fn channel(&self, c: usize) -> Result<Tensor> {
        let (h, w, ch) = self.dims3()?;
        if c >= ch {
            return Err(Error::Shape(format!("channel {c} out of range for {ch}")));
        }
        let data = self.data.iter().skip(c).step_by(ch).copied().collect();
        Ok(Tensor::from_parts(vec![h, w, 1], data))
    }

    /// Elementwise map producing a tensor of the same shape.
    pub fn map(&self, f: impl Fn(f32) -> f32) -> Tensor {
        Tensor::from_parts(self.shape.clone(), self.data.iter().map(|&v| f(v)).collect())
    }

    /// Elementwise sum of two same-shaped tensors.
    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        if self.shape != other.shape {
            return Err(Error::Shape(format!(
                "cannot add {:?} and {:?}",
                self.shape, other.shape
            )));
        }
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect();
        Ok(Tensor::from_parts(self.shape.clone(), data))
    }
}

fn check_shape(shape: &[usize]) -> Result<()> {
    if shape.is_empty() || shape.len() > 3 {
        return Err(Error::Shape(format!(
            "rank must be 1..=3, got shape {shape:?}"
        )));
    }
    if shape.contains(&0) {
        return Err(Error::Shape(format!("zero-sized dimension in {shape:?}")));
    }
    Ok(())
}

fn element_count(shape: &[usize]) -> Result<usize> {
    shape
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::Shape(format!("shape {shape:?} overflows")))
}

pub fn sigmoid(v: f32) -> f32 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

/// Mean over channels at every spatial position.
pub fn channel_mean(x: &Tensor) -> Result<Tensor> {
    let (h, w, c) = x.dims3()?;
    let data = x
        .data
        .chunks_exact(c)
        .map(|px| (px.iter().map(|&v| f64::from(v)).sum::<f64>() / c as f64) as f32)
        .collect();
    Ok(Tensor::from_parts(vec![h, w, 1], data))
}

/// Maximum over channels at every spatial position.
pub fn channel_max(x: &Tensor) -> Result<Tensor> {
    let (h, w, c) = x.dims3()?;
    let data = x
        .data
        .chunks_exact(c)
        .map(|px| px.iter().copied().fold(f32::NEG_INFINITY, f32::max))
        .collect();
    Ok(Tensor::from_parts(vec![h, w, 1], data))
}

/// Index of the largest channel per position; ties resolve to the lowest index.
pub fn channel_argmax(x: &Tensor) -> Result<Vec<usize>> {
    let (_, _, c) = x.dims3()?;
    Ok(x.data
        .chunks_exact(c)
        .map(|px| {
            px.iter()
                .enumerate()
                .fold((0, px[0]), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
                .0
        })
        .collect())
}

/// Stacks two single-channel maps into an `H×W×2` map.
pub fn concat_channels(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (h, w, ca) = a.dims3()?;
    let (hb, wb, cb) = b.dims3()?;
    if (h, w) != (hb, wb) || ca != 1 || cb != 1 {
        return Err(Error::Shape(format!(
            "cannot concatenate {:?} with {:?}",
            a.shape, b.shape
        )));
    }
    let data = a.data.iter().zip(&b.data).flat_map(|(&u, &v)| [u, v]).collect();
    Ok(Tensor::from_parts(vec![h, w, 2], data))
}

/// Stride-1 convolution of an `H×W×Cin` map with a `k×k×Cin` kernel and zero
/// padding of `(k-1)/2`, producing an `H×W×1` map.
pub fn conv2d_same(x: &Tensor, kernel: &Tensor, bias: f32) -> Result<Tensor> {
    let (h, w, cin) = x.dims3()?;
    let (k, k2, kc) = kernel.dims3()?;
    if k != k2 || k % 2 == 0 {
        return Err(Error::Parameter(format!(
            "kernel must be square with odd size, got {:?}",
            kernel.shape
        )));
    }
    if kc != cin {
        return Err(Error::Shape(format!(
            "kernel has {kc} channels, input has {cin}"
        )));
    }
    let r = (k / 2) as isize;
    let mut out = Vec::with_capacity(h * w);
    for px in 0..h as isize {
        for py in 0..w as isize {
            let mut acc = f64::from(bias);
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
                    let xo = (sx as usize * w + sy as usize) * cin;
                    let ko = (i as usize * k + j as usize) * cin;
                    for c in 0..cin {
                        acc += f64::from(kernel.data[ko + c]) * f64::from(x.data[xo + c]);
                    }
                }
            }
            out.push(acc as f32);
        }
    }
    Ok(Tensor::from_parts(vec![h, w, 1], out))
}

pub fn sigmoid_map(x: &Tensor) -> Tensor {
    x.map(sigmoid)
}

/// Multiplies every channel at each position by that position's gate value.
pub fn gate_broadcast(x: &Tensor, m: &Tensor) -> Result<Tensor> {
    let (h, w, c) = x.dims3()?;
    let (hm, wm, cm) = m.dims3()?;
    if (h, w) != (hm, wm) || cm != 1 {
        return Err(Error::Shape(format!(
            "gate {:?} does not match input {:?}",
            m.shape, x.shape
        )));
    }
    let data = x
        .data
        .chunks_exact(c)
        .zip(&m.data)
        .flat_map(|(px, &g)| px.iter().map(move |&v| v * g))
        .collect();
    Ok(Tensor::from_parts(x.shape.clone(), data))
}

/// Mean over spatial positions, one value per channel.
pub fn global_avg_pool(x: &Tensor) -> Result<Tensor> {
    let (h, w, c) = x.dims3()?;
    let mut acc = vec![0f64; c];
    for px in x.data.chunks_exact(c) {
        for (a, &v) in acc.iter_mut().zip(px) {
            *a += f64::from(v);
        }
    }
    let n = (h * w) as f64;
    Ok(Tensor::from_parts(
        vec![c],
        acc.into_iter().map(|a| (a / n) as f32).collect(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng as _;

    fn random_map(h: usize, w: usize, c: usize, seed: u64) -> Tensor {
        let mut rng = crate::seed::rng_from_seed(seed);
        let data = (0..h * w * c).map(|_| rng.random_range(-2.0f32..2.0)).collect();
        Tensor::new(&[h, w, c], data).unwrap()
    }

    // Naive oracles index through `at3` rather than chunked slices.
    fn naive_mean(x: &Tensor) -> Vec<f64> {
        let (h, w, c) = x.dims3().unwrap();
        let mut out = vec![];
        for i in 0..h {
            for j in 0..w {
                let mut s = 0.0f64;
                for k in 0..c {
                    s += x.at3(i, j, k) as f64;
                }
                out.push(s / c as f64);
            }
        }
        out
    }

    #[test]
    fn constructor_rejects_bad_inputs() {
        assert!(matches!(Tensor::new(&[2, 2], vec![0.0; 3]), Err(Error::Shape(_))));
        assert!(matches!(Tensor::new(&[], vec![]), Err(Error::Shape(_))));
        assert!(matches!(Tensor::new(&[1, 1, 1, 1], vec![0.0]), Err(Error::Shape(_))));
        assert!(matches!(Tensor::new(&[2, 0], vec![]), Err(Error::Shape(_))));
        assert!(Tensor::new(&[2], vec![1.0, f32::NAN]).is_err());
        assert!(Tensor::new(&[1], vec![f32::INFINITY]).is_err());
    }

    #[test]
    fn channel_mean_examples() {
        let t = Tensor::filled(&[2, 2, 5], 3.0).unwrap();
        assert!(channel_mean(&t).unwrap().data().iter().all(|&v| v == 3.0));
        let t = Tensor::new(&[1, 1, 3], vec![1.0, 2.0, 6.0]).unwrap();
        assert_eq!(channel_mean(&t).unwrap().data(), &[3.0]);
        let t = random_map(4, 4, 8, 11);
        let got = channel_mean(&t).unwrap();
        assert_eq!(got.shape(), &[4, 4, 1]);
        for (g, e) in got.data().iter().zip(naive_mean(&t)) {
            assert!((*g as f64 - e).abs() < 1e-6);
        }
        assert!(matches!(channel_mean(&Tensor::zeros(&[4]).unwrap()), Err(Error::Shape(_))));
    }

    #[test]
    fn channel_max_examples() {
        let t = Tensor::new(&[1, 1, 3], vec![0.2, -1.0, 0.9]).unwrap();
        assert_eq!(channel_max(&t).unwrap().data(), &[0.9]);
        let t = Tensor::filled(&[3, 2, 4], -0.75).unwrap();
        assert!(channel_max(&t).unwrap().data().iter().all(|&v| v == -0.75));
        let t = random_map(4, 4, 8, 12);
        let got = channel_max(&t).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let mut m = f32::MIN;
                for k in 0..8 {
                    if t.at3(i, j, k) > m {
                        m = t.at3(i, j, k);
                    }
                }
                assert_eq!(got.at3(i, j, 0), m);
            }
        }
        assert!(channel_max(&Tensor::zeros(&[2, 2]).unwrap()).is_err());
    }

    #[test]
    fn argmax_breaks_ties_low() {
        let t = Tensor::new(&[1, 2, 3], vec![1.0, 1.0, 0.0, 0.0, 2.0, 2.0]).unwrap();
        assert_eq!(channel_argmax(&t).unwrap(), vec![0, 1]);
    }

    #[test]
    fn concat_examples() {
        let a = Tensor::filled(&[2, 2, 1], 1.0).unwrap();
        let b = Tensor::filled(&[2, 2, 1], 2.0).unwrap();
        let ab = concat_channels(&a, &b).unwrap();
        assert_eq!(ab.shape(), &[2, 2, 2]);
        assert_eq!(ab.channel(0).unwrap(), a);
        assert_eq!(ab.channel(1).unwrap(), b);
        let x = channel_mean(&random_map(3, 4, 2, 5)).unwrap();
        let xx = concat_channels(&x, &x).unwrap();
        assert_eq!(xx.channel(0).unwrap(), xx.channel(1).unwrap());
        let wrong = Tensor::filled(&[2, 3, 1], 1.0).unwrap();
        assert!(matches!(concat_channels(&a, &wrong), Err(Error::Shape(_))));
    }

    #[test]
    fn conv_one_by_one_is_pointwise_linear() {
        let x = Tensor::new(&[1, 2, 2], vec![1.0, 2.0, -3.0, 0.5]).unwrap();
        let k = Tensor::new(&[1, 1, 2], vec![0.5, -2.0]).unwrap();
        let out = conv2d_same(&x, &k, 0.25).unwrap();
        assert_eq!(out.data(), &[0.5 - 4.0 + 0.25, -1.5 - 1.0 + 0.25]);
    }

    #[test]
    fn conv_three_by_three_ones() {
        let c = 1.5;
        let x = Tensor::filled(&[4, 5, 2], c).unwrap();
        let k = Tensor::filled(&[3, 3, 2], 1.0).unwrap();
        let out = conv2d_same(&x, &k, 0.0).unwrap();
        assert_eq!(out.shape(), &[4, 5, 1]);
        assert_eq!(out.at3(1, 1, 0), 18.0 * c);
        assert_eq!(out.at3(2, 3, 0), 18.0 * c);
        for (i, j) in [(0, 0), (0, 4), (3, 0), (3, 4)] {
            assert_eq!(out.at3(i, j, 0), 8.0 * c);
        }
        assert_eq!(out.at3(0, 2, 0), 12.0 * c);
    }

    #[test]
    fn conv_rejects_even_kernel() {
        let x = Tensor::filled(&[4, 4, 2], 1.0).unwrap();
        let k = Tensor::filled(&[2, 2, 2], 1.0).unwrap();
        assert!(matches!(conv2d_same(&x, &k, 0.0), Err(Error::Parameter(_))));
    }

    #[test]
    fn sigmoid_examples() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!((sigmoid(100.0) - 1.0).abs() < 1e-6);
        assert!(sigmoid(-100.0) >= 0.0);
        let mut rng = crate::seed::rng_from_seed(3);
        for _ in 0..1000 {
            let v: f32 = rng.random_range(-20.0..20.0);
            assert!((sigmoid(v) + sigmoid(-v) - 1.0).abs() < 1e-6);
        }
        let t = random_map(2, 3, 4, 1);
        assert_eq!(sigmoid_map(&t).shape(), t.shape());
    }

    #[test]
    fn gate_examples() {
        let x = random_map(3, 3, 4, 9);
        let ones = Tensor::filled(&[3, 3, 1], 1.0).unwrap();
        assert_eq!(gate_broadcast(&x, &ones).unwrap(), x);
        let zeros = Tensor::zeros(&[3, 3, 1]).unwrap();
        assert!(gate_broadcast(&x, &zeros).unwrap().data().iter().all(|&v| v == 0.0));
        let half = Tensor::filled(&[3, 3, 1], 0.5).unwrap();
        let g = gate_broadcast(&x, &half).unwrap();
        for (a, b) in g.data().iter().zip(x.data()) {
            assert_eq!(*a, 0.5 * b);
        }
        assert!(gate_broadcast(&x, &Tensor::zeros(&[3, 2, 1]).unwrap()).is_err());
    }

    #[test]
    fn global_pool_examples() {
        let t = Tensor::new(&[2, 2, 1], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(global_avg_pool(&t).unwrap().data(), &[2.5]);
        let t = Tensor::filled(&[3, 2, 4], 0.25).unwrap();
        assert_eq!(global_avg_pool(&t).unwrap().data(), &[0.25; 4]);
        let t = random_map(5, 5, 3, 77);
        let got = global_avg_pool(&t).unwrap();
        for k in 0..3 {
            let mut s = 0.0f64;
            for i in 0..5 {
                for j in 0..5 {
                    s += t.at3(i, j, k) as f64;
                }
            }
            assert!((got.data()[k] as f64 - s / 25.0).abs() < 1e-6);
        }
    }

    fn map_strategy() -> impl Strategy<Value = Tensor> {
        (1usize..7, 1usize..7, 1usize..6).prop_flat_map(|(h, w, c)| {
            proptest::collection::vec(-10.0f32..10.0, h * w * c)
                .prop_map(move |d| Tensor::new(&[h, w, c], d).unwrap())
        })
    }

    proptest! {
        #[test]
        fn mean_bounded_by_max(x in map_strategy()) {
            let mean = channel_mean(&x).unwrap();
            let max = channel_max(&x).unwrap();
            let (_, _, c) = x.dims3().unwrap();
            for (p, px) in x.data().chunks_exact(c).enumerate() {
                let all_equal = px.iter().all(|&v| v == px[0]);
                prop_assert!(mean.data()[p] <= max.data()[p] + 1e-6);
                if !all_equal {
                    prop_assert!(mean.data()[p] < max.data()[p]);
                }
            }
        }

        #[test]
        fn shapes_are_preserved(x in map_strategy(), k in prop::sample::select(vec![1usize, 3, 5])) {
            let (h, w, c) = x.dims3().unwrap();
            prop_assert_eq!(channel_mean(&x).unwrap().shape().to_vec(), vec![h, w, 1]);
            prop_assert_eq!(channel_max(&x).unwrap().shape().to_vec(), vec![h, w, 1]);
            let a = concat_channels(&channel_mean(&x).unwrap(), &channel_max(&x).unwrap()).unwrap();
            prop_assert_eq!(a.shape().to_vec(), vec![h, w, 2]);
            let kern = Tensor::filled(&[k, k, 2], 0.1).unwrap();
            let m = sigmoid_map(&conv2d_same(&a, &kern, 0.0).unwrap());
            prop_assert_eq!(m.shape().to_vec(), vec![h, w, 1]);
            prop_assert_eq!(gate_broadcast(&x, &m).unwrap().shape().to_vec(), vec![h, w, c]);
            prop_assert_eq!(global_avg_pool(&x).unwrap().shape().to_vec(), vec![c]);
        }

        #[test]
        fn conv_is_linear(
            seed in any::<u64>(),
            h in 1usize..7,
            w in 1usize..7,
            k in prop::sample::select(vec![1usize, 3, 5]),
            alpha in -3.0f32..3.0,
        ) {
            let x = random_map(h, w, 2, seed);
            let y = random_map(h, w, 2, seed ^ 1);
            let kern = random_map(k, k, 2, seed ^ 2);
            let lhs = conv2d_same(&x.add(&y).unwrap(), &kern, 0.0).unwrap();
            let rhs = conv2d_same(&x, &kern, 0.0).unwrap().add(&conv2d_same(&y, &kern, 0.0).unwrap()).unwrap();
            let scaled = conv2d_same(&x.map(|v| alpha * v), &kern, 0.0).unwrap();
            let base = conv2d_same(&x, &kern, 0.0).unwrap();
            for i in 0..lhs.len() {
                let (a, b) = (lhs.data()[i], rhs.data()[i]);
                prop_assert!((a - b).abs() <= 1e-5 * a.abs().max(b.abs()).max(1.0));
                let (s, t) = (scaled.data()[i], alpha * base.data()[i]);
                prop_assert!((s - t).abs() <= 1e-5 * s.abs().max(t.abs()).max(1.0));
            }
        }

        #[test]
        fn gating_composes(x in map_strategy(), seed in any::<u64>()) {
            let (h, w, _) = x.dims3().unwrap();
            let m1 = sigmoid_map(&random_map(h, w, 1, seed));
            let m2 = sigmoid_map(&random_map(h, w, 1, seed ^ 5));
            let prod = Tensor::new(&[h, w, 1], m1.data().iter().zip(m2.data()).map(|(a, b)| a * b).collect()).unwrap();
            let twice = gate_broadcast(&gate_broadcast(&x, &m1).unwrap(), &m2).unwrap();
            let once = gate_broadcast(&x, &prod).unwrap();
            for (a, b) in twice.data().iter().zip(once.data()) {
                prop_assert!((a - b).abs() <= 1e-6 * a.abs().max(1.0));
            }
        }
    }
}
