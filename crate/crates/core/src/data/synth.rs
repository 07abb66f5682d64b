//! Synthetic line-pattern feature maps.
//!
//! Negatives are pure Gaussian noise. Positives add a one-cell-wide straight
//! segment of fixed intensity on a contiguous block of half the channels, so
//! the class signal is spatially localized.

use std::fs;
use std::path::Path;

use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use super::fmap;
use super::manifest::{DatasetManifest, SampleEntry};
use crate::error::{Error, Result};
use crate::seed::{rng_from_seed, Rng};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub count_per_class: usize,
    pub feature_shape: [usize; 3],
    pub line_intensity: f32,
    pub noise_sigma: f32,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.count_per_class == 0 {
            return Err(Error::Config("count per class must be at least 1".into()));
        }
        if self.feature_shape.contains(&0) {
            return Err(Error::Config(format!(
                "feature shape {:?} has a zero dimension",
                self.feature_shape
            )));
        }
        if !(self.line_intensity.is_finite() && self.line_intensity > 0.0) {
            return Err(Error::Config("line intensity must be positive".into()));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err(Error::Config("noise sigma must be non-negative".into()));
        }
        Ok(())
    }
}

/// Raster cells of a random segment inside an `h×w` grid. The segment spans
/// between `ceil(min(h,w)/2)` and `min(h,w)` cells along its major axis.
pub fn random_segment(h: usize, w: usize, rng: &mut Rng) -> Vec<(usize, usize)> {
    let min_dim = h.min(w);
    let extent = rng.random_range(min_dim.div_ceil(2)..=min_dim);
    let theta = rng.random_range(0.0..std::f64::consts::PI);
    let (dir_r, dir_c) = (theta.cos(), theta.sin());
    let scale = (extent - 1) as f64 / dir_r.abs().max(dir_c.abs());
    let dr = (scale * dir_r).round() as isize;
    let dc = (scale * dir_c).round() as isize;
    let r0 = rng.random_range((-dr).max(0) as i64..=(h as isize - 1 - dr.max(0)) as i64) as isize;
    let c0 = rng.random_range((-dc).max(0) as i64..=(w as isize - 1 - dc.max(0)) as i64) as isize;
    let steps = dr.abs().max(dc.abs());
    (0..=steps)
        .map(|t| {
            let frac = if steps == 0 { 0.0 } else { t as f64 / steps as f64 };
            let r = r0 + (dr as f64 * frac).round() as isize;
            let c = c0 + (dc as f64 * frac).round() as isize;
            (r as usize, c as usize)
        })
        .collect()
}

/// Draws one feature map of the given class.
pub fn generate_sample(spec: &SyntheticSpec, label: u8, rng: &mut Rng) -> Result<Tensor> {
    let [h, w, c] = spec.feature_shape;
    let mut data = vec![0f32; h * w * c];
    if spec.noise_sigma > 0.0 {
        let normal = Normal::new(0.0f32, spec.noise_sigma)
            .map_err(|e| Error::Config(format!("noise distribution: {e}")))?;
        for v in &mut data {
            *v = normal.sample(rng);
        }
    }
    if label == 1 {
        let cells = random_segment(h, w, rng);
        let span = c.div_ceil(2);
        let first = rng.random_range(0..=c - span);
        for (r, col) in cells {
            for ch in first..first + span {
                data[(r * w + col) * c + ch] += spec.line_intensity;
            }
        }
    }
    Tensor::new(&[h, w, c], data)
}

/// Writes `count_per_class` negatives then positives as FMAP files plus a
/// `manifest.json` into `out_dir`.
pub fn synthesize(spec: &SyntheticSpec, out_dir: impl AsRef<Path>) -> Result<DatasetManifest> {
    spec.validate()?;
    let out_dir = out_dir.as_ref();
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut rng = rng_from_seed(spec.seed);
    let mut samples = Vec::with_capacity(2 * spec.count_per_class);
    for (label, prefix) in [(0u8, "neg"), (1u8, "pos")] {
        for i in 0..spec.count_per_class {
            let t = generate_sample(spec, label, &mut rng)?;
            let name = format!("{prefix}_{i:05}.fmap");
            fmap::write_file(&t, out_dir.join(&name))?;
            samples.push(SampleEntry {
                path: name,
                label,
                split: None,
            });
        }
    }
    let manifest = DatasetManifest {
        feature_shape: spec.feature_shape,
        samples,
    };
    manifest.save(out_dir.join("manifest.json"))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(sigma: f32) -> SyntheticSpec {
        SyntheticSpec {
            count_per_class: 4,
            feature_shape: [12, 10, 8],
            line_intensity: 1.0,
            noise_sigma: sigma,
            seed: 42,
        }
    }

    #[test]
    fn noiseless_samples_are_exactly_the_line() {
        let s = spec(0.0);
        let mut rng = rng_from_seed(1);
        for _ in 0..50 {
            let neg = generate_sample(&s, 0, &mut rng).unwrap();
            assert!(neg.data().iter().all(|&v| v == 0.0));
            let pos = generate_sample(&s, 1, &mut rng).unwrap();
            assert!(pos.data().iter().all(|&v| v == 0.0 || v == 1.0));
            let lit: Vec<usize> = pos
                .data()
                .chunks_exact(8)
                .map(|px| px.iter().filter(|&&v| v != 0.0).count())
                .collect();
            // Each line cell lights the same contiguous block of 4 channels.
            assert!(lit.iter().all(|&n| n == 0 || n == 4));
            let cells = lit.iter().filter(|&&n| n == 4).count();
            assert!(cells >= 5, "only {cells} cells");
            let mean_pos: f32 = pos.data().iter().sum::<f32>() / pos.len() as f32;
            let mean_neg: f32 = neg.data().iter().sum::<f32>() / neg.len() as f32;
            assert!(mean_pos > mean_neg);
        }
    }

    #[test]
    fn segments_stay_in_bounds_and_long_enough() {
        let mut rng = rng_from_seed(9);
        for (h, w) in [(12, 12), (3, 9), (1, 1), (2, 5), (7, 4)] {
            for _ in 0..500 {
                let cells = random_segment(h, w, &mut rng);
                assert!(cells.iter().all(|&(r, c)| r < h && c < w));
                let min_dim = h.min(w);
                assert!(cells.len() >= min_dim.div_ceil(2));
                let (r0, c0) = cells[0];
                let (r1, c1) = *cells.last().unwrap();
                let extent = r0.abs_diff(r1).max(c0.abs_diff(c1)) + 1;
                assert!(extent >= min_dim.div_ceil(2) && extent <= min_dim);
            }
        }
    }

    #[test]
    fn synthesize_writes_manifest_and_is_reproducible() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let s = SyntheticSpec { count_per_class: 50, ..spec(0.5) };
        let m = synthesize(&s, a.path()).unwrap();
        synthesize(&s, b.path()).unwrap();
        assert_eq!(m.samples.len(), 100);
        assert_eq!(m.samples.iter().filter(|e| e.label == 1).count(), 50);
        let loaded = DatasetManifest::load(a.path().join("manifest.json")).unwrap();
        assert_eq!(loaded, m);
        for name in ["manifest.json", "neg_00000.fmap", "pos_00049.fmap"] {
            assert_eq!(
                fs::read(a.path().join(name)).unwrap(),
                fs::read(b.path().join(name)).unwrap()
            );
        }
        assert_eq!(m.load_samples(a.path(), None).unwrap().len(), 100);
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(SyntheticSpec { count_per_class: 0, ..spec(0.1) }.validate().is_err());
        assert!(SyntheticSpec { line_intensity: 0.0, ..spec(0.1) }.validate().is_err());
        assert!(spec(-1.0).validate().is_err());
    }
}
