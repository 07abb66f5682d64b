//! Feature-map files, dataset manifests, stratified splits and the synthetic
//! dataset generator.

pub mod fmap;
mod manifest;
mod split;
pub mod synth;

pub use manifest::{DatasetManifest, Sample, SampleEntry, Split};
pub use split::{apportion, check_fractions, split_dataset, DEFAULT_FRACTIONS};
pub use synth::{synthesize, SyntheticSpec};
