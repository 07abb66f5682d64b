//! Run configuration: defaults, overlaid by a flat JSON file, overlaid by
//! command-line flags.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use attnga_core::attention::DEFAULT_KERNEL_SIZE;
use attnga_core::data::{check_fractions, DEFAULT_FRACTIONS};
use attnga_core::{Error, GaConfig, Result, TrainConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub ga: GaConfig,
    pub train: TrainConfig,
    pub kernel_size: usize,
    pub manifest: Option<PathBuf>,
    pub split: [f64; 3],
    pub out: PathBuf,
    pub threshold: f32,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            ga: GaConfig::default(),
            train: TrainConfig::default(),
            kernel_size: DEFAULT_KERNEL_SIZE,
            manifest: None,
            split: DEFAULT_FRACTIONS,
            out: PathBuf::from("out"),
            threshold: 0.5,
        }
    }
}

/// Every key is optional; absent keys keep the lower-precedence value.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigLayer {
    pub population_size: Option<usize>,
    pub generations: Option<usize>,
    pub l_max: Option<usize>,
    pub n_min: Option<usize>,
    pub n_max: Option<usize>,
    pub p_add: Option<f64>,
    pub p_remove: Option<f64>,
    pub p_neuron: Option<f64>,
    pub elitism: Option<usize>,
    pub seed: Option<u64>,
    pub learning_rate: Option<f32>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub kernel_size: Option<usize>,
    pub manifest: Option<PathBuf>,
    pub split: Option<[f64; 3]>,
    pub out: Option<PathBuf>,
    pub threshold: Option<f32>,
}

impl ConfigLayer {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })
    }
}

impl RunConfig {
    pub fn apply(&mut self, layer: &ConfigLayer) {
        macro_rules! set {
            ($field:ident => $($target:tt)+) => {
                if let Some(v) = layer.$field.clone() {
                    self.$($target)+ = v;
                }
            };
        }
        set!(population_size => ga.population_size);
        set!(generations => ga.generations);
        set!(l_max => ga.max_layers);
        set!(n_min => ga.min_width);
        set!(n_max => ga.max_width);
        set!(p_add => ga.p_add);
        set!(p_remove => ga.p_remove);
        set!(p_neuron => ga.p_neuron);
        set!(elitism => ga.elitism);
        set!(learning_rate => train.learning_rate);
        set!(epochs => train.epochs);
        set!(batch_size => train.batch_size);
        set!(kernel_size => kernel_size);
        set!(split => split);
        set!(out => out);
        set!(threshold => threshold);
        if let Some(seed) = layer.seed {
            self.ga.seed = seed;
            self.train.seed = seed;
        }
        if let Some(m) = &layer.manifest {
            self.manifest = Some(m.clone());
        }
    }

    /// Defaults, then the optional config file, then flag overrides.
    pub fn resolve(file: Option<&Path>, flags: &ConfigLayer) -> Result<Self> {
        let mut config = RunConfig::default();
        if let Some(path) = file {
            config.apply(&ConfigLayer::from_file(path)?);
        }
        config.apply(flags);
        Ok(config)
    }

    pub fn seed(&self) -> u64 {
        self.ga.seed
    }

    pub fn validate(&self) -> Result<()> {
        self.ga.validate()?;
        self.train.validate()?;
        check_fractions(&self.split)?;
        if self.kernel_size.is_multiple_of(2) {
            return Err(Error::Config(format!("kernel_size = {} must be odd", self.kernel_size)));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::Config(format!("threshold = {} outside [0, 1]", self.threshold)));
        }
        Ok(())
    }

    pub fn manifest_path(&self) -> Result<&Path> {
        self.manifest
            .as_deref()
            .ok_or_else(|| Error::Config("no dataset manifest given (set `manifest` or --manifest)".into()))
    }
}
