//! The commands behind the `attnga` binary, callable in-process.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use attnga_core::data::{fmap, split_dataset, synthesize, SyntheticSpec};
use attnga_core::ga::{run_ga, Evaluation, GaOutcome};
use attnga_core::metrics::{accumulate, MetricReport};
use attnga_core::network::{checkpoint, evaluate, train as fit};
use attnga_core::seed::rng_from_seed;
use attnga_core::{
    Architecture, AttentionClassifier, DatasetManifest, Error, Result, Sample, Split, Tensor, TrainConfig,
    TrainHistory,
};

use crate::config::RunConfig;

pub const GA_HISTORY_FILE: &str = "ga_history.csv";
pub const BEST_ARCH_FILE: &str = "best_arch.txt";
pub const BEST_MODEL_FILE: &str = "best_model.ckpt";
pub const MODEL_FILE: &str = "model.ckpt";
pub const TRAIN_HISTORY_FILE: &str = "train_history.csv";
pub const MANIFEST_FILE: &str = "manifest.json";

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes a synthetic dataset; with `split` set, the manifest is tagged
/// with a stratified split drawn from the same seed.
pub fn synth(spec: &SyntheticSpec, split: Option<[f64; 3]>, out: &Path) -> Result<DatasetManifest> {
    if let Some(fractions) = split {
        attnga_core::data::check_fractions(&fractions)?;
    }
    let manifest = synthesize(spec, out)?;
    match split {
        Some(fractions) => {
            let tagged = split_dataset(&manifest, fractions, spec.seed)?;
            tagged.save(out.join(MANIFEST_FILE))?;
            Ok(tagged)
        }
        None => Ok(manifest),
    }
}

/// Samples of each split, loaded and shape-checked.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub feature_shape: [usize; 3],
    pub train: Vec<Sample>,
    pub val: Vec<Sample>,
    pub test: Vec<Sample>,
}

impl Dataset {
    pub fn split(&self, split: Split) -> &[Sample] {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }
}

/// Uses the manifest's own tags when every sample has one; otherwise draws
/// a stratified split from the configured fractions and seed. A manifest
/// with only some samples tagged is rejected.
pub fn resolve_splits(manifest: &DatasetManifest, config: &RunConfig) -> Result<DatasetManifest> {
    let tagged = manifest.samples.iter().filter(|s| s.split.is_some()).count();
    if tagged == manifest.samples.len() {
        Ok(manifest.clone())
    } else if tagged == 0 {
        split_dataset(manifest, config.split, config.seed())
    } else {
        Err(Error::Config(format!(
            "manifest tags {tagged} of {} samples with a split; tag all or none",
            manifest.samples.len()
        )))
    }
}

pub fn load_dataset(config: &RunConfig) -> Result<Dataset> {
    let path = config.manifest_path()?;
    let manifest = resolve_splits(&DatasetManifest::load(path)?, config)?;
    let base = path.parent().unwrap_or(Path::new("."));
    let load = |split| manifest.load_samples(base, Some(split));
    Ok(Dataset {
        feature_shape: manifest.feature_shape,
        train: load(Split::Train)?,
        val: load(Split::Val)?,
        test: load(Split::Test)?,
    })
}

/// Initializes and trains one composite. The same seed drives parameter
/// initialization and batch shuffling.
pub fn train_candidate(
    arch: &Architecture,
    data: &Dataset,
    config: &RunConfig,
    seed: u64,
) -> Result<(AttentionClassifier, TrainHistory)> {
    let model = AttentionClassifier::init(
        config.kernel_size,
        arch,
        data.feature_shape[2],
        &mut rng_from_seed(seed),
    )?;
    let train_config = TrainConfig { seed, ..config.train };
    fit(model, &data.train, &data.val, &train_config)
}

#[derive(Debug, Clone)]
pub struct SearchReport {
    pub outcome: GaOutcome,
    pub model: AttentionClassifier,
    pub out_dir: PathBuf,
}

impl SearchReport {
    pub fn best_fitness(&self) -> f64 {
        self.outcome.best.fitness.unwrap_or(0.0)
    }
}

/// Evolves head architectures whose fitness is validation accuracy after
/// training, then retrains the winner with its recorded seed and saves it.
pub fn search(config: &RunConfig, evaluation: Evaluation) -> Result<SearchReport> {
    config.validate()?;
    let data = load_dataset(config)?;
    let fitness = |arch: &Architecture, seed: u64| {
        let (model, _) = train_candidate(arch, &data, config, seed)?;
        Ok(evaluate(&model, &data.val)?.1)
    };
    let outcome = run_ga(&config.ga, fitness, evaluation)?;
    let best = &outcome.best;
    let seed = best.eval_seed.expect("best individual was evaluated");
    let (model, _) = train_candidate(&best.chromosome, &data, config, seed)?;

    create_dir(&config.out)?;
    outcome.history.write_csv(config.out.join(GA_HISTORY_FILE))?;
    write_text(&config.out.join(BEST_ARCH_FILE), &format!("{}\n", best.chromosome))?;
    checkpoint::save(&model, config.out.join(BEST_MODEL_FILE))?;
    Ok(SearchReport {
        outcome,
        model,
        out_dir: config.out.clone(),
    })
}

/// Trains a single architecture and writes its checkpoint and history.
pub fn train(config: &RunConfig, arch: &Architecture) -> Result<(AttentionClassifier, TrainHistory)> {
    config.validate()?;
    let data = load_dataset(config)?;
    let (model, history) = train_candidate(arch, &data, config, config.seed())?;
    create_dir(&config.out)?;
    checkpoint::save(&model, config.out.join(MODEL_FILE))?;
    history.write_csv(config.out.join(TRAIN_HISTORY_FILE))?;
    Ok((model, history))
}

pub fn score(model: &AttentionClassifier, samples: &[Sample], threshold: f32) -> Result<MetricReport> {
    let predictions = samples
        .iter()
        .map(|s| model.predict(&s.features, threshold))
        .collect::<Result<Vec<_>>>()?;
    let labels: Vec<u8> = samples.iter().map(|s| s.label).collect();
    Ok(accumulate(&predictions, &labels)?.report())
}

/// Scores a saved checkpoint on one split of the configured dataset.
pub fn eval(config: &RunConfig, checkpoint_path: &Path, split: Split) -> Result<MetricReport> {
    config.validate()?;
    let model = checkpoint::load(checkpoint_path)?;
    let data = load_dataset(config)?;
    score(&model, data.split(split), config.threshold)
}

/// Binary PGM (P5) of an attention map scaled from [0, 1] to [0, 255].
pub fn encode_pgm(map: &Tensor) -> Vec<u8> {
    let (h, w) = (map.shape()[0], map.shape()[1]);
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    out.extend(
        map.data()
            .iter()
            .map(|&m| (m * 255.0).round().clamp(0.0, 255.0) as u8),
    );
    out
}

/// One line per row, comma-separated raw values.
pub fn encode_map_csv(map: &Tensor) -> String {
    let (h, w) = (map.shape()[0], map.shape()[1]);
    let mut out = String::new();
    for y in 0..h {
        for x in 0..w {
            if x > 0 {
                out.push(',');
            }
            let _ = write!(out, "{}", map.data()[y * w + x]);
        }
        out.push('\n');
    }
    out
}

/// Writes `<prefix>.pgm` and `<prefix>.csv` for the attention map the
/// checkpoint computes on one feature map.
pub fn attention_dump(checkpoint_path: &Path, fmap_path: &Path, prefix: &Path) -> Result<Tensor> {
    let model = checkpoint::load(checkpoint_path)?;
    let features = fmap::read_file(fmap_path)?;
    model.check_input(&features)?;
    let map = model.attention().attention_map(&features)?;
    if let Some(dir) = prefix.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    let with_ext = |ext: &str| {
        let mut p = prefix.as_os_str().to_owned();
        p.push(ext);
        PathBuf::from(p)
    };
    let pgm = with_ext(".pgm");
    fs::write(&pgm, encode_pgm(&map)).map_err(|e| Error::io(&pgm, e))?;
    write_text(&with_ext(".csv"), &encode_map_csv(&map))?;
    Ok(map)
}
