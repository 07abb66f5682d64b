use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use attnga_cli::pipeline;
use attnga_cli::{exit_code, ConfigLayer, RunConfig, EXIT_CONFIG};
use attnga_core::data::SyntheticSpec;
use attnga_core::{Architecture, Error, Evaluation, Result, Split};

#[derive(Debug, Parser)]
#[command(name = "attnga", version, about = "Attention-gated classifier heads with genetic architecture search")]
struct Cli {
    /// Flat JSON run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed for every random stream.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Evaluate fitness on a pool of this many worker threads.
    #[arg(long, global = true)]
    parallel: Option<usize>,
    /// Output directory (file prefix for attention-dump).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct DataArgs {
    /// Dataset manifest.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Attention kernel size (odd).
    #[arg(long)]
    kernel_size: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long = "lr")]
    learning_rate: Option<f32>,
    #[arg(long)]
    batch_size: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic line-pattern dataset.
    Synth {
        /// Samples per class.
        #[arg(long, default_value_t = 50)]
        count: usize,
        /// Feature shape as HxWxC.
        #[arg(long, default_value = "12x12x8", value_parser = parse_shape)]
        shape: [usize; 3],
        #[arg(long, default_value_t = 2.0)]
        line_intensity: f32,
        #[arg(long, default_value_t = 0.5)]
        noise_sigma: f32,
        /// Tag samples with a stratified train,val,test split, e.g. 0.7,0.15,0.15.
        #[arg(long, value_parser = parse_fractions)]
        split: Option<[f64; 3]>,
    },
    /// Search head architectures with the genetic algorithm.
    Search {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        population_size: Option<usize>,
        #[arg(long)]
        generations: Option<usize>,
    },
    /// Train one architecture.
    Train {
        #[command(flatten)]
        data: DataArgs,
        /// Hidden-layer widths, dash-separated (e.g. 66-805-218-382).
        #[arg(long, value_parser = parse_arch)]
        arch: Architecture,
    },
    /// Score a checkpoint on one split and print metrics JSON.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long, default_value = "test")]
        split: Split,
        #[arg(long)]
        threshold: Option<f32>,
    },
    /// Export a checkpoint's attention map on one feature map as PGM and CSV.
    AttentionDump {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        fmap: PathBuf,
    },
}

fn parse_shape(s: &str) -> std::result::Result<[usize; 3], String> {
    let dims = s
        .split('x')
        .map(|d| d.trim().parse::<usize>().map_err(|_| format!("bad dimension {d:?}")))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    <[usize; 3]>::try_from(dims).map_err(|d| format!("expected HxWxC, got {} dimensions", d.len()))
}

fn parse_fractions(s: &str) -> std::result::Result<[f64; 3], String> {
    let parts = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|_| format!("bad fraction {p:?}")))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    <[f64; 3]>::try_from(parts).map_err(|p| format!("expected 3 fractions, got {}", p.len()))
}

fn parse_arch(s: &str) -> std::result::Result<Architecture, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

impl Cli {
    fn layer(&self) -> ConfigLayer {
        let mut layer = ConfigLayer {
            seed: self.seed,
            out: self.out.clone(),
            ..ConfigLayer::default()
        };
        let data = match &self.command {
            Command::Search { data, population_size, generations } => {
                layer.population_size = *population_size;
                layer.generations = *generations;
                Some(data)
            }
            Command::Train { data, .. } => Some(data),
            Command::Eval { manifest, threshold, .. } => {
                layer.manifest = manifest.clone();
                layer.threshold = *threshold;
                None
            }
            _ => None,
        };
        if let Some(d) = data {
            layer.manifest = d.manifest.clone();
            layer.kernel_size = d.kernel_size;
            layer.epochs = d.epochs;
            layer.learning_rate = d.learning_rate;
            layer.batch_size = d.batch_size;
        }
        layer
    }
}

fn run(cli: Cli) -> Result<()> {
    let config = RunConfig::resolve(cli.config.as_deref(), &cli.layer())?;
    match cli.command {
        Command::Synth { count, shape, line_intensity, noise_sigma, split } => {
            let spec = SyntheticSpec {
                count_per_class: count,
                feature_shape: shape,
                line_intensity,
                noise_sigma,
                seed: config.seed(),
            };
            let manifest = pipeline::synth(&spec, split, &config.out)?;
            println!(
                "wrote {} samples to {}",
                manifest.samples.len(),
                config.out.join(pipeline::MANIFEST_FILE).display()
            );
        }
        Command::Search { .. } => {
            let evaluation = match cli.parallel {
                Some(n) => Evaluation::Parallel(n),
                None => Evaluation::Serial,
            };
            let report = pipeline::search(&config, evaluation)?;
            println!("best_arch {}", report.outcome.best.chromosome);
            println!("best_fitness {}", report.best_fitness());
        }
        Command::Train { arch, .. } => {
            let (_, history) = pipeline::train(&config, &arch)?;
            if let Some(last) = history.last() {
                println!("val_accuracy {}", last.val_accuracy);
            }
        }
        Command::Eval { checkpoint, split, .. } => {
            println!("{}", pipeline::eval(&config, &checkpoint, split)?.to_json());
        }
        Command::AttentionDump { checkpoint, fmap } => {
            let prefix = cli
                .out
                .ok_or_else(|| Error::Config("attention-dump needs --out <prefix>".into()))?;
            pipeline::attention_dump(&checkpoint, &fmap, &prefix)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            let code = exit_code(&err);
            ExitCode::from(u8::try_from(code).unwrap_or(EXIT_CONFIG as u8))
        }
    }
}
