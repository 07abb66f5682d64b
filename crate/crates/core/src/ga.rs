//! Genetic search over classifier-head architectures.
//!
//! Operators (initialization, roulette selection, pairing, crossover,
//! mutation) draw from one master random stream. Fitness evaluations get
//! their own derived seeds, keyed by generation and population slot, so
//! evaluating a generation in parallel yields exactly the serial results.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::network::{ArchBounds, Architecture};
use crate::seed::{derive_seed, rng_from_seed, Rng};

/// Generations without an improvement beyond [`CONVERGENCE_TOLERANCE`]
/// after which the search stops.
pub const CONVERGENCE_PATIENCE: usize = 5;
pub const CONVERGENCE_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct GaConfig {
    pub population_size: usize,
    pub max_layers: usize,
    pub min_width: usize,
    pub max_width: usize,
    pub p_add: f64,
    pub p_remove: f64,
    pub p_neuron: f64,
    pub generations: usize,
    pub elitism: usize,
    pub seed: u64,
}

impl Default for GaConfig {
    fn default() -> Self {
        GaConfig {
            population_size: 8,
            max_layers: 5,
            min_width: 16,
            max_width: 1024,
            p_add: 0.2,
            p_remove: 0.2,
            p_neuron: 0.3,
            generations: 5,
            elitism: 1,
            seed: 0,
        }
    }
}

fn check_probability(name: &str, p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} = {p} is not a probability")))
    }
}

impl GaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population_size < 2 {
            return Err(Error::Config(format!(
                "population_size = {} must be at least 2",
                self.population_size
            )));
        }
        if self.max_layers == 0 {
            return Err(Error::Config("l_max must be at least 1".into()));
        }
        if self.min_width == 0 || self.min_width > self.max_width {
            return Err(Error::Config(format!(
                "width range {}..={} must be positive and non-empty",
                self.min_width, self.max_width
            )));
        }
        check_probability("p_add", self.p_add)?;
        check_probability("p_remove", self.p_remove)?;
        check_probability("p_neuron", self.p_neuron)?;
        if self.p_add + self.p_remove > 1.0 {
            return Err(Error::Config(format!(
                "p_add + p_remove = {} exceeds 1",
                self.p_add + self.p_remove
            )));
        }
        if self.generations == 0 {
            return Err(Error::Config("generations must be at least 1".into()));
        }
        if self.elitism >= self.population_size {
            return Err(Error::Config(format!(
                "elitism = {} must be below population_size = {}",
                self.elitism, self.population_size
            )));
        }
        Ok(())
    }

    pub fn bounds(&self) -> ArchBounds {
        ArchBounds {
            max_layers: self.max_layers,
            min_width: self.min_width,
            max_width: self.max_width,
        }
    }
}

/// A chromosome and, once evaluated, its fitness and the seed it was
/// evaluated with.
#[derive(Debug, Clone, PartialEq)]
pub struct Individual {
    pub chromosome: Architecture,
    pub fitness: Option<f64>,
    pub eval_seed: Option<u64>,
}

impl Individual {
    pub fn new(chromosome: Architecture) -> Self {
        Individual { chromosome, fitness: None, eval_seed: None }
    }

    pub fn evaluated(chromosome: Architecture, fitness: f64) -> Self {
        Individual { chromosome, fitness: Some(fitness), eval_seed: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationRecord {
    /// 0-based; generation 0 is the initial population.
    pub generation: usize,
    pub best_fitness: f64,
    pub mean_fitness: f64,
    pub best_chromosome: Architecture,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct GaHistory {
    pub records: Vec<GenerationRecord>,
}

impl GaHistory {
    pub const CSV_HEADER: &'static str = "generation,best_fitness,mean_fitness,best_chromosome";

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for r in &self.records {
            let _ = writeln!(
                out,
                "{},{},{},{}",
                r.generation, r.best_fitness, r.mean_fitness, r.best_chromosome
            );
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn best_fitness_series(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.best_fitness).collect()
    }
}

/// How fitness evaluations within one generation are scheduled.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Evaluation {
    Serial,
    /// A dedicated worker pool with this many threads.
    Parallel(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaOutcome {
    pub best: Individual,
    pub history: GaHistory,
    /// Number of distinct chromosomes whose fitness was computed.
    pub evaluations: usize,
}

/// Uniform layer count in `1..=max_layers`, uniform widths.
pub fn random_architecture(bounds: &ArchBounds, rng: &mut Rng) -> Architecture {
    let layers = rng.random_range(1..=bounds.max_layers);
    Architecture::from_widths(
        (0..layers)
            .map(|_| rng.random_range(bounds.min_width..=bounds.max_width))
            .collect(),
    )
}

pub fn init_population(config: &GaConfig, rng: &mut Rng) -> Result<Vec<Individual>> {
    config.validate()?;
    let bounds = config.bounds();
    Ok((0..config.population_size)
        .map(|_| Individual::new(random_architecture(&bounds, rng)))
        .collect())
}

/// Roulette-wheel lookup for a given `r` in (0, 1]: the unique `i` with
/// `C[i-1] < r <= C[i]` over cumulative normalized fitness. Returns `None`
/// when total fitness is zero.
pub fn roulette_pick(fitness: &[f64], r: f64) -> Option<usize> {
    let total: f64 = fitness.iter().sum();
    if total.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) {
        return None;
    }
    let mut cumulative = 0.0;
    let mut last_positive = None;
    for (i, &f) in fitness.iter().enumerate() {
        if f > 0.0 {
            last_positive = Some(i);
            cumulative += f / total;
            if r <= cumulative {
                return Some(i);
            }
        }
    }
    // Rounding can leave the final cumulative a hair below 1.
    last_positive
}

/// Fitness-proportional selection; uniform when every fitness is zero.
pub fn roulette_select(population: &[Individual], rng: &mut Rng) -> Result<usize> {
    if population.is_empty() {
        return Err(Error::Validation("cannot select from an empty population".into()));
    }
    let fitness = population
        .iter()
        .map(|ind| match ind.fitness {
            Some(f) if f >= 0.0 && f.is_finite() => Ok(f),
            Some(f) => Err(Error::Validation(format!(
                "fitness {f} of {} is not a non-negative number",
                ind.chromosome
            ))),
            None => Err(Error::Validation(format!(
                "individual {} has not been evaluated",
                ind.chromosome
            ))),
        })
        .collect::<Result<Vec<_>>>()?;
    // random() is in [0, 1); the wheel wants r in (0, 1].
    let r = 1.0 - rng.random::<f64>();
    Ok(match roulette_pick(&fitness, r) {
        Some(i) => i,
        None => rng.random_range(0..population.len()),
    })
}

/// Shuffles the pool and pairs neighbours; an odd leftover is paired with a
/// uniformly chosen member of the already-paired part.
pub fn pair_parents<T: Clone>(pool: &[T], rng: &mut Rng) -> Result<Vec<(T, T)>> {
    if pool.len() < 2 {
        return Err(Error::Validation(format!(
            "pairing needs at least 2 parents, got {}",
            pool.len()
        )));
    }
    let mut order: Vec<usize> = (0..pool.len()).collect();
    order.shuffle(rng);
    let paired = order.len() / 2 * 2;
    let mut pairs: Vec<(T, T)> = order[..paired]
        .chunks_exact(2)
        .map(|c| (pool[c[0]].clone(), pool[c[1]].clone()))
        .collect();
    if paired < order.len() {
        let mate = order[rng.random_range(0..paired)];
        pairs.push((pool[order[paired]].clone(), pool[mate].clone()));
    }
    Ok(pairs)
}

pub fn crossover(p1: &Architecture, p2: &Architecture, rng: &mut Rng) -> Architecture {
    let (a, b) = (p1.widths(), p2.widths());
    let n_child = if rng.random_bool(0.5) { a.len() } else { b.len() };
    let shared = a.len().min(b.len());
    let longer = if a.len() >= b.len() { a } else { b };
    let widths = (0..n_child)
        .map(|i| {
            if i < shared {
                if rng.random_bool(0.5) {
                    a[i]
                } else {
                    b[i]
                }
            } else {
                longer[i]
            }
        })
        .collect();
    Architecture::from_widths(widths)
}

pub fn mutate(child: &Architecture, config: &GaConfig, rng: &mut Rng) -> Architecture {
    let mut widths = child.widths().to_vec();
    let u: f64 = rng.random();
    if u < config.p_add {
        if widths.len() < config.max_layers {
            widths.push(rng.random_range(config.min_width..=config.max_width));
        }
    } else if u < config.p_add + config.p_remove && widths.len() > 1 {
        let at = rng.random_range(0..widths.len());
        widths.remove(at);
    }
    for w in &mut widths {
        if rng.random_bool(config.p_neuron) {
            *w = rng.random_range(config.min_width..=config.max_width);
        }
    }
    Architecture::from_widths(widths)
}

type Pending = (Architecture, u64);

fn evaluate_pending<F>(pending: &[Pending], fitness_fn: &F, mode: Evaluation) -> Result<Vec<Result<f64>>>
where
    F: Fn(&Architecture, u64) -> Result<f64> + Sync,
{
    let run = |(arch, seed): &Pending| fitness_fn(arch, *seed);
    Ok(match mode {
        Evaluation::Serial => pending.iter().map(run).collect(),
        Evaluation::Parallel(threads) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads.max(1))
                .build()
                .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
            pool.install(|| pending.par_iter().map(run).collect())
        }
    })
}

fn checked_fitness(arch: &Architecture, result: Result<f64>) -> Result<f64> {
    let fail = |source: Error| Error::Fitness {
        chromosome: arch.to_string(),
        source: Box::new(source),
    };
    let f = result.map_err(fail)?;
    if (0.0..=1.0).contains(&f) {
        Ok(f)
    } else {
        Err(fail(Error::Validation(format!("fitness {f} outside [0, 1]"))))
    }
}

/// Runs the generational loop. `fitness_fn` receives each distinct
/// chromosome once, with a seed derived from the master seed and the
/// generation/slot where the chromosome first appeared.
pub fn run_ga<F>(config: &GaConfig, fitness_fn: F, mode: Evaluation) -> Result<GaOutcome>
where
    F: Fn(&Architecture, u64) -> Result<f64> + Sync,
{
    config.validate()?;
    let mut rng = rng_from_seed(config.seed);
    let mut population = init_population(config, &mut rng)?;
    let mut cache: HashMap<Architecture, (f64, u64)> = HashMap::new();
    let mut history = GaHistory::default();
    let mut best: Option<Individual> = None;
    let mut best_so_far = f64::NEG_INFINITY;
    let mut stale = 0;

    for generation in 0..config.generations {
        let mut pending: Vec<Pending> = Vec::new();
        for (slot, ind) in population.iter().enumerate() {
            let arch = &ind.chromosome;
            if !cache.contains_key(arch) && !pending.iter().any(|(a, _)| a == arch) {
                let seed = derive_seed(config.seed, &[generation as u64, slot as u64]);
                pending.push((arch.clone(), seed));
            }
        }
        let results = evaluate_pending(&pending, &fitness_fn, mode)?;
        for ((arch, seed), result) in pending.into_iter().zip(results) {
            let f = checked_fitness(&arch, result)?;
            cache.insert(arch, (f, seed));
        }
        for ind in &mut population {
            let (f, seed) = cache[&ind.chromosome];
            ind.fitness = Some(f);
            ind.eval_seed = Some(seed);
        }

        let fitness: Vec<f64> = population.iter().map(|i| i.fitness.unwrap_or(0.0)).collect();
        let mut gen_best = 0;
        for (i, &f) in fitness.iter().enumerate() {
            if f > fitness[gen_best] {
                gen_best = i;
            }
        }
        let gen_best_fitness = fitness[gen_best];
        history.records.push(GenerationRecord {
            generation,
            best_fitness: gen_best_fitness,
            mean_fitness: fitness.iter().sum::<f64>() / fitness.len() as f64,
            best_chromosome: population[gen_best].chromosome.clone(),
        });
        if best.as_ref().is_none_or(|b| gen_best_fitness > b.fitness.unwrap_or(0.0)) {
            best = Some(population[gen_best].clone());
        }
        if gen_best_fitness > best_so_far + CONVERGENCE_TOLERANCE {
            best_so_far = gen_best_fitness;
            stale = 0;
        } else {
            stale += 1;
        }
        if stale >= CONVERGENCE_PATIENCE || generation + 1 == config.generations {
            break;
        }

        let mut ranked: Vec<usize> = (0..population.len()).collect();
        ranked.sort_by(|&a, &b| fitness[b].total_cmp(&fitness[a]));
        let mut next: Vec<Individual> = ranked[..config.elitism]
            .iter()
            .map(|&i| population[i].clone())
            .collect();

        let parents = (0..config.population_size)
            .map(|_| roulette_select(&population, &mut rng).map(|i| population[i].chromosome.clone()))
            .collect::<Result<Vec<_>>>()?;
        let wanted = config.population_size - config.elitism;
        let mut children = Vec::with_capacity(wanted);
        'pairs: for (p1, p2) in pair_parents(&parents, &mut rng)? {
            for _ in 0..2 {
                if children.len() == wanted {
                    break 'pairs;
                }
                let child = crossover(&p1, &p2, &mut rng);
                children.push(Individual::new(mutate(&child, config, &mut rng)));
            }
        }
        next.extend(children);
        population = next;
    }

    Ok(GaOutcome {
        best: best.expect("at least one generation runs"),
        history,
        evaluations: cache.len(),
    })
}
