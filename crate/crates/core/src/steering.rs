//! Genetic search for additive perturbations of the classifier's support
//! neurons that push sampled music toward a target sentiment.

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::midi::{decode, MidiPiece};
use crate::mlstm::{sample, MlstmParams, Real, SampleConfig};
use crate::sentiment::{encode_phrase, SentimentClassifier};
use crate::vocab::Word;

/// How genes act on the model.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SteeringStrategy {
    /// Added to each support neuron's cell value after every cell update.
    #[default]
    CellState,
    /// Added once to the candidate bias `b_h` of each support neuron.
    CandidateBias,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GaConfig {
    pub population: usize,
    pub generations: usize,
    pub crossover_rate: f64,
    /// Per-gene probability of being redrawn.
    pub mutation_rate: f64,
    /// Genes are drawn from `[-gene_range, gene_range]`.
    pub gene_range: f64,
    pub elite: usize,
    /// Pieces sampled per fitness evaluation.
    pub pieces: usize,
    pub piece_length: usize,
    pub temperature: f64,
    /// Desired sentiment, 0 or 1.
    pub target: u8,
    pub strategy: SteeringStrategy,
    pub seed: u64,
}

impl Default for GaConfig {
    fn default() -> Self {
        Self {
            population: 100,
            generations: 100,
            crossover_rate: 0.95,
            mutation_rate: 0.10,
            gene_range: 2.0,
            elite: 1,
            pieces: 30,
            piece_length: 256,
            temperature: 1.0,
            target: 1,
            strategy: SteeringStrategy::CellState,
            seed: 0,
        }
    }
}

impl GaConfig {
    pub fn validate(&self) -> Result<()> {
        let rate = |r: f64| (0.0..=1.0).contains(&r);
        if !rate(self.crossover_rate) || !rate(self.mutation_rate) {
            return Err(Error::invalid("crossover and mutation rates must lie in [0, 1]"));
        }
        if self.population < 2 || self.elite >= self.population || self.pieces == 0 || self.piece_length == 0 {
            return Err(Error::invalid("population must be at least 2 and exceed the elite; pieces and length positive"));
        }
        if self.target > 1 || self.gene_range.is_nan() || self.gene_range <= 0.0 || self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(Error::invalid("target must be 0 or 1, gene range positive, temperature non-negative"));
        }
        Ok(())
    }
}

/// Error of a gene vector to minimize, in `[0, 1]`.
pub trait Fitness: Sync {
    /// `seed` is fresh for every individual of every generation.
    fn fitness(&self, genes: &[f64], seed: u64) -> f64;
}

impl<T: Fn(&[f64], u64) -> f64 + Sync> Fitness for T {
    fn fitness(&self, genes: &[f64], seed: u64) -> f64 {
        self(genes, seed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Individual {
    pub genes: Vec<f64>,
    pub fitness: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub generation: usize,
    pub best: f64,
    pub mean: f64,
    pub best_ever: f64,
}

#[derive(Debug, Clone)]
pub struct GaOutcome {
    pub best: Individual,
    pub log: Vec<GenerationRecord>,
}

/// Element-wise mean of two gene vectors.
pub fn crossover(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| 0.5 * (x + y)).collect()
}

/// Redraws each gene with probability `rate` from `[-range, range]`.
pub fn mutate(genes: &mut [f64], rate: f64, range: f64, rng: &mut impl Rng) {
    for g in genes {
        if rng.gen::<f64>() < rate {
            *g = rng.gen_range(-range..=range);
        }
    }
}

/// Roulette-wheel draw of `count` indices with weight `1 - fitness`;
/// uniform when all weights vanish or coincide.
pub fn select_parents(fitness: &[f64], count: usize, rng: &mut impl Rng) -> Vec<usize> {
    let weights: Vec<f64> = fitness.iter().map(|f| (1.0 - f).clamp(0.0, 1.0)).collect();
    let degenerate = weights.iter().all(|&w| w == weights[0]) || weights.iter().sum::<f64>() <= 0.0;
    if degenerate {
        return (0..count).map(|_| rng.gen_range(0..fitness.len())).collect();
    }
    let wheel = WeightedIndex::new(&weights).expect("positive total weight");
    (0..count).map(|_| wheel.sample(rng)).collect()
}

/// Decorrelated per-evaluation seed.
pub fn derive_seed(base: u64, generation: u64, individual: u64) -> u64 {
    let mut z = base ^ generation.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ individual.wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn best_of(pop: &[Individual]) -> usize {
    (0..pop.len())
        .min_by(|&a, &b| pop[a].fitness.unwrap_or(f64::INFINITY).total_cmp(&pop[b].fitness.unwrap_or(f64::INFINITY)))
        .expect("nonempty population")
}

/// Evolves `n_genes`-long individuals for `cfg.generations` generations:
/// evaluate, log, then roulette-select `population` parents, pair
/// neighbours into `population - elite` children (averaged with probability
/// `crossover_rate`), mutate them, and carry the elite over unchanged with
/// its fitness cached.
pub fn run_ga(fitness: &impl Fitness, n_genes: usize, cfg: &GaConfig) -> Result<GaOutcome> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut pop: Vec<Individual> = (0..cfg.population)
        .map(|_| Individual { genes: (0..n_genes).map(|_| rng.gen_range(-cfg.gene_range..=cfg.gene_range)).collect(), fitness: None })
        .collect();
    let mut best_ever: Option<Individual> = None;
    let mut log = Vec::with_capacity(cfg.generations);
    for generation in 0..cfg.generations {
        let scores: Vec<(usize, f64)> = pop
            .par_iter()
            .enumerate()
            .filter(|(_, ind)| ind.fitness.is_none())
            .map(|(i, ind)| (i, fitness.fitness(&ind.genes, derive_seed(cfg.seed, generation as u64, i as u64))))
            .collect();
        for (i, f) in scores {
            pop[i].fitness = Some(f);
        }
        let fits: Vec<f64> = pop.iter().map(|i| i.fitness.expect("evaluated")).collect();
        let best = best_of(&pop);
        if best_ever.as_ref().is_none_or(|b| fits[best] < b.fitness.expect("cached")) {
            best_ever = Some(pop[best].clone());
        }
        let record = GenerationRecord {
            generation,
            best: fits[best],
            mean: fits.iter().sum::<f64>() / fits.len() as f64,
            best_ever: best_ever.as_ref().and_then(|b| b.fitness).expect("set above"),
        };
        log::info!("generation {generation}: best {:.4} mean {:.4}", record.best, record.mean);
        log.push(record);
        if generation + 1 == cfg.generations {
            break;
        }

        let mut order: Vec<usize> = (0..pop.len()).collect();
        order.sort_by(|&a, &b| fits[a].total_cmp(&fits[b]));
        let mut next: Vec<Individual> = order[..cfg.elite].iter().map(|&i| pop[i].clone()).collect();
        let parents = select_parents(&fits, cfg.population, &mut rng);
        for pair in parents.windows(2).take(cfg.population - cfg.elite) {
            let (a, b) = (&pop[pair[0]].genes, &pop[pair[1]].genes);
            let mut genes = if rng.gen::<f64>() < cfg.crossover_rate { crossover(a, b) } else { a.clone() };
            mutate(&mut genes, cfg.mutation_rate, cfg.gene_range, &mut rng);
            next.push(Individual { genes, fitness: None });
        }
        pop = next;
    }
    Ok(GaOutcome { best: best_ever.expect("at least one generation"), log })
}

/// Gene vectors mapped onto the model.
#[derive(Debug, Clone)]
pub struct Steering {
    pub support: Vec<usize>,
    pub genes: Vec<f64>,
    pub strategy: SteeringStrategy,
}

impl Steering {
    pub fn new(support: Vec<usize>, genes: Vec<f64>, strategy: SteeringStrategy) -> Result<Self> {
        if support.len() != genes.len() {
            return Err(Error::invalid(format!("{} genes for a support of {}", genes.len(), support.len())));
        }
        Ok(Self { support, genes, strategy })
    }

    /// Samples one piece (seed word included) under this steering.
    pub fn sample<F: Real>(&self, params: &MlstmParams<F>, cfg: &SampleConfig) -> Vec<usize> {
        let seed = [Word::StepEnd.id()];
        let offsets: Vec<(usize, f64)> = self.support.iter().copied().zip(self.genes.iter().copied()).collect();
        let body = match self.strategy {
            SteeringStrategy::CellState => sample(params, &seed, cfg, Some(&offsets)),
            SteeringStrategy::CandidateBias => {
                let mut p = params.clone();
                for &(j, d) in &offsets {
                    p.candidate.b[j] += F::from_f64(d).expect("gene");
                }
                sample(&p, &seed, cfg, None)
            }
        };
        seed.into_iter().chain(body).collect()
    }
}

/// Mean squared error between classifier probabilities of steered samples
/// and the target sentiment.
pub struct ModelFitness<'a, F> {
    pub params: &'a MlstmParams<F>,
    pub classifier: &'a SentimentClassifier,
    pub support: Vec<usize>,
    pub cfg: GaConfig,
}

impl<'a, F: Real + Send + Sync> ModelFitness<'a, F> {
    pub fn new(params: &'a MlstmParams<F>, classifier: &'a SentimentClassifier, cfg: GaConfig) -> Result<Self> {
        if classifier.weights.len() != params.dims.hidden {
            return Err(Error::invalid("classifier width differs from the model's hidden size"));
        }
        let support = classifier.support_indices();
        if support.is_empty() {
            return Err(Error::invalid("classifier has an empty support; nothing to steer"));
        }
        Ok(Self { params, classifier, support, cfg })
    }
}

impl<F: Real + Send + Sync> Fitness for ModelFitness<'_, F> {
    fn fitness(&self, genes: &[f64], seed: u64) -> f64 {
        let steering = Steering::new(self.support.clone(), genes.to_vec(), self.cfg.strategy).expect("gene count");
        let target = self.cfg.target as f64;
        let total: f64 = (0..self.cfg.pieces)
            .map(|k| {
                let cfg =
                    SampleConfig { length: self.cfg.piece_length, temperature: self.cfg.temperature, seed: derive_seed(seed, 0, k as u64) };
                let ids = steering.sample(self.params, &cfg);
                let p = self.classifier.predict(encode_phrase(self.params, &ids).view());
                (p - target).powi(2)
            })
            .sum();
        total / self.cfg.pieces as f64
    }
}

#[derive(Debug, Clone)]
pub struct GeneratedPiece {
    /// Sampled words, starting with the `.` seed.
    pub words: Vec<Word>,
    pub midi: MidiPiece,
    /// Classifier probability of the positive class, when a classifier is given.
    pub probability: Option<f64>,
}

/// Samples `count` pieces of up to `length` words under `steering` (or
/// unsteered) and decodes each to MIDI.
pub fn steered_generate<F: Real + Send + Sync>(
    params: &MlstmParams<F>,
    steering: Option<&Steering>,
    classifier: Option<&SentimentClassifier>,
    count: usize,
    cfg: &SampleConfig,
) -> Vec<GeneratedPiece> {
    let plain = Steering { support: Vec::new(), genes: Vec::new(), strategy: SteeringStrategy::CellState };
    let steering = steering.unwrap_or(&plain);
    (0..count)
        .into_par_iter()
        .map(|k| {
            let ids = steering.sample(params, &SampleConfig { seed: derive_seed(cfg.seed, 1, k as u64), ..*cfg });
            let words: Vec<Word> = ids.iter().map(|&i| Word::from_id(i).expect("sampled id in vocabulary")).collect();
            let probability = classifier.map(|c| c.predict(encode_phrase(params, &ids).view()));
            GeneratedPiece { midi: decode(&words), words, probability }
        })
        .collect()
}

pub fn write_ga_log_csv(log: &[GenerationRecord], out: impl std::io::Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in log {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// The genes file written by the steering search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenesFile {
    pub support: Vec<usize>,
    pub genes: Vec<f64>,
    pub fitness: f64,
    pub target: u8,
    pub strategy: SteeringStrategy,
}
