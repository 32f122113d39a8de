//! The joint training loop and model checkpoints.
//!
//! Each iteration draws one co-occurrence edge, one seed pair and one
//! labeled pattern (by default), and applies the matching step function in
//! that order. Parameters are shared between workers without locks; with one
//! worker the run is a pure function of the inputs and `rng_seed`.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Mutex;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::distributional::{
    lc_objective, lc_step, ls_objective, ls_step, sample_ls_negative, sample_negatives, score_d,
    BilinearWeights, EmbeddingTable,
};
use crate::error::{Error, Result};
use crate::graph::{CoocGraph, EdgeSampler, NoiseDistribution};
use crate::params::{Gradient, Matrix};
use crate::patterns::{
    op_objective, op_step, score_p, FeatureConfig, LabeledPattern, PairIndex, PatternClassifier,
    PreparedPattern,
};
use crate::seeds::SeedSet;
use crate::vocab::{SenseId, SensePair, Vocabulary};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub iterations: u64,
    pub lr: f64,
    pub negatives: usize,
    pub dim: usize,
    /// Weight of the pattern vote at inference.
    pub lambda: f64,
    pub window: usize,
    pub n_gram: usize,
    /// The syntactic feature space has `2^hash_bits` dimensions.
    pub hash_bits: u32,
    pub max_path_len: usize,
    pub rng_seed: u64,
    pub threads: usize,
    /// Train the pattern classifier. Off gives the distributional-only model.
    pub use_patterns: bool,
    /// Steps of the co-occurrence, ranking and pattern parts per iteration.
    pub part_rates: [u32; 3],
    /// Linear decay of the learning rate towards zero over the run.
    pub lr_decay: bool,
    /// Progress log interval in iterations; 0 disables the log.
    pub log_every: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            iterations: 1_000_000,
            lr: 0.01,
            negatives: 5,
            dim: 100,
            lambda: 0.1,
            window: 5,
            n_gram: 3,
            hash_bits: 20,
            max_path_len: 8,
            rng_seed: 0,
            threads: 1,
            use_patterns: true,
            part_rates: [1, 1, 1],
            lr_decay: false,
            log_every: 100_000,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidArgument(format!("train config: {what}")));
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return bad("lr must be positive");
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return bad("lambda must be non-negative");
        }
        if self.negatives == 0 || self.dim == 0 || self.window == 0 || self.n_gram == 0 || self.threads == 0 {
            return bad("negatives, dim, window, n_gram and threads must be positive");
        }
        if !(1..=30).contains(&self.hash_bits) {
            return bad("hash_bits must be in 1..=30");
        }
        if self.max_path_len < 2 {
            return bad("max_path_len must be at least 2");
        }
        if self.part_rates.iter().all(|&r| r == 0) {
            return bad("at least one part rate must be positive");
        }
        Ok(())
    }

    pub fn features(&self) -> FeatureConfig {
        FeatureConfig {
            n_max: self.n_gram,
            hash_dims: 1 << self.hash_bits,
        }
    }
}

/// The jointly trained parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub table: EmbeddingTable,
    pub bilinear: BilinearWeights,
    pub classifier: Option<PatternClassifier>,
    pub vocab_hash: u64,
    pub config: TrainConfig,
}

/// Stream of the initialization generator; workers use streams `1..`.
const INIT_STREAM: u64 = 0;

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

impl Model {
    pub fn init(num_senses: usize, vocab_hash: u64, config: &TrainConfig) -> Self {
        let mut rng = rng_for(config.rng_seed, INIT_STREAM);
        Model {
            table: EmbeddingTable::new(num_senses, config.dim, &mut rng),
            bilinear: BilinearWeights::ones(config.dim),
            classifier: config
                .use_patterns
                .then(|| PatternClassifier::zeros(config.dim, config.features())),
            vocab_hash,
            config: config.clone(),
        }
    }

    pub fn num_senses(&self) -> usize {
        self.table.num_senses()
    }

    pub fn dim(&self) -> usize {
        self.table.dim()
    }

    pub fn score_d(&self, u: SenseId, v: SenseId) -> f64 {
        score_d(&self.table, &self.bilinear, u, v)
    }

    /// Pattern vote for `(u, v)`; `None` without co-mentions or without a classifier.
    pub fn score_p(&self, index: &PairIndex, u: SenseId, v: SenseId) -> Option<f64> {
        let clf = self.classifier.as_ref()?;
        score_p(clf, &self.table, index, u, v)
    }

    pub fn all_finite(&self) -> bool {
        self.table.x.data().all_finite()
            && self.table.c.data().all_finite()
            && self.bilinear.diag.all_finite()
            && self.classifier.as_ref().is_none_or(|c| c.weights().all_finite())
    }

    fn check_consistent(&self) -> Result<()> {
        let d = self.dim();
        let ok = self.bilinear.dim() == d
            && self.config.dim == d
            && self.classifier.as_ref().is_none_or(|c| c.dim() == d);
        if ok {
            Ok(())
        } else {
            Err(Error::Checkpoint("component dimensions disagree".into()))
        }
    }
}

/// A labeled training pattern with its syntactic features precomputed.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingPattern {
    pub features: PreparedPattern,
    pub positive: bool,
}

pub fn prepare_patterns(
    index: &PairIndex,
    labeled: &[LabeledPattern],
    features: FeatureConfig,
) -> Vec<TrainingPattern> {
    labeled
        .iter()
        .map(|l| TrainingPattern {
            features: PreparedPattern::new(index.get(l.pattern), features),
            positive: l.positive,
        })
        .collect()
}

/// Objective values of the steps taken in one iteration (before the update).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StepReport {
    pub iteration: u64,
    pub lc: Option<f64>,
    pub ls: Option<f64>,
    pub op: Option<f64>,
}

impl StepReport {
    pub fn total(&self) -> f64 {
        self.lc.unwrap_or(0.0) + self.ls.unwrap_or(0.0) + self.op.unwrap_or(0.0)
    }
}

/// Samplers and training data for one run.
pub struct Trainer<'a> {
    config: TrainConfig,
    edges: EdgeSampler,
    noise: NoiseDistribution,
    seed_pairs: Vec<SensePair>,
    seed_neighbours: HashMap<SenseId, Vec<SenseId>>,
    patterns: &'a [TrainingPattern],
    num_senses: usize,
}

impl<'a> Trainer<'a> {
    pub fn new(
        graph: &CoocGraph,
        seeds: &SeedSet,
        patterns: &'a [TrainingPattern],
        config: &TrainConfig,
    ) -> Result<Self> {
        config.validate()?;
        if graph.is_empty() {
            return Err(Error::EmptyDistribution("co-occurrence graph has no edges".into()));
        }
        if seeds.pairs().is_empty() {
            return Err(Error::InvalidArgument("no seed synonym pairs to train on".into()));
        }
        if config.use_patterns && config.part_rates[2] > 0 && patterns.is_empty() {
            return Err(Error::NoPositivePatterns(
                "the pattern part is enabled but there are no labeled patterns".into(),
            ));
        }
        Ok(Trainer {
            config: config.clone(),
            edges: EdgeSampler::new(graph)?,
            noise: NoiseDistribution::from_graph(graph)?,
            seed_pairs: seeds.pairs().iter().copied().collect(),
            seed_neighbours: seeds.neighbours(),
            patterns,
            num_senses: graph.num_senses(),
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn init_model(&self, vocab_hash: u64) -> Model {
        Model::init(self.num_senses, vocab_hash, &self.config)
    }

    fn lr_at(&self, iteration: u64) -> f64 {
        if !self.config.lr_decay || self.config.iterations == 0 {
            return self.config.lr;
        }
        let frac = iteration as f64 / self.config.iterations as f64;
        self.config.lr * (1.0 - frac).max(1e-4)
    }

    fn sample_seed<R: Rng + ?Sized>(&self, rng: &mut R) -> (SenseId, SenseId) {
        let pair = self.seed_pairs[rng.random_range(0..self.seed_pairs.len())];
        if rng.random::<bool>() {
            (pair.first(), pair.second())
        } else {
            (pair.second(), pair.first())
        }
    }

    fn patterns_enabled(&self, model: &Model) -> bool {
        self.config.use_patterns && model.classifier.is_some() && !self.patterns.is_empty()
    }

    /// One iteration of the loop.
    pub fn step<R: Rng + ?Sized>(&self, model: &Model, iteration: u64, rng: &mut R) -> Result<StepReport> {
        let lr = self.lr_at(iteration);
        let [n_lc, n_ls, n_op] = self.config.part_rates;
        let mut report = StepReport { iteration, ..Default::default() };
        let check = |g: &Gradient, part: &'static str| {
            if g.is_finite() {
                Ok(g.objective)
            } else {
                Err(Error::NonFinite { part, iteration })
            }
        };
        for _ in 0..n_lc {
            let edge = self.edges.sample(rng);
            let g = lc_step(&model.table, edge, &self.noise, self.config.negatives, lr, rng);
            *report.lc.get_or_insert(0.0) += check(&g, "lc")?;
        }
        for _ in 0..n_ls {
            let (u, v) = self.sample_seed(rng);
            let exclude = self.seed_neighbours.get(&u).map(Vec::as_slice).unwrap_or(&[]);
            let Some(v_neg) = sample_ls_negative(self.num_senses, u, exclude, rng) else {
                continue;
            };
            let g = ls_step(&model.table, &model.bilinear, (u, v), v_neg, lr);
            *report.ls.get_or_insert(0.0) += check(&g, "ls")?;
        }
        if self.patterns_enabled(model) {
            let clf = model.classifier.as_ref().expect("checked");
            for _ in 0..n_op {
                let p = &self.patterns[rng.random_range(0..self.patterns.len())];
                let g = op_step(clf, &model.table, &p.features, p.positive, lr);
                *report.op.get_or_insert(0.0) += check(&g, "op")?;
            }
        }
        Ok(report)
    }

    /// Runs `config.iterations` iterations on `model`, calling `observer` with
    /// every step report of the first worker.
    pub fn run(
        &self,
        model: &Model,
        mut observer: Option<&mut (dyn FnMut(&StepReport) + Send)>,
    ) -> Result<()> {
        if !model.all_finite() {
            return Err(Error::NonFinite { part: "init", iteration: 0 });
        }
        let threads = self.config.threads.max(1) as u64;
        let total = self.config.iterations;
        if threads == 1 {
            let mut rng = rng_for(self.config.rng_seed, 1);
            let mut log = ProgressLog::new(self.config.log_every);
            for it in 0..total {
                let r = self.step(model, it, &mut rng)?;
                log.record(&r, model);
                if let Some(obs) = observer.as_deref_mut() {
                    obs(&r);
                }
            }
        } else {
            let stop = AtomicBool::new(false);
            let first_error: Mutex<Option<Error>> = Mutex::new(None);
            std::thread::scope(|scope| {
                for w in 0..threads {
                    let obs = if w == 0 { observer.take() } else { None };
                    let (stop, first_error) = (&stop, &first_error);
                    scope.spawn(move || {
                        let mut obs = obs;
                        let mut rng = rng_for(self.config.rng_seed, w + 1);
                        let mut log = ProgressLog::new(if w == 0 { self.config.log_every } else { 0 });
                        let mut it = w;
                        while it < total && !stop.load(Ordering::Relaxed) {
                            match self.step(model, it, &mut rng) {
                                Ok(r) => {
                                    log.record(&r, model);
                                    if let Some(obs) = obs.as_deref_mut() {
                                        obs(&r);
                                    }
                                }
                                Err(e) => {
                                    stop.store(true, Ordering::Relaxed);
                                    first_error.lock().expect("poisoned").get_or_insert(e);
                                    return;
                                }
                            }
                            it += threads;
                        }
                    });
                }
            });
            if let Some(e) = first_error.into_inner().expect("poisoned") {
                return Err(e);
            }
        }
        if !model.all_finite() {
            return Err(Error::NonFinite { part: "final", iteration: total });
        }
        Ok(())
    }
}

/// Averages step objectives over a log interval and emits one line per interval.
struct ProgressLog {
    every: u64,
    sums: [f64; 3],
    counts: [u64; 3],
}

impl ProgressLog {
    fn new(every: u64) -> Self {
        ProgressLog { every, sums: [0.0; 3], counts: [0; 3] }
    }

    fn record(&mut self, r: &StepReport, model: &Model) {
        if self.every == 0 {
            return;
        }
        for (k, v) in [r.lc, r.ls, r.op].into_iter().enumerate() {
            if let Some(v) = v {
                self.sums[k] += v;
                self.counts[k] += 1;
            }
        }
        if !(r.iteration + 1).is_multiple_of(self.every) {
            return;
        }
        let mean = |k: usize| {
            if self.counts[k] == 0 {
                "na".to_string()
            } else {
                format!("{:.6}", self.sums[k] / self.counts[k] as f64)
            }
        };
        log::info!(
            "step={} lc={} ls={} op={} norm_x={:.6} norm_c={:.6} norm_wd={:.6} norm_wp={:.6} nan={}",
            r.iteration + 1,
            mean(0),
            mean(1),
            mean(2),
            model.table.x.data().norm(),
            model.table.c.data().norm(),
            model.bilinear.diag.norm(),
            model.classifier.as_ref().map_or(0.0, |c| c.weights().norm()),
            !model.all_finite(),
        );
        *self = ProgressLog::new(self.every);
    }
}

/// Trains a fresh model. See [`Trainer`].
pub fn train(
    graph: &CoocGraph,
    seeds: &SeedSet,
    patterns: &[TrainingPattern],
    config: &TrainConfig,
    vocab_hash: u64,
) -> Result<Model> {
    let trainer = Trainer::new(graph, seeds, patterns, config)?;
    let model = trainer.init_model(vocab_hash);
    trainer.run(&model, None)?;
    Ok(model)
}

/// Fixed sample of objective terms, for tracking the objective across a run
/// without the noise of freshly drawn samples.
pub struct ObjectiveProbe {
    edges: Vec<(SenseId, SenseId, Vec<SenseId>)>,
    ranks: Vec<(SenseId, SenseId, SenseId)>,
    patterns: Vec<TrainingPattern>,
}

impl ObjectiveProbe {
    pub fn new(trainer: &Trainer<'_>, size: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let edges = (0..size)
            .map(|_| {
                let (u, v) = trainer.edges.sample(&mut rng);
                let neg = sample_negatives(&trainer.noise, u, trainer.config.negatives, &mut rng);
                (u, v, neg)
            })
            .collect();
        let ranks = (0..size)
            .filter_map(|_| {
                let (u, v) = trainer.sample_seed(&mut rng);
                let exclude = trainer.seed_neighbours.get(&u).map(Vec::as_slice).unwrap_or(&[]);
                sample_ls_negative(trainer.num_senses, u, exclude, &mut rng).map(|n| (u, v, n))
            })
            .collect();
        let patterns = if trainer.patterns.is_empty() {
            Vec::new()
        } else {
            (0..size)
                .map(|_| trainer.patterns[rng.random_range(0..trainer.patterns.len())].clone())
                .collect()
        };
        ObjectiveProbe { edges, ranks, patterns }
    }

    /// Mean of each part's terms, summed over parts.
    pub fn evaluate(&self, model: &Model) -> f64 {
        let mean = |xs: Vec<f64>| {
            if xs.is_empty() {
                0.0
            } else {
                xs.iter().sum::<f64>() / xs.len() as f64
            }
        };
        let lc = mean(self.edges.iter().map(|(u, v, n)| lc_objective(&model.table, *u, *v, n)).collect());
        let ls = mean(
            self.ranks
                .iter()
                .map(|&(u, v, n)| ls_objective(&model.table, &model.bilinear, u, v, n))
                .collect(),
        );
        let op = match &model.classifier {
            Some(clf) => mean(
                self.patterns
                    .iter()
                    .map(|p| op_objective(clf, &model.table, &p.features, p.positive))
                    .collect(),
            ),
            None => 0.0,
        };
        lc + ls + op
    }
}

const MAGIC: &[u8; 8] = b"DPEMODEL";
const CHECKPOINT_VERSION: u32 = 1;

fn put_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_f64s(out: &mut Vec<u8>, values: &[f64]) {
    put_u64(out, values.len() as u64);
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

struct Cursor<'b> {
    buf: &'b [u8],
    pos: usize,
}

impl<'b> Cursor<'b> {
    fn take(&mut self, n: usize) -> Result<&'b [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| Error::Checkpoint("unexpected end of checkpoint".into()))?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64s(&mut self, expected: usize) -> Result<Vec<f64>> {
        let n = self.u64()? as usize;
        if n != expected {
            return Err(Error::Checkpoint(format!("expected {expected} values, found {n}")));
        }
        let bytes = self.take(n.checked_mul(8).ok_or_else(|| Error::Checkpoint("size overflow".into()))?)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }
}

impl Model {
    /// Binary checkpoint: magic, format version, vocabulary hash, config
    /// (JSON), shapes and little-endian parameters, then a SHA-256 of all
    /// preceding bytes.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        put_u64(&mut out, self.vocab_hash);
        let config = serde_json::to_vec(&self.config).expect("config serializes");
        put_u64(&mut out, config.len() as u64);
        out.extend_from_slice(&config);
        put_u64(&mut out, self.num_senses() as u64);
        put_u64(&mut out, self.dim() as u64);
        put_f64s(&mut out, &self.table.x.data().to_vec());
        put_f64s(&mut out, &self.table.c.data().to_vec());
        put_f64s(&mut out, &self.bilinear.to_vec());
        match &self.classifier {
            None => out.push(0),
            Some(clf) => {
                out.push(1);
                let f = clf.feature_config();
                put_u64(&mut out, f.n_max as u64);
                put_u64(&mut out, f.hash_dims as u64);
                put_f64s(&mut out, &clf.weights().to_vec());
            }
        }
        let digest = Sha256::digest(&out);
        out.extend_from_slice(&digest);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < MAGIC.len() + 4 + 32 || &bytes[..MAGIC.len()] != MAGIC {
            return Err(Error::Checkpoint("not a model checkpoint".into()));
        }
        let (body, digest) = bytes.split_at(bytes.len() - 32);
        if Sha256::digest(body).as_slice() != digest {
            return Err(Error::Checkpoint("checksum mismatch (truncated or corrupted file)".into()));
        }
        let mut cur = Cursor { buf: body, pos: MAGIC.len() };
        let version = u32::from_le_bytes(cur.take(4)?.try_into().expect("4 bytes"));
        if version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported checkpoint version {version}")));
        }
        let vocab_hash = cur.u64()?;
        let config_len = cur.u64()? as usize;
        let config: TrainConfig = serde_json::from_slice(cur.take(config_len)?)
            .map_err(|e| Error::Checkpoint(format!("config: {e}")))?;
        let n = cur.u64()? as usize;
        let d = cur.u64()? as usize;
        let x = cur.f64s(n * d)?;
        let c = cur.f64s(n * d)?;
        let w = cur.f64s(d)?;
        let classifier = match cur.take(1)?[0] {
            0 => None,
            1 => {
                let n_max = cur.u64()? as usize;
                let hash_dims = cur.u64()? as usize;
                let f = FeatureConfig { n_max, hash_dims };
                let weights = cur.f64s(d + hash_dims + 1)?;
                Some(PatternClassifier::from_weights(d, f, weights)?)
            }
            t => return Err(Error::Checkpoint(format!("bad classifier tag {t}"))),
        };
        if cur.pos != body.len() {
            return Err(Error::Checkpoint("trailing bytes".into()));
        }
        let model = Model {
            table: EmbeddingTable::from_parts(Matrix::from_vec(n, d, x), Matrix::from_vec(n, d, c)),
            bilinear: BilinearWeights::from_vec(w),
            classifier,
            vocab_hash,
            config,
        };
        model.check_consistent()?;
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        w.write_all(&self.to_bytes()).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Loads a checkpoint without checking it against a vocabulary.
    pub fn load_unchecked(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut bytes = Vec::new();
        File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    /// Loads a checkpoint and refuses it unless it was trained on `vocab`.
    pub fn restore(path: impl AsRef<Path>, vocab: &Vocabulary) -> Result<Self> {
        let model = Self::load_unchecked(path)?;
        let expected = vocab.content_hash();
        if model.vocab_hash != expected || model.num_senses() != vocab.len() {
            return Err(Error::VocabularyMismatch {
                expected,
                actual: model.vocab_hash,
            });
        }
        Ok(model)
    }
}
