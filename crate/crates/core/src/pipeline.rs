//! End-to-end wiring from a corpus and KB to a trained model.

use std::collections::BTreeSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Sentence;
use crate::error::Result;
use crate::graph::{build_graph_with_mode, CoocGraph, WindowMode};
use crate::patterns::{build_pair_index, collect_training_patterns, LabeledPattern, PairIndex, PairScope};
use crate::seeds::{collect_seeds, split_entities, validate_sentence_links, EntitySplit, KbSynonyms, SeedSet, SplitConfig};
use crate::trainer::{prepare_patterns, Model, TrainConfig, Trainer, TrainingPattern};
use crate::vocab::{build_vocabulary, SensePair, Vocabulary};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BuildConfig {
    pub min_count: u64,
    pub window: usize,
    pub window_mode: WindowMode,
    pub max_path_len: usize,
    pub pair_scope: PairScope,
    pub split: SplitConfig,
    pub split_seed: u64,
}

impl Default for BuildConfig {
    fn default() -> Self {
        BuildConfig {
            min_count: 10,
            window: 5,
            window_mode: WindowMode::Units,
            max_path_len: 8,
            pair_scope: PairScope::Mentions,
            split: SplitConfig::default(),
            split_seed: 0,
        }
    }
}

/// Everything derived from the corpus before training.
#[derive(Debug, Clone)]
pub struct Artifacts {
    pub vocab: Vocabulary,
    pub graph: CoocGraph,
    /// Seeds of every entity, test entities included.
    pub seeds: SeedSet,
    pub split: EntitySplit,
    pub index: PairIndex,
    /// Links dropped by KB validation.
    pub dropped_links: usize,
}

/// Validates links against the KB (in place) and derives all artifacts.
pub fn build(corpus: &mut [Sentence], kb: &KbSynonyms, cfg: &BuildConfig) -> Result<Artifacts> {
    let dropped_links = corpus.iter_mut().map(|s| validate_sentence_links(s, kb)).sum();
    let vocab = build_vocabulary(corpus.iter(), cfg.min_count)?;
    let graph = build_graph_with_mode(corpus.iter(), &vocab, cfg.window, cfg.window_mode)?;
    let seeds = collect_seeds(corpus.iter(), &vocab);
    let split = if seeds.is_empty() {
        EntitySplit {
            train: SeedSet::default(),
            warm: Vec::new(),
            cold: Vec::new(),
        }
    } else {
        split_entities(&seeds, kb, &vocab, cfg.split, cfg.split_seed)?
    };
    let index = build_pair_index(corpus.iter(), &vocab, cfg.max_path_len, cfg.pair_scope)?;
    Ok(Artifacts {
        vocab,
        graph,
        seeds,
        split,
        index,
        dropped_links,
    })
}

/// Stream reserved for drawing pattern negatives.
const LABEL_STREAM: u64 = u64::MAX;

impl Artifacts {
    /// Pattern labels from the training seeds; negatives avoid every seed pair,
    /// including those of test entities.
    pub fn labeled_patterns(&self, rng_seed: u64) -> Result<Vec<LabeledPattern>> {
        let exclude: BTreeSet<SensePair> = self.seeds.pairs().clone();
        let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
        rng.set_stream(LABEL_STREAM);
        collect_training_patterns(&self.index, &self.split.train, &exclude, &mut rng)
    }

    pub fn training_patterns(&self, cfg: &TrainConfig) -> Result<Vec<TrainingPattern>> {
        if !cfg.use_patterns {
            return Ok(Vec::new());
        }
        let labeled = self.labeled_patterns(cfg.rng_seed)?;
        Ok(prepare_patterns(&self.index, &labeled, cfg.features()))
    }

    pub fn train(&self, cfg: &TrainConfig) -> Result<Model> {
        let patterns = self.training_patterns(cfg)?;
        let trainer = Trainer::new(&self.graph, &self.split.train, &patterns, cfg)?;
        let model = trainer.init_model(self.vocab.content_hash());
        trainer.run(&model, None)?;
        Ok(model)
    }
}
