//! Dependency-path patterns between co-mentioned strings, their features,
//! the logistic pattern classifier and pattern-vote scoring.
//!
//! A pattern is the sequence of `(lexeme, POS, deprel)` triples along the
//! tree path between the head tokens of two units, in sentence order. The two
//! endpoint lexemes are masked and render as `-`.
//!
//! Syntactic features are n-grams (`1 ≤ n ≤ n_max`) over the POS sequence and
//! over the dependency-label sequence, hashed with 64-bit FNV-1a (offset
//! `0xcbf29ce484222325`, prime `0x100000001b3`) over the UTF-8 bytes of
//! `"pos"` or `"dep"` followed by each gram element, all separated by `0x1f`,
//! and reduced modulo the number of hash dimensions. Indicator values are 0/1.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{normalize, Sentence, Unit};
use crate::distributional::{log_sigmoid, sigmoid, EmbeddingTable};
use crate::error::{Error, Result};
use crate::params::{Block, Gradient, ParamVec};
use crate::seeds::SeedSet;
use crate::vocab::{SenseId, SensePair, Vocabulary};

pub const DEFAULT_MAX_PATH_LEN: usize = 8;
pub const DEFAULT_NGRAM: usize = 3;
pub const DEFAULT_HASH_BITS: u32 = 20;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Triple {
    /// Normalized token surface; `None` for a masked endpoint.
    pub lexeme: Option<String>,
    pub pos: String,
    pub deprel: String,
}

impl Triple {
    pub fn new(lexeme: Option<&str>, pos: &str, deprel: &str) -> Self {
        Triple {
            lexeme: lexeme.map(str::to_string),
            pos: pos.to_string(),
            deprel: deprel.to_string(),
        }
    }
}

impl fmt::Display for Triple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "({},{},{})",
            self.lexeme.as_deref().unwrap_or("-"),
            self.pos,
            self.deprel
        )
    }
}

/// Renders a triple sequence the way patterns are usually printed: `(-,NN,dobj) (-,NN,appos)`.
pub fn render(triples: &[Triple]) -> String {
    triples
        .iter()
        .map(Triple::to_string)
        .collect::<Vec<_>>()
        .join(" ")
}

/// A path between two units, before it is attached to vocabulary senses.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PathPattern {
    pub triples: Vec<Triple>,
    /// Token indices along the path, from the first endpoint to the second.
    pub tokens: Vec<usize>,
}

/// Token indices from `a` up to the root.
fn ancestors(sentence: &Sentence, a: usize) -> Result<Vec<usize>> {
    let n = sentence.tokens.len();
    let mut chain = vec![a];
    let mut cur = a;
    while let Some(h) = sentence.tokens[cur].head {
        if h >= n || chain.len() > n {
            return Err(Error::Structure {
                line: 0,
                doc_id: sentence.doc_id.clone(),
                sent_id: sentence.sent_id,
                message: format!("token {a} does not reach the root"),
            });
        }
        chain.push(h);
        cur = h;
    }
    Ok(chain)
}

/// The unique tree path between tokens `a` and `b`, inclusive.
pub fn dependency_path(sentence: &Sentence, a: usize, b: usize) -> Result<Vec<usize>> {
    let up_a = ancestors(sentence, a)?;
    let up_b = ancestors(sentence, b)?;
    let pos_in_a: HashMap<usize, usize> = up_a.iter().enumerate().map(|(i, &t)| (t, i)).collect();
    let (j, i) = up_b
        .iter()
        .enumerate()
        .find_map(|(j, t)| pos_in_a.get(t).map(|&i| (j, i)))
        .ok_or_else(|| Error::Structure {
            line: 0,
            doc_id: sentence.doc_id.clone(),
            sent_id: sentence.sent_id,
            message: format!("tokens {a} and {b} are not connected"),
        })?;
    let mut path = up_a[..=i].to_vec();
    path.extend(up_b[..j].iter().rev());
    Ok(path)
}

/// Extracts the pattern between units `a` and `b` of `sentence`.
/// Returns `None` when the path has more than `max_path_len` triples.
pub fn extract_pattern(
    sentence: &Sentence,
    a: &Unit,
    b: &Unit,
    max_path_len: usize,
) -> Result<Option<PathPattern>> {
    if a.head == b.head {
        return Err(Error::InvalidArgument("pattern endpoints must be distinct units".into()));
    }
    let tokens = dependency_path(sentence, a.head, b.head)?;
    if tokens.len() > max_path_len {
        return Ok(None);
    }
    let triples = tokens
        .iter()
        .map(|&t| {
            let tok = &sentence.tokens[t];
            let lexeme = (t != a.head && t != b.head).then(|| normalize(&tok.surface));
            Triple {
                lexeme,
                pos: tok.pos.clone(),
                deprel: tok.deprel.clone(),
            }
        })
        .collect();
    Ok(Some(PathPattern { triples, tokens }))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatternSource {
    pub doc_id: String,
    pub sent_id: u64,
    pub pair: SensePair,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pattern {
    pub triples: Vec<Triple>,
    /// Senses of the non-endpoint units crossed by the path, one per path
    /// token; tokens of out-of-vocabulary units contribute nothing.
    pub lexemes: Vec<SenseId>,
    pub source: PatternSource,
}

impl Pattern {
    pub fn signature(&self) -> String {
        render(&self.triples)
    }
}

/// Which co-mentioned unit pairs get indexed.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PairScope {
    /// Pairs where at least one unit is a mention span (linked or not).
    #[default]
    Mentions,
    /// Every pair of in-vocabulary units.
    All,
}

/// Index from unordered sense pairs to the patterns of sentences mentioning both.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PairIndex {
    patterns: Vec<Pattern>,
    by_pair: HashMap<SensePair, Vec<usize>>,
}

impl PairIndex {
    pub fn from_patterns(patterns: Vec<Pattern>) -> Self {
        let mut by_pair: HashMap<SensePair, Vec<usize>> = HashMap::new();
        for (i, p) in patterns.iter().enumerate() {
            by_pair.entry(p.source.pair).or_default().push(i);
        }
        PairIndex { patterns, by_pair }
    }

    pub fn add_sentence(
        &mut self,
        sentence: &Sentence,
        vocab: &Vocabulary,
        max_path_len: usize,
        scope: PairScope,
    ) -> Result<()> {
        let units = sentence.units();
        let mut unit_of_token = vec![0usize; sentence.tokens.len()];
        for (k, u) in units.iter().enumerate() {
            unit_of_token[u.start..u.end].fill(k);
        }
        let senses: Vec<Option<SenseId>> = units.iter().map(|u| vocab.unit_sense(u)).collect();
        for i in 0..units.len() {
            let Some(si) = senses[i] else { continue };
            for j in i + 1..units.len() {
                let Some(sj) = senses[j] else { continue };
                if scope == PairScope::Mentions && !units[i].is_mention && !units[j].is_mention {
                    continue;
                }
                let Some(pair) = SensePair::new(si, sj) else { continue };
                let Some(path) = extract_pattern(sentence, &units[i], &units[j], max_path_len)? else {
                    continue;
                };
                let lexemes = path
                    .tokens
                    .iter()
                    .map(|&t| unit_of_token[t])
                    .filter(|&k| k != i && k != j)
                    .filter_map(|k| senses[k])
                    .collect();
                let idx = self.patterns.len();
                self.patterns.push(Pattern {
                    triples: path.triples,
                    lexemes,
                    source: PatternSource {
                        doc_id: sentence.doc_id.clone(),
                        sent_id: sentence.sent_id,
                        pair,
                    },
                });
                self.by_pair.entry(pair).or_default().push(idx);
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.patterns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patterns.is_empty()
    }

    pub fn patterns(&self) -> &[Pattern] {
        &self.patterns
    }

    pub fn get(&self, i: usize) -> &Pattern {
        &self.patterns[i]
    }

    /// Pattern ids for the pair, in insertion order.
    pub fn pattern_ids(&self, u: SenseId, v: SenseId) -> &[usize] {
        SensePair::new(u, v)
            .and_then(|p| self.by_pair.get(&p))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn patterns_for(&self, u: SenseId, v: SenseId) -> impl Iterator<Item = &Pattern> {
        self.pattern_ids(u, v).iter().map(|&i| &self.patterns[i])
    }

    /// Indexed pairs in ascending order.
    pub fn pairs(&self) -> Vec<SensePair> {
        let mut out: Vec<SensePair> = self.by_pair.keys().copied().collect();
        out.sort_unstable();
        out
    }

    /// One JSON object per pattern.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for p in &self.patterns {
            serde_json::to_writer(&mut out, p)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(input: R) -> Result<Self> {
        let mut patterns = Vec::new();
        for (i, line) in input.lines().enumerate() {
            let line = line.map_err(|source| Error::IoContext {
                context: "reading patterns".into(),
                source,
            })?;
            if line.trim().is_empty() {
                continue;
            }
            let p: Pattern = serde_json::from_str(&line).map_err(|e| Error::Parse {
                line: i + 1,
                field: "pattern".into(),
                message: e.to_string(),
            })?;
            if p.triples.is_empty() {
                return Err(Error::Parse {
                    line: i + 1,
                    field: "triples".into(),
                    message: "empty pattern".into(),
                });
            }
            patterns.push(p);
        }
        Ok(Self::from_patterns(patterns))
    }
}

/// Indexes every co-mentioned unit pair of the corpus.
pub fn build_pair_index<'a>(
    corpus: impl IntoIterator<Item = &'a Sentence>,
    vocab: &Vocabulary,
    max_path_len: usize,
    scope: PairScope,
) -> Result<PairIndex> {
    let mut index = PairIndex::default();
    for s in corpus {
        index.add_sentence(s, vocab, max_path_len, scope)?;
    }
    Ok(index)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub n_max: usize,
    pub hash_dims: usize,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            n_max: DEFAULT_NGRAM,
            hash_dims: 1 << DEFAULT_HASH_BITS,
        }
    }
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(parts: &[&str]) -> u64 {
    let mut h = FNV_OFFSET;
    for (i, part) in parts.iter().enumerate() {
        if i > 0 {
            h ^= 0x1f;
            h = h.wrapping_mul(FNV_PRIME);
        }
        for &b in part.as_bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(FNV_PRIME);
        }
    }
    h
}

fn ngram_hashes(kind: &str, seq: &[&str], n_max: usize, out: &mut Vec<u64>) {
    for n in 1..=n_max {
        for gram in seq.windows(n) {
            let mut parts = Vec::with_capacity(n + 1);
            parts.push(kind);
            parts.extend_from_slice(gram);
            out.push(fnv1a(&parts));
        }
    }
}

/// Hashes of every POS and deprel n-gram, before reduction and deduplication.
/// There are `max(0, L - n + 1)` grams per sequence for each `n`.
pub fn syntactic_ngrams(triples: &[Triple], n_max: usize) -> Vec<u64> {
    let pos: Vec<&str> = triples.iter().map(|t| t.pos.as_str()).collect();
    let dep: Vec<&str> = triples.iter().map(|t| t.deprel.as_str()).collect();
    let mut out = Vec::new();
    ngram_hashes("pos", &pos, n_max, &mut out);
    ngram_hashes("dep", &dep, n_max, &mut out);
    out
}

/// Active hashed feature indices, sorted and deduplicated.
pub fn syntactic_indices(triples: &[Triple], cfg: FeatureConfig) -> Vec<u32> {
    let mut idx: Vec<u32> = syntactic_ngrams(triples, cfg.n_max)
        .into_iter()
        .map(|h| (h % cfg.hash_dims as u64) as u32)
        .collect();
    idx.sort_unstable();
    idx.dedup();
    idx
}

/// Mean of the embedding rows of `lexemes`; zero when empty.
pub fn lexical_mean(table: &EmbeddingTable, lexemes: &[SenseId]) -> Vec<f64> {
    let mut mean = vec![0.0; table.dim()];
    if lexemes.is_empty() {
        return mean;
    }
    for &s in lexemes {
        for (m, x) in mean.iter_mut().zip(table.embedding(s)) {
            *m += x;
        }
    }
    let n = lexemes.len() as f64;
    for m in &mut mean {
        *m /= n;
    }
    mean
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatternFeatures {
    pub lexical: Vec<f64>,
    pub syntactic: Vec<u32>,
}

pub fn featurize(pattern: &Pattern, table: &EmbeddingTable, cfg: FeatureConfig) -> PatternFeatures {
    PatternFeatures {
        lexical: lexical_mean(table, &pattern.lexemes),
        syntactic: syntactic_indices(&pattern.triples, cfg),
    }
}

/// Pattern with its model-independent features precomputed.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedPattern {
    pub lexemes: Vec<SenseId>,
    pub syntactic: Vec<u32>,
}

impl PreparedPattern {
    pub fn new(pattern: &Pattern, cfg: FeatureConfig) -> Self {
        PreparedPattern {
            lexemes: pattern.lexemes.clone(),
            syntactic: syntactic_indices(&pattern.triples, cfg),
        }
    }
}

/// Logistic classifier over `[lexical (d) | hashed syntactic (H) | bias]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PatternClassifier {
    weights: ParamVec,
    dim: usize,
    features: FeatureConfig,
}

impl PatternClassifier {
    pub fn zeros(dim: usize, features: FeatureConfig) -> Self {
        PatternClassifier {
            weights: ParamVec::zeros(dim + features.hash_dims + 1),
            dim,
            features,
        }
    }

    pub fn from_weights(dim: usize, features: FeatureConfig, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != dim + features.hash_dims + 1 {
            return Err(Error::InvalidArgument(format!(
                "classifier expects {} weights, got {}",
                dim + features.hash_dims + 1,
                weights.len()
            )));
        }
        Ok(PatternClassifier {
            weights: ParamVec::from_vec(weights),
            dim,
            features,
        })
    }

    pub fn weights(&self) -> &ParamVec {
        &self.weights
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn feature_config(&self) -> FeatureConfig {
        self.features
    }

    pub fn num_weights(&self) -> usize {
        self.weights.len()
    }

    pub fn bias_index(&self) -> usize {
        self.dim + self.features.hash_dims
    }

    pub fn syntactic_index(&self, feature: u32) -> usize {
        self.dim + feature as usize
    }

    pub fn logit(&self, f: &PatternFeatures) -> f64 {
        assert_eq!(f.lexical.len(), self.dim, "lexical feature dimension mismatch");
        let mut z = self.weights.get(self.bias_index());
        for (k, &v) in f.lexical.iter().enumerate() {
            z += self.weights.get(k) * v;
        }
        for &s in &f.syntactic {
            z += self.weights.get(self.syntactic_index(s));
        }
        z
    }

    pub fn apply(&self, g: &Gradient, lr: f64) {
        for &(i, v) in g.classifier() {
            self.weights.add(i, lr * v);
        }
    }
}

/// `P(y = 1 | pattern)`.
pub fn classify(clf: &PatternClassifier, f: &PatternFeatures) -> f64 {
    sigmoid(clf.logit(f))
}

fn prepared_features(table: &EmbeddingTable, p: &PreparedPattern) -> PatternFeatures {
    PatternFeatures {
        lexical: lexical_mean(table, &p.lexemes),
        syntactic: p.syntactic.clone(),
    }
}

/// `ln P(y | pattern)` for the given label.
pub fn op_objective(
    clf: &PatternClassifier,
    table: &EmbeddingTable,
    p: &PreparedPattern,
    positive: bool,
) -> f64 {
    let z = clf.logit(&prepared_features(table, p));
    if positive {
        log_sigmoid(z)
    } else {
        log_sigmoid(-z)
    }
}

/// Gradient of the log-likelihood with respect to the classifier weights and,
/// through the lexical mean, the embedding rows of the path lexemes.
pub fn op_gradient(
    clf: &PatternClassifier,
    table: &EmbeddingTable,
    p: &PreparedPattern,
    positive: bool,
) -> Gradient {
    let f = prepared_features(table, p);
    let z = clf.logit(&f);
    let y = if positive { 1.0 } else { 0.0 };
    let mut g = Gradient::new(if positive { log_sigmoid(z) } else { log_sigmoid(-z) });
    let coef = y - sigmoid(z);
    for (k, &v) in f.lexical.iter().enumerate() {
        g.accumulate_classifier(k, coef * v);
    }
    for &s in &f.syntactic {
        g.accumulate_classifier(clf.syntactic_index(s), coef);
    }
    g.accumulate_classifier(clf.bias_index(), coef);
    if !p.lexemes.is_empty() {
        let w_lex: Vec<f64> = (0..clf.dim).map(|k| clf.weights.get(k)).collect();
        let share = coef / p.lexemes.len() as f64;
        for &s in &p.lexemes {
            g.accumulate(Block::Embedding(s), &w_lex, share);
        }
    }
    g
}

/// One ascent step on the pattern log-likelihood.
pub fn op_step(
    clf: &PatternClassifier,
    table: &EmbeddingTable,
    p: &PreparedPattern,
    positive: bool,
    lr: f64,
) -> Gradient {
    let g = op_gradient(clf, table, p, positive);
    clf.apply(&g, lr);
    table.apply(&g, lr);
    g
}

/// Mean classifier probability over the patterns of `(u, v)`; `None` when the
/// pair is never co-mentioned.
pub fn score_p(
    clf: &PatternClassifier,
    table: &EmbeddingTable,
    index: &PairIndex,
    u: SenseId,
    v: SenseId,
) -> Option<f64> {
    let ids = index.pattern_ids(u, v);
    if ids.is_empty() {
        return None;
    }
    let cfg = clf.feature_config();
    let total: f64 = ids
        .iter()
        .map(|&i| classify(clf, &featurize(index.get(i), table, cfg)))
        .sum();
    Some(total / ids.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledPattern {
    /// Index into the [`PairIndex`].
    pub pattern: usize,
    pub positive: bool,
}

/// Labels training patterns: every pattern of a seed pair is positive; negatives
/// come from randomly ordered co-mentioned pairs outside `exclude`, taken pair
/// by pair until they at least match the positives in number.
pub fn collect_training_patterns<R: Rng + ?Sized>(
    index: &PairIndex,
    seeds: &SeedSet,
    exclude: &BTreeSet<SensePair>,
    rng: &mut R,
) -> Result<Vec<LabeledPattern>> {
    let mut out: Vec<LabeledPattern> = Vec::new();
    let pairs = index.pairs();
    for &p in &pairs {
        if seeds.pairs().contains(&p) {
            out.extend(index.by_pair[&p].iter().map(|&i| LabeledPattern {
                pattern: i,
                positive: true,
            }));
        }
    }
    let n_pos = out.len();
    if n_pos == 0 {
        return Err(Error::NoPositivePatterns(format!(
            "none of the {} seed pairs is co-mentioned in an indexed sentence",
            seeds.pairs().len()
        )));
    }
    let mut candidates: Vec<SensePair> = pairs
        .into_iter()
        .filter(|p| !seeds.pairs().contains(p) && !exclude.contains(p))
        .collect();
    candidates.shuffle(rng);
    let mut n_neg = 0;
    for p in candidates {
        if n_neg >= n_pos {
            break;
        }
        for &i in &index.by_pair[&p] {
            out.push(LabeledPattern {
                pattern: i,
                positive: false,
            });
            n_neg += 1;
        }
    }
    Ok(out)
}
