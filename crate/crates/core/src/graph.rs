//! Weighted string co-occurrence network, edge sampling and the
//! degree^(3/4) noise distribution used for negative sampling.

use std::collections::HashMap;
use std::io::Write;

use rand::distr::Distribution;
use rand::Rng;
use rand_distr::weighted::WeightedAliasIndex;
use serde::{Deserialize, Serialize};

use crate::corpus::Sentence;
use crate::error::{Error, Result};
use crate::vocab::{SenseId, SensePair, Vocabulary};

/// How the distance between two units is measured inside the window.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WindowMode {
    /// Positions are re-indexed densely after mention collapsing and
    /// out-of-vocabulary removal.
    #[default]
    Units,
    /// Distance is the difference of the units' first-token indices.
    Tokens,
}

/// Undirected co-occurrence counts. Edges are stored once per unordered pair,
/// sorted by pair; there are no self-edges.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoocGraph {
    edges: Vec<(SensePair, u64)>,
    degree: Vec<u64>,
    window: usize,
}

#[derive(Debug, Clone)]
pub struct GraphBuilder {
    counts: HashMap<SensePair, u64>,
    num_senses: usize,
    window: usize,
    mode: WindowMode,
}

impl GraphBuilder {
    pub fn new(num_senses: usize, window: usize, mode: WindowMode) -> Result<Self> {
        if window == 0 {
            return Err(Error::InvalidArgument("window must be at least 1".into()));
        }
        Ok(GraphBuilder {
            counts: HashMap::new(),
            num_senses,
            window,
            mode,
        })
    }

    pub fn add_sentence(&mut self, sentence: &Sentence, vocab: &Vocabulary) {
        let positioned: Vec<(usize, SenseId)> = sentence
            .units()
            .iter()
            .filter_map(|u| vocab.unit_sense(u).map(|id| (u.start, id)))
            .enumerate()
            .map(|(dense, (token, id))| match self.mode {
                WindowMode::Units => (dense, id),
                WindowMode::Tokens => (token, id),
            })
            .collect();
        for (i, &(pi, a)) in positioned.iter().enumerate() {
            for &(pj, b) in &positioned[i + 1..] {
                if pj - pi > self.window {
                    break;
                }
                if let Some(pair) = SensePair::new(a, b) {
                    *self.counts.entry(pair).or_insert(0) += 1;
                }
            }
        }
    }

    pub fn merge(&mut self, other: GraphBuilder) {
        for (k, v) in other.counts {
            *self.counts.entry(k).or_insert(0) += v;
        }
    }

    pub fn finish(self) -> CoocGraph {
        let mut edges: Vec<(SensePair, u64)> = self.counts.into_iter().collect();
        edges.sort_unstable();
        CoocGraph::from_edges(self.num_senses, self.window, edges)
    }
}

/// Counts co-occurrences of in-vocabulary units within `window` positions,
/// never crossing sentence boundaries.
pub fn build_graph<'a>(
    corpus: impl IntoIterator<Item = &'a Sentence>,
    vocab: &Vocabulary,
    window: usize,
) -> Result<CoocGraph> {
    build_graph_with_mode(corpus, vocab, window, WindowMode::Units)
}

pub fn build_graph_with_mode<'a>(
    corpus: impl IntoIterator<Item = &'a Sentence>,
    vocab: &Vocabulary,
    window: usize,
    mode: WindowMode,
) -> Result<CoocGraph> {
    let mut builder = GraphBuilder::new(vocab.len(), window, mode)?;
    for s in corpus {
        builder.add_sentence(s, vocab);
    }
    Ok(builder.finish())
}

impl CoocGraph {
    /// Builds a graph from explicit edges. Edges must be sorted, unique and
    /// carry positive weights.
    pub fn from_edges(num_senses: usize, window: usize, edges: Vec<(SensePair, u64)>) -> Self {
        let mut degree = vec![0u64; num_senses];
        for &(p, w) in &edges {
            assert!(w > 0, "edge weights are counts and must be positive");
            degree[p.first().index()] += w;
            degree[p.second().index()] += w;
        }
        debug_assert!(edges.windows(2).all(|w| w[0].0 < w[1].0));
        CoocGraph {
            edges,
            degree,
            window,
        }
    }

    pub fn edges(&self) -> &[(SensePair, u64)] {
        &self.edges
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn num_senses(&self) -> usize {
        self.degree.len()
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn degrees(&self) -> &[u64] {
        &self.degree
    }

    pub fn degree(&self, u: SenseId) -> u64 {
        self.degree[u.index()]
    }

    pub fn weight(&self, u: SenseId, v: SenseId) -> u64 {
        SensePair::new(u, v)
            .and_then(|p| self.edges.binary_search_by_key(&p, |&(q, _)| q).ok())
            .map_or(0, |i| self.edges[i].1)
    }

    pub fn total_weight(&self) -> u64 {
        self.edges.iter().map(|&(_, w)| w).sum()
    }

    /// Neighbours of `u` with weights, in ascending id order.
    pub fn neighbours(&self, u: SenseId) -> Vec<(SenseId, u64)> {
        let mut out: Vec<(SenseId, u64)> = self
            .edges
            .iter()
            .filter(|(p, _)| p.contains(u))
            .map(|&(p, w)| (if p.first() == u { p.second() } else { p.first() }, w))
            .collect();
        out.sort_unstable();
        out
    }

    /// Writes `u v weight` lines, one per edge.
    pub fn write_edges<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "# dpe-graph v1 senses={} window={}", self.num_senses(), self.window)?;
        for (p, w) in &self.edges {
            writeln!(out, "{} {} {}", p.first(), p.second(), w)?;
        }
        Ok(())
    }

    pub fn read_edges<R: std::io::BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines().enumerate();
        let bad = |line: usize, msg: &str| Error::Parse {
            line,
            field: "graph".into(),
            message: msg.into(),
        };
        let header = match lines.next() {
            Some((_, Ok(h))) => h,
            _ => return Err(bad(1, "missing header")),
        };
        let mut senses = None;
        let mut window = None;
        for tok in header.split_whitespace() {
            if let Some(v) = tok.strip_prefix("senses=") {
                senses = v.parse::<usize>().ok();
            } else if let Some(v) = tok.strip_prefix("window=") {
                window = v.parse::<usize>().ok();
            }
        }
        let (Some(senses), Some(window)) = (senses, window) else {
            return Err(bad(1, "bad header"));
        };
        let mut edges = Vec::new();
        for (i, line) in lines {
            let line = line.map_err(|source| Error::IoContext {
                context: "reading graph".into(),
                source,
            })?;
            if line.is_empty() {
                continue;
            }
            let nums: Vec<u64> = line
                .split_whitespace()
                .map(|t| t.parse::<u64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| bad(i + 1, "expected three integers"))?;
            let [u, v, w] = nums[..] else {
                return Err(bad(i + 1, "expected three integers"));
            };
            if u as usize >= senses || v as usize >= senses || w == 0 {
                return Err(bad(i + 1, "sense id out of range or zero weight"));
            }
            let pair = SensePair::new(SenseId(u as u32), SenseId(v as u32))
                .ok_or_else(|| bad(i + 1, "self-edge"))?;
            edges.push((pair, w));
        }
        edges.sort_unstable();
        if edges.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(bad(0, "duplicate edge"));
        }
        Ok(CoocGraph::from_edges(senses, window, edges))
    }
}

/// Draws edges with probability proportional to their weight.
#[derive(Debug, Clone)]
pub struct EdgeSampler {
    pairs: Vec<SensePair>,
    alias: WeightedAliasIndex<f64>,
}

impl EdgeSampler {
    pub fn new(graph: &CoocGraph) -> Result<Self> {
        if graph.is_empty() {
            return Err(Error::EmptyDistribution("co-occurrence graph has no edges".into()));
        }
        let weights = graph.edges.iter().map(|&(_, w)| w as f64).collect();
        let alias = WeightedAliasIndex::new(weights)
            .map_err(|e| Error::EmptyDistribution(format!("edge weights: {e}")))?;
        Ok(EdgeSampler {
            pairs: graph.edges.iter().map(|&(p, _)| p).collect(),
            alias,
        })
    }

    /// Returns `(u, v)`; the orientation is chosen uniformly.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (SenseId, SenseId) {
        let p = self.pairs[self.alias.sample(rng)];
        if rng.random::<bool>() {
            (p.first(), p.second())
        } else {
            (p.second(), p.first())
        }
    }
}

/// Noise distribution with mass proportional to `degree^(3/4)`.
#[derive(Debug, Clone)]
pub struct NoiseDistribution {
    mass: Vec<f64>,
    total: f64,
    alias: WeightedAliasIndex<f64>,
}

pub const NOISE_EXPONENT: f64 = 0.75;

impl NoiseDistribution {
    pub fn from_degrees(degrees: &[u64]) -> Result<Self> {
        let mass: Vec<f64> = degrees
            .iter()
            .map(|&d| (d as f64).powf(NOISE_EXPONENT))
            .collect();
        let total: f64 = mass.iter().sum();
        if total <= 0.0 {
            return Err(Error::EmptyDistribution("every degree is zero".into()));
        }
        let alias = WeightedAliasIndex::new(mass.clone())
            .map_err(|e| Error::EmptyDistribution(format!("noise weights: {e}")))?;
        Ok(NoiseDistribution { mass, total, alias })
    }

    pub fn from_graph(graph: &CoocGraph) -> Result<Self> {
        Self::from_degrees(graph.degrees())
    }

    pub fn probability(&self, u: SenseId) -> f64 {
        self.mass[u.index()] / self.total
    }

    pub fn len(&self) -> usize {
        self.mass.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mass.is_empty()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> SenseId {
        SenseId(self.alias.sample(rng) as u32)
    }
}
