//! Synonym queries: shortlist candidates by the summed bilinear score against
//! the entity's known names, then re-rank the shortlist with the pattern vote
//! added at weight `lambda`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::patterns::PairIndex;
use crate::trainer::Model;
use crate::vocab::{SenseId, Vocabulary};

pub const DEFAULT_K_POOL: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Query {
    pub entity_id: Option<String>,
    /// Known names of the entity, in summation order.
    pub names: Vec<SenseId>,
    /// Candidates, ascending and disjoint from `names`.
    pub pool: Vec<SenseId>,
    pub k_pool: usize,
    pub lambda: f64,
}

impl Query {
    /// Builds a query. Repeated names keep their first position; names are
    /// removed from the pool.
    pub fn new(
        entity_id: Option<String>,
        names: impl IntoIterator<Item = SenseId>,
        pool: impl IntoIterator<Item = SenseId>,
        k_pool: usize,
        lambda: f64,
    ) -> Result<Self> {
        let mut uniq = Vec::new();
        for n in names {
            if !uniq.contains(&n) {
                uniq.push(n);
            }
        }
        if uniq.is_empty() {
            return Err(Error::Query("a query needs at least one name string".into()));
        }
        if !lambda.is_finite() {
            return Err(Error::Query(format!("lambda must be finite, got {lambda}")));
        }
        let mut pool: Vec<SenseId> = pool.into_iter().filter(|s| !uniq.contains(s)).collect();
        pool.sort_unstable();
        pool.dedup();
        Ok(Query {
            entity_id,
            names: uniq,
            pool,
            k_pool,
            lambda,
        })
    }
}

/// Every sense not linked to an entity.
pub fn default_pool(vocab: &Vocabulary) -> Vec<SenseId> {
    vocab.unlinked().collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedCandidate {
    pub candidate: SenseId,
    pub combined: f64,
    pub distributional: f64,
    /// Sum of the pattern votes; names never co-mentioned with the candidate add 0.
    pub pattern: f64,
}

/// Candidates by non-increasing combined score, ties by ascending sense id.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RankedList {
    pub entries: Vec<RankedCandidate>,
}

impl RankedList {
    pub fn candidates(&self) -> Vec<SenseId> {
        self.entries.iter().map(|e| e.candidate).collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

fn by_score_then_id(a: (f64, SenseId), b: (f64, SenseId)) -> std::cmp::Ordering {
    b.0.total_cmp(&a.0).then(a.1.cmp(&b.1))
}

/// `Σ_s score_d(s, u)` over the names, summed in name order.
pub fn distributional_sum(model: &Model, names: &[SenseId], u: SenseId) -> f64 {
    names.iter().map(|&s| model.score_d(s, u)).sum()
}

/// The top `min(k_pool, |pool|)` candidates by summed distributional score.
pub fn shortlist(model: &Model, q: &Query) -> Result<Vec<(SenseId, f64)>> {
    if q.names.is_empty() {
        return Err(Error::Query("a query needs at least one name string".into()));
    }
    let mut scored: Vec<(f64, SenseId)> = q
        .pool
        .iter()
        .map(|&u| (distributional_sum(model, &q.names, u), u))
        .collect();
    scored.sort_by(|&a, &b| by_score_then_id(a, b));
    scored.truncate(q.k_pool);
    Ok(scored.into_iter().map(|(s, u)| (u, s)).collect())
}

/// Scores one candidate against all names.
pub fn score_candidate(model: &Model, index: &PairIndex, names: &[SenseId], lambda: f64, u: SenseId) -> RankedCandidate {
    let mut combined = 0.0;
    let mut distributional = 0.0;
    let mut pattern = 0.0;
    for &s in names {
        let d = model.score_d(s, u);
        let p = model.score_p(index, s, u).unwrap_or(0.0);
        combined += d + lambda * p;
        distributional += d;
        pattern += p;
    }
    RankedCandidate {
        candidate: u,
        combined,
        distributional,
        pattern,
    }
}

fn rank_candidates(model: &Model, index: &PairIndex, q: &Query, candidates: impl Iterator<Item = SenseId>) -> RankedList {
    let mut entries: Vec<RankedCandidate> = candidates
        .map(|u| score_candidate(model, index, &q.names, q.lambda, u))
        .collect();
    entries.sort_by(|a, b| by_score_then_id((a.combined, a.candidate), (b.combined, b.candidate)));
    RankedList { entries }
}

/// Two-step ranking: shortlist, then re-rank the shortlist by the combined score.
pub fn rank(model: &Model, index: &PairIndex, q: &Query) -> Result<RankedList> {
    let short = shortlist(model, q)?;
    Ok(rank_candidates(model, index, q, short.into_iter().map(|(u, _)| u)))
}

/// Ranks the whole pool by the combined score, without a shortlist.
pub fn rank_pool(model: &Model, index: &PairIndex, q: &Query) -> Result<RankedList> {
    if q.names.is_empty() {
        return Err(Error::Query("a query needs at least one name string".into()));
    }
    Ok(rank_candidates(model, index, q, q.pool.iter().copied()))
}
