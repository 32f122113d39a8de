//! Warm-start and cold-start evaluation with P@K, R@K and F1@K, macro-averaged
//! over test entities.
//!
//! P@K is `hits / K` even when the entity has fewer than K held-out synonyms,
//! so an entity with one held-out synonym has P@5 at most 0.2.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::{default_pool, rank, Query, DEFAULT_K_POOL};
use crate::patterns::PairIndex;
use crate::seeds::{EntitySplit, TestEntity};
use crate::trainer::Model;
use crate::vocab::{SenseId, Vocabulary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Setting {
    Warm,
    Cold,
}

impl fmt::Display for Setting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Setting::Warm => "warm",
            Setting::Cold => "cold",
        })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

pub fn hits_at(ranked: &[SenseId], truth: &BTreeSet<SenseId>, k: usize) -> usize {
    ranked.iter().take(k).filter(|s| truth.contains(s)).count()
}

/// `2PR / (P + R)`, and 0 when both are 0.
pub fn f1(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// Metrics at cutoff `k > 0` against a non-empty truth set.
pub fn metrics_at(ranked: &[SenseId], truth: &BTreeSet<SenseId>, k: usize) -> Metrics {
    assert!(k > 0, "cutoff must be positive");
    assert!(!truth.is_empty(), "truth set must be non-empty");
    let hits = hits_at(ranked, truth, k) as f64;
    let precision = hits / k as f64;
    let recall = hits / truth.len() as f64;
    Metrics {
        precision,
        recall,
        f1: f1(precision, recall),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub ks: Vec<usize>,
    pub k_pool: usize,
    pub lambda: f64,
    pub threads: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            ks: vec![1, 5],
            k_pool: DEFAULT_K_POOL,
            lambda: 0.1,
            threads: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntityResult {
    pub entity_id: String,
    /// One entry per configured cutoff, in the order of `EvalConfig::ks`.
    pub metrics: Vec<Metrics>,
    pub top: Vec<SenseId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub setting: Setting,
    pub config: EvalConfig,
    pub entities: Vec<EntityResult>,
    /// Macro averages, one per cutoff.
    pub mean: Vec<Metrics>,
    /// Entities without held-out synonyms.
    pub skipped: Vec<String>,
}

impl EvalReport {
    /// Macro-averaged metrics at cutoff `k`, if configured.
    pub fn at(&self, k: usize) -> Option<Metrics> {
        self.config.ks.iter().position(|&x| x == k).map(|i| self.mean[i])
    }

    /// One JSON object per entity and one for the macro average.
    pub fn to_json_lines(&self) -> String {
        let mut out = String::new();
        let line = |entity: &str, ms: &[Metrics]| {
            let mut obj = serde_json::Map::new();
            obj.insert("setting".into(), self.setting.to_string().into());
            obj.insert("entity".into(), entity.into());
            for (k, m) in self.config.ks.iter().zip(ms) {
                obj.insert(format!("p@{k}"), m.precision.into());
                obj.insert(format!("r@{k}"), m.recall.into());
                obj.insert(format!("f1@{k}"), m.f1.into());
            }
            serde_json::Value::Object(obj).to_string()
        };
        for e in &self.entities {
            out.push_str(&line(&e.entity_id, &e.metrics));
            out.push('\n');
        }
        out.push_str(&line("*", &self.mean));
        out.push('\n');
        out
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:<24}", format!("{} ({} entities)", self.setting, self.entities.len()))?;
        for k in &self.config.ks {
            write!(f, " {:>7} {:>7} {:>7}", format!("P@{k}"), format!("R@{k}"), format!("F1@{k}"))?;
        }
        writeln!(f)?;
        let row = |f: &mut fmt::Formatter<'_>, name: &str, ms: &[Metrics]| -> fmt::Result {
            write!(f, "{name:<24}")?;
            for m in ms {
                write!(f, " {:>7.4} {:>7.4} {:>7.4}", m.precision, m.recall, m.f1)?;
            }
            writeln!(f)
        };
        for e in &self.entities {
            row(f, &e.entity_id, &e.metrics)?;
        }
        row(f, "mean", &self.mean)?;
        if !self.skipped.is_empty() {
            writeln!(f, "skipped: {}", self.skipped.join(", "))?;
        }
        Ok(())
    }
}

/// Candidates for a setting: every unlinked sense plus the held-out synonyms
/// of all the setting's test entities.
pub fn candidate_pool(vocab: &Vocabulary, entities: &[TestEntity]) -> Vec<SenseId> {
    let mut pool: BTreeSet<SenseId> = default_pool(vocab).into_iter().collect();
    for e in entities {
        pool.extend(e.held_out.iter().copied());
    }
    pool.into_iter().collect()
}

fn evaluate_entity(
    model: &Model,
    index: &PairIndex,
    pool: &[SenseId],
    e: &TestEntity,
    cfg: &EvalConfig,
) -> Result<EntityResult> {
    let q = Query::new(
        Some(e.entity_id.clone()),
        e.given.iter().copied(),
        pool.iter().copied(),
        cfg.k_pool,
        cfg.lambda,
    )?;
    let ranked = rank(model, index, &q)?.candidates();
    let truth: BTreeSet<SenseId> = e.held_out.iter().copied().collect();
    let metrics = cfg.ks.iter().map(|&k| metrics_at(&ranked, &truth, k)).collect();
    let top_n = cfg.ks.iter().copied().max().unwrap_or(0);
    Ok(EntityResult {
        entity_id: e.entity_id.clone(),
        metrics,
        top: ranked.into_iter().take(top_n).collect(),
    })
}

/// Evaluates the test entities of one setting.
pub fn evaluate(
    model: &Model,
    index: &PairIndex,
    vocab: &Vocabulary,
    split: &EntitySplit,
    setting: Setting,
    cfg: &EvalConfig,
) -> Result<EvalReport> {
    if cfg.ks.is_empty() || cfg.ks.contains(&0) {
        return Err(Error::InvalidArgument("cutoffs must be positive and non-empty".into()));
    }
    let entities = match setting {
        Setting::Warm => &split.warm,
        Setting::Cold => &split.cold,
    };
    let pool = candidate_pool(vocab, entities);
    let (usable, skipped): (Vec<&TestEntity>, Vec<&TestEntity>) =
        entities.iter().partition(|e| !e.held_out.is_empty());
    for e in &skipped {
        log::warn!("skipping test entity {} without held-out synonyms", e.entity_id);
    }

    let threads = cfg.threads.max(1).min(usable.len().max(1));
    let chunk = usable.len().div_ceil(threads).max(1);
    let results: Vec<Result<EntityResult>> = std::thread::scope(|scope| {
        let handles: Vec<_> = usable
            .chunks(chunk)
            .map(|part| {
                let pool = &pool;
                scope.spawn(move || {
                    part.iter()
                        .map(|e| evaluate_entity(model, index, pool, e, cfg))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("evaluation worker panicked"))
            .collect()
    });
    let entities: Vec<EntityResult> = results.into_iter().collect::<Result<_>>()?;

    let mut mean = vec![Metrics::default(); cfg.ks.len()];
    if !entities.is_empty() {
        let n = entities.len() as f64;
        for e in &entities {
            for (m, x) in mean.iter_mut().zip(&e.metrics) {
                m.precision += x.precision;
                m.recall += x.recall;
                m.f1 += x.f1;
            }
        }
        for m in &mut mean {
            m.precision /= n;
            m.recall /= n;
            m.f1 /= n;
        }
    }
    Ok(EvalReport {
        setting,
        config: cfg.clone(),
        entities,
        mean,
        skipped: skipped.into_iter().map(|e| e.entity_id.clone()).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(xs: &[u32]) -> Vec<SenseId> {
        xs.iter().map(|&x| SenseId(x)).collect()
    }

    #[test]
    fn two_held_out_in_top_two() {
        let truth: BTreeSet<SenseId> = ids(&[3, 7]).into_iter().collect();
        let ranked = ids(&[7, 3, 1, 2, 4, 5]);
        let m = metrics_at(&ranked, &truth, 5);
        assert_eq!(m.precision, 0.4);
        assert_eq!(m.recall, 1.0);
        assert!((m.f1 - 0.8 / 1.4).abs() < 1e-12);
    }

    #[test]
    fn perfect_single() {
        let truth: BTreeSet<SenseId> = ids(&[9]).into_iter().collect();
        let m = metrics_at(&ids(&[9, 1]), &truth, 1);
        assert_eq!((m.precision, m.recall, m.f1), (1.0, 1.0, 1.0));
        let m5 = metrics_at(&ids(&[9, 1]), &truth, 5);
        assert_eq!(m5.precision, 0.2);
    }

    #[test]
    fn no_hits_gives_zero_f1() {
        let truth: BTreeSet<SenseId> = ids(&[9]).into_iter().collect();
        let m = metrics_at(&ids(&[1, 2]), &truth, 5);
        assert_eq!(m, Metrics::default());
    }

    #[test]
    fn report_renders() {
        let report = EvalReport {
            setting: Setting::Warm,
            config: EvalConfig::default(),
            entities: vec![EntityResult {
                entity_id: "E1".into(),
                metrics: vec![Metrics { precision: 1.0, recall: 0.5, f1: 2.0 / 3.0 }, Metrics::default()],
                top: vec![],
            }],
            mean: vec![Metrics { precision: 1.0, recall: 0.5, f1: 2.0 / 3.0 }, Metrics::default()],
            skipped: vec![],
        };
        let table = report.to_string();
        assert!(table.contains("P@1") && table.contains("E1") && table.contains("mean"));
        let lines = report.to_json_lines();
        let last: serde_json::Value = serde_json::from_str(lines.lines().last().unwrap()).unwrap();
        assert_eq!(last["entity"], "*");
        assert_eq!(last["p@1"], 1.0);
        assert_eq!(report.at(1).unwrap().recall, 0.5);
        assert!(report.at(3).is_none());
    }
}
