use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::Write;
use std::path::Path;

use dpe_core::corpus::{load_corpus, normalize, read_corpus, write_corpus, Sentence};
use dpe_core::evaluation::{evaluate as run_evaluation, Setting};
use dpe_core::inference::{default_pool, rank, Query};
use dpe_core::patterns::{classify, featurize};
use dpe_core::pipeline::{build as build_artifacts, BuildConfig};
use dpe_core::seeds::KbSynonyms;
use dpe_core::synthetic::{generate, SynthConfig};
use dpe_core::trainer::{Model, TrainConfig};
use dpe_core::vocab::SenseId;
use dpe_core::Error;
use serde_json::json;

use crate::config::RunConfig;
use crate::exit::{CliError, CliResult};
use crate::store::{self, file_sha256, Store};

pub struct Output {
    pub json: bool,
}

impl Output {
    fn emit(&self, value: serde_json::Value, text: impl FnOnce() -> String) {
        if self.json {
            println!("{value}");
        } else {
            print!("{}", text());
        }
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> CliResult<()> {
    fs::write(path, bytes).map_err(|e| CliError::input(format!("cannot write {}: {e}", path.display())))
}

/// Up to five candidates closest to `target` by edit distance.
fn nearest<'a>(target: &str, known: impl Iterator<Item = &'a str>) -> Vec<&'a str> {
    let mut scored: Vec<(usize, &str)> = known.map(|k| (strsim::levenshtein(target, k), k)).collect();
    scored.sort();
    scored.dedup();
    scored.into_iter().take(5).map(|(_, k)| k).collect()
}

pub fn validate(out: &Output, corpus: &Path, kb: Option<&Path>) -> CliResult<()> {
    let kb = kb.map(KbSynonyms::load).transpose()?;
    let mut sentences = 0usize;
    let mut tokens = 0usize;
    let mut linked = 0usize;
    let mut unlinked = 0usize;
    let mut not_in_kb = 0usize;
    for s in load_corpus(corpus)? {
        let s = s.map_err(|e| CliError::from(e).context(corpus.display()))?;
        sentences += 1;
        tokens += s.tokens.len();
        for m in &s.mentions {
            match &m.entity_id {
                Some(e) => {
                    linked += 1;
                    if kb.as_ref().is_some_and(|kb| !kb.contains(e, &m.surface(&s.tokens))) {
                        not_in_kb += 1;
                    }
                }
                None => unlinked += 1,
            }
        }
    }
    out.emit(
        json!({"sentences": sentences, "tokens": tokens, "linked_mentions": linked,
               "unlinked_mentions": unlinked, "links_not_in_kb": not_in_kb}),
        || {
            let mut s = format!(
                "{sentences} sentences, {tokens} tokens, {linked} linked and {unlinked} unlinked mentions\n"
            );
            if kb.is_some() {
                s.push_str(&format!("{not_in_kb} links not backed by the KB\n"));
            }
            s
        },
    );
    Ok(())
}

fn kb_text(kb: &KbSynonyms) -> String {
    let mut text = String::new();
    for id in kb.entity_ids() {
        let entry = kb.get(id).expect("listed entity");
        text.push_str(id);
        text.push('\t');
        text.push_str(&entry.canonical);
        for s in entry.synonyms.iter().filter(|s| **s != entry.canonical) {
            text.push('\t');
            text.push_str(s);
        }
        text.push('\n');
    }
    text
}

pub fn synth(out: &Output, cfg: &SynthConfig, dir: &Path) -> CliResult<()> {
    let c = generate(cfg);
    fs::create_dir_all(dir).map_err(|e| CliError::input(format!("cannot create {}: {e}", dir.display())))?;
    let mut corpus = Vec::new();
    write_corpus(&mut corpus, &c.sentences)?;
    write_file(&dir.join("corpus.jsonl"), &corpus)?;
    write_file(&dir.join("kb.tsv"), kb_text(&c.kb).as_bytes())?;
    let planted = json!({"config": cfg, "groups": c.groups, "known_as": c.known_as});
    write_file(&dir.join("planted.json"), serde_json::to_string_pretty(&planted).expect("json").as_bytes())?;
    out.emit(json!({"sentences": c.sentences.len(), "entities": c.kb.len(), "out": dir}), || {
        format!("wrote {} sentences and {} KB entities to {}\n", c.sentences.len(), c.kb.len(), dir.display())
    });
    Ok(())
}

pub fn build(out: &Output, cfg: &BuildConfig, corpus: &Path, kb: &Path, dir: &Path) -> CliResult<()> {
    let kb_hash = file_sha256(kb)?;
    let kb = KbSynonyms::load(kb)?;
    let corpus_hash = file_sha256(corpus)?;
    let mut sentences: Vec<Sentence> = read_corpus(corpus).map_err(|e| CliError::from(e).context(corpus.display()))?;
    let art = build_artifacts(&mut sentences, &kb, cfg)?;
    if art.dropped_links > 0 {
        log::warn!("dropped {} links whose surface is not a KB synonym of the entity", art.dropped_links);
    }
    if art.seeds.is_empty() {
        log::warn!("no seed synonym pairs found; training will need a corpus with linked mentions");
    }
    let m = store::write(dir, &art, &sentences, cfg, corpus_hash, kb_hash)?;
    out.emit(serde_json::to_value(&m).expect("manifest json"), || {
        format!(
            "{} senses, {} edges, {} seed entities ({} warm, {} cold test), {} patterns -> {}\n",
            m.senses,
            m.edges,
            m.seed_entities,
            art.split.warm.len(),
            art.split.cold.len(),
            m.patterns,
            dir.display()
        )
    });
    Ok(())
}

pub fn train(out: &Output, cfg: &TrainConfig, artifacts: &Path, model_path: &Path) -> CliResult<()> {
    let st = store::load(artifacts)?;
    let model = st.artifacts.train(cfg)?;
    model.save(model_path)?;
    out.emit(
        json!({"model": model_path, "senses": model.num_senses(), "dim": model.dim(),
               "patterns": model.classifier.is_some(), "config": cfg}),
        || format!("trained {} senses x {} dims -> {}\n", model.num_senses(), model.dim(), model_path.display()),
    );
    Ok(())
}

fn load_model(st: &Store, path: &Path) -> CliResult<Model> {
    Model::restore(path, &st.artifacts.vocab).map_err(|e| CliError::from(e).context(path.display()))
}

pub struct DiscoverQuery {
    pub entity: Option<String>,
    pub names: Vec<String>,
    pub top_k: usize,
}

fn resolve_names(st: &Store, q: &DiscoverQuery) -> CliResult<Vec<SenseId>> {
    let vocab = &st.artifacts.vocab;
    if let Some(e) = &q.entity {
        return match st.artifacts.seeds.senses_of(e) {
            Some(s) => Ok(s.iter().copied().collect()),
            None => {
                let known = nearest(e, st.artifacts.seeds.per_entity().keys().map(String::as_str));
                Err(CliError::query(format!("unknown entity {e}; nearest known ids: {}", known.join(", "))))
            }
        };
    }
    let mut ids = Vec::new();
    for name in &q.names {
        let found = vocab.senses_of_surface(&normalize(name));
        if found.is_empty() {
            let known = nearest(&normalize(name), vocab.senses().iter().map(|s| s.surface.as_str()));
            return Err(CliError::query(format!("unknown name {name:?}; nearest known strings: {}", known.join(", "))));
        }
        ids.extend_from_slice(found);
    }
    Ok(ids)
}

pub fn discover(out: &Output, cfg: &RunConfig, artifacts: &Path, model_path: &Path, q: &DiscoverQuery) -> CliResult<()> {
    let st = store::load(artifacts)?;
    let model = load_model(&st, model_path)?;
    let names = resolve_names(&st, q)?;
    let vocab = &st.artifacts.vocab;
    let lambda = cfg.eval.lambda.unwrap_or(model.config.lambda);
    let query = Query::new(q.entity.clone(), names, default_pool(vocab), cfg.eval.k_pool, lambda)?;
    let ranked = rank(&model, &st.artifacts.index, &query)?;
    let top: Vec<_> = ranked.entries.iter().take(q.top_k).collect();
    let rows: Vec<serde_json::Value> = top
        .iter()
        .enumerate()
        .map(|(i, e)| {
            json!({"rank": i + 1, "sense_id": e.candidate, "surface": vocab.get(e.candidate).surface,
                   "combined": e.combined, "distributional": e.distributional, "pattern": e.pattern})
        })
        .collect();
    let query_names: Vec<&str> = query.names.iter().map(|&s| vocab.get(s).surface.as_str()).collect();
    out.emit(
        json!({"entity": q.entity, "names": query_names, "lambda": lambda, "results": rows}),
        || {
            let mut s = format!("query: {}\n", query_names.join(", "));
            if !top.is_empty() {
                s.push_str(&format!("{:>4}  {:>10} {:>10} {:>8}  {}\n", "rank", "score", "D", "P", "candidate"));
            }
            for (i, e) in top.iter().enumerate() {
                s.push_str(&format!(
                    "{:>4}  {:>10.4} {:>10.4} {:>8.4}  {}\n",
                    i + 1,
                    e.combined,
                    e.distributional,
                    e.pattern,
                    vocab.get(e.candidate).surface
                ));
            }
            s
        },
    );
    Ok(())
}

pub fn evaluate(
    out: &Output,
    cfg: &RunConfig,
    threads: usize,
    artifacts: &Path,
    model_path: &Path,
    settings: &[Setting],
) -> CliResult<()> {
    let st = store::load(artifacts)?;
    let model = load_model(&st, model_path)?;
    let ecfg = cfg.eval_config(model.config.lambda, threads);
    for &setting in settings {
        let report = run_evaluation(&model, &st.artifacts.index, &st.artifacts.vocab, &st.artifacts.split, setting, &ecfg)?;
        if out.json {
            print!("{}", report.to_json_lines());
        } else {
            println!("{report}");
        }
    }
    std::io::stdout().flush()?;
    Ok(())
}

struct PatternRow {
    signature: String,
    probability: f64,
    positives: usize,
    negatives: usize,
    exemplar: String,
}

pub fn inspect_patterns(out: &Output, artifacts: &Path, model_path: &Path, top_n: usize) -> CliResult<()> {
    let st = store::load(artifacts)?;
    let model = load_model(&st, model_path)?;
    let Some(clf) = &model.classifier else {
        return Err(CliError::capability("the model was trained without the pattern module"));
    };
    let labeled = match st.artifacts.labeled_patterns(model.config.rng_seed) {
        Err(Error::NoPositivePatterns(m)) => return Err(CliError::capability(m)),
        other => other?,
    };
    let by_id: HashMap<(&str, u64), &Sentence> =
        st.sentences.iter().map(|s| ((s.doc_id.as_str(), s.sent_id), s)).collect();

    let mut groups: BTreeMap<String, (f64, usize, usize, usize)> = BTreeMap::new();
    for l in &labeled {
        let p = st.artifacts.index.get(l.pattern);
        let prob = classify(clf, &featurize(p, &model.table, clf.feature_config()));
        let g = groups.entry(p.signature()).or_insert((0.0, 0, 0, l.pattern));
        g.0 += prob;
        if l.positive {
            g.1 += 1;
        } else {
            g.2 += 1;
        }
    }
    let mut rows: Vec<PatternRow> = groups
        .into_iter()
        .map(|(signature, (sum, pos, neg, first))| {
            let src = &st.artifacts.index.get(first).source;
            PatternRow {
                signature,
                probability: sum / (pos + neg) as f64,
                positives: pos,
                negatives: neg,
                exemplar: by_id.get(&(src.doc_id.as_str(), src.sent_id)).map(|s| s.text()).unwrap_or_default(),
            }
        })
        .collect();
    rows.sort_by(|a, b| b.probability.total_cmp(&a.probability).then_with(|| a.signature.cmp(&b.signature)));
    rows.truncate(top_n);

    if out.json {
        for r in &rows {
            println!(
                "{}",
                json!({"pattern": r.signature, "probability": r.probability, "positives": r.positives,
                       "negatives": r.negatives, "exemplar": r.exemplar})
            );
        }
    } else {
        for (i, r) in rows.iter().enumerate() {
            println!("{:>3}. {:.4}  {}  (+{} / -{})", i + 1, r.probability, r.signature, r.positives, r.negatives);
            println!("     {}", r.exemplar);
        }
    }
    Ok(())
}
