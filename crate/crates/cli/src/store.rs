//! Artifact directory written by `build` and read by every later command.
//!
//! `manifest.json` records the build configuration, input hashes and the
//! SHA-256 of every other file; loading refuses files whose hash changed.

use std::collections::BTreeMap;
use std::fs;
use std::io::BufReader;
use std::path::Path;

use dpe_core::corpus::{read_corpus, write_corpus, Sentence};
use dpe_core::graph::CoocGraph;
use dpe_core::patterns::PairIndex;
use dpe_core::pipeline::{Artifacts, BuildConfig};
use dpe_core::seeds::{EntitySplit, SeedSet};
use dpe_core::vocab::Vocabulary;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::exit::{CliError, CliResult};

pub const MANIFEST: &str = "manifest.json";
pub const VOCAB: &str = "vocab.tsv";
pub const GRAPH: &str = "graph.txt";
pub const SEEDS: &str = "seeds.json";
pub const SPLIT: &str = "split.json";
pub const PATTERNS: &str = "patterns.jsonl";
pub const SENTENCES: &str = "sentences.jsonl";

const FORMAT: &str = "dpe-artifacts";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    pub corpus_sha256: String,
    pub kb_sha256: String,
    pub build: BuildConfig,
    pub dropped_links: usize,
    pub senses: usize,
    pub edges: usize,
    pub seed_entities: usize,
    pub patterns: usize,
    pub files: BTreeMap<String, String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_sha256(path: &Path) -> CliResult<String> {
    let bytes = fs::read(path).map_err(|e| CliError::input(format!("cannot read {}: {e}", path.display())))?;
    Ok(sha256_hex(&bytes))
}

/// Everything loaded from an artifact directory.
pub struct Store {
    pub artifacts: Artifacts,
    pub sentences: Vec<Sentence>,
}

fn serialize(name: &str, artifacts: &Artifacts, sentences: &[Sentence]) -> Vec<u8> {
    let mut buf = Vec::new();
    match name {
        VOCAB => artifacts.vocab.write_tsv(&mut buf).expect("in-memory write"),
        GRAPH => artifacts.graph.write_edges(&mut buf).expect("in-memory write"),
        SEEDS => serde_json::to_writer_pretty(&mut buf, &artifacts.seeds).expect("in-memory write"),
        SPLIT => serde_json::to_writer_pretty(&mut buf, &artifacts.split).expect("in-memory write"),
        PATTERNS => artifacts.index.write_jsonl(&mut buf).expect("in-memory write"),
        SENTENCES => write_corpus(&mut buf, sentences).expect("in-memory write"),
        _ => unreachable!("unknown artifact {name}"),
    }
    buf
}

pub fn write(
    dir: &Path,
    artifacts: &Artifacts,
    sentences: &[Sentence],
    build: &BuildConfig,
    corpus_sha256: String,
    kb_sha256: String,
) -> CliResult<Manifest> {
    fs::create_dir_all(dir).map_err(|e| CliError::input(format!("cannot create {}: {e}", dir.display())))?;
    let mut files = BTreeMap::new();
    for name in [VOCAB, GRAPH, SEEDS, SPLIT, PATTERNS, SENTENCES] {
        let bytes = serialize(name, artifacts, sentences);
        files.insert(name.to_string(), sha256_hex(&bytes));
        let path = dir.join(name);
        fs::write(&path, bytes).map_err(|e| CliError::input(format!("cannot write {}: {e}", path.display())))?;
    }
    let manifest = Manifest {
        format: FORMAT.into(),
        version: VERSION,
        corpus_sha256,
        kb_sha256,
        build: build.clone(),
        dropped_links: artifacts.dropped_links,
        senses: artifacts.vocab.len(),
        edges: artifacts.graph.num_edges(),
        seed_entities: artifacts.seeds.num_entities(),
        patterns: artifacts.index.len(),
        files,
    };
    let path = dir.join(MANIFEST);
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    text.push('\n');
    fs::write(&path, text).map_err(|e| CliError::input(format!("cannot write {}: {e}", path.display())))?;
    Ok(manifest)
}

fn open(dir: &Path, manifest: &Manifest, name: &str) -> CliResult<BufReader<fs::File>> {
    let path = dir.join(name);
    let expected = manifest
        .files
        .get(name)
        .ok_or_else(|| CliError::input(format!("{}: manifest does not list {name}", dir.display())))?;
    let actual = file_sha256(&path)?;
    if &actual != expected {
        return Err(CliError::input(format!("{}: content hash does not match the manifest", path.display())));
    }
    let file = fs::File::open(&path).map_err(|e| CliError::input(format!("cannot read {}: {e}", path.display())))?;
    Ok(BufReader::new(file))
}

pub fn load(dir: &Path) -> CliResult<Store> {
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path).map_err(|e| CliError::input(format!("cannot read {}: {e}", path.display())))?;
    let manifest: Manifest =
        serde_json::from_str(&text).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    if manifest.format != FORMAT || manifest.version != VERSION {
        return Err(CliError::input(format!(
            "{}: unsupported artifact format {} v{}",
            path.display(),
            manifest.format,
            manifest.version
        )));
    }
    let ctx = |name: &str| dir.join(name).display().to_string();
    let vocab = Vocabulary::read_tsv(open(dir, &manifest, VOCAB)?).map_err(|e| CliError::from(e).context(ctx(VOCAB)))?;
    let graph = CoocGraph::read_edges(open(dir, &manifest, GRAPH)?).map_err(|e| CliError::from(e).context(ctx(GRAPH)))?;
    let seeds: SeedSet = serde_json::from_reader(open(dir, &manifest, SEEDS)?)
        .map_err(|e| CliError::input(format!("{}: {e}", ctx(SEEDS))))?;
    let split: EntitySplit = serde_json::from_reader(open(dir, &manifest, SPLIT)?)
        .map_err(|e| CliError::input(format!("{}: {e}", ctx(SPLIT))))?;
    let index = PairIndex::read_jsonl(open(dir, &manifest, PATTERNS)?).map_err(|e| CliError::from(e).context(ctx(PATTERNS)))?;
    open(dir, &manifest, SENTENCES)?;
    let sentences = read_corpus(dir.join(SENTENCES)).map_err(|e| CliError::from(e).context(ctx(SENTENCES)))?;
    if graph.num_senses() != vocab.len() {
        return Err(CliError::input(format!("{}: graph and vocabulary sizes differ", dir.display())));
    }
    Ok(Store {
        artifacts: Artifacts {
            vocab,
            graph,
            seeds,
            split,
            index,
            dropped_links: manifest.dropped_links,
        },
        sentences,
    })
}
