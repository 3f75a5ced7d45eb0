//! Lexical tf-idf retrieval over the troubleshooting corpus.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum RetrieveError {
    #[error("duplicate document id `{0}`")]
    DuplicateId(String),
    #[error("cannot read corpus: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub text: String,
}

impl Document {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        Document {
            id: id.into(),
            text: text.into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub doc_id: String,
    /// Position of the chunk within its document.
    pub position: usize,
    pub heading: String,
    pub body: String,
    /// Token counts over heading and body.
    pub tokens: BTreeMap<String, u32>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Index {
    pub chunks: Vec<Chunk>,
    pub df: BTreeMap<String, u32>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hit {
    pub chunk: Chunk,
    pub score: f64,
}

/// Lowercased alphanumeric runs.
pub fn tokenize(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
}

/// The shipped six-document corpus.
pub fn shipped_corpus() -> Vec<Document> {
    vec![
        Document::new("edfa-spec", include_str!("../assets/corpus/edfa-spec.md")),
        Document::new(
            "escalation-policy",
            include_str!("../assets/corpus/escalation-policy.md"),
        ),
        Document::new(
            "fiber-aging-guide",
            include_str!("../assets/corpus/fiber-aging-guide.md"),
        ),
        Document::new(
            "mpi-symptoms",
            include_str!("../assets/corpus/mpi-symptoms.md"),
        ),
        Document::new(
            "rwa-runbook",
            include_str!("../assets/corpus/rwa-runbook.md"),
        ),
        Document::new(
            "transponder-manual",
            include_str!("../assets/corpus/transponder-manual.md"),
        ),
    ]
}

/// Reads every `*.md` and `*.txt` file of `dir`; the id is the file stem.
pub fn load_corpus_dir(dir: &Path) -> Result<Vec<Document>, RetrieveError> {
    let mut docs = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        let ext = path.extension().and_then(|e| e.to_str());
        if !matches!(ext, Some("md" | "txt")) {
            continue;
        }
        let id = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or_default()
            .to_string();
        docs.push(Document::new(id, std::fs::read_to_string(&path)?));
    }
    docs.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(docs)
}

fn split_chunks(doc: &Document) -> Vec<(String, String)> {
    let mut out = Vec::new();
    let mut heading = String::new();
    let mut body: Vec<&str> = Vec::new();
    let mut flush = |heading: &str, body: &mut Vec<&str>| {
        let text = body.join("\n").trim().to_string();
        if !text.is_empty() {
            out.push((heading.to_string(), text));
        }
        body.clear();
    };
    for line in doc.text.lines() {
        if line.starts_with('#') {
            flush(&heading, &mut body);
            heading = line.trim_start_matches('#').trim().to_string();
        } else {
            body.push(line);
        }
    }
    flush(&heading, &mut body);
    out
}

pub fn ingest_corpus(docs: &[Document]) -> Result<Index, RetrieveError> {
    let mut seen = BTreeSet::new();
    let mut index = Index::default();
    for doc in docs {
        if !seen.insert(doc.id.as_str()) {
            return Err(RetrieveError::DuplicateId(doc.id.clone()));
        }
        for (position, (heading, body)) in split_chunks(doc).into_iter().enumerate() {
            let mut tokens = BTreeMap::new();
            for t in tokenize(&heading).chain(tokenize(&body)) {
                *tokens.entry(t).or_insert(0) += 1;
            }
            for t in tokens.keys() {
                *index.df.entry(t.clone()).or_insert(0) += 1;
            }
            index.chunks.push(Chunk {
                doc_id: doc.id.clone(),
                position,
                heading,
                body,
                tokens,
            });
        }
    }
    Ok(index)
}

/// Σ over query tokens (repeats included) of tf · ln(1 + N/df).
pub fn score(index: &Index, chunk: &Chunk, query: &str) -> f64 {
    let n = index.chunks.len() as f64;
    tokenize(query)
        .filter_map(|t| {
            let tf = *chunk.tokens.get(&t)?;
            let df = index.df[&t];
            Some(f64::from(tf) * (1.0 + n / f64::from(df)).ln())
        })
        .sum()
}

/// Top `k` chunks by descending score, ties by (doc id, position);
/// chunks sharing no token with the query are never returned.
pub fn retrieve(index: &Index, query: &str, k: usize) -> Vec<Hit> {
    let mut hits: Vec<Hit> = index
        .chunks
        .iter()
        .map(|c| Hit {
            score: score(index, c, query),
            chunk: c.clone(),
        })
        .filter(|h| h.score > 0.0)
        .collect();
    hits.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then_with(|| a.chunk.doc_id.cmp(&b.chunk.doc_id))
            .then_with(|| a.chunk.position.cmp(&b.chunk.position))
    });
    hits.truncate(k);
    hits
}
