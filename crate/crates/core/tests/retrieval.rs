use std::collections::BTreeMap;

use autonoc_core::harness::TASK4_QUERY;
use autonoc_core::retriever::{ingest_corpus, retrieve, shipped_corpus, Document};
use proptest::prelude::*;

/// Reference chunk: (doc id, position, heading, token counts).
type OracleChunk = (String, usize, String, BTreeMap<String, u32>);

fn words(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for c in text.chars() {
        if c.is_alphanumeric() {
            cur.extend(c.to_lowercase());
        } else if !cur.is_empty() {
            out.push(std::mem::take(&mut cur));
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

fn oracle_chunks(docs: &[Document]) -> Vec<OracleChunk> {
    let mut out = Vec::new();
    for d in docs {
        let mut sections: Vec<(String, Vec<&str>)> = vec![(String::new(), Vec::new())];
        for line in d.text.lines() {
            match line.strip_prefix('#') {
                Some(h) => {
                    sections.push((h.trim_start_matches('#').trim().to_string(), Vec::new()))
                }
                None => sections.last_mut().unwrap().1.push(line),
            }
        }
        let mut pos = 0;
        for (heading, body) in sections {
            let body = body.join("\n");
            if body.trim().is_empty() {
                continue;
            }
            let mut tf = BTreeMap::new();
            for w in words(&heading).into_iter().chain(words(&body)) {
                *tf.entry(w).or_insert(0) += 1;
            }
            out.push((d.id.clone(), pos, heading, tf));
            pos += 1;
        }
    }
    out
}

/// Exhaustive scoring of every chunk, ranked by the documented order.
fn oracle_rank(docs: &[Document], query: &str, k: usize) -> Vec<(String, usize, f64)> {
    let chunks = oracle_chunks(docs);
    let n = chunks.len() as f64;
    let df = |t: &str| chunks.iter().filter(|c| c.3.contains_key(t)).count() as f64;
    let mut scored: Vec<(String, usize, f64)> = chunks
        .iter()
        .map(|c| {
            let s: f64 = words(query)
                .iter()
                .filter_map(|t| c.3.get(t).map(|&tf| f64::from(tf) * (1.0 + n / df(t)).ln()))
                .sum();
            (c.0.clone(), c.1, s)
        })
        .filter(|c| c.2 > 0.0)
        .collect();
    scored.sort_by(|a, b| b.2.total_cmp(&a.2).then(a.0.cmp(&b.0)).then(a.1.cmp(&b.1)));
    scored.truncate(k);
    scored
}

fn check_against_oracle(docs: &[Document], query: &str, k: usize) {
    let index = ingest_corpus(docs).unwrap();
    let got = retrieve(&index, query, k);
    let want = oracle_rank(docs, query, k);
    assert_eq!(got.len(), want.len(), "{query}");
    for (g, w) in got.iter().zip(&want) {
        assert_eq!(
            (g.chunk.doc_id.as_str(), g.chunk.position),
            (w.0.as_str(), w.1),
            "{query}"
        );
        assert!((g.score - w.2).abs() < 1e-9);
    }
}

#[test]
fn shipped_corpus_matches_the_scoring_oracle() {
    let docs = shipped_corpus();
    assert_eq!(docs.len(), 6);
    for q in [
        TASK4_QUERY,
        "multipath interference eye closure penalty",
        "edfa gain noise figure",
        "first fit wavelength assignment blocked",
        "transponder laser outage channel missing",
        "escalate to backbone spectrum request",
        "zzz unknown",
    ] {
        for k in [1, 3, 100] {
            check_against_oracle(&docs, q, k);
        }
    }
}

#[test]
fn task4_query_ranks_the_aging_guide_first() {
    let index = ingest_corpus(&shipped_corpus()).unwrap();
    let hits = retrieve(&index, TASK4_QUERY, 3);
    assert_eq!(hits[0].chunk.doc_id, "fiber-aging-guide");
}

#[test]
fn ties_break_by_document_id() {
    let docs = ["c", "a", "b"].map(|id| Document::new(id, "# same\nidentical text here"));
    let index = ingest_corpus(&docs).unwrap();
    let hits = retrieve(&index, "identical", 1);
    assert_eq!(hits[0].chunk.doc_id, "a");
}

#[test]
fn unique_token_wins() {
    let docs = shipped_corpus();
    let index = ingest_corpus(&docs).unwrap();
    for c in &index.chunks {
        if let Some(t) = c.tokens.keys().find(|t| index.df[*t] == 1) {
            let hits = retrieve(&index, t, 1);
            assert_eq!(
                (&hits[0].chunk.doc_id, hits[0].chunk.position),
                (&c.doc_id, c.position)
            );
        }
    }
}

/// With more than one query token the argmax can move when unrelated
/// chunks are added, because N enters every idf term.
#[test]
fn irrelevant_document_can_flip_a_multi_token_argmax() {
    let mut docs: Vec<Document> = vec![
        Document::new("d1", "# x\nalpha"),
        Document::new("d2", "# y\nbeta beta"),
    ];
    for i in 0..4 {
        docs.push(Document::new(format!("f{i}"), "# z\nbeta"));
    }
    let top = |docs: &[Document]| {
        retrieve(&ingest_corpus(docs).unwrap(), "alpha beta", 1)[0]
            .chunk
            .doc_id
            .clone()
    };
    assert_eq!(top(&docs), "d1");
    for i in 0..200 {
        docs.push(Document::new(
            format!("pad{i:03}"),
            "# pad\nunrelated words",
        ));
    }
    assert_eq!(top(&docs), "d2");
}

const VOCAB: [&str; 8] = [
    "fiber", "amp", "loss", "span", "mpi", "laser", "grid", "alarm",
];

fn toy_doc() -> impl Strategy<Value = String> {
    proptest::collection::vec(
        (
            proptest::sample::select(VOCAB.to_vec()),
            proptest::collection::vec(proptest::sample::select(VOCAB.to_vec()), 1..6),
        ),
        1..4,
    )
    .prop_map(|sections| {
        sections
            .into_iter()
            .map(|(h, body)| format!("# {h}\n{}", body.join(" ")))
            .collect::<Vec<_>>()
            .join("\n")
    })
}

fn toy_corpus() -> impl Strategy<Value = Vec<Document>> {
    proptest::collection::vec(toy_doc(), 1..6).prop_map(|texts| {
        texts
            .into_iter()
            .enumerate()
            .map(|(i, t)| Document::new(format!("doc{i}"), t))
            .collect()
    })
}

proptest! {
    #[test]
    fn toy_corpora_match_the_oracle(docs in toy_corpus(), q in proptest::collection::vec(proptest::sample::select(VOCAB.to_vec()), 1..4), k in 1usize..6) {
        let query = q.join(" ");
        check_against_oracle(&docs, &query, k);
        let index = ingest_corpus(&docs).unwrap();
        let hits = retrieve(&index, &query, k);
        prop_assert!(hits.windows(2).all(|w| w[0].score >= w[1].score));
        let qt: Vec<String> = words(&query);
        prop_assert!(hits.iter().all(|h| qt.iter().any(|t| h.chunk.tokens.contains_key(t))));
        prop_assert_eq!(retrieve(&ingest_corpus(&docs).unwrap(), &query, k), hits);
        prop_assert!(index.df.values().all(|&d| d as usize <= index.chunks.len()));
    }

    #[test]
    fn irrelevant_document_keeps_single_token_argmax(docs in toy_corpus(), q in proptest::sample::select(VOCAB.to_vec()), extra in 1usize..5) {
        let index = ingest_corpus(&docs).unwrap();
        let before = retrieve(&index, q, 1);
        let mut more = docs.clone();
        for i in 0..extra {
            more.push(Document::new(format!("zz-extra{i}"), "# other\nunrelated filler words"));
        }
        let after = retrieve(&ingest_corpus(&more).unwrap(), q, 1);
        let id = |h: &[autonoc_core::retriever::Hit]| h.first().map(|h| (h.chunk.doc_id.clone(), h.chunk.position));
        prop_assert_eq!(id(&before), id(&after));
    }
}

#[test]
fn shipped_queries_keep_their_argmax_when_irrelevant_docs_are_added() {
    let docs = shipped_corpus();
    let mut more = docs.clone();
    more.push(Document::new(
        "zz-filler",
        "# cafeteria\nlunch menu opening hours parking",
    ));
    let (a, b) = (ingest_corpus(&docs).unwrap(), ingest_corpus(&more).unwrap());
    for q in [
        TASK4_QUERY,
        "multipath interference eye closure penalty",
        "edfa gain noise figure",
    ] {
        let top = |i| {
            retrieve(i, q, 1)
                .into_iter()
                .map(|h| (h.chunk.doc_id, h.chunk.position))
                .next()
        };
        assert_eq!(top(&a), top(&b), "{q}");
    }
}
