//! Deterministic in-memory lexical index with tf-idf ranking.
//!
//! Documents are indexed as fixed-size character chunks so snippet
//! granularity matches the monitor's window scale. Scoring is term-frequency
//! times inverse document frequency, summed over query terms; ties break by
//! ascending doc id then chunk offset, so insertion order never shows
//! through.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::EngineError;

use super::embed::HashEmbedder;
use super::{Document, Evidence, Retriever, Snippet};

/// Version tag written into persisted index artifacts.
pub const INDEX_SCHEMA_VERSION: u32 = 1;

/// One indexed chunk of a document.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IndexedChunk {
    pub doc_id: String,
    /// Character offset of the chunk within its document.
    pub offset: usize,
    pub text: String,
}

#[derive(Serialize, Deserialize)]
struct IndexArtifact {
    schema_version: u32,
    chunk_chars: usize,
    chunks: Vec<IndexedChunk>,
}

/// Immutable-after-build lexical index.
pub struct LexicalIndex {
    chunk_chars: usize,
    chunks: Vec<IndexedChunk>,
    /// term -> chunk indices containing it (deduplicated, ascending).
    postings: HashMap<String, Vec<usize>>,
    /// term counts per chunk.
    term_counts: Vec<BTreeMap<String, u64>>,
}

impl LexicalIndex {
    /// Build from documents, splitting bodies into `chunk_chars`-character
    /// chunks.
    pub fn build(docs: &[Document], chunk_chars: usize) -> Result<Self, EngineError> {
        if chunk_chars == 0 {
            return Err(EngineError::domain("chunk size must be positive"));
        }
        let mut chunks = Vec::new();
        for doc in docs {
            doc.validate()?;
            let body: Vec<char> = doc.body.chars().collect();
            let mut offset = 0;
            while offset < body.len() {
                let end = (offset + chunk_chars).min(body.len());
                chunks.push(IndexedChunk {
                    doc_id: doc.id.clone(),
                    offset,
                    text: body[offset..end].iter().collect(),
                });
                offset = end;
            }
        }
        // Canonical chunk order: doc id, then offset.
        chunks.sort_by(|a, b| a.doc_id.cmp(&b.doc_id).then(a.offset.cmp(&b.offset)));
        Ok(Self::from_chunks(chunk_chars, chunks))
    }

    fn from_chunks(chunk_chars: usize, chunks: Vec<IndexedChunk>) -> Self {
        let mut postings: HashMap<String, Vec<usize>> = HashMap::new();
        let mut term_counts = Vec::with_capacity(chunks.len());
        for (i, chunk) in chunks.iter().enumerate() {
            let mut counts: BTreeMap<String, u64> = BTreeMap::new();
            for token in HashEmbedder::tokenize(&chunk.text) {
                *counts.entry(token).or_insert(0) += 1;
            }
            for term in counts.keys() {
                postings.entry(term.clone()).or_default().push(i);
            }
            term_counts.push(counts);
        }
        Self {
            chunk_chars,
            chunks,
            postings,
            term_counts,
        }
    }

    pub fn chunk_count(&self) -> usize {
        self.chunks.len()
    }

    pub fn chunks(&self) -> &[IndexedChunk] {
        &self.chunks
    }

    /// Chunk text for a document id, used by the `web_parse` stub.
    pub fn first_chunk_of(&self, doc_id: &str) -> Option<&IndexedChunk> {
        self.chunks
            .iter()
            .find(|c| c.doc_id == doc_id && c.offset == 0)
    }

    fn idf(&self, term: &str) -> f64 {
        let df = self.postings.get(term).map(|p| p.len()).unwrap_or(0);
        if df == 0 {
            0.0
        } else {
            (self.chunks.len() as f64 / df as f64).ln() + 1.0
        }
    }

    fn score_chunk(&self, chunk_idx: usize, terms: &[String]) -> f64 {
        let counts = &self.term_counts[chunk_idx];
        let mut score = 0.0;
        for term in terms {
            if let Some(&tf) = counts.get(term) {
                score += tf as f64 * self.idf(term);
            }
        }
        score
    }

    /// Persist as a versioned JSON artifact.
    pub fn save(&self, path: &Path) -> Result<(), EngineError> {
        let artifact = IndexArtifact {
            schema_version: INDEX_SCHEMA_VERSION,
            chunk_chars: self.chunk_chars,
            chunks: self.chunks.clone(),
        };
        let file = std::fs::File::create(path)?;
        serde_json::to_writer(file, &artifact)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, EngineError> {
        let file = std::fs::File::open(path)?;
        let artifact: IndexArtifact = serde_json::from_reader(file)?;
        if artifact.schema_version != INDEX_SCHEMA_VERSION {
            return Err(EngineError::domain(format!(
                "unsupported index schema version {}",
                artifact.schema_version
            )));
        }
        Ok(Self::from_chunks(artifact.chunk_chars, artifact.chunks))
    }
}

impl Retriever for LexicalIndex {
    fn search_top_k(&self, query: &str, k: usize) -> Result<Evidence, EngineError> {
        if query.trim().is_empty() {
            return Err(EngineError::domain("query must be non-empty"));
        }
        if k == 0 {
            return Err(EngineError::domain("k must be at least 1"));
        }
        if self.chunks.is_empty() {
            return Ok(Evidence::empty(query));
        }
        let terms: Vec<String> = HashEmbedder::tokenize(query).collect();
        let mut scored: Vec<(usize, f64)> = (0..self.chunks.len())
            .map(|i| (i, self.score_chunk(i, &terms)))
            .filter(|(_, s)| *s > 0.0)
            .collect();
        // Descending score; ties by ascending doc id then offset — already
        // the canonical chunk order, so the index is the tiebreak.
        scored.sort_by(|a, b| {
            b.1.partial_cmp(&a.1)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.0.cmp(&b.0))
        });
        let truncated = scored.len() > k;
        let snippets = scored
            .into_iter()
            .take(k)
            .map(|(i, score)| Snippet {
                doc_id: self.chunks[i].doc_id.clone(),
                text: self.chunks[i].text.clone(),
                score,
            })
            .collect();
        Ok(Evidence {
            query: query.to_string(),
            snippets,
            truncated,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corpus() -> Vec<Document> {
        vec![
            Document::new("d1", "", "watterson estimator theta four"),
            Document::new("d2", "", "effective population size"),
            Document::new("d3", "", "unrelated cooking text"),
        ]
    }

    #[test]
    fn term_overlap_ranks_the_matching_doc_first() {
        // d1 matches two query terms, the others none.
        let index = LexicalIndex::build(&corpus(), 512).unwrap();
        let ev = index.search_top_k("watterson estimator", 1).unwrap();
        assert_eq!(ev.snippets.len(), 1);
        assert_eq!(ev.snippets[0].doc_id, "d1");
    }

    #[test]
    fn k_larger_than_corpus_saturates() {
        let index = LexicalIndex::build(&corpus(), 512).unwrap();
        let ev = index.search_top_k("watterson population cooking", 50).unwrap();
        assert_eq!(ev.snippets.len(), 3);
        assert!(!ev.truncated);
        for pair in ev.snippets.windows(2) {
            assert!(pair[0].score >= pair[1].score);
        }
    }

    #[test]
    fn empty_query_is_an_error() {
        let index = LexicalIndex::build(&corpus(), 512).unwrap();
        assert!(index.search_top_k("", 3).is_err());
    }

    #[test]
    fn empty_index_returns_no_snippets() {
        let index = LexicalIndex::build(&[], 512).unwrap();
        let ev = index.search_top_k("anything", 3).unwrap();
        assert!(ev.snippets.is_empty());
        assert!(!ev.truncated);
    }

    #[test]
    fn insertion_order_does_not_change_results() {
        let mut docs = corpus();
        let index_a = LexicalIndex::build(&docs, 512).unwrap();
        docs.reverse();
        let index_b = LexicalIndex::build(&docs, 512).unwrap();
        let q = "population theta cooking text";
        let a = index_a.search_top_k(q, 3).unwrap();
        let b = index_b.search_top_k(q, 3).unwrap();
        assert_eq!(a.snippets, b.snippets);
    }

    #[test]
    fn chunking_splits_long_documents() {
        let long_body = "tok ".repeat(300); // 1200 chars
        let docs = vec![Document::new("d", "", long_body)];
        let index = LexicalIndex::build(&docs, 512).unwrap();
        assert_eq!(index.chunk_count(), 3);
        assert_eq!(index.chunks()[0].offset, 0);
        assert_eq!(index.chunks()[1].offset, 512);
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("index.json");
        let index = LexicalIndex::build(&corpus(), 512).unwrap();
        index.save(&path).unwrap();
        let loaded = LexicalIndex::load(&path).unwrap();
        let a = index.search_top_k("watterson estimator", 2).unwrap();
        let b = loaded.search_top_k("watterson estimator", 2).unwrap();
        assert_eq!(a.snippets, b.snippets);
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        fn arb_word() -> impl Strategy<Value = String> {
            prop::sample::select(vec![
                "theta", "estimator", "population", "mutation", "sites", "sample",
                "cooking", "bread", "flour",
            ])
            .prop_map(str::to_string)
        }

        fn arb_doc(id: usize) -> impl Strategy<Value = Document> {
            prop::collection::vec(arb_word(), 1..40)
                .prop_map(move |words| Document::new(format!("d{id}"), "", words.join(" ")))
        }

        proptest! {
            #[test]
            fn snippet_count_bounded_and_scores_nonincreasing(
                docs in (0..6usize).prop_flat_map(|n| {
                    (0..n).map(arb_doc).collect::<Vec<_>>()
                }),
                query in prop::collection::vec(arb_word(), 1..4),
                k in 1..5usize,
            ) {
                let index = LexicalIndex::build(&docs, 64).unwrap();
                let ev = index.search_top_k(&query.join(" "), k).unwrap();
                prop_assert!(ev.snippets.len() <= k);
                for pair in ev.snippets.windows(2) {
                    prop_assert!(pair[0].score >= pair[1].score);
                }
                for s in &ev.snippets {
                    prop_assert!(s.score > 0.0);
                }
            }
        }
    }

    #[test]
    fn truncation_flag_reflects_left_out_matches() {
        let docs = vec![
            Document::new("a", "", "alpha beta"),
            Document::new("b", "", "alpha gamma"),
            Document::new("c", "", "alpha delta"),
        ];
        let index = LexicalIndex::build(&docs, 512).unwrap();
        let ev = index.search_top_k("alpha", 2).unwrap();
        assert_eq!(ev.snippets.len(), 2);
        assert!(ev.truncated);
    }
}
