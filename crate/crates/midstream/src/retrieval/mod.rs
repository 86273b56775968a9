//! Corpus filtering, the deterministic test embedder, and the in-memory
//! lexical index behind `search_local_documents`.

mod embed;
mod filter;
mod index;

pub use embed::{cosine, Embedder, HashEmbedder, EMBED_DIM};
pub use filter::{filter_corpus, keep_document, keyword_centroid, FilterThresholds};
pub use index::{IndexedChunk, LexicalIndex, INDEX_SCHEMA_VERSION};

use serde::{Deserialize, Serialize};

use crate::error::EngineError;

/// One corpus document.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    #[serde(default)]
    pub title: String,
    pub body: String,
    /// Post-filter verdict, set by [`filter_corpus`].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kept: Option<bool>,
}

impl Document {
    pub fn new(id: impl Into<String>, title: impl Into<String>, body: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            title: title.into(),
            body: body.into(),
            kept: None,
        }
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        if self.id.is_empty() {
            return Err(EngineError::domain("document id must be non-empty"));
        }
        if self.body.is_empty() {
            return Err(EngineError::domain("document body must be non-empty"));
        }
        Ok(())
    }
}

/// Positive/negative keyword lists driving the corpus filter.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KeywordProfile {
    pub positive: Vec<String>,
    pub negative: Vec<String>,
}

impl KeywordProfile {
    pub fn validate(&self) -> Result<(), EngineError> {
        if self.positive.is_empty() || self.negative.is_empty() {
            return Err(EngineError::domain(
                "keyword profile needs non-empty positive and negative lists",
            ));
        }
        Ok(())
    }

    /// The shipped default profile: biology/chemistry research topics as
    /// positives, applied and off-topic themes as negatives.
    pub fn builtin() -> Self {
        serde_json::from_str(include_str!("../../templates/keyword_profile.json"))
            .expect("shipped keyword profile parses")
    }
}

/// One retrieved snippet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snippet {
    pub doc_id: String,
    pub text: String,
    pub score: f64,
}

/// Result of one retrieval query: at most `top_k` snippets, scores
/// nonincreasing.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Evidence {
    pub query: String,
    pub snippets: Vec<Snippet>,
    /// True when more positive-scoring chunks existed than were returned.
    pub truncated: bool,
}

impl Evidence {
    pub fn empty(query: impl Into<String>) -> Self {
        Self {
            query: query.into(),
            snippets: Vec::new(),
            truncated: false,
        }
    }

    /// Render snippets as numbered lines for prompt binding.
    pub fn rendered(&self) -> String {
        self.snippets
            .iter()
            .enumerate()
            .map(|(i, s)| format!("{}. ({}) {}", i + 1, s.doc_id, s.text))
            .collect::<Vec<_>>()
            .join("\n")
    }

    /// JSON form handed back through the `search_local_documents` tool.
    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.snippets).unwrap_or_else(|_| "[]".to_string())
    }
}

/// Retrieval contract the monitor pipeline and tool loop call into.
pub trait Retriever: Send + Sync {
    fn search_top_k(&self, query: &str, k: usize) -> Result<Evidence, EngineError>;
}
