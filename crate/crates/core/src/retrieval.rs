//! BM25 ranking of library tools against a query.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::schema::{ToolDefinition, ToolLibrary};

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum RetrievalError {
    #[error("cannot rank an empty tool library")]
    EmptyLibrary,
    #[error("invalid BM25 parameters k1={k1}, b={b}")]
    InvalidParams { k1: f64, b: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Self { k1: 1.5, b: 0.75 }
    }
}

impl Bm25Params {
    pub fn new(k1: f64, b: f64) -> Result<Self, RetrievalError> {
        if k1 > 0.0 && (0.0..=1.0).contains(&b) {
            Ok(Self { k1, b })
        } else {
            Err(RetrievalError::InvalidParams { k1, b })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankedEntry {
    pub position: usize,
    pub score: f64,
}

/// Every library position, best first. Ties go to the lower position.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RankedTools {
    pub entries: Vec<RankedEntry>,
}

impl RankedTools {
    /// Sorts `(position, score)` pairs into ranking order.
    pub fn from_scores(scores: impl IntoIterator<Item = (usize, f64)>) -> Self {
        let mut entries: Vec<RankedEntry> = scores
            .into_iter()
            .map(|(position, score)| RankedEntry { position, score })
            .collect();
        entries.sort_by(|a, b| {
            b.score
                .total_cmp(&a.score)
                .then(a.position.cmp(&b.position))
        });
        Self { entries }
    }

    pub fn positions(&self) -> impl Iterator<Item = usize> + '_ {
        self.entries.iter().map(|e| e.position)
    }

    /// Zero-based rank of a library position.
    pub fn rank_of(&self, position: usize) -> Option<usize> {
        self.entries.iter().position(|e| e.position == position)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Lowercased alphanumeric runs. Underscores and punctuation separate terms.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Text a tool is indexed under: name, description, then each parameter's
/// name and description.
pub fn tool_document(tool: &ToolDefinition) -> String {
    let mut doc = format!("{} {}", tool.name, tool.description);
    for p in &tool.params {
        doc.push(' ');
        doc.push_str(&p.name);
        doc.push(' ');
        doc.push_str(&p.description);
    }
    doc
}

/// Okapi BM25 over pre-tokenized documents.
///
/// `idf(t) = ln((N - df + 0.5) / (df + 0.5) + 1)`, and each query token
/// (repeats included) contributes `idf * tf * (k1 + 1) / (tf + k1 * (1 - b + b * dl / avgdl))`.
#[derive(Debug, Clone)]
pub struct Bm25Index {
    params: Bm25Params,
    term_freqs: Vec<HashMap<String, usize>>,
    doc_lens: Vec<usize>,
    avg_len: f64,
    doc_freq: HashMap<String, usize>,
}

impl Bm25Index {
    pub fn new(docs: &[Vec<String>], params: Bm25Params) -> Self {
        let mut doc_freq: HashMap<String, usize> = HashMap::new();
        let term_freqs: Vec<HashMap<String, usize>> = docs
            .iter()
            .map(|doc| {
                let mut tf = HashMap::new();
                for term in doc {
                    *tf.entry(term.clone()).or_insert(0) += 1;
                }
                for term in tf.keys() {
                    *doc_freq.entry(term.clone()).or_insert(0) += 1;
                }
                tf
            })
            .collect();
        let doc_lens: Vec<usize> = docs.iter().map(Vec::len).collect();
        let total: usize = doc_lens.iter().sum();
        let avg_len = if docs.is_empty() {
            0.0
        } else {
            total as f64 / docs.len() as f64
        };
        Self {
            params,
            term_freqs,
            doc_lens,
            avg_len,
            doc_freq,
        }
    }

    pub fn idf(&self, term: &str) -> f64 {
        let n = self.doc_lens.len() as f64;
        let df = self.doc_freq.get(term).copied().unwrap_or(0) as f64;
        ((n - df + 0.5) / (df + 0.5) + 1.0).ln()
    }

    pub fn score(&self, doc: usize, query: &[String]) -> f64 {
        let Bm25Params { k1, b } = self.params;
        let norm = if self.avg_len > 0.0 {
            1.0 - b + b * self.doc_lens[doc] as f64 / self.avg_len
        } else {
            1.0
        };
        query
            .iter()
            .filter_map(|term| {
                let tf = *self.term_freqs[doc].get(term)? as f64;
                Some(self.idf(term) * tf * (k1 + 1.0) / (tf + k1 * norm))
            })
            .fold(0.0, |acc, s| acc + s)
    }

    pub fn rank(&self, query: &[String]) -> RankedTools {
        RankedTools::from_scores((0..self.doc_lens.len()).map(|d| (d, self.score(d, query))))
    }
}

pub fn bm25_rank(
    query: &str,
    lib: &ToolLibrary,
    params: Bm25Params,
) -> Result<RankedTools, RetrievalError> {
    if lib.is_empty() {
        return Err(RetrievalError::EmptyLibrary);
    }
    let docs: Vec<Vec<String>> = lib
        .tools()
        .iter()
        .map(|t| tokenize(&tool_document(t)))
        .collect();
    Ok(Bm25Index::new(&docs, params).rank(&tokenize(query)))
}

/// First `min(k, len)` positions of a ranking.
pub fn top_k(ranked: &RankedTools, k: usize) -> Vec<usize> {
    assert!(k >= 1, "top_k requires k >= 1");
    ranked.positions().take(k).collect()
}

/// Scoring seam used by the pipeline; BM25 is the stock implementation.
pub trait Retriever: Send + Sync {
    fn rank(&self, query: &str, lib: &ToolLibrary) -> Result<RankedTools, RetrievalError>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Bm25Retriever {
    pub params: Bm25Params,
}

impl Retriever for Bm25Retriever {
    fn rank(&self, query: &str, lib: &ToolLibrary) -> Result<RankedTools, RetrievalError> {
        bm25_rank(query, lib, self.params)
    }
}
