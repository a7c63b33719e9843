//! Lexical scoring primitives: tokenizer and BM25 index.
//!
//! Deliberately dependency-free and deterministic; the knowledge base ranks
//! summaries with this scorer, and an embedding scorer can replace it behind
//! the same interface.

use std::collections::HashMap;

/// Lowercases, maps every non-alphanumeric character to a space, and splits
/// on whitespace.
pub fn tokenize(text: &str) -> Vec<String> {
    let lowered: String = text
        .chars()
        .map(|c| {
            if c.is_alphanumeric() {
                c.to_ascii_lowercase()
            } else {
                ' '
            }
        })
        .collect();
    lowered.split_whitespace().map(|s| s.to_string()).collect()
}

/// Unique query tokens in first-occurrence order; each term contributes to a
/// BM25 score once.
pub fn tokenize_unique(text: &str) -> Vec<String> {
    let mut seen = std::collections::HashSet::new();
    tokenize(text)
        .into_iter()
        .filter(|t| seen.insert(t.clone()))
        .collect()
}

/// Okapi BM25 over a fixed corpus (k1 = 1.2, b = 0.75), with the +1 inside
/// the IDF logarithm so rare-term scores stay positive.
pub struct Bm25Index {
    term_freqs: Vec<HashMap<String, usize>>,
    doc_lens: Vec<usize>,
    doc_freq: HashMap<String, usize>,
    avg_len: f64,
    k1: f64,
    b: f64,
}

impl Bm25Index {
    pub fn build<S: AsRef<str>>(docs: &[S]) -> Self {
        let mut term_freqs = Vec::with_capacity(docs.len());
        let mut doc_lens = Vec::with_capacity(docs.len());
        let mut doc_freq: HashMap<String, usize> = HashMap::new();
        for doc in docs {
            let tokens = tokenize(doc.as_ref());
            doc_lens.push(tokens.len());
            let mut tf: HashMap<String, usize> = HashMap::new();
            for t in tokens {
                *tf.entry(t).or_insert(0) += 1;
            }
            for term in tf.keys() {
                *doc_freq.entry(term.clone()).or_insert(0) += 1;
            }
            term_freqs.push(tf);
        }
        let avg_len = if doc_lens.is_empty() {
            0.0
        } else {
            doc_lens.iter().sum::<usize>() as f64 / doc_lens.len() as f64
        };
        Self { term_freqs, doc_lens, doc_freq, avg_len, k1: 1.2, b: 0.75 }
    }

    pub fn len(&self) -> usize {
        self.term_freqs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.term_freqs.is_empty()
    }

    fn idf(&self, term: &str) -> f64 {
        let n = self.term_freqs.len() as f64;
        let df = self.doc_freq.get(term).copied().unwrap_or(0) as f64;
        (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
    }

    /// Scores one document against unique query tokens.
    pub fn score(&self, doc: usize, query_tokens: &[String]) -> f64 {
        if self.avg_len == 0.0 {
            return 0.0;
        }
        let dl = self.doc_lens[doc] as f64;
        let norm = self.k1 * (1.0 - self.b + self.b * dl / self.avg_len);
        let mut total = 0.0;
        for term in query_tokens {
            let tf = self.term_freqs[doc].get(term).copied().unwrap_or(0) as f64;
            if tf == 0.0 {
                continue;
            }
            total += self.idf(term) * (tf * (self.k1 + 1.0)) / (tf + norm);
        }
        total
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenizer_strips_punctuation_and_case() {
        assert_eq!(
            tokenize("Detect high-value cycles!"),
            vec!["detect", "high", "value", "cycles"]
        );
    }

    #[test]
    fn unique_tokens_keep_first_occurrence_order() {
        assert_eq!(
            tokenize_unique("flows of flows and Flows"),
            vec!["flows", "of", "and"]
        );
    }

    #[test]
    fn matches_hand_computed_score() {
        // Corpus document lengths 6, 7, 5; average 6. Query terms appear
        // once each, only in document 1, so df = 1 and per-term
        //   idf  = ln(1 + (3 - 1 + 0.5) / 1.5)            = ln(8/3)
        //   gain = 2.2 / (1 + 1.2 * (0.25 + 0.75 * 7/6))  = 2.2 / 2.35
        let docs = [
            "rank important accounts by transfer influence",
            "detect cyclic fund flows and laundering loops",
            "group related accounts into communities",
        ];
        let index = Bm25Index::build(&docs);
        let query = tokenize_unique("detect cyclic fund flows");
        let per_term = (1.0f64 + (3.0 - 1.0 + 0.5) / 1.5).ln() * (2.2 / 2.35);
        let expected = 4.0 * per_term;
        assert!((index.score(1, &query) - expected).abs() < 1e-12);
        assert_eq!(index.score(2, &query), 0.0);
    }

    #[test]
    fn rarer_terms_score_higher() {
        let docs = ["alpha beta", "alpha gamma", "alpha delta"];
        let index = Bm25Index::build(&docs);
        let common = index.score(0, &tokenize_unique("alpha"));
        let rare = index.score(0, &tokenize_unique("beta"));
        assert!(rare > common);
    }

    #[test]
    fn empty_corpus_scores_zero() {
        let index = Bm25Index::build::<&str>(&[]);
        assert!(index.is_empty());
    }
}
