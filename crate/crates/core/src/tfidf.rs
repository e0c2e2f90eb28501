//! Token-level TF-IDF over cleaned documents and the ranked keyword pool
//! that serves as the replacement source for TF-IDF masking strategies.
//!
//! `tf(t, d) = count(t, d) / |d|`, `idf(t) = ln((1 + N) / (1 + df(t))) + 1`.
//! A token's corpus score aggregates its per-document `tf * idf`, by maximum
//! (default) or by mean over all `N` documents.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{BufRead, Write};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::CleanDocument;
use crate::error::{Error, Result};
use crate::parallel::{self, Execution};
use crate::tokenizer::Vocabulary;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    #[default]
    Max,
    Mean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TfIdfConfig {
    pub k: usize,
    pub aggregation: Aggregation,
}

impl Default for TfIdfConfig {
    fn default() -> Self {
        Self {
            k: 1000,
            aggregation: Aggregation::Max,
        }
    }
}

/// Raw counts for one document.
#[derive(Debug, Clone, Default)]
pub struct DocTerms {
    pub counts: HashMap<u32, u64>,
    pub total: u64,
}

impl DocTerms {
    pub fn of(doc: &CleanDocument, vocab: &Vocabulary) -> Self {
        let mut terms = DocTerms::default();
        for s in &doc.sentences {
            for id in vocab.encode(s).ids {
                *terms.counts.entry(id).or_default() += 1;
                terms.total += 1;
            }
        }
        terms
    }

    pub fn tf(&self, id: u32) -> f64 {
        match self.counts.get(&id) {
            Some(&c) if self.total > 0 => c as f64 / self.total as f64,
            _ => 0.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TfIdfModel {
    doc_count: usize,
    doc_freq: BTreeMap<u32, usize>,
    /// Per-token term frequencies in every document containing the token.
    term_freqs: BTreeMap<u32, Vec<f64>>,
}

impl TfIdfModel {
    pub fn fit(corpus: &[CleanDocument], vocab: &Vocabulary, exec: Execution) -> Result<Self> {
        if corpus.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let docs = parallel::map(exec, corpus, |d| DocTerms::of(d, vocab));
        Ok(Self::from_terms(&docs))
    }

    pub fn from_terms(docs: &[DocTerms]) -> Self {
        let mut doc_freq = BTreeMap::new();
        let mut term_freqs: BTreeMap<u32, Vec<f64>> = BTreeMap::new();
        for d in docs {
            for &id in d.counts.keys() {
                *doc_freq.entry(id).or_insert(0) += 1;
                term_freqs.entry(id).or_default().push(d.tf(id));
            }
        }
        for tfs in term_freqs.values_mut() {
            tfs.sort_by(|a, b| a.total_cmp(b));
        }
        Self {
            doc_count: docs.len(),
            doc_freq,
            term_freqs,
        }
    }

    pub fn doc_count(&self) -> usize {
        self.doc_count
    }

    pub fn doc_freq(&self, id: u32) -> usize {
        self.doc_freq.get(&id).copied().unwrap_or(0)
    }

    /// Smoothed inverse document frequency; `None` for unseen tokens.
    pub fn idf(&self, id: u32) -> Option<f64> {
        let df = *self.doc_freq.get(&id)?;
        Some(((1.0 + self.doc_count as f64) / (1.0 + df as f64)).ln() + 1.0)
    }

    pub fn score(&self, id: u32, aggregation: Aggregation) -> Option<f64> {
        let idf = self.idf(id)?;
        let tfs = self.term_freqs.get(&id)?;
        let tf = match aggregation {
            Aggregation::Max => tfs.last().copied().unwrap_or(0.0),
            Aggregation::Mean => tfs.iter().sum::<f64>() / self.doc_count as f64,
        };
        Some(tf * idf)
    }

    /// Ids of every token seen in at least one document, ascending.
    pub fn scored_ids(&self) -> impl Iterator<Item = u32> + '_ {
        self.doc_freq.keys().copied()
    }

    pub fn keyword_list(&self, k: usize, vocab: &Vocabulary, aggregation: Aggregation) -> Result<KeywordList> {
        if k == 0 {
            return Err(Error::InvalidArgument("keyword list size must be at least 1".into()));
        }
        let mut scored: Vec<(u32, f64)> = self
            .scored_ids()
            .filter(|&id| is_keyword_candidate(id, vocab))
            .filter_map(|id| self.score(id, aggregation).map(|s| (id, s)))
            .collect();
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        scored.truncate(k);
        let entries = scored
            .into_iter()
            .map(|(id, score)| KeywordEntry {
                token: vocab.token(id).unwrap_or_default().to_string(),
                id,
                score,
            })
            .collect();
        Ok(KeywordList { entries })
    }
}

/// Special tokens and tokens made only of punctuation or symbols never
/// enter the keyword list.
pub fn is_keyword_candidate(id: u32, vocab: &Vocabulary) -> bool {
    if vocab.is_special(id) {
        return false;
    }
    let Some(tok) = vocab.token(id) else {
        return false;
    };
    let body = tok.strip_prefix(crate::tokenizer::CONTINUATION_PREFIX).unwrap_or(tok);
    body.chars().any(char::is_alphanumeric)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeywordEntry {
    pub token: String,
    pub id: u32,
    pub score: f64,
}

/// Ranked replacement pool: scores non-increasing, ids unique.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KeywordList {
    entries: Vec<KeywordEntry>,
}

impl KeywordList {
    /// Validates ranking order, uniqueness and (against `vocab`) that no
    /// entry is a special token or disagrees with the vocabulary.
    pub fn new(entries: Vec<KeywordEntry>, vocab: Option<&Vocabulary>) -> Result<Self> {
        let mut seen = HashSet::new();
        for (i, e) in entries.iter().enumerate() {
            if !seen.insert(e.id) {
                return Err(Error::InvalidArgument(format!("duplicate keyword id {} at rank {}", e.id, i + 1)));
            }
            if !e.score.is_finite() {
                return Err(Error::InvalidArgument(format!("non-finite score at rank {}", i + 1)));
            }
            if i > 0 && e.score > entries[i - 1].score {
                return Err(Error::InvalidArgument(format!("scores increase at rank {}", i + 1)));
            }
            if let Some(v) = vocab {
                if v.is_special(e.id) {
                    return Err(Error::InvalidArgument(format!("special token `{}` in keyword list", e.token)));
                }
                if v.token(e.id) != Some(e.token.as_str()) {
                    return Err(Error::InvalidArgument(format!(
                        "keyword `{}` does not match vocabulary id {}",
                        e.token, e.id
                    )));
                }
            }
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[KeywordEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, id: u32) -> bool {
        self.entries.iter().any(|e| e.id == id)
    }

    pub fn ids(&self) -> HashSet<u32> {
        self.entries.iter().map(|e| e.id).collect()
    }

    /// Uniform draw over the list entries.
    pub fn sample_replacement<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<u32> {
        if self.entries.is_empty() {
            return Err(Error::InvalidArgument("cannot sample from an empty keyword list".into()));
        }
        Ok(self.entries[rng.random_range(0..self.entries.len())].id)
    }

    pub fn write_jsonl(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        for e in &self.entries {
            serde_json::to_writer(&mut w, e)?;
            w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_jsonl(path: impl AsRef<Path>, vocab: Option<&Vocabulary>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut entries = Vec::new();
        for (n, line) in std::io::BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            entries.push(
                serde_json::from_str(&line)
                    .map_err(|e| Error::parse(format!("{}:{}", path.display(), n + 1), e.to_string()))?,
            );
        }
        Self::new(entries, vocab)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream_rng, Stream};

    fn vocab() -> Vocabulary {
        Vocabulary::from_tokens([
            "[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]", "kanunu", "madde", "ve", "komisyon", ".", "##.",
        ])
        .unwrap()
    }

    fn doc(id: &str, s: &str) -> CleanDocument {
        CleanDocument {
            id: id.into(),
            kept: true,
            reason: None,
            sentences: vec![s.into()],
        }
    }

    #[test]
    fn single_document_idf_is_one() {
        let v = vocab();
        let m = TfIdfModel::fit(&[doc("a", "kanunu ve madde")], &v, Execution::Sequential).unwrap();
        for t in ["kanunu", "ve", "madde"] {
            assert_eq!(m.idf(v.id(t).unwrap()), Some(1.0));
        }
        assert_eq!(m.idf(v.id("komisyon").unwrap()), None);
        assert_eq!(m.doc_freq(v.id("komisyon").unwrap()), 0);
    }

    #[test]
    fn empty_corpus_is_an_error() {
        assert!(matches!(
            TfIdfModel::fit(&[], &vocab(), Execution::Sequential),
            Err(Error::EmptyCorpus)
        ));
    }

    #[test]
    fn k_zero_is_rejected_and_large_k_returns_all() {
        let v = vocab();
        let m = TfIdfModel::fit(&[doc("a", "kanunu ve madde .")], &v, Execution::Sequential).unwrap();
        assert!(m.keyword_list(0, &v, Aggregation::Max).is_err());
        let all = m.keyword_list(100, &v, Aggregation::Max).unwrap();
        // "." excluded as punctuation
        assert_eq!(all.len(), 3);
        assert!(!all.contains(v.id(".").unwrap()));
    }

    #[test]
    fn ties_break_by_lower_id() {
        let v = vocab();
        let m = TfIdfModel::fit(&[doc("a", "ve kanunu")], &v, Execution::Sequential).unwrap();
        let kw = m.keyword_list(2, &v, Aggregation::Max).unwrap();
        let ids: Vec<u32> = kw.entries().iter().map(|e| e.id).collect();
        assert_eq!(ids, vec![v.id("kanunu").unwrap(), v.id("ve").unwrap()]);
    }

    #[test]
    fn sampling_singleton_and_empty() {
        let mut rng = stream_rng(1, Stream::Sampling, 0);
        let list = KeywordList::new(
            vec![KeywordEntry {
                token: "kanunu".into(),
                id: 5,
                score: 1.0,
            }],
            Some(&vocab()),
        )
        .unwrap();
        for _ in 0..20 {
            assert_eq!(list.sample_replacement(&mut rng).unwrap(), 5);
        }
        assert!(KeywordList::default().sample_replacement(&mut rng).is_err());
    }

    #[test]
    fn validation_rejects_bad_lists() {
        let v = vocab();
        let e = |token: &str, id, score| KeywordEntry {
            token: token.into(),
            id,
            score,
        };
        assert!(KeywordList::new(vec![e("ve", 7, 1.0), e("ve", 7, 0.5)], None).is_err());
        assert!(KeywordList::new(vec![e("ve", 7, 0.5), e("madde", 6, 1.0)], None).is_err());
        assert!(KeywordList::new(vec![e("[MASK]", 4, 1.0)], Some(&v)).is_err());
        assert!(KeywordList::new(vec![e("madde", 7, 1.0)], Some(&v)).is_err());
    }
}
