//! Corpus ingestion: cleaning verdicts, rule-based sentence splitting and
//! corpus statistics.

use std::collections::HashSet;
use std::io::{BufRead, Write};
use std::path::Path;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::parallel::{self, Execution};
use crate::tokenizer::Vocabulary;

const ABBREVIATIONS: &str = include_str!("../data/abbreviations.txt");

/// Letters of the Turkish alphabet (plus circumflex vowels) outside ASCII.
pub const TURKISH_EXTRA_LETTERS: &str = "çğıöşüÇĞİÖŞÜâîûÂÎÛ";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawDocument {
    pub id: String,
    pub text: String,
    pub byte_size: usize,
}

impl RawDocument {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        let text = text.into();
        Self {
            id: id.into(),
            byte_size: text.len(),
            text,
        }
    }

    pub fn from_bytes(id: impl Into<String>, bytes: Vec<u8>) -> Result<Self> {
        let id = id.into();
        match String::from_utf8(bytes) {
            Ok(text) => Ok(Self::new(id, text)),
            Err(_) => Err(Error::Decode { id }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectionReason {
    TooSmall,
    NonTargetScript,
    SymbolRatio,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CleaningRules {
    pub min_bytes: usize,
    pub script_threshold: f64,
    pub symbol_threshold: f64,
    /// Non-ASCII letters that count as the target script.
    pub target_letters: String,
}

impl Default for CleaningRules {
    fn default() -> Self {
        Self {
            min_bytes: 1024,
            script_threshold: 0.20,
            symbol_threshold: 0.30,
            target_letters: TURKISH_EXTRA_LETTERS.to_string(),
        }
    }
}

/// One line of the cleaning manifest. Rejected documents keep their
/// sentences so the verdict can be audited.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CleanDocument {
    pub id: String,
    pub kept: bool,
    pub reason: Option<RejectionReason>,
    pub sentences: Vec<String>,
}

impl CleanDocument {
    /// Sentences joined by single spaces.
    pub fn text(&self) -> String {
        self.sentences.join(" ")
    }
}

/// Character class counts over the non-whitespace characters of a text.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CharProfile {
    pub total: usize,
    pub foreign: usize,
    pub symbols: usize,
}

impl CharProfile {
    pub fn of(text: &str, target_letters: &str) -> Self {
        let mut p = CharProfile::default();
        for c in text.chars().filter(|c| !c.is_whitespace()) {
            p.total += 1;
            if !c.is_alphanumeric() {
                p.symbols += 1;
            } else if !c.is_ascii() && !target_letters.contains(c) {
                p.foreign += 1;
            }
        }
        p
    }

    fn ratio(n: usize, total: usize) -> f64 {
        if total == 0 {
            0.0
        } else {
            n as f64 / total as f64
        }
    }

    pub fn foreign_ratio(&self) -> f64 {
        Self::ratio(self.foreign, self.total)
    }

    pub fn symbol_ratio(&self) -> f64 {
        Self::ratio(self.symbols, self.total)
    }
}

pub fn clean_document(doc: &RawDocument, rules: &CleaningRules) -> CleanDocument {
    let reason = if doc.byte_size <= rules.min_bytes {
        Some(RejectionReason::TooSmall)
    } else {
        let profile = CharProfile::of(&doc.text, &rules.target_letters);
        if profile.foreign_ratio() > rules.script_threshold {
            Some(RejectionReason::NonTargetScript)
        } else if profile.symbol_ratio() > rules.symbol_threshold {
            Some(RejectionReason::SymbolRatio)
        } else {
            None
        }
    };
    CleanDocument {
        id: doc.id.clone(),
        kept: reason.is_none(),
        reason,
        sentences: split_sentences(&doc.text),
    }
}

pub fn clean_all(docs: &[RawDocument], rules: &CleaningRules, exec: Execution) -> Vec<CleanDocument> {
    parallel::map(exec, docs, |d| clean_document(d, rules))
}

fn abbreviations() -> &'static HashSet<&'static str> {
    static SET: OnceLock<HashSet<&'static str>> = OnceLock::new();
    SET.get_or_init(|| {
        ABBREVIATIONS
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .collect()
    })
}

pub fn is_abbreviation(word: &str) -> bool {
    abbreviations().contains(word)
}

fn is_terminator(c: char) -> bool {
    matches!(c, '.' | '!' | '?' | '…')
}

fn is_opener(c: char) -> bool {
    matches!(c, '(' | '[' | '"' | '\'' | '‘' | '“' | '«')
}

fn is_closer(c: char) -> bool {
    matches!(c, ')' | ']' | '"' | '\'' | '’' | '”' | '»')
}

/// Split after a run of `.`, `!`, `?` or `…` (optionally followed by closing
/// quotes or brackets) when the next non-space character, after any opening
/// quotes or brackets, is an uppercase letter or a digit. A lone period ending a stop-listed abbreviation never
/// splits.
pub fn split_sentences(text: &str) -> Vec<String> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut out = Vec::new();
    let mut start = 0usize;
    let mut i = 0usize;
    let push = |out: &mut Vec<String>, s: &str| {
        let s = s.trim();
        if !s.is_empty() {
            out.push(s.to_string());
        }
    };
    while i < chars.len() {
        if !is_terminator(chars[i].1) {
            i += 1;
            continue;
        }
        let run_start = i;
        let mut j = i;
        while j < chars.len() && is_terminator(chars[j].1) {
            j += 1;
        }
        while j < chars.len() && is_closer(chars[j].1) {
            j += 1;
        }
        let mut k = j;
        while k < chars.len() && chars[k].1.is_whitespace() {
            k += 1;
        }
        let mut first = k;
        while first < chars.len() && is_opener(chars[first].1) {
            first += 1;
        }
        let boundary = k > j
            && first < chars.len()
            && (chars[first].1.is_uppercase() || chars[first].1.is_numeric());
        if boundary {
            let end_byte = if j < chars.len() { chars[j].0 } else { text.len() };
            let lone_period = j - run_start == 1 && chars[run_start].1 == '.';
            let abbreviated = lone_period && {
                let word_start = text[..chars[run_start].0]
                    .rfind(char::is_whitespace)
                    .map(|p| p + text[p..].chars().next().map_or(1, char::len_utf8))
                    .unwrap_or(0)
                    .max(start);
                is_abbreviation(&text[word_start..end_byte])
            };
            if !abbreviated {
                push(&mut out, &text[start..end_byte]);
                start = chars[k].0;
            }
        }
        i = k.max(i + 1);
    }
    push(&mut out, &text[start..]);
    out
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub file_count: u64,
    pub sentence_count: u64,
    pub token_count: u64,
    pub unique_token_count: u64,
    pub word_count: u64,
    pub unique_word_count: u64,
}

struct DocCounts {
    sentences: u64,
    tokens: u64,
    words: u64,
    token_set: HashSet<u32>,
    word_set: HashSet<String>,
}

pub fn compute_stats(corpus: &[CleanDocument], vocab: &Vocabulary, exec: Execution) -> Result<CorpusStats> {
    if let Some(d) = corpus.iter().find(|d| !d.kept) {
        return Err(Error::InvalidArgument(format!(
            "document `{}` was rejected by cleaning; statistics cover kept documents only",
            d.id
        )));
    }
    let per_doc = parallel::map(exec, corpus, |doc| {
        let mut c = DocCounts {
            sentences: doc.sentences.len() as u64,
            tokens: 0,
            words: 0,
            token_set: HashSet::new(),
            word_set: HashSet::new(),
        };
        for s in &doc.sentences {
            let enc = vocab.encode(s);
            c.tokens += enc.len() as u64;
            c.token_set.extend(enc.ids);
            for w in s.split_whitespace() {
                c.words += 1;
                if !c.word_set.contains(w) {
                    c.word_set.insert(w.to_string());
                }
            }
        }
        c
    });
    let mut stats = CorpusStats {
        file_count: corpus.len() as u64,
        ..Default::default()
    };
    let mut tokens = HashSet::new();
    let mut words = HashSet::new();
    for c in per_doc {
        stats.sentence_count += c.sentences;
        stats.token_count += c.tokens;
        stats.word_count += c.words;
        tokens.extend(c.token_set);
        words.extend(c.word_set);
    }
    stats.unique_token_count = tokens.len() as u64;
    stats.unique_word_count = words.len() as u64;
    Ok(stats)
}

/// Read every `*.txt` file in `dir`, sorted by file name; ids are file stems.
pub fn read_corpus_dir(dir: impl AsRef<Path>) -> Result<Vec<RawDocument>> {
    let dir = dir.as_ref();
    let mut paths = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_file() && path.extension().is_some_and(|e| e == "txt") {
            paths.push(path);
        }
    }
    paths.sort();
    paths
        .into_iter()
        .map(|p| {
            let bytes = std::fs::read(&p).map_err(|e| Error::io(&p, e))?;
            let id = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            RawDocument::from_bytes(id, bytes)
        })
        .collect()
}

pub fn write_clean_jsonl(path: impl AsRef<Path>, docs: &[CleanDocument]) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    for d in docs {
        serde_json::to_writer(&mut w, d)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_clean_jsonl(path: impl AsRef<Path>) -> Result<Vec<CleanDocument>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (n, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let doc = serde_json::from_str(&line)
            .map_err(|e| Error::parse(format!("{}:{}", path.display(), n + 1), e.to_string()))?;
        out.push(doc);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_and_empty_documents_are_too_small() {
        let rules = CleaningRules::default();
        let d = clean_document(&RawDocument::new("a", "x".repeat(900)), &rules);
        assert!(!d.kept);
        assert_eq!(d.reason, Some(RejectionReason::TooSmall));
        let d = clean_document(&RawDocument::new("e", ""), &rules);
        assert_eq!(d.reason, Some(RejectionReason::TooSmall));
        // exactly at the threshold is still rejected
        let d = clean_document(&RawDocument::new("b", "a".repeat(1024)), &rules);
        assert_eq!(d.reason, Some(RejectionReason::TooSmall));
    }

    #[test]
    fn invalid_utf8_names_the_document() {
        let err = RawDocument::from_bytes("tez_17", vec![0x66, 0xff, 0xfe]).unwrap_err();
        assert!(matches!(err, Error::Decode { ref id } if id == "tez_17"));
    }

    #[test]
    fn symbol_heavy_document_is_rejected() {
        let text = "Madde 1 ... ### ==== ---- ;;;; ".repeat(60);
        let d = clean_document(&RawDocument::new("s", text), &CleaningRules::default());
        assert_eq!(d.reason, Some(RejectionReason::SymbolRatio));
    }

    #[test]
    fn turkish_letters_are_target_script() {
        let p = CharProfile::of("çğıöşü ÇĞİÖŞÜ abc", TURKISH_EXTRA_LETTERS);
        assert_eq!(p.total, 15);
        assert_eq!(p.foreign, 0);
        let p = CharProfile::of("дом abc", TURKISH_EXTRA_LETTERS);
        assert_eq!(p.foreign, 3);
    }

    #[test]
    fn splits_on_terminator_before_uppercase() {
        assert!(split_sentences("").is_empty());
        assert_eq!(
            split_sentences("Madde 5 uygulanır. Taraflar kabul eder."),
            vec!["Madde 5 uygulanır.", "Taraflar kabul eder."]
        );
        assert_eq!(split_sentences("Av. Yılmaz geldi."), vec!["Av. Yılmaz geldi."]);
    }

    #[test]
    fn no_split_before_lowercase_or_without_space() {
        assert_eq!(split_sentences("Bkz. madde 3. fıkra."), vec!["Bkz. madde 3. fıkra."]);
        assert_eq!(split_sentences("1.5 TL ödenir.Sonra"), vec!["1.5 TL ödenir.Sonra"]);
    }

    #[test]
    fn terminator_runs_and_closers() {
        assert_eq!(
            split_sentences("Ne dedi?! \"Bitti.\" 2020 yılında… Son"),
            vec!["Ne dedi?!", "\"Bitti.\"", "2020 yılında…", "Son"]
        );
    }

    #[test]
    fn sentences_cover_all_non_whitespace() {
        let text = "  Dr. Ak geldi.  Karar verildi!\n\nİtiraz edildi? 3 gün sürdü ";
        let s = split_sentences(text);
        assert_eq!(s.len(), 4);
        let joined: String = s.concat().chars().filter(|c| !c.is_whitespace()).collect();
        let orig: String = text.chars().filter(|c| !c.is_whitespace()).collect();
        assert_eq!(joined, orig);
    }

    #[test]
    fn stats_on_empty_corpus_are_zero() {
        let v = Vocabulary::from_tokens(["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]", "a"]).unwrap();
        assert_eq!(compute_stats(&[], &v, Execution::Sequential).unwrap(), CorpusStats::default());
    }

    #[test]
    fn stats_reject_unkept_documents() {
        let v = Vocabulary::from_tokens(["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]", "a"]).unwrap();
        let d = CleanDocument {
            id: "x".into(),
            kept: false,
            reason: Some(RejectionReason::TooSmall),
            sentences: vec![],
        };
        assert!(compute_stats(&[d], &v, Execution::Sequential).is_err());
    }
}
