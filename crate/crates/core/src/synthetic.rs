//! Seeded generator for a small Turkish-legal-flavoured corpus with matching
//! vocabulary, BIO-tagged NER sentences and multi-label sentences. Used for
//! fixtures, benches and the end-to-end walkthrough.

use std::collections::BTreeSet;

use rand::seq::IndexedRandom;
use rand::{Rng as _, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::corpus::RawDocument;
use crate::finetune::{BioSentence, MultiLabelExample};
use crate::rng::{derive_seed, Rng, Stream};
use crate::tokenizer::{CLS, MASK, PAD, SEP, UNK};

const SUBJECTS: &[&str] = &[
    "Mahkeme", "Davacı", "Davalı", "Taraflar", "Şirket", "İdare", "Bakanlık", "Yönetim", "Müdürlük", "Kurul",
];
const MODIFIERS: &[&str] = &["ilgili", "yasal", "ek", "yeni", "mevcut", "aylık", "yıllık", "özel"];
const OBJECTS: &[&str] = &[
    "sözleşme", "tebligat", "vergi", "ceza", "fiyat", "bedel", "dava", "kanun", "madde", "fatura", "tazminat", "kira",
];
const LINKS: &[&str] = &["hakkında", "ile", "için", "kapsamında"];
const VERBS: &[&str] = &[
    "karar verdi", "itiraz etti", "ödeme yapacaktır", "başvurdu", "kabul etti", "reddetti", "bildirdi", "onayladı",
];

const FILLER: &[&str] = &["Burada", "bu", "konuda", "ayrıca", "ile", "ve", "dikkat", "etmek", "gerekir", "kararı"];
const ENTITIES: &[(&str, &[&str])] = &[
    ("Law", &["tebligat kanunu", "vergi usul kanunu", "borçlar kanunu", "vuk"]),
    ("Court", &["yargıtay", "danıştay", "asliye mahkemesi"]),
    ("Date", &["1 ocak 2020", "15 mart", "2019 yılı"]),
    ("Money", &["5.00 TL", "100 TL"]),
];

pub const MULTILABEL_NAMES: &[&str] = &["Heading", "Contract", "Price", "Taxes"];
const TRIGGERS: &[&[&str]] = &[
    &["MADDE", "3", "-"],
    &["işbu", "sözleşme"],
    &["bedel", "100", "TL"],
    &["KDV", "vergi"],
];
const ML_FILLER: &[&str] = &["taraflar", "yönetim", "aylık", "ödeme", "yapacaktır", "bildirdi", "ve", "ile", "için"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub documents: usize,
    pub min_sentences: usize,
    pub max_sentences: usize,
    pub ner_sentences: usize,
    pub multilabel_sentences: usize,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            documents: 40,
            min_sentences: 24,
            max_sentences: 40,
            ner_sentences: 200,
            multilabel_sentences: 200,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticSet {
    pub documents: Vec<RawDocument>,
    pub vocab: Vec<String>,
    pub ner: Vec<BioSentence>,
    pub multilabel_names: Vec<String>,
    pub multilabel: Vec<MultiLabelExample>,
}

fn rng_for(seed: u64, index: u64) -> Rng {
    Rng::seed_from_u64(derive_seed(seed, Stream::Sampling, index))
}

pub fn legal_sentence(rng: &mut Rng) -> String {
    let pick = |rng: &mut Rng, xs: &[&'static str]| *xs.choose(rng).expect("non-empty");
    let mut s = format!(
        "{} {} {} {} {} {}",
        pick(rng, SUBJECTS),
        pick(rng, MODIFIERS),
        pick(rng, OBJECTS),
        pick(rng, LINKS),
        pick(rng, OBJECTS),
        pick(rng, VERBS)
    );
    if rng.random_bool(0.3) {
        s = format!("Madde {} uyarınca {}", rng.random_range(1..40), lower_first(&s));
    }
    s.push('.');
    s
}

fn lower_first(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_lowercase().chain(c).collect(),
        None => String::new(),
    }
}

pub fn ner_sentence(rng: &mut Rng) -> BioSentence {
    let mut words = Vec::new();
    let mut tags = Vec::new();
    let push_filler = |rng: &mut Rng, words: &mut Vec<String>, tags: &mut Vec<String>| {
        for _ in 0..rng.random_range(1..3) {
            words.push(FILLER.choose(rng).expect("non-empty").to_string());
            tags.push("O".to_string());
        }
    };
    push_filler(rng, &mut words, &mut tags);
    for _ in 0..rng.random_range(1..=3) {
        let (kind, phrases) = ENTITIES.choose(rng).expect("non-empty");
        let phrase = phrases.choose(rng).expect("non-empty");
        for (i, w) in phrase.split(' ').enumerate() {
            words.push(w.to_string());
            tags.push(format!("{}-{kind}", if i == 0 { "B" } else { "I" }));
        }
        push_filler(rng, &mut words, &mut tags);
    }
    words.push(".".into());
    tags.push("O".into());
    BioSentence { words, tags }
}

pub fn multilabel_sentence(rng: &mut Rng) -> MultiLabelExample {
    let labels: Vec<u8> = (0..MULTILABEL_NAMES.len()).map(|_| u8::from(rng.random_bool(0.4))).collect();
    let mut words: Vec<&str> = Vec::new();
    for (j, &on) in labels.iter().enumerate() {
        if on == 1 {
            words.extend(TRIGGERS[j]);
        }
        for _ in 0..rng.random_range(1..3) {
            words.push(ML_FILLER.choose(rng).expect("non-empty"));
        }
    }
    MultiLabelExample {
        sentence: format!("{} .", words.join(" ")),
        labels,
    }
}

/// Specials, punctuation, then every word in `texts`. Words longer than
/// seven characters also get a `head ##tail` split so continuations occur.
pub fn build_vocab<'a>(texts: impl IntoIterator<Item = &'a str>) -> Vec<String> {
    let mut words = BTreeSet::new();
    for t in texts {
        for w in t.split_whitespace() {
            let w = w.trim_end_matches(['.', ',']);
            if !w.is_empty() {
                words.insert(w.to_string());
            }
        }
    }
    let mut out: Vec<String> = [PAD, UNK, CLS, SEP, MASK, ".", ",", "-"].iter().map(|s| s.to_string()).collect();
    let mut seen: BTreeSet<String> = out.iter().cloned().collect();
    fn add(tok: String, out: &mut Vec<String>, seen: &mut BTreeSet<String>) {
        if seen.insert(tok.clone()) {
            out.push(tok);
        }
    }
    for w in &words {
        let chars: Vec<char> = w.chars().collect();
        if chars.len() > 7 && !w.chars().any(|c| c.is_ascii_digit()) {
            // the whole word is deliberately absent so it tokenizes as two pieces
            add(chars[..4].iter().collect(), &mut out, &mut seen);
            add(format!("##{}", chars[4..].iter().collect::<String>()), &mut out, &mut seen);
        } else {
            add(w.clone(), &mut out, &mut seen);
        }
    }
    for d in '0'..='9' {
        add(d.to_string(), &mut out, &mut seen);
        add(format!("##{d}"), &mut out, &mut seen);
    }
    // A split can be shadowed by a shorter whole word ("mahkeme" inside
    // "mahkemesi"); greedy matching cannot backtrack, so keep those whole.
    for w in &words {
        if !greedy_covers(w, &seen) {
            add(w.clone(), &mut out, &mut seen);
        }
    }
    out
}

fn greedy_covers(word: &str, vocab: &BTreeSet<String>) -> bool {
    let mut start = 0;
    while start < word.len() {
        let rest = &word[start..];
        let hit = rest
            .char_indices()
            .map(|(i, c)| i + c.len_utf8())
            .rev()
            .find(|&end| {
                let piece = if start > 0 { format!("##{}", &rest[..end]) } else { rest[..end].to_string() };
                vocab.contains(&piece)
            });
        match hit {
            Some(end) => start += end,
            None => return false,
        }
    }
    true
}

pub fn generate(cfg: &SyntheticConfig) -> SyntheticSet {
    let documents: Vec<RawDocument> = (0..cfg.documents)
        .map(|d| {
            let mut rng = rng_for(cfg.seed, d as u64);
            let n = rng.random_range(cfg.min_sentences..=cfg.max_sentences.max(cfg.min_sentences));
            let text: Vec<String> = (0..n).map(|_| legal_sentence(&mut rng)).collect();
            RawDocument::new(format!("doc{d:04}"), text.join(" "))
        })
        .collect();
    let mut rng = rng_for(cfg.seed, u64::MAX);
    let ner: Vec<BioSentence> = (0..cfg.ner_sentences).map(|_| ner_sentence(&mut rng)).collect();
    let multilabel: Vec<MultiLabelExample> = (0..cfg.multilabel_sentences).map(|_| multilabel_sentence(&mut rng)).collect();

    let ner_text: Vec<String> = ner.iter().map(|s| s.words.join(" ")).collect();
    let vocab = build_vocab(
        documents
            .iter()
            .map(|d| d.text.as_str())
            .chain(ner_text.iter().map(String::as_str))
            .chain(multilabel.iter().map(|m| m.sentence.as_str()))
            .chain(FILLER.iter().copied())
            .chain(ENTITIES.iter().flat_map(|(_, p)| p.iter().copied()))
            .chain(SUBJECTS.iter().copied())
            .chain(OBJECTS.iter().copied()),
    );
    SyntheticSet {
        documents,
        vocab,
        ner,
        multilabel_names: MULTILABEL_NAMES.iter().map(|s| s.to_string()).collect(),
        multilabel,
    }
}
