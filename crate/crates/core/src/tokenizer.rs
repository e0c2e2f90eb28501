//! WordPiece vocabulary and greedy longest-match tokenization.
//!
//! Text is NFC-normalised and split on whitespace into words. Each word is
//! further split around punctuation characters (as the BERT basic tokenizer
//! does), and every resulting piece is matched greedily against the
//! vocabulary, with non-initial sub-pieces carrying the `##` prefix. Case is
//! preserved.

use std::collections::HashMap;
use std::path::Path;

use unicode_normalization::UnicodeNormalization;

use crate::error::{Error, Result};

pub const PAD: &str = "[PAD]";
pub const UNK: &str = "[UNK]";
pub const CLS: &str = "[CLS]";
pub const SEP: &str = "[SEP]";
pub const MASK: &str = "[MASK]";
pub const CONTINUATION_PREFIX: &str = "##";

/// Words longer than this many characters become a single `[UNK]`.
pub const MAX_WORD_CHARS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SpecialIds {
    pub pad: u32,
    pub unk: u32,
    pub cls: u32,
    pub sep: u32,
    pub mask: u32,
}

impl SpecialIds {
    pub fn contains(&self, id: u32) -> bool {
        id == self.pad || id == self.unk || id == self.cls || id == self.sep || id == self.mask
    }
}

#[derive(Debug, Clone)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
    special: SpecialIds,
}

impl Vocabulary {
    /// Build from tokens in id order. Line numbers in errors are 1-based.
    pub fn from_tokens<I, S>(tokens: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut list = Vec::new();
        let mut index = HashMap::new();
        for (i, tok) in tokens.into_iter().enumerate() {
            let tok: String = tok.into();
            if tok.is_empty() {
                return Err(Error::VocabFormat {
                    line: i + 1,
                    message: "empty token".into(),
                });
            }
            if index.insert(tok.clone(), i as u32).is_some() {
                return Err(Error::VocabFormat {
                    line: i + 1,
                    message: format!("duplicate token `{tok}`"),
                });
            }
            list.push(tok);
        }
        let find = |name: &'static str| index.get(name).copied().ok_or(Error::MissingSpecial(name));
        let special = SpecialIds {
            pad: find(PAD)?,
            unk: find(UNK)?,
            cls: find(CLS)?,
            sep: find(SEP)?,
            mask: find(MASK)?,
        };
        if list.len() <= 5 {
            return Err(Error::VocabFormat {
                line: list.len(),
                message: "vocabulary must contain tokens beyond the five special tokens".into(),
            });
        }
        Ok(Self {
            tokens: list,
            index,
            special,
        })
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::from_tokens(text.lines().map(|l| l.trim_end_matches('\r')))
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn special(&self) -> SpecialIds {
        self.special
    }

    pub fn is_special(&self, id: u32) -> bool {
        self.special.contains(id)
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// All ids that are not one of the five special tokens, ascending.
    pub fn non_special_ids(&self) -> Vec<u32> {
        (0..self.tokens.len() as u32)
            .filter(|&id| !self.is_special(id))
            .collect()
    }

    pub fn encode(&self, text: &str) -> Encoding {
        let normalized: String = text.nfc().collect();
        let mut enc = Encoding::default();
        for (w, word) in normalized.split_whitespace().enumerate() {
            self.encode_word(word, w, &mut enc);
        }
        enc
    }

    /// Encode pre-split words; `word_index` refers to positions in `words`.
    pub fn encode_words<S: AsRef<str>>(&self, words: &[S]) -> Encoding {
        let mut enc = Encoding::default();
        for (w, word) in words.iter().enumerate() {
            let normalized: String = word.as_ref().nfc().collect();
            for part in normalized.split_whitespace() {
                self.encode_word(part, w, &mut enc);
            }
        }
        enc
    }

    fn encode_word(&self, word: &str, word_index: usize, enc: &mut Encoding) {
        for piece in split_punctuation(word) {
            if piece.chars().count() > MAX_WORD_CHARS {
                enc.push(self.special.unk, false, word_index);
                continue;
            }
            match self.wordpiece(piece) {
                Some(ids) => {
                    for (k, id) in ids.into_iter().enumerate() {
                        enc.push(id, k > 0, word_index);
                    }
                }
                None => enc.push(self.special.unk, false, word_index),
            }
        }
    }

    fn wordpiece(&self, piece: &str) -> Option<Vec<u32>> {
        let mut out = Vec::new();
        let mut start = 0;
        let mut candidate = String::with_capacity(piece.len() + 2);
        while start < piece.len() {
            let rest = &piece[start..];
            let mut ends: Vec<usize> = rest.char_indices().map(|(i, c)| i + c.len_utf8()).collect();
            ends.reverse();
            let mut found = None;
            for end in ends {
                candidate.clear();
                if start > 0 {
                    candidate.push_str(CONTINUATION_PREFIX);
                }
                candidate.push_str(&rest[..end]);
                if let Some(&id) = self.index.get(candidate.as_str()) {
                    found = Some((id, end));
                    break;
                }
            }
            let (id, end) = found?;
            out.push(id);
            start += end;
        }
        Some(out)
    }

    /// Inverse of [`encode`](Self::encode) up to whitespace: continuation
    /// pieces are glued to their predecessor, special tokens are dropped.
    pub fn decode(&self, ids: &[u32]) -> Result<String> {
        let mut out = String::new();
        for &id in ids {
            let tok = self.token(id).ok_or(Error::TokenOutOfRange {
                id,
                size: self.len(),
            })?;
            if self.is_special(id) {
                continue;
            }
            match tok.strip_prefix(CONTINUATION_PREFIX) {
                Some(rest) if !rest.is_empty() => out.push_str(rest),
                _ => {
                    if !out.is_empty() {
                        out.push(' ');
                    }
                    out.push_str(tok);
                }
            }
        }
        Ok(out)
    }
}

pub fn load_vocab(path: impl AsRef<Path>) -> Result<Vocabulary> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Vocabulary::parse(&text)
}

/// True for ASCII punctuation and common Unicode punctuation marks.
pub fn is_punctuation(c: char) -> bool {
    c.is_ascii_punctuation()
        || matches!(
            c,
            '…' | '‘' | '’' | '‚' | '“' | '”' | '„' | '«' | '»' | '‹' | '›' | '–' | '—' | '¡'
                | '¿' | '§' | '¶' | '·' | '•' | '′' | '″'
        )
}

fn split_punctuation(word: &str) -> impl Iterator<Item = &str> {
    let mut pieces = Vec::new();
    let mut start = 0;
    for (i, c) in word.char_indices() {
        if is_punctuation(c) {
            if start < i {
                pieces.push(&word[start..i]);
            }
            pieces.push(&word[i..i + c.len_utf8()]);
            start = i + c.len_utf8();
        }
    }
    if start < word.len() {
        pieces.push(&word[start..]);
    }
    pieces.into_iter()
}

/// Token ids with continuation flags and the source word of every token.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Encoding {
    pub ids: Vec<u32>,
    pub is_continuation: Vec<bool>,
    pub word_index: Vec<usize>,
}

impl Encoding {
    fn push(&mut self, id: u32, continuation: bool, word: usize) {
        self.ids.push(id);
        self.is_continuation.push(continuation);
        self.word_index.push(word);
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}
