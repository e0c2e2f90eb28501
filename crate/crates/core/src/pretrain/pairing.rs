//! Segment construction for the three pairing modes.
//!
//! Segments are built by accumulating whole sentences up to a token budget;
//! a single sentence longer than the budget is truncated. With pairs, the
//! `max_seq_len - 3` content budget is split as `ceil` for segment A and the
//! rest for segment B.

use rand::Rng;

use super::example::Segments;
use super::strategy::PairingMode;
use crate::error::{Error, Result};

/// A document as token ids per sentence.
pub type TokenizedDoc = Vec<Vec<u32>>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Budgets {
    pub single: usize,
    pub a: usize,
    pub b: usize,
}

impl Budgets {
    pub fn new(max_seq_len: usize, mode: PairingMode) -> Result<Self> {
        let min = if mode.has_pairs() { 5 } else { 3 };
        if max_seq_len < min {
            return Err(Error::Config(format!(
                "max_seq_len {max_seq_len} leaves no room for content in {mode:?} mode"
            )));
        }
        let pair_total = max_seq_len.saturating_sub(3);
        let a = pair_total.div_ceil(2);
        Ok(Self {
            single: max_seq_len - 2,
            a,
            b: pair_total - a,
        })
    }
}

/// Greedily take whole sentences from `start` while they fit in `budget`.
/// Returns the segment and the index of the first unused sentence.
pub fn take_segment(sentences: &[Vec<u32>], start: usize, budget: usize) -> (Vec<u32>, usize) {
    let mut seg = Vec::new();
    let mut i = start;
    while i < sentences.len() && sentences[i].is_empty() {
        i += 1;
    }
    while i < sentences.len() {
        let s = &sentences[i];
        if seg.is_empty() && s.len() > budget {
            seg.extend_from_slice(&s[..budget]);
            i += 1;
            break;
        }
        if seg.len() + s.len() > budget {
            break;
        }
        seg.extend_from_slice(s);
        i += 1;
    }
    (seg, i)
}

/// Consecutive segments covering a document.
pub fn chunk_document(sentences: &[Vec<u32>], budget: usize) -> Vec<Vec<u32>> {
    let mut out = Vec::new();
    let mut start = 0;
    loop {
        let (seg, next) = take_segment(sentences, start, budget);
        if seg.is_empty() {
            break;
        }
        out.push(seg);
        start = next;
    }
    out
}

/// Segments of document `doc` under `mode`. For NSP, `docs` supplies the
/// negatives and `b_chunks[d]` holds each document's B-sized segments.
pub fn pairs_for_document<R: Rng + ?Sized>(
    doc: usize,
    docs: &[TokenizedDoc],
    b_chunks: &[Vec<Vec<u32>>],
    mode: PairingMode,
    budgets: Budgets,
    rng: &mut R,
) -> Result<Vec<Segments>> {
    let sentences = &docs[doc];
    let mut out = Vec::new();
    if mode == PairingMode::None {
        return Ok(chunk_document(sentences, budgets.single)
            .into_iter()
            .map(Segments::single)
            .collect());
    }
    let donors: Vec<usize> = if mode == PairingMode::Nsp {
        (0..b_chunks.len())
            .filter(|&d| d != doc && !b_chunks[d].is_empty())
            .collect()
    } else {
        Vec::new()
    };
    let mut start = 0;
    loop {
        let (a, next) = take_segment(sentences, start, budgets.a);
        if a.is_empty() {
            break;
        }
        let (b, after) = take_segment(sentences, next, budgets.b);
        if b.is_empty() {
            break;
        }
        start = after;
        let heads: bool = rng.random_bool(0.5);
        match mode {
            PairingMode::Sop => out.push(if heads {
                Segments::pair(b, a, 0)
            } else {
                Segments::pair(a, b, 1)
            }),
            PairingMode::Nsp => {
                if heads {
                    out.push(Segments::pair(a, b, 1));
                } else {
                    if donors.is_empty() {
                        return Err(Error::Config(
                            "NSP needs at least one other non-empty document for negatives".into(),
                        ));
                    }
                    let d = donors[rng.random_range(0..donors.len())];
                    let pool = &b_chunks[d];
                    let neg = pool[rng.random_range(0..pool.len())].clone();
                    out.push(Segments::pair(a, neg, 0));
                }
            }
            PairingMode::None => unreachable!(),
        }
    }
    Ok(out)
}

/// Pairing for a whole corpus, document streams seeded independently.
pub fn make_pairs(
    docs: &[TokenizedDoc],
    mode: PairingMode,
    max_seq_len: usize,
    seed: u64,
) -> Result<Vec<Segments>> {
    if mode == PairingMode::Nsp && docs.len() < 2 {
        return Err(Error::Config("NSP pairing needs at least 2 documents".into()));
    }
    let budgets = Budgets::new(max_seq_len, mode)?;
    let b_chunks = negative_pool(docs, mode, budgets);
    let mut out = Vec::new();
    for d in 0..docs.len() {
        let mut rng = crate::rng::stream_rng(seed, crate::rng::Stream::Pairing, d as u64);
        out.extend(pairs_for_document(d, docs, &b_chunks, mode, budgets, &mut rng)?);
    }
    Ok(out)
}

pub fn negative_pool(docs: &[TokenizedDoc], mode: PairingMode, budgets: Budgets) -> Vec<Vec<Vec<u32>>> {
    if mode == PairingMode::Nsp {
        docs.iter().map(|d| chunk_document(d, budgets.b)).collect()
    } else {
        Vec::new()
    }
}
