//! Token selection and MLM corruption.

use std::ops::AddAssign;

use rand::seq::{index, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::example::{PretrainExample, Segments, IGNORE_INDEX};
use super::strategy::{partition_counts, MaskingStrategy, ReplacementSource};
use crate::error::{Error, Result};
use crate::tfidf::KeywordList;
use crate::tokenizer::{SpecialIds, Vocabulary};

/// Per-position corruption markers stored alongside each example.
pub mod op {
    pub const NONE: char = '.';
    pub const MASKED: char = 'M';
    pub const REPLACED: char = 'R';
    pub const KEPT: char = 'K';
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StrategyReport {
    pub selected: u64,
    pub masked: u64,
    pub replaced: u64,
    pub kept: u64,
    pub replaced_from_list: u64,
    pub replaced_from_vocab: u64,
}

impl StrategyReport {
    pub fn is_consistent(&self) -> bool {
        self.masked + self.replaced + self.kept == self.selected
            && self.replaced_from_list + self.replaced_from_vocab == self.replaced
    }
}

impl AddAssign for StrategyReport {
    fn add_assign(&mut self, o: Self) {
        self.selected += o.selected;
        self.masked += o.masked;
        self.replaced += o.replaced;
        self.kept += o.kept;
        self.replaced_from_list += o.replaced_from_list;
        self.replaced_from_vocab += o.replaced_from_vocab;
    }
}

/// Positions of non-special tokens.
pub fn eligible_positions(tokens: &[u32], special: &SpecialIds) -> Vec<usize> {
    tokens
        .iter()
        .enumerate()
        .filter(|(_, &t)| !special.contains(t))
        .map(|(i, _)| i)
        .collect()
}

/// Number of tokens selected from `eligible` candidates:
/// `max(1, floor(select_frac * eligible))`, or 0 when nothing is eligible.
pub fn selection_count(eligible: usize, s: &MaskingStrategy) -> usize {
    if eligible == 0 {
        0
    } else {
        (s.select_floor(eligible as u64) as usize).max(1)
    }
}

/// Uniform sample without replacement of the positions to corrupt,
/// returned in ascending order.
pub fn select_positions<R: Rng + ?Sized>(
    tokens: &[u32],
    special: &SpecialIds,
    s: &MaskingStrategy,
    rng: &mut R,
) -> Vec<usize> {
    let eligible = eligible_positions(tokens, special);
    let n = selection_count(eligible.len(), s);
    let mut picked: Vec<usize> = index::sample(rng, eligible.len(), n)
        .into_iter()
        .map(|i| eligible[i])
        .collect();
    picked.sort_unstable();
    picked
}

/// Where replacement tokens come from.
#[derive(Debug, Clone)]
pub enum ReplacementPool<'a> {
    None,
    Vocab(Vec<u32>),
    Keywords(&'a KeywordList),
}

impl<'a> ReplacementPool<'a> {
    pub fn for_strategy(
        s: &MaskingStrategy,
        vocab: &Vocabulary,
        keywords: Option<&'a KeywordList>,
    ) -> Result<Self> {
        match s.replacement_source() {
            ReplacementSource::None => Ok(ReplacementPool::None),
            ReplacementSource::VocabRandom => Ok(ReplacementPool::Vocab(vocab.non_special_ids())),
            ReplacementSource::TfidfList => match keywords {
                Some(k) if !k.is_empty() => Ok(ReplacementPool::Keywords(k)),
                Some(_) => Err(Error::Config("keyword list is empty".into())),
                None => Err(Error::Config(
                    "strategy replaces from the TF-IDF keyword list but none was supplied".into(),
                )),
            },
        }
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<(u32, bool)> {
        match self {
            ReplacementPool::None => Err(Error::Config("strategy has no replacement source".into())),
            ReplacementPool::Vocab(ids) => Ok((ids[rng.random_range(0..ids.len())], false)),
            ReplacementPool::Keywords(list) => Ok((list.sample_replacement(rng)?, true)),
        }
    }
}

/// Applies one masking strategy with a prebuilt replacement pool.
#[derive(Debug, Clone)]
pub struct Corrupter<'a> {
    strategy: MaskingStrategy,
    special: SpecialIds,
    pool: ReplacementPool<'a>,
}

impl<'a> Corrupter<'a> {
    pub fn new(
        strategy: MaskingStrategy,
        vocab: &Vocabulary,
        keywords: Option<&'a KeywordList>,
    ) -> Result<Self> {
        Ok(Self {
            strategy,
            special: vocab.special(),
            pool: ReplacementPool::for_strategy(&strategy, vocab, keywords)?,
        })
    }

    pub fn strategy(&self) -> &MaskingStrategy {
        &self.strategy
    }

    pub fn select<R: Rng + ?Sized>(&self, tokens: &[u32], rng: &mut R) -> Vec<usize> {
        select_positions(tokens, &self.special, &self.strategy, rng)
    }

    /// Shuffle the selected positions, slice them into masked / replaced /
    /// kept runs by [`partition_counts`], and rewrite the input ids.
    pub fn corrupt<R: Rng + ?Sized>(
        &self,
        input: &Segments,
        positions: &[usize],
        rng: &mut R,
    ) -> Result<(PretrainExample, StrategyReport)> {
        let mut ex = input.assemble(self.special);
        let mut seen = vec![false; ex.input_ids.len()];
        for &p in positions {
            if p >= ex.input_ids.len() || self.special.contains(ex.input_ids[p]) || seen[p] {
                return Err(Error::InvalidArgument(format!(
                    "position {p} is out of range, special or repeated"
                )));
            }
            seen[p] = true;
        }
        let mut order = positions.to_vec();
        order.shuffle(rng);
        let part = partition_counts(order.len() as u64, &self.strategy);
        let (masked, rest) = order.split_at(part.masked as usize);
        let (replaced, kept) = rest.split_at(part.replaced as usize);

        let mut ops: Vec<char> = vec![op::NONE; ex.input_ids.len()];
        let mut report = StrategyReport {
            selected: order.len() as u64,
            masked: part.masked,
            replaced: part.replaced,
            kept: part.kept,
            ..Default::default()
        };
        for &p in &order {
            ex.mlm_labels[p] = ex.input_ids[p] as i64;
        }
        for &p in masked {
            ex.input_ids[p] = self.special.mask;
            ops[p] = op::MASKED;
        }
        for &p in replaced {
            let (id, from_list) = self.pool.draw(rng)?;
            ex.input_ids[p] = id;
            ops[p] = op::REPLACED;
            if from_list {
                report.replaced_from_list += 1;
            } else {
                report.replaced_from_vocab += 1;
            }
        }
        for &p in kept {
            ops[p] = op::KEPT;
        }
        ex.corruption = ops.into_iter().collect();
        debug_assert!(ex.mlm_labels.iter().filter(|&&l| l != IGNORE_INDEX).count() == order.len());
        Ok((ex, report))
    }
}

/// One-shot convenience over [`Corrupter`].
pub fn corrupt<R: Rng + ?Sized>(
    input: &Segments,
    positions: &[usize],
    s: &MaskingStrategy,
    vocab: &Vocabulary,
    keywords: Option<&KeywordList>,
    rng: &mut R,
) -> Result<(PretrainExample, StrategyReport)> {
    Corrupter::new(*s, vocab, keywords)?.corrupt(input, positions, rng)
}
