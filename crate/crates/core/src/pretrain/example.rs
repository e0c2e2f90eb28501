use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tokenizer::SpecialIds;

/// Label value at positions that carry no MLM target.
pub const IGNORE_INDEX: i64 = -100;

/// Uncorrupted segment(s) for one example, before special tokens are added.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segments {
    pub a: Vec<u32>,
    pub b: Option<Vec<u32>>,
    pub pair_label: Option<u8>,
}

impl Segments {
    pub fn single(a: Vec<u32>) -> Self {
        Self {
            a,
            b: None,
            pair_label: None,
        }
    }

    pub fn pair(a: Vec<u32>, b: Vec<u32>, label: u8) -> Self {
        Self {
            a,
            b: Some(b),
            pair_label: Some(label),
        }
    }

    /// `[CLS] a [SEP]` or `[CLS] a [SEP] b [SEP]`, nothing selected yet.
    pub fn assemble(&self, special: SpecialIds) -> PretrainExample {
        let mut ids = Vec::with_capacity(self.a.len() + self.b.as_ref().map_or(0, Vec::len) + 3);
        ids.push(special.cls);
        ids.extend_from_slice(&self.a);
        ids.push(special.sep);
        let first = ids.len();
        if let Some(b) = &self.b {
            ids.extend_from_slice(b);
            ids.push(special.sep);
        }
        let n = ids.len();
        PretrainExample {
            segment_ids: (0..n).map(|i| u8::from(i >= first)).collect(),
            attention_mask: vec![1; n],
            mlm_labels: vec![IGNORE_INDEX; n],
            corruption: ".".repeat(n),
            input_ids: ids,
            pair_label: self.pair_label,
        }
    }
}

/// One packed training instance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PretrainExample {
    pub input_ids: Vec<u32>,
    pub segment_ids: Vec<u8>,
    pub attention_mask: Vec<u8>,
    pub mlm_labels: Vec<i64>,
    /// One marker per position: `.` untouched, `M` masked, `R` replaced,
    /// `K` selected but kept.
    #[serde(default)]
    pub corruption: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pair_label: Option<u8>,
}

impl PretrainExample {
    pub fn len(&self) -> usize {
        self.input_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.input_ids.is_empty()
    }

    /// Number of positions with attention.
    pub fn content_len(&self) -> usize {
        self.attention_mask.iter().filter(|&&m| m == 1).count()
    }

    /// Right-pad to `len` with `[PAD]`, zero attention and ignored labels.
    pub fn pad_to(&mut self, len: usize, pad: u32) {
        while self.input_ids.len() < len {
            self.input_ids.push(pad);
            self.segment_ids.push(0);
            self.attention_mask.push(0);
            self.mlm_labels.push(IGNORE_INDEX);
            if !self.corruption.is_empty() {
                self.corruption.push('.');
            }
        }
    }

    /// Structural invariants of a packed example.
    pub fn validate(&self, special: SpecialIds, max_len: usize) -> Result<()> {
        let n = self.input_ids.len();
        let bad = |m: &str| Err(Error::Shape(m.to_string()));
        if n > max_len {
            return bad("example longer than max_seq_len");
        }
        if self.segment_ids.len() != n || self.attention_mask.len() != n || self.mlm_labels.len() != n {
            return bad("parallel arrays differ in length");
        }
        if !self.corruption.is_empty() && self.corruption.chars().count() != n {
            return bad("corruption markers differ in length");
        }
        if self.input_ids.first() != Some(&special.cls) {
            return bad("example must start with [CLS]");
        }
        let content = self.content_len();
        if content == 0 {
            return bad("example has no attended positions");
        }
        if self.attention_mask[..content].iter().any(|&m| m != 1) {
            return bad("padding must be trailing");
        }
        if self.input_ids[content - 1] != special.sep {
            return bad("last segment must end with [SEP]");
        }
        let seps = self.input_ids[..content].iter().filter(|&&t| t == special.sep).count();
        let expected_seps = if self.pair_label.is_some() { 2 } else { 1 };
        if seps != expected_seps {
            return bad("wrong number of [SEP] tokens for the pairing mode");
        }
        for i in content..n {
            if self.input_ids[i] != special.pad || self.mlm_labels[i] != IGNORE_INDEX {
                return bad("padding position carries content or a label");
            }
        }
        Ok(())
    }
}
