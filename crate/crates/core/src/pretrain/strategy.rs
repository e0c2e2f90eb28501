//! Masking strategies and the six named pre-training configurations.
//!
//! Fractions are held as integer basis points so that count partitions are
//! exact: `floor(0.8 * n)` must not drift by one because `0.8` has no exact
//! binary representation.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const BASIS: u32 = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReplacementSource {
    VocabRandom,
    TfidfList,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairingMode {
    Nsp,
    Sop,
    None,
}

impl PairingMode {
    pub fn has_pairs(self) -> bool {
        self != PairingMode::None
    }
}

/// Selection rate plus the masked / replaced / kept split of the selected
/// tokens.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "StrategyFractions", into = "StrategyFractions")]
pub struct MaskingStrategy {
    select_bp: u32,
    mask_bp: u32,
    replace_bp: u32,
    keep_bp: u32,
    source: ReplacementSource,
}

/// Serialized form of [`MaskingStrategy`].
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct StrategyFractions {
    #[serde(default = "default_select")]
    pub select_frac: f64,
    pub mask_frac: f64,
    pub replace_frac: f64,
    pub keep_frac: f64,
    pub replacement_source: ReplacementSource,
}

fn default_select() -> f64 {
    0.15
}

fn to_bp(name: &str, frac: f64) -> Result<u32> {
    if !(0.0..=1.0).contains(&frac) {
        return Err(Error::Config(format!("{name} = {frac} is outside [0, 1]")));
    }
    let scaled = frac * BASIS as f64;
    let bp = scaled.round();
    if (scaled - bp).abs() > 1e-6 {
        return Err(Error::Config(format!(
            "{name} = {frac} is not a whole number of basis points"
        )));
    }
    Ok(bp as u32)
}

impl TryFrom<StrategyFractions> for MaskingStrategy {
    type Error = Error;

    fn try_from(f: StrategyFractions) -> Result<Self> {
        MaskingStrategy::from_basis_points(
            to_bp("select_frac", f.select_frac)?,
            to_bp("mask_frac", f.mask_frac)?,
            to_bp("replace_frac", f.replace_frac)?,
            to_bp("keep_frac", f.keep_frac)?,
            f.replacement_source,
        )
    }
}

impl From<MaskingStrategy> for StrategyFractions {
    fn from(s: MaskingStrategy) -> Self {
        StrategyFractions {
            select_frac: s.select_frac(),
            mask_frac: s.mask_frac(),
            replace_frac: s.replace_frac(),
            keep_frac: s.keep_frac(),
            replacement_source: s.source,
        }
    }
}

impl MaskingStrategy {
    pub fn from_basis_points(
        select_bp: u32,
        mask_bp: u32,
        replace_bp: u32,
        keep_bp: u32,
        source: ReplacementSource,
    ) -> Result<Self> {
        if select_bp > BASIS {
            return Err(Error::Config("selection rate above 100%".into()));
        }
        if mask_bp + replace_bp + keep_bp != BASIS {
            return Err(Error::Config(format!(
                "mask + replace + keep must sum to 1 (got {}/{BASIS})",
                mask_bp + replace_bp + keep_bp
            )));
        }
        if replace_bp > 0 && source == ReplacementSource::None {
            return Err(Error::Config(
                "a non-zero replace fraction needs a replacement source".into(),
            ));
        }
        Ok(Self {
            select_bp,
            mask_bp,
            replace_bp,
            keep_bp,
            source,
        })
    }

    /// Whole-percent split with the standard 15% selection rate.
    pub fn percent(mask: u32, replace: u32, keep: u32, source: ReplacementSource) -> Result<Self> {
        Self::from_basis_points(1500, mask * 100, replace * 100, keep * 100, source)
    }

    pub fn select_bp(&self) -> u32 {
        self.select_bp
    }

    pub fn select_frac(&self) -> f64 {
        self.select_bp as f64 / BASIS as f64
    }

    pub fn mask_frac(&self) -> f64 {
        self.mask_bp as f64 / BASIS as f64
    }

    pub fn replace_frac(&self) -> f64 {
        self.replace_bp as f64 / BASIS as f64
    }

    pub fn keep_frac(&self) -> f64 {
        self.keep_bp as f64 / BASIS as f64
    }

    pub fn replacement_source(&self) -> ReplacementSource {
        self.source
    }

    pub fn needs_keywords(&self) -> bool {
        self.source == ReplacementSource::TfidfList && self.replace_bp > 0
    }

    /// `floor(select_frac * n)`.
    pub fn select_floor(&self, n: u64) -> u64 {
        scale_floor(n, self.select_bp)
    }
}

fn scale_floor(n: u64, bp: u32) -> u64 {
    (n as u128 * bp as u128 / BASIS as u128) as u64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    pub masked: u64,
    pub replaced: u64,
    pub kept: u64,
}

/// `masked = floor(mask * n)`, `replaced = floor(replace * n)`, and the
/// remainder is kept. When `keep` is zero the remainder goes to the last
/// class with a non-zero fraction instead, so a zero fraction always means
/// zero tokens.
pub fn partition_counts(n_selected: u64, s: &MaskingStrategy) -> Partition {
    let mut masked = scale_floor(n_selected, s.mask_bp);
    let mut replaced = scale_floor(n_selected, s.replace_bp);
    let rest = n_selected - masked - replaced;
    let mut kept = 0;
    if s.keep_bp > 0 {
        kept = rest;
    } else if s.replace_bp > 0 {
        replaced += rest;
    } else {
        masked += rest;
    }
    Partition { masked, replaced, kept }
}

/// The six pre-training configurations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Preset {
    #[serde(rename = "nsp_80_10_10")]
    NspMlm,
    #[serde(rename = "sop_80_10_10")]
    SopMlm,
    #[serde(rename = "mlm_80_10_10")]
    Mlm,
    #[serde(rename = "mlm_80_0_20")]
    MlmNoReplace,
    #[serde(rename = "mlm_80_10tfidf_10")]
    MlmTfidf10,
    #[serde(rename = "mlm_80_20tfidf_0")]
    MlmTfidf20,
}

impl Preset {
    pub const ALL: [Preset; 6] = [
        Preset::NspMlm,
        Preset::SopMlm,
        Preset::Mlm,
        Preset::MlmNoReplace,
        Preset::MlmTfidf10,
        Preset::MlmTfidf20,
    ];

    /// Command-line name.
    pub fn key(self) -> &'static str {
        match self {
            Preset::NspMlm => "nsp_80_10_10",
            Preset::SopMlm => "sop_80_10_10",
            Preset::Mlm => "mlm_80_10_10",
            Preset::MlmNoReplace => "mlm_80_0_20",
            Preset::MlmTfidf10 => "mlm_80_10tfidf_10",
            Preset::MlmTfidf20 => "mlm_80_20tfidf_0",
        }
    }

    /// Name used in reports and comparison tables.
    pub fn label(self) -> &'static str {
        match self {
            Preset::NspMlm => "NSP_MLM_80_10_10",
            Preset::SopMlm => "SOP_MLM_80_10_10",
            Preset::Mlm => "MLM_80_10_10",
            Preset::MlmNoReplace => "MLM_80_0_20",
            Preset::MlmTfidf10 => "MLM_80_(10_TF_IDF)_10",
            Preset::MlmTfidf20 => "MLM_80_(20_TF_IDF)_0",
        }
    }

    pub fn pairing(self) -> PairingMode {
        match self {
            Preset::NspMlm => PairingMode::Nsp,
            Preset::SopMlm => PairingMode::Sop,
            _ => PairingMode::None,
        }
    }

    pub fn masking(self) -> MaskingStrategy {
        use ReplacementSource::*;
        let (m, r, k, src) = match self {
            Preset::NspMlm | Preset::SopMlm | Preset::Mlm => (80, 10, 10, VocabRandom),
            Preset::MlmNoReplace => (80, 0, 20, None),
            Preset::MlmTfidf10 => (80, 10, 10, TfidfList),
            Preset::MlmTfidf20 => (80, 20, 0, TfidfList),
        };
        MaskingStrategy::percent(m, r, k, src).expect("preset fractions are valid")
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.key() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Preset::ALL.iter().map(|p| p.key()).collect();
                Error::Config(format!("unknown strategy `{s}` (expected one of {})", names.join(", ")))
            })
    }
}
