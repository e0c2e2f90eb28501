//! Entity-level NER scores, micro-averaged multi-label scores and the
//! side-by-side comparison table. All scores are on a 0-100 scale.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A parsed BIO tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BioTag<'a> {
    Outside,
    Begin(&'a str),
    Inside(&'a str),
}

impl<'a> BioTag<'a> {
    pub fn parse(tag: &'a str) -> std::result::Result<Self, String> {
        if tag == "O" {
            return Ok(BioTag::Outside);
        }
        let (prefix, kind) = tag
            .split_once('-')
            .ok_or_else(|| format!("tag {tag:?} is neither O nor B-/I-<type>"))?;
        if kind.is_empty() || kind.chars().any(char::is_whitespace) {
            return Err(format!("tag {tag:?} has an empty or blank entity type"));
        }
        match prefix {
            "B" => Ok(BioTag::Begin(kind)),
            "I" => Ok(BioTag::Inside(kind)),
            _ => Err(format!("tag {tag:?} has prefix {prefix:?}, expected B or I")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EntitySpan {
    pub kind: String,
    /// Word index of the first word.
    pub start: usize,
    /// One past the last word.
    pub end: usize,
}

/// Spans in conlleval style: an `I-X` that does not continue an `X` span
/// opens a new one. Unparseable tags count as `O`.
pub fn extract_spans<S: AsRef<str>>(tags: &[S]) -> Vec<EntitySpan> {
    let mut spans = Vec::new();
    let mut open: Option<(&str, usize)> = None;
    for (i, tag) in tags.iter().enumerate() {
        let tag = BioTag::parse(tag.as_ref()).unwrap_or(BioTag::Outside);
        let continues = matches!((tag, open), (BioTag::Inside(k), Some((o, _))) if k == o);
        if continues {
            continue;
        }
        if let Some((kind, start)) = open.take() {
            spans.push(EntitySpan {
                kind: kind.to_string(),
                start,
                end: i,
            });
        }
        if let BioTag::Begin(k) | BioTag::Inside(k) = tag {
            open = Some((k, i));
        }
    }
    if let Some((kind, start)) = open {
        spans.push(EntitySpan {
            kind: kind.to_string(),
            start,
            end: tags.len(),
        });
    }
    spans
}

/// Inverse of [`extract_spans`] for non-overlapping spans.
pub fn spans_to_tags(spans: &[EntitySpan], len: usize) -> Vec<String> {
    let mut tags = vec!["O".to_string(); len];
    for s in spans {
        for (i, tag) in tags.iter_mut().enumerate().take(s.end.min(len)).skip(s.start) {
            *tag = format!("{}-{}", if i == s.start { "B" } else { "I" }, s.kind);
        }
    }
    tags
}

/// Precision, recall and F with their confusion counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Score {
    pub precision: f64,
    pub recall: f64,
    pub f_measure: f64,
    pub true_positives: u64,
    pub false_positives: u64,
    pub false_negatives: u64,
    /// Gold positives (`tp + fn`).
    pub support: u64,
}

impl Score {
    /// Zero denominators give 0 rather than NaN.
    pub fn from_counts(tp: u64, fp: u64, fn_: u64) -> Self {
        let pct = |num: u64, den: u64| if den == 0 { 0.0 } else { 100.0 * num as f64 / den as f64 };
        let precision = pct(tp, tp + fp);
        let recall = pct(tp, tp + fn_);
        let f_measure = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Self {
            precision,
            recall,
            f_measure,
            true_positives: tp,
            false_positives: fp,
            false_negatives: fn_,
            support: tp + fn_,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// `ner` or `multilabel`.
    pub task: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    /// Always `micro`.
    pub averaging: String,
    /// `entity` for NER, `label` for multi-label.
    pub level: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    #[serde(flatten)]
    pub overall: Score,
    /// Per entity type or per label.
    pub breakdown: BTreeMap<String, Score>,
}

impl MetricsReport {
    pub fn precision(&self) -> f64 {
        self.overall.precision
    }

    pub fn recall(&self) -> f64 {
        self.overall.recall
    }

    pub fn f_measure(&self) -> f64 {
        self.overall.f_measure
    }
}

/// Exact-match entity scores, micro-averaged over all sentences.
pub fn ner_metrics<G: AsRef<str>, P: AsRef<str>>(gold: &[Vec<G>], pred: &[Vec<P>]) -> Result<MetricsReport> {
    if gold.len() != pred.len() {
        return Err(Error::Shape(format!("{} gold sentences but {} predicted", gold.len(), pred.len())));
    }
    let mut per_type: BTreeMap<String, [u64; 3]> = BTreeMap::new();
    for (i, (g, p)) in gold.iter().zip(pred).enumerate() {
        if g.len() != p.len() {
            return Err(Error::Shape(format!(
                "sentence {i}: {} gold tags but {} predicted",
                g.len(),
                p.len()
            )));
        }
        let gs: HashSet<EntitySpan> = extract_spans(g).into_iter().collect();
        let ps: HashSet<EntitySpan> = extract_spans(p).into_iter().collect();
        for s in &ps {
            let c = per_type.entry(s.kind.clone()).or_default();
            if gs.contains(s) {
                c[0] += 1;
            } else {
                c[1] += 1;
            }
        }
        for s in gs.difference(&ps) {
            per_type.entry(s.kind.clone()).or_default()[2] += 1;
        }
    }
    let total = per_type
        .values()
        .fold([0u64; 3], |a, c| [a[0] + c[0], a[1] + c[1], a[2] + c[2]]);
    Ok(MetricsReport {
        task: "ner".into(),
        model: None,
        averaging: "micro".into(),
        level: "entity".into(),
        threshold: None,
        overall: Score::from_counts(total[0], total[1], total[2]),
        breakdown: per_type
            .into_iter()
            .map(|(k, c)| (k, Score::from_counts(c[0], c[1], c[2])))
            .collect(),
    })
}

/// Micro-averaged scores over every (example, label) pair with
/// `prediction = prob >= threshold`.
pub fn multilabel_metrics(
    gold: &[Vec<u8>],
    probs: &[Vec<f64>],
    threshold: f64,
    label_names: Option<&[String]>,
) -> Result<MetricsReport> {
    if gold.len() != probs.len() {
        return Err(Error::Shape(format!("{} gold rows but {} predicted", gold.len(), probs.len())));
    }
    let width = gold.first().map_or(0, Vec::len);
    if let Some(names) = label_names {
        if !gold.is_empty() && names.len() != width {
            return Err(Error::Shape(format!("{} label names for {width} labels", names.len())));
        }
    }
    let mut per_label = vec![[0u64; 3]; width];
    for (i, (g, p)) in gold.iter().zip(probs).enumerate() {
        if g.len() != width || p.len() != width {
            return Err(Error::Shape(format!("row {i}: expected {width} labels")));
        }
        for (j, (&y, &q)) in g.iter().zip(p).enumerate() {
            if !(0.0..=1.0).contains(&q) {
                return Err(Error::InvalidArgument(format!("row {i}: probability {q} outside [0, 1]")));
            }
            match (y != 0, q >= threshold) {
                (true, true) => per_label[j][0] += 1,
                (false, true) => per_label[j][1] += 1,
                (true, false) => per_label[j][2] += 1,
                (false, false) => {}
            }
        }
    }
    let total = per_label
        .iter()
        .fold([0u64; 3], |a, c| [a[0] + c[0], a[1] + c[1], a[2] + c[2]]);
    let breakdown = per_label
        .iter()
        .enumerate()
        .map(|(j, c)| {
            let name = label_names.map_or_else(|| format!("label_{j}"), |n| n[j].clone());
            (name, Score::from_counts(c[0], c[1], c[2]))
        })
        .collect();
    Ok(MetricsReport {
        task: "multilabel".into(),
        model: None,
        averaging: "micro".into(),
        level: "label".into(),
        threshold: Some(threshold),
        overall: Score::from_counts(total[0], total[1], total[2]),
        breakdown,
    })
}

/// A rendered comparison table.
#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub text: String,
    pub csv: String,
    /// `best[row][col]` over the flattened P/R/F columns.
    pub best: Vec<Vec<bool>>,
}

/// One row per model; each row lists its reports in the same task order.
/// The best value of each column is flagged with `*` (ties all flagged).
pub fn compare_report(rows: &[(String, Vec<MetricsReport>)]) -> Result<Comparison> {
    let first = rows
        .first()
        .ok_or_else(|| Error::InvalidArgument("nothing to compare".into()))?;
    let tasks: Vec<&str> = first.1.iter().map(|r| r.task.as_str()).collect();
    for (name, reports) in rows {
        let t: Vec<&str> = reports.iter().map(|r| r.task.as_str()).collect();
        if t != tasks {
            return Err(Error::InvalidArgument(format!(
                "row {name} has tasks {t:?}, expected {tasks:?}"
            )));
        }
    }
    let values: Vec<Vec<f64>> = rows
        .iter()
        .map(|(_, reps)| reps.iter().flat_map(|r| [r.precision(), r.recall(), r.f_measure()]).collect())
        .collect();
    let ncols = tasks.len() * 3;
    let best: Vec<Vec<bool>> = values
        .iter()
        .map(|row| {
            (0..ncols)
                .map(|c| values.iter().all(|other| row[c] >= other[c]))
                .collect()
        })
        .collect();

    let mut headers = vec!["Model".to_string()];
    for t in &tasks {
        let label = task_label(t);
        for m in ["P", "R", "F"] {
            headers.push(format!("{label} {m}"));
        }
    }
    let cells: Vec<Vec<String>> = rows
        .iter()
        .zip(&values)
        .zip(&best)
        .map(|(((name, _), vals), flags)| {
            std::iter::once(name.clone())
                .chain(vals.iter().zip(flags).map(|(v, &b)| format!("{v:.2}{}", if b { "*" } else { "" })))
                .collect()
        })
        .collect();
    let widths: Vec<usize> = (0..headers.len())
        .map(|c| {
            cells
                .iter()
                .map(|r| r[c].chars().count())
                .chain([headers[c].chars().count()])
                .max()
                .unwrap_or(0)
        })
        .collect();
    let mut text = String::new();
    let line = |cols: &[String], out: &mut String| {
        for (c, v) in cols.iter().enumerate() {
            if c == 0 {
                let _ = write!(out, "{v:<w$}", w = widths[c]);
            } else {
                let _ = write!(out, "  {v:>w$}", w = widths[c]);
            }
        }
        out.push('\n');
    };
    line(&headers, &mut text);
    let rule: Vec<String> = widths.iter().map(|&w| "-".repeat(w)).collect();
    line(&rule, &mut text);
    for r in &cells {
        line(r, &mut text);
    }
    let _ = writeln!(text, "* best in column; micro-averaged, NER scored at entity level");

    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = vec!["model".into()];
    for t in &tasks {
        for m in ["precision", "recall", "f_measure"] {
            header.push(format!("{t}_{m}"));
        }
    }
    header.push("best".into());
    w.write_record(&header)?;
    for (((name, _), vals), flags) in rows.iter().zip(&values).zip(&best) {
        let mut rec = vec![name.clone()];
        rec.extend(vals.iter().map(|v| format!("{v:.4}")));
        let flagged: Vec<&str> = header[1..=ncols]
            .iter()
            .zip(flags)
            .filter(|(_, &b)| b)
            .map(|(h, _)| h.as_str())
            .collect();
        rec.push(flagged.join(";"));
        w.write_record(&rec)?;
    }
    let csv = String::from_utf8(w.into_inner().map_err(|e| Error::InvalidArgument(e.to_string()))?)
        .expect("csv output is UTF-8");
    Ok(Comparison { text, csv, best })
}

fn task_label(task: &str) -> &str {
    match task {
        "multilabel" => "Multi-label",
        "ner" => "NER",
        other => other,
    }
}
