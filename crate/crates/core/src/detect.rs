//! Similarity scoring and the m-sigma decision rule.

use std::io::Write;

use crate::error::{Error, Result};
use crate::io::format_sig9;
use crate::model::{ClassModel, Decision, DetectorModel, Embedding, NearestPrototype, ScoringMode, Verdict};
use crate::stats::{kernel, sq_dist};

/// Prototypes listed in a decision unless asked otherwise.
pub const DEFAULT_TOP_K: usize = 3;

fn check_dim(x: &Embedding, dim: usize) -> Result<()> {
    if x.dim() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: x.dim(),
        });
    }
    Ok(())
}

/// Sum of squared distances to every prototype of the class, divided by
/// `1 + |x - mean|² / var_scalar`. Lower is more similar.
pub fn score_verbatim(x: &Embedding, class: &ClassModel) -> Result<f64> {
    check_dim(x, class.dim())?;
    Ok(verbatim_raw(x.values(), class))
}

/// Highest Cauchy density of `x` around any prototype of the class.
pub fn score_density(x: &Embedding, class: &ClassModel) -> Result<f64> {
    check_dim(x, class.dim())?;
    Ok(density_raw(x.values(), class))
}

pub(crate) fn verbatim_raw(x: &[f64], class: &ClassModel) -> f64 {
    let numerator: f64 = class
        .prototypes
        .iter()
        .map(|p| sq_dist(x, p.centroid.values()))
        .sum();
    let denominator = 1.0 + sq_dist(x, class.mean()) / class.var_scalar;
    numerator / denominator
}

pub(crate) fn density_raw(x: &[f64], class: &ClassModel) -> f64 {
    class
        .prototypes
        .iter()
        .map(|p| kernel(sq_dist(x, p.centroid.values()), class.var_scalar))
        .fold(f64::NEG_INFINITY, f64::max)
}

pub(crate) fn class_score(x: &[f64], class: &ClassModel, mode: ScoringMode) -> f64 {
    match mode {
        ScoringMode::Density => density_raw(x, class),
        ScoringMode::Verbatim => verbatim_raw(x, class),
    }
}

pub fn decide(x: &Embedding, model: &DetectorModel) -> Result<Decision> {
    decide_top_k(x, model, DEFAULT_TOP_K)
}

/// Classify `x` or flag it as novel, listing the `top_k` nearest prototypes
/// across all classes.
pub fn decide_top_k(x: &Embedding, model: &DetectorModel, top_k: usize) -> Result<Decision> {
    if model.classes.is_empty() || model.threshold.count() == 0 {
        return Err(Error::UntrainedModel);
    }
    check_dim(x, model.dim)?;
    let xs = x.values();

    let per_class_scores: Vec<f64> = model
        .classes
        .iter()
        .map(|c| class_score(xs, c, model.mode))
        .collect();

    // first extreme wins, so ties go to the lowest class id
    let mut best = 0;
    for (i, &s) in per_class_scores.iter().enumerate().skip(1) {
        let better = match model.mode {
            ScoringMode::Density => s > per_class_scores[best],
            ScoringMode::Verbatim => s < per_class_scores[best],
        };
        if better {
            best = i;
        }
    }
    let chosen_score = per_class_scores[best];
    let threshold_value = model.threshold.threshold();
    let novel = match model.mode {
        ScoringMode::Density => chosen_score < threshold_value,
        ScoringMode::Verbatim => chosen_score > threshold_value,
    };

    Ok(Decision {
        verdict: if novel { Verdict::Novel } else { Verdict::Class(best) },
        per_class_scores,
        chosen_score,
        threshold_value,
        nearest_prototypes: nearest_prototypes(xs, model, top_k),
    })
}

fn nearest_prototypes(x: &[f64], model: &DetectorModel, k: usize) -> Vec<NearestPrototype> {
    let mut all: Vec<(f64, usize, usize)> = model
        .classes
        .iter()
        .flat_map(|c| {
            c.prototypes
                .iter()
                .enumerate()
                .map(move |(i, p)| (sq_dist(x, p.centroid.values()), c.class_id, i))
        })
        .collect();
    all.sort_by(|a, b| {
        a.0.total_cmp(&b.0)
            .then(a.1.cmp(&b.1))
            .then(a.2.cmp(&b.2))
    });
    all.into_iter()
        .take(k)
        .map(|(d2, class_id, prototype_index)| NearestPrototype {
            class_id,
            prototype_index,
            distance: d2.sqrt(),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub sample: usize,
    pub score: f64,
    pub score_mean: f64,
    pub threshold: f64,
    pub verdict: Verdict,
}

/// Per-sample score trace against the training envelope.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TraceTable {
    pub rows: Vec<TraceRow>,
}

impl TraceTable {
    pub const HEADER: &'static str = "sample,score,score_mean,threshold,verdict";

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{}", Self::HEADER)?;
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{}",
                r.sample,
                format_sig9(r.score),
                format_sig9(r.score_mean),
                format_sig9(r.threshold),
                verdict_word(r.verdict)
            )?;
        }
        Ok(())
    }
}

pub(crate) fn verdict_word(v: Verdict) -> &'static str {
    match v {
        Verdict::Class(_) => "class",
        Verdict::Novel => "deepfake",
    }
}

pub fn decide_batch(xs: &[Embedding], model: &DetectorModel) -> Result<(Vec<Decision>, TraceTable)> {
    decide_batch_top_k(xs, model, DEFAULT_TOP_K)
}

pub fn decide_batch_top_k(
    xs: &[Embedding],
    model: &DetectorModel,
    top_k: usize,
) -> Result<(Vec<Decision>, TraceTable)> {
    let decisions = xs
        .iter()
        .map(|x| decide_top_k(x, model, top_k))
        .collect::<Result<Vec<_>>>()?;
    let score_mean = model.threshold.score_mean();
    let rows = decisions
        .iter()
        .enumerate()
        .map(|(sample, d)| TraceRow {
            sample,
            score: d.chosen_score,
            score_mean,
            threshold: d.threshold_value,
            verdict: d.verdict,
        })
        .collect();
    Ok((decisions, TraceTable { rows }))
}
