//! Online prototype identification.
//!
//! Samples of one class are visited in ascending `source_row` order. Each
//! sample updates the running class mean and variance, then its Cauchy
//! density under those statistics is compared with the densities of the
//! existing prototypes. A density above the current maximum or below the
//! current minimum makes the sample a new prototype; otherwise it is folded
//! into the nearest prototype's centroid. With medoid snapping, every
//! published centroid is then replaced by the nearest sample it absorbed.

use crate::detect::class_score;
use crate::error::{Error, Result};
use crate::model::{
    validate_dataset, ClassModel, DetectorModel, Embedding, LabeledSample, Prototype, ScoringMode,
    ThresholdStats, FORMAT_VERSION,
};
use crate::stats::{kernel, sq_dist, RunningStats, RunningVecStats};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LearnOptions {
    /// Replace centroids by their nearest absorbed training sample.
    pub snap_medoid: bool,
    pub mode: ScoringMode,
    /// Sigma multiplier of the decision envelope.
    pub m: f64,
}

impl Default for LearnOptions {
    fn default() -> Self {
        LearnOptions {
            snap_medoid: true,
            mode: ScoringMode::Density,
            m: 3.0,
        }
    }
}

/// A prototype creation observed during learning.
#[derive(Debug, Clone, PartialEq)]
pub struct CreationEvent {
    pub source_row: usize,
    pub density: f64,
    /// `(min, max)` density of the prototypes that existed at the time;
    /// `None` for the first prototype of a class.
    pub band: Option<(f64, f64)>,
}

struct Working {
    centroid: Vec<f64>,
    support: u64,
    /// Indices into the current batch.
    members: Vec<usize>,
}

fn sorted_by_row(samples: &[LabeledSample]) -> Vec<&LabeledSample> {
    let mut ordered: Vec<&LabeledSample> = samples.iter().collect();
    ordered.sort_by_key(|s| s.source_row);
    ordered
}

fn check_dims(samples: &[&LabeledSample], dim: usize) -> Result<()> {
    for s in samples {
        if s.embedding.dim() != dim {
            return Err(Error::RowDimensionMismatch {
                row: s.source_row,
                expected: dim,
                found: s.embedding.dim(),
            });
        }
    }
    Ok(())
}

/// Run the online procedure over `batch`, continuing from whatever state
/// `class` already holds, then re-publish centroids.
fn absorb(
    class: &mut ClassModel,
    batch: &[&LabeledSample],
    snap: bool,
    events: &mut Vec<CreationEvent>,
) -> Result<()> {
    let mut work: Vec<Working> = class
        .prototypes
        .iter()
        .map(|p| Working {
            centroid: p.online_centroid().values().to_vec(),
            support: p.support,
            members: Vec::new(),
        })
        .collect();
    let mut creation: Vec<f64> = class.prototypes.iter().map(|p| p.creation_density).collect();

    for (i, s) in batch.iter().enumerate() {
        let x = s.embedding.values();
        class.stats.push(x)?;
        if work.is_empty() {
            work.push(Working {
                centroid: x.to_vec(),
                support: 1,
                members: vec![i],
            });
            creation.push(1.0);
            events.push(CreationEvent {
                source_row: s.source_row,
                density: 1.0,
                band: None,
            });
            continue;
        }

        let mean = class.stats.mean();
        let var = class.stats.var_scalar();
        let density = kernel(sq_dist(x, mean), var);
        let (lo, hi) = work
            .iter()
            .map(|w| kernel(sq_dist(&w.centroid, mean), var))
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), d| (lo.min(d), hi.max(d)));

        if density > hi || density < lo {
            work.push(Working {
                centroid: x.to_vec(),
                support: 1,
                members: vec![i],
            });
            creation.push(density);
            events.push(CreationEvent {
                source_row: s.source_row,
                density,
                band: Some((lo, hi)),
            });
        } else {
            let mut nearest = 0;
            let mut best = f64::INFINITY;
            for (j, w) in work.iter().enumerate() {
                let d = sq_dist(x, &w.centroid);
                if d < best {
                    best = d;
                    nearest = j;
                }
            }
            let w = &mut work[nearest];
            let support = w.support as f64;
            for (c, &xj) in w.centroid.iter_mut().zip(x) {
                *c = (support * *c + xj) / (support + 1.0);
            }
            w.support += 1;
            w.members.push(i);
        }
    }

    let old = std::mem::take(&mut class.prototypes);
    let mut published = Vec::with_capacity(work.len());
    for (j, w) in work.into_iter().enumerate() {
        let online = Embedding::new(w.centroid)?;
        let incumbent = old.get(j).and_then(|p| p.snapped_sample_row.map(|row| (p.centroid.clone(), row)));
        let proto = if snap {
            let mut best = incumbent.map(|(e, row)| (sq_dist(e.values(), online.values()), e, row));
            for &m in &w.members {
                let s = batch[m];
                let d = sq_dist(s.embedding.values(), online.values());
                if best.as_ref().is_none_or(|(bd, _, _)| d < *bd) {
                    best = Some((d, s.embedding.clone(), s.source_row));
                }
            }
            let (_, centroid, row) = best.expect("prototype without members");
            Prototype {
                centroid,
                running_centroid: Some(online),
                class_id: class.class_id,
                support: w.support,
                creation_density: creation[j],
                snapped_sample_row: Some(row),
            }
        } else {
            Prototype {
                centroid: online,
                running_centroid: None,
                class_id: class.class_id,
                support: w.support,
                creation_density: creation[j],
                snapped_sample_row: None,
            }
        };
        published.push(proto);
    }
    class.prototypes = published;
    class.var_scalar = class.stats.var_scalar();
    Ok(())
}

fn fresh_class(class_id: usize, class_name: &str, dim: usize) -> ClassModel {
    let stats = RunningVecStats::new(dim);
    ClassModel {
        class_id,
        class_name: class_name.to_string(),
        var_scalar: stats.var_scalar(),
        stats,
        score_stats: RunningStats::new(),
        prototypes: Vec::new(),
    }
}

/// Learn one class from scratch. Returns the model, the own-class score of
/// every sample (in canonical order) and the prototype creation log.
pub fn learn_class_traced(
    class_id: usize,
    class_name: &str,
    samples: &[LabeledSample],
    options: &LearnOptions,
) -> Result<(ClassModel, Vec<f64>, Vec<CreationEvent>)> {
    let ordered = sorted_by_row(samples);
    let first = ordered.first().ok_or_else(|| Error::EmptyClass(class_name.to_string()))?;
    let dim = first.embedding.dim();
    check_dims(&ordered, dim)?;

    let mut class = fresh_class(class_id, class_name, dim);
    let mut events = Vec::new();
    absorb(&mut class, &ordered, options.snap_medoid, &mut events)?;

    let scores: Vec<f64> = ordered
        .iter()
        .map(|s| class_score(s.embedding.values(), &class, options.mode))
        .collect();
    class.score_stats.extend(scores.iter().copied());
    Ok((class, scores, events))
}

pub fn learn_class(
    class_id: usize,
    class_name: &str,
    samples: &[LabeledSample],
    options: &LearnOptions,
) -> Result<ClassModel> {
    learn_class_traced(class_id, class_name, samples, options).map(|(c, _, _)| c)
}

/// Train a detector over every declared class. `class_names[i]` names
/// class id `i`; every class must have at least one sample.
pub fn train(
    samples: &[LabeledSample],
    class_names: &[String],
    options: &LearnOptions,
) -> Result<DetectorModel> {
    if !(options.m.is_finite() && options.m > 0.0) {
        return Err(Error::InvalidConfig(format!("sigma multiplier must be positive, got {}", options.m)));
    }
    let summary = validate_dataset(samples)?;
    for (i, name) in class_names.iter().enumerate() {
        if class_names[..i].contains(name) {
            return Err(Error::DuplicateClass(name.clone()));
        }
    }
    if let Some(&id) = summary.class_counts.keys().find(|&&id| id >= class_names.len()) {
        return Err(Error::UnknownClass(id.to_string()));
    }

    let mut by_class: Vec<Vec<LabeledSample>> = vec![Vec::new(); class_names.len()];
    for s in samples {
        by_class[s.class_id].push(s.clone());
    }

    let mut threshold = ThresholdStats::new(options.m);
    let mut classes = Vec::with_capacity(class_names.len());
    for (id, (name, members)) in class_names.iter().zip(&by_class).enumerate() {
        let (class, scores, _) = learn_class_traced(id, name, members, options)?;
        threshold.stats.extend(scores);
        classes.push(class);
    }

    Ok(DetectorModel {
        format_version: FORMAT_VERSION,
        mode: options.mode,
        dim: summary.dim,
        snap_medoid: options.snap_medoid,
        threshold,
        classes,
    })
}

/// Append a new class learned from `samples` (their `class_id` is ignored).
/// Existing classes are not touched; the envelope statistics absorb the new
/// class's training scores recursively. Returns the new class id.
pub fn add_class(model: &mut DetectorModel, class_name: &str, samples: &[LabeledSample]) -> Result<usize> {
    if model.class_by_name(class_name).is_some() {
        return Err(Error::DuplicateClass(class_name.to_string()));
    }
    let ordered = sorted_by_row(samples);
    check_dims(&ordered, model.dim)?;
    let options = LearnOptions {
        snap_medoid: model.snap_medoid,
        mode: model.mode,
        m: model.threshold.m,
    };
    let id = model.classes.len();
    let (class, scores, _) = learn_class_traced(id, class_name, samples, &options)?;
    model.threshold.stats.extend(scores);
    model.classes.push(class);
    Ok(id)
}

/// Continue learning an existing class with more samples (their `class_id`
/// is ignored). Other classes are untouched.
pub fn add_samples(model: &mut DetectorModel, class_id: usize, samples: &[LabeledSample]) -> Result<()> {
    if class_id >= model.classes.len() {
        return Err(Error::UnknownClass(class_id.to_string()));
    }
    if samples.is_empty() {
        return Ok(());
    }
    let ordered = sorted_by_row(samples);
    check_dims(&ordered, model.dim)?;

    let mut class = model.classes[class_id].clone();
    absorb(&mut class, &ordered, model.snap_medoid, &mut Vec::new())?;
    let scores: Vec<f64> = ordered
        .iter()
        .map(|s| class_score(s.embedding.values(), &class, model.mode))
        .collect();
    class.score_stats.extend(scores.iter().copied());
    model.threshold.stats.extend(scores);
    model.classes[class_id] = class;
    Ok(())
}
