//! Domain types shared by learning, detection, interpretation and persistence.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::{RunningStats, RunningVecStats, VAR_FLOOR};

/// Current on-disk model schema.
pub const FORMAT_VERSION: u32 = 1;

/// A finite, non-empty feature vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Embedding(Vec<f64>);

impl Embedding {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::ZeroDimension);
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue { row: 0 });
        }
        Ok(Embedding(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn scaled(&self, factor: f64) -> Embedding {
        Embedding(self.0.iter().map(|v| v * factor).collect())
    }
}

impl TryFrom<Vec<f64>> for Embedding {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        Embedding::new(values)
    }
}

impl From<Embedding> for Vec<f64> {
    fn from(e: Embedding) -> Self {
        e.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSample {
    pub embedding: Embedding,
    pub class_id: usize,
    /// Position in the input file; defines the canonical processing order.
    pub source_row: usize,
}

/// Build samples from raw rows, reporting the offending row on failure.
pub fn build_samples(rows: Vec<Vec<f64>>, class_ids: &[usize]) -> Result<Vec<LabeledSample>> {
    if rows.len() != class_ids.len() {
        return Err(Error::InvalidConfig(format!(
            "{} rows but {} labels",
            rows.len(),
            class_ids.len()
        )));
    }
    rows.into_iter()
        .zip(class_ids)
        .enumerate()
        .map(|(row, (values, &class_id))| {
            let embedding = Embedding::new(values).map_err(|e| match e {
                Error::NonFiniteValue { .. } => Error::NonFiniteValue { row },
                other => other,
            })?;
            Ok(LabeledSample {
                embedding,
                class_id,
                source_row: row,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetSummary {
    pub dim: usize,
    /// Sample count per class id.
    pub class_counts: BTreeMap<usize, usize>,
}

impl DatasetSummary {
    pub fn num_classes(&self) -> usize {
        self.class_counts.len()
    }
}

pub fn validate_dataset(samples: &[LabeledSample]) -> Result<DatasetSummary> {
    let first = samples.first().ok_or(Error::EmptyDataset)?;
    let dim = first.embedding.dim();
    let mut class_counts = BTreeMap::new();
    let mut rows = HashSet::with_capacity(samples.len());
    for (i, s) in samples.iter().enumerate() {
        if s.embedding.dim() != dim {
            return Err(Error::RowDimensionMismatch {
                row: i,
                expected: dim,
                found: s.embedding.dim(),
            });
        }
        if s.embedding.values().iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue { row: i });
        }
        if !rows.insert(s.source_row) {
            return Err(Error::DuplicateRow(s.source_row));
        }
        *class_counts.entry(s.class_id).or_insert(0) += 1;
    }
    Ok(DatasetSummary { dim, class_counts })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prototype {
    pub centroid: Embedding,
    /// Running mean of the absorbed samples when `centroid` was snapped to
    /// a training sample. Online updates continue from this point.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub running_centroid: Option<Embedding>,
    pub class_id: usize,
    pub support: u64,
    pub creation_density: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snapped_sample_row: Option<usize>,
}

impl Prototype {
    pub fn online_centroid(&self) -> &Embedding {
        self.running_centroid.as_ref().unwrap_or(&self.centroid)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoringMode {
    /// Max Cauchy density over prototypes; low scores are anomalous.
    #[default]
    Density,
    /// Sum of squared prototype distances over the Cauchy denominator;
    /// scores above the envelope are flagged.
    Verbatim,
}

impl fmt::Display for ScoringMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScoringMode::Density => "density",
            ScoringMode::Verbatim => "verbatim",
        })
    }
}

impl FromStr for ScoringMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "density" => Ok(ScoringMode::Density),
            "verbatim" => Ok(ScoringMode::Verbatim),
            other => Err(Error::InvalidConfig(format!("unknown scoring mode {other:?}"))),
        }
    }
}

/// Prototypes and running statistics for one class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassModel {
    pub class_id: usize,
    pub class_name: String,
    /// Running per-dimension mean and squared deviations of the class samples.
    pub stats: RunningVecStats,
    /// Trace of the diagonal covariance, floored at [`VAR_FLOOR`].
    pub var_scalar: f64,
    /// Own-class scores of the training samples.
    pub score_stats: RunningStats,
    pub prototypes: Vec<Prototype>,
}

impl ClassModel {
    pub fn sample_count(&self) -> u64 {
        self.stats.count()
    }

    pub fn mean(&self) -> &[f64] {
        self.stats.mean()
    }

    pub fn train_score_mean(&self) -> f64 {
        self.score_stats.mean()
    }

    pub fn train_score_std(&self) -> f64 {
        self.score_stats.std_dev()
    }

    pub fn dim(&self) -> usize {
        self.stats.dim()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidModel(format!("class {}: {msg}", self.class_name)));
        let n = self.sample_count();
        let m = self.prototypes.len() as u64;
        if m == 0 {
            return bad("no prototypes".into());
        }
        if m > n {
            return bad(format!("{m} prototypes exceed {n} samples"));
        }
        let support: u64 = self.prototypes.iter().map(|p| p.support).sum();
        if support != n {
            return bad(format!("prototype supports sum to {support}, expected {n}"));
        }
        if !(self.var_scalar.is_finite() && self.var_scalar >= VAR_FLOOR) {
            return bad(format!("var_scalar {} below floor", self.var_scalar));
        }
        if self.var_scalar.to_bits() != self.stats.var_scalar().to_bits() {
            return bad("var_scalar disagrees with running statistics".into());
        }
        if self.stats.m2().len() != self.dim() {
            return bad("statistics dimension mismatch".into());
        }
        if self.stats.mean().iter().chain(self.stats.m2()).any(|v| !v.is_finite()) {
            return bad("non-finite statistics".into());
        }
        for (i, p) in self.prototypes.iter().enumerate() {
            if p.class_id != self.class_id {
                return bad(format!("prototype {i} carries class id {}", p.class_id));
            }
            if p.support == 0 {
                return bad(format!("prototype {i} has zero support"));
            }
            if !(p.creation_density > 0.0 && p.creation_density <= 1.0) {
                return bad(format!("prototype {i} creation density {}", p.creation_density));
            }
            let dims_ok = p.centroid.dim() == self.dim()
                && p.running_centroid.as_ref().is_none_or(|c| c.dim() == self.dim());
            if !dims_ok {
                return bad(format!("prototype {i} dimension mismatch"));
            }
        }
        Ok(())
    }
}

/// Running statistics of training scores and the sigma multiplier `m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdStats {
    pub stats: RunningStats,
    pub m: f64,
}

impl ThresholdStats {
    pub fn new(m: f64) -> Self {
        ThresholdStats {
            stats: RunningStats::new(),
            m,
        }
    }

    pub fn score_mean(&self) -> f64 {
        self.stats.mean()
    }

    pub fn score_var(&self) -> f64 {
        self.stats.variance()
    }

    pub fn score_std(&self) -> f64 {
        self.stats.std_dev()
    }

    pub fn count(&self) -> u64 {
        self.stats.count()
    }

    /// `mean - m * std`.
    pub fn threshold(&self) -> f64 {
        self.score_mean() - self.m * self.score_std()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorModel {
    pub format_version: u32,
    pub mode: ScoringMode,
    pub dim: usize,
    pub snap_medoid: bool,
    pub threshold: ThresholdStats,
    /// Indexed by class id.
    pub classes: Vec<ClassModel>,
}

impl DetectorModel {
    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn class_names(&self) -> Vec<&str> {
        self.classes.iter().map(|c| c.class_name.as_str()).collect()
    }

    pub fn class_by_name(&self, name: &str) -> Option<&ClassModel> {
        self.classes.iter().find(|c| c.class_name == name)
    }

    pub fn prototype_count(&self) -> usize {
        self.classes.iter().map(|c| c.prototypes.len()).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::SchemaVersionMismatch {
                found: self.format_version,
                expected: FORMAT_VERSION,
            });
        }
        if self.classes.is_empty() {
            return Err(Error::InvalidModel("no classes".into()));
        }
        if self.dim == 0 {
            return Err(Error::InvalidModel("zero dimension".into()));
        }
        if !(self.threshold.m.is_finite() && self.threshold.m > 0.0) {
            return Err(Error::InvalidModel(format!("sigma multiplier {}", self.threshold.m)));
        }
        if self.threshold.count() == 0 {
            return Err(Error::InvalidModel("empty threshold statistics".into()));
        }
        let mut names = HashSet::new();
        for (i, class) in self.classes.iter().enumerate() {
            if class.class_id != i {
                return Err(Error::InvalidModel(format!(
                    "class at position {i} has id {}",
                    class.class_id
                )));
            }
            if !names.insert(class.class_name.as_str()) {
                return Err(Error::DuplicateClass(class.class_name.clone()));
            }
            if class.dim() != self.dim {
                return Err(Error::InvalidModel(format!(
                    "class {} has dimension {}, model has {}",
                    class.class_name,
                    class.dim(),
                    self.dim
                )));
            }
            class.validate()?;
            if self.snap_medoid && class.prototypes.iter().any(|p| p.snapped_sample_row.is_none()) {
                return Err(Error::InvalidModel(format!(
                    "class {} has unsnapped prototypes",
                    class.class_name
                )));
            }
        }
        Ok(())
    }

    /// The same model with every coordinate multiplied by `factor` and
    /// every variance by its square. Density scores are unchanged; verbatim
    /// score statistics scale with `factor²`.
    pub fn scaled(&self, factor: f64) -> DetectorModel {
        let f2 = factor * factor;
        let mut out = self.clone();
        for class in &mut out.classes {
            let mean: Vec<f64> = class.stats.mean().iter().map(|v| v * factor).collect();
            let m2: Vec<f64> = class.stats.m2().iter().map(|v| v * f2).collect();
            class.stats = RunningVecStats::from_parts(class.stats.count(), mean, m2);
            class.var_scalar *= f2;
            for p in &mut class.prototypes {
                p.centroid = p.centroid.scaled(factor);
                p.running_centroid = p.running_centroid.as_ref().map(|c| c.scaled(factor));
            }
            if self.mode == ScoringMode::Verbatim {
                let s = &class.score_stats;
                class.score_stats = RunningStats::from_parts(s.count(), s.mean() * f2, s.m2() * f2 * f2);
            }
        }
        if self.mode == ScoringMode::Verbatim {
            let s = &self.threshold.stats;
            out.threshold.stats = RunningStats::from_parts(s.count(), s.mean() * f2, s.m2() * f2 * f2);
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind", content = "class_id")]
pub enum Verdict {
    Class(usize),
    Novel,
}

impl Verdict {
    pub fn is_novel(&self) -> bool {
        matches!(self, Verdict::Novel)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NearestPrototype {
    pub class_id: usize,
    pub prototype_index: usize,
    /// Euclidean (not squared) distance.
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub verdict: Verdict,
    /// Indexed by class id.
    pub per_class_scores: Vec<f64>,
    pub chosen_score: f64,
    pub threshold_value: f64,
    /// Ascending by distance.
    pub nearest_prototypes: Vec<NearestPrototype>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(values: &[f64], class_id: usize, row: usize) -> LabeledSample {
        LabeledSample {
            embedding: Embedding::new(values.to_vec()).unwrap(),
            class_id,
            source_row: row,
        }
    }

    #[test]
    fn summary_tallies_classes() {
        let samples = vec![
            sample(&[0.0; 4], 0, 0),
            sample(&[1.0; 4], 0, 1),
            sample(&[2.0; 4], 1, 2),
        ];
        let summary = validate_dataset(&samples).unwrap();
        assert_eq!(summary.dim, 4);
        assert_eq!(summary.num_classes(), 2);
        assert_eq!(summary.class_counts[&0], 2);
        assert_eq!(summary.class_counts[&1], 1);
    }

    #[test]
    fn mixed_dims_rejected() {
        let samples = vec![sample(&[0.0; 4], 0, 0), sample(&[0.0; 5], 0, 1)];
        assert!(matches!(
            validate_dataset(&samples),
            Err(Error::RowDimensionMismatch { row: 1, .. })
        ));
    }

    #[test]
    fn empty_and_nan_rejected() {
        assert!(matches!(validate_dataset(&[]), Err(Error::EmptyDataset)));
        let rows = vec![vec![1.0, 2.0], vec![f64::NAN, 0.0]];
        assert!(matches!(
            build_samples(rows, &[0, 0]),
            Err(Error::NonFiniteValue { row: 1 })
        ));
        assert!(matches!(Embedding::new(vec![]), Err(Error::ZeroDimension)));
    }

    #[test]
    fn duplicate_rows_rejected() {
        let samples = vec![sample(&[0.0], 0, 3), sample(&[1.0], 0, 3)];
        assert!(matches!(validate_dataset(&samples), Err(Error::DuplicateRow(3))));
    }

    #[test]
    fn embedding_deserialization_validates() {
        assert!(serde_json::from_str::<Embedding>("[1.0, 2.5]").is_ok());
        assert!(serde_json::from_str::<Embedding>("[]").is_err());
    }

    #[test]
    fn mode_parsing() {
        assert_eq!("DENSITY".parse::<ScoringMode>().unwrap(), ScoringMode::Density);
        assert_eq!("verbatim".parse::<ScoringMode>().unwrap(), ScoringMode::Verbatim);
        assert!("cosine".parse::<ScoringMode>().is_err());
    }
}
