//! Synthetic data, metrics, an independent decision oracle and the
//! retraining benchmark.

use std::fmt;
use std::time::Instant;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::detect::decide_batch;
use crate::error::{Error, Result};
use crate::learn::add_class;
use crate::model::{Decision, DetectorModel, Embedding, LabeledSample, NearestPrototype, ScoringMode, Verdict};

/// Class centers sit on an integer lattice scaled by this many cluster
/// standard deviations.
pub const LATTICE_SPACING: f64 = 15.0;
/// Minimum distance, in cluster standard deviations, from a far outlier to
/// every class center.
pub const FAR_OUTLIER_MIN: f64 = 20.0;
pub const FAR_OUTLIER_MAX: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum OutlierKind {
    /// Far from every class center.
    Far,
    /// Near the midpoint of two class centers.
    Interpolated,
}

impl std::str::FromStr for OutlierKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "far" => Ok(OutlierKind::Far),
            "interpolated" => Ok(OutlierKind::Interpolated),
            other => Err(Error::InvalidConfig(format!("unknown outlier kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub classes: usize,
    pub dim: usize,
    /// Training samples per class.
    pub per_class: usize,
    pub cluster_std: f64,
    pub outlier_count: usize,
    pub outlier_kind: OutlierKind,
    /// In-class held-out probes, spread round-robin over the classes.
    pub heldout: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            classes: 5,
            dim: 16,
            per_class: 200,
            cluster_std: 1.0,
            outlier_count: 100,
            outlier_kind: OutlierKind::Far,
            heldout: 100,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Truth {
    Class(usize),
    Outlier,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Probe {
    pub embedding: Embedding,
    pub truth: Truth,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthData {
    pub class_names: Vec<String>,
    pub centers: Vec<Vec<f64>>,
    pub train: Vec<LabeledSample>,
    pub probes: Vec<Probe>,
}

fn gaussian_around(rng: &mut ChaCha8Rng, center: &[f64], std: f64) -> Vec<f64> {
    center
        .iter()
        .map(|c| c + std * rng.sample::<f64, _>(StandardNormal))
        .collect()
}

fn lattice_centers(rng: &mut ChaCha8Rng, classes: usize, dim: usize, spacing: f64) -> Vec<Vec<f64>> {
    // grow the lattice until there is ample room for distinct non-zero points
    let mut half = 1i64;
    while ((2 * half + 1) as f64).powi(dim as i32) - 1.0 < 2.0 * classes as f64 {
        half += 1;
    }
    let mut points: Vec<Vec<i64>> = Vec::with_capacity(classes);
    while points.len() < classes {
        let p: Vec<i64> = (0..dim).map(|_| rng.random_range(-half..=half)).collect();
        if p.iter().all(|&v| v == 0) || points.contains(&p) {
            continue;
        }
        points.push(p);
    }
    points
        .into_iter()
        .map(|p| p.into_iter().map(|v| v as f64 * spacing).collect())
        .collect()
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn far_outlier(rng: &mut ChaCha8Rng, centers: &[Vec<f64>], std: f64) -> Vec<f64> {
    let dim = centers[0].len();
    for attempt in 0u32.. {
        let center = centers.choose(rng).expect("at least one center");
        let dir: Vec<f64> = (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        // widen the shell slowly if the lattice keeps rejecting candidates
        let hi = FAR_OUTLIER_MAX + f64::from(attempt) / 10.0;
        let radius = std * rng.random_range(FAR_OUTLIER_MIN..hi);
        let x: Vec<f64> = center.iter().zip(&dir).map(|(c, d)| c + radius * d / norm).collect();
        if centers.iter().all(|c| distance(&x, c) >= FAR_OUTLIER_MIN * std) {
            return x;
        }
    }
    unreachable!()
}

/// Generate a seeded synthetic dataset of Gaussian classes plus probes.
pub fn synth_dataset(config: &SynthConfig) -> Result<SynthData> {
    let invalid = |msg: &str| Err(Error::InvalidConfig(msg.to_string()));
    if config.classes == 0 {
        return invalid("need at least one class");
    }
    if config.dim == 0 {
        return invalid("need at least one dimension");
    }
    if config.per_class == 0 {
        return invalid("need at least one sample per class");
    }
    if !(config.cluster_std.is_finite() && config.cluster_std > 0.0) {
        return invalid("cluster_std must be positive");
    }
    if config.outlier_kind == OutlierKind::Interpolated && config.outlier_count > 0 && config.classes < 2 {
        return invalid("interpolated outliers need at least two classes");
    }

    let std = config.cluster_std;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let centers = lattice_centers(&mut rng, config.classes, config.dim, LATTICE_SPACING * std);

    let mut train = Vec::with_capacity(config.classes * config.per_class);
    for (class_id, center) in centers.iter().enumerate() {
        for _ in 0..config.per_class {
            let values = gaussian_around(&mut rng, center, std);
            train.push(LabeledSample {
                embedding: Embedding::new(values)?,
                class_id,
                source_row: train.len(),
            });
        }
    }

    let mut probes = Vec::with_capacity(config.heldout + config.outlier_count);
    for i in 0..config.heldout {
        let class_id = i % config.classes;
        probes.push(Probe {
            embedding: Embedding::new(gaussian_around(&mut rng, &centers[class_id], std))?,
            truth: Truth::Class(class_id),
        });
    }
    for _ in 0..config.outlier_count {
        let values = match config.outlier_kind {
            OutlierKind::Far => far_outlier(&mut rng, &centers, std),
            OutlierKind::Interpolated => {
                let a = rng.random_range(0..config.classes);
                let mut b = rng.random_range(0..config.classes - 1);
                if b >= a {
                    b += 1;
                }
                let mid: Vec<f64> = centers[a].iter().zip(&centers[b]).map(|(x, y)| 0.5 * (x + y)).collect();
                gaussian_around(&mut rng, &mid, std)
            }
        };
        probes.push(Probe {
            embedding: Embedding::new(values)?,
            truth: Truth::Outlier,
        });
    }

    Ok(SynthData {
        class_names: (0..config.classes).map(|i| format!("class{i}")).collect(),
        centers,
        train,
        probes,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfusionMatrix {
    /// Class names followed by `deepfake`.
    pub labels: Vec<String>,
    /// `counts[truth][predicted]`.
    pub counts: Vec<Vec<u64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metrics {
    /// Correctly classified share of in-class probes; absent without any.
    pub clean_accuracy: Option<f64>,
    /// Flagged share of outlier probes; absent without outliers.
    pub detection_recall: Option<f64>,
    /// Outlier share of flagged probes; absent when nothing was flagged.
    pub detection_precision: Option<f64>,
    pub in_class: usize,
    pub outliers: usize,
    pub flagged: usize,
    pub confusion: ConfusionMatrix,
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Tally metrics from verdicts and ground truth.
pub fn evaluate_verdicts(verdicts: &[Verdict], truth: &[Truth], class_names: &[String]) -> Result<Metrics> {
    if verdicts.is_empty() {
        return Err(Error::EmptyProbeSet);
    }
    if verdicts.len() != truth.len() {
        return Err(Error::InvalidConfig(format!(
            "{} verdicts for {} truth labels",
            verdicts.len(),
            truth.len()
        )));
    }
    let c = class_names.len();
    let mut counts = vec![vec![0u64; c + 1]; c + 1];
    let (mut in_class, mut correct, mut outliers, mut caught, mut flagged) = (0, 0, 0, 0, 0);
    for (v, t) in verdicts.iter().zip(truth) {
        let predicted = match *v {
            Verdict::Class(id) if id < c => id,
            Verdict::Class(id) => return Err(Error::UnknownClass(id.to_string())),
            Verdict::Novel => c,
        };
        let actual = match *t {
            Truth::Class(id) if id < c => id,
            Truth::Class(id) => return Err(Error::UnknownClass(id.to_string())),
            Truth::Outlier => c,
        };
        counts[actual][predicted] += 1;
        if v.is_novel() {
            flagged += 1;
        }
        match t {
            Truth::Class(_) => {
                in_class += 1;
                if predicted == actual {
                    correct += 1;
                }
            }
            Truth::Outlier => {
                outliers += 1;
                if v.is_novel() {
                    caught += 1;
                }
            }
        }
    }
    let mut labels = class_names.to_vec();
    labels.push("deepfake".to_string());
    Ok(Metrics {
        clean_accuracy: ratio(correct, in_class),
        detection_recall: ratio(caught, outliers),
        detection_precision: ratio(caught, flagged),
        in_class,
        outliers,
        flagged,
        confusion: ConfusionMatrix { labels, counts },
    })
}

pub fn evaluate(model: &DetectorModel, probes: &[Probe]) -> Result<Metrics> {
    if probes.is_empty() {
        return Err(Error::EmptyProbeSet);
    }
    let xs: Vec<Embedding> = probes.iter().map(|p| p.embedding.clone()).collect();
    let truth: Vec<Truth> = probes.iter().map(|p| p.truth).collect();
    let (decisions, _) = decide_batch(&xs, model)?;
    let verdicts: Vec<Verdict> = decisions.iter().map(|d| d.verdict).collect();
    let names: Vec<String> = model.classes.iter().map(|c| c.class_name.clone()).collect();
    evaluate_verdicts(&verdicts, &truth, &names)
}

impl fmt::Display for Metrics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let show = |v: Option<f64>| v.map_or_else(|| "n/a".to_string(), |v| format!("{v:.4}"));
        writeln!(f, "clean accuracy       {}  ({} in-class probes)", show(self.clean_accuracy), self.in_class)?;
        writeln!(f, "detection recall     {}  ({} outliers)", show(self.detection_recall), self.outliers)?;
        writeln!(f, "detection precision  {}  ({} flagged)", show(self.detection_precision), self.flagged)?;
        writeln!(f, "confusion (rows = truth, columns = predicted):")?;
        let width = self.confusion.labels.iter().map(String::len).max().unwrap_or(0).max(6);
        write!(f, "{:width$}", "")?;
        for l in &self.confusion.labels {
            write!(f, " {l:>width$}")?;
        }
        writeln!(f)?;
        for (l, row) in self.confusion.labels.iter().zip(&self.confusion.counts) {
            write!(f, "{l:width$}")?;
            for n in row {
                write!(f, " {n:>width$}")?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

/// Recompute a decision from the model's raw fields with straight-line
/// loops. Shares no code with the detector; results must agree bit for bit.
pub fn oracle_decide(x: &Embedding, model: &DetectorModel) -> Result<Decision> {
    if model.classes.is_empty() || model.threshold.count() == 0 {
        return Err(Error::UntrainedModel);
    }
    let x = x.values();
    let d = model.dim;
    if x.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: x.len(),
        });
    }

    let mut scores = Vec::with_capacity(model.classes.len());
    // (squared distance, class, index), kept sorted by insertion
    let mut ranked: Vec<(f64, usize, usize)> = Vec::new();
    for (c, class) in model.classes.iter().enumerate() {
        let var = class.var_scalar;
        let mut nearest_sq = f64::INFINITY;
        let mut sum_sq = 0.0;
        for (m, proto) in class.prototypes.iter().enumerate() {
            let p = proto.centroid.values();
            let mut sq = 0.0;
            for j in 0..d {
                let t = x[j] - p[j];
                sq += t * t;
            }
            sum_sq += sq;
            if sq < nearest_sq {
                nearest_sq = sq;
            }
            let mut at = ranked.len();
            while at > 0 {
                let (psq, pc, pm) = ranked[at - 1];
                let earlier = psq < sq || (psq == sq && (pc, pm) < (c, m));
                if earlier {
                    break;
                }
                at -= 1;
            }
            ranked.insert(at, (sq, c, m));
        }
        let score = match model.mode {
            ScoringMode::Density => 1.0 / (1.0 + nearest_sq / var),
            ScoringMode::Verbatim => {
                let mu = class.mean();
                let mut sq = 0.0;
                for j in 0..d {
                    let t = x[j] - mu[j];
                    sq += t * t;
                }
                sum_sq / (1.0 + sq / var)
            }
        };
        scores.push(score);
    }

    let mut best = 0;
    for c in 1..scores.len() {
        let wins = match model.mode {
            ScoringMode::Density => scores[c] > scores[best],
            ScoringMode::Verbatim => scores[c] < scores[best],
        };
        if wins {
            best = c;
        }
    }

    let stats = &model.threshold.stats;
    let mut var = stats.m2() / stats.count() as f64;
    if var < 0.0 {
        var = 0.0;
    }
    let threshold = stats.mean() - model.threshold.m * var.sqrt();
    let chosen = scores[best];
    let novel = match model.mode {
        ScoringMode::Density => chosen < threshold,
        ScoringMode::Verbatim => chosen > threshold,
    };

    let nearest = ranked
        .iter()
        .take(crate::detect::DEFAULT_TOP_K)
        .map(|&(sq, class_id, prototype_index)| NearestPrototype {
            class_id,
            prototype_index,
            distance: sq.sqrt(),
        })
        .collect();

    Ok(Decision {
        verdict: if novel { Verdict::Novel } else { Verdict::Class(best) },
        per_class_scores: scores,
        chosen_score: chosen,
        threshold_value: threshold,
        nearest_prototypes: nearest,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimingReport {
    /// Median wall time of one `add_class` call.
    pub wall_seconds: f64,
    pub per_sample_us: f64,
    pub energy_estimate_wh: f64,
    pub repetitions: usize,
    pub samples: usize,
    pub watts: f64,
    pub prototypes: usize,
}

impl fmt::Display for TimingReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "samples          {}", self.samples)?;
        writeln!(f, "repetitions      {}", self.repetitions)?;
        writeln!(f, "prototypes       {}", self.prototypes)?;
        writeln!(f, "median wall      {:.6} s", self.wall_seconds)?;
        writeln!(f, "per sample       {:.3} us", self.per_sample_us)?;
        writeln!(f, "energy @ {:>4} W  {:.3e} Wh", self.watts, self.energy_estimate_wh)
    }
}

/// Time `add_class` for `samples` on fresh copies of `model`, reporting the
/// median over `repetitions` runs. Energy is wall time times `watts`.
pub fn bench_retrain(
    model: &DetectorModel,
    samples: &[LabeledSample],
    repetitions: usize,
    watts: f64,
) -> Result<TimingReport> {
    if repetitions < 3 {
        return Err(Error::InvalidConfig(format!("need at least 3 repetitions, got {repetitions}")));
    }
    if samples.is_empty() {
        return Err(Error::InvalidConfig("no samples to retrain on".into()));
    }
    if !(watts.is_finite() && watts > 0.0) {
        return Err(Error::InvalidConfig(format!("wattage must be positive, got {watts}")));
    }
    let mut name = "bench-retrain".to_string();
    while model.class_by_name(&name).is_some() {
        name.push('_');
    }

    let mut times = Vec::with_capacity(repetitions);
    let mut prototypes = 0;
    for _ in 0..repetitions {
        let mut copy = model.clone();
        let start = Instant::now();
        let id = add_class(&mut copy, &name, samples)?;
        times.push(start.elapsed().as_secs_f64());
        prototypes = copy.classes[id].prototypes.len();
    }
    times.sort_by(f64::total_cmp);
    let wall_seconds = times[repetitions / 2];
    Ok(TimingReport {
        wall_seconds,
        per_sample_us: wall_seconds * 1e6 / samples.len() as f64,
        energy_estimate_wh: wall_seconds * watts / 3600.0,
        repetitions,
        samples: samples.len(),
        watts,
        prototypes,
    })
}
