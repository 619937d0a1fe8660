use protodetect::eval::{evaluate, synth_dataset, OutlierKind, SynthConfig, SynthData};
use protodetect::model::{DetectorModel, Embedding, ScoringMode, Verdict};
use protodetect::{decide, decide_top_k, extract_rule, train, LearnOptions, Result};
use serde_json::{json, Value};

/// Grid cell value for a flagged point.
pub const NOVEL_CELL: i32 = -1;

/// A trained 2-D toy world: synthetic clusters, probes and the model learned from them.
pub struct Scene {
    data: SynthData,
    model: DetectorModel,
    bounds: [f64; 4],
}

impl Scene {
    pub fn build(classes: usize, per_class: usize, seed: u64, mode: ScoringMode, m: f64, snap: bool) -> Result<Self> {
        let config = SynthConfig {
            classes,
            dim: 2,
            per_class,
            outlier_count: 30,
            outlier_kind: OutlierKind::Far,
            heldout: 10 * classes,
            seed,
            ..SynthConfig::default()
        };
        let data = synth_dataset(&config)?;
        let options = LearnOptions { snap_medoid: snap, mode, m };
        let model = train(&data.train, &data.class_names, &options)?;
        let bounds = padded_bounds(
            data.train
                .iter()
                .map(|s| &s.embedding)
                .chain(data.probes.iter().map(|p| &p.embedding)),
        );
        Ok(Self { data, model, bounds })
    }

    pub fn model(&self) -> &DetectorModel {
        &self.model
    }

    /// `[xmin, ymin, xmax, ymax]` covering every generated point with a margin.
    pub fn bounds(&self) -> [f64; 4] {
        self.bounds
    }

    /// Everything the page needs to draw the static layer.
    pub fn summary(&self) -> Result<Value> {
        let xy = |e: &Embedding| [e.values()[0], e.values()[1]];
        let train: Vec<_> = self
            .data
            .train
            .iter()
            .map(|s| json!({ "xy": xy(&s.embedding), "class": s.class_id }))
            .collect();
        let probes: Vec<_> = self
            .data
            .probes
            .iter()
            .map(|p| {
                let class = match p.truth {
                    protodetect::Truth::Class(c) => Some(c),
                    protodetect::Truth::Outlier => None,
                };
                json!({ "xy": xy(&p.embedding), "class": class })
            })
            .collect();
        let prototypes: Vec<_> = self
            .model
            .classes
            .iter()
            .flat_map(|c| {
                c.prototypes.iter().enumerate().map(move |(i, p)| {
                    json!({ "xy": xy(&p.centroid), "class": c.class_id, "index": i, "support": p.support })
                })
            })
            .collect();
        let metrics = evaluate(&self.model, &self.data.probes)?;
        Ok(json!({
            "bounds": self.bounds,
            "classes": self.model.class_names(),
            "mode": self.model.mode.to_string(),
            "threshold": self.model.threshold.threshold(),
            "train": train,
            "probes": probes,
            "prototypes": prototypes,
            "metrics": metrics,
        }))
    }

    /// Row-major verdict map over the scene bounds: class id per cell, or [`NOVEL_CELL`].
    pub fn verdict_grid(&self, cols: usize, rows: usize) -> Result<Vec<i32>> {
        let [x0, y0, x1, y1] = self.bounds;
        let mut cells = Vec::with_capacity(cols * rows);
        for r in 0..rows {
            // row 0 is the top of the canvas
            let y = y1 - (r as f64 + 0.5) / rows as f64 * (y1 - y0);
            for c in 0..cols {
                let x = x0 + (c as f64 + 0.5) / cols as f64 * (x1 - x0);
                let d = decide(&Embedding::new(vec![x, y])?, &self.model)?;
                cells.push(match d.verdict {
                    Verdict::Class(id) => id as i32,
                    Verdict::Novel => NOVEL_CELL,
                });
            }
        }
        Ok(cells)
    }

    /// Decision and rule for one point, with prototype coordinates for drawing.
    pub fn explain(&self, x: f64, y: f64, k: usize) -> Result<Value> {
        let d = decide_top_k(&Embedding::new(vec![x, y])?, &self.model, k)?;
        let rule = extract_rule(&d, &self.model, k)?;
        let nearest: Vec<_> = d
            .nearest_prototypes
            .iter()
            .map(|n| {
                let p = &self.model.classes[n.class_id].prototypes[n.prototype_index];
                json!({
                    "class": n.class_id,
                    "index": n.prototype_index,
                    "distance": n.distance,
                    "xy": [p.centroid.values()[0], p.centroid.values()[1]],
                })
            })
            .collect();
        Ok(json!({
            "rule": rule.to_string(),
            "novel": d.verdict.is_novel(),
            "score": d.chosen_score,
            "threshold": d.threshold_value,
            "nearest": nearest,
        }))
    }
}

fn padded_bounds<'a>(points: impl Iterator<Item = &'a Embedding>) -> [f64; 4] {
    let mut b = [f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY];
    for e in points {
        let (x, y) = (e.values()[0], e.values()[1]);
        b = [b[0].min(x), b[1].min(y), b[2].max(x), b[3].max(y)];
    }
    let pad = 0.1 * (b[2] - b[0]).max(b[3] - b[1]).max(1.0);
    [b[0] - pad, b[1] - pad, b[2] + pad, b[3] + pad]
}
