use protodetect::interpret::format_sig4;
use protodetect::eval::{evaluate_verdicts, OutlierKind, Probe};
use protodetect::io::{self, TruthLabel};
use protodetect::learn::learn_class_traced;
use protodetect::model::NearestPrototype;
use protodetect::*;

fn small_data(seed: u64) -> eval::SynthData {
    synth_dataset(&SynthConfig {
        classes: 3,
        dim: 6,
        per_class: 60,
        outlier_count: 20,
        heldout: 30,
        seed,
        ..SynthConfig::default()
    })
    .unwrap()
}

fn class_bytes(model: &DetectorModel) -> Vec<String> {
    model
        .classes
        .iter()
        .map(|c| serde_json::to_string(c).unwrap())
        .collect()
}

#[test]
fn add_class_leaves_existing_classes_byte_identical() {
    let data = small_data(1);
    let mut model = train(&data.train, &data.class_names, &LearnOptions::default()).unwrap();
    let before = class_bytes(&model);
    let newcomer = small_data(99);
    add_class(&mut model, "newcomer", &newcomer.train[..60]).unwrap();
    let after = class_bytes(&model);
    assert_eq!(after.len(), before.len() + 1);
    assert_eq!(&after[..before.len()], &before[..]);
    model.validate().unwrap();
}

#[test]
fn add_samples_replays_learning_without_snapping() {
    let data = small_data(2);
    let opts = LearnOptions {
        snap_medoid: false,
        ..LearnOptions::default()
    };
    let class0: Vec<LabeledSample> = data.train.iter().filter(|s| s.class_id == 0).cloned().collect();
    let (head, tail) = class0.split_at(25);

    let whole = learn_class(0, "class0", &class0, &opts).unwrap();

    let mut model = train(&data.train, &data.class_names, &opts).unwrap();
    model.classes[0] = learn_class(0, "class0", head, &opts).unwrap();
    let other = model.classes[1].clone();
    add_samples(&mut model, 0, tail).unwrap();
    let replayed = &model.classes[0];

    assert_eq!(replayed.prototypes, whole.prototypes);
    assert_eq!(replayed.stats, whole.stats);
    assert_eq!(replayed.var_scalar.to_bits(), whole.var_scalar.to_bits());
    assert_eq!(model.classes[1], other);
}

#[test]
fn add_samples_replays_online_state_with_snapping() {
    let data = small_data(3);
    let opts = LearnOptions::default();
    let class1: Vec<LabeledSample> = data.train.iter().filter(|s| s.class_id == 1).cloned().collect();
    let (head, tail) = class1.split_at(30);

    let whole = learn_class(1, "class1", &class1, &opts).unwrap();
    let mut model = train(&data.train, &data.class_names, &opts).unwrap();
    model.classes[1] = learn_class(1, "class1", head, &opts).unwrap();
    add_samples(&mut model, 1, tail).unwrap();
    let replayed = &model.classes[1];

    assert_eq!(replayed.prototypes.len(), whole.prototypes.len());
    for (a, b) in replayed.prototypes.iter().zip(&whole.prototypes) {
        assert_eq!(a.running_centroid, b.running_centroid);
        assert_eq!(a.support, b.support);
        assert_eq!(a.creation_density, b.creation_density);
    }
    assert_eq!(replayed.stats, whole.stats);
    model.validate().unwrap();
}

#[test]
fn creation_events_leave_the_density_band() {
    let data = small_data(4);
    for c in 0..3 {
        let members: Vec<LabeledSample> = data.train.iter().filter(|s| s.class_id == c).cloned().collect();
        let (class, _, events) = learn_class_traced(c, "c", &members, &LearnOptions::default()).unwrap();
        assert_eq!(events.len(), class.prototypes.len());
        assert!(events[0].band.is_none());
        for e in &events[1..] {
            let (lo, hi) = e.band.unwrap();
            assert!(e.density > hi || e.density < lo);
        }
    }
}

#[test]
fn persistence_round_trip_preserves_fields_and_decisions() {
    let data = small_data(5);
    for mode in [ScoringMode::Density, ScoringMode::Verbatim] {
        let opts = LearnOptions {
            mode,
            ..LearnOptions::default()
        };
        let model = train(&data.train, &data.class_names, &opts).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.model");
        io::save_model(&model, &path).unwrap();
        let loaded = io::load_model(&path).unwrap();
        assert_eq!(loaded, model);
        assert_eq!(io::model_to_string(&loaded).unwrap(), io::model_to_string(&model).unwrap());

        let xs: Vec<Embedding> = data.probes.iter().map(|p| p.embedding.clone()).collect();
        assert_eq!(decide_batch(&xs, &loaded).unwrap().0, decide_batch(&xs, &model).unwrap().0);
    }
}

#[test]
fn corrupt_and_future_models_are_rejected() {
    let data = small_data(6);
    let model = train(&data.train, &data.class_names, &LearnOptions::default()).unwrap();
    let text = io::model_to_string(&model).unwrap();

    let truncated = &text[..text.len() / 2];
    assert!(matches!(io::model_from_str(truncated), Err(Error::CorruptModel(_))));

    let future = text.replacen("\"format_version\": 1", "\"format_version\": 2", 1);
    assert!(matches!(
        io::model_from_str(&future),
        Err(Error::SchemaVersionMismatch { found: 2, expected: 1 })
    ));

    let mut broken = model.clone();
    broken.classes[0].prototypes[0].support += 1;
    let text = serde_json::to_string(&broken).unwrap();
    assert!(matches!(io::model_from_str(&text), Err(Error::CorruptModel(_))));
}

#[test]
fn pvec_round_trip_on_disk() {
    let data = small_data(7);
    let xs: Vec<Embedding> = data.train.iter().map(|s| s.embedding.clone()).collect();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("x.pvec");
    io::write_pvec(&path, &xs).unwrap();
    assert_eq!(std::fs::metadata(&path).unwrap().len(), 16 + 4 * 180 * 6);
    let back = io::read_pvec(&path).unwrap();
    for (a, b) in xs.iter().zip(&back) {
        let narrowed: Vec<f64> = a.values().iter().map(|&v| v as f32 as f64).collect();
        assert_eq!(b.values(), narrowed.as_slice());
    }
}

#[test]
fn metrics_recompute_from_decision_csv() {
    let data = small_data(8);
    let model = train(&data.train, &data.class_names, &LearnOptions::default()).unwrap();
    let metrics = evaluate(&model, &data.probes).unwrap();

    let xs: Vec<Embedding> = data.probes.iter().map(|p| p.embedding.clone()).collect();
    let (decisions, _) = decide_batch(&xs, &model).unwrap();
    let mut csv = Vec::new();
    io::write_decisions(&mut csv, &decisions, &model).unwrap();
    let records = io::parse_decisions(csv.as_slice()).unwrap();
    let verdicts: Vec<Verdict> = records
        .iter()
        .map(|r| match &r.class_name {
            Some(name) => Verdict::Class(model.class_by_name(name).unwrap().class_id),
            None => Verdict::Novel,
        })
        .collect();
    let truth: Vec<Truth> = data.probes.iter().map(|p| p.truth).collect();
    let names: Vec<String> = data.class_names.clone();
    assert_eq!(evaluate_verdicts(&verdicts, &truth, &names).unwrap(), metrics);

    // hand tally straight from the decisions
    let mut correct = 0;
    let mut inliers = 0;
    for (d, p) in decisions.iter().zip(&data.probes) {
        if let Truth::Class(c) = p.truth {
            inliers += 1;
            if d.verdict == Verdict::Class(c) {
                correct += 1;
            }
        }
    }
    assert_eq!(metrics.clean_accuracy, Some(correct as f64 / inliers as f64));
    assert!(matches!(evaluate(&model, &[]), Err(Error::EmptyProbeSet)));
}

#[test]
fn truth_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.csv");
    let truth = vec![TruthLabel::Class("a,b".into()), TruthLabel::Outlier];
    io::write_truth(&path, &truth).unwrap();
    assert_eq!(io::read_truth(&path).unwrap(), truth);
}

fn one_class_model(name: &str, protos: &[&[f64]]) -> DetectorModel {
    let samples: Vec<LabeledSample> = protos
        .iter()
        .enumerate()
        .map(|(i, v)| LabeledSample {
            embedding: Embedding::new(v.to_vec()).unwrap(),
            class_id: 0,
            source_row: i,
        })
        .collect();
    train(&samples, &[name.to_string()], &LearnOptions::default()).unwrap()
}

#[test]
fn rule_for_exact_prototype_hit() {
    let model = one_class_model("ID13", &[&[1.0, 2.0]]);
    let x = Embedding::new(vec![1.0, 2.0]).unwrap();
    let d = decide(&x, &model).unwrap();
    let rule = extract_rule(&d, &model, 1).unwrap();
    assert_eq!(rule.to_string(), "IF x ~ (class:ID13, proto:0, dist:0.000) THEN ID13");
    let json = serde_json::to_value(&rule).unwrap();
    assert_eq!(json["verdict"], "ID13");
    assert_eq!(json["terms"][0]["proto"], 0);
}

#[test]
fn rule_lists_nearest_prototypes_in_order() {
    // two classes on a line
    let samples: Vec<LabeledSample> = [(0.0, 0), (10.0, 1), (4.0, 0), (13.0, 1), (5.5, 0), (11.0, 1), (-3.0, 0)]
        .iter()
        .enumerate()
        .map(|(i, &(v, c))| LabeledSample {
            embedding: Embedding::new(vec![v, 0.0]).unwrap(),
            class_id: c,
            source_row: i,
        })
        .collect();
    let model = train(&samples, &["a".into(), "b".into()], &LearnOptions::default()).unwrap();
    let total = model.prototype_count();
    assert!(total >= 3);

    let x = Embedding::new(vec![8.0, 0.0]).unwrap();
    let d = protodetect::decide_top_k(&x, &model, 10).unwrap();
    // oracle: sort every prototype by distance
    let mut expected: Vec<(f64, usize, usize)> = Vec::new();
    for c in &model.classes {
        for (i, p) in c.prototypes.iter().enumerate() {
            expected.push(((p.centroid.values()[0] - 8.0).abs(), c.class_id, i));
        }
    }
    expected.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let got: Vec<(f64, usize, usize)> = d
        .nearest_prototypes
        .iter()
        .map(|n: &NearestPrototype| (n.distance, n.class_id, n.prototype_index))
        .collect();
    assert_eq!(got, expected);

    let rule = extract_rule(&d, &model, 2).unwrap();
    let name = |c: usize| model.classes[c].class_name.clone();
    let verdict = match d.verdict {
        Verdict::Class(c) => name(c),
        Verdict::Novel => "DEEPFAKE".into(),
    };
    assert_eq!(
        rule.to_string(),
        format!(
            "IF x ~ (class:{}, proto:{}, dist:{}) OR x ~ (class:{}, proto:{}, dist:{}) THEN {verdict}",
            name(expected[0].1),
            expected[0].2,
            format_sig4(expected[0].0),
            name(expected[1].1),
            expected[1].2,
            format_sig4(expected[1].0),
        )
    );

    // asking for more terms than exist lists everything, no padding
    assert_eq!(extract_rule(&d, &model, 50).unwrap().terms.len(), total);
}

#[test]
fn novel_rules_still_explain() {
    let data = small_data(9);
    let model = train(&data.train, &data.class_names, &LearnOptions::default()).unwrap();
    let outlier: &Probe = data.probes.iter().find(|p| p.truth == Truth::Outlier).unwrap();
    let d = decide(&outlier.embedding, &model).unwrap();
    assert_eq!(d.verdict, Verdict::Novel);
    let rule = extract_rule(&d, &model, 3).unwrap();
    assert_eq!(rule.terms.len(), 3);
    assert!(rule.to_string().ends_with("THEN DEEPFAKE"));

    let mut foreign = d.clone();
    foreign.nearest_prototypes[0].class_id = 77;
    assert!(matches!(extract_rule(&foreign, &model, 3), Err(Error::UnknownClass(_))));
}

#[test]
fn interpolated_outliers_are_generated() {
    let data = synth_dataset(&SynthConfig {
        classes: 2,
        dim: 4,
        per_class: 10,
        outlier_kind: OutlierKind::Interpolated,
        outlier_count: 5,
        heldout: 0,
        ..SynthConfig::default()
    })
    .unwrap();
    assert_eq!(data.probes.len(), 5);
}
