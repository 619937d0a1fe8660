use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use protodetect::eval::{self, evaluate_verdicts, OutlierKind, SynthConfig, Truth};
use protodetect::detect::decide_batch_top_k;
use protodetect::io::{self, TruthLabel};
use protodetect::model::{build_samples, Embedding, LabeledSample, ScoringMode};
use protodetect::{
    add_class, bench_retrain, decide_batch, extract_rule, synth_dataset, train, Error,
    LearnOptions, Result,
};

#[derive(Parser)]
#[command(name = "protodetect", version, about = "Prototype-based classification and novelty detection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Learn prototypes from labelled embeddings.
    Train(TrainArgs),
    /// Classify embeddings, flagging novel samples.
    Classify(ClassifyArgs),
    /// Print nearest-prototype rules for each embedding.
    Explain(ExplainArgs),
    /// Score a model against ground truth.
    Eval(EvalArgs),
    /// Generate a synthetic dataset.
    Synth(SynthArgs),
    /// Learn one more class without touching the existing ones.
    AddClass(AddClassArgs),
    /// Time retraining on a new class.
    BenchRetrain(BenchArgs),
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    embeddings: PathBuf,
    #[arg(long)]
    labels: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "density")]
    mode: ScoringMode,
    /// Sigma multiplier of the decision envelope.
    #[arg(long, default_value_t = 3.0)]
    m: f64,
    /// Keep running centroids instead of snapping to training samples.
    #[arg(long)]
    no_snap: bool,
}

#[derive(Args)]
struct ClassifyArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    embeddings: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args)]
struct ExplainArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    embeddings: PathBuf,
    #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u64).range(1..))]
    top: u64,
    /// One JSON object per line instead of rule text.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    embeddings: PathBuf,
    /// CSV with header `row,class_name,outlier`.
    #[arg(long)]
    truth: PathBuf,
    #[arg(long)]
    report: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 5)]
    classes: usize,
    #[arg(long, default_value_t = 16)]
    dim: usize,
    /// Training samples per class.
    #[arg(long, default_value_t = 200)]
    n: usize,
    #[arg(long, default_value_t = 100)]
    outliers: usize,
    #[arg(long, default_value = "far")]
    outlier_kind: OutlierKind,
    /// In-class held-out probes.
    #[arg(long, default_value_t = 100)]
    heldout: usize,
    #[arg(long, default_value_t = 1.0)]
    cluster_std: f64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Prefix for train.pvec, train_labels.csv, probes.pvec, probes_truth.csv.
    #[arg(long)]
    out_prefix: String,
}

#[derive(Args)]
struct AddClassArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    embeddings: PathBuf,
    #[arg(long)]
    name: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    embeddings: PathBuf,
    #[arg(long, default_value_t = 5)]
    reps: usize,
    #[arg(long, default_value_t = 300.0)]
    watts: f64,
}

fn unlabeled(embeddings: Vec<Embedding>) -> Vec<LabeledSample> {
    embeddings
        .into_iter()
        .enumerate()
        .map(|(row, embedding)| LabeledSample {
            embedding,
            class_id: 0,
            source_row: row,
        })
        .collect()
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn run_train(args: TrainArgs) -> Result<()> {
    let embeddings = io::read_pvec(&args.embeddings)?;
    let labels = io::read_labels(&args.labels)?;
    if labels.len() != embeddings.len() {
        return Err(Error::InvalidConfig(format!(
            "{} embeddings but {} labels",
            embeddings.len(),
            labels.len()
        )));
    }
    let (names, ids) = io::assign_class_ids(&labels);
    let rows = embeddings.into_iter().map(Embedding::into_vec).collect();
    let samples = build_samples(rows, &ids)?;
    let options = LearnOptions {
        snap_medoid: !args.no_snap,
        mode: args.mode,
        m: args.m,
    };
    let model = train(&samples, &names, &options)?;
    io::save_model(&model, &args.out)?;
    eprintln!(
        "trained {} classes, {} prototypes from {} samples; threshold {:.6}",
        model.num_classes(),
        model.prototype_count(),
        samples.len(),
        model.threshold.threshold()
    );
    Ok(())
}

fn run_classify(args: ClassifyArgs) -> Result<()> {
    let model = io::load_model(&args.model)?;
    let xs = io::read_pvec(&args.embeddings)?;
    let (decisions, trace) = decide_batch(&xs, &model)?;
    let mut out = create(&args.out)?;
    io::write_decisions(&mut out, &decisions, &model)?;
    out.flush()?;
    if let Some(path) = &args.trace {
        let mut out = create(path)?;
        trace.write_csv(&mut out)?;
        out.flush()?;
    }
    let flagged = decisions.iter().filter(|d| d.verdict.is_novel()).count();
    eprintln!("classified {} samples, {flagged} flagged", decisions.len());
    Ok(())
}

fn run_explain(args: ExplainArgs) -> Result<()> {
    let model = io::load_model(&args.model)?;
    let xs = io::read_pvec(&args.embeddings)?;
    let k = usize::try_from(args.top).unwrap_or(usize::MAX);
    let (decisions, _) = decide_batch_top_k(&xs, &model, k)?;
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    for d in &decisions {
        let rule = extract_rule(d, &model, k)?;
        if args.json {
            serde_json::to_writer(&mut out, &rule)?;
            writeln!(out)?;
        } else {
            writeln!(out, "{rule}")?;
        }
    }
    Ok(())
}

fn run_eval(args: EvalArgs) -> Result<()> {
    let model = io::load_model(&args.model)?;
    let xs = io::read_pvec(&args.embeddings)?;
    let labels = io::read_truth(&args.truth)?;
    if labels.len() != xs.len() {
        return Err(Error::InvalidConfig(format!(
            "{} embeddings but {} truth rows",
            xs.len(),
            labels.len()
        )));
    }
    let truth = labels
        .iter()
        .map(|t| match t {
            TruthLabel::Outlier => Ok(Truth::Outlier),
            TruthLabel::Class(name) => model
                .class_by_name(name)
                .map(|c| Truth::Class(c.class_id))
                .ok_or_else(|| Error::UnknownClass(name.clone())),
        })
        .collect::<Result<Vec<_>>>()?;
    let (decisions, _) = decide_batch(&xs, &model)?;
    let verdicts: Vec<_> = decisions.iter().map(|d| d.verdict).collect();
    let names: Vec<String> = model.class_names().iter().map(|s| s.to_string()).collect();
    let metrics = evaluate_verdicts(&verdicts, &truth, &names)?;
    let mut report = serde_json::to_string_pretty(&metrics)?;
    report.push('\n');
    fs::write(&args.report, report)?;
    print!("{metrics}");
    Ok(())
}

fn run_synth(args: SynthArgs) -> Result<()> {
    let config = SynthConfig {
        classes: args.classes,
        dim: args.dim,
        per_class: args.n,
        cluster_std: args.cluster_std,
        outlier_count: args.outliers,
        outlier_kind: args.outlier_kind,
        heldout: args.heldout,
        seed: args.seed,
    };
    let data = synth_dataset(&config)?;
    let path = |suffix: &str| PathBuf::from(format!("{}{suffix}", args.out_prefix));
    if let Some(parent) = path("train.pvec").parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }

    let train_x: Vec<Embedding> = data.train.iter().map(|s| s.embedding.clone()).collect();
    let labels: Vec<String> = data.train.iter().map(|s| data.class_names[s.class_id].clone()).collect();
    io::write_pvec(path("train.pvec"), &train_x)?;
    io::write_labels(path("train_labels.csv"), &labels)?;

    let probe_x: Vec<Embedding> = data.probes.iter().map(|p| p.embedding.clone()).collect();
    let truth: Vec<TruthLabel> = data
        .probes
        .iter()
        .map(|p| match p.truth {
            Truth::Class(c) => TruthLabel::Class(data.class_names[c].clone()),
            Truth::Outlier => TruthLabel::Outlier,
        })
        .collect();
    io::write_pvec(path("probes.pvec"), &probe_x)?;
    io::write_truth(path("probes_truth.csv"), &truth)?;
    eprintln!(
        "wrote {} training samples and {} probes with prefix {:?}",
        train_x.len(),
        probe_x.len(),
        args.out_prefix
    );
    Ok(())
}

fn run_add_class(args: AddClassArgs) -> Result<()> {
    let mut model = io::load_model(&args.model)?;
    let samples = unlabeled(io::read_pvec(&args.embeddings)?);
    let id = add_class(&mut model, &args.name, &samples)?;
    io::save_model(&model, &args.out)?;
    eprintln!(
        "added class {:?} (id {id}) with {} prototypes from {} samples",
        args.name,
        model.classes[id].prototypes.len(),
        samples.len()
    );
    Ok(())
}

fn run_bench(args: BenchArgs) -> Result<()> {
    let model = io::load_model(&args.model)?;
    let samples = unlabeled(io::read_pvec(&args.embeddings)?);
    let report: eval::TimingReport = bench_retrain(&model, &samples, args.reps, args.watts)?;
    print!("{report}");
    println!("{}", serde_json::to_string(&report)?);
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let usage_error = e.use_stderr();
            let _ = e.print();
            return if usage_error { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Train(a) => run_train(a),
        Command::Classify(a) => run_classify(a),
        Command::Explain(a) => run_explain(a),
        Command::Eval(a) => run_eval(a),
        Command::Synth(a) => run_synth(a),
        Command::AddClass(a) => run_add_class(a),
        Command::BenchRetrain(a) => run_bench(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        // downstream reader went away (e.g. `| head`)
        Err(Error::Io(e)) if e.kind() == std::io::ErrorKind::BrokenPipe => ExitCode::SUCCESS,
        Err(Error::Json(e)) if e.io_error_kind() == Some(std::io::ErrorKind::BrokenPipe) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
