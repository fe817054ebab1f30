use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, ValueEnum};
use harmonic_tension::archive::{read_archive, write_archive, Archive};
use harmonic_tension::chords::{classification_rows, classify_vocabulary, CLASSIFY_CSV_HEADER};
use harmonic_tension::embedding::{train, EmbeddingModel};
use harmonic_tension::experiments::{
    corpus_digest, parse_annotations, run_experiment1, run_experiment2, ArtifactHeader,
    ExperimentConfig, HypothesisOutcome,
};
use harmonic_tension::experiments::TestReport;
use harmonic_tension::score::{full_expansion, parse_events, parse_kern, Slice};
use harmonic_tension::synth::{annotations_csv, tonal_corpus, SynthConfig};
use harmonic_tension::tension::{tension_csv_rows, TensionError, TensionScorer, TENSION_CSV_HEADER};
use harmonic_tension::vocab::{validate_piece_id, UnitMode};

use crate::config::ConfigArgs;

pub const KERN_EXT: &str = "krn";
pub const EVENTS_EXT: &str = "notes";

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    /// Bass pitch class plus the remaining pitch classes.
    BassTagged,
    /// Plain pitch-class set.
    PitchClassSet,
}

impl From<Mode> for UnitMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::BassTagged => UnitMode::BassTagged,
            Mode::PitchClassSet => UnitMode::PitchClassSet,
        }
    }
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Score files (.krn, .notes) or directories searched recursively.
    #[arg(required = true, value_name = "PATH")]
    pub inputs: Vec<PathBuf>,
    /// Archive directory to write.
    #[arg(long, short)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "bass-tagged")]
    pub mode: Mode,
}

fn discover(inputs: &[PathBuf]) -> Vec<PathBuf> {
    let mut files = Vec::new();
    for input in inputs {
        if input.is_dir() {
            let found = walkdir::WalkDir::new(input)
                .sort_by_file_name()
                .into_iter()
                .filter_map(|e| match e {
                    Ok(e) => Some(e),
                    Err(err) => {
                        log::warn!("{err}");
                        None
                    }
                })
                .filter(|e| e.file_type().is_file())
                .map(walkdir::DirEntry::into_path)
                .filter(|p| {
                    p.extension()
                        .is_some_and(|x| x == KERN_EXT || x == EVENTS_EXT)
                });
            files.extend(found);
        } else {
            files.push(input.clone());
        }
    }
    files
}

fn load_piece(path: &Path) -> Result<(String, Vec<Slice>)> {
    let id = path
        .file_stem()
        .and_then(|s| s.to_str())
        .ok_or_else(|| anyhow!("no usable file name"))?
        .to_owned();
    validate_piece_id(&id)?;
    let text = fs::read_to_string(path)?;
    let events = match path.extension().and_then(|x| x.to_str()) {
        Some(KERN_EXT) => parse_kern(&text)?,
        Some(EVENTS_EXT) => parse_events(&text)?,
        _ => bail!("unsupported extension; expected .{KERN_EXT} or .{EVENTS_EXT}"),
    };
    Ok((id, full_expansion(&events)?))
}

pub fn ingest(args: &IngestArgs) -> Result<()> {
    let mut pieces: Vec<(String, Vec<Slice>)> = Vec::new();
    let mut failures = Vec::new();
    let mut seen = BTreeSet::new();
    for path in discover(&args.inputs) {
        match load_piece(&path) {
            Ok((id, _)) if seen.contains(&id) => {
                failures.push(format!("{}: duplicate piece id `{id}`", path.display()));
            }
            Ok(piece) => {
                seen.insert(piece.0.clone());
                pieces.push(piece);
            }
            Err(e) => failures.push(format!("{}: {e:#}", path.display())),
        }
    }
    for f in &failures {
        log::warn!("skipped {f}");
    }
    if pieces.is_empty() {
        bail!("no input could be ingested ({} failures)", failures.len());
    }
    let archive = write_archive(&args.out, pieces, args.mode.into())?;
    let units: usize = archive.pieces.iter().map(|(_, s)| s.len()).sum();
    println!("pieces: {}", archive.manifest.pieces);
    println!("sequences: {}", archive.manifest.sequences);
    println!("units: {units}");
    println!("vocabulary: {}", archive.manifest.vocab_size);
    println!("failed files: {}", failures.len());
    Ok(())
}

fn load(archive: &Path) -> Result<Archive> {
    read_archive(archive).with_context(|| format!("archive {}", archive.display()))
}

fn write(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| parent.display().to_string())?;
    }
    fs::write(path, contents).with_context(|| path.display().to_string())
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub archive: PathBuf,
    /// Model file to write.
    #[arg(long, short)]
    pub out: PathBuf,
    #[command(flatten)]
    pub config: ConfigArgs,
}

pub fn train_model(args: &TrainArgs, cfg: &ExperimentConfig) -> Result<()> {
    let archive = load(&args.archive)?;
    let corpus = &archive.corpus;
    let model = train(&corpus.sequences, &corpus.vocab, &cfg.train)?;
    if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    fs::write(&args.out, model.to_bytes()).with_context(|| args.out.display().to_string())?;
    println!(
        "model: {} units x {} dims, {} epochs, seed {}",
        model.vocab_size(),
        model.dim(),
        cfg.train.epochs,
        cfg.train.seed
    );
    Ok(())
}

#[derive(Debug, Args)]
pub struct TensionArgs {
    #[arg(long)]
    pub archive: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    /// CSV file to write.
    #[arg(long, short)]
    pub out: PathBuf,
    /// Restrict to these pieces; repeatable.
    #[arg(long = "piece", value_name = "ID")]
    pub pieces: Vec<String>,
    /// Score all twelve transpositions instead of the original key only.
    #[arg(long)]
    pub all_transpositions: bool,
    #[command(flatten)]
    pub config: ConfigArgs,
}

pub fn tension(args: &TensionArgs, cfg: &ExperimentConfig) -> Result<()> {
    let archive = load(&args.archive)?;
    let corpus = &archive.corpus;
    let bytes = fs::read(&args.model).with_context(|| args.model.display().to_string())?;
    let model = EmbeddingModel::from_bytes(&bytes, Some(&corpus.vocab))
        .with_context(|| args.model.display().to_string())?;
    for p in &args.pieces {
        if corpus.sequence(p, 0).is_none() {
            bail!("unknown piece `{p}`");
        }
    }
    let cfg = ExperimentConfig {
        train: model.config().clone(),
        ..cfg.clone()
    };
    let scorer = TensionScorer::new(&model, cfg.tension);
    let header = ArtifactHeader::new(cfg.digest(), corpus_digest(corpus), cfg.train.seed);
    let mut out = header.comment_lines();
    out.push_str(TENSION_CSV_HEADER);
    out.push('\n');
    for seq in &corpus.sequences {
        if !args.all_transpositions && seq.transposition != 0 {
            continue;
        }
        if !args.pieces.is_empty() && !args.pieces.contains(&seq.piece_id) {
            continue;
        }
        match scorer.series(seq) {
            Ok(series) => tension_csv_rows(seq, &series, &mut out),
            Err(e @ TensionError::SequenceTooShort { .. }) => log::warn!("{e}; skipped"),
            Err(e) => return Err(e.into()),
        }
    }
    write(&args.out, &out)
}

#[derive(Debug, Args)]
pub struct ClassifyArgs {
    #[arg(long)]
    pub archive: PathBuf,
    #[arg(long, short)]
    pub out: PathBuf,
    #[command(flatten)]
    pub config: ConfigArgs,
}

pub fn classify(args: &ClassifyArgs, cfg: &ExperimentConfig) -> Result<()> {
    let archive = load(&args.archive)?;
    let corpus = &archive.corpus;
    let classes = classify_vocabulary(&corpus.vocab);
    let header = ArtifactHeader::new(cfg.digest(), corpus_digest(corpus), cfg.seed);
    let mut out = header.comment_lines();
    out.push_str(CLASSIFY_CSV_HEADER);
    out.push('\n');
    for seq in corpus.untransposed() {
        classification_rows(seq, &classes, &mut out);
    }
    let classified = classes.iter().filter(|c| c.is_some()).count();
    println!("classified vocabulary units: {classified} of {}", classes.len());
    write(&args.out, &out)
}

#[derive(Debug, Args)]
pub struct Exp1Args {
    #[arg(long)]
    pub archive: PathBuf,
    /// Directory for tables, the chord dump and the test report.
    #[arg(long)]
    pub out_dir: PathBuf,
    #[command(flatten)]
    pub config: ConfigArgs,
}

fn print_hypotheses(hypotheses: &[HypothesisOutcome]) {
    for h in hypotheses {
        println!(
            "{} {}: t = {:.3}, p = {:.3e}, {}",
            h.entry.hypothesis,
            h.prediction,
            h.entry.statistic,
            h.entry.p,
            if h.supported { "supported" } else { "not supported" }
        );
    }
}

fn write_all(dir: &Path, files: &[(String, String)]) -> Result<()> {
    for (name, contents) in files {
        write(&dir.join(name), contents)?;
    }
    Ok(())
}

pub fn exp1(args: &Exp1Args, cfg: &ExperimentConfig) -> Result<()> {
    let archive = load(&args.archive)?;
    let result = run_experiment1(&archive.corpus, cfg)?;
    write_all(&args.out_dir, &result.files())?;
    print_hypotheses(&result.report.hypotheses);
    Ok(())
}

#[derive(Debug, Args)]
pub struct Exp2Args {
    #[arg(long)]
    pub archive: PathBuf,
    /// Cadence annotations: piece_id,terminal_unit_index,category.
    #[arg(long, required = true)]
    pub annotations: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[command(flatten)]
    pub config: ConfigArgs,
}

pub fn exp2(args: &Exp2Args, cfg: &ExperimentConfig) -> Result<()> {
    let archive = load(&args.archive)?;
    let text = fs::read_to_string(&args.annotations)
        .with_context(|| args.annotations.display().to_string())?;
    let annotations = parse_annotations(&text, &archive.corpus)
        .with_context(|| args.annotations.display().to_string())?;
    let result = run_experiment2(&archive.corpus, &annotations, cfg)?;
    write_all(&args.out_dir, &result.files())?;
    print_hypotheses(&result.report.hypotheses);
    Ok(())
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Directory holding exp1_tests.json and/or exp2_tests.json.
    #[arg(long)]
    pub dir: PathBuf,
    /// Write here instead of standard output.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

pub fn render_report(report: &TestReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "## {}\n", report.experiment);
    let _ = writeln!(
        out,
        "alpha {} over {} comparisons, {} per comparison\n",
        report.family_alpha, report.family_size, report.alpha_effective
    );
    out.push_str("| hypothesis | prediction | t | df | p | supported |\n");
    out.push_str("|---|---|---|---|---|---|\n");
    for h in &report.hypotheses {
        let _ = writeln!(
            out,
            "| {} | {} | {:.3} | {} | {:.3e} | {} |",
            h.entry.hypothesis,
            h.prediction,
            h.entry.statistic,
            h.entry.df,
            h.entry.p,
            if h.supported { "yes" } else { "no" }
        );
    }
    if !report.omnibus.is_empty() {
        out.push_str("\n| omnibus | F | df | p | partial eta sq |\n");
        out.push_str("|---|---|---|---|---|\n");
        for o in &report.omnibus {
            let _ = writeln!(
                out,
                "| {} | {:.3} | {} | {:.3e} | {:.4} |",
                o.entry.hypothesis, o.entry.statistic, o.entry.df, o.entry.p, o.partial_eta_sq
            );
        }
    }
    let _ = writeln!(out, "\n{}", report.method);
    out
}

pub fn report(args: &ReportArgs) -> Result<()> {
    let mut out = String::new();
    for name in ["exp1_tests.json", "exp2_tests.json"] {
        let path = args.dir.join(name);
        if !path.exists() {
            continue;
        }
        let text = fs::read_to_string(&path).with_context(|| path.display().to_string())?;
        let report: TestReport =
            serde_json::from_str(&text).with_context(|| path.display().to_string())?;
        if out.is_empty() {
            out.push_str(&report.header.comment_lines());
        }
        out.push('\n');
        out.push_str(&render_report(&report));
    }
    if out.is_empty() {
        bail!("no test reports in {}", args.dir.display());
    }
    match &args.out {
        Some(path) => write(path, &out),
        None => {
            print!("{out}");
            Ok(())
        }
    }
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Directory for the kern files and annotations.csv.
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = SynthConfig::default().pieces)]
    pub pieces: usize,
    #[arg(long, default_value_t = SynthConfig::default().phrases_per_piece)]
    pub phrases: usize,
    #[arg(long, default_value_t = SynthConfig::default().seed)]
    pub seed: u64,
}

pub fn synth(args: &SynthArgs) -> Result<()> {
    let pieces = tonal_corpus(&SynthConfig {
        pieces: args.pieces,
        phrases_per_piece: args.phrases,
        seed: args.seed,
    });
    for p in &pieces {
        write(&args.out_dir.join(format!("{}.{KERN_EXT}", p.id)), &p.to_kern())?;
    }
    write(&args.out_dir.join("annotations.csv"), &annotations_csv(&pieces))?;
    println!("pieces: {}", pieces.len());
    Ok(())
}
