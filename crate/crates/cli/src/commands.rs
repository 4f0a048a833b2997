use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Args;
use ecgcl::dataset::{
    corpus_hash, load_ptbxl, make_synthetic_corpus, normalize_corpus, write_corpus, LoadOptions, SyntheticSpec,
    TensorFile,
};
use ecgcl::metadata::encode_record;
use ecgcl::training::{
    evaluate_checkpoint, export_teacher_embeddings, train_baseline as core_train_baseline,
    train_student as core_train_student, train_teacher as core_train_teacher, write_epoch_log, Checkpoint, Role,
    RunConfig, StepLog, TeacherEmbeddingCache, TrainingOutcome,
};
use serde_json::json;

use crate::exit::usage;
use crate::run_args::{load_config_file, load_data, short, Resolved, RunArgs};

pub const METADATA_FILE: &str = "metadata.bin";
pub const REPORT_FILE: &str = "ingestion_report.json";
const METADATA_MAGIC: [u8; 7] = *b"ECGMET1";

#[derive(Debug, Args)]
pub struct PrepareArgs {
    /// Raw PTB-XL directory (ptbxl_database.csv, scp_statements.csv, records100/ ...).
    #[arg(long, env = "ECGCL_DATA_DIR", value_name = "DIR")]
    pub data_dir: Option<PathBuf>,

    #[arg(long, default_value_t = 100)]
    pub sampling_rate: u32,

    /// Codes listed with a lower likelihood are ignored (0 keeps all).
    #[arg(long)]
    pub min_likelihood: Option<f64>,

    /// Supplies the split (normalization is fitted on its training folds)
    /// and metadata encoder.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Directory for the prepared corpus.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 2000)]
    pub n: usize,

    /// Corpus generator seed.
    #[arg(long, default_value_t = 1)]
    pub seed: u64,

    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,

    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Debug, Args)]
pub struct StudentArgs {
    #[command(flatten)]
    pub run: RunArgs,

    /// Teacher checkpoint directory.
    #[arg(long, value_name = "DIR")]
    pub teacher: PathBuf,

    /// Teacher embedding cache; defaults to the one `export-embeddings`
    /// writes under --out.
    #[arg(long, value_name = "FILE")]
    pub embeddings: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    /// Teacher checkpoint directory.
    #[arg(long, value_name = "DIR")]
    pub teacher: PathBuf,

    #[arg(long, env = "ECGCL_DATA_DIR", value_name = "DIR")]
    pub data_dir: Option<PathBuf>,

    #[arg(long, value_name = "DIR", default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long, value_name = "DIR")]
    pub checkpoint: PathBuf,

    #[arg(long, env = "ECGCL_DATA_DIR", value_name = "DIR")]
    pub data_dir: Option<PathBuf>,
}

/// Writes `corpus` to a sibling temporary directory and renames it into
/// place, so a failure never leaves a partial cache at `out`.
fn write_cache_atomically(out: &Path, fill: impl FnOnce(&Path) -> Result<()>) -> Result<String> {
    let name = out
        .file_name()
        .ok_or_else(|| usage(format!("invalid output directory {}", out.display())))?;
    let parent = out.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(parent)?;
    let tmp = parent.join(format!(".{}.partial", name.to_string_lossy()));
    if tmp.exists() {
        std::fs::remove_dir_all(&tmp)?;
    }
    std::fs::create_dir_all(&tmp)?;
    if let Err(e) = fill(&tmp) {
        let _ = std::fs::remove_dir_all(&tmp);
        return Err(e);
    }
    let hash = corpus_hash(&tmp)?;
    if out.exists() {
        std::fs::remove_dir_all(out).with_context(|| format!("replacing {}", out.display()))?;
    }
    std::fs::rename(&tmp, out)?;
    Ok(hash)
}

fn write_metadata_encodings(dir: &Path, corpus: &ecgcl::dataset::Corpus, config: &RunConfig) -> Result<()> {
    let len = config.metadata.encoded_len();
    let data: Vec<f32> = corpus
        .records
        .iter()
        .flat_map(|r| encode_record(r, &config.metadata).0.into_iter().map(|v| v as f32))
        .collect();
    let tensor = TensorFile {
        magic: METADATA_MAGIC,
        dims: [corpus.records.len() as u32, len as u32, 1],
        data,
    };
    tensor.write_to(std::io::BufWriter::new(std::fs::File::create(dir.join(METADATA_FILE))?))?;
    Ok(())
}

pub fn prepare(args: PrepareArgs) -> Result<()> {
    let config = load_config_file(args.config.as_deref())?;
    let data_dir = args
        .data_dir
        .ok_or_else(|| usage("no PTB-XL directory: pass --data-dir or set ECGCL_DATA_DIR"))?;
    if !data_dir.is_dir() {
        return Err(usage(format!("PTB-XL directory {} does not exist", data_dir.display())));
    }
    let opts = LoadOptions {
        sampling_rate: args.sampling_rate,
        min_likelihood: args.min_likelihood.unwrap_or(config.min_likelihood),
    };
    let ptbxl = load_ptbxl(&data_dir, &opts)?;
    if ptbxl.records.is_empty() {
        return Err(usage(format!("no usable records in {}", data_dir.display())));
    }
    let report = ptbxl.report.clone();
    let corpus = normalize_corpus(ptbxl.records, &config.split)?;
    let hash = write_cache_atomically(&args.out, |dir| {
        write_corpus(dir, &corpus)?;
        write_metadata_encodings(dir, &corpus, &config)?;
        Ok(())
    })?;
    let doc = json!({
        "source": data_dir,
        "sampling_rate": args.sampling_rate,
        "database_rows": report.database_rows,
        "loaded": report.loaded,
        "excluded_no_superclass": report.excluded_no_superclass.len(),
        "excluded_ids": report.excluded_no_superclass,
        "skipped": report.skipped.len(),
        "skipped_records": report.skipped,
        "cache_hash": hash,
    });
    std::fs::write(args.out.join(REPORT_FILE), serde_json::to_string_pretty(&doc)?)?;
    println!(
        "prepared {} records ({} without a superclass excluded, {} skipped) -> {} [cache {}]",
        report.loaded,
        report.excluded_no_superclass.len(),
        report.skipped.len(),
        args.out.display(),
        hash
    );
    Ok(())
}

pub fn synth(args: SynthArgs) -> Result<()> {
    let config = load_config_file(args.config.as_deref())?;
    let records = make_synthetic_corpus(&SyntheticSpec::new(args.n, args.seed)).map_err(|e| usage(e.to_string()))?;
    let corpus = normalize_corpus(records, &config.split)?;
    let hash = write_cache_atomically(&args.out, |dir| {
        write_corpus(dir, &corpus)?;
        write_metadata_encodings(dir, &corpus, &config)?;
        Ok(())
    })?;
    println!(
        "synthetic corpus of {} records (seed {}) -> {} [cache {hash}]",
        args.n,
        args.seed,
        args.out.display()
    );
    Ok(())
}

/// `<role>[-<n>lead]-seed<seed>-<config hash>`.
pub fn run_name(role: Role, config: &RunConfig) -> String {
    let hash = config.content_hash();
    match role {
        Role::Teacher => format!("teacher-seed{}-{}", config.seed, short(&hash)),
        _ => format!("{role}-{}lead-seed{}-{}", config.subset.size(), config.seed, short(&hash)),
    }
}

pub fn write_step_log(path: &Path, steps: &[StepLog]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for s in steps {
        w.serialize(s)?;
    }
    w.flush()?;
    Ok(())
}

/// Saves the checkpoint and logs of an outcome; returns the checkpoint dir.
pub fn persist(out: &Path, name: &str, outcome: &mut TrainingOutcome) -> Result<PathBuf> {
    let dir = out.join("checkpoints").join(name);
    outcome.checkpoint.save(&dir)?;
    let logs = out.join("logs");
    write_epoch_log(&logs.join(format!("{name}.csv")), &outcome.epochs)?;
    write_step_log(&logs.join(format!("{name}.steps.csv")), &outcome.steps)?;
    Ok(dir)
}

fn summarize(dir: &Path, outcome: &TrainingOutcome) -> Result<()> {
    let m = &outcome.checkpoint.manifest;
    let doc = json!({
        "checkpoint": dir,
        "role": m.role,
        "leads": m.subset.size(),
        "seed": m.seed,
        "best_epoch": m.epoch,
        "eval_macro_auc": m.best_metric,
        "initial_macro_auc": outcome.initial.macro_auc,
        "config_hash": m.config_hash,
        "content_hash": m.content_hash,
    });
    println!("{}", serde_json::to_string_pretty(&doc)?);
    Ok(())
}

/// Teacher runs always see all 12 leads; the subset field is normalized so
/// it does not change the run's identity.
pub fn teacher_config(config: &RunConfig) -> RunConfig {
    config.with_subset(ecgcl::dataset::LeadSubset::full())
}

pub fn train_teacher(args: TrainArgs) -> Result<()> {
    let mut r = args.run.resolve()?;
    r.config = teacher_config(&r.config);
    let name = run_name(Role::Teacher, &r.config);
    r.echo(&name)?;
    let data = r.load_data()?;
    let mut outcome = core_train_teacher(&r.config, &data)?;
    let dir = persist(&r.out, &name, &mut outcome)?;
    summarize(&dir, &outcome)
}

pub fn default_cache_path(out: &Path, teacher: &Checkpoint) -> PathBuf {
    out.join("embeddings")
        .join(format!("teacher-{}.emb", short(&teacher.manifest.content_hash)))
}

pub fn export_embeddings(args: ExportArgs) -> Result<()> {
    let teacher = Checkpoint::load(&args.teacher)?;
    let data_dir = args
        .data_dir
        .or_else(|| teacher.manifest.config.paths.data_dir.clone())
        .ok_or_else(|| usage("no data directory: pass --data-dir or set ECGCL_DATA_DIR"))?;
    let data = load_data(&data_dir, &teacher.manifest.config)?;
    let cache = export_teacher_embeddings(&teacher, &data)?;
    let path = default_cache_path(&args.out, &teacher);
    cache.save(&path)?;
    println!(
        "{} embeddings of dimension {} -> {}",
        cache.len(),
        cache.dim(),
        path.display()
    );
    Ok(())
}

fn check_student_config(r: &Resolved, teacher: &Checkpoint) -> Result<()> {
    let t = &teacher.manifest.config;
    if t.split != r.config.split || t.metadata != r.config.metadata {
        return Err(usage(
            "student split/metadata configuration differs from the teacher's; use the teacher's config as a base",
        ));
    }
    Ok(())
}

pub fn train_student(args: StudentArgs) -> Result<()> {
    let r = args.run.resolve()?;
    let teacher = Checkpoint::load(&args.teacher)?;
    check_student_config(&r, &teacher)?;
    let name = run_name(Role::Student, &r.config);
    r.echo(&name)?;
    let data = r.load_data()?;
    let cache = if r.config.live_teacher {
        None
    } else {
        let path = args
            .embeddings
            .clone()
            .unwrap_or_else(|| default_cache_path(&r.out, &teacher));
        Some(TeacherEmbeddingCache::load(&path)?)
    };
    let mut outcome = core_train_student(&r.config, &data, cache.as_ref(), &teacher)?;
    let dir = persist(&r.out, &name, &mut outcome)?;
    summarize(&dir, &outcome)
}

pub fn train_baseline(args: TrainArgs) -> Result<()> {
    let r = args.run.resolve()?;
    let name = run_name(Role::Baseline, &r.config);
    r.echo(&name)?;
    let data = r.load_data()?;
    let mut outcome = core_train_baseline(&r.config, &data)?;
    let dir = persist(&r.out, &name, &mut outcome)?;
    summarize(&dir, &outcome)
}

pub fn eval(args: EvalArgs) -> Result<()> {
    let ckpt = Checkpoint::load(&args.checkpoint)?;
    let data_dir = args
        .data_dir
        .or_else(|| ckpt.manifest.config.paths.data_dir.clone())
        .ok_or_else(|| usage("no data directory: pass --data-dir or set ECGCL_DATA_DIR"))?;
    let data = load_data(&data_dir, &ckpt.manifest.config)?;
    let report = evaluate_checkpoint(&ckpt, &data)?;
    let doc = json!({
        "checkpoint": args.checkpoint,
        "recorded_macro_auc": ckpt.manifest.best_metric,
        "report": report,
    });
    println!("{}", serde_json::to_string_pretty(&doc)?);
    Ok(())
}
