//! The full protocol: teacher, embedding export, then student and baseline
//! legs for every lead subset and seed, assembled into the results table.
//! Completed legs are found by checkpoint and reused, so an interrupted run
//! can simply be restarted.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use anyhow::{anyhow, Result};
use clap::Args;
use ecgcl::dataset::LeadSubset;
use ecgcl::metrics::{assemble_table, EvalReport};
use ecgcl::training::{
    export_teacher_embeddings, train_baseline, train_student, train_teacher, Checkpoint, PreparedData, Role,
    RunConfig, TeacherEmbeddingCache,
};

use crate::commands::{default_cache_path, persist, run_name, teacher_config};
use crate::exit::usage;
use crate::run_args::RunArgs;

#[derive(Debug, Args)]
pub struct ReproduceArgs {
    #[command(flatten)]
    pub run: RunArgs,

    /// Seeds per leg (root seed, root+1, ...).
    #[arg(long, default_value_t = 1)]
    pub seeds: u64,

    /// Legs trained concurrently.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,

    /// Reduced lead counts to run.
    #[arg(long, value_delimiter = ',', default_values_t = [6, 4, 3, 2])]
    pub subsets: Vec<usize>,

    /// Train students for every alpha in --alphas and keep, per lead
    /// count, the alpha with the best seed-mean eval macro-AUC.
    #[arg(long)]
    pub sweep_alpha: bool,

    #[arg(long, value_delimiter = ',', default_values_t = [0.1, 0.3, 1.0, 3.0])]
    pub alphas: Vec<f64>,
}

#[derive(Debug, Clone)]
struct Leg {
    role: Role,
    config: RunConfig,
}

/// Reuses the checkpoint at `dir` when it was produced by the same
/// configuration (and, for students, the same teacher).
fn completed(dir: &Path, config: &RunConfig, teacher_hash: Option<&str>) -> Option<EvalReport> {
    let manifest = Checkpoint::read_manifest(dir).ok()?;
    let same = manifest.config_hash == config.content_hash()
        && manifest.teacher_hash.as_deref() == teacher_hash
        && dir.join(ecgcl::training::PARAMS_FILE).is_file();
    if same {
        manifest.report
    } else {
        None
    }
}

fn run_leg(
    leg: &Leg,
    out: &Path,
    data: &PreparedData,
    teacher: Option<&(Checkpoint, TeacherEmbeddingCache)>,
) -> Result<EvalReport> {
    let name = run_name(leg.role, &leg.config);
    let dir = out.join("checkpoints").join(&name);
    let teacher_hash = match leg.role {
        Role::Student => Some(
            teacher
                .ok_or_else(|| anyhow!("no teacher available"))?
                .0
                .manifest
                .content_hash
                .as_str(),
        ),
        _ => None,
    };
    if let Some(report) = completed(&dir, &leg.config, teacher_hash) {
        log::info!("{name}: already complete, reusing");
        return Ok(report);
    }
    let mut outcome = match leg.role {
        Role::Student => {
            let (ckpt, cache) = teacher.ok_or_else(|| anyhow!("no teacher available"))?;
            train_student(&leg.config, data, Some(cache), ckpt)?
        }
        Role::Baseline => train_baseline(&leg.config, data)?,
        Role::Teacher => train_teacher(&leg.config, data)?,
    };
    persist(out, &name, &mut outcome)?;
    outcome
        .checkpoint
        .manifest
        .report
        .clone()
        .ok_or_else(|| anyhow!("{name}: checkpoint carries no report"))
}

fn teacher_stage(config: &RunConfig, out: &Path, data: &PreparedData) -> Result<(Checkpoint, TeacherEmbeddingCache, EvalReport)> {
    let cfg = teacher_config(config);
    let leg = Leg {
        role: Role::Teacher,
        config: cfg.clone(),
    };
    let report = run_leg(&leg, out, data, None)?;
    let dir = out.join("checkpoints").join(run_name(Role::Teacher, &cfg));
    let teacher = Checkpoint::load(&dir)?;
    let cache_path = default_cache_path(out, &teacher);
    let cache = match TeacherEmbeddingCache::load(&cache_path) {
        Ok(c) if c.teacher_hash() == teacher.manifest.content_hash => c,
        _ => {
            let c = export_teacher_embeddings(&teacher, data)?;
            c.save(&cache_path)?;
            c
        }
    };
    Ok((teacher, cache, report))
}

/// Runs `legs` on `jobs` worker threads; results keep the legs' order.
fn run_legs(
    legs: &[Leg],
    jobs: usize,
    out: &Path,
    data: &PreparedData,
    teacher: Option<&(Checkpoint, TeacherEmbeddingCache)>,
) -> Vec<Option<EvalReport>> {
    let next = AtomicUsize::new(0);
    let results = Mutex::new(vec![None; legs.len()]);
    std::thread::scope(|scope| {
        for _ in 0..jobs.clamp(1, legs.len().max(1)) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(leg) = legs.get(i) else { break };
                let outcome = run_leg(leg, out, data, teacher);
                let report = match outcome {
                    Ok(r) => Some(r),
                    Err(e) => {
                        log::warn!(
                            "{} leg failed, recorded as N/A: {e:#}",
                            run_name(leg.role, &leg.config)
                        );
                        None
                    }
                };
                results.lock().expect("results lock")[i] = report;
            });
        }
    });
    results.into_inner().expect("results lock")
}

fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

pub fn run(args: ReproduceArgs) -> Result<()> {
    if args.seeds == 0 {
        return Err(usage("--seeds must be at least 1"));
    }
    if args.sweep_alpha && args.alphas.is_empty() {
        return Err(usage("--sweep-alpha needs at least one value in --alphas"));
    }
    let subsets = args
        .subsets
        .iter()
        .map(|&n| match n {
            2 | 3 | 4 | 6 => LeadSubset::standard(n).map_err(|e| usage(e.to_string())),
            _ => Err(usage(format!("--subsets accepts 6, 4, 3 and 2, got {n}"))),
        })
        .collect::<Result<Vec<_>>>()?;
    let r = args.run.resolve()?;
    r.echo("reproduce-table")?;
    let data = r.load_data()?;
    let root = r.config.seed;
    let seeds: Vec<u64> = (0..args.seeds).map(|i| root + i).collect();

    let mut reports: Vec<EvalReport> = Vec::new();
    let teacher = match teacher_stage(&r.config, &r.out, &data) {
        Ok((ckpt, cache, report)) => {
            reports.push(report);
            Some((ckpt, cache))
        }
        Err(e) => {
            log::warn!("teacher failed; student legs will be N/A: {e:#}");
            None
        }
    };

    let alphas = if args.sweep_alpha {
        args.alphas.clone()
    } else {
        vec![r.config.loss.alpha]
    };
    let mut legs = Vec::new();
    for subset in &subsets {
        for &seed in &seeds {
            let base = r.config.with_subset(subset.clone()).with_seed(seed);
            for &alpha in &alphas {
                let mut cfg = base.clone();
                cfg.loss.alpha = alpha;
                legs.push(Leg {
                    role: Role::Student,
                    config: cfg,
                });
            }
            legs.push(Leg {
                role: Role::Baseline,
                config: base,
            });
        }
    }
    let results = run_legs(&legs, args.jobs, &r.out, &data, teacher.as_ref());

    for subset in &subsets {
        let n = subset.size();
        let of = |role: Role, alpha: Option<f64>| -> Vec<EvalReport> {
            legs.iter()
                .zip(&results)
                .filter(|(leg, _)| {
                    leg.role == role
                        && leg.config.subset.size() == n
                        && alpha.is_none_or(|a| leg.config.loss.alpha == a)
                })
                .filter_map(|(_, r)| r.clone())
                .collect()
        };
        let best_alpha = alphas
            .iter()
            .copied()
            .filter_map(|a| {
                let aucs: Vec<f64> = of(Role::Student, Some(a)).iter().map(|r| r.macro_auc).collect();
                mean(&aucs).map(|m| (a, m))
            })
            .max_by(|x, y| x.1.total_cmp(&y.1));
        if let Some((alpha, m)) = best_alpha {
            if args.sweep_alpha {
                log::info!("{n} leads: alpha {alpha} selected (seed-mean eval macro-AUC {m:.4})");
            }
            reports.extend(of(Role::Student, Some(alpha)));
        }
        reports.extend(of(Role::Baseline, None));
    }

    let table = assemble_table(&reports);
    let out = &r.out;
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join("results.csv"), table.results_csv())?;
    std::fs::write(out.join("table.md"), table.to_markdown())?;
    std::fs::write(out.join("table.csv"), table.to_csv())?;
    let failed = results.iter().filter(|r| r.is_none()).count() + usize::from(teacher.is_none());
    print!("{}", table.to_markdown());
    if failed > 0 {
        log::warn!("{failed} leg(s) failed and appear as N/A");
    }
    println!("results written to {}", display(out).display());
    Ok(())
}

fn display(p: &Path) -> PathBuf {
    p.canonicalize().unwrap_or_else(|_| p.to_path_buf())
}
