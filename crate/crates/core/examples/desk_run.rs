//! Desk-scale run of the two-step protocol on the synthetic corpus.
//!
//! Usage: `cargo run --release --example desk_run -- [CONFIG_JSON] [N_RECORDS] [SEEDS] [SUBSETS]`
//! where CONFIG_JSON is a (partial) run configuration, SUBSETS a
//! comma-separated list of lead counts.

use std::time::Instant;

use ecgcl::dataset::{make_synthetic_corpus, Corpus, LeadSubset, SyntheticSpec};
use ecgcl::training::{
    export_teacher_embeddings, train_baseline, train_student, train_teacher, PreparedData, RunConfig,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let config: RunConfig = serde_json::from_str(args.first().map(String::as_str).unwrap_or("{}"))?;
    let n: usize = args.get(1).map(|s| s.parse()).transpose()?.unwrap_or(2000);
    let seeds: u64 = args.get(2).map(|s| s.parse()).transpose()?.unwrap_or(1);
    let subsets: Vec<usize> = args
        .get(3)
        .map(|s| s.split(',').map(|x| x.parse()).collect::<Result<_, _>>())
        .transpose()?
        .unwrap_or_else(|| vec![2]);

    let t0 = Instant::now();
    let records = make_synthetic_corpus(&SyntheticSpec::new(n, 1))?;
    let corpus = Corpus {
        records,
        normalization: None,
    };
    let data = PreparedData::new(&corpus, &config)?;
    println!("corpus ready in {:.1}s", t0.elapsed().as_secs_f64());

    let t = Instant::now();
    let teacher = train_teacher(&config, &data)?;
    println!(
        "teacher: auc {:.4} (epoch {}) in {:.1}s",
        teacher.checkpoint.manifest.best_metric,
        teacher.checkpoint.manifest.epoch,
        t.elapsed().as_secs_f64()
    );
    let cache = export_teacher_embeddings(&teacher.checkpoint, &data)?;

    for &size in &subsets {
        let mut wins = 0;
        let (mut sum_s, mut sum_b) = (0.0, 0.0);
        for seed in 0..seeds {
            let cfg = config.with_subset(LeadSubset::standard(size)?).with_seed(seed);
            let t = Instant::now();
            let s = train_student(&cfg, &data, Some(&cache), &teacher.checkpoint)?;
            let ts = t.elapsed().as_secs_f64();
            let t = Instant::now();
            let b = train_baseline(&cfg, &data)?;
            let tb = t.elapsed().as_secs_f64();
            let (a_s, a_b) = (s.checkpoint.manifest.best_metric, b.checkpoint.manifest.best_metric);
            if std::env::var_os("DESK_VERBOSE").is_some() {
                for (st, bl) in s.epochs.iter().zip(&b.epochs) {
                    println!(
                        "  epoch {:2}: student cls {:.4} sim {:.4} auc {:.4} | baseline cls {:.4} auc {:.4}",
                        st.epoch, st.train_cls, st.train_sim, st.eval_macro_auc, bl.train_cls, bl.eval_macro_auc
                    );
                }
            }
            sum_s += a_s;
            sum_b += a_b;
            wins += usize::from(a_s > a_b);
            println!(
                "subset {size} seed {seed}: student {a_s:.4} (ep {}, {ts:.1}s) baseline {a_b:.4} (ep {}, {tb:.1}s)",
                s.checkpoint.manifest.epoch, b.checkpoint.manifest.epoch
            );
        }
        println!(
            "subset {size}: mean student {:.4} baseline {:.4}, student better in {wins}/{seeds}",
            sum_s / seeds as f64,
            sum_b / seeds as f64
        );
    }
    println!("total {:.1}s", t0.elapsed().as_secs_f64());
    Ok(())
}
