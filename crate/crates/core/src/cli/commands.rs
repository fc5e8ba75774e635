use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::config::RunConfig;
use crate::dataset::{
    self, gen_synthetic_corpus, load_corpus, load_pairs, pairs_text, skip_report, split_pairs, FragmentPair,
    FragmentStore, GraphCache, SplitSpec, SynthSpec,
};
use crate::error::{Error, Result};
use crate::flow::{export_graph, EdgeType};
use crate::metrics::default_grid;
use crate::model::{export_attention, gmn, ModelKind};
use crate::pipeline::{self, predictions_text, Checkpoint};
use crate::util::{read_text, write_atomic};

fn required<'a>(p: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path> {
    p.as_deref()
        .ok_or_else(|| Error::Config(vec![format!("missing --{flag}")]))
}

fn load_fragments(cfg: &RunConfig) -> Result<FragmentStore> {
    let cache = cfg.cache.as_ref().map(GraphCache::new);
    let (store, skipped) = load_corpus(required(&cfg.input, "input")?, cache.as_ref())?;
    if !skipped.is_empty() {
        eprintln!("skipped {} fragment(s) that failed to parse:", skipped.len());
        eprint!("{}", skip_report(&skipped));
    }
    Ok(store)
}

fn load_checkpoint(cfg: &RunConfig) -> Result<Checkpoint> {
    let ckpt = Checkpoint::load(required(&cfg.checkpoint, "checkpoint")?)?;
    if let Some(kind) = cfg.model {
        ckpt.expect_kind(kind)?;
    }
    Ok(ckpt)
}

/// Pair lists for scoring may leave out the label column.
fn load_scoring_pairs(path: &Path) -> Result<Vec<FragmentPair>> {
    let text = read_text(path)?;
    let mut lines = String::new();
    for line in text.lines() {
        let cols = line.split('\t').count();
        if !line.starts_with('#') && !line.trim().is_empty() && cols == 2 {
            lines.push_str(line);
            lines.push_str("\t-1\n");
        } else {
            lines.push_str(line);
            lines.push('\n');
        }
    }
    dataset::parse_pairs(&lines, &path.display().to_string())
}

fn threshold(cfg: &RunConfig, ckpt: &Checkpoint) -> Result<f64> {
    cfg.threshold.or(ckpt.threshold).ok_or_else(|| {
        Error::Config(vec![
            "no threshold: pass --threshold or use a checkpoint trained with validation pairs".into(),
        ])
    })
}

fn json_pretty<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("value serializes") + "\n"
}

pub fn graph(cfg: &RunConfig) -> Result<()> {
    let store = load_fragments(cfg)?;
    let mut histogram: BTreeMap<EdgeType, usize> = BTreeMap::new();
    let mut nodes = 0;
    for id in store.ids() {
        let g = store.graph(id)?;
        nodes += g.num_nodes;
        for (t, c) in g.histogram() {
            *histogram.entry(t).or_default() += c;
        }
        let path = cfg.out.join(format!("{id}.{}", cfg.format.extension()));
        write_atomic(&path, export_graph(g, cfg.format).as_bytes())?;
    }
    let hist: Vec<String> = histogram.iter().map(|(t, c)| format!("{}={c}", t.name())).collect();
    println!(
        "{} graph(s), {nodes} nodes, edges: {}",
        store.len(),
        if hist.is_empty() { "none".to_string() } else { hist.join(" ") }
    );
    Ok(())
}

pub fn synth(cfg: &RunConfig) -> Result<()> {
    let corpus = gen_synthetic_corpus(&SynthSpec {
        n_functionalities: cfg.functionalities,
        variants_per_functionality: cfg.variants,
        seed: cfg.seed,
    })?;
    write_atomic(&cfg.out.join("fragments.jsonl"), dataset::records_text(&corpus.fragments).as_bytes())?;
    write_atomic(&cfg.out.join("pairs.tsv"), pairs_text(&corpus.pairs).as_bytes())?;
    write_atomic(&cfg.out.join("manifest.json"), corpus.manifest_json().as_bytes())?;
    println!(
        "{} fragments, {} clone pairs, {} non-clone pairs in {}",
        corpus.manifest.fragments,
        corpus.manifest.true_pairs,
        corpus.manifest.false_pairs,
        cfg.out.display()
    );
    Ok(())
}

pub fn train(cfg: &RunConfig) -> Result<()> {
    let train_cfg = cfg.train_config();
    train_cfg.validate()?;
    let store = load_fragments(cfg)?;
    let pairs = load_pairs(required(&cfg.pairs, "pairs")?)?;
    let (train_pairs, valid_pairs) = match &cfg.valid_pairs {
        Some(p) => (pairs, load_pairs(p)?),
        None => {
            let [tr, va, te] = split_pairs(
                &pairs,
                &SplitSpec {
                    ratios: [8.0, 1.0, 1.0],
                    seed: cfg.seed,
                },
            )?;
            for (name, part) in [("train", &tr), ("valid", &va), ("test", &te)] {
                write_atomic(&cfg.out.join("splits").join(format!("{name}.tsv")), pairs_text(part).as_bytes())?;
            }
            (tr, va)
        }
    };
    write_atomic(&cfg.out.join("config.toml"), cfg.to_toml().as_bytes())?;
    let outcome = pipeline::train(&train_cfg, &train_pairs, &valid_pairs, &store, |entry| {
        eprint!("{}", entry.to_json_line());
        let _ = std::io::stderr().flush();
    })?;
    let log: String = outcome.log.iter().map(|e| e.to_json_line()).collect();
    write_atomic(&cfg.out.join("train_log.jsonl"), log.as_bytes())?;
    outcome.checkpoint.save(&cfg.out.join("checkpoint.json"))?;
    println!(
        "kept epoch {} (sigma {}), checkpoint in {}",
        outcome.checkpoint.epoch,
        outcome
            .checkpoint
            .threshold
            .map_or("n/a".to_string(), |s| format!("{s:.4}")),
        cfg.out.join("checkpoint.json").display()
    );
    Ok(())
}

#[derive(Serialize)]
struct TuneReport {
    sigma: f64,
    #[serde(flatten)]
    at_sigma: crate::metrics::Prf,
}

pub fn tune(cfg: &RunConfig) -> Result<()> {
    let ckpt = load_checkpoint(cfg)?;
    let store = load_fragments(cfg)?;
    let pairs = load_pairs(required(&cfg.pairs, "pairs")?)?;
    let (sigma, at_sigma) = pipeline::tune_threshold(&ckpt.scorer()?, &store, &pairs)?;
    let report = json_pretty(&TuneReport { sigma, at_sigma });
    write_atomic(&cfg.out, report.as_bytes())?;
    print!("{report}");
    Ok(())
}

pub fn eval(cfg: &RunConfig) -> Result<()> {
    let ckpt = load_checkpoint(cfg)?;
    let sigma = threshold(cfg, &ckpt)?;
    let store = load_fragments(cfg)?;
    let pairs = load_pairs(required(&cfg.pairs, "pairs")?)?;
    let report = pipeline::evaluate(&ckpt.scorer()?, &store, &pairs, sigma, &default_grid(0.01))?;
    write_atomic(&cfg.out.join("report.json"), json_pretty(&report).as_bytes())?;
    write_atomic(&cfg.out.join("report.txt"), report.to_table().as_bytes())?;
    write_atomic(&cfg.out.join("sweep.csv"), report.sweep_csv().as_bytes())?;
    write_atomic(&cfg.out.join("sweep.svg"), report.sweep_svg().as_bytes())?;
    if report.auc.is_some() {
        write_atomic(&cfg.out.join("roc.csv"), report.roc_csv().as_bytes())?;
        write_atomic(&cfg.out.join("roc.svg"), report.roc_svg().as_bytes())?;
    }
    print!("{}", report.to_table());
    Ok(())
}

pub fn predict(cfg: &RunConfig) -> Result<()> {
    let ckpt = load_checkpoint(cfg)?;
    let sigma = threshold(cfg, &ckpt)?;
    let store = load_fragments(cfg)?;
    let pairs = load_scoring_pairs(required(&cfg.pairs, "pairs")?)?;
    let predictions = pipeline::predict(&ckpt.scorer()?, &store, sigma, &pairs)?;
    write_atomic(&cfg.out, predictions_text(&predictions).as_bytes())?;
    println!(
        "{} pair(s), {} predicted clones at sigma {sigma}, written to {}",
        predictions.len(),
        predictions.iter().filter(|p| p.verdict).count(),
        cfg.out.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct AttentionExport {
    id1: String,
    id2: String,
    score: f64,
    /// 1-based propagation step of the matrices below.
    step: usize,
    top: Vec<gmn::AttentionRecord>,
    a12: Vec<Vec<f64>>,
    a21: Vec<Vec<f64>>,
}

pub fn attention(cfg: &RunConfig) -> Result<()> {
    let ckpt = load_checkpoint(cfg)?;
    ckpt.expect_kind(ModelKind::Gmn)?;
    let store = load_fragments(cfg)?;
    let pairs = load_scoring_pairs(required(&cfg.pairs, "pairs")?)?;
    let scorer = ckpt.scorer()?;
    let mut out = String::new();
    for p in &pairs {
        let (f1, f2) = (store.graph(&p.id1)?, store.graph(&p.id2)?);
        let emb = gmn::embed_pair(
            &scorer.model,
            &scorer.store,
            &scorer.prepare(&store, &p.id1)?,
            &scorer.prepare(&store, &p.id2)?,
        )?;
        let last = emb.attention.last().expect("at least one step");
        let rows = |m: &ndarray::Array2<f64>| m.rows().into_iter().map(|r| r.to_vec()).collect();
        let record = AttentionExport {
            id1: p.id1.clone(),
            id2: p.id2.clone(),
            score: pipeline::similarity(&emb.v1, &emb.v2)?,
            step: ckpt.train.model.steps,
            top: export_attention(last, f1, f2, cfg.top),
            a12: rows(&last.a12),
            a21: rows(&last.a21),
        };
        out.push_str(&serde_json::to_string(&record).expect("record serializes"));
        out.push('\n');
    }
    write_atomic(&cfg.out, out.as_bytes())?;
    println!("attention for {} pair(s) written to {}", pairs.len(), cfg.out.display());
    Ok(())
}
