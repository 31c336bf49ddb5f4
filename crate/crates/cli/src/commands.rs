use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use memvit::datakit::{
    self, embed_all, kfold as make_kfold, make_splits, merge, write_report, write_splits, EmbeddingFile, Manifest,
    SplitSpec, TestSize, ThumbnailEmbedder, VitEmbedder,
};
use memvit::diffmath::op_suite;
use memvit::metrics::MetricsReport;
use memvit::semantics::{
    extract_nouns, filter_percentile, load_captions, load_tagged_nouns, match_and_correlate, noun_stats_from_nouns,
    write_noun_plot, write_noun_stats, write_noun_table, Lexicon, NounStat,
};
use memvit::trainer::{
    predict as score_files, predict_dataset, train_with, write_history, TrainConfig, HISTORY_HEADER,
};
use memvit::vit::{model_grad_check, Checkpoint, ModelConfig};

use crate::scores::load_scores;
use crate::{
    DedupArgs, EmbedderKind, EvaluateArgs, GradcheckArgs, KfoldArgs, PredictArgs, SemanticArgs, SplitArgs, TrainArgs,
};

/// Pass thresholds for `gradcheck`.
const OP_TOLERANCE: f64 = 1e-4;
const MODEL_TOLERANCE: f64 = 1e-3;

/// Loads a manifest through an absolute path so relative image paths stay
/// valid when records are written elsewhere.
fn load_manifest(path: &Path) -> Result<Manifest> {
    let abs = std::path::absolute(path).with_context(|| format!("resolving {}", path.display()))?;
    Ok(Manifest::load(&abs)?)
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write_lines<'a>(path: &Path, lines: impl IntoIterator<Item = &'a str>) -> Result<()> {
    let mut buf = Vec::new();
    for l in lines {
        writeln!(buf, "{l}")?;
    }
    fs::write(path, buf).with_context(|| format!("writing {}", path.display()))
}

pub fn train(a: TrainArgs) -> Result<()> {
    let mut cfg = TrainConfig::load(&a.config)?;
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    if let Some(epochs) = a.epochs {
        cfg.epochs = epochs;
    }
    cfg.validate()?;
    let train_m = load_manifest(&a.train)?;
    let val_m = load_manifest(&a.val)?;
    create_dir(&a.out)?;
    let init = cfg.initial_parameters()?;
    eprintln!(
        "training on {} images, validating on {}, {} parameters",
        train_m.len(),
        val_m.len(),
        init.num_scalars()
    );
    println!("{HISTORY_HEADER}");
    let outcome = train_with(&cfg, &train_m, &val_m, init, |s| {
        let rho = s.val_spearman.map_or_else(|| "NA".into(), |v| v.to_string());
        println!("{},{},{},{rho}", s.epoch, s.train_mse, s.val_mse);
        eprintln!("epoch {} done after {} steps", s.epoch, s.step);
    })?;
    outcome.best.save(&a.out.join("best"))?;
    outcome.last.save(&a.out.join("last"))?;
    write_history(&a.out.join("history.csv"), &outcome.history)?;
    let cfg_path = a.out.join("config.toml");
    fs::write(&cfg_path, cfg.to_toml_string()?).with_context(|| format!("writing {}", cfg_path.display()))?;
    eprintln!("checkpoints written to {}", a.out.display());
    Ok(())
}

pub fn predict(a: PredictArgs) -> Result<()> {
    let ckpt = Checkpoint::load(&a.model)?;
    let items: Vec<(String, PathBuf)> = a.images.iter().map(|p| (p.display().to_string(), p.clone())).collect();
    let mut failed = 0;
    for (path, score) in score_files(&ckpt, &items) {
        match score {
            Ok(s) => println!("{path},{s}"),
            Err(e) => {
                eprintln!("error: {path}: {e}");
                failed += 1;
            }
        }
    }
    ensure!(failed == 0, "{failed} of {} images could not be scored", items.len());
    Ok(())
}

pub fn evaluate(a: EvaluateArgs) -> Result<()> {
    let ckpt = Checkpoint::load(&a.model)?;
    let m = load_manifest(&a.manifest)?;
    ensure!(m.len() >= 2, "evaluation needs at least 2 images, got {}", m.len());
    let pred = predict_dataset(&ckpt, &m)?;
    let target: Vec<f64> = m.records().iter().map(|r| r.score).collect();
    let report = MetricsReport::compute(&pred, &target)?;
    if let Some(path) = &a.predictions {
        let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
        w.write_record(["id", "target", "prediction"])?;
        for (r, p) in m.records().iter().zip(&pred) {
            w.write_record([r.id.as_str(), &r.score.to_string(), &p.to_string()])?;
        }
        w.flush()?;
    }
    if !report.is_defined() {
        eprintln!("note: correlation is undefined because predictions or targets are constant");
    }
    println!("{}", MetricsReport::CSV_HEADER);
    println!("{report}");
    Ok(())
}

pub fn dedup(a: DedupArgs) -> Result<()> {
    let kind = match (a.embedder, &a.embeddings) {
        (None | Some(EmbedderKind::File), Some(_)) => EmbedderKind::File,
        (Some(EmbedderKind::File), None) => bail!("--embedder file needs --embeddings"),
        (Some(k), Some(_)) => bail!("--embeddings cannot be combined with --embedder {k:?}"),
        (Some(k), None) => k,
        (None, None) => EmbedderKind::Thumbnail,
    };
    ensure!(
        kind == EmbedderKind::Vit || a.model.is_none(),
        "--model is only used with --embedder vit"
    );
    ensure!(
        (-1.0..=1.0).contains(&a.threshold),
        "threshold {} outside [-1, 1]",
        a.threshold
    );
    let manifests = a
        .manifests
        .iter()
        .map(|p| load_manifest(p))
        .collect::<Result<Vec<_>>>()?;
    create_dir(&a.out)?;

    let vectors: HashMap<String, Vec<f64>> = match kind {
        EmbedderKind::File => EmbeddingFile::load(a.embeddings.as_deref().expect("checked above"))?.into_map(),
        EmbedderKind::Thumbnail | EmbedderKind::Vit => {
            let vit;
            let embedder: &dyn datakit::Embedder = if kind == EmbedderKind::Vit {
                let dir = a.model.as_deref().context("--embedder vit needs --model")?;
                let ckpt = Checkpoint::load(dir)?;
                let resize = ckpt.meta.resize_for(ckpt.config());
                vit = VitEmbedder {
                    params: ckpt.params,
                    resize_to: resize,
                    normalization: ckpt.meta.normalization,
                };
                &vit
            } else {
                &ThumbnailEmbedder::default()
            };
            let mut all = HashMap::new();
            for m in &manifests {
                eprintln!("embedding {} images", m.len());
                all.extend(embed_all(m, embedder)?);
            }
            EmbeddingFile::from_vectors(all.clone())?.save(&a.out.join("embeddings.csv"))?;
            all
        }
    };

    let outcome = datakit::dedup(&manifests, &vectors, a.threshold)?;
    write_report(&a.out.join("dedup_report.csv"), &outcome.report)?;
    let clean_dir = a.out.join("cleaned");
    create_dir(&clean_dir)?;
    let mut used = HashMap::new();
    for (input, cleaned) in a.manifests.iter().zip(&outcome.cleaned) {
        let stem = input
            .file_stem()
            .map_or_else(|| "manifest".into(), |s| s.to_string_lossy().into_owned());
        let n = used.entry(stem.clone()).or_insert(0usize);
        *n += 1;
        let name = if *n == 1 {
            format!("{stem}.csv")
        } else {
            format!("{stem}_{n}.csv")
        };
        merge(std::slice::from_ref(cleaned))?.save(&clean_dir.join(name))?;
    }
    merge(&outcome.cleaned)?.save(&a.out.join("merged.csv"))?;

    let total: usize = manifests.iter().map(Manifest::len).sum();
    eprintln!(
        "{} duplicate pairs in {} clusters; removed {} of {total} images",
        outcome.report.pairs.len(),
        outcome.report.clusters.len(),
        outcome.report.removed.len()
    );
    println!("source_a,source_b,pairs");
    for ((sa, sb), n) in &outcome.report.source_counts {
        println!("{sa},{sb},{n}");
    }
    Ok(())
}

pub fn split(a: SplitArgs) -> Result<()> {
    let test = match (a.test_count, a.test_fraction) {
        (Some(c), None) => TestSize::Count(c),
        (None, Some(f)) => TestSize::Fraction(f),
        _ => unreachable!("clap enforces exactly one test size"),
    };
    ensure!(a.splits > 0, "--splits must be at least 1");
    let m = load_manifest(&a.manifest)?;
    let splits = make_splits(&m, &SplitSpec::new(a.seed, a.splits, test))?;
    write_splits(&a.out, &splits)?;
    eprintln!("wrote {} splits to {}", splits.len(), a.out.display());
    println!("split,train,test");
    for (k, s) in splits.iter().enumerate() {
        println!("{},{},{}", k + 1, s.train.len(), s.test.len());
    }
    Ok(())
}

pub fn kfold(a: KfoldArgs) -> Result<()> {
    let m = load_manifest(&a.manifest)?;
    let folds = make_kfold(&m, a.k, a.repeats, a.seed)?;
    create_dir(&a.out)?;
    println!("repeat,fold,train,validation");
    for f in &folds {
        let (r, k) = (f.repeat + 1, f.fold + 1);
        for (name, ids) in [("train", &f.train), ("validation", &f.validation)] {
            let path = a.out.join(format!("repeat{r}_fold{k}_{name}.txt"));
            write_lines(&path, ids.iter().map(String::as_str))?;
        }
        println!("{r},{k},{},{}", f.train.len(), f.validation.len());
    }
    eprintln!("wrote {} folds to {}", folds.len(), a.out.display());
    Ok(())
}

fn set_stats(captions: &Path, scores: &Path, tagged: bool, lexicon: &Lexicon) -> Result<Vec<NounStat>> {
    let nouns = if tagged {
        load_tagged_nouns(captions)?
    } else {
        load_captions(captions)?
            .into_iter()
            .map(|c| {
                let n = extract_nouns(&c.caption, lexicon);
                (c.id, n)
            })
            .collect()
    };
    let scores = load_scores(scores)?;
    Ok(noun_stats_from_nouns(&nouns, &scores)?)
}

pub fn semantic(a: SemanticArgs) -> Result<()> {
    ensure!(
        (0.0..100.0).contains(&a.percentile),
        "percentile {} outside [0, 100)",
        a.percentile
    );
    let lexicon = match (&a.lexicon, &a.rules) {
        (Some(n), Some(r)) => Lexicon::load(n, r)?,
        _ => Lexicon::bundled(),
    };
    let full_a = set_stats(&a.captions_a, &a.scores_a, a.tagged, &lexicon)?;
    let full_b = set_stats(&a.captions_b, &a.scores_b, a.tagged, &lexicon)?;
    let kept_a = filter_percentile(&full_a, a.percentile)?;
    let kept_b = filter_percentile(&full_b, a.percentile)?;
    create_dir(&a.out)?;
    write_noun_stats(&a.out.join("nouns_a.csv"), &kept_a)?;
    write_noun_stats(&a.out.join("nouns_b.csv"), &kept_b)?;
    eprintln!(
        "set A: {} of {} nouns kept; set B: {} of {} nouns kept",
        kept_a.len(),
        full_a.len(),
        kept_b.len(),
        full_b.len()
    );
    let cmp = match_and_correlate(&kept_a, &kept_b)?;
    write_noun_table(&cmp.pairs, &a.out.join("noun_report.csv"))?;
    if a.plot {
        write_noun_plot(&cmp.pairs, &a.out.join("noun_report.svg"), ("set A", "set B"))?;
    }
    println!("matched,spearman,r_squared");
    println!("{},{},{}", cmp.matched(), cmp.spearman, cmp.r_squared);
    Ok(())
}

pub fn gradcheck(a: GradcheckArgs) -> Result<()> {
    let mut rows: Vec<(String, f64, usize, f64)> = op_suite(a.seed, a.step)?
        .into_iter()
        .map(|r| (r.op, r.max_rel_error, r.entries, OP_TOLERANCE))
        .collect();
    if !a.ops_only {
        let r = model_grad_check(&ModelConfig::tiny(), 2, a.seed, a.step)?;
        rows.push((r.op, r.max_rel_error, r.entries, MODEL_TOLERANCE));
    }
    println!("op,max_rel_error,entries,status");
    let mut failures = Vec::new();
    for (op, err, entries, tol) in &rows {
        let ok = *err < *tol;
        println!("{op},{err:e},{entries},{}", if ok { "PASS" } else { "FAIL" });
        if !ok {
            failures.push(op.as_str());
        }
    }
    ensure!(failures.is_empty(), "gradient check failed for {}", failures.join(", "));
    eprintln!("all {} gradient checks passed", rows.len());
    Ok(())
}
