use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use fakenews_core::checkpoint;
use fakenews_core::corpus::{
    dataset_stats, is_complete, load_manifest, reference_stats, split, split_stratified, Article, DatasetSplit,
    DatasetStats,
};
use fakenews_core::emotion::{extract_emotion, EmotionLexicon, EMOTION_DIM};
use fakenews_core::encoders::{
    embed_image, embed_text, Channel, EmbedKey, EmbeddingCache, ImageEmbedder, PrecomputedProvider, TextEmbedder,
    ToyImageEmbedder, ToyTextEmbedder,
};
use fakenews_core::features::FeatureExtractor;
use fakenews_core::metrics::ablation::{run_ablation, AblationTable, AblationVariant};
use fakenews_core::metrics::{evaluate, MetricsReport};
use fakenews_core::model::{ArticleFeatures, ModelContract, ModelParams};
use fakenews_core::training::train;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::config::{ImageProvider, RunConfig, TextProvider};

pub const SPLIT_FILE: &str = "split.json";
pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const HISTORY_FILE: &str = "history.jsonl";
pub const METRICS_JSON: &str = "metrics.json";
pub const METRICS_TEXT: &str = "metrics.txt";
pub const PREDICTIONS_FILE: &str = "predictions.jsonl";
pub const ABLATION_JSON: &str = "ablation.json";
pub const ABLATION_TEXT: &str = "ablation.txt";
pub const REPORT_FILE: &str = "report.txt";
pub const INGEST_FILE: &str = "ingest.json";
pub const TEXT_CACHE_FILE: &str = "text_embeddings.fnec";
pub const IMAGE_CACHE_FILE: &str = "image_embeddings.fnec";
pub const EMOTION_FILE: &str = "emotion_features.json";
pub const CONFIG_FILE: &str = "run_config.txt";

/// Outcome of a command that can partially fail.
pub enum Status {
    Ok,
    /// Finished, but some articles could not be processed.
    Partial,
}

struct Providers {
    text: Box<dyn TextEmbedder>,
    image: Box<dyn ImageEmbedder>,
    /// Present for the precomputed image provider, to decide completeness.
    image_cache: Option<EmbeddingCache>,
}

fn providers(cfg: &RunConfig) -> Result<Providers> {
    let text: Box<dyn TextEmbedder> = match cfg.text_provider {
        TextProvider::Toy => Box::new(ToyTextEmbedder::default()),
        TextProvider::Precomputed => {
            let path = cfg.require("text_cache", &cfg.text_cache)?;
            Box::new(PrecomputedProvider::load(&path).with_context(|| format!("loading {}", path.display()))?)
        }
    };
    let (image, image_cache): (Box<dyn ImageEmbedder>, _) = match cfg.image_provider {
        ImageProvider::Toy => (Box::new(ToyImageEmbedder), None),
        ImageProvider::Precomputed => {
            let path = cfg.require("image_cache", &cfg.image_cache)?;
            let p = PrecomputedProvider::load(&path).with_context(|| format!("loading {}", path.display()))?;
            let cache = p.cache().clone();
            (Box::new(p), Some(cache))
        }
    };
    Ok(Providers {
        text,
        image,
        image_cache,
    })
}

fn prepare_out_dir(cfg: &RunConfig) -> Result<()> {
    std::fs::create_dir_all(&cfg.out_dir)
        .with_context(|| format!("cannot create output directory {}", cfg.out_dir.display()))?;
    write(
        &cfg.out_dir.join(CONFIG_FILE),
        format!("# config_hash {}\n{}", cfg.hash(), cfg.canonical()),
    )
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, contents).with_context(|| format!("cannot write {}", path.display()))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    write(path, serde_json::to_string_pretty(value)? + "\n")
}

fn with_provenance(cfg: &RunConfig, body: Value) -> Value {
    let mut m = cfg.provenance();
    if let Value::Object(o) = body {
        m.extend(o);
    }
    Value::Object(m)
}

fn load_articles(cfg: &RunConfig) -> Result<Vec<Article>> {
    let manifest = cfg.require("manifest", &cfg.manifest)?;
    Ok(load_manifest(&manifest)?)
}

fn load_lexicon(cfg: &RunConfig) -> Result<EmotionLexicon> {
    let path = cfg.require("lexicon", &cfg.lexicon)?;
    Ok(EmotionLexicon::load(path)?)
}

fn image_root(cfg: &RunConfig) -> Result<PathBuf> {
    cfg.require("image_root", &cfg.image_root())
}

fn stats_json(s: &DatasetStats) -> Value {
    json!({"fake": s.fake_count, "true": s.true_count, "overall": s.overall})
}

fn stats_line(s: &DatasetStats) -> String {
    format!("fake {} / true {} / overall {}", s.fake_count, s.true_count, s.overall)
}

pub fn ingest(cfg: &RunConfig) -> Result<Status> {
    let articles = load_articles(cfg)?;
    prepare_out_dir(cfg)?;
    let root = cfg.image_root().filter(|p| p.exists());
    let complete: Vec<Article> = match &root {
        Some(root) => articles.iter().filter(|a| is_complete(a, root)).cloned().collect(),
        None => Vec::new(),
    };
    let all = dataset_stats(&articles);
    let kept = dataset_stats(&complete);
    println!("manifest: {}", stats_line(&all));
    match &root {
        Some(r) => println!(
            "complete (body and readable image under {}): {}; removed {}",
            r.display(),
            stats_line(&kept),
            all.overall - kept.overall
        ),
        None => println!("image root not found: every article counts as incomplete"),
    }

    let mut by_dataset: BTreeMap<String, Vec<Article>> = BTreeMap::new();
    for a in &articles {
        by_dataset.entry(a.dataset.clone()).or_default().push(a.clone());
    }
    let mut datasets = Map::new();
    for (name, group) in &by_dataset {
        let s = dataset_stats(group);
        let mut entry = json!({"stats": stats_json(&s)});
        match reference_stats(name) {
            Some(r) => {
                let matches = r == s;
                println!(
                    "{name}: {} (reference {}: {})",
                    stats_line(&s),
                    stats_line(&r),
                    if matches { "match" } else { "differs" }
                );
                entry["reference"] = stats_json(&r);
                entry["matches_reference"] = matches.into();
            }
            None => println!("{name}: {}", stats_line(&s)),
        }
        datasets.insert(name.clone(), entry);
    }
    write_json(
        &cfg.out_dir.join(INGEST_FILE),
        &with_provenance(
            cfg,
            json!({
                "manifest": stats_json(&all),
                "complete": stats_json(&kept),
                "removed_incomplete": all.overall - kept.overall,
                "datasets": datasets,
            }),
        ),
    )?;
    Ok(Status::Ok)
}

pub fn extract(cfg: &RunConfig) -> Result<Status> {
    let articles = load_articles(cfg)?;
    let lexicon = load_lexicon(cfg)?;
    let p = providers(cfg)?;
    let root = match cfg.image_provider {
        ImageProvider::Toy => image_root(cfg)?,
        ImageProvider::Precomputed => cfg.image_root().unwrap_or_default(),
    };
    prepare_out_dir(cfg)?;

    let meta: BTreeMap<String, String> = cfg
        .provenance()
        .into_iter()
        .map(|(k, v)| (k, v.as_str().map_or_else(|| v.to_string(), str::to_string)))
        .collect();
    let mut text_cache = EmbeddingCache::new(p.text.name(), p.text.d_enc());
    text_cache.meta = meta.clone();
    let mut image_cache = EmbeddingCache::new(p.image.name(), p.image.d_enc());
    image_cache.meta = meta;
    let mut emotion = BTreeMap::new();
    let mut failures: Vec<(String, String)> = Vec::new();

    for a in &articles {
        let id = a.id.as_str();
        for (channel, text) in [(Channel::Title, &a.title), (Channel::Body, &a.body)] {
            match embed_text(p.text.as_ref(), EmbedKey::new(id, channel), text) {
                Ok(seq) => text_cache.insert(id, channel, seq)?,
                Err(e) => failures.push((a.id.clone(), e.to_string())),
            }
        }
        match embed_image(p.image.as_ref(), EmbedKey::new(id, Channel::Image), &a.image_path(&root)) {
            Ok(seq) => image_cache.insert(id, Channel::Image, seq)?,
            Err(e) => failures.push((a.id.clone(), e.to_string())),
        }
        emotion.insert(a.id.clone(), extract_emotion(&a.body, &lexicon).combined());
    }

    text_cache.save(cfg.out_dir.join(TEXT_CACHE_FILE))?;
    image_cache.save(cfg.out_dir.join(IMAGE_CACHE_FILE))?;
    write_json(
        &cfg.out_dir.join(EMOTION_FILE),
        &with_provenance(cfg, json!({"dim": EMOTION_DIM, "features": emotion})),
    )?;
    println!(
        "extracted {} articles: {} text records, {} image records, {} emotion rows",
        articles.len(),
        text_cache.len(),
        image_cache.len(),
        emotion.len()
    );
    if failures.is_empty() {
        return Ok(Status::Ok);
    }
    eprintln!("{} failure(s):", failures.len());
    for (id, msg) in &failures {
        eprintln!("  {id}: {msg}");
    }
    Ok(Status::Partial)
}

struct Prepared {
    split: DatasetSplit,
    train: Vec<ArticleFeatures>,
    test: Vec<ArticleFeatures>,
    contract: ModelContract,
}

/// Loads, filters, splits and featurises the corpus described by `cfg`.
fn prepare(cfg: &RunConfig) -> Result<Prepared> {
    let articles = load_articles(cfg)?;
    let lexicon = load_lexicon(cfg)?;
    let p = providers(cfg)?;
    let root = match cfg.image_provider {
        ImageProvider::Toy => image_root(cfg)?,
        ImageProvider::Precomputed => cfg.image_root().unwrap_or_default(),
    };
    let usable: Vec<Article> = articles
        .iter()
        .filter(|a| match &p.image_cache {
            None => is_complete(a, &root),
            Some(c) => !a.body.trim().is_empty() && c.get(&a.id, Channel::Image).is_some(),
        })
        .cloned()
        .collect();
    if usable.len() < articles.len() {
        log::warn!("skipping {} incomplete article(s)", articles.len() - usable.len());
    }
    let split = if cfg.stratified {
        split_stratified(&usable, cfg.train_ratio, cfg.split_seed)?
    } else {
        split(&usable, cfg.train_ratio, cfg.split_seed)?
    };
    let fx = FeatureExtractor::new(p.text.as_ref(), p.image.as_ref(), &lexicon, &root);
    let train = fx.extract_all(split.select(&usable, &split.train_ids)?)?;
    let test = fx.extract_all(split.select(&usable, &split.test_ids)?)?;
    let mut contract = fx.contract();
    contract.attention_mode = cfg.attention_mode;
    contract.tie_title = cfg.tie_title;
    Ok(Prepared {
        split,
        train,
        test,
        contract,
    })
}

fn write_split(cfg: &RunConfig, split: &DatasetSplit) -> Result<()> {
    write_json(
        &cfg.out_dir.join(SPLIT_FILE),
        &with_provenance(cfg, json!({"split": split})),
    )
}

pub fn train_cmd(cfg: &RunConfig) -> Result<Status> {
    let data = prepare(cfg)?;
    prepare_out_dir(cfg)?;
    write_split(cfg, &data.split)?;
    let started = Instant::now();
    let model = ModelParams::init(data.contract.clone(), cfg.train_seed);
    let (model, history) = train(model, &data.train, &cfg.train)?;

    let mut meta: BTreeMap<String, Value> = cfg.provenance().into_iter().collect();
    meta.insert("train_config".into(), serde_json::to_value(&cfg.train)?);
    checkpoint::save(cfg.out_dir.join(CHECKPOINT_FILE), &model, &meta)?;
    write(&cfg.out_dir.join(HISTORY_FILE), history.to_jsonl(&cfg.provenance())?)?;

    match history.epochs.last() {
        Some(last) => println!(
            "trained {} epochs on {} articles: loss {:.4}, train accuracy {:.3}",
            history.epochs.len(),
            data.train.len(),
            last.mean_loss,
            last.train_accuracy
        ),
        None => println!("0 epochs: checkpoint holds the initialisation"),
    }
    log::info!("training took {:.1}s", started.elapsed().as_secs_f64());
    println!("wrote {}", cfg.out_dir.join(CHECKPOINT_FILE).display());
    Ok(Status::Ok)
}

#[derive(Serialize, Deserialize)]
struct MetricsFile {
    config_hash: String,
    split_seed: u64,
    train_seed: u64,
    checkpoint_meta: BTreeMap<String, Value>,
    test_size: usize,
    report: MetricsReport,
}

pub fn evaluate_cmd(cfg: &RunConfig, checkpoint_path: Option<&Path>) -> Result<Status> {
    let path = checkpoint_path
        .map(Path::to_path_buf)
        .unwrap_or_else(|| cfg.out_dir.join(CHECKPOINT_FILE));
    if !path.exists() {
        bail!("checkpoint {} does not exist", path.display());
    }
    let data = prepare(cfg)?;
    let (model, header) = checkpoint::load(&path).with_context(|| format!("loading {}", path.display()))?;
    checkpoint::check_contract(&data.contract, &header.contract)
        .context("checkpoint does not match the configured model")?;
    prepare_out_dir(cfg)?;

    let eval = evaluate(&model, &data.test, cfg.positive_class, "full")?;
    let file = MetricsFile {
        config_hash: cfg.hash().to_string(),
        split_seed: cfg.split_seed,
        train_seed: cfg.train_seed,
        checkpoint_meta: header.meta.clone(),
        test_size: data.test.len(),
        report: eval.report.clone(),
    };
    write_json(&cfg.out_dir.join(METRICS_JSON), &file)?;
    let text = format!("{}{}\n", eval.report.render_text(), cfg.provenance_line());
    write(&cfg.out_dir.join(METRICS_TEXT), &text)?;

    let mut lines = String::new();
    for p in &eval.predictions {
        let mut obj = match serde_json::to_value(p)? {
            Value::Object(o) => o,
            _ => unreachable!("prediction serialises to an object"),
        };
        obj.extend(cfg.provenance());
        let _ = writeln!(lines, "{}", serde_json::to_string(&obj)?);
    }
    write(&cfg.out_dir.join(PREDICTIONS_FILE), lines)?;
    print!("{text}");
    Ok(Status::Ok)
}

#[derive(Serialize, Deserialize)]
struct AblationFile {
    config_hash: String,
    split_seed: u64,
    train_seed: u64,
    positive_class: String,
    table: AblationTable,
}

pub fn ablate(cfg: &RunConfig) -> Result<Status> {
    if cfg.variants.is_empty() {
        bail!("no ablation variants configured");
    }
    let data = prepare(cfg)?;
    prepare_out_dir(cfg)?;
    write_split(cfg, &data.split)?;
    let widths = data.contract.widths();
    let variants: Vec<AblationVariant> = cfg.variants.iter().map(|v| AblationVariant::new(*v, widths)).collect();
    let table = run_ablation(
        &data.train,
        &data.test,
        &data.contract,
        cfg.train_seed,
        &cfg.train,
        &variants,
        cfg.positive_class,
    )?;
    let text = format!(
        "{}positive class: {}\n{}\n",
        table.render_text(),
        cfg.positive_class,
        cfg.provenance_line()
    );
    write(&cfg.out_dir.join(ABLATION_TEXT), &text)?;
    write_json(
        &cfg.out_dir.join(ABLATION_JSON),
        &AblationFile {
            config_hash: cfg.hash().to_string(),
            split_seed: cfg.split_seed,
            train_seed: cfg.train_seed,
            positive_class: cfg.positive_class.to_string(),
            table,
        },
    )?;
    print!("{text}");
    Ok(Status::Ok)
}

/// Renders the metrics and ablation tables already present in `out_dir`.
pub fn report(cfg: &RunConfig) -> Result<Status> {
    let read = |name: &str| -> Result<Option<String>> {
        let p = cfg.out_dir.join(name);
        if p.exists() {
            Ok(Some(std::fs::read_to_string(&p).with_context(|| format!("cannot read {}", p.display()))?))
        } else {
            Ok(None)
        }
    };
    let mut out = String::new();
    if let Some(s) = read(METRICS_JSON)? {
        let m: MetricsFile = serde_json::from_str(&s).context("parsing metrics.json")?;
        let _ = writeln!(out, "== Detection performance (test set, n = {})", m.test_size);
        out.push_str(&m.report.render_text());
        let _ = writeln!(
            out,
            "config_hash {} | split_seed {} | train_seed {}\n",
            m.config_hash, m.split_seed, m.train_seed
        );
    }
    if let Some(s) = read(ABLATION_JSON)? {
        let a: AblationFile = serde_json::from_str(&s).context("parsing ablation.json")?;
        let _ = writeln!(out, "== Ablation (positive class: {})", a.positive_class);
        out.push_str(&a.table.render_text());
        let _ = writeln!(
            out,
            "config_hash {} | split_seed {} | train_seed {}",
            a.config_hash, a.split_seed, a.train_seed
        );
    }
    if out.is_empty() {
        bail!(
            "nothing to report in {}: run `evaluate` or `ablate` first",
            cfg.out_dir.display()
        );
    }
    write(&cfg.out_dir.join(REPORT_FILE), &out)?;
    print!("{out}");
    Ok(Status::Ok)
}
