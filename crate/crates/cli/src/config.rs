//! Run configuration: a line-oriented `key = value` file plus flag overrides.
//!
//! Blank lines and lines starting with `#` are ignored. Relative paths in the
//! file resolve against the file's directory; relative paths given as flags
//! resolve against the working directory. The config hash is the SHA-256 of
//! the canonical rendering (every key except `out_dir`, in fixed order, with
//! the values as written), so neither moving a config file nor redirecting
//! its outputs changes it.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use fakenews_core::attention::AttentionMode;
use fakenews_core::corpus::{Label, TrainRatio};
use fakenews_core::metrics::ablation::VariantName;
use fakenews_core::training::TrainConfig;
use sha2::{Digest, Sha256};

/// Every recognised key with its default ("" means unset).
const KEYS: &[(&str, &str)] = &[
    ("manifest", ""),
    ("image_root", ""),
    ("lexicon", ""),
    ("text_provider", "toy-text"),
    ("image_provider", "toy-image"),
    ("text_cache", ""),
    ("image_cache", ""),
    ("out_dir", "runs"),
    ("split_seed", "0"),
    ("train_seed", "0"),
    ("train_ratio", "4/5"),
    ("stratified", "false"),
    ("batch_size", "16"),
    ("epochs", "10"),
    ("learning_rate", "1e-4"),
    ("adam_beta1", "0.9"),
    ("adam_beta2", "0.999"),
    ("adam_eps", "1e-8"),
    ("positive_class", "fake"),
    ("attention_mode", "sequence"),
    ("tie_title", "false"),
    ("variants", "full,T,V,E,S"),
];

const PATH_KEYS: &[&str] = &["manifest", "image_root", "lexicon", "text_cache", "image_cache", "out_dir"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TextProvider {
    Toy,
    Precomputed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImageProvider {
    Toy,
    Precomputed,
}

/// Flag overrides; each one replaces the config file value of the same key.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    /// JSON Lines article manifest.
    #[arg(long)]
    pub manifest: Option<String>,
    /// Directory that image_ref paths are relative to (default: the manifest's directory).
    #[arg(long)]
    pub image_root: Option<String>,
    /// Emotion lexicon (TSV).
    #[arg(long)]
    pub lexicon: Option<String>,
    /// toy-text or precomputed.
    #[arg(long)]
    pub text_provider: Option<String>,
    /// toy-image or precomputed.
    #[arg(long)]
    pub image_provider: Option<String>,
    /// Embedding cache for the precomputed text provider.
    #[arg(long)]
    pub text_cache: Option<String>,
    /// Embedding cache for the precomputed image provider.
    #[arg(long)]
    pub image_cache: Option<String>,
    /// Directory for all outputs (created if absent).
    #[arg(long)]
    pub out_dir: Option<String>,
    /// Seed of the train/test split.
    #[arg(long)]
    pub split_seed: Option<String>,
    /// Seed of parameter initialisation and batch shuffling.
    #[arg(long)]
    pub train_seed: Option<String>,
    /// Train fraction, e.g. 4/5, 8:2 or 0.8.
    #[arg(long)]
    pub train_ratio: Option<String>,
    /// Split each label separately (true/false).
    #[arg(long)]
    pub stratified: Option<String>,
    #[arg(long)]
    pub batch_size: Option<String>,
    #[arg(long)]
    pub epochs: Option<String>,
    #[arg(long)]
    pub learning_rate: Option<String>,
    #[arg(long)]
    pub adam_beta1: Option<String>,
    #[arg(long)]
    pub adam_beta2: Option<String>,
    #[arg(long)]
    pub adam_eps: Option<String>,
    /// Label scored as positive for precision/recall/F1: fake or true.
    #[arg(long)]
    pub positive_class: Option<String>,
    /// sequence or scalar.
    #[arg(long)]
    pub attention_mode: Option<String>,
    /// Share the body projection with the title (true/false).
    #[arg(long)]
    pub tie_title: Option<String>,
    /// Comma-separated ablation variants from full, T, V, E, S.
    #[arg(long)]
    pub variants: Option<String>,
    /// Generic override, repeatable: --set key=value.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

impl Overrides {
    fn pairs(&self) -> Result<Vec<(String, String)>> {
        let named = [
            ("manifest", &self.manifest),
            ("image_root", &self.image_root),
            ("lexicon", &self.lexicon),
            ("text_provider", &self.text_provider),
            ("image_provider", &self.image_provider),
            ("text_cache", &self.text_cache),
            ("image_cache", &self.image_cache),
            ("out_dir", &self.out_dir),
            ("split_seed", &self.split_seed),
            ("train_seed", &self.train_seed),
            ("train_ratio", &self.train_ratio),
            ("stratified", &self.stratified),
            ("batch_size", &self.batch_size),
            ("epochs", &self.epochs),
            ("learning_rate", &self.learning_rate),
            ("adam_beta1", &self.adam_beta1),
            ("adam_beta2", &self.adam_beta2),
            ("adam_eps", &self.adam_eps),
            ("positive_class", &self.positive_class),
            ("attention_mode", &self.attention_mode),
            ("tie_title", &self.tie_title),
            ("variants", &self.variants),
        ];
        let mut out: Vec<(String, String)> = Vec::new();
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .with_context(|| format!("--set expects KEY=VALUE, got {kv:?}"))?;
            out.push((k.trim().to_string(), v.trim().to_string()));
        }
        // Named flags come last so they win over --set.
        out.extend(
            named
                .iter()
                .filter_map(|(k, v)| v.as_ref().map(|v| (k.to_string(), v.clone()))),
        );
        Ok(out)
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub manifest: Option<PathBuf>,
    pub image_root: Option<PathBuf>,
    pub lexicon: Option<PathBuf>,
    pub text_provider: TextProvider,
    pub image_provider: ImageProvider,
    pub text_cache: Option<PathBuf>,
    pub image_cache: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub split_seed: u64,
    pub train_seed: u64,
    pub train_ratio: TrainRatio,
    pub stratified: bool,
    /// Optimiser settings; `train.seed` is `train_seed`.
    pub train: TrainConfig,
    pub positive_class: Label,
    pub attention_mode: AttentionMode,
    pub tie_title: bool,
    pub variants: Vec<VariantName>,
    canonical: String,
    hash: String,
}

struct Value {
    text: String,
    base: Option<PathBuf>,
}

impl RunConfig {
    /// Defaults, then the config file (if any), then the overrides.
    pub fn load(file: Option<&Path>, overrides: &Overrides) -> Result<Self> {
        let mut values: BTreeMap<&'static str, Value> = KEYS
            .iter()
            .map(|(k, v)| {
                (
                    *k,
                    Value {
                        text: v.to_string(),
                        base: None,
                    },
                )
            })
            .collect();
        if let Some(path) = file {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("cannot read config file {}", path.display()))?;
            let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
            for (i, line) in text.lines().enumerate() {
                let line = line.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let (k, v) = line.split_once('=').with_context(|| {
                    format!("{}:{}: expected `key = value`", path.display(), i + 1)
                })?;
                set(&mut values, k.trim(), v.trim(), Some(base.clone()))
                    .with_context(|| format!("{}:{}", path.display(), i + 1))?;
            }
        }
        for (k, v) in overrides.pairs()? {
            set(&mut values, &k, &v, None)?;
        }
        Self::resolve(&values)
    }

    fn resolve(values: &BTreeMap<&'static str, Value>) -> Result<Self> {
        let raw = |k: &str| values[k].text.as_str();
        let path = |k: &str| -> Option<PathBuf> {
            let v = &values[k];
            (!v.text.is_empty()).then(|| match &v.base {
                Some(base) => base.join(&v.text),
                None => PathBuf::from(&v.text),
            })
        };
        let parse = |k: &str| -> Result<String> { Ok(raw(k).to_string()) };
        fn typed<T: std::str::FromStr>(k: &str, v: &str) -> Result<T>
        where
            T::Err: std::fmt::Display,
        {
            v.parse::<T>()
                .map_err(|e| anyhow::anyhow!("invalid value {v:?} for {k}: {e}"))
        }

        let text_provider = match parse("text_provider")?.as_str() {
            "toy-text" => TextProvider::Toy,
            "precomputed" => TextProvider::Precomputed,
            other => bail!("invalid value {other:?} for text_provider (expected toy-text or precomputed)"),
        };
        let image_provider = match parse("image_provider")?.as_str() {
            "toy-image" => ImageProvider::Toy,
            "precomputed" => ImageProvider::Precomputed,
            other => bail!("invalid value {other:?} for image_provider (expected toy-image or precomputed)"),
        };
        let train_seed: u64 = typed("train_seed", raw("train_seed"))?;
        let train = TrainConfig {
            batch_size: typed("batch_size", raw("batch_size"))?,
            epochs: typed("epochs", raw("epochs"))?,
            learning_rate: typed("learning_rate", raw("learning_rate"))?,
            adam_beta1: typed("adam_beta1", raw("adam_beta1"))?,
            adam_beta2: typed("adam_beta2", raw("adam_beta2"))?,
            adam_eps: typed("adam_eps", raw("adam_eps"))?,
            seed: train_seed,
        };
        train.validate()?;
        let variants = raw("variants")
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| typed::<VariantName>("variants", s))
            .collect::<Result<Vec<_>>>()?;

        let mut canonical = String::new();
        let mut hashed = String::new();
        for (k, _) in KEYS {
            let line = format!("{k} = {}\n", raw(k));
            canonical.push_str(&line);
            if *k != "out_dir" {
                hashed.push_str(&line);
            }
        }
        let hash = format!("{:x}", Sha256::digest(hashed.as_bytes()));

        Ok(RunConfig {
            manifest: path("manifest"),
            image_root: path("image_root"),
            lexicon: path("lexicon"),
            text_provider,
            image_provider,
            text_cache: path("text_cache"),
            image_cache: path("image_cache"),
            out_dir: path("out_dir").unwrap_or_else(|| PathBuf::from("runs")),
            split_seed: typed("split_seed", raw("split_seed"))?,
            train_seed,
            train_ratio: typed("train_ratio", raw("train_ratio"))?,
            stratified: typed("stratified", raw("stratified"))?,
            train,
            positive_class: typed("positive_class", raw("positive_class"))?,
            attention_mode: typed("attention_mode", raw("attention_mode"))?,
            tie_title: typed("tie_title", raw("tie_title"))?,
            variants,
            canonical,
            hash,
        })
    }

    /// Hex SHA-256 of [`RunConfig::canonical`].
    pub fn hash(&self) -> &str {
        &self.hash
    }

    /// `key = value` lines for every key, in fixed order.
    pub fn canonical(&self) -> &str {
        &self.canonical
    }

    /// The manifest's directory unless `image_root` is set.
    pub fn image_root(&self) -> Option<PathBuf> {
        self.image_root.clone().or_else(|| {
            self.manifest
                .as_ref()
                .map(|m| m.parent().map(Path::to_path_buf).unwrap_or_default())
        })
    }

    /// Provenance attached to every artifact.
    pub fn provenance(&self) -> serde_json::Map<String, serde_json::Value> {
        let mut m = serde_json::Map::new();
        m.insert("config_hash".into(), self.hash.clone().into());
        m.insert("split_seed".into(), self.split_seed.into());
        m.insert("train_seed".into(), self.train_seed.into());
        m
    }

    pub fn provenance_line(&self) -> String {
        format!(
            "config_hash {} | split_seed {} | train_seed {}",
            self.hash, self.split_seed, self.train_seed
        )
    }

    pub fn require(&self, what: &str, p: &Option<PathBuf>) -> Result<PathBuf> {
        match p {
            Some(p) if p.exists() => Ok(p.clone()),
            Some(p) => bail!("{what} {} does not exist", p.display()),
            None => bail!("no {what} configured (set `{what} = ...` or --{})", what.replace('_', "-")),
        }
    }
}

fn set(values: &mut BTreeMap<&'static str, Value>, key: &str, value: &str, base: Option<PathBuf>) -> Result<()> {
    let Some((k, _)) = KEYS.iter().find(|(k, _)| *k == key) else {
        let known: Vec<&str> = KEYS.iter().map(|(k, _)| *k).collect();
        bail!("unknown config key {key:?} (known: {})", known.join(", "));
    };
    let base = if PATH_KEYS.contains(k) { base } else { None };
    values.insert(
        k,
        Value {
            text: value.to_string(),
            base,
        },
    );
    Ok(())
}
