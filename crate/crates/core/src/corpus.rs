//! Article manifests, completeness filtering, train/test splits and label
//! statistics.
//!
//! A manifest is JSON Lines, one article per line, with exactly the fields
//! `id`, `title`, `body`, `image_ref`, `label` and `dataset`. Image references
//! are resolved relative to an image root directory.

use std::collections::HashSet;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SeededRng;

/// Binary ground truth. Fake is 0, true is 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "i64", into = "u8")]
pub enum Label {
    Fake = 0,
    True = 1,
}

impl Label {
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Label> {
        match i {
            0 => Some(Label::Fake),
            1 => Some(Label::True),
            _ => None,
        }
    }

    pub fn other(self) -> Label {
        match self {
            Label::Fake => Label::True,
            Label::True => Label::Fake,
        }
    }
}

impl TryFrom<i64> for Label {
    type Error = Error;

    fn try_from(v: i64) -> Result<Self> {
        match v {
            0 => Ok(Label::Fake),
            1 => Ok(Label::True),
            other => Err(Error::InvalidLabel(other)),
        }
    }
}

impl From<Label> for u8 {
    fn from(l: Label) -> u8 {
        l as u8
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(match self {
            Label::Fake => "fake",
            Label::True => "true",
        })
    }
}

/// Accepts `fake`/`0` and `true`/`real`/`1`, case-insensitively.
impl FromStr for Label {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "fake" | "0" => Ok(Label::Fake),
            "true" | "real" | "1" => Ok(Label::True),
            other => Err(Error::InvalidArgument(format!("unknown label {other:?} (expected fake or true)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Article {
    pub id: String,
    pub title: String,
    pub body: String,
    pub image_ref: String,
    pub label: Label,
    pub dataset: String,
}

impl Article {
    pub fn image_path(&self, image_root: &Path) -> PathBuf {
        image_root.join(&self.image_ref)
    }
}

/// Reads a JSON Lines manifest. Blank lines are skipped; any other line that
/// does not parse is reported with its 1-based line number.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<Vec<Article>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_manifest(BufReader::new(file), path)
}

pub fn parse_manifest(reader: impl BufRead, origin: &Path) -> Result<Vec<Article>> {
    let mut articles = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(origin, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let article: Article = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: origin.to_path_buf(),
            line: idx + 1,
            message: e.to_string(),
        })?;
        articles.push(article);
    }
    Ok(articles)
}

pub fn write_manifest(path: impl AsRef<Path>, articles: &[Article]) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    for a in articles {
        out.push_str(&serde_json::to_string(a)?);
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Keeps articles with a non-empty body whose image can be opened.
/// Empty titles are allowed.
pub fn filter_complete(articles: &[Article], image_root: &Path) -> Vec<Article> {
    articles
        .iter()
        .filter(|a| is_complete(a, image_root))
        .cloned()
        .collect()
}

pub fn is_complete(article: &Article, image_root: &Path) -> bool {
    if article.body.trim().is_empty() || article.image_ref.is_empty() {
        return false;
    }
    let path = article.image_path(image_root);
    path.is_file() && File::open(&path).is_ok()
}

/// Train fraction kept as an exact rational so `floor(ratio * n)` has no
/// floating-point surprises.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct TrainRatio {
    num: u64,
    den: u64,
}

impl TrainRatio {
    pub fn new(num: u64, den: u64) -> Result<Self> {
        if den == 0 || num == 0 || num >= den {
            return Err(Error::InvalidArgument(format!(
                "train ratio {num}/{den} must lie strictly between 0 and 1"
            )));
        }
        let g = gcd(num, den);
        Ok(TrainRatio {
            num: num / g,
            den: den / g,
        })
    }

    pub fn train_count(&self, n: usize) -> usize {
        ((n as u128 * self.num as u128) / self.den as u128) as usize
    }

    pub fn as_f64(&self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

impl Default for TrainRatio {
    fn default() -> Self {
        TrainRatio { num: 4, den: 5 }
    }
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

impl FromStr for TrainRatio {
    type Err = Error;

    /// Accepts `"4/5"`, `"8:2"` (train:test) or a decimal such as `"0.8"`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::InvalidArgument(format!("cannot parse train ratio {s:?}"));
        let int = |p: &str| p.trim().parse::<u64>().map_err(|_| bad());
        if let Some((a, b)) = s.split_once('/') {
            return TrainRatio::new(int(a)?, int(b)?);
        }
        if let Some((a, b)) = s.split_once(':') {
            let (a, b) = (int(a)?, int(b)?);
            return TrainRatio::new(a, a + b);
        }
        let (whole, frac) = s.split_once('.').unwrap_or((s, ""));
        if frac.len() > 18 || !frac.chars().all(|c| c.is_ascii_digit()) {
            return Err(bad());
        }
        let whole = if whole.is_empty() { 0 } else { int(whole)? };
        let den = 10u64.pow(frac.len() as u32);
        let frac_num = if frac.is_empty() { 0 } else { int(frac)? };
        let num = whole
            .checked_mul(den)
            .and_then(|w| w.checked_add(frac_num))
            .ok_or_else(bad)?;
        TrainRatio::new(num, den)
    }
}

impl TryFrom<String> for TrainRatio {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<TrainRatio> for String {
    fn from(r: TrainRatio) -> String {
        r.to_string()
    }
}

impl fmt::Display for TrainRatio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.num, self.den)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub seed: u64,
    pub ratio: TrainRatio,
    #[serde(default)]
    pub stratified: bool,
    pub train_ids: Vec<String>,
    pub test_ids: Vec<String>,
}

impl DatasetSplit {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    /// Selects the articles of one side of the split, in split order.
    pub fn select<'a>(&self, articles: &'a [Article], ids: &[String]) -> Result<Vec<&'a Article>> {
        let by_id: std::collections::HashMap<&str, &Article> =
            articles.iter().map(|a| (a.id.as_str(), a)).collect();
        ids.iter()
            .map(|id| {
                by_id.get(id.as_str()).copied().ok_or_else(|| {
                    Error::InvalidArgument(format!("split references unknown article {id:?}"))
                })
            })
            .collect()
    }
}

/// Seeded shuffle of the articles followed by a prefix/suffix cut at
/// `floor(ratio * n)`.
pub fn split(articles: &[Article], ratio: TrainRatio, seed: u64) -> Result<DatasetSplit> {
    check_splittable(articles)?;
    let mut ids: Vec<String> = articles.iter().map(|a| a.id.clone()).collect();
    SeededRng::new(seed).shuffle(&mut ids);
    let test_ids = ids.split_off(ratio.train_count(ids.len()));
    Ok(DatasetSplit {
        seed,
        ratio,
        stratified: false,
        train_ids: ids,
        test_ids,
    })
}

/// Label-stratified variant: each class is shuffled and cut separately (fake
/// first, then true, both from one generator), so the train size is the sum of
/// the per-class floors rather than `floor(ratio * n)`.
pub fn split_stratified(articles: &[Article], ratio: TrainRatio, seed: u64) -> Result<DatasetSplit> {
    check_splittable(articles)?;
    let mut rng = SeededRng::new(seed);
    let mut train_ids = Vec::new();
    let mut test_ids = Vec::new();
    for label in [Label::Fake, Label::True] {
        let mut ids: Vec<String> = articles
            .iter()
            .filter(|a| a.label == label)
            .map(|a| a.id.clone())
            .collect();
        rng.shuffle(&mut ids);
        let test = ids.split_off(ratio.train_count(ids.len()));
        train_ids.extend(ids);
        test_ids.extend(test);
    }
    Ok(DatasetSplit {
        seed,
        ratio,
        stratified: true,
        train_ids,
        test_ids,
    })
}

fn check_splittable(articles: &[Article]) -> Result<()> {
    if articles.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 articles to split, got {}",
            articles.len()
        )));
    }
    let mut seen = HashSet::new();
    for a in articles {
        if !seen.insert(a.id.as_str()) {
            return Err(Error::InvalidArgument(format!("duplicate article id {:?}", a.id)));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub fake_count: usize,
    pub true_count: usize,
    pub overall: usize,
}

pub fn dataset_stats(articles: &[Article]) -> DatasetStats {
    let fake_count = articles.iter().filter(|a| a.label == Label::Fake).count();
    DatasetStats {
        fake_count,
        true_count: articles.len() - fake_count,
        overall: articles.len(),
    }
}

/// Published post-filtering counts for the two FakeNewsNet subsets.
pub fn reference_stats(dataset: &str) -> Option<DatasetStats> {
    match dataset.to_ascii_lowercase().as_str() {
        "politifact" => Some(DatasetStats {
            fake_count: 161,
            true_count: 205,
            overall: 366,
        }),
        "gossipcop" => Some(DatasetStats {
            fake_count: 4927,
            true_count: 16693,
            overall: 21620,
        }),
        _ => None,
    }
}
