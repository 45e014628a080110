//! Oracles and synthetic corpora shared by the integration suites. Nothing
//! here calls into the code paths it is used to check.

#![allow(dead_code)]

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use fakenews_core::attention::AttentionMode;
use fakenews_core::corpus::{split, Article, DatasetSplit, Label, TrainRatio};
use fakenews_core::emotion::EmotionLexicon;
use fakenews_core::encoders::{EmbeddingSequence, ToyImageEmbedder, ToyTextEmbedder};
use fakenews_core::features::FeatureExtractor;
use fakenews_core::fusion::{FusionLayout, SegmentWidths};
use fakenews_core::model::{batch_loss, ArticleFeatures, ModelContract, ModelParams};
use fakenews_core::rng::SeededRng;
use image::{Rgb, RgbImage};
use ndarray::{Array1, Array2};

// ---------------------------------------------------------------- oracles

/// Row-wise softmax(QKᵀ/√d)·V with plain scalar loops.
pub fn attention_oracle(q: &[Vec<f64>], k: &[Vec<f64>], v: &[Vec<f64>], d: usize) -> Vec<Vec<f64>> {
    let scale = (d as f64).sqrt();
    q.iter()
        .map(|qi| {
            let logits: Vec<f64> = k
                .iter()
                .map(|kj| qi.iter().zip(kj).map(|(a, b)| a * b).sum::<f64>() / scale)
                .collect();
            let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
            let z: f64 = exps.iter().sum();
            let mut out = vec![0.0; v[0].len()];
            for (w, vj) in exps.iter().zip(v) {
                for (o, x) in out.iter_mut().zip(vj) {
                    *o += w / z * x;
                }
            }
            out
        })
        .collect()
}

/// Row-vector times matrix: `rows · w` with scalar loops.
pub fn matmul_oracle(rows: &[Vec<f64>], w: &[Vec<f64>]) -> Vec<Vec<f64>> {
    rows.iter()
        .map(|r| {
            (0..w[0].len())
                .map(|j| r.iter().enumerate().map(|(i, x)| x * w[i][j]).sum())
                .collect()
        })
        .collect()
}

pub fn to_rows(a: &Array2<f64>) -> Vec<Vec<f64>> {
    a.outer_iter().map(|r| r.to_vec()).collect()
}

pub fn column_mean(rows: &[Vec<f64>]) -> Vec<f64> {
    let mut out = vec![0.0; rows[0].len()];
    for r in rows {
        for (o, x) in out.iter_mut().zip(r) {
            *o += x;
        }
    }
    out.iter().map(|x| x / rows.len() as f64).collect()
}

/// `w · x + b` with scalar loops.
pub fn affine_oracle(w: &Array2<f64>, x: &[f64], b: &Array1<f64>) -> Vec<f64> {
    (0..w.nrows())
        .map(|i| b[i] + (0..w.ncols()).map(|j| w[[i, j]] * x[j]).sum::<f64>())
        .collect()
}

/// Tallies (tp, fp, tn, fn) one case at a time.
pub fn counting_oracle(preds: &[u8], labels: &[u8], positive: u8) -> (usize, usize, usize, usize) {
    let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
    for i in 0..preds.len() {
        let p = preds[i] == positive;
        let y = labels[i] == positive;
        if p && y {
            tp += 1;
        } else if p && !y {
            fp += 1;
        } else if !p && !y {
            tn += 1;
        } else {
            fn_ += 1;
        }
    }
    (tp, fp, tn, fn_)
}

/// Central finite differences of the mean batch loss, one tensor at a time,
/// in the model's canonical tensor order.
pub fn finite_difference_gradient(model: &ModelParams, batch: &[&ArticleFeatures], step: f64) -> Vec<Vec<f64>> {
    let n_tensors = model.tensors().len();
    let mut out = Vec::with_capacity(n_tensors);
    for t in 0..n_tensors {
        let len = model.tensors()[t].data.len();
        let mut g = vec![0.0; len];
        for (i, gi) in g.iter_mut().enumerate() {
            let mut plus = model.clone();
            plus.tensors_mut()[t][i] += step;
            let mut minus = model.clone();
            minus.tensors_mut()[t][i] -= step;
            let lp = batch_loss(&plus, batch).unwrap();
            let lm = batch_loss(&minus, batch).unwrap();
            *gi = (lp - lm) / (2.0 * step);
        }
        out.push(g);
    }
    out
}

/// Largest elementwise `|a - b| / max(|a|, |b|, floor)`.
pub fn max_relative_error(a: &[f64], b: &[f64], floor: f64) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(floor))
        .fold(0.0, f64::max)
}

// ---------------------------------------------------------- tiny models

/// Reduced widths for gradient checks: text 4, image 3, emotion 5.
pub fn tiny_contract(mode: AttentionMode, tie_title: bool) -> ModelContract {
    let widths = SegmentWidths {
        text: 4,
        image: 3,
        emotion: 5,
    };
    ModelContract {
        text_enc: 6,
        image_enc: 5,
        attention_mode: mode,
        tie_title,
        layout: FusionLayout::new(widths, &[]),
    }
}

pub fn random_features(contract: &ModelContract, rng: &mut SeededRng, id: &str, label: Label) -> ArticleFeatures {
    let mut mat = |r: usize, c: usize| {
        EmbeddingSequence::new(Array2::from_shape_simple_fn((r, c), || rng.symmetric(1.0))).unwrap()
    };
    let n_title = 2;
    let n_body = 3;
    let title = mat(n_title, contract.text_enc);
    let body = mat(n_body, contract.text_enc);
    let image = mat(1, contract.image_enc);
    let emotion = Array1::from_shape_simple_fn(contract.widths().emotion, || rng.uniform01());
    ArticleFeatures {
        id: id.to_string(),
        label,
        title,
        body,
        image,
        emotion,
    }
}

// ---------------------------------------------------- synthetic corpora

pub const ANGER_WORDS: &[&str] = &[
    "furious", "outraged", "enraged", "livid", "seething", "hostile", "irate", "fuming", "incensed",
    "wrathful", "bitter", "vicious",
];
pub const JOY_WORDS: &[&str] = &[
    "delighted", "cheerful", "joyous", "gleeful", "elated", "jubilant", "merry", "blissful",
    "thrilled", "radiant", "content", "upbeat",
];

/// Generated lexicon words per class, so emotion vocabularies can be large
/// and sparsely reused like a real lexicon.
pub const SYNTH_EMOTION_WORDS: usize = 1000;

/// `rage<k>` (anger) for fake, `glee<k>` (joy) for true.
pub fn synth_emotion_word(label: Label, k: usize) -> String {
    match label {
        Label::Fake => format!("rage{k}"),
        Label::True => format!("glee{k}"),
    }
}

/// TSV lexicon: anger words (flag 1, polarity -0.8), joy words (flag 5,
/// polarity +0.8), in both the 11-column and packed-flag forms.
pub fn lexicon_tsv() -> String {
    let mut s = String::from("# word\tanger..trust\tintensity\tpolarity\n");
    for w in ANGER_WORDS {
        s.push_str(&format!("{w}\t1\t0\t0\t0\t0\t0\t0\t0\t0.9\t-0.8\n"));
    }
    for w in JOY_WORDS {
        s.push_str(&format!("{w}\t0\t0\t0\t0\t1\t0\t0\t0\t0.7\t0.8\n"));
    }
    for k in 0..SYNTH_EMOTION_WORDS {
        s.push_str(&format!("{}\t10000000\t0.9\t-0.8\n", synth_emotion_word(Label::Fake, k)));
        s.push_str(&format!("{}\t00001000\t0.7\t0.8\n", synth_emotion_word(Label::True, k)));
    }
    s
}

pub fn lexicon() -> EmotionLexicon {
    EmotionLexicon::parse(std::io::Cursor::new(lexicon_tsv()), Path::new("synthetic.tsv")).unwrap()
}

pub fn filler_word(rng: &mut SeededRng) -> String {
    format!("w{}", rng.next_u64() % 300)
}

fn pick<'a>(rng: &mut SeededRng, words: &[&'a str]) -> &'a str {
    words[(rng.next_u64() % words.len() as u64) as usize]
}

/// Writes an 8x8 image of roughly uniform brightness.
pub fn write_image(path: &Path, brightness: f64, rng: &mut SeededRng) {
    let img = RgbImage::from_fn(8, 8, |_, _| {
        let v = ((brightness + rng.symmetric(0.05)).clamp(0.0, 1.0) * 255.0).round() as u8;
        Rgb([v, v, v])
    });
    img.save(path).unwrap();
}

pub struct SynthCorpus {
    pub dir: tempfile::TempDir,
    pub articles: Vec<Article>,
    pub split: DatasetSplit,
}

impl SynthCorpus {
    pub fn image_root(&self) -> PathBuf {
        self.dir.path().join("images")
    }

    /// Train and test features from the toy providers.
    pub fn features(&self, lexicon: &EmotionLexicon) -> (Vec<ArticleFeatures>, Vec<ArticleFeatures>) {
        let text = ToyTextEmbedder::default();
        let image = ToyImageEmbedder;
        let fx = FeatureExtractor::new(&text, &image, lexicon, self.image_root());
        let train = fx
            .extract_all(self.split.select(&self.articles, &self.split.train_ids).unwrap())
            .unwrap();
        let test = fx
            .extract_all(self.split.select(&self.articles, &self.split.test_ids).unwrap())
            .unwrap();
        (train, test)
    }
}

pub const SPLIT_SEED: u64 = 2024;

/// Builds `n` articles with alternating labels. `make` receives
/// `(index, label, is_train, rng)` and returns `(title, body, brightness)`.
pub fn build_corpus(
    n: usize,
    seed: u64,
    mut make: impl FnMut(usize, Label, bool, &mut SeededRng) -> (String, String, f64),
) -> SynthCorpus {
    let dir = tempfile::tempdir().unwrap();
    let images = dir.path().join("images");
    std::fs::create_dir_all(&images).unwrap();
    let ids: Vec<String> = (0..n).map(|i| format!("syn-{i:04}")).collect();
    // Split first (it only depends on ids and seed) so generators can treat
    // train and test articles differently.
    let skeleton: Vec<Article> = ids
        .iter()
        .map(|id| Article {
            id: id.clone(),
            title: String::new(),
            body: String::new(),
            image_ref: String::new(),
            label: Label::Fake,
            dataset: "synthetic".into(),
        })
        .collect();
    let split = split(&skeleton, TrainRatio::default(), SPLIT_SEED).unwrap();
    let train: HashMap<&str, ()> = split.train_ids.iter().map(|s| (s.as_str(), ())).collect();

    let mut rng = SeededRng::new(seed);
    let mut articles = Vec::with_capacity(n);
    for (i, id) in ids.iter().enumerate() {
        let label = if i % 2 == 0 { Label::Fake } else { Label::True };
        let (title, body, brightness) = make(i, label, train.contains_key(id.as_str()), &mut rng);
        let image_ref = format!("{id}.png");
        write_image(&images.join(&image_ref), brightness, &mut rng);
        articles.push(Article {
            id: id.clone(),
            title,
            body,
            image_ref,
            label,
            dataset: "synthetic".into(),
        });
    }
    SynthCorpus {
        dir,
        articles,
        split,
    }
}

fn fillers(rng: &mut SeededRng, n: usize) -> Vec<String> {
    (0..n).map(|_| filler_word(rng)).collect()
}

/// Label visible through a planted body token, image brightness and emotion
/// words at once.
pub fn planted_signal_corpus(n: usize) -> SynthCorpus {
    build_corpus(n, 7, |_, label, _, rng| {
        let mut body = fillers(rng, 12);
        let (token, words, brightness) = match label {
            Label::Fake => ("hoax", ANGER_WORDS, 0.2),
            Label::True => ("verified", JOY_WORDS, 0.75),
        };
        body.push(token.to_string());
        body.push(pick(rng, words).to_string());
        body.push(pick(rng, words).to_string());
        rng.shuffle(&mut body);
        let title = fillers(rng, 4).join(" ");
        (title, body.join(" ") + ".", brightness + rng.symmetric(0.1))
    })
}

/// Label visible only through emotion words. Each article draws three
/// words from a large generated vocabulary; train and test articles use
/// disjoint halves of it, so a held-out article's emotion words were never
/// seen by the text channel during training.
pub fn emotion_only_corpus(n: usize) -> SynthCorpus {
    build_corpus(n, 11, |_, label, is_train, rng| {
        let half = SYNTH_EMOTION_WORDS / 2;
        let offset = if is_train { 0 } else { half };
        let mut body = fillers(rng, 30);
        for _ in 0..3 {
            let k = offset + (rng.next_u64() % half as u64) as usize;
            body.push(synth_emotion_word(label, k));
        }
        rng.shuffle(&mut body);
        let title = fillers(rng, 4).join(" ");
        (title, body.join(" ") + ".", 0.2 + 0.6 * rng.uniform01())
    })
}

pub const TOPICS: usize = 4;
pub const TOPIC_WORDS: usize = 6;

pub fn topic_word(topic: usize, k: usize) -> String {
    format!("topic{topic}x{k}")
}

/// Label visible only through whether the title is about the body's topic.
/// Body topics and title topics are each uniform regardless of label; bodies
/// also carry generic filler shared by every article.
pub fn title_mismatch_corpus(n: usize) -> SynthCorpus {
    build_corpus(n, 13, |_, label, _, rng| {
        let body_topic = (rng.next_u64() % TOPICS as u64) as usize;
        let title_topic = match label {
            Label::True => body_topic,
            Label::Fake => (body_topic + 1 + (rng.next_u64() % (TOPICS as u64 - 1)) as usize) % TOPICS,
        };
        let mut body: Vec<String> = (0..8)
            .map(|_| topic_word(body_topic, (rng.next_u64() % TOPIC_WORDS as u64) as usize))
            .collect();
        for _ in 0..4 {
            body.push(format!("said{}", rng.next_u64() % 3));
        }
        rng.shuffle(&mut body);
        let mut title: Vec<String> = (0..3)
            .map(|_| topic_word(title_topic, (rng.next_u64() % TOPIC_WORDS as u64) as usize))
            .collect();
        title.push("breaking".into());
        (title.join(" "), body.join(" ") + ".", 0.2 + 0.6 * rng.uniform01())
    })
}
