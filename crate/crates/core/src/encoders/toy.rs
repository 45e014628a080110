use std::hash::Hasher;
use std::path::Path;

use fnv::FnvHasher;
use ndarray::Array2;

use super::{EmbedKey, EmbeddingProvider, EmbeddingSequence, ImageEmbedder, TextEmbedder};
use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::text::tokenize;

pub const TOY_TEXT_DIM: usize = 64;
pub const TOY_IMAGE_DIM: usize = 20;

/// Hashed bag-of-tokens with a signed random projection: every whitespace
/// token maps to a fixed `{-1/8, +1/8}^64` vector derived from the FNV-1a hash
/// of its case-folded, punctuation-trimmed form.
#[derive(Debug, Clone, Default)]
pub struct ToyTextEmbedder {
    seed: u64,
}

impl ToyTextEmbedder {
    pub fn with_seed(seed: u64) -> Self {
        ToyTextEmbedder { seed }
    }

    pub fn token_vector(&self, token: &str) -> Vec<f64> {
        let mut h = FnvHasher::default();
        h.write(token.as_bytes());
        let mut rng = SeededRng::new(h.finish() ^ self.seed);
        let scale = 1.0 / (TOY_TEXT_DIM as f64).sqrt();
        (0..TOY_TEXT_DIM)
            .map(|_| if rng.next_u64() >> 63 == 1 { scale } else { -scale })
            .collect()
    }
}

impl EmbeddingProvider for ToyTextEmbedder {
    fn name(&self) -> &str {
        "toy-text"
    }

    fn d_enc(&self) -> usize {
        TOY_TEXT_DIM
    }
}

impl TextEmbedder for ToyTextEmbedder {
    fn embed_text(&self, _key: EmbedKey<'_>, text: &str) -> Result<EmbeddingSequence> {
        let mut data = Vec::new();
        let mut m = 0;
        for tok in tokenize(text) {
            let key = if tok.is_word() { tok.key() } else { tok.raw.to_lowercase() };
            data.extend(self.token_vector(&key));
            m += 1;
        }
        if m == 0 {
            return Ok(EmbeddingSequence::zeros(TOY_TEXT_DIM));
        }
        EmbeddingSequence::new(Array2::from_shape_vec((m, TOY_TEXT_DIM), data).expect("m x d"))
    }
}

/// Cheap image statistics on `[0, 1]`-scaled pixels:
/// `[mean R, mean G, mean B, luma variance, 4x4 grid of mean luma]`.
///
/// Luma is `0.299 R + 0.587 G + 0.114 B`; the variance is the population
/// variance. Grid cell `(i, j)` covers rows `floor(i h / 4) .. ceil((i+1) h / 4)`
/// and likewise for columns, so every cell is non-empty even for images
/// smaller than 4x4.
#[derive(Debug, Clone, Default)]
pub struct ToyImageEmbedder;

impl ToyImageEmbedder {
    pub fn features(img: &image::RgbImage) -> Vec<f64> {
        let (w, h) = img.dimensions();
        let (w, h) = (w as usize, h as usize);
        let n = (w * h) as f64;
        let mut channel_sum = [0.0f64; 3];
        let mut luma = vec![0.0f64; w * h];
        for (x, y, px) in img.enumerate_pixels() {
            let rgb = [px[0], px[1], px[2]].map(|c| c as f64 / 255.0);
            for c in 0..3 {
                channel_sum[c] += rgb[c];
            }
            luma[y as usize * w + x as usize] = 0.299 * rgb[0] + 0.587 * rgb[1] + 0.114 * rgb[2];
        }
        let luma_mean = luma.iter().sum::<f64>() / n;
        let luma_var = luma.iter().map(|l| (l - luma_mean).powi(2)).sum::<f64>() / n;

        let mut out = Vec::with_capacity(TOY_IMAGE_DIM);
        out.extend(channel_sum.iter().map(|s| s / n));
        out.push(luma_var);
        let span = |i: usize, len: usize| (i * len / 4, ((i + 1) * len).div_ceil(4));
        for i in 0..4 {
            let (r0, r1) = span(i, h);
            for j in 0..4 {
                let (c0, c1) = span(j, w);
                let mut acc = 0.0;
                for r in r0..r1 {
                    for c in c0..c1 {
                        acc += luma[r * w + c];
                    }
                }
                out.push(acc / ((r1 - r0) * (c1 - c0)) as f64);
            }
        }
        out
    }
}

impl EmbeddingProvider for ToyImageEmbedder {
    fn name(&self) -> &str {
        "toy-image"
    }

    fn d_enc(&self) -> usize {
        TOY_IMAGE_DIM
    }
}

impl ImageEmbedder for ToyImageEmbedder {
    fn embed_image(&self, _key: EmbedKey<'_>, path: &Path) -> Result<EmbeddingSequence> {
        let img = image::open(path).map_err(|e| Error::Image {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let rgb = img.to_rgb8();
        if rgb.width() == 0 || rgb.height() == 0 {
            return Err(Error::Image {
                path: path.to_path_buf(),
                message: "empty image".into(),
            });
        }
        EmbeddingSequence::from_row(Self::features(&rgb))
    }
}
