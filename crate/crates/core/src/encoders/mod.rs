//! Frozen backbone embeddings and the trainable projections applied on top
//! of them.
//!
//! Backbones are never trained here. Anything that can produce a per-token
//! matrix for text and a single row for an image plugs in through
//! [`TextEmbedder`] / [`ImageEmbedder`]: real BERT/ResNeSt features arrive
//! through [`PrecomputedProvider`], while [`ToyTextEmbedder`] and
//! [`ToyImageEmbedder`] give deterministic desk-scale stand-ins.

mod cache;
mod projection;
mod toy;

use std::fmt;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use cache::{EmbeddingCache, PrecomputedProvider};
pub use projection::{Projection, ProjectionLayer};
pub use toy::{ToyImageEmbedder, ToyTextEmbedder, TOY_IMAGE_DIM, TOY_TEXT_DIM};

/// `m x d_enc` backbone output: one row per token, or a single row for an
/// image. Always at least one row, all entries finite.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSequence(Array2<f64>);

impl EmbeddingSequence {
    pub fn new(rows: Array2<f64>) -> Result<Self> {
        if rows.nrows() == 0 {
            return Err(Error::InvalidArgument("embedding sequence has no rows".into()));
        }
        if rows.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("embedding sequence".into()));
        }
        Ok(EmbeddingSequence(rows))
    }

    pub fn zeros(d_enc: usize) -> Self {
        EmbeddingSequence(Array2::zeros((1, d_enc)))
    }

    pub fn from_row(row: Vec<f64>) -> Result<Self> {
        let d = row.len();
        Self::new(Array2::from_shape_vec((1, d), row).expect("1 x d shape"))
    }

    pub fn rows(&self) -> &Array2<f64> {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.nrows()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn width(&self) -> usize {
        self.0.ncols()
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    Title,
    Body,
    Image,
}

impl Channel {
    pub fn code(self) -> u8 {
        match self {
            Channel::Title => 0,
            Channel::Body => 1,
            Channel::Image => 2,
        }
    }

    pub fn from_code(c: u8) -> Option<Channel> {
        match c {
            0 => Some(Channel::Title),
            1 => Some(Channel::Body),
            2 => Some(Channel::Image),
            _ => None,
        }
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(match self {
            Channel::Title => "title",
            Channel::Body => "body",
            Channel::Image => "image",
        })
    }
}

/// Identifies one embedding request, e.g. `("pf-0012", Channel::Body)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EmbedKey<'a> {
    pub article_id: &'a str,
    pub channel: Channel,
}

impl<'a> EmbedKey<'a> {
    pub fn new(article_id: &'a str, channel: Channel) -> Self {
        EmbedKey {
            article_id,
            channel,
        }
    }
}

impl fmt::Display for EmbedKey<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.article_id, self.channel)
    }
}

pub trait EmbeddingProvider: Send + Sync {
    fn name(&self) -> &str;
    fn d_enc(&self) -> usize;
    fn deterministic(&self) -> bool {
        true
    }
}

pub trait TextEmbedder: EmbeddingProvider {
    fn embed_text(&self, key: EmbedKey<'_>, text: &str) -> Result<EmbeddingSequence>;
}

pub trait ImageEmbedder: EmbeddingProvider {
    fn embed_image(&self, key: EmbedKey<'_>, path: &Path) -> Result<EmbeddingSequence>;
}

/// Embeds `text`, mapping blank text to the single zero row regardless of
/// provider, and checks the declared width.
pub fn embed_text(
    provider: &dyn TextEmbedder,
    key: EmbedKey<'_>,
    text: &str,
) -> Result<EmbeddingSequence> {
    if text.trim().is_empty() {
        return Ok(EmbeddingSequence::zeros(provider.d_enc()));
    }
    let seq = provider.embed_text(key, text)?;
    check_width(provider, key, &seq)?;
    Ok(seq)
}

/// Embeds an image and checks it came back as one row of the declared width.
pub fn embed_image(
    provider: &dyn ImageEmbedder,
    key: EmbedKey<'_>,
    path: &Path,
) -> Result<EmbeddingSequence> {
    let seq = provider.embed_image(key, path)?;
    check_width(provider, key, &seq)?;
    if seq.len() != 1 {
        return Err(Error::dims(format!("image embedding for {key} (rows)"), 1, seq.len()));
    }
    Ok(seq)
}

fn check_width(
    provider: &(impl EmbeddingProvider + ?Sized),
    key: EmbedKey<'_>,
    seq: &EmbeddingSequence,
) -> Result<()> {
    if seq.width() != provider.d_enc() {
        return Err(Error::dims(
            format!("{} embedding for {key}", provider.name()),
            provider.d_enc(),
            seq.width(),
        ));
    }
    Ok(())
}
