//! Turns articles into model inputs using the configured providers.

use std::path::{Path, PathBuf};

use ndarray::Array1;

use crate::corpus::Article;
use crate::emotion::{extract_emotion, EmotionLexicon};
use crate::encoders::{embed_image, embed_text, Channel, EmbedKey, ImageEmbedder, TextEmbedder};
use crate::error::Result;
use crate::model::{ArticleFeatures, ModelContract};

pub struct FeatureExtractor<'a> {
    pub text: &'a dyn TextEmbedder,
    pub image: &'a dyn ImageEmbedder,
    pub lexicon: &'a EmotionLexicon,
    pub image_root: PathBuf,
}

impl<'a> FeatureExtractor<'a> {
    pub fn new(
        text: &'a dyn TextEmbedder,
        image: &'a dyn ImageEmbedder,
        lexicon: &'a EmotionLexicon,
        image_root: impl AsRef<Path>,
    ) -> Self {
        FeatureExtractor {
            text,
            image,
            lexicon,
            image_root: image_root.as_ref().to_path_buf(),
        }
    }

    /// Contract matching this extractor's backbone widths, with the default
    /// layout and attention mode.
    pub fn contract(&self) -> ModelContract {
        ModelContract::new(self.text.d_enc(), self.image.d_enc())
    }

    pub fn extract(&self, a: &Article) -> Result<ArticleFeatures> {
        let id = a.id.as_str();
        Ok(ArticleFeatures {
            id: a.id.clone(),
            label: a.label,
            title: embed_text(self.text, EmbedKey::new(id, Channel::Title), &a.title)?,
            body: embed_text(self.text, EmbedKey::new(id, Channel::Body), &a.body)?,
            image: embed_image(
                self.image,
                EmbedKey::new(id, Channel::Image),
                &a.image_path(&self.image_root),
            )?,
            emotion: Array1::from(extract_emotion(&a.body, self.lexicon).combined()),
        })
    }

    pub fn extract_all<'b>(&self, articles: impl IntoIterator<Item = &'b Article>) -> Result<Vec<ArticleFeatures>> {
        articles.into_iter().map(|a| self.extract(a)).collect()
    }
}
