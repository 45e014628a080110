//! Whitespace tokenisation shared by the toy text embedder and the emotion
//! extractor.

/// A whitespace-delimited token with its lookup form.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token<'a> {
    pub raw: &'a str,
    /// `raw` with leading/trailing non-alphanumeric characters stripped.
    /// Empty for pure-punctuation tokens such as `":)"` or `"--"`.
    pub word: &'a str,
}

impl Token<'_> {
    pub fn is_word(&self) -> bool {
        !self.word.is_empty()
    }

    /// Case-folded lookup key.
    pub fn key(&self) -> String {
        self.word.to_lowercase()
    }
}

pub fn tokenize(text: &str) -> impl Iterator<Item = Token<'_>> {
    text.split_whitespace().map(|raw| Token {
        raw,
        word: raw.trim_matches(|c: char| !c.is_alphanumeric()),
    })
}
