//! Publisher emotion features: five lexicon- and symbol-based families
//! concatenated into one 38-dim vector.
//!
//! | family      | dims | contents                                                       |
//! |-------------|------|----------------------------------------------------------------|
//! | `cate`      | 8    | category distribution over lexicon matches                     |
//! | `lex`       | 10   | matched ratio, distinct-matched ratio, per-category hit ratios |
//! | `intensity` | 8    | per-category mean intensity of matches                         |
//! | `senti`     | 2    | mean polarity, max absolute polarity                           |
//! | `aux`       | 10   | punctuation, casing, pronoun, negation, emoticon, length cues  |
//!
//! Categories, in flag order: anger, anticipation, disgust, fear, joy,
//! sadness, surprise, trust.
//!
//! Only word tokens (non-empty after trimming surrounding punctuation) count
//! toward ratios. Count-type `aux` entries are divided by a fixed scale and
//! clamped to `[0, 1]`: `!`, `?`, ellipses and emoticons by [`SYMBOL_SCALE`],
//! mean sentence length by 100, token count by 1000.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::Article;
use crate::error::{Error, Result};
use crate::text::tokenize;

pub const NUM_CATEGORIES: usize = 8;
pub const CATEGORY_NAMES: [&str; NUM_CATEGORIES] = [
    "anger",
    "anticipation",
    "disgust",
    "fear",
    "joy",
    "sadness",
    "surprise",
    "trust",
];

pub const CATE_DIM: usize = 8;
pub const LEX_DIM: usize = 10;
pub const INTENSITY_DIM: usize = 8;
pub const SENTI_DIM: usize = 2;
pub const AUX_DIM: usize = 10;
pub const EMOTION_DIM: usize = CATE_DIM + LEX_DIM + INTENSITY_DIM + SENTI_DIM + AUX_DIM;

pub const SYMBOL_SCALE: f64 = 10.0;
const SENTENCE_LEN_SCALE: f64 = 100.0;
const TOKEN_COUNT_SCALE: f64 = 1000.0;

const FIRST_PERSON: &[&str] = &[
    "i", "me", "my", "mine", "myself", "we", "us", "our", "ours", "ourselves",
];
const SECOND_PERSON: &[&str] = &["you", "your", "yours", "yourself", "yourselves"];
const NEGATIONS: &[&str] = &[
    "not", "no", "never", "none", "nobody", "nothing", "neither", "nor", "nowhere", "cannot",
];
const EMOTICONS: &[&str] = &[
    ":)", ":-)", ":(", ":-(", ":d", ":-d", ";)", ";-)", ":p", ":-p", ":'(", ":o", ":/", "<3", "xd",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LexiconEntry {
    pub categories: [bool; NUM_CATEGORIES],
    /// In `[0, 1]`.
    pub intensity: f64,
    /// In `[-1, 1]`.
    pub polarity: f64,
}

/// Word-level emotion lexicon with case-folded lookup.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EmotionLexicon {
    entries: HashMap<String, LexiconEntry>,
}

impl EmotionLexicon {
    pub fn insert(&mut self, word: &str, entry: LexiconEntry) -> Result<Option<LexiconEntry>> {
        if !(0.0..=1.0).contains(&entry.intensity) {
            return Err(Error::InvalidArgument(format!(
                "intensity {} of {word:?} outside [0, 1]",
                entry.intensity
            )));
        }
        if !(-1.0..=1.0).contains(&entry.polarity) {
            return Err(Error::InvalidArgument(format!(
                "polarity {} of {word:?} outside [-1, 1]",
                entry.polarity
            )));
        }
        Ok(self.entries.insert(word.to_lowercase(), entry))
    }

    pub fn lookup(&self, word: &str) -> Option<&LexiconEntry> {
        self.entries.get(&word.to_lowercase())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Parses the TSV format
    /// `word <TAB> f1 .. f8 <TAB> intensity <TAB> polarity`. The eight flags
    /// may also be packed as a single column such as `01000000`. Blank lines
    /// and lines starting with `#` are ignored; a repeated word replaces the
    /// earlier entry with a warning.
    pub fn parse(reader: impl BufRead, origin: &Path) -> Result<Self> {
        let mut lex = EmotionLexicon::default();
        for (idx, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::io(origin, e))?;
            let lineno = idx + 1;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let fail = |message: String| Error::Parse {
                path: origin.to_path_buf(),
                line: lineno,
                message,
            };
            let cols: Vec<&str> = line.split('\t').map(str::trim).collect();
            let (word, flag_cols, rest) = match cols.len() {
                11 => (cols[0], &cols[1..9], &cols[9..]),
                4 => (cols[0], &cols[1..2], &cols[2..]),
                n => {
                    return Err(fail(format!(
                        "expected 11 tab-separated columns (or 4 with packed flags), found {n}"
                    )))
                }
            };
            if word.is_empty() {
                return Err(fail("empty word".into()));
            }
            let categories = parse_flags(flag_cols).map_err(fail)?;
            let number = |s: &str, what: &str| {
                s.parse::<f64>()
                    .map_err(|_| fail(format!("cannot parse {what} {s:?}")))
            };
            let entry = LexiconEntry {
                categories,
                intensity: number(rest[0], "intensity")?,
                polarity: number(rest[1], "polarity")?,
            };
            match lex.insert(word, entry) {
                Ok(Some(_)) => log::warn!(
                    "{}:{lineno}: duplicate lexicon word {word:?}, keeping the later entry",
                    origin.display()
                ),
                Ok(None) => {}
                Err(e) => return Err(fail(e.to_string())),
            }
        }
        Ok(lex)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::parse(BufReader::new(file), path)
    }
}

fn parse_flags(cols: &[&str]) -> std::result::Result<[bool; NUM_CATEGORIES], String> {
    let chars: Vec<&str> = if cols.len() == 1 {
        let packed = cols[0];
        if packed.len() != NUM_CATEGORIES {
            return Err(format!("packed category flags {packed:?} must have 8 digits"));
        }
        (0..NUM_CATEGORIES).map(|i| &packed[i..i + 1]).collect()
    } else {
        cols.to_vec()
    };
    let mut out = [false; NUM_CATEGORIES];
    for (slot, c) in out.iter_mut().zip(chars) {
        *slot = match c {
            "0" => false,
            "1" => true,
            other => return Err(format!("category flag {other:?} is not 0 or 1")),
        };
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmotionFeatures {
    pub cate: [f64; CATE_DIM],
    pub lex: [f64; LEX_DIM],
    pub intensity: [f64; INTENSITY_DIM],
    pub senti: [f64; SENTI_DIM],
    pub aux: [f64; AUX_DIM],
}

/// Indices into [`EmotionFeatures::aux`].
pub mod aux {
    pub const EXCLAMATIONS: usize = 0;
    pub const QUESTIONS: usize = 1;
    pub const ELLIPSES: usize = 2;
    pub const UPPERCASE_RATIO: usize = 3;
    pub const FIRST_PERSON_RATIO: usize = 4;
    pub const SECOND_PERSON_RATIO: usize = 5;
    pub const NEGATION_RATIO: usize = 6;
    pub const EMOTICONS: usize = 7;
    pub const MEAN_SENTENCE_LEN: usize = 8;
    pub const TOKEN_COUNT: usize = 9;
}

impl EmotionFeatures {
    pub fn zero() -> Self {
        EmotionFeatures {
            cate: [0.0; CATE_DIM],
            lex: [0.0; LEX_DIM],
            intensity: [0.0; INTENSITY_DIM],
            senti: [0.0; SENTI_DIM],
            aux: [0.0; AUX_DIM],
        }
    }

    /// `cate ⊕ lex ⊕ intensity ⊕ senti ⊕ aux`.
    pub fn combined(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(EMOTION_DIM);
        out.extend_from_slice(&self.cate);
        out.extend_from_slice(&self.lex);
        out.extend_from_slice(&self.intensity);
        out.extend_from_slice(&self.senti);
        out.extend_from_slice(&self.aux);
        out
    }
}

pub fn extract_emotion(text: &str, lexicon: &EmotionLexicon) -> EmotionFeatures {
    let mut f = EmotionFeatures::zero();

    let mut words = 0usize;
    let mut distinct_words = HashSet::new();
    let mut matched = 0usize;
    let mut distinct_matched = HashSet::new();
    let mut cate_hits = [0usize; NUM_CATEGORIES];
    let mut intensity_sum = [0.0f64; NUM_CATEGORIES];
    let mut polarity_sum = 0.0;
    let mut polarity_max = 0.0f64;
    let (mut upper, mut first, mut second, mut negation, mut emoticons) = (0, 0, 0, 0, 0);
    let mut sentences = 0usize;
    let mut in_sentence = 0usize;

    for tok in tokenize(text) {
        if EMOTICONS.contains(&tok.raw.to_lowercase().as_str()) {
            emoticons += 1;
        }
        if tok.is_word() {
            let key = tok.key();
            words += 1;
            in_sentence += 1;
            let letters: Vec<char> = tok.word.chars().filter(|c| c.is_alphabetic()).collect();
            if letters.len() >= 2 && letters.iter().all(|c| c.is_uppercase()) {
                upper += 1;
            }
            if FIRST_PERSON.contains(&key.as_str()) {
                first += 1;
            }
            if SECOND_PERSON.contains(&key.as_str()) {
                second += 1;
            }
            if NEGATIONS.contains(&key.as_str()) || key.ends_with("n't") {
                negation += 1;
            }
            if let Some(entry) = lexicon.lookup(&key) {
                matched += 1;
                distinct_matched.insert(key.clone());
                for c in 0..NUM_CATEGORIES {
                    if entry.categories[c] {
                        cate_hits[c] += 1;
                        intensity_sum[c] += entry.intensity;
                    }
                }
                polarity_sum += entry.polarity;
                polarity_max = polarity_max.max(entry.polarity.abs());
            }
            distinct_words.insert(key);
        }
        if tok.raw.ends_with(['.', '!', '?', '…']) && in_sentence > 0 {
            sentences += 1;
            in_sentence = 0;
        }
    }
    if in_sentence > 0 {
        sentences += 1;
    }

    let total_hits: usize = cate_hits.iter().sum();
    if total_hits > 0 {
        for (slot, &hits) in f.cate.iter_mut().zip(&cate_hits) {
            *slot = hits as f64 / total_hits as f64;
        }
    }

    let ratio = |n: usize, d: usize| if d == 0 { 0.0 } else { n as f64 / d as f64 };
    f.lex[0] = ratio(matched, words);
    f.lex[1] = ratio(distinct_matched.len(), distinct_words.len());
    for c in 0..NUM_CATEGORIES {
        f.lex[2 + c] = ratio(cate_hits[c], words);
        f.intensity[c] = if cate_hits[c] == 0 {
            0.0
        } else {
            intensity_sum[c] / cate_hits[c] as f64
        };
    }

    if matched > 0 {
        f.senti = [polarity_sum / matched as f64, polarity_max];
    }

    let scaled = |count: f64, scale: f64| (count / scale).clamp(0.0, 1.0);
    let ellipses = text.matches("...").count() + text.matches('…').count();
    f.aux[aux::EXCLAMATIONS] = scaled(text.matches('!').count() as f64, SYMBOL_SCALE);
    f.aux[aux::QUESTIONS] = scaled(text.matches('?').count() as f64, SYMBOL_SCALE);
    f.aux[aux::ELLIPSES] = scaled(ellipses as f64, SYMBOL_SCALE);
    f.aux[aux::UPPERCASE_RATIO] = ratio(upper, words);
    f.aux[aux::FIRST_PERSON_RATIO] = ratio(first, words);
    f.aux[aux::SECOND_PERSON_RATIO] = ratio(second, words);
    f.aux[aux::NEGATION_RATIO] = ratio(negation, words);
    f.aux[aux::EMOTICONS] = scaled(emoticons as f64, SYMBOL_SCALE);
    f.aux[aux::MEAN_SENTENCE_LEN] = scaled(ratio(words, sentences), SENTENCE_LEN_SCALE);
    f.aux[aux::TOKEN_COUNT] = scaled(words as f64, TOKEN_COUNT_SCALE);
    f
}

/// Emotion features of every article body, keyed by article id.
pub fn batch_extract(articles: &[Article], lexicon: &EmotionLexicon) -> BTreeMap<String, EmotionFeatures> {
    articles
        .iter()
        .map(|a| (a.id.clone(), extract_emotion(&a.body, lexicon)))
        .collect()
}

/// JSON map `id -> [38 floats]`, keys sorted.
pub fn feature_dump_json(features: &BTreeMap<String, EmotionFeatures>) -> Result<String> {
    let dump: BTreeMap<&str, Vec<f64>> = features
        .iter()
        .map(|(id, f)| (id.as_str(), f.combined()))
        .collect();
    Ok(serde_json::to_string_pretty(&dump)? + "\n")
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn parse(text: &str) -> Result<EmotionLexicon> {
        EmotionLexicon::parse(Cursor::new(text), Path::new("lex.tsv"))
    }

    fn joyful() -> EmotionLexicon {
        parse("joyful\t0\t1\t0\t0\t0\t0\t0\t0\t0.8\t0.7\n").unwrap()
    }

    #[test]
    fn empty_lexicon_file() {
        assert!(parse("").unwrap().is_empty());
        assert!(parse("# only a comment\n\n").unwrap().is_empty());
    }

    #[test]
    fn lookup_is_case_folded() {
        let lex = joyful();
        let e = lex.lookup("JOYFUL").unwrap();
        assert_eq!(e.categories, [false, true, false, false, false, false, false, false]);
        assert_eq!((e.intensity, e.polarity), (0.8, 0.7));
    }

    #[test]
    fn packed_flags_are_accepted() {
        let lex = parse("joyful\t01000000\t0.8\t0.7\n").unwrap();
        assert_eq!(lex, joyful());
    }

    #[test]
    fn bad_rows_report_line() {
        let err = parse("# c\njoyful\t01000000\t0.8\t1.5\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
        let err = parse("a\t0\t1\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
        assert!(parse("a\t0\t0\t0\t0\t0\t0\t0\t2\t0.1\t0.1\n").is_err());
        assert!(parse("a\t00000000\t1.2\t0\n").is_err());
    }

    #[test]
    fn duplicates_keep_last() {
        let lex = parse("x\t10000000\t0.1\t0.1\nX\t00000001\t0.9\t-0.9\n").unwrap();
        assert_eq!(lex.len(), 1);
        assert_eq!(lex.lookup("x").unwrap().polarity, -0.9);
    }

    #[test]
    fn empty_text_is_zero() {
        let f = extract_emotion("", &joyful());
        assert_eq!(f.combined(), vec![0.0; EMOTION_DIM]);
        assert_eq!(EMOTION_DIM, 38);
    }

    #[test]
    fn joyful_joyful_hand_count() {
        let f = extract_emotion("joyful joyful!", &joyful());
        assert_eq!(f.cate, [0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(f.senti, [0.7, 0.7]);
        assert_eq!(f.aux[aux::EXCLAMATIONS] * SYMBOL_SCALE, 1.0);
        assert_eq!(f.lex[0], 1.0);
        assert_eq!(f.lex[1], 1.0);
        assert_eq!(f.lex[3], 1.0);
        assert_eq!(f.intensity[1], 0.8);
        assert_eq!(f.aux[aux::MEAN_SENTENCE_LEN], 0.02);
        assert_eq!(f.aux[aux::TOKEN_COUNT], 0.002);
    }

    #[test]
    fn aux_cues() {
        let lex = EmotionLexicon::default();
        let f = extract_emotion("WE can't stop YOU... Really? :) No.", &lex);
        // words: WE can't stop YOU Really No  (":)" is not a word)
        assert_eq!(f.aux[aux::QUESTIONS], 0.1);
        assert_eq!(f.aux[aux::ELLIPSES], 0.1);
        assert_eq!(f.aux[aux::EMOTICONS], 0.1);
        assert_eq!(f.aux[aux::UPPERCASE_RATIO], 2.0 / 6.0);
        assert_eq!(f.aux[aux::FIRST_PERSON_RATIO], 1.0 / 6.0);
        assert_eq!(f.aux[aux::SECOND_PERSON_RATIO], 1.0 / 6.0);
        assert_eq!(f.aux[aux::NEGATION_RATIO], 2.0 / 6.0);
        // sentences: [WE can't stop YOU...] [Really?] [:) No.] -> 6 words / 3
        assert_eq!(f.aux[aux::MEAN_SENTENCE_LEN], 0.02);
    }

    #[test]
    fn counts_clamp_at_one() {
        let f = extract_emotion(&"!".repeat(25), &EmotionLexicon::default());
        assert_eq!(f.aux[aux::EXCLAMATIONS], 1.0);
    }

    #[test]
    fn batch_is_order_independent() {
        let mk = |id: &str, body: &str| Article {
            id: id.into(),
            title: String::new(),
            body: body.into(),
            image_ref: String::new(),
            label: crate::corpus::Label::True,
            dataset: "t".into(),
        };
        let xs = vec![mk("a", "joyful day"), mk("b", "sad!"), mk("c", "")];
        let mut ys = xs.clone();
        ys.reverse();
        let lex = joyful();
        assert!(batch_extract(&[], &lex).is_empty());
        assert_eq!(batch_extract(&xs, &lex), batch_extract(&ys, &lex));
        let dump = feature_dump_json(&batch_extract(&xs, &lex)).unwrap();
        let back: BTreeMap<String, Vec<f64>> = serde_json::from_str(&dump).unwrap();
        assert!(back.values().all(|v| v.len() == EMOTION_DIM));
    }
}
