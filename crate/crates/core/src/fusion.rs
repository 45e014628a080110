//! Late fusion of the five feature vectors and the softmax classifier head.
//!
//! Full layout (164 dims):
//!
//! | segment      | range       |
//! |--------------|-------------|
//! | `text`       | `[0, 32)`   |
//! | `image`      | `[32, 62)`  |
//! | `emotion`    | `[62, 100)` |
//! | `text_title` | `[100, 132)`|
//! | `title_text` | `[132, 164)`|
//!
//! Ablated layouts drop segments and keep the remaining ones in this order.

use std::fmt;
use std::ops::Range;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::attention::softmax_in_place;
use crate::corpus::Label;
use crate::error::{Error, Result};
use crate::rng::SeededRng;

pub const TEXT_DIM: usize = 32;
pub const IMAGE_DIM: usize = 30;
pub const FUSED_DIM: usize = 164;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Segment {
    /// Pooled body projection.
    Text,
    /// Image projection.
    Image,
    /// Publisher emotion features.
    Emotion,
    /// Text→title attention output.
    TextTitle,
    /// Title→text attention output.
    TitleText,
}

impl Segment {
    pub const ALL: [Segment; 5] = [
        Segment::Text,
        Segment::Image,
        Segment::Emotion,
        Segment::TextTitle,
        Segment::TitleText,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Segment::Text => "R_T",
            Segment::Image => "R_V",
            Segment::Emotion => "R_E",
            Segment::TextTitle => "R_T->Ti",
            Segment::TitleText => "R_Ti->T",
        }
    }
}

impl fmt::Display for Segment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.name())
    }
}

/// Segment widths. The production contract is 32/30/38 with the attention
/// width equal to the text width; tests shrink it to keep gradient checks
/// cheap.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentWidths {
    pub text: usize,
    pub image: usize,
    pub emotion: usize,
}

impl Default for SegmentWidths {
    fn default() -> Self {
        SegmentWidths {
            text: TEXT_DIM,
            image: IMAGE_DIM,
            emotion: crate::emotion::EMOTION_DIM,
        }
    }
}

impl SegmentWidths {
    pub fn width(&self, s: Segment) -> usize {
        match s {
            Segment::Text | Segment::TextTitle | Segment::TitleText => self.text,
            Segment::Image => self.image,
            Segment::Emotion => self.emotion,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayoutEntry {
    pub segment: Segment,
    pub start: usize,
    pub end: usize,
}

/// Which segments are fused, and where each one lands.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FusionLayout {
    pub widths: SegmentWidths,
    pub entries: Vec<LayoutEntry>,
}

impl Default for FusionLayout {
    fn default() -> Self {
        FusionLayout::new(SegmentWidths::default(), &[])
    }
}

impl FusionLayout {
    pub fn new(widths: SegmentWidths, removed: &[Segment]) -> Self {
        let mut start = 0;
        let entries = Segment::ALL
            .iter()
            .filter(|s| !removed.contains(s))
            .map(|&segment| {
                let end = start + widths.width(segment);
                let e = LayoutEntry {
                    segment,
                    start,
                    end,
                };
                start = end;
                e
            })
            .collect();
        FusionLayout { widths, entries }
    }

    pub fn dim(&self) -> usize {
        self.entries.last().map_or(0, |e| e.end)
    }

    pub fn range(&self, s: Segment) -> Option<Range<usize>> {
        self.entries
            .iter()
            .find(|e| e.segment == s)
            .map(|e| e.start..e.end)
    }

    pub fn contains(&self, s: Segment) -> bool {
        self.range(s).is_some()
    }

    /// Concatenates `parts` (indexed like [`Segment::ALL`]) for the segments
    /// kept by this layout.
    pub fn fuse(&self, parts: [&[f64]; 5]) -> Result<FusedVector> {
        let mut values = Vec::with_capacity(self.dim());
        for (segment, part) in Segment::ALL.into_iter().zip(parts) {
            let expected = self.widths.width(segment);
            if part.len() != expected {
                return Err(Error::SegmentMismatch {
                    segment: segment.name(),
                    expected,
                    found: part.len(),
                });
            }
            if self.contains(segment) {
                values.extend_from_slice(part);
            }
        }
        Ok(FusedVector {
            values: Array1::from(values),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusedVector {
    pub values: Array1<f64>,
}

impl FusedVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn segment<'a>(&'a self, layout: &FusionLayout, s: Segment) -> Option<&'a [f64]> {
        let r = layout.range(s)?;
        self.values.as_slice().map(|v| &v[r])
    }
}

/// Full-layout fusion `R_T ⊕ R_V ⊕ R_E ⊕ R_T→Ti ⊕ R_Ti→T`.
pub fn fuse(
    r_t: &[f64],
    r_v: &[f64],
    r_e: &[f64],
    r_tti: &[f64],
    r_tit: &[f64],
) -> Result<FusedVector> {
    FusionLayout::default().fuse([r_t, r_v, r_e, r_tti, r_tit])
}

/// `softmax(W x + b)` over the two classes.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierHead {
    /// `2 x fused_dim`
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl ClassifierHead {
    pub fn zeros(input_dim: usize) -> Self {
        ClassifierHead {
            weight: Array2::zeros((2, input_dim)),
            bias: Array1::zeros(2),
        }
    }

    /// Weights uniform in `[-1/sqrt(input_dim), 1/sqrt(input_dim))`, bias zero.
    pub fn init(input_dim: usize, rng: &mut SeededRng) -> Self {
        let bound = 1.0 / (input_dim as f64).sqrt();
        ClassifierHead {
            weight: Array2::from_shape_simple_fn((2, input_dim), || rng.symmetric(bound)),
            bias: Array1::zeros(2),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.ncols()
    }

    pub fn logits(&self, x: &Array1<f64>) -> Result<[f64; 2]> {
        if x.len() != self.input_dim() {
            return Err(Error::dims("classifier input", self.input_dim(), x.len()));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("classifier input".into()));
        }
        let z = self.weight.dot(x) + &self.bias;
        Ok([z[0], z[1]])
    }
}

pub fn softmax2(logits: [f64; 2]) -> [f64; 2] {
    let mut p = logits;
    softmax_in_place(&mut p);
    p
}

pub fn predict_proba(head: &ClassifierHead, r_f: &FusedVector) -> Result<[f64; 2]> {
    Ok(softmax2(head.logits(&r_f.values)?))
}

/// Arg-max class; an exact tie goes to fake.
pub fn classify(probs: [f64; 2]) -> Label {
    if probs[1] > probs[0] {
        Label::True
    } else {
        Label::Fake
    }
}
