//! Feature-family ablations. Each variant drops segments from the fused
//! vector and is retrained from scratch with the same seeds and data.

use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{evaluate, MetricsReport, TABLE_HEADER};
use crate::corpus::Label;
use crate::error::{Error, Result};
use crate::fusion::{FusionLayout, Segment, SegmentWidths};
use crate::model::{ArticleFeatures, ModelContract, ModelParams};
use crate::training::{train, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum VariantName {
    #[serde(rename = "full")]
    Full,
    /// Without the pooled body vector (attention still sees the body).
    T,
    /// Without the image vector.
    V,
    /// Without emotion features.
    E,
    /// Without both title↔text attention vectors.
    S,
}

impl VariantName {
    pub const ALL: [VariantName; 5] = [
        VariantName::Full,
        VariantName::T,
        VariantName::V,
        VariantName::E,
        VariantName::S,
    ];

    pub fn removed(self) -> &'static [Segment] {
        match self {
            VariantName::Full => &[],
            VariantName::T => &[Segment::Text],
            VariantName::V => &[Segment::Image],
            VariantName::E => &[Segment::Emotion],
            VariantName::S => &[Segment::TextTitle, Segment::TitleText],
        }
    }
}

impl FromStr for VariantName {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "full" | "Full" => Ok(VariantName::Full),
            "T" | "t" => Ok(VariantName::T),
            "V" | "v" => Ok(VariantName::V),
            "E" | "e" => Ok(VariantName::E),
            "S" | "s" => Ok(VariantName::S),
            other => Err(Error::InvalidArgument(format!(
                "unknown ablation variant {other:?} (expected full, T, V, E or S)"
            ))),
        }
    }
}

impl fmt::Display for VariantName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(match self {
            VariantName::Full => "full",
            VariantName::T => "T",
            VariantName::V => "V",
            VariantName::E => "E",
            VariantName::S => "S",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AblationVariant {
    pub name: VariantName,
    pub removed: Vec<Segment>,
    pub fused_dim: usize,
}

impl AblationVariant {
    pub fn new(name: VariantName, widths: SegmentWidths) -> Self {
        let removed = name.removed().to_vec();
        let fused_dim = FusionLayout::new(widths, &removed).dim();
        AblationVariant {
            name,
            removed,
            fused_dim,
        }
    }

    pub fn layout(&self, widths: SegmentWidths) -> FusionLayout {
        FusionLayout::new(widths, &self.removed)
    }
}

/// Variant with the standard 32/30/38 widths.
pub fn build_variant(name: &str) -> Result<AblationVariant> {
    Ok(AblationVariant::new(name.parse()?, SegmentWidths::default()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: VariantName,
    pub fused_dim: usize,
    pub report: MetricsReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    pub fn row(&self, name: VariantName) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.variant == name)
    }

    pub fn render_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:<8} {:>4}  {}", "variant", "dim", TABLE_HEADER);
        for r in &self.rows {
            let _ = writeln!(s, "{:<8} {:>4}  {}", r.variant, r.fused_dim, r.report.table_cells());
        }
        s
    }
}

/// Trains and evaluates each variant in order, from a fresh initialisation
/// with `model_seed` and the same training config.
pub fn run_ablation(
    train_set: &[ArticleFeatures],
    test_set: &[ArticleFeatures],
    base: &ModelContract,
    model_seed: u64,
    config: &TrainConfig,
    variants: &[AblationVariant],
    positive_class: Label,
) -> Result<AblationTable> {
    if variants.is_empty() {
        return Err(Error::InvalidArgument("no ablation variants requested".into()));
    }
    let mut rows = Vec::with_capacity(variants.len());
    for v in variants {
        let mut contract = base.clone();
        contract.layout = v.layout(base.widths());
        let (model, _) = train(ModelParams::init(contract, model_seed), train_set, config)?;
        let eval = evaluate(&model, test_set, positive_class, &v.name.to_string())?;
        rows.push(AblationRow {
            variant: v.name,
            fused_dim: v.fused_dim,
            report: eval.report,
        });
    }
    Ok(AblationTable { rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fused_dims() {
        let dims: Vec<usize> = ["full", "T", "V", "E", "S"]
            .iter()
            .map(|n| build_variant(n).unwrap().fused_dim)
            .collect();
        assert_eq!(dims, vec![164, 132, 134, 126, 100]);
        assert!(build_variant("full").unwrap().removed.is_empty());
        assert!(build_variant("X").is_err());
    }

    #[test]
    fn text_variant_keeps_attention() {
        let l = build_variant("T").unwrap().layout(SegmentWidths::default());
        assert!(!l.contains(Segment::Text));
        assert!(l.contains(Segment::TextTitle) && l.contains(Segment::TitleText));
        assert_eq!(l.range(Segment::Image), Some(0..30));
    }

    #[test]
    fn variant_names_roundtrip() {
        for v in VariantName::ALL {
            assert_eq!(v.to_string().parse::<VariantName>().unwrap(), v);
        }
    }
}
