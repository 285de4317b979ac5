//! The five-step quantifier scale and the ratio rule that assigns labels.
//!
//! A label describes the proportion of a restrictor set that carries a scope
//! property: `no` at exactly 0%, `all` at exactly 100%, `few` up to and
//! including 17%, `most` from 70% up, `some` in between. The endpoint rules
//! take precedence over the thresholds, and all comparisons are exact
//! integer arithmetic so that boundary ratios never suffer float rounding.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Ordinal position on the scale `no < few < some < most < all`.
#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QuantifierLabel {
    No,
    Few,
    Some,
    Most,
    All,
}

pub const ALL_LABELS: [QuantifierLabel; 5] = [
    QuantifierLabel::No,
    QuantifierLabel::Few,
    QuantifierLabel::Some,
    QuantifierLabel::Most,
    QuantifierLabel::All,
];

impl QuantifierLabel {
    pub fn ordinal(self) -> usize {
        match self {
            QuantifierLabel::No => 0,
            QuantifierLabel::Few => 1,
            QuantifierLabel::Some => 2,
            QuantifierLabel::Most => 3,
            QuantifierLabel::All => 4,
        }
    }

    pub fn from_ordinal(ordinal: usize) -> Option<Self> {
        ALL_LABELS.get(ordinal).copied()
    }

    /// Lowercase word used in every serialized artifact.
    pub fn word(self) -> &'static str {
        match self {
            QuantifierLabel::No => "no",
            QuantifierLabel::Few => "few",
            QuantifierLabel::Some => "some",
            QuantifierLabel::Most => "most",
            QuantifierLabel::All => "all",
        }
    }

    pub fn from_word(word: &str) -> Option<Self> {
        ALL_LABELS.iter().copied().find(|l| l.word() == word)
    }
}

impl std::fmt::Display for QuantifierLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.word())
    }
}

/// Restrictor cardinality `m` and target cardinality `k = |restrictor ∩ scope|`.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SetCounts {
    pub m: usize,
    pub k: usize,
}

impl SetCounts {
    pub fn new(m: usize, k: usize) -> Self {
        debug_assert!(k <= m, "target count {k} exceeds restrictor count {m}");
        Self { m, k }
    }

    pub fn ratio(self) -> f64 {
        self.k as f64 / self.m as f64
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum QuantifierError {
    #[error("restrictor cardinality 0 leaves the proportion undefined")]
    UndefinedRestrictor,
    #[error("target cardinality {k} exceeds restrictor cardinality {m}")]
    TargetExceedsRestrictor { m: usize, k: usize },
}

/// Fraction of FEW as a rational: ratios `k/m ≤ 17/100` are `few`.
const FEW_NUM: usize = 17;
/// Fraction of MOST as a rational: ratios `k/m ≥ 70/100` are `most`.
const MOST_NUM: usize = 70;
const DENOM: usize = 100;

/// Map set counts to a quantifier label.
///
/// `k = 0` is `no` and `k = m` is `all` regardless of the thresholds;
/// otherwise the ratio decides with inclusive boundaries on both thresholds.
pub fn quantize_ratio(counts: SetCounts) -> Result<QuantifierLabel, QuantifierError> {
    let SetCounts { m, k } = counts;
    if m == 0 {
        return Err(QuantifierError::UndefinedRestrictor);
    }
    if k > m {
        return Err(QuantifierError::TargetExceedsRestrictor { m, k });
    }
    Ok(if k == 0 {
        QuantifierLabel::No
    } else if k == m {
        QuantifierLabel::All
    } else if k * DENOM <= FEW_NUM * m {
        QuantifierLabel::Few
    } else if k * DENOM >= MOST_NUM * m {
        QuantifierLabel::Most
    } else {
        QuantifierLabel::Some
    })
}

/// Number of scale steps between two labels.
pub fn scale_distance(a: QuantifierLabel, b: QuantifierLabel) -> usize {
    a.ordinal().abs_diff(b.ordinal())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use QuantifierLabel::{All, Few, Most, No, Some as SomeOf};

    /// Independent piecewise oracle: endpoint cases first, then the ratio in
    /// floating point. Safe because no k/m with m ≤ 100 rounds across the
    /// 0.17 or 0.70 boundaries in f64.
    fn oracle(m: usize, k: usize) -> QuantifierLabel {
        assert!(m >= 1 && k <= m);
        if k == 0 {
            return No;
        }
        if k == m {
            return All;
        }
        let r = k as f64 / m as f64;
        if r <= 0.17 {
            Few
        } else if r >= 0.70 {
            Most
        } else {
            SomeOf
        }
    }

    #[test]
    fn six_object_restrictor_walks_the_whole_scale() {
        let expect = [No, Few, SomeOf, SomeOf, SomeOf, Most, All];
        for (k, want) in expect.iter().enumerate() {
            assert_eq!(quantize_ratio(SetCounts::new(6, k)).unwrap(), *want, "k={k}");
        }
    }

    #[test]
    fn endpoint_rules_take_precedence() {
        assert_eq!(quantize_ratio(SetCounts::new(1, 1)).unwrap(), All);
        assert_eq!(quantize_ratio(SetCounts::new(1, 0)).unwrap(), No);
    }

    #[test]
    fn matches_oracle_exhaustively_up_to_sixteen() {
        for m in 1..=16 {
            for k in 0..=m {
                assert_eq!(
                    quantize_ratio(SetCounts::new(m, k)).unwrap(),
                    oracle(m, k),
                    "m={m} k={k}"
                );
            }
        }
    }

    #[test]
    fn boundary_ratios_are_inclusive() {
        // 17/100 = 0.17 exactly, 70/100 = 0.70 exactly.
        assert_eq!(quantize_ratio(SetCounts::new(100, 17)).unwrap(), Few);
        assert_eq!(quantize_ratio(SetCounts::new(100, 70)).unwrap(), Most);
        assert_eq!(quantize_ratio(SetCounts::new(100, 18)).unwrap(), SomeOf);
        assert_eq!(quantize_ratio(SetCounts::new(100, 69)).unwrap(), SomeOf);
    }

    #[test]
    fn few_is_unreachable_for_five_objects() {
        for k in 0..=5 {
            assert_ne!(quantize_ratio(SetCounts::new(5, k)).unwrap(), Few, "k={k}");
        }
    }

    #[test]
    fn zero_restrictor_is_an_error() {
        assert_eq!(
            quantize_ratio(SetCounts { m: 0, k: 0 }).unwrap_err(),
            QuantifierError::UndefinedRestrictor
        );
    }

    #[test]
    fn scale_distances() {
        assert_eq!(scale_distance(No, No), 0);
        assert_eq!(scale_distance(Few, SomeOf), 1);
        assert_eq!(scale_distance(No, All), 4);
        assert_eq!(scale_distance(All, No), 4);
    }

    #[test]
    fn words_round_trip() {
        for label in ALL_LABELS {
            assert_eq!(QuantifierLabel::from_word(label.word()), std::option::Option::Some(label));
            assert_eq!(serde_json::to_string(&label).unwrap(), format!("\"{}\"", label.word()));
        }
    }

    proptest! {
        #[test]
        fn monotone_in_k_for_fixed_m(m in 1usize..60) {
            let mut prev = quantize_ratio(SetCounts::new(m, 0)).unwrap();
            for k in 1..=m {
                let next = quantize_ratio(SetCounts::new(m, k)).unwrap();
                prop_assert!(next >= prev, "label dropped from {prev:?} to {next:?} at m={m} k={k}");
                prev = next;
            }
        }
    }
}
