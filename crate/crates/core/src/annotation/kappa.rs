use std::collections::HashMap;
use std::hash::Hash;

use serde::{Deserialize, Serialize};

use super::RawRating;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum KappaError {
    #[error("label lists differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("no label pairs to compare")]
    Empty,
}

/// Cohen's kappa between two raters' labels.
///
/// κ = (p_o − p_e) / (1 − p_e), with p_e from the product of the two
/// raters' marginal label frequencies. Identical lists give exactly 1.0,
/// including the degenerate single-label case where p_e = 1.
pub fn cohen_kappa<T: Eq + Hash>(a: &[T], b: &[T]) -> Result<f64, KappaError> {
    if a.len() != b.len() {
        return Err(KappaError::LengthMismatch(a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(KappaError::Empty);
    }
    if a == b {
        return Ok(1.0);
    }
    let n = a.len() as f64;
    let mut agree = 0usize;
    let mut marginals: HashMap<&T, (usize, usize)> = HashMap::new();
    for (x, y) in a.iter().zip(b) {
        if x == y {
            agree += 1;
        }
        marginals.entry(x).or_default().0 += 1;
        marginals.entry(y).or_default().1 += 1;
    }
    let p_o = agree as f64 / n;
    // Integer product sum keeps p_e exact up to one rounding.
    let pe_num: u128 = marginals.values().map(|&(ca, cb)| ca as u128 * cb as u128).sum();
    let p_e = pe_num as f64 / (n * n);
    if p_e >= 1.0 {
        // Both raters used one and the same label throughout.
        return Ok(1.0);
    }
    Ok((p_o - p_e) / (1.0 - p_e))
}

/// Category merges used for the agreement table: each variant maps a raw
/// rating to a category, or drops the pair when either rating falls
/// outside the variant's categories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KappaVariant {
    /// 1..5 plus Ambiguous.
    SixCategory,
    /// Against / Neutral / Supportive / Ambiguous.
    FourCategory,
    /// Against / Neutral+Ambiguous / Supportive.
    ThreeMergedNeutral,
    /// Against / Neutral / Supportive, pairs with an Ambiguous dropped.
    ThreeCategory,
    /// Against / Supportive only.
    TwoCategory,
}

impl KappaVariant {
    pub const ALL: [KappaVariant; 5] = [
        KappaVariant::SixCategory,
        KappaVariant::FourCategory,
        KappaVariant::ThreeMergedNeutral,
        KappaVariant::ThreeCategory,
        KappaVariant::TwoCategory,
    ];

    pub fn category(self, raw: RawRating) -> Option<u8> {
        use RawRating::*;
        match self {
            KappaVariant::SixCategory => Some(raw.as_number().unwrap_or(0)),
            KappaVariant::FourCategory => Some(match raw {
                One | Two => 0,
                Three => 1,
                Four | Five => 2,
                Ambiguous => 3,
            }),
            KappaVariant::ThreeMergedNeutral => Some(match raw {
                One | Two => 0,
                Three | Ambiguous => 1,
                Four | Five => 2,
            }),
            KappaVariant::ThreeCategory => match raw {
                One | Two => Some(0),
                Three => Some(1),
                Four | Five => Some(2),
                Ambiguous => None,
            },
            KappaVariant::TwoCategory => match raw {
                One | Two => Some(0),
                Four | Five => Some(2),
                Three | Ambiguous => None,
            },
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            KappaVariant::SixCategory => "six_category",
            KappaVariant::FourCategory => "four_category",
            KappaVariant::ThreeMergedNeutral => "three_merged_neutral",
            KappaVariant::ThreeCategory => "three_category",
            KappaVariant::TwoCategory => "two_category",
        }
    }
}

/// Kappa over rating pairs under a category merge; returns κ and the
/// number of pairs kept.
pub fn kappa_variant(pairs: &[(RawRating, RawRating)], variant: KappaVariant) -> Result<(f64, usize), KappaError> {
    let (a, b): (Vec<u8>, Vec<u8>) = pairs
        .iter()
        .filter_map(|&(x, y)| Some((variant.category(x)?, variant.category(y)?)))
        .unzip();
    let kappa = cohen_kappa(&a, &b)?;
    Ok((kappa, a.len()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Independent route: build the full contingency table and read p_o and
    /// p_e off it.
    fn kappa_from_table(a: &[u8], b: &[u8], k: usize) -> f64 {
        let mut table = vec![vec![0f64; k]; k];
        for (&x, &y) in a.iter().zip(b) {
            table[x as usize][y as usize] += 1.0;
        }
        let n = a.len() as f64;
        let p_o: f64 = (0..k).map(|i| table[i][i]).sum::<f64>() / n;
        let p_e: f64 = (0..k)
            .map(|i| {
                let row: f64 = table[i].iter().sum();
                let col: f64 = table.iter().map(|r| r[i]).sum();
                row * col
            })
            .sum::<f64>()
            / (n * n);
        (p_o - p_e) / (1.0 - p_e)
    }

    #[test]
    fn identical_lists_give_one() {
        assert_eq!(cohen_kappa(&["x", "y", "z", "x"], &["x", "y", "z", "x"]).unwrap(), 1.0);
        assert_eq!(cohen_kappa(&["x", "x"], &["x", "x"]).unwrap(), 1.0);
    }

    #[test]
    fn chance_level_example_is_exactly_zero() {
        let a = ["x", "x", "y", "y"];
        let b = ["x", "y", "x", "y"];
        assert_eq!(cohen_kappa(&a, &b).unwrap(), 0.0);
    }

    #[test]
    fn errors() {
        assert_eq!(cohen_kappa::<u8>(&[], &[]), Err(KappaError::Empty));
        assert_eq!(cohen_kappa(&[1], &[1, 2]), Err(KappaError::LengthMismatch(1, 2)));
    }

    #[test]
    fn full_disagreement_on_balanced_classes() {
        // Cyclic relabeling of three balanced classes: p_o = 0, p_e = 1/3.
        let a = [0u8, 1, 2, 0, 1, 2];
        let b = [1u8, 2, 0, 1, 2, 0];
        assert!((cohen_kappa(&a, &b).unwrap() + 0.5).abs() < 1e-15);
    }

    #[test]
    fn variants_drop_and_merge() {
        use RawRating::*;
        let pairs = [(One, Two), (Five, Four), (Three, Ambiguous), (Ambiguous, Ambiguous), (One, Four)];
        assert_eq!(kappa_variant(&pairs, KappaVariant::TwoCategory).unwrap().1, 3);
        assert_eq!(kappa_variant(&pairs, KappaVariant::ThreeCategory).unwrap().1, 3);
        assert_eq!(kappa_variant(&pairs, KappaVariant::ThreeMergedNeutral).unwrap().1, 5);
        // Merged neutral turns (3, A) into agreement.
        let (k3m, _) = kappa_variant(&pairs, KappaVariant::ThreeMergedNeutral).unwrap();
        let (k4, _) = kappa_variant(&pairs, KappaVariant::FourCategory).unwrap();
        assert!(k3m > k4);
    }

    proptest! {
        #[test]
        fn matches_contingency_table_route(pairs in prop::collection::vec((0u8..4, 0u8..4), 1..80)) {
            let (a, b): (Vec<u8>, Vec<u8>) = pairs.into_iter().unzip();
            let k = cohen_kappa(&a, &b).unwrap();
            prop_assert!((-1.0..=1.0).contains(&k));
            if a != b {
                let oracle = kappa_from_table(&a, &b, 4);
                if oracle.is_finite() {
                    prop_assert!((k - oracle).abs() < 1e-12);
                }
            }
        }

        #[test]
        fn symmetric_and_permutation_invariant(
            pairs in prop::collection::vec((0u8..3, 0u8..3), 1..60),
            perm in Just([0u8, 1, 2]).prop_shuffle(),
        ) {
            let (a, b): (Vec<u8>, Vec<u8>) = pairs.into_iter().unzip();
            let k = cohen_kappa(&a, &b).unwrap();
            prop_assert!((k - cohen_kappa(&b, &a).unwrap()).abs() < 1e-12);
            let pa: Vec<u8> = a.iter().map(|&x| perm[x as usize]).collect();
            let pb: Vec<u8> = b.iter().map(|&x| perm[x as usize]).collect();
            prop_assert!((k - cohen_kappa(&pa, &pb).unwrap()).abs() < 1e-12);
            prop_assert_eq!(cohen_kappa(&a, &a).unwrap(), 1.0);
        }
    }
}
