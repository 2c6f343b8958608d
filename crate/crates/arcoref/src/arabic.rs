//! Arabic orthography normalization: map alif variants to bare alif and
//! strip diacritic marks. Both sets are configurable.

use std::collections::BTreeSet;

use crate::conll::Document;
use crate::error::{Error, Result};

/// Bare alif, the normalization target for alif variants.
pub const BARE_ALIF: char = '\u{0627}';

/// Alif with madda, hamza above, hamza below, and wasla.
pub const DEFAULT_ALIF_VARIANTS: [char; 4] = ['\u{0622}', '\u{0623}', '\u{0625}', '\u{0671}'];

/// Which code points to rewrite and which to delete.
#[derive(Debug, Clone)]
pub struct NormalizationRules {
    alif_variants: BTreeSet<char>,
    diacritics: BTreeSet<char>,
}

impl Default for NormalizationRules {
    fn default() -> Self {
        // Harakat/tanwin block plus superscript alef. Tatweel (U+0640) is
        // elongation, not a diacritic, and is kept.
        let mut diacritics: BTreeSet<char> = ('\u{064B}'..='\u{065F}').collect();
        diacritics.insert('\u{0670}');
        NormalizationRules {
            alif_variants: DEFAULT_ALIF_VARIANTS.into_iter().collect(),
            diacritics,
        }
    }
}

impl NormalizationRules {
    /// Builds custom rules. The bare alif may not be listed as a variant and
    /// the two sets must be disjoint.
    pub fn new(
        alif_variants: impl IntoIterator<Item = char>,
        diacritics: impl IntoIterator<Item = char>,
    ) -> Result<Self> {
        let alif_variants: BTreeSet<char> = alif_variants.into_iter().collect();
        let diacritics: BTreeSet<char> = diacritics.into_iter().collect();
        if alif_variants.contains(&BARE_ALIF) {
            return Err(Error::Config(
                "bare alif (U+0627) cannot be an alif variant".into(),
            ));
        }
        if let Some(c) = alif_variants.intersection(&diacritics).next() {
            return Err(Error::Config(format!(
                "code point U+{:04X} is both an alif variant and a diacritic",
                *c as u32
            )));
        }
        Ok(NormalizationRules {
            alif_variants,
            diacritics,
        })
    }

    /// Rewrites alif variants to bare alif and deletes diacritics.
    /// Total on any UTF-8 input; order of surviving code points is preserved.
    pub fn normalize_token(&self, surface: &str) -> String {
        surface
            .chars()
            .filter_map(|c| {
                if self.diacritics.contains(&c) {
                    None
                } else if self.alif_variants.contains(&c) {
                    Some(BARE_ALIF)
                } else {
                    Some(c)
                }
            })
            .collect()
    }

    /// Normalizes every token surface. Token count, sentence boundaries, and
    /// cluster spans are untouched. A surface consisting only of diacritics
    /// normalizes to "_" so the token (and the column format) survives.
    pub fn normalize_document(&self, doc: &Document) -> Document {
        let mut out = doc.clone();
        for tok in &mut out.tokens {
            let normalized = self.normalize_token(&tok.surface);
            tok.surface = if normalized.is_empty() {
                "_".to_string()
            } else {
                normalized
            };
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conll::{ClusterSet, Span, Token};

    #[test]
    fn alif_hamza_above_normalized() {
        let rules = NormalizationRules::default();
        assert_eq!(rules.normalize_token("أحمد"), "احمد");
    }

    #[test]
    fn fatha_removed() {
        let rules = NormalizationRules::default();
        assert_eq!(rules.normalize_token("عَلَى"), "على");
    }

    #[test]
    fn latin_untouched() {
        let rules = NormalizationRules::default();
        assert_eq!(rules.normalize_token("hello 123"), "hello 123");
    }

    #[test]
    fn tatweel_kept() {
        let rules = NormalizationRules::default();
        assert_eq!(rules.normalize_token("بـــاب"), "بـــاب");
    }

    #[test]
    fn all_default_variants_map_to_bare_alif() {
        let rules = NormalizationRules::default();
        for v in DEFAULT_ALIF_VARIANTS {
            assert_eq!(rules.normalize_token(&v.to_string()), "ا");
        }
        // Alif maqsura and ta marbuta are not normalized by default.
        assert_eq!(rules.normalize_token("ى"), "ى");
        assert_eq!(rules.normalize_token("ة"), "ة");
    }

    #[test]
    fn idempotent_and_never_longer() {
        let rules = NormalizationRules::default();
        for s in ["أَهْلاً وسَهْلاً", "hello", "ٱلْكِتَابُ", "", "أإآٱ"] {
            let once = rules.normalize_token(s);
            assert_eq!(rules.normalize_token(&once), once);
            assert!(once.chars().count() <= s.chars().count());
        }
    }

    #[test]
    fn rules_reject_bare_alif_variant() {
        assert!(NormalizationRules::new([BARE_ALIF], []).is_err());
    }

    #[test]
    fn rules_reject_overlap() {
        assert!(NormalizationRules::new(['\u{0623}'], ['\u{0623}']).is_err());
    }

    #[test]
    fn document_structure_preserved() {
        let rules = NormalizationRules::default();
        let doc = Document {
            doc_id: "d".into(),
            part_id: 0,
            tokens: vec![
                Token::new("أحمد", 0, 0),
                Token::new("ذَهَبَ", 0, 1),
                Token::new("ً", 1, 2),
            ],
            gold_clusters: ClusterSet::try_new(vec![vec![Span::new(0, 0), Span::new(1, 1)]])
                .unwrap(),
        };
        let norm = rules.normalize_document(&doc);
        assert_eq!(norm.tokens.len(), 3);
        assert_eq!(norm.tokens[0].surface, "احمد");
        assert_eq!(norm.tokens[1].surface, "ذهب");
        assert_eq!(norm.tokens[2].surface, "_");
        assert_eq!(norm.tokens[2].sentence_index, 1);
        assert_eq!(norm.gold_clusters, doc.gold_clusters);
        assert_eq!(rules.normalize_document(&norm), norm);
    }
}
