use std::collections::HashMap;

use serde::{Deserialize, Serialize};

pub const PAD: u32 = 0;
pub const UNK: u32 = 1;
pub const BOS: u32 = 2;
pub const EOS: u32 = 3;
pub const SPECIAL_TOKENS: [&str; 4] = ["<pad>", "<unk>", "<s>", "</s>"];
pub const NUM_SPECIALS: usize = SPECIAL_TOKENS.len();

/// Token/id mapping with four reserved ids (`PAD`, `UNK`, `BOS`, `EOS`).
///
/// Regular tokens are ordered by descending corpus count, ties broken by
/// lexicographic order, so the same corpus always yields the same ids.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "VocabRepr", into = "VocabRepr")]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
    min_count: u32,
}

#[derive(Serialize, Deserialize)]
struct VocabRepr {
    min_count: u32,
    tokens: Vec<String>,
}

impl From<VocabRepr> for Vocabulary {
    fn from(r: VocabRepr) -> Self {
        Vocabulary::from_tokens(r.tokens, r.min_count)
    }
}

impl From<Vocabulary> for VocabRepr {
    fn from(v: Vocabulary) -> Self {
        VocabRepr {
            min_count: v.min_count,
            tokens: v.tokens,
        }
    }
}

impl Vocabulary {
    /// Builds a vocabulary from tokenized sequences. `min_count` below 1 is
    /// treated as 1.
    pub fn from_sequences<I, S, T>(sequences: I, min_count: u32) -> Self
    where
        I: IntoIterator<Item = S>,
        S: IntoIterator<Item = T>,
        T: AsRef<str>,
    {
        let min_count = min_count.max(1);
        let mut counts: HashMap<String, u32> = HashMap::new();
        for seq in sequences {
            for tok in seq {
                let tok = tok.as_ref();
                if SPECIAL_TOKENS.contains(&tok) {
                    continue;
                }
                *counts.entry(tok.to_owned()).or_default() += 1;
            }
        }
        let mut kept: Vec<(String, u32)> = counts.into_iter().filter(|(_, c)| *c >= min_count).collect();
        kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));

        let mut tokens: Vec<String> = SPECIAL_TOKENS.iter().map(|s| s.to_string()).collect();
        tokens.extend(kept.into_iter().map(|(t, _)| t));
        Self::from_ordered(tokens, min_count)
    }

    /// Rebuilds a vocabulary from a full id-ordered token list (specials
    /// included, as produced by [`Vocabulary::tokens`]).
    pub fn from_tokens(tokens: Vec<String>, min_count: u32) -> Self {
        let mut all: Vec<String> = SPECIAL_TOKENS.iter().map(|s| s.to_string()).collect();
        all.extend(tokens.into_iter().filter(|t| !SPECIAL_TOKENS.contains(&t.as_str())));
        Self::from_ordered(all, min_count)
    }

    fn from_ordered(tokens: Vec<String>, min_count: u32) -> Self {
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Vocabulary {
            tokens,
            index,
            min_count,
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.len() == NUM_SPECIALS
    }

    pub fn min_count(&self) -> u32 {
        self.min_count
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Id of `token`, or `UNK`.
    pub fn id(&self, token: &str) -> u32 {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn get(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn encode<T: AsRef<str>>(&self, tokens: &[T]) -> Vec<u32> {
        tokens.iter().map(|t| self.id(t.as_ref())).collect()
    }

    pub fn decode(&self, ids: &[u32]) -> Vec<String> {
        ids.iter()
            .map(|&i| self.token(i).unwrap_or(SPECIAL_TOKENS[UNK as usize]).to_owned())
            .collect()
    }

    /// Ids of all regular (non-special) tokens.
    pub fn regular_ids(&self) -> std::ops::Range<u32> {
        NUM_SPECIALS as u32..self.tokens.len() as u32
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn count_threshold_maps_rare_tokens_to_unk() {
        let v = Vocabulary::from_sequences([vec!["a", "a", "b"], vec!["a"]], 2);
        assert_eq!(v.len(), NUM_SPECIALS + 1);
        assert_eq!(v.id("a"), 4);
        assert_eq!(v.encode(&["b"]), vec![UNK]);
    }

    #[test]
    fn empty_corpus_has_only_specials() {
        let v = Vocabulary::from_sequences(Vec::<Vec<&str>>::new(), 1);
        assert_eq!(v.tokens(), &SPECIAL_TOKENS.map(String::from));
        assert!(v.is_empty());
    }

    #[test]
    fn ties_are_lexicographic_and_counts_descend() {
        let v = Vocabulary::from_sequences([vec!["zeta", "beta", "alpha", "zeta"]], 1);
        assert_eq!(&v.tokens()[NUM_SPECIALS..], &["zeta", "alpha", "beta"]);
    }

    #[test]
    fn serde_round_trip_rebuilds_index() {
        let v = Vocabulary::from_sequences([vec!["x", "y", "y"]], 1);
        let json = serde_json::to_string(&v).unwrap();
        let back: Vocabulary = serde_json::from_str(&json).unwrap();
        assert_eq!(back, v);
        assert_eq!(back.id("y"), 4);
    }
}
