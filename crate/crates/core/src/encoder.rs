//! Hashed bag-of-n-grams text embedding with mean pooling.
//!
//! Text is lowercased and split on every non-alphanumeric character. Each
//! unigram and each adjacent-token bigram (joined by one space) is hashed with
//! 64-bit FNV-1a; the hash modulo `d_emb` selects a slot and the top bit picks
//! the sign. The signed counts are divided by the number of unigrams.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

pub const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
pub const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub const DEFAULT_DIM: usize = 256;

pub fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(FNV_OFFSET, |h, b| (h ^ *b as u64).wrapping_mul(FNV_PRIME))
}

pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Embedding {
    pub values: Vec<f64>,
    /// Set when the text had no tokens; `values` is then all zeros.
    pub empty: bool,
}

/// Slot and sign for one feature string.
pub fn slot(feature: &str, d_emb: usize) -> (usize, f64) {
    let h = fnv1a(feature.as_bytes());
    let sign = if h >> 63 == 1 { -1.0 } else { 1.0 };
    ((h % d_emb as u64) as usize, sign)
}

pub fn encode(text: &str, d_emb: usize) -> Embedding {
    assert!(d_emb > 0, "embedding dimension must be positive");
    let tokens = tokenize(text);
    let mut values = vec![0.0; d_emb];
    if tokens.is_empty() {
        return Embedding { values, empty: true };
    }
    let mut add = |feature: &str| {
        let (i, s) = slot(feature, d_emb);
        values[i] += s;
    };
    for t in &tokens {
        add(t);
    }
    let mut bigram = String::new();
    for pair in tokens.windows(2) {
        bigram.clear();
        bigram.push_str(&pair[0]);
        bigram.push(' ');
        bigram.push_str(&pair[1]);
        add(&bigram);
    }
    let n = tokens.len() as f64;
    for v in &mut values {
        *v /= n;
    }
    Embedding { values, empty: false }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fnv_reference_vectors() {
        // published FNV-1a 64 test vectors
        assert_eq!(fnv1a(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a(b"foobar"), 0x85944171f73967e8);
    }

    #[test]
    fn tokenizer_splits_and_lowercases() {
        assert_eq!(tokenize("My heart-rate: 95 BPM!"), ["my", "heart", "rate", "95", "bpm"]);
        assert!(tokenize("  ,;- ").is_empty());
    }

    #[test]
    fn empty_text_is_flagged_zero() {
        let e = encode("...", 8);
        assert!(e.empty);
        assert!(e.values.iter().all(|v| *v == 0.0));
        assert!(!encode("x", 8).empty);
    }

    #[test]
    fn entries_are_bounded() {
        let e = encode("a a a a a a a a", 4);
        assert!(e.values.iter().all(|v| v.abs() <= 2.0));
        // 8 unigrams + 7 bigrams / 8 tokens, if nothing cancels
        let total: f64 = e.values.iter().map(|v| v.abs()).sum();
        assert!(total <= 15.0 / 8.0 + 1e-12);
    }

    #[test]
    fn identical_ngram_multisets_encode_identically() {
        // both have unigrams {a:2, b:1} and bigrams {"a b", "b a"}
        assert_eq!(encode("a b a", 32), encode("A, b. a", 32));
        assert_ne!(encode("a b", 32), encode("b a", 32));
    }
}
