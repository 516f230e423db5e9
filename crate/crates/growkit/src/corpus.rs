//! Byte-level corpora: files on disk and a synthetic text generator.

use std::path::Path;

use growkit_core::rng::rng;
use growkit_core::trainer::TokenStream;
use rand::Rng;

use crate::error::{Error, Result};

/// Byte vocabulary size.
pub const BYTE_VOCAB: usize = 256;

/// Reads `path` as bytes (token id = byte value) and cuts it into `seq_len`
/// windows whose order is shuffled per epoch from `seed`.
pub fn load_corpus(path: &Path, seq_len: usize, seed: u64) -> Result<TokenStream> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(TokenStream::from_bytes(&bytes, seq_len, seed)?)
}

const ONSETS: [&str; 20] =
    ["b", "c", "d", "f", "g", "h", "k", "l", "m", "n", "p", "r", "s", "t", "v", "w", "st", "tr", "ch", "sh"];
const VOWELS: [&str; 8] = ["a", "e", "i", "o", "u", "ai", "ea", "ou"];
const CODAS: [&str; 8] = ["", "", "", "n", "r", "s", "t", "l"];

/// Deterministic English-like text of exactly `len` bytes.
///
/// Words come from a fixed random lexicon; each word prefers a small set of
/// successors, sentences are capitalized and end with punctuation, and
/// paragraphs are separated by newlines. The result is learnable at several
/// scales (spelling, word transitions, sentence shape).
pub fn synthetic_corpus(len: usize, seed: u64) -> Vec<u8> {
    let mut r = rng(seed, 31);
    let lexicon: Vec<String> = (0..1500)
        .map(|_| {
            let syllables = 1 + skewed(&mut r, 3);
            (0..syllables)
                .map(|_| {
                    let mut s = String::from(ONSETS[r.random_range(0..ONSETS.len())]);
                    s.push_str(VOWELS[r.random_range(0..VOWELS.len())]);
                    s.push_str(CODAS[r.random_range(0..CODAS.len())]);
                    s
                })
                .collect()
        })
        .collect();
    let successors: Vec<[usize; 6]> =
        (0..lexicon.len()).map(|_| std::array::from_fn(|_| skewed(&mut r, lexicon.len()))).collect();

    let mut out = Vec::with_capacity(len + 64);
    let mut word = skewed(&mut r, lexicon.len());
    while out.len() < len {
        let words = 4 + r.random_range(0..10);
        for k in 0..words {
            let w = lexicon[word].as_bytes();
            if k == 0 {
                out.push(w[0].to_ascii_uppercase());
                out.extend_from_slice(&w[1..]);
            } else {
                out.extend_from_slice(w);
            }
            word = if r.random::<f64>() < 0.85 {
                successors[word][skewed(&mut r, 6)]
            } else {
                skewed(&mut r, lexicon.len())
            };
            if k + 1 < words {
                out.push(if r.random::<f64>() < 0.06 { b',' } else { b' ' });
                if out.last() == Some(&b',') {
                    out.push(b' ');
                }
            }
        }
        out.push(match r.random_range(0..10) {
            0 => b'?',
            1 => b'!',
            _ => b'.',
        });
        out.push(if r.random::<f64>() < 0.15 { b'\n' } else { b' ' });
    }
    out.truncate(len);
    out
}

/// Index in `0..n` biased towards small values.
fn skewed(r: &mut growkit_core::rng::Rng, n: usize) -> usize {
    let u: f64 = r.random();
    ((u * u * u * n as f64) as usize).min(n - 1)
}
