//! In-memory token stream cut into fixed windows.

use alloc::vec::Vec;

use rand::seq::SliceRandom;

use super::SEED_DATA;
use crate::error::{Error, Result};
use crate::rng;

/// Tokens split into non-overlapping windows of `seq_len`. A window yields
/// `seq_len - 1` next-token predictions: inputs are its first `seq_len - 1`
/// tokens and targets the last `seq_len - 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct TokenStream {
    tokens: Vec<u32>,
    seq_len: usize,
    seed: u64,
}

impl TokenStream {
    pub fn new(tokens: Vec<u32>, seq_len: usize, seed: u64) -> Result<Self> {
        if seq_len < 2 {
            return Err(Error::input("window length must be at least 2"));
        }
        if tokens.len() < seq_len {
            return Err(Error::input(alloc::format!(
                "corpus of {} tokens is shorter than one window of {seq_len}",
                tokens.len()
            )));
        }
        Ok(TokenStream { tokens, seq_len, seed })
    }

    /// Byte-level tokenization: every byte is a token id below 256.
    pub fn from_bytes(bytes: &[u8], seq_len: usize, seed: u64) -> Result<Self> {
        Self::new(bytes.iter().map(|&b| u32::from(b)).collect(), seq_len, seed)
    }

    pub fn seq_len(&self) -> usize {
        self.seq_len
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn len_tokens(&self) -> usize {
        self.tokens.len()
    }

    /// Number of whole windows per epoch; a trailing partial window is dropped.
    pub fn windows(&self) -> usize {
        self.tokens.len() / self.seq_len
    }

    /// Largest token id plus one.
    pub fn vocab_needed(&self) -> usize {
        self.tokens.iter().max().map_or(0, |&m| m as usize + 1)
    }

    pub fn window(&self, i: usize) -> &[u32] {
        &self.tokens[i * self.seq_len..(i + 1) * self.seq_len]
    }

    /// Window order of `epoch`, a seeded permutation.
    pub fn epoch_order(&self, epoch: u64) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.windows()).collect();
        let mut r = rng::rng(self.seed ^ epoch.wrapping_mul(0x9E37_79B9_7F4A_7C15), SEED_DATA);
        order.shuffle(&mut r);
        order
    }

    /// Cursor at the start of epoch 0.
    pub fn cursor(&self) -> Cursor {
        Cursor { epoch: 0, index: 0, order: self.epoch_order(0) }
    }

    /// Next `rows` windows in epoch order, wrapping into following epochs.
    pub fn next_batch(&self, cursor: &mut Cursor, rows: usize) -> Batch {
        let t = self.seq_len - 1;
        let mut inputs = Vec::with_capacity(rows * t);
        let mut targets = Vec::with_capacity(rows * t);
        for _ in 0..rows {
            if cursor.index == cursor.order.len() {
                cursor.epoch += 1;
                cursor.index = 0;
                cursor.order = self.epoch_order(cursor.epoch);
            }
            let w = self.window(cursor.order[cursor.index]);
            cursor.index += 1;
            inputs.extend_from_slice(&w[..t]);
            targets.extend_from_slice(&w[1..]);
        }
        Batch { inputs, targets, rows, seq: t }
    }
}

/// Position in the epoch sequence of a stream.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Cursor {
    pub epoch: u64,
    pub index: usize,
    order: Vec<usize>,
}

/// `rows` sequences of `seq` inputs and the matching next-token targets,
/// concatenated row after row.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Batch {
    pub inputs: Vec<u32>,
    pub targets: Vec<u32>,
    pub rows: usize,
    pub seq: usize,
}

impl Batch {
    /// Rows `start..end` as their own batch.
    pub fn slice(&self, start: usize, end: usize) -> Batch {
        let (a, b) = (start * self.seq, end * self.seq);
        Batch {
            inputs: self.inputs[a..b].to_vec(),
            targets: self.targets[a..b].to_vec(),
            rows: end - start,
            seq: self.seq,
        }
    }
}
