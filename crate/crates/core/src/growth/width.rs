//! Width growth: direct (copy and split) and zero-initialized expansion.

use alloc::vec::Vec;

use super::{prepare, SEED_SPLIT, SEED_ZERO};
use crate::error::{Error, Result};
use crate::model::{LayerParams, ModelConfig, ParameterSet};
use crate::rng::{self, Rng};
use crate::tensor::{Matrix, Scalar};

/// Coordinate map of one expanded space: grown coordinate `j` copies base
/// coordinate `src[j]`; `split[j]` is the weight applied when `j` is read as
/// an input (fan-in). The splits of all copies of a base coordinate sum to 1.
#[derive(Clone, Debug, PartialEq)]
pub struct WidthMap {
    pub base: usize,
    pub src: Vec<usize>,
    pub split: Vec<f64>,
}

impl WidthMap {
    pub fn identity(n: usize) -> Self {
        WidthMap { base: n, src: (0..n).collect(), split: alloc::vec![1.0; n] }
    }

    /// `g` tiled copies of `base` coordinates (`src[j] = j mod base`) with
    /// uneven splits. For `g = 2` each pair is `(α, 1 − α)` with
    /// `α ~ U(0.2, 0.8)`; for larger `g` each copy draws from `U(0.2, 0.8)` and
    /// the draws of one base coordinate are normalized to sum to 1.
    pub fn tiled(base: usize, g: usize, rng: &mut Rng) -> Self {
        let n = base * g;
        let src = (0..n).map(|j| j % base).collect();
        let mut split = alloc::vec![1.0; n];
        if g == 2 {
            for i in 0..base {
                let a = rng::uniform(rng, 0.2, 0.8);
                split[i] = a;
                split[base + i] = 1.0 - a;
            }
        } else if g > 2 {
            for i in 0..base {
                let draws: Vec<f64> = (0..g).map(|_| rng::uniform(rng, 0.2, 0.8)).collect();
                let total: f64 = draws.iter().sum();
                for (c, u) in draws.into_iter().enumerate() {
                    split[c * base + i] = u / total;
                }
            }
        }
        WidthMap { base, src, split }
    }

    /// Same coordinates with unit fan-in weights (plain copies).
    pub fn copies(&self) -> Self {
        WidthMap { split: alloc::vec![1.0; self.src.len()], ..self.clone() }
    }

    pub fn len(&self) -> usize {
        self.src.len()
    }

    pub fn is_empty(&self) -> bool {
        self.src.is_empty()
    }

    /// Dense `len x base` matrix `B` with `B[j, src[j]] = split[j]`.
    pub fn to_matrix<T: Scalar>(&self) -> Matrix<T> {
        let mut m = Matrix::zeros(self.len(), self.base);
        for (j, (&s, &w)) in self.src.iter().zip(&self.split).enumerate() {
            m.set(j, s, T::lift(w));
        }
        m
    }
}

/// Expands an `out x in` weight: `W'[r, c] = W[out.src[r], inp.src[c]] * inp.split[c]`.
///
/// Fan-out rows are duplicated, fan-in columns are split. With an input
/// `x'` that repeats `x` along `inp`, `W' x'` repeats `W x` along `out`.
pub fn expand_linear<T: Scalar>(w: &Matrix<T>, out: &WidthMap, inp: &WidthMap) -> Matrix<T> {
    assert_eq!(w.rows(), out.base, "fan-out map does not match weight rows");
    assert_eq!(w.cols(), inp.base, "fan-in map does not match weight columns");
    let split: Vec<T> = inp.split.iter().map(|&s| T::lift(s)).collect();
    Matrix::from_fn(out.len(), inp.len(), |r, c| w.get(out.src[r], inp.src[c]) * split[c])
}

/// Width factor `g_w` as the ratio of grown to base `d_model`, checking that
/// every width dimension scales by the same integer.
pub(crate) fn width_factor(small: &ModelConfig, large: &ModelConfig) -> Result<usize> {
    let bad = || {
        Error::input(alloc::format!(
            "grown width ({}, {}, {} heads) is not an integer multiple of base width ({}, {}, {} heads)",
            large.d_model,
            large.d_ffn,
            large.n_heads,
            small.d_model,
            small.d_ffn,
            small.n_heads
        ))
    };
    if large.head_dim != small.head_dim || large.vocab_size != small.vocab_size || large.d_model % small.d_model != 0 {
        return Err(bad());
    }
    let g = large.d_model / small.d_model;
    if g == 0 || large.d_ffn != g * small.d_ffn || large.n_heads != g * small.n_heads {
        return Err(bad());
    }
    Ok(g)
}

/// Split maps used by direct width growth, one per input space: the residual
/// stream, the concatenated attention heads and the SwiGLU inner space.
#[derive(Clone, Debug)]
pub(crate) struct DirectMaps {
    pub resid: WidthMap,
    pub attn: WidthMap,
    pub ffn: WidthMap,
}

impl DirectMaps {
    pub fn draw(config: &ModelConfig, g: usize, seed: u64) -> Self {
        let mut r = rng::rng(seed, SEED_SPLIT);
        let resid = WidthMap::tiled(config.d_model, g, &mut r);
        let attn = WidthMap::tiled(config.d_model, g, &mut r);
        let ffn = WidthMap::tiled(config.d_ffn, g, &mut r);
        DirectMaps { resid, attn, ffn }
    }
}

fn check_factor(g: usize) -> Result<()> {
    if g == 0 {
        return Err(Error::input("growth factor must be at least 1"));
    }
    Ok(())
}

/// Direct width growth by `g` (copy and split).
///
/// Heads are duplicated whole (`head_dim` is kept), fan-out rows are copied,
/// fan-in columns are split with random uneven weights that sum to one, the
/// embedding columns are copied and every RMSNorm gain is copied and scaled
/// by `sqrt(d / D)`. Without the norms the grown network would compute the
/// base function on the duplicated stream; the norm rescaling makes the full
/// model non-preserving.
pub fn grow_width_direct<T: Scalar>(
    params: &ParameterSet<T>,
    config: &ModelConfig,
    g: usize,
    seed: u64,
) -> Result<(ParameterSet<T>, ModelConfig)> {
    check_factor(g)?;
    let params = prepare(params, config)?;
    let grown = config.widened(g);
    if g == 1 {
        return Ok((params.into_owned(), grown));
    }
    let maps = DirectMaps::draw(config, g, seed);
    let vocab = WidthMap::identity(config.vocab_size);
    let (res, attn, ffn) = (&maps.resid, &maps.attn, &maps.ffn);
    let norm_scale = libm::sqrt(config.d_model as f64 / grown.d_model as f64);
    let norm = |gain: &[T]| expand_gain(gain, res, norm_scale);
    let layers = params
        .layers
        .iter()
        .map(|lp| LayerParams {
            wq: expand_linear(&lp.wq, attn, res),
            wk: expand_linear(&lp.wk, attn, res),
            wv: expand_linear(&lp.wv, attn, res),
            wo: expand_linear(&lp.wo, res, attn),
            w_up: expand_linear(&lp.w_up, ffn, res),
            w_gate: expand_linear(&lp.w_gate, ffn, res),
            w_down: expand_linear(&lp.w_down, res, ffn),
            norm_attn: norm(&lp.norm_attn),
            norm_ffn: norm(&lp.norm_ffn),
        })
        .collect();
    let out = ParameterSet {
        embedding: expand_linear(&params.embedding, &vocab, &res.copies()),
        layers,
        norm_final: norm(&params.norm_final),
        head: expand_linear(&params.head, &vocab, res),
        gates: None,
    };
    Ok((out, grown))
}

fn expand_gain<T: Scalar>(gain: &[T], map: &WidthMap, scale: f64) -> Vec<T> {
    let s = T::lift(scale);
    map.src.iter().map(|&i| gain[i] * s).collect()
}

/// Places `w` in the top-left corner of a `rows x cols` matrix; the rest is
/// filled by `fill(r, c)`.
pub(crate) fn embed_block<T: Scalar>(
    w: &Matrix<T>,
    rows: usize,
    cols: usize,
    mut fill: impl FnMut(usize, usize) -> T,
) -> Matrix<T> {
    Matrix::from_fn(rows, cols, |r, c| if r < w.rows() && c < w.cols() { w.get(r, c) } else { fill(r, c) })
}

/// Existing RMSNorm gains scaled by `sqrt(d / D)`, new coordinates set to 1.
pub(crate) fn extend_gain<T: Scalar>(gain: &[T], grown: usize) -> Vec<T> {
    let s = T::lift(libm::sqrt(gain.len() as f64 / grown as f64));
    (0..grown).map(|i| if i < gain.len() { gain[i] * s } else { T::one() }).collect()
}

/// Zero-initialized width growth by `g`.
///
/// Each weight becomes the block matrix
/// `[[W, 0], [A, C]]` (rows are outputs): old outputs never read new inputs,
/// and new outputs of the query/key/value and SwiGLU input projections are
/// random (std 0.02). Projections that write the residual stream (attention
/// output, SwiGLU down) get all-zero new rows, as do the new embedding columns,
/// so the new residual coordinates stay exactly zero. Existing norm gains are
/// scaled by `sqrt(d / D)`, which cancels the change of the RMS over the wider
/// stream; the grown model computes the same logits.
pub fn grow_width_zero<T: Scalar>(
    params: &ParameterSet<T>,
    config: &ModelConfig,
    g: usize,
    seed: u64,
) -> Result<(ParameterSet<T>, ModelConfig)> {
    check_factor(g)?;
    let params = prepare(params, config)?;
    let grown = config.widened(g);
    if g == 1 {
        return Ok((params.into_owned(), grown));
    }
    let (d, f) = (config.d_model, config.d_ffn);
    let (dd, ff) = (grown.d_model, grown.d_ffn);
    let mut r = rng::rng(seed, SEED_ZERO);
    let zero = |_: usize, _: usize| T::zero();
    let reader = |w: &Matrix<T>, rows: usize, r: &mut Rng| {
        embed_block(w, rows, dd, |row, _| if row < w.rows() { T::zero() } else { rng::normal(r, 0.02) })
    };
    let mut layers = Vec::with_capacity(params.layers.len());
    for lp in &params.layers {
        layers.push(LayerParams {
            wq: reader(&lp.wq, dd, &mut r),
            wk: reader(&lp.wk, dd, &mut r),
            wv: reader(&lp.wv, dd, &mut r),
            wo: embed_block(&lp.wo, dd, dd, zero),
            w_up: reader(&lp.w_up, ff, &mut r),
            w_gate: reader(&lp.w_gate, ff, &mut r),
            w_down: embed_block(&lp.w_down, dd, ff, zero),
            norm_attn: extend_gain(&lp.norm_attn, dd),
            norm_ffn: extend_gain(&lp.norm_ffn, dd),
        });
    }
    debug_assert!(d <= dd && f <= ff);
    let out = ParameterSet {
        embedding: embed_block(&params.embedding, config.vocab_size, dd, zero),
        layers,
        norm_final: extend_gain(&params.norm_final, dd),
        head: embed_block(&params.head, config.vocab_size, dd, zero),
        gates: None,
    };
    Ok((out, grown))
}
