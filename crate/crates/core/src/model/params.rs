use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::ModelConfig;
use crate::error::{Error, Result};
use crate::rng;
use crate::tensor::{Matrix, Scalar};

/// Weights of one pre-norm block. Linear maps are stored `out x in`.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerParams<T> {
    pub wq: Matrix<T>,
    pub wk: Matrix<T>,
    pub wv: Matrix<T>,
    pub wo: Matrix<T>,
    pub w_up: Matrix<T>,
    pub w_gate: Matrix<T>,
    pub w_down: Matrix<T>,
    /// RMSNorm gain before attention.
    pub norm_attn: Vec<T>,
    /// RMSNorm gain before the SwiGLU block.
    pub norm_ffn: Vec<T>,
}

/// Multiplicative gates over regions created by masked growth.
///
/// Width gates scale every output coordinate at or beyond the base widths
/// (`base_d_model` for residual-stream and attention projections,
/// `base_d_ffn` for the SwiGLU inner projections). Block gates scale the
/// residual branches of a whole layer. Gates are not trained; a schedule
/// raises them from 0 to 1.
#[derive(Clone, Debug, PartialEq)]
pub struct Gates<T> {
    pub base_d_model: usize,
    pub base_d_ffn: usize,
    pub embed: T,
    pub width: Vec<T>,
    pub block: Vec<Option<T>>,
    /// Steps over which the gates ramp to 1; `None` means "use the warmup
    /// length of the run that continues training".
    pub horizon: Option<usize>,
}

impl<T: Scalar> Gates<T> {
    /// Sets every gate (width and block) to `v`.
    pub fn set_all(&mut self, v: T) {
        self.embed = v;
        self.width.iter_mut().for_each(|g| *g = v);
        self.block.iter_mut().flatten().for_each(|g| *g = v);
    }

    pub fn values(&self) -> impl Iterator<Item = T> + '_ {
        core::iter::once(self.embed).chain(self.width.iter().copied()).chain(self.block.iter().flatten().copied())
    }

    pub fn cast<U: Scalar>(&self) -> Gates<U> {
        let c = |x: T| U::lift(x.as_f64());
        Gates {
            base_d_model: self.base_d_model,
            base_d_ffn: self.base_d_ffn,
            embed: c(self.embed),
            width: self.width.iter().map(|&x| c(x)).collect(),
            block: self.block.iter().map(|g| g.map(c)).collect(),
            horizon: self.horizon,
        }
    }
}

/// All trainable tensors of one model, plus optional growth gates.
#[derive(Clone, Debug, PartialEq)]
pub struct ParameterSet<T> {
    pub embedding: Matrix<T>,
    pub layers: Vec<LayerParams<T>>,
    pub norm_final: Vec<T>,
    pub head: Matrix<T>,
    pub gates: Option<Gates<T>>,
}

/// Per-tensor derivatives; same layout as the parameters, never gated.
pub type Gradients<T> = ParameterSet<T>;

/// Named, shaped, read-only handle to one tensor.
#[derive(Debug)]
pub struct TensorRef<'a, T> {
    pub name: String,
    pub kind: TensorKind,
    pub shape: Vec<usize>,
    pub data: &'a [T],
}

/// Tensor categories, used by weight decay and noise injection.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TensorKind {
    Embedding,
    Attention,
    AttentionOut,
    FfnIn,
    FfnOut,
    Norm,
    Head,
}

impl<T: Scalar> LayerParams<T> {
    pub fn zeros(config: &ModelConfig) -> Self {
        let (d, f) = (config.d_model, config.d_ffn);
        LayerParams {
            wq: Matrix::zeros(d, d),
            wk: Matrix::zeros(d, d),
            wv: Matrix::zeros(d, d),
            wo: Matrix::zeros(d, d),
            w_up: Matrix::zeros(f, d),
            w_gate: Matrix::zeros(f, d),
            w_down: Matrix::zeros(d, f),
            norm_attn: vec![T::zero(); d],
            norm_ffn: vec![T::zero(); d],
        }
    }

    fn slots(&self) -> [(&'static str, TensorKind, &[T]); 9] {
        [
            ("wq", TensorKind::Attention, self.wq.as_slice()),
            ("wk", TensorKind::Attention, self.wk.as_slice()),
            ("wv", TensorKind::Attention, self.wv.as_slice()),
            ("wo", TensorKind::AttentionOut, self.wo.as_slice()),
            ("w_up", TensorKind::FfnIn, self.w_up.as_slice()),
            ("w_gate", TensorKind::FfnIn, self.w_gate.as_slice()),
            ("w_down", TensorKind::FfnOut, self.w_down.as_slice()),
            ("norm_attn", TensorKind::Norm, &self.norm_attn),
            ("norm_ffn", TensorKind::Norm, &self.norm_ffn),
        ]
    }

    fn slots_mut(&mut self) -> [(&'static str, TensorKind, &mut [T]); 9] {
        [
            ("wq", TensorKind::Attention, self.wq.as_mut_slice()),
            ("wk", TensorKind::Attention, self.wk.as_mut_slice()),
            ("wv", TensorKind::Attention, self.wv.as_mut_slice()),
            ("wo", TensorKind::AttentionOut, self.wo.as_mut_slice()),
            ("w_up", TensorKind::FfnIn, self.w_up.as_mut_slice()),
            ("w_gate", TensorKind::FfnIn, self.w_gate.as_mut_slice()),
            ("w_down", TensorKind::FfnOut, self.w_down.as_mut_slice()),
            ("norm_attn", TensorKind::Norm, &mut self.norm_attn),
            ("norm_ffn", TensorKind::Norm, &mut self.norm_ffn),
        ]
    }

    fn shapes(&self) -> [Vec<usize>; 9] {
        let m = |x: &Matrix<T>| vec![x.rows(), x.cols()];
        [
            m(&self.wq),
            m(&self.wk),
            m(&self.wv),
            m(&self.wo),
            m(&self.w_up),
            m(&self.w_gate),
            m(&self.w_down),
            vec![self.norm_attn.len()],
            vec![self.norm_ffn.len()],
        ]
    }

    pub fn cast<U: Scalar>(&self) -> LayerParams<U> {
        let v = |x: &Vec<T>| x.iter().map(|&e| U::lift(e.as_f64())).collect();
        LayerParams {
            wq: self.wq.cast(),
            wk: self.wk.cast(),
            wv: self.wv.cast(),
            wo: self.wo.cast(),
            w_up: self.w_up.cast(),
            w_gate: self.w_gate.cast(),
            w_down: self.w_down.cast(),
            norm_attn: v(&self.norm_attn),
            norm_ffn: v(&self.norm_ffn),
        }
    }
}

impl<T: Scalar> ParameterSet<T> {
    pub fn zeros(config: &ModelConfig) -> Self {
        ParameterSet {
            embedding: Matrix::zeros(config.vocab_size, config.d_model),
            layers: (0..config.n_layers).map(|_| LayerParams::zeros(config)).collect(),
            norm_final: vec![T::zero(); config.d_model],
            head: Matrix::zeros(config.vocab_size, config.d_model),
            gates: None,
        }
    }

    /// Zero tensors with this set's shapes (used for gradient buffers).
    pub fn zeros_like(&self) -> Self {
        let mut out = self.clone();
        out.gates = None;
        out.for_each_mut(|_, _, data| data.iter_mut().for_each(|x| *x = T::zero()));
        out
    }

    /// Visits every tensor in canonical order.
    pub fn for_each<'a>(&'a self, mut f: impl FnMut(&str, TensorKind, &'a [T])) {
        f("embedding", TensorKind::Embedding, self.embedding.as_slice());
        for (i, layer) in self.layers.iter().enumerate() {
            for (name, kind, data) in layer.slots() {
                f(&format!("layers.{i}.{name}"), kind, data);
            }
        }
        f("norm_final", TensorKind::Norm, &self.norm_final);
        f("head", TensorKind::Head, self.head.as_slice());
    }

    pub fn for_each_mut(&mut self, mut f: impl FnMut(&str, TensorKind, &mut [T])) {
        f("embedding", TensorKind::Embedding, self.embedding.as_mut_slice());
        for (i, layer) in self.layers.iter_mut().enumerate() {
            for (name, kind, data) in layer.slots_mut() {
                f(&format!("layers.{i}.{name}"), kind, data);
            }
        }
        f("norm_final", TensorKind::Norm, &mut self.norm_final);
        f("head", TensorKind::Head, self.head.as_mut_slice());
    }

    /// Mutable slices of every tensor in canonical order.
    pub fn slices_mut(&mut self) -> Vec<&mut [T]> {
        let mut out: Vec<&mut [T]> = vec![self.embedding.as_mut_slice()];
        for layer in self.layers.iter_mut() {
            for (_, _, d) in layer.slots_mut() {
                out.push(d);
            }
        }
        out.push(&mut self.norm_final);
        out.push(self.head.as_mut_slice());
        out
    }

    /// Pairs every tensor of `self` with the same tensor of `other`.
    pub fn zip_mut(&mut self, other: &ParameterSet<T>, mut f: impl FnMut(TensorKind, &mut [T], &[T])) {
        let mut theirs = Vec::new();
        other.for_each(|_, _, d| theirs.push(d));
        let mut i = 0;
        self.for_each_mut(|_, kind, mine| {
            f(kind, mine, theirs[i]);
            i += 1;
        });
    }

    /// Canonical-order list of named tensors with shapes.
    pub fn tensors(&self) -> Vec<TensorRef<'_, T>> {
        let mut out = Vec::new();
        out.push(TensorRef {
            name: "embedding".into(),
            kind: TensorKind::Embedding,
            shape: vec![self.embedding.rows(), self.embedding.cols()],
            data: self.embedding.as_slice(),
        });
        for (i, layer) in self.layers.iter().enumerate() {
            for ((name, kind, data), shape) in layer.slots().into_iter().zip(layer.shapes()) {
                out.push(TensorRef { name: format!("layers.{i}.{name}"), kind, shape, data });
            }
        }
        out.push(TensorRef {
            name: "norm_final".into(),
            kind: TensorKind::Norm,
            shape: vec![self.norm_final.len()],
            data: &self.norm_final,
        });
        out.push(TensorRef {
            name: "head".into(),
            kind: TensorKind::Head,
            shape: vec![self.head.rows(), self.head.cols()],
            data: self.head.as_slice(),
        });
        out
    }

    pub fn num_params(&self) -> usize {
        let mut n = 0;
        self.for_each(|_, _, d| n += d.len());
        n
    }

    pub fn is_finite(&self) -> bool {
        let mut ok = true;
        self.for_each(|_, _, d| ok &= d.iter().all(|x| x.is_finite()));
        ok
    }

    /// Checks tensor shapes against `config`, finiteness, and gate ranges.
    pub fn validate(&self, config: &ModelConfig) -> Result<()> {
        self.check_shapes(config)?;
        if !self.is_finite() {
            return Err(Error::input("parameter set contains non-finite entries"));
        }
        Ok(())
    }

    /// Shape and gate-layout checks only; no scan over tensor values.
    pub fn check_shapes(&self, config: &ModelConfig) -> Result<()> {
        config.validate()?;
        if self.layers.len() != config.n_layers {
            return Err(Error::Shape {
                name: "layers".into(),
                expected: format!("{}", config.n_layers),
                actual: format!("{}", self.layers.len()),
            });
        }
        let (v, d, f) = (config.vocab_size, config.d_model, config.d_ffn);
        let layer_shapes = [[d, d], [d, d], [d, d], [d, d], [f, d], [f, d], [d, f], [d, 1], [d, 1]];
        let mut expected: Vec<[usize; 2]> = Vec::new();
        expected.push([v, d]);
        for _ in 0..config.n_layers {
            expected.extend_from_slice(&layer_shapes);
        }
        expected.push([d, 1]);
        expected.push([v, d]);
        for (t, e) in self.tensors().iter().zip(expected.iter()) {
            let e: &[usize] = if e[1] == 1 && t.shape.len() == 1 { &e[..1] } else { &e[..] };
            if t.shape != e {
                return Err(Error::Shape {
                    name: t.name.clone(),
                    expected: format!("{e:?}"),
                    actual: format!("{:?}", t.shape),
                });
            }
        }
        if let Some(g) = &self.gates {
            if g.width.len() != config.n_layers || g.block.len() != config.n_layers {
                return Err(Error::input("gate vectors do not match the layer count"));
            }
            if g.base_d_model > config.d_model || g.base_d_ffn > config.d_ffn {
                return Err(Error::input("gate base widths exceed the model widths"));
            }
            if g.base_d_model % config.head_dim != 0 {
                return Err(Error::input("gated width region must start on a head boundary"));
            }
            if g.values().any(|v| !(v >= T::zero() && v <= T::one())) {
                return Err(Error::input("gate values must lie in [0, 1]"));
            }
        }
        Ok(())
    }

    pub fn cast<U: Scalar>(&self) -> ParameterSet<U> {
        ParameterSet {
            embedding: self.embedding.cast(),
            layers: self.layers.iter().map(|l| l.cast()).collect(),
            norm_final: self.norm_final.iter().map(|&e| U::lift(e.as_f64())).collect(),
            head: self.head.cast(),
            gates: self.gates.as_ref().map(|g| g.cast()),
        }
    }

    /// Sum of squares over all tensors, accumulated in `f64`.
    pub fn sq_norm(&self) -> f64 {
        let mut s = 0.0;
        self.for_each(|_, _, d| s += d.iter().map(|x| x.as_f64() * x.as_f64()).sum::<f64>());
        s
    }
}

/// Fresh parameters: zero-mean normal weights with standard deviation 0.02,
/// scaled by `1/sqrt(2 l)` on the residual output projections (`wo`,
/// `w_down`); norm gains start at one. Deterministic in `seed`.
pub fn init_params<T: Scalar>(config: &ModelConfig, seed: u64) -> Result<ParameterSet<T>> {
    config.validate()?;
    let mut r = rng::rng(seed, 0);
    Ok(random_params(config, &mut r, 0.02))
}

pub(crate) fn random_matrix<T: Scalar>(rows: usize, cols: usize, r: &mut rng::Rng, std: f64) -> Matrix<T> {
    Matrix::from_fn(rows, cols, |_, _| rng::normal(r, std))
}

pub(crate) fn random_layer<T: Scalar>(config: &ModelConfig, r: &mut rng::Rng, std: f64) -> LayerParams<T> {
    let (d, f) = (config.d_model, config.d_ffn);
    let resid_std = std / libm::sqrt(2.0 * config.n_layers as f64);
    LayerParams {
        wq: random_matrix(d, d, r, std),
        wk: random_matrix(d, d, r, std),
        wv: random_matrix(d, d, r, std),
        wo: random_matrix(d, d, r, resid_std),
        w_up: random_matrix(f, d, r, std),
        w_gate: random_matrix(f, d, r, std),
        w_down: random_matrix(d, f, r, resid_std),
        norm_attn: vec![T::one(); d],
        norm_ffn: vec![T::one(); d],
    }
}

fn random_params<T: Scalar>(config: &ModelConfig, r: &mut rng::Rng, std: f64) -> ParameterSet<T> {
    let embedding = random_matrix(config.vocab_size, config.d_model, r, std);
    let layers = (0..config.n_layers).map(|_| random_layer(config, r, std)).collect();
    let head = random_matrix(config.vocab_size, config.d_model, r, std);
    ParameterSet { embedding, layers, norm_final: vec![T::one(); config.d_model], head, gates: None }
}
