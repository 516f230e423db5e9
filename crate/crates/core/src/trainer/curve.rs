use alloc::vec::Vec;

use crate::error::{Error, Result};

/// One emitted training sample.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sample {
    pub step: u64,
    pub tokens: u64,
    pub flops: f64,
    /// Mean loss over the steps since the previous sample (nats per token).
    pub loss: f64,
    pub lr: f64,
}

/// Ordered samples with strictly increasing steps and non-decreasing tokens
/// and FLOPs.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LossCurve {
    samples: Vec<Sample>,
}

impl LossCurve {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_samples(samples: Vec<Sample>) -> Result<Self> {
        let mut c = LossCurve::new();
        for s in samples {
            c.push(s)?;
        }
        Ok(c)
    }

    pub fn push(&mut self, s: Sample) -> Result<()> {
        if let Some(last) = self.samples.last() {
            if s.step <= last.step || s.tokens < last.tokens || s.flops < last.flops {
                return Err(Error::input(alloc::format!(
                    "sample at step {} does not advance the curve past step {}",
                    s.step,
                    last.step
                )));
            }
        }
        if !(s.flops >= 0.0) {
            return Err(Error::input("FLOPs must be non-negative"));
        }
        self.samples.push(s);
        Ok(())
    }

    /// Appends every sample of `other`.
    pub fn extend(&mut self, other: &LossCurve) -> Result<()> {
        other.samples.iter().try_for_each(|&s| self.push(s))
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn last(&self) -> Option<&Sample> {
        self.samples.last()
    }

    /// Loss at `tokens` by linear interpolation between bracketing samples.
    pub fn loss_at_tokens(&self, tokens: f64) -> Option<f64> {
        let s = &self.samples;
        let first = s.first()?;
        let last = s.last()?;
        if tokens < first.tokens as f64 || tokens > last.tokens as f64 {
            return None;
        }
        let i = s.partition_point(|x| (x.tokens as f64) < tokens);
        if i == 0 {
            return Some(first.loss);
        }
        let (a, b) = (&s[i - 1], &s[i]);
        let (ta, tb) = (a.tokens as f64, b.tokens as f64);
        if tb == ta {
            return Some(b.loss);
        }
        Some(a.loss + (b.loss - a.loss) * (tokens - ta) / (tb - ta))
    }
}
