use alloc::string::String;
use core::fmt;
use core::str::FromStr;

use super::pattern::{parse_stack_pattern, OriginMap};
use crate::error::{Error, Result};
use crate::model::ModelConfig;

/// Atomic growth operator.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Operator {
    /// Copy and split (width) or stacking (depth).
    Direct,
    /// Trained linear maps from base to grown weights.
    Learn,
    /// Zero-initialized new parameters.
    Zero,
    /// Random new parameters behind masks.
    Random,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Width,
    Depth,
}

impl Operator {
    pub fn as_str(self) -> &'static str {
        match self {
            Operator::Direct => "direct",
            Operator::Learn => "learn",
            Operator::Zero => "zero",
            Operator::Random => "random",
        }
    }
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Width => "width",
            Direction::Depth => "depth",
        }
    }
}

impl fmt::Display for Operator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Operator {
    type Err = Error;

    /// Accepts the operator names plus `stack` as an alias of `direct`.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "direct" | "stack" => Ok(Operator::Direct),
            "learn" => Ok(Operator::Learn),
            "zero" => Ok(Operator::Zero),
            "random" => Ok(Operator::Random),
            _ => Err(Error::input(alloc::format!("unknown operator {s:?}"))),
        }
    }
}

impl FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "width" => Ok(Direction::Width),
            "depth" => Ok(Direction::Depth),
            _ => Err(Error::input(alloc::format!("unknown direction {s:?}"))),
        }
    }
}

/// A growth step: operator, direction and size, optional stack pattern,
/// noise ratio and seed.
///
/// `growth_factor` is the target ratio of non-embedding parameters. Depth
/// growth multiplies the layer count by it; width growth multiplies every
/// width dimension by its square root, which must be an integer.
#[derive(Clone, Debug, PartialEq)]
pub struct GrowthPlan {
    pub operator: Operator,
    pub direction: Direction,
    pub growth_factor: usize,
    /// Depth stacking only; overrides `growth_factor`.
    pub stack_pattern: Option<String>,
    pub noise_ratio: f64,
    pub seed: u64,
    /// Training steps of the learned operator.
    pub meta_steps: usize,
    pub meta_lr: f64,
}

impl GrowthPlan {
    /// Depth growth by 4 with `op`, no noise, seed 0.
    pub fn new(operator: Operator) -> Self {
        GrowthPlan {
            operator,
            direction: Direction::Depth,
            growth_factor: 4,
            stack_pattern: None,
            noise_ratio: 0.0,
            seed: 0,
            meta_steps: 100,
            meta_lr: 1e-2,
        }
    }

    /// Whole-model stacking `g` times.
    pub fn stack(g: usize) -> Self {
        GrowthPlan { growth_factor: g, ..Self::new(Operator::Direct) }
    }

    /// Stacking by pattern.
    pub fn pattern(pattern: impl Into<String>) -> Self {
        GrowthPlan { stack_pattern: Some(pattern.into()), ..Self::new(Operator::Direct) }
    }

    pub fn validate(&self) -> Result<()> {
        if self.growth_factor == 0 {
            return Err(Error::input("growth factor must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.noise_ratio) {
            return Err(Error::input(alloc::format!("noise ratio {} is outside [0, 1]", self.noise_ratio)));
        }
        if self.stack_pattern.is_some() && (self.operator, self.direction) != (Operator::Direct, Direction::Depth) {
            return Err(Error::input("a stack pattern applies only to direct depth growth"));
        }
        if self.direction == Direction::Width {
            self.width_factor()?;
        }
        Ok(())
    }

    /// Per-dimension width multiplier `sqrt(growth_factor)`.
    pub fn width_factor(&self) -> Result<usize> {
        let g = self.growth_factor;
        let r = libm::round(libm::sqrt(g as f64)) as usize;
        if r * r != g {
            return Err(Error::input(alloc::format!(
                "width growth needs a square parameter factor (1, 4, 9, ...), got {g}"
            )));
        }
        Ok(r)
    }

    /// Origin map of stacking plans (pattern or whole-model repetition).
    pub fn origin(&self, base_layers: usize) -> Result<Option<OriginMap>> {
        if (self.operator, self.direction) != (Operator::Direct, Direction::Depth) {
            return Ok(None);
        }
        Ok(Some(match &self.stack_pattern {
            Some(p) => parse_stack_pattern(p, base_layers)?,
            None => OriginMap::repeated(base_layers, self.growth_factor),
        }))
    }

    /// Configuration of the grown model.
    pub fn target_config(&self, base: &ModelConfig) -> Result<ModelConfig> {
        self.validate()?;
        Ok(match self.direction {
            Direction::Width => base.widened(self.width_factor()?),
            Direction::Depth => match self.origin(base.n_layers)? {
                Some(o) => base.with_layers(o.len()),
                None => base.with_layers(base.n_layers * self.growth_factor),
            },
        })
    }
}

impl fmt::Display for GrowthPlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "operator={} direction={} g={}", self.operator, self.direction, self.growth_factor)?;
        if let Some(p) = &self.stack_pattern {
            write!(f, " pattern={p}")?;
        }
        write!(f, " noise={} seed={}", self.noise_ratio, self.seed)?;
        if self.operator == Operator::Learn {
            write!(f, " meta_steps={} meta_lr={}", self.meta_steps, self.meta_lr)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> ModelConfig {
        ModelConfig { vocab_size: 8, d_model: 8, d_ffn: 16, n_heads: 2, head_dim: 4, n_layers: 6, max_seq_len: 4 }
    }

    #[test]
    fn targets() {
        assert_eq!(GrowthPlan::stack(4).target_config(&base()).unwrap().n_layers, 24);
        assert_eq!(GrowthPlan::pattern("1-234*7-56").target_config(&base()).unwrap().n_layers, 24);
        let w = GrowthPlan { direction: Direction::Width, ..GrowthPlan::new(Operator::Zero) };
        let c = w.target_config(&base()).unwrap();
        assert_eq!((c.d_model, c.d_ffn, c.n_heads, c.head_dim), (16, 32, 4, 4));
    }

    #[test]
    fn invalid_plans() {
        let w = GrowthPlan { direction: Direction::Width, growth_factor: 2, ..GrowthPlan::new(Operator::Zero) };
        assert!(w.validate().is_err());
        assert!(GrowthPlan { noise_ratio: 1.2, ..GrowthPlan::stack(2) }.validate().is_err());
        assert!(GrowthPlan { growth_factor: 0, ..GrowthPlan::stack(2) }.validate().is_err());
        let p = GrowthPlan { operator: Operator::Zero, ..GrowthPlan::pattern("12") };
        assert!(p.validate().is_err());
        assert!(GrowthPlan::pattern("17").target_config(&base()).is_err());
    }

    #[test]
    fn names_round_trip() {
        for op in [Operator::Direct, Operator::Learn, Operator::Zero, Operator::Random] {
            assert_eq!(op.as_str().parse::<Operator>().unwrap(), op);
        }
        assert_eq!("stack".parse::<Operator>().unwrap(), Operator::Direct);
        assert!("grow".parse::<Operator>().is_err());
        assert_eq!("width".parse::<Direction>().unwrap(), Direction::Width);
    }
}
