//! Stack patterns and connection rate.
//!
//! A pattern lists, group by group, which base layers make up the grown
//! model. Groups are separated by `-`; a group is a run of layer indices
//! (1-based) optionally followed by `*k`, meaning the run is repeated `k`
//! times. `"12-345*7-6"` expands to `1,2,(3,4,5)x7,6`.
//!
//! Single digits address bases of up to nine layers. Deeper bases use the
//! extended form where indices inside a group are comma separated, e.g.
//! `"1,2-3,4,10*5"`; it is selected automatically when the pattern contains a
//! comma or the base has more than nine layers.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::error::{Error, Result};

/// Provenance of each grown layer: `origin[j]` is the 1-based index of the
/// base layer copied into grown layer `j`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OriginMap(Vec<usize>);

impl OriginMap {
    /// Validates every entry against `base_layers`.
    pub fn new(origins: Vec<usize>, base_layers: usize) -> Result<Self> {
        if origins.is_empty() {
            return Err(Error::input("origin map must not be empty"));
        }
        if let Some((j, &o)) = origins.iter().enumerate().find(|(_, &o)| o == 0 || o > base_layers) {
            return Err(Error::input(format!("origin[{j}] = {o} is outside 1..={base_layers}")));
        }
        Ok(OriginMap(origins))
    }

    /// `1..=layers`.
    pub fn identity(layers: usize) -> Self {
        OriginMap((1..=layers).collect())
    }

    /// Whole-model repetition `1..l, 1..l, ...` (`g` copies).
    pub fn repeated(layers: usize, g: usize) -> Self {
        OriginMap((0..g).flat_map(|_| 1..=layers).collect())
    }

    /// Each layer copied `g` times in place: `1,1,..,2,2,..`.
    pub fn interleaved(layers: usize, g: usize) -> Self {
        OriginMap((1..=layers).flat_map(|l| core::iter::repeat_n(l, g)).collect())
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Largest referenced base layer.
    pub fn max_origin(&self) -> usize {
        self.0.iter().copied().max().unwrap_or(0)
    }
}

impl fmt::Display for OriginMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, o) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{o}")?;
        }
        Ok(())
    }
}

fn perr(position: usize, message: impl Into<String>) -> Error {
    Error::Pattern { position, message: message.into() }
}

/// Expands a stack pattern into an origin map over `base_layers` layers.
pub fn parse_stack_pattern(pattern: &str, base_layers: usize) -> Result<OriginMap> {
    if base_layers == 0 {
        return Err(Error::input("base model must have at least one layer"));
    }
    if pattern.is_empty() {
        return Err(perr(0, "empty pattern"));
    }
    let extended = pattern.contains(',') || base_layers > 9;
    let mut origins = Vec::new();
    let mut start = 0;
    for group in pattern.split('-') {
        parse_group(group, start, base_layers, extended, &mut origins)?;
        start += group.len() + 1;
    }
    OriginMap::new(origins, base_layers)
}

fn parse_group(group: &str, at: usize, base_layers: usize, extended: bool, out: &mut Vec<usize>) -> Result<()> {
    if group.is_empty() {
        return Err(perr(at, "empty group"));
    }
    let (run, repeat) = match group.find('*') {
        Some(i) => (&group[..i], Some((i, &group[i + 1..]))),
        None => (group, None),
    };
    if run.is_empty() {
        return Err(perr(at, "group has no layer indices before '*'"));
    }
    let mut layers = Vec::new();
    if extended {
        let mut off = at;
        for item in run.split(',') {
            if item.is_empty() || !item.bytes().all(|b| b.is_ascii_digit()) {
                return Err(perr(off, format!("expected a layer number, found {item:?}")));
            }
            let l: usize = item.parse().map_err(|_| perr(off, "layer number too large"))?;
            check_layer(l, off, base_layers)?;
            layers.push(l);
            off += item.len() + 1;
        }
    } else {
        for (i, ch) in run.char_indices() {
            let l = ch.to_digit(10).ok_or_else(|| perr(at + i, format!("unexpected character {ch:?}")))? as usize;
            check_layer(l, at + i, base_layers)?;
            layers.push(l);
        }
    }
    let k = match repeat {
        None => 1,
        Some((star, digits)) => {
            let pos = at + star + 1;
            if digits.is_empty() {
                return Err(perr(pos, "missing repeat count after '*'"));
            }
            if let Some(i) = digits.find(|c: char| !c.is_ascii_digit()) {
                return Err(perr(pos + i, "repeat count must be a positive integer"));
            }
            let k: usize = digits.parse().map_err(|_| perr(pos, "repeat count too large"))?;
            if k < 1 {
                return Err(perr(pos, "repeat count must be at least 1"));
            }
            k
        }
    };
    for _ in 0..k {
        out.extend_from_slice(&layers);
    }
    Ok(())
}

fn check_layer(l: usize, position: usize, base_layers: usize) -> Result<()> {
    if l == 0 || l > base_layers {
        return Err(perr(position, format!("layer {l} is outside 1..={base_layers}")));
    }
    Ok(())
}

/// Fraction of adjacent grown-layer pairs `(j, j+1)` whose origins are
/// consecutive base layers (`origin[j+1] == origin[j] + 1`).
pub fn connection_rate(origin: &OriginMap) -> Result<f64> {
    let o = origin.as_slice();
    if o.len() < 2 {
        return Err(Error::input("connection rate needs at least two layers"));
    }
    let retained = o.windows(2).filter(|w| w[1] == w[0] + 1).count();
    Ok(retained as f64 / (o.len() - 1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn whole_model_repeat() {
        let o = parse_stack_pattern("123456*4", 6).unwrap();
        assert_eq!(o.len(), 24);
        assert_eq!(o, OriginMap::repeated(6, 4));
    }

    #[test]
    fn front_middle_example_expands() {
        let o = parse_stack_pattern("1-234*7-56", 6).unwrap();
        let mut expected = vec![1];
        for _ in 0..7 {
            expected.extend([2, 3, 4]);
        }
        expected.extend([5, 6]);
        assert_eq!(o.as_slice(), expected.as_slice());
        assert_eq!(o.len(), 24);
        assert_eq!(parse_stack_pattern("12-34*10-56", 6).unwrap().len(), 24);
    }

    #[test]
    fn parse_errors_carry_positions() {
        assert_eq!(
            parse_stack_pattern("127", 6),
            Err(Error::Pattern { position: 2, message: "layer 7 is outside 1..=6".into() })
        );
        assert!(matches!(parse_stack_pattern("12*0", 6), Err(Error::Pattern { position: 3, .. })));
        assert!(matches!(parse_stack_pattern("12--3", 6), Err(Error::Pattern { position: 3, .. })));
        assert!(matches!(parse_stack_pattern("1a", 6), Err(Error::Pattern { position: 1, .. })));
        assert!(matches!(parse_stack_pattern("12*", 6), Err(Error::Pattern { position: 3, .. })));
        assert!(matches!(parse_stack_pattern("*3", 6), Err(Error::Pattern { position: 0, .. })));
        assert!(matches!(parse_stack_pattern("", 6), Err(Error::Pattern { .. })));
    }

    #[test]
    fn extended_form_for_deep_bases() {
        let o = parse_stack_pattern("1,2-11,12*2", 12).unwrap();
        assert_eq!(o.as_slice(), &[1, 2, 11, 12, 11, 12]);
        assert!(parse_stack_pattern("1,13", 12).is_err());
    }

    #[test]
    fn connection_rate_edges() {
        assert_eq!(connection_rate(&OriginMap::identity(9)).unwrap(), 1.0);
        assert!(connection_rate(&OriginMap::identity(1)).is_err());
        // Three-layer examples: whole repeat 4/5, interleave 2/5.
        assert!((connection_rate(&OriginMap::repeated(3, 2)).unwrap() - 0.8).abs() < 1e-12);
        assert!((connection_rate(&OriginMap::interleaved(3, 2)).unwrap() - 0.4).abs() < 1e-12);
    }
}
