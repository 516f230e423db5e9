//! Binary checkpoint container.
//!
//! Layout: the 8 magic bytes `GROWCKPT`, a little-endian `u32` version and a
//! little-endian `u64` header length, then the UTF-8 header (see [`kv`]),
//! zero padding up to the next multiple of 64 bytes, and the payload. Every
//! tensor is stored as row-major little-endian `f32` starting at a 64-byte
//! aligned offset relative to the payload start.
//!
//! [`kv`]: crate::kv

use std::fs;
use std::io::Write;
use std::path::Path;

use growkit_core::growth::OriginMap;
use growkit_core::model::{Gates, ModelConfig, ParameterSet};

use crate::error::{CheckpointError, Error, Result};
use crate::kv::{Document, Section};

pub const MAGIC: &[u8; 8] = b"GROWCKPT";
pub const VERSION: u32 = 1;
const PREAMBLE: usize = 20;
const ALIGN: usize = 64;

fn align(n: usize) -> usize {
    n.div_ceil(ALIGN) * ALIGN
}

/// One growth step in a checkpoint's history.
#[derive(Clone, Debug, PartialEq)]
pub struct GrowthRecord {
    /// The plan as printed by `GrowthPlan`'s `Display`.
    pub plan: String,
    pub from_layers: usize,
    pub origin: Option<OriginMap>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub params: ParameterSet<f32>,
    pub history: Vec<GrowthRecord>,
    /// Free-form `key=value` annotations (training step, tokens, ...).
    pub meta: Vec<(String, String)>,
}

impl Checkpoint {
    pub fn new(config: ModelConfig, params: ParameterSet<f32>) -> Self {
        Checkpoint { config, params, history: Vec::new(), meta: Vec::new() }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        self.params.validate(&self.config)?;
        let mut doc = Document::default();
        let c = &self.config;
        let mut model = Section::new("model");
        model
            .push("vocab_size", c.vocab_size)
            .push("d_model", c.d_model)
            .push("d_ffn", c.d_ffn)
            .push("n_heads", c.n_heads)
            .push("head_dim", c.head_dim)
            .push("n_layers", c.n_layers)
            .push("max_seq_len", c.max_seq_len);
        doc.sections.push(model);
        if !self.meta.is_empty() {
            doc.sections.push(Section { name: "meta".into(), entries: self.meta.clone() });
        }
        for (i, rec) in self.history.iter().enumerate() {
            let mut s = Section::new(format!("growth.{i}"));
            s.push("plan", &rec.plan).push("from_layers", rec.from_layers);
            if let Some(o) = &rec.origin {
                s.push("origin", o);
            }
            doc.sections.push(s);
        }
        if let Some(g) = &self.params.gates {
            doc.sections.push(gates_section(g));
        }
        let tensors = self.params.tensors();
        let mut index = Section::new("tensors");
        let mut offset = 0usize;
        let mut offsets = Vec::with_capacity(tensors.len());
        for t in &tensors {
            offsets.push(offset);
            offset = align(offset + 4 * t.data.len());
        }
        index.push("payload_bytes", offset);
        for (t, off) in tensors.iter().zip(&offsets) {
            let shape: Vec<String> = t.shape.iter().map(|d| d.to_string()).collect();
            index.push(t.name.clone(), format!("f32 {} @{off}", shape.join("x")));
        }
        doc.sections.push(index);

        let header = doc.to_string().into_bytes();
        let start = align(PREAMBLE + header.len());
        let mut out = Vec::with_capacity(start + offset);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        out.resize(start, 0);
        for (t, off) in tensors.iter().zip(&offsets) {
            out.resize(start + off, 0);
            for v in t.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out.resize(start + offset, 0);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CheckpointError> {
        if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
            return Err(if bytes.len() < MAGIC.len() && MAGIC.starts_with(bytes) {
                CheckpointError::TruncatedHeader("preamble")
            } else {
                CheckpointError::BadMagic
            });
        }
        if bytes.len() < PREAMBLE {
            return Err(CheckpointError::TruncatedHeader("preamble"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if version != VERSION {
            return Err(CheckpointError::Version(version));
        }
        let hlen = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes"));
        let hend = (PREAMBLE as u64).checked_add(hlen).filter(|&e| e <= bytes.len() as u64);
        let hend = hend.ok_or(CheckpointError::TruncatedHeader("header"))? as usize;
        let text = std::str::from_utf8(&bytes[PREAMBLE..hend]).map_err(|e| CheckpointError::Header(e.to_string()))?;
        let doc: Document = text.parse().map_err(|e: Error| CheckpointError::Header(e.to_string()))?;
        let h = |e: Error| CheckpointError::Header(e.to_string());

        let model = doc.require("model").map_err(h)?;
        model
            .expect_keys(&["vocab_size", "d_model", "d_ffn", "n_heads", "head_dim", "n_layers", "max_seq_len"])
            .map_err(h)?;
        let config = ModelConfig {
            vocab_size: model.parse_required("vocab_size").map_err(h)?,
            d_model: model.parse_required("d_model").map_err(h)?,
            d_ffn: model.parse_required("d_ffn").map_err(h)?,
            n_heads: model.parse_required("n_heads").map_err(h)?,
            head_dim: model.parse_required("head_dim").map_err(h)?,
            n_layers: model.parse_required("n_layers").map_err(h)?,
            max_seq_len: model.parse_required("max_seq_len").map_err(h)?,
        };
        config.validate().map_err(|e| CheckpointError::Header(e.to_string()))?;
        let meta = doc.section("meta").map(|s| s.entries.clone()).unwrap_or_default();
        let mut history = Vec::new();
        while let Some(s) = doc.section(&format!("growth.{}", history.len())) {
            history.push(parse_record(s).map_err(h)?);
        }
        let gates = doc.section("gates").map(|s| parse_gates(s, &config)).transpose().map_err(h)?;
        let known = |name: &str| {
            ["model", "meta", "gates", "tensors"].contains(&name)
                || name.strip_prefix("growth.").and_then(|i| i.parse::<usize>().ok()).is_some_and(|i| i < history.len())
        };
        if let Some(s) = doc.sections.iter().find(|s| !known(&s.name)) {
            return Err(CheckpointError::Header(format!("unknown section [{}]", s.name)));
        }

        let index = doc.require("tensors").map_err(h)?;
        let declared: u64 = index.parse_required("payload_bytes").map_err(h)?;
        let mut params = ParameterSet::<f32>::zeros(&config);
        params.gates = gates;
        let expected: Vec<(String, Vec<usize>)> = params.tensors().into_iter().map(|t| (t.name, t.shape)).collect();
        if index.entries.len() != expected.len() + 1 {
            return Err(CheckpointError::Header(format!(
                "index lists {} tensors, the model has {}",
                index.entries.len() - 1,
                expected.len()
            )));
        }
        let mut spans = Vec::with_capacity(expected.len());
        for (name, shape) in &expected {
            let entry = index.get(name).ok_or_else(|| CheckpointError::Header(format!("tensor {name} is missing")))?;
            let (start, len) = parse_entry(name, entry, shape)?;
            let end =
                start.checked_add(len).ok_or_else(|| CheckpointError::Header(format!("tensor {name} is too large")))?;
            if start % ALIGN as u64 != 0 {
                return Err(CheckpointError::Misaligned(name.clone()));
            }
            if end > declared {
                return Err(CheckpointError::OutOfBounds { name: name.clone(), start, end, payload: declared });
            }
            spans.push((start, end, name.clone()));
        }
        let mut sorted: Vec<&(u64, u64, String)> = spans.iter().collect();
        sorted.sort();
        for w in sorted.windows(2) {
            if w[1].0 < w[0].1 {
                return Err(CheckpointError::Overlap { first: w[0].2.clone(), second: w[1].2.clone() });
            }
        }
        let start = align(hend) as u64;
        let actual = (bytes.len() as u64).saturating_sub(start);
        if actual != declared {
            if actual < declared {
                return Err(CheckpointError::TruncatedPayload { declared, actual });
            }
            return Err(CheckpointError::Header(format!("{} bytes follow the declared payload", actual - declared)));
        }
        let payload = &bytes[start as usize..];
        let mut k = 0;
        params.for_each_mut(|_, _, data| {
            let (s, e, _) = &spans[k];
            for (v, chunk) in data.iter_mut().zip(payload[*s as usize..*e as usize].chunks_exact(4)) {
                *v = f32::from_le_bytes(chunk.try_into().expect("4 bytes"));
            }
            k += 1;
        });
        Ok(Checkpoint { config, params, history, meta })
    }

    /// Writes atomically (temporary file in the same directory, then rename).
    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes()?)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|source| Error::Checkpoint { path: path.to_owned(), source })
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.meta.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }
}

/// Replaces `path` with `bytes` through a temporary sibling file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(tmp.path(), e))?;
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        let mode = fs::metadata(path).map_or(0o644, |m| m.permissions().mode());
        tmp.as_file().set_permissions(fs::Permissions::from_mode(mode)).map_err(|e| Error::io(tmp.path(), e))?;
    }
    tmp.as_file().sync_all().map_err(|e| Error::io(tmp.path(), e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

fn parse_entry(name: &str, entry: &str, shape: &[usize]) -> Result<(u64, u64), CheckpointError> {
    let bad = |m: &str| CheckpointError::Header(format!("tensor {name}: {m}: {entry}"));
    let mut parts = entry.split_whitespace();
    if parts.next() != Some("f32") {
        return Err(bad("only f32 tensors are supported"));
    }
    let dims: Vec<usize> = parts
        .next()
        .ok_or_else(|| bad("missing shape"))?
        .split('x')
        .map(|d| d.parse().map_err(|_| bad("bad shape")))
        .collect::<Result<_, _>>()?;
    if dims != shape {
        return Err(bad(&format!("expected shape {shape:?}")));
    }
    let offset: u64 = parts
        .next()
        .and_then(|o| o.strip_prefix('@'))
        .ok_or_else(|| bad("missing @offset"))?
        .parse()
        .map_err(|_| bad("bad offset"))?;
    if parts.next().is_some() {
        return Err(bad("trailing fields"));
    }
    Ok((offset, 4 * shape.iter().product::<usize>() as u64))
}

fn parse_record(s: &Section) -> Result<GrowthRecord> {
    s.expect_keys(&["plan", "from_layers", "origin"])?;
    let from_layers = s.parse_required("from_layers")?;
    let origin = match s.get("origin") {
        Some(o) => {
            let layers: Vec<usize> = o
                .split(',')
                .map(|v| v.trim().parse().map_err(|_| Error::Format(format!("[{}] bad origin {o}", s.name))))
                .collect::<Result<_>>()?;
            Some(OriginMap::new(layers, from_layers)?)
        }
        None => None,
    };
    Ok(GrowthRecord { plan: s.require("plan")?.to_owned(), from_layers, origin })
}

fn gates_section(g: &Gates<f32>) -> Section {
    let list = |v: &mut dyn Iterator<Item = String>| v.collect::<Vec<_>>().join(",");
    let mut s = Section::new("gates");
    s.push("base_d_model", g.base_d_model)
        .push("base_d_ffn", g.base_d_ffn)
        .push("embed", g.embed)
        .push("width", list(&mut g.width.iter().map(f32::to_string)))
        .push("block", list(&mut g.block.iter().map(|b| b.map_or_else(|| "-".to_owned(), |v| v.to_string()))))
        .push("horizon", g.horizon.map_or_else(|| "-".to_owned(), |h| h.to_string()));
    s
}

fn parse_gates(s: &Section, config: &ModelConfig) -> Result<Gates<f32>> {
    s.expect_keys(&["base_d_model", "base_d_ffn", "embed", "width", "block", "horizon"])?;
    let bad = |k: &str| Error::Format(format!("[gates] bad `{k}`"));
    let list = |k: &str| -> Result<Vec<&str>> {
        let v = s.require(k)?;
        Ok(if v.is_empty() { Vec::new() } else { v.split(',').collect() })
    };
    let width =
        list("width")?.into_iter().map(|v| v.parse().map_err(|_| bad("width"))).collect::<Result<Vec<f32>>>()?;
    let block = list("block")?
        .into_iter()
        .map(|v| if v == "-" { Ok(None) } else { v.parse().map(Some).map_err(|_| bad("block")) })
        .collect::<Result<Vec<Option<f32>>>>()?;
    if width.len() != config.n_layers || block.len() != config.n_layers {
        return Err(Error::Format(format!(
            "[gates] needs one width and one block gate per layer ({})",
            config.n_layers
        )));
    }
    let horizon = match s.require("horizon")? {
        "-" => None,
        h => Some(h.parse().map_err(|_| bad("horizon"))?),
    };
    Ok(Gates {
        base_d_model: s.parse_required("base_d_model")?,
        base_d_ffn: s.parse_required("base_d_ffn")?,
        embed: s.parse_required("embed")?,
        width,
        block,
        horizon,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use growkit_core::growth::{apply_plan, Direction, GrowthPlan, Operator};
    use growkit_core::model::init_params;

    fn cfg() -> ModelConfig {
        ModelConfig { vocab_size: 16, d_model: 8, d_ffn: 12, n_heads: 2, head_dim: 4, n_layers: 2, max_seq_len: 8 }
    }

    fn sample() -> Checkpoint {
        let mut c = Checkpoint::new(cfg(), init_params(&cfg(), 4).unwrap());
        c.meta.push(("step".into(), "12".into()));
        c
    }

    #[test]
    fn round_trip_is_byte_identical() {
        let c = sample();
        let bytes = c.to_bytes().unwrap();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_bytes().unwrap(), bytes);
        assert_eq!(&bytes[..8], MAGIC);
    }

    #[test]
    fn tensors_are_aligned() {
        let bytes = sample().to_bytes().unwrap();
        let hlen = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
        let start = align(PREAMBLE + hlen);
        assert_eq!(start % 64, 0);
        let text = std::str::from_utf8(&bytes[20..20 + hlen]).unwrap();
        let head_offset: usize =
            text.lines().find(|l| l.starts_with("head=")).unwrap().rsplit('@').next().unwrap().parse().unwrap();
        assert_eq!(head_offset % 64, 0);
        let first = f32::from_le_bytes(bytes[start + head_offset..start + head_offset + 4].try_into().unwrap());
        assert_eq!(first, sample().params.head.get(0, 0));
    }

    #[test]
    fn gates_and_history_survive() {
        let p = init_params::<f32>(&cfg(), 1).unwrap();
        let plan = GrowthPlan { direction: Direction::Depth, growth_factor: 2, ..GrowthPlan::new(Operator::Random) };
        let grown = apply_plan(&p, &cfg(), &plan, None).unwrap();
        let mut c = Checkpoint::new(grown.config, grown.params);
        c.history.push(GrowthRecord {
            plan: plan.to_string(),
            from_layers: 2,
            origin: Some(OriginMap::repeated(2, 2)),
        });
        let bytes = c.to_bytes().unwrap();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_bytes().unwrap(), bytes);
    }

    /// Rebuilds a container with an edited header and the original payload.
    fn edit_header(bytes: &[u8], f: impl Fn(&str) -> String) -> Vec<u8> {
        let hlen = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
        let payload = &bytes[align(PREAMBLE + hlen)..];
        let header = f(std::str::from_utf8(&bytes[PREAMBLE..PREAMBLE + hlen]).unwrap());
        let mut out = bytes[..12].to_vec();
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(header.as_bytes());
        out.resize(align(out.len()), 0);
        out.extend_from_slice(payload);
        out
    }

    fn set_offset(header: &str, tensor: &str, offset: &str) -> String {
        header
            .lines()
            .map(|l| match l.strip_prefix(tensor).and_then(|r| r.strip_prefix('=')) {
                Some(v) => format!("{tensor}={}@{offset}\n", v.split('@').next().unwrap()),
                None => format!("{l}\n"),
            })
            .collect()
    }

    #[test]
    fn corrupt_files_have_distinct_codes() {
        let bytes = sample().to_bytes().unwrap();
        assert_eq!(Checkpoint::from_bytes(&edit_header(&bytes, str::to_owned)).unwrap(), sample());

        let cut = Checkpoint::from_bytes(&bytes[..bytes.len() - 3]).unwrap_err();
        assert_eq!(cut.code(), "truncated-payload");
        assert_eq!(Checkpoint::from_bytes(&bytes[..30]).unwrap_err().code(), "truncated-header");
        assert_eq!(Checkpoint::from_bytes(b"NOTACKPT").unwrap_err().code(), "bad-magic");

        let declared = |h: &str| h.lines().find_map(|l| l.strip_prefix("payload_bytes=")).unwrap().to_owned();
        let oob = edit_header(&bytes, |h| set_offset(h, "head", &declared(h)));
        let err = Checkpoint::from_bytes(&oob).unwrap_err();
        assert_eq!(err.code(), "index-out-of-bounds", "{err}");

        let overlap = edit_header(&bytes, |h| set_offset(h, "head", "0"));
        assert_eq!(Checkpoint::from_bytes(&overlap).unwrap_err().code(), "index-overlap");
        let skew = edit_header(&bytes, |h| set_offset(h, "head", "4"));
        assert_eq!(Checkpoint::from_bytes(&skew).unwrap_err().code(), "index-misaligned");

        let mut ver = bytes.clone();
        ver[8] = 9;
        assert_eq!(Checkpoint::from_bytes(&ver).unwrap_err(), CheckpointError::Version(9));
        let mut extra = bytes.clone();
        extra.push(0);
        assert_eq!(Checkpoint::from_bytes(&extra).unwrap_err().code(), "bad-header");
    }

    #[test]
    fn atomic_write_replaces_existing_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        std::fs::write(&path, b"old").unwrap();
        sample().write(&path).unwrap();
        assert_eq!(Checkpoint::read(&path).unwrap(), sample());
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
