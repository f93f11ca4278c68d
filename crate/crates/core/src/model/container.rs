//! Model container: a line-oriented text manifest, an `end` line, then the
//! tensor payloads as little-endian `f32`, concatenated in manifest order.
//!
//! ```text
//! waveletae-container 1
//! channels 8
//! fragment_length 512
//! levels 3
//! family haar
//! conv 7:32:2,5:64:2
//! lstm_hidden 32
//! classifier false
//! seed 0
//! field threshold 0.4213
//! tensor s0.enc.conv0.weight 32x8x7 0 7168
//! ...
//! end
//! ```
//!
//! `field` lines carry caller-defined metadata (detector state) and keep
//! their order. Tensor offsets are relative to the first payload byte.

use std::fs;
use std::path::Path;

use super::{ModelConfig, WaveletAEModel};
use crate::error::{ensure, Error, Result};
use crate::numerics::Tensor;

pub const MAGIC: &str = "waveletae-container";
pub const FORMAT_VERSION: u32 = 1;

/// Serializes `model` with extra `fields`. Keys must be single tokens and
/// values single lines.
pub fn encode(model: &WaveletAEModel, fields: &[(String, String)]) -> Result<Vec<u8>> {
    let cfg = model.config();
    let mut head = String::new();
    let mut line = |s: String| {
        head.push_str(&s);
        head.push('\n');
    };
    line(format!("{MAGIC} {FORMAT_VERSION}"));
    line(format!("channels {}", cfg.channels));
    line(format!("fragment_length {}", cfg.fragment_length));
    line(format!("levels {}", cfg.levels));
    line(format!("family {}", cfg.family.name()));
    line(format!("conv {}", cfg.conv));
    line(format!("lstm_hidden {}", cfg.lstm_hidden));
    line(format!("classifier {}", cfg.classifier));
    line(format!("seed {}", cfg.seed));
    for (k, v) in fields {
        ensure!(
            !k.is_empty() && !k.contains(char::is_whitespace),
            Format,
            "field key `{k}` must be a non-empty token"
        );
        ensure!(!v.contains('\n'), Format, "field `{k}` value spans lines");
        line(format!("field {k} {v}"));
    }
    let mut offset = 0usize;
    for (name, t) in model.param_names().iter().zip(model.params()) {
        let dims: Vec<String> = t.shape().iter().map(usize::to_string).collect();
        let bytes = t.len() * 4;
        line(format!("tensor {name} {} {offset} {bytes}", dims.join("x")));
        offset += bytes;
    }
    line("end".into());
    let mut out = head.into_bytes();
    out.reserve(offset);
    for t in model.params() {
        for &v in t.data() {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    Ok(out)
}

fn parse<T: std::str::FromStr>(value: &str, key: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Format(format!("bad value `{value}` for `{key}`")))
}

/// Parses a container produced by [`encode`].
pub fn decode(bytes: &[u8]) -> Result<(WaveletAEModel, Vec<(String, String)>)> {
    let mut pos = 0usize;
    let mut lines = Vec::new();
    loop {
        let rest = &bytes[pos..];
        let nl = rest
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::Format("manifest is missing its `end` line".into()))?;
        let text = std::str::from_utf8(&rest[..nl]).map_err(|_| Error::Format("manifest is not UTF-8".into()))?;
        pos += nl + 1;
        if text == "end" {
            break;
        }
        lines.push(text.to_owned());
    }
    let payload = &bytes[pos..];
    let mut it = lines.iter();
    let magic = it.next().ok_or_else(|| Error::Format("empty manifest".into()))?;
    ensure!(
        *magic == format!("{MAGIC} {FORMAT_VERSION}"),
        Format,
        "unsupported container header `{magic}`"
    );
    let mut want = |key: &str| -> Result<String> {
        let l = it
            .next()
            .ok_or_else(|| Error::Format(format!("manifest ends before `{key}`")))?;
        match l.split_once(' ') {
            Some((k, v)) if k == key => Ok(v.to_owned()),
            _ => Err(Error::Format(format!("expected `{key}`, found `{l}`"))),
        }
    };
    let config = ModelConfig {
        channels: parse(&want("channels")?, "channels")?,
        fragment_length: parse(&want("fragment_length")?, "fragment_length")?,
        levels: parse(&want("levels")?, "levels")?,
        family: parse(&want("family")?, "family")?,
        conv: parse(&want("conv")?, "conv")?,
        lstm_hidden: parse(&want("lstm_hidden")?, "lstm_hidden")?,
        classifier: parse(&want("classifier")?, "classifier")?,
        seed: parse(&want("seed")?, "seed")?,
    };
    let mut fields = Vec::new();
    let mut tensors = Vec::new();
    let mut expected_offset = 0usize;
    for l in it {
        let mut parts = l.splitn(3, ' ');
        match parts.next() {
            Some("field") if tensors.is_empty() => {
                let key = parts.next().unwrap_or_default();
                let value = parts.next().unwrap_or_default();
                ensure!(!key.is_empty(), Format, "field line without a key");
                fields.push((key.to_owned(), value.to_owned()));
            }
            Some("tensor") => {
                let tok: Vec<&str> = l.split(' ').collect();
                ensure!(tok.len() == 5, Format, "malformed tensor line `{l}`");
                let shape: Vec<usize> = tok[2]
                    .split('x')
                    .map(|d| parse::<usize>(d, "tensor shape"))
                    .collect::<Result<_>>()?;
                let offset: usize = parse(tok[3], "tensor offset")?;
                let len: usize = parse(tok[4], "tensor length")?;
                let count: usize = shape.iter().product();
                ensure!(
                    len == count * 4 && offset == expected_offset,
                    Format,
                    "tensor `{}` directory entry is inconsistent",
                    tok[1]
                );
                ensure!(
                    offset + len <= payload.len(),
                    Format,
                    "tensor `{}` runs past the end of the payload",
                    tok[1]
                );
                let data = payload[offset..offset + len]
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
                    .collect();
                tensors.push((tok[1].to_owned(), Tensor::new(&shape, data)?));
                expected_offset += len;
            }
            _ => return Err(Error::Format(format!("unexpected manifest line `{l}`"))),
        }
    }
    ensure!(
        expected_offset == payload.len(),
        Format,
        "payload has {} bytes, directory describes {expected_offset}",
        payload.len()
    );
    Ok((WaveletAEModel::from_parts(&config, tensors)?, fields))
}

pub fn save(path: &Path, model: &WaveletAEModel, fields: &[(String, String)]) -> Result<()> {
    let bytes = encode(model, fields)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<(WaveletAEModel, Vec<(String, String)>)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}
