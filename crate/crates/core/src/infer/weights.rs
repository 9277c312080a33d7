//! Binary weight files.
//!
//! Layout (all integers little-endian `u32`, values little-endian `f32`):
//! `"TSRW1"`, version, spec length, spec JSON, entry count, then per entry
//! name length, name, rank, extents, values; finally CRC-32 of every
//! preceding byte. Parameters come first in model order, followed by
//! batch-norm running statistics as `<layer>.running_mean` / `.running_var`.

use std::path::Path;

use crate::error::{Error, Result, WeightFormatError};
use crate::models::{Model, ModelSpec};
use crate::tensor::{Element, Tensor};

pub const MAGIC: &[u8; 5] = b"TSRW1";
pub const FORMAT_VERSION: u32 = 1;

struct Entry {
    name: String,
    shape: Vec<usize>,
    values: Vec<f32>,
}

fn entries<T: Element>(model: &Model<T>) -> Vec<Entry> {
    let to_f32 = |v: &[T]| v.iter().map(|x| x.as_f64() as f32).collect::<Vec<f32>>();
    let mut out: Vec<Entry> = model
        .parameters()
        .map(|(n, t)| Entry {
            name: n.to_string(),
            shape: t.dims().to_vec(),
            values: to_f32(t.data()),
        })
        .collect();
    for (n, s) in model.running_stats() {
        for (suffix, v) in [("running_mean", &s.mean), ("running_var", &s.var)] {
            out.push(Entry {
                name: format!("{n}.{suffix}"),
                shape: vec![v.len()],
                values: to_f32(v),
            });
        }
    }
    out
}

pub fn encode_weights<T: Element>(model: &Model<T>) -> Vec<u8> {
    let spec = model.spec().to_json();
    let entries = entries(model);
    let mut buf = Vec::new();
    let put = |buf: &mut Vec<u8>, v: u32| buf.extend_from_slice(&v.to_le_bytes());
    buf.extend_from_slice(MAGIC);
    put(&mut buf, FORMAT_VERSION);
    put(&mut buf, spec.len() as u32);
    buf.extend_from_slice(spec.as_bytes());
    put(&mut buf, entries.len() as u32);
    for e in &entries {
        put(&mut buf, e.name.len() as u32);
        buf.extend_from_slice(e.name.as_bytes());
        put(&mut buf, e.shape.len() as u32);
        for &d in &e.shape {
            put(&mut buf, d as u32);
        }
        for v in &e.values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&buf);
    put(&mut buf, crc);
    buf
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], WeightFormatError> {
        if self.pos + n > self.bytes.len() {
            return Err(WeightFormatError::Malformed(format!(
                "record overruns payload at byte {}",
                self.pos
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> std::result::Result<u32, WeightFormatError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn string(&mut self) -> std::result::Result<String, WeightFormatError> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| WeightFormatError::Malformed("non-UTF-8 text".into()))
    }
}

/// Validates magic, checksum and version, in that order, and rebuilds the
/// model described by the embedded spec.
pub fn decode_weights(bytes: &[u8]) -> Result<Model<f32>> {
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return Err(WeightFormatError::BadMagic(bytes[..bytes.len().min(MAGIC.len())].to_vec()).into());
    }
    if bytes.len() < MAGIC.len() + 8 {
        return Err(WeightFormatError::Truncated(bytes.len()).into());
    }
    let (payload, trailer) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(trailer.try_into().expect("4 bytes"));
    let computed = crc32fast::hash(payload);
    if stored != computed {
        return Err(WeightFormatError::Checksum { stored, computed }.into());
    }
    let mut r = Reader {
        bytes: payload,
        pos: MAGIC.len(),
    };
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(WeightFormatError::Version(version).into());
    }
    let spec = ModelSpec::from_json(&r.string()?).map_err(|e| WeightFormatError::Malformed(e.to_string()))?;
    let mut model = Model::<f32>::skeleton(&spec)
        .map_err(|e| WeightFormatError::SpecMismatch(format!("descriptor does not build: {e}")))?;
    let expected = entries(&model);
    let count = r.u32()? as usize;
    if count != expected.len() {
        return Err(WeightFormatError::SpecMismatch(format!(
            "{count} entries stored, spec `{}` needs {}",
            spec.summary(),
            expected.len()
        ))
        .into());
    }
    let mut values = Vec::with_capacity(count);
    for want in &expected {
        let name = r.string()?;
        let rank = r.u32()? as usize;
        let shape = (0..rank)
            .map(|_| r.u32().map(|d| d as usize))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        if name != want.name || shape != want.shape {
            return Err(WeightFormatError::SpecMismatch(format!(
                "entry `{name}` {shape:?} where spec expects `{}` {:?}",
                want.name, want.shape
            ))
            .into());
        }
        let n: usize = shape.iter().product();
        let raw = r.take(n * 4)?;
        values.push(
            raw.chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                .collect::<Vec<f32>>(),
        );
    }
    if r.pos != payload.len() {
        return Err(WeightFormatError::Malformed(format!("{} trailing bytes", payload.len() - r.pos)).into());
    }
    let n_params = model.n_params();
    let stats = values.split_off(n_params);
    model.set_parameter_data(values)?;
    let names: Vec<String> = model.running_stats().map(|(n, _)| n.to_string()).collect();
    for (name, pair) in names.iter().zip(stats.chunks(2)) {
        let s = model.stats_mut(name)?;
        s.mean = pair[0].clone();
        s.var = pair[1].clone();
    }
    Ok(model)
}

pub fn save_weights<T: Element>(model: &Model<T>, path: &Path) -> Result<()> {
    std::fs::write(path, encode_weights(model)).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

pub fn load_weights(path: &Path) -> Result<Model<f32>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    decode_weights(&bytes)
}

/// Loads a file and additionally requires its spec to equal `expected`.
pub fn load_weights_expecting(path: &Path, expected: &ModelSpec) -> Result<Model<f32>> {
    let model = load_weights(path)?;
    if model.spec() != expected {
        return Err(WeightFormatError::SpecMismatch(format!(
            "file holds `{}`, expected `{}`",
            model.spec().summary(),
            expected.summary()
        ))
        .into());
    }
    Ok(model)
}

/// Parameter tensors of two models are bit-identical (names, shapes, values,
/// running statistics).
pub fn same_weights<T: Element>(a: &Model<T>, b: &Model<T>) -> bool {
    let pa: Vec<(&str, &Tensor<T>)> = a.parameters().collect();
    let pb: Vec<(&str, &Tensor<T>)> = b.parameters().collect();
    let bits = |v: &[T]| v.iter().map(|x| x.as_f64().to_bits()).collect::<Vec<u64>>();
    pa.len() == pb.len()
        && pa
            .iter()
            .zip(&pb)
            .all(|((na, ta), (nb, tb))| na == nb && ta.dims() == tb.dims() && bits(ta.data()) == bits(tb.data()))
        && a.running_stats()
            .zip(b.running_stats())
            .all(|((na, sa), (nb, sb))| na == nb && bits(&sa.mean) == bits(&sb.mean) && bits(&sa.var) == bits(&sb.var))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{GeneratorSpec, Upsampler};

    fn small(use_bn: bool) -> ModelSpec {
        let mut g = GeneratorSpec::desk(Upsampler::NearestThenConv, use_bn);
        g.base_channels = 4;
        g.n_res_blocks = 1;
        ModelSpec::Generator(g)
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let m = Model::<f32>::build(&small(true), 7).unwrap();
        let back = decode_weights(&encode_weights(&m)).unwrap();
        assert_eq!(back.spec(), m.spec());
        assert!(same_weights(&m, &back));
    }

    #[test]
    fn failures_are_named() {
        let bytes = encode_weights(&Model::<f32>::build(&small(false), 1).unwrap());
        let err = |b: &[u8]| match decode_weights(b) {
            Err(Error::WeightFormat(e)) => e,
            other => panic!("expected weight error, got {other:?}"),
        };
        assert!(matches!(err(b"XXXXX123456789"), WeightFormatError::BadMagic(_)));
        assert!(matches!(
            err(&bytes[..bytes.len() - 10]),
            WeightFormatError::Checksum { .. }
        ));
        let mut flipped = bytes.clone();
        flipped[40] ^= 1;
        assert!(matches!(err(&flipped), WeightFormatError::Checksum { .. }));
        let mut v2 = bytes[..bytes.len() - 4].to_vec();
        v2[5] = 2;
        let crc = crc32fast::hash(&v2);
        v2.extend_from_slice(&crc.to_le_bytes());
        assert!(matches!(err(&v2), WeightFormatError::Version(2)));
    }

    #[test]
    fn bn_entries_under_no_bn_descriptor_mismatch() {
        let bytes = encode_weights(&Model::<f32>::build(&small(true), 1).unwrap());
        let (with_bn, no_bn) = (small(true).to_json(), small(false).to_json());
        let mut forged = bytes[..bytes.len() - 4].to_vec();
        let at = MAGIC.len() + 4;
        forged.splice(at..at + 4 + with_bn.len(), {
            let mut s = (no_bn.len() as u32).to_le_bytes().to_vec();
            s.extend_from_slice(no_bn.as_bytes());
            s
        });
        let crc = crc32fast::hash(&forged);
        forged.extend_from_slice(&crc.to_le_bytes());
        assert!(matches!(
            decode_weights(&forged),
            Err(Error::WeightFormat(WeightFormatError::SpecMismatch(_)))
        ));
    }
}
