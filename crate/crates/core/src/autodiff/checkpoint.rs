//! `SFCK` checkpoint container.
//!
//! Layout (all integers little-endian):
//!
//! | bytes | content                                        |
//! |-------|------------------------------------------------|
//! | 4     | magic `SFCK`                                   |
//! | 4     | format version (`u32`)                         |
//! | 4     | descriptor length `L` (`u32`)                  |
//! | L     | UTF-8 JSON architecture descriptor             |
//! | ...   | parameters in declaration order, `f32` each    |

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::autodiff::{ParamSet, Real};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"SFCK";
pub const VERSION: u32 = 1;

/// Shape record for one stored parameter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StoredParam {
    pub name: String,
    pub shape: Vec<usize>,
}

/// JSON header of a checkpoint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Descriptor {
    /// Network family, e.g. `"estimator"`.
    pub kind: String,
    /// Family-specific configuration.
    pub config: serde_json::Value,
    pub params: Vec<StoredParam>,
}

pub fn write_checkpoint<T: Real, W: Write>(
    mut out: W,
    kind: &str,
    config: serde_json::Value,
    params: &ParamSet<T>,
) -> Result<()> {
    let desc = Descriptor {
        kind: kind.to_string(),
        config,
        params: params
            .iter()
            .map(|p| StoredParam {
                name: p.name.clone(),
                shape: p.value.shape().to_vec(),
            })
            .collect(),
    };
    let json = serde_json::to_vec(&desc)?;
    let len = u32::try_from(json.len())
        .map_err(|_| Error::Configuration("architecture descriptor too large".into()))?;
    let mut buf = Vec::with_capacity(12 + json.len() + 4 * params.scalar_count());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&len.to_le_bytes());
    buf.extend_from_slice(&json);
    for p in params.iter() {
        for v in p.value.data() {
            buf.extend_from_slice(&(v.to_f64() as f32).to_le_bytes());
        }
    }
    out.write_all(&buf)?;
    Ok(())
}

/// Descriptor plus raw parameter values, in declaration order.
pub struct LoadedCheckpoint {
    pub descriptor: Descriptor,
    pub values: Vec<Vec<f32>>,
}

pub fn read_checkpoint<R: Read>(mut input: R) -> Result<LoadedCheckpoint> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    let take = |pos: usize, n: usize, what: &str| -> Result<&[u8]> {
        bytes.get(pos..pos + n).ok_or_else(|| {
            Error::format(
                pos as u64,
                format!(
                    "checkpoint truncated while reading {what} ({} bytes total)",
                    bytes.len()
                ),
            )
        })
    };
    if take(0, 4, "magic")? != MAGIC {
        return Err(Error::format(0, "bad checkpoint magic, expected SFCK"));
    }
    let version = u32::from_le_bytes(take(4, 4, "version")?.try_into().unwrap());
    if version != VERSION {
        return Err(Error::format(
            4,
            format!("unsupported checkpoint version {version}"),
        ));
    }
    let len = u32::from_le_bytes(take(8, 4, "descriptor length")?.try_into().unwrap()) as usize;
    let descriptor: Descriptor = serde_json::from_slice(take(12, len, "descriptor")?)
        .map_err(|e| Error::format(12, format!("bad descriptor: {e}")))?;
    let mut pos = 12 + len;
    let mut values = Vec::with_capacity(descriptor.params.len());
    for p in &descriptor.params {
        let n: usize = p.shape.iter().product();
        let raw = take(pos, 4 * n, &format!("parameter '{}'", p.name))?;
        values.push(
            raw.chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect(),
        );
        pos += 4 * n;
    }
    if pos != bytes.len() {
        return Err(Error::format(
            pos as u64,
            format!("{} trailing bytes after parameters", bytes.len() - pos),
        ));
    }
    Ok(LoadedCheckpoint { descriptor, values })
}

impl LoadedCheckpoint {
    /// Copies stored values into a freshly built parameter set of the same
    /// architecture.
    pub fn apply_to<T: Real>(&self, params: &mut ParamSet<T>) -> Result<()> {
        if params.len() != self.values.len() {
            return Err(Error::Configuration(format!(
                "checkpoint has {} parameters, architecture has {}",
                self.values.len(),
                params.len()
            )));
        }
        for ((p, stored), vals) in params
            .iter_mut()
            .zip(&self.descriptor.params)
            .zip(&self.values)
        {
            if p.value.shape() != stored.shape.as_slice() {
                return Err(Error::Configuration(format!(
                    "parameter '{}' has shape {:?} in the checkpoint, {:?} in the architecture",
                    stored.name,
                    stored.shape,
                    p.value.shape()
                )));
            }
            for (dst, src) in p.value.data_mut().iter_mut().zip(vals) {
                *dst = T::from_f64(*src as f64);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tensor;

    fn sample() -> ParamSet<f32> {
        let mut p = ParamSet::new();
        p.add(
            "a",
            Tensor::new(vec![2, 2], vec![1.0, -2.5, 3.25, 0.1]).unwrap(),
        );
        p.add("b", Tensor::new(vec![3], vec![0.0, 7.0, -1e-3]).unwrap());
        p
    }

    #[test]
    fn round_trip_is_bitwise() {
        let p = sample();
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, "test", serde_json::json!({"w": 4}), &p).unwrap();
        assert_eq!(&buf[..4], b"SFCK");
        let loaded = read_checkpoint(&buf[..]).unwrap();
        assert_eq!(loaded.descriptor.kind, "test");
        let mut q = sample();
        for t in q.iter_mut() {
            t.value.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
        loaded.apply_to(&mut q).unwrap();
        for (a, b) in p.iter().zip(q.iter()) {
            let bits = |t: &Tensor<f32>| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(&a.value), bits(&b.value));
        }
    }

    #[test]
    fn corrupted_files_are_format_errors() {
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, "test", serde_json::Value::Null, &sample()).unwrap();
        for cut in [0, 3, 10, 20, buf.len() - 1] {
            assert!(matches!(
                read_checkpoint(&buf[..cut]),
                Err(Error::Format { .. })
            ));
        }
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(
            read_checkpoint(&bad[..]),
            Err(Error::Format { offset: 0, .. })
        ));
        let mut bad = buf.clone();
        bad[4] = 9;
        assert!(matches!(
            read_checkpoint(&bad[..]),
            Err(Error::Format { offset: 4, .. })
        ));
        let mut long = buf;
        long.push(0);
        assert!(read_checkpoint(&long[..]).is_err());
    }
}
