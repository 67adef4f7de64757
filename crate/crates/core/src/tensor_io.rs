//! On-disk tensor format and report writers.
//!
//! A tensor file is one line of UTF-8 JSON,
//!
//! ```text
//! {"magic":"aciq-tensor-v1","shape":[2,3],"channel_axis":0,"dtype":"f32le"}\n
//! ```
//!
//! followed immediately by `4 * product(shape)` bytes of little-endian
//! IEEE-754 `f32`, channel-major. Values are widened to `f64` on load and
//! narrowed on store.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quantizer::ChannelTensor;

pub const MAGIC: &str = "aciq-tensor-v1";
pub const DTYPE: &str = "f32le";

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    magic: String,
    shape: Vec<usize>,
    channel_axis: usize,
    dtype: String,
}

pub fn encode_tensor(tensor: &ChannelTensor) -> Result<Vec<u8>> {
    let header = Header {
        magic: MAGIC.to_owned(),
        shape: tensor.shape().to_vec(),
        channel_axis: tensor.channel_axis(),
        dtype: DTYPE.to_owned(),
    };
    let mut out = serde_json::to_vec(&header).map_err(|e| Error::Report(e.to_string()))?;
    out.push(b'\n');
    out.reserve(4 * tensor.len());
    for &x in tensor.data() {
        out.extend_from_slice(&(x as f32).to_le_bytes());
    }
    Ok(out)
}

pub fn decode_tensor(bytes: &[u8]) -> Result<ChannelTensor> {
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::BadHeader("no header line".into()))?;
    let line = std::str::from_utf8(&bytes[..nl]).map_err(|e| Error::BadHeader(e.to_string()))?;
    let value: serde_json::Value =
        serde_json::from_str(line).map_err(|e| Error::BadHeader(e.to_string()))?;
    match value.get("magic").and_then(|m| m.as_str()) {
        Some(MAGIC) => {}
        Some(other) => return Err(Error::BadMagic(other.to_owned())),
        None => return Err(Error::BadMagic(String::new())),
    }
    let header: Header = serde_json::from_value(value).map_err(|e| Error::BadHeader(e.to_string()))?;
    if header.dtype != DTYPE {
        return Err(Error::BadHeader(format!("unsupported dtype {:?}", header.dtype)));
    }
    let count = header
        .shape
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::BadHeader("shape overflows".into()))?;
    let payload = &bytes[nl + 1..];
    let expected = count
        .checked_mul(4)
        .ok_or_else(|| Error::BadHeader("shape overflows".into()))?;
    if payload.len() != expected {
        return Err(Error::PayloadLengthMismatch {
            expected,
            found: payload.len(),
        });
    }
    let data = payload
        .chunks_exact(4)
        .enumerate()
        .map(|(i, c)| {
            let x = f32::from_le_bytes([c[0], c[1], c[2], c[3]]);
            if x.is_finite() {
                Ok(x as f64)
            } else {
                Err(Error::NonFinite { index: i })
            }
        })
        .collect::<Result<Vec<_>>>()?;
    ChannelTensor::new(header.shape, header.channel_axis, data)
        .map_err(|e| Error::BadHeader(e.to_string()))
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<ChannelTensor> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_tensor(&bytes)
}

pub fn write_tensor(tensor: &ChannelTensor, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if let Some(i) = tensor.data().iter().position(|x| !(*x as f32).is_finite()) {
        return Err(Error::NonFinite { index: i });
    }
    let bytes = encode_tensor(tensor)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Tabular report: a header row and rows of pre-rendered cells.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(columns: impl IntoIterator<Item = S>) -> Self {
        Self {
            columns: columns.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push<S: ToString>(&mut self, row: impl IntoIterator<Item = S>) {
        self.rows.push(row.into_iter().map(|c| c.to_string()).collect());
    }
}

/// RFC-4180 CSV with LF line endings.
pub fn csv_bytes(table: &Table) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    let err = |e: csv::Error| Error::Report(e.to_string());
    w.write_record(&table.columns).map_err(err)?;
    for row in &table.rows {
        w.write_record(row).map_err(err)?;
    }
    w.into_inner().map_err(|e| Error::Report(e.to_string()))
}

pub fn write_csv(table: &Table, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, csv_bytes(table)?).map_err(|e| Error::io(path, e))
}

/// Any serializable report as one pretty-printed JSON document.
pub fn write_json<T: Serialize>(report: &T, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut bytes = serde_json::to_vec_pretty(report).map_err(|e| Error::Report(e.to_string()))?;
    bytes.push(b'\n');
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(path, e))
}
