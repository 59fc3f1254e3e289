//! Named-tensor container.
//!
//! Layout: magic `EUSTNSR1`, a little-endian u64 header length, a JSON header
//! `{version, metadata, tensors: [{name, rows, cols}]}`, then every tensor's
//! values as little-endian f64 in header order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use euslm_core::{Error, Result};

use crate::params::ParamStore;
use crate::tensor::Matrix;

pub const TENSOR_MAGIC: &[u8; 8] = b"EUSTNSR1";
pub const TENSOR_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Entry {
    name: String,
    rows: usize,
    cols: usize,
}

#[derive(Serialize, Deserialize)]
struct Header {
    version: u32,
    metadata: Value,
    tensors: Vec<Entry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TensorFile {
    pub metadata: Value,
    pub tensors: Vec<(String, Matrix)>,
}

impl TensorFile {
    pub fn get(&self, name: &str) -> Option<&Matrix> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, m)| m)
    }

    /// Tensors whose names start with `prefix`, with the prefix removed.
    pub fn with_prefix<'a>(&'a self, prefix: &'a str) -> impl Iterator<Item = (&'a str, &'a Matrix)> + 'a {
        self.tensors.iter().filter_map(move |(n, m)| n.strip_prefix(prefix).map(|s| (s, m)))
    }
}

pub fn write_tensors<'a, W: Write>(out: &mut W, metadata: &Value, tensors: impl IntoIterator<Item = (&'a str, &'a Matrix)>) -> Result<()> {
    let tensors: Vec<(&str, &Matrix)> = tensors.into_iter().collect();
    let header = Header {
        version: TENSOR_FORMAT_VERSION,
        metadata: metadata.clone(),
        tensors: tensors.iter().map(|(n, m)| Entry { name: n.to_string(), rows: m.rows(), cols: m.cols() }).collect(),
    };
    let json = serde_json::to_vec(&header)?;
    out.write_all(TENSOR_MAGIC)?;
    out.write_all(&(json.len() as u64).to_le_bytes())?;
    out.write_all(&json)?;
    for (_, m) in tensors {
        for x in m.data() {
            out.write_all(&x.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_tensors<R: Read>(input: &mut R) -> Result<TensorFile> {
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic)?;
    if &magic != TENSOR_MAGIC {
        return Err(Error::Input("not a tensor file".into()));
    }
    let mut len = [0u8; 8];
    input.read_exact(&mut len)?;
    let len = u64::from_le_bytes(len) as usize;
    let mut json = vec![0u8; len];
    input.read_exact(&mut json)?;
    let header: Header = serde_json::from_slice(&json)?;
    if header.version != TENSOR_FORMAT_VERSION {
        return Err(Error::Input(format!("unsupported tensor file version {}", header.version)));
    }
    let mut tensors = Vec::with_capacity(header.tensors.len());
    let mut buf = [0u8; 8];
    for e in header.tensors {
        let mut data = Vec::with_capacity(e.rows * e.cols);
        for _ in 0..e.rows * e.cols {
            input.read_exact(&mut buf)?;
            data.push(f64::from_le_bytes(buf));
        }
        tensors.push((e.name, Matrix::from_vec(e.rows, e.cols, data)));
    }
    Ok(TensorFile { metadata: header.metadata, tensors })
}

pub fn save_tensors<'a>(path: &Path, metadata: &Value, tensors: impl IntoIterator<Item = (&'a str, &'a Matrix)>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write_tensors(&mut out, metadata, tensors)?;
    out.flush()?;
    Ok(())
}

pub fn load_tensors(path: &Path) -> Result<TensorFile> {
    read_tensors(&mut BufReader::new(File::open(path)?))
}

pub fn store_tensors(store: &ParamStore) -> impl Iterator<Item = (&str, &Matrix)> {
    store.iter().map(|(_, p)| (p.name.as_str(), &p.value))
}

/// Copies the tensors named like the store's parameters into it.
pub fn fill_store(store: &mut ParamStore, file: &TensorFile, prefix: &str) -> Result<()> {
    let mut src = ParamStore::new();
    for (name, m) in file.with_prefix(prefix) {
        src.add(name, m.clone(), false);
    }
    store.load_from(&src).map_err(Error::Input)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_is_bit_exact() {
        let a = Matrix::from_vec(2, 2, vec![0.1, -0.0, f64::MIN_POSITIVE, 1e300]);
        let b = Matrix::zeros(0, 3);
        let meta = serde_json::json!({"step": 7});
        let mut buf = Vec::new();
        write_tensors(&mut buf, &meta, [("a", &a), ("b", &b)]).unwrap();
        let f = read_tensors(&mut buf.as_slice()).unwrap();
        assert_eq!(f.metadata, meta);
        let got = f.get("a").unwrap();
        for (x, y) in got.data().iter().zip(a.data()) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
        assert_eq!(f.get("b").unwrap().shape(), (0, 3));
        assert!(read_tensors(&mut &b"garbage!........"[..]).is_err());
    }
}
