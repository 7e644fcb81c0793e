//! Single-file tensor archive used for backbone weights and training
//! checkpoints.
//!
//! Layout: magic `UQA1`, little-endian u64 header length, a JSON header
//! `{"meta": <value>, "tensors": [{"name": ..., "len": ...}, ...]}`, then
//! the tensor payloads as little-endian f64 in header order.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{io_err, Error, Result};

const MAGIC: &[u8; 4] = b"UQA1";

#[derive(serde::Serialize, serde::Deserialize)]
struct Header {
    meta: serde_json::Value,
    tensors: Vec<TensorEntry>,
}

#[derive(serde::Serialize, serde::Deserialize)]
struct TensorEntry {
    name: String,
    len: usize,
}

/// Parsed archive: free-form metadata plus named f64 tensors.
#[derive(Debug)]
pub struct TensorArchive {
    pub meta: serde_json::Value,
    tensors: Vec<(String, Vec<f64>)>,
}

impl TensorArchive {
    pub fn tensor(&self, name: &str) -> Option<&[f64]> {
        self.tensors
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_slice())
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.iter().map(|(n, _)| n.as_str())
    }

    /// Copies the named tensor into `dst`, requiring an exact length match.
    pub fn load_into(&self, name: &str, dst: &mut [f64], path: &Path) -> Result<()> {
        let src = self.tensor(name).ok_or_else(|| Error::WeightsLoad {
            path: path.to_path_buf(),
            reason: format!("missing tensor {name:?}"),
        })?;
        if src.len() != dst.len() {
            return Err(Error::WeightsLoad {
                path: path.to_path_buf(),
                reason: format!(
                    "tensor {name:?} holds {} values, expected {}",
                    src.len(),
                    dst.len()
                ),
            });
        }
        dst.copy_from_slice(src);
        Ok(())
    }
}

pub fn write_archive(
    path: impl AsRef<Path>,
    meta: serde_json::Value,
    tensors: &[(String, &[f64])],
) -> Result<()> {
    let path = path.as_ref();
    let header = Header {
        meta,
        tensors: tensors
            .iter()
            .map(|(name, data)| TensorEntry { name: name.clone(), len: data.len() })
            .collect(),
    };
    let header_bytes = serde_json::to_vec(&header)?;
    let mut file = std::fs::File::create(path).map_err(io_err(path))?;
    let mut out = std::io::BufWriter::new(&mut file);
    out.write_all(MAGIC).map_err(io_err(path))?;
    out.write_all(&(header_bytes.len() as u64).to_le_bytes())
        .map_err(io_err(path))?;
    out.write_all(&header_bytes).map_err(io_err(path))?;
    for (_, data) in tensors {
        for v in *data {
            out.write_all(&v.to_le_bytes()).map_err(io_err(path))?;
        }
    }
    out.flush().map_err(io_err(path))?;
    Ok(())
}

pub fn read_archive(path: impl AsRef<Path>) -> Result<TensorArchive> {
    let path = path.as_ref();
    let bad = |reason: String| Error::WeightsLoad { path: path.to_path_buf(), reason };
    let mut file = std::io::BufReader::new(std::fs::File::open(path).map_err(io_err(path))?);

    let mut magic = [0u8; 4];
    file.read_exact(&mut magic).map_err(io_err(path))?;
    if &magic != MAGIC {
        return Err(bad("not a tensor archive (bad magic)".into()));
    }
    let mut len_bytes = [0u8; 8];
    file.read_exact(&mut len_bytes).map_err(io_err(path))?;
    let header_len = u64::from_le_bytes(len_bytes) as usize;
    let mut header_bytes = vec![0u8; header_len];
    file.read_exact(&mut header_bytes).map_err(io_err(path))?;
    let header: Header =
        serde_json::from_slice(&header_bytes).map_err(|e| bad(format!("bad header: {e}")))?;

    let mut tensors = Vec::with_capacity(header.tensors.len());
    let mut buf = [0u8; 8];
    for entry in header.tensors {
        let mut data = Vec::with_capacity(entry.len);
        for _ in 0..entry.len {
            file.read_exact(&mut buf)
                .map_err(|_| bad(format!("truncated tensor {:?}", entry.name)))?;
            data.push(f64::from_le_bytes(buf));
        }
        tensors.push((entry.name, data));
    }
    Ok(TensorArchive { meta: header.meta, tensors })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips_meta_and_tensors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("weights.uqa");
        let meta = serde_json::json!({"kind": "test", "input_size": 32});
        let a = vec![1.0, -2.5, 3.25];
        let b = vec![0.0; 7];
        write_archive(
            &path,
            meta.clone(),
            &[("layer.weight".into(), a.as_slice()), ("layer.bias".into(), b.as_slice())],
        )
        .unwrap();

        let archive = read_archive(&path).unwrap();
        assert_eq!(archive.meta, meta);
        assert_eq!(archive.tensor("layer.weight").unwrap(), a.as_slice());
        assert_eq!(archive.tensor("layer.bias").unwrap(), b.as_slice());
        assert!(archive.tensor("nope").is_none());
    }

    #[test]
    fn rejects_garbage() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("garbage.uqa");
        std::fs::write(&path, b"not an archive at all").unwrap();
        assert!(matches!(
            read_archive(&path),
            Err(Error::WeightsLoad { .. })
        ));
    }

    #[test]
    fn missing_file_is_weights_error_with_path() {
        let err = read_archive("/nonexistent/weights.uqa").unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }
}
