use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const EMBEDDINGS_MAGIC: &[u8; 4] = b"IERE";
pub const EMBEDDINGS_VERSION: u16 = 1;
const HEADER_LEN: usize = 4 + 2 + 4 + 8;

/// Row-major f32 matrix stored as
/// `IERE | version u16 | dim u32 | count u64 | count*dim f32`, all
/// little-endian. Rows are addressed by `embedding_ref`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    dim: usize,
    data: Vec<f32>,
}

impl EmbeddingMatrix {
    pub fn new(dim: usize) -> Self {
        Self { dim, data: Vec::new() }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        if self.dim == 0 {
            0
        } else {
            self.data.len() / self.dim
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn row(&self, i: usize) -> Option<&[f32]> {
        let start = i.checked_mul(self.dim)?;
        self.data.get(start..start + self.dim)
    }

    /// Appends a row and returns its index.
    pub fn push(&mut self, row: &[f32]) -> Result<usize> {
        if row.len() != self.dim {
            return Err(Error::DimensionMismatch {
                id: format!("row {}", self.len()),
                expected: self.dim,
                found: row.len(),
            });
        }
        self.data.extend_from_slice(row);
        Ok(self.len() - 1)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|reason| Error::invalid("embedding file", format!("{}: {reason}", path.display())))
    }

    fn from_bytes(bytes: &[u8]) -> std::result::Result<Self, String> {
        if bytes.len() < HEADER_LEN {
            return Err("truncated header".into());
        }
        if &bytes[..4] != EMBEDDINGS_MAGIC {
            return Err("bad magic".into());
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != EMBEDDINGS_VERSION {
            return Err(format!("unsupported format_version {version}"));
        }
        let dim = u32::from_le_bytes(bytes[6..10].try_into().unwrap()) as usize;
        let count = u64::from_le_bytes(bytes[10..18].try_into().unwrap()) as usize;
        let expected = count
            .checked_mul(dim)
            .and_then(|n| n.checked_mul(4))
            .ok_or("size overflow")?;
        let body = &bytes[HEADER_LEN..];
        if body.len() != expected {
            return Err(format!("expected {expected} payload bytes, found {}", body.len()));
        }
        let data = body
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(Self { dim, data })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let io = |e| Error::io(path, e);
        w.write_all(EMBEDDINGS_MAGIC).map_err(io)?;
        w.write_all(&EMBEDDINGS_VERSION.to_le_bytes()).map_err(io)?;
        w.write_all(&(self.dim as u32).to_le_bytes()).map_err(io)?;
        w.write_all(&(self.len() as u64).to_le_bytes()).map_err(io)?;
        for x in &self.data {
            w.write_all(&x.to_le_bytes()).map_err(io)?;
        }
        w.flush().map_err(io)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn write_then_read() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.bin");
        let mut m = EmbeddingMatrix::new(3);
        m.push(&[1.0, 2.0, 3.0]).unwrap();
        m.push(&[-0.5, f32::MIN_POSITIVE, 7.25]).unwrap();
        m.write(&path).unwrap();
        let back = EmbeddingMatrix::read(&path).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.row(1).unwrap(), &[-0.5, f32::MIN_POSITIVE, 7.25]);
        assert!(back.row(2).is_none());

        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(&bytes[..4], b"IERE");
        assert_eq!(bytes.len(), 18 + 2 * 3 * 4);
    }

    #[test]
    fn rejects_bad_headers() {
        assert!(EmbeddingMatrix::from_bytes(b"IERX\x01\x00").is_err());
        let mut bytes = Vec::new();
        bytes.extend_from_slice(b"IERE");
        bytes.extend_from_slice(&2u16.to_le_bytes());
        bytes.extend_from_slice(&1u32.to_le_bytes());
        bytes.extend_from_slice(&0u64.to_le_bytes());
        assert!(EmbeddingMatrix::from_bytes(&bytes).unwrap_err().contains("format_version"));
    }
}
