//! Binary matrix file shared by KGE and GNN outputs.
//!
//! Layout: magic `SGNN`, version `u32`, rows `u64`, cols `u32`, then
//! `rows * cols` row-major `f64`, all little-endian.

use std::fs;
use std::path::Path;

use crate::numcore::Matrix;

pub const MAGIC: &[u8; 4] = b"SGNN";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 8 + 4;

#[derive(Debug, thiserror::Error)]
pub enum EmbFileError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("bad embedding file: {0}")]
    Format(String),
}

pub fn encode_matrix(m: &Matrix) -> Vec<u8> {
    let mut buf = Vec::with_capacity(HEADER_LEN + m.data().len() * 8);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(m.rows() as u64).to_le_bytes());
    buf.extend_from_slice(&(m.cols() as u32).to_le_bytes());
    for v in m.data() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf
}

pub fn decode_matrix(bytes: &[u8]) -> Result<Matrix, EmbFileError> {
    if bytes.len() < HEADER_LEN || &bytes[..4] != MAGIC {
        return Err(EmbFileError::Format("missing SGNN header".into()));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(EmbFileError::Format(format!("unsupported version {version}")));
    }
    let rows = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let cols = u32::from_le_bytes(bytes[16..20].try_into().expect("4 bytes")) as usize;
    let body = &bytes[HEADER_LEN..];
    if body.len() != rows * cols * 8 {
        return Err(EmbFileError::Format(format!(
            "{rows}x{cols} needs {} payload bytes, found {}",
            rows * cols * 8,
            body.len()
        )));
    }
    let data = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    Matrix::from_vec(rows, cols, data).map_err(|e| EmbFileError::Format(e.to_string()))
}

pub fn write_matrix(path: &Path, m: &Matrix) -> Result<(), EmbFileError> {
    fs::write(path, encode_matrix(m)).map_err(|source| EmbFileError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn read_matrix(path: &Path) -> Result<Matrix, EmbFileError> {
    let bytes = fs::read(path).map_err(|source| EmbFileError::Io {
        path: path.display().to_string(),
        source,
    })?;
    decode_matrix(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_layout() {
        let m = Matrix::from_rows(&[vec![1.0, -2.5]]).unwrap();
        let b = encode_matrix(&m);
        assert_eq!(&b[..4], b"SGNN");
        assert_eq!(u32::from_le_bytes(b[4..8].try_into().unwrap()), 1);
        assert_eq!(u64::from_le_bytes(b[8..16].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(b[16..20].try_into().unwrap()), 2);
        assert_eq!(f64::from_le_bytes(b[28..36].try_into().unwrap()), -2.5);
        assert_eq!(b.len(), 36);
    }

    #[test]
    fn truncated_rejected() {
        let b = encode_matrix(&Matrix::zeros(2, 2));
        assert!(decode_matrix(&b[..b.len() - 1]).is_err());
        assert!(decode_matrix(b"XXXX").is_err());
    }

    proptest! {
        #[test]
        fn roundtrip(rows in 0usize..6, cols in 0usize..6, seed in any::<u64>()) {
            use rand::SeedableRng;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let m = Matrix::uniform(rows, cols, 1e6, &mut rng);
            prop_assert_eq!(decode_matrix(&encode_matrix(&m)).unwrap(), m);
        }
    }
}
