//! `DPMF` binary matrices: 4 magic bytes, `N` and `D` as little-endian
//! `u32`, then `N * D` little-endian `f64` values in row-major order.

use std::fs;
use std::path::Path;

use ndarray::Array2;

use super::{DataError, DatasetBundle};

pub const MAGIC: [u8; 4] = *b"DPMF";
const HEADER_LEN: u64 = 12;

pub fn read_binary(bytes: &[u8]) -> Result<Array2<f64>, DataError> {
    let actual = bytes.len() as u64;
    if bytes.len() < HEADER_LEN as usize {
        if bytes.len() >= 4 && bytes[..4] != MAGIC {
            return Err(DataError::BadMagic(bytes[..4].try_into().unwrap()));
        }
        return Err(DataError::Truncated {
            expected: HEADER_LEN,
            actual,
        });
    }
    let magic: [u8; 4] = bytes[..4].try_into().unwrap();
    if magic != MAGIC {
        return Err(DataError::BadMagic(magic));
    }
    let n = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let d = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let expected = HEADER_LEN + 8 * n as u64 * d as u64;
    if actual < expected {
        return Err(DataError::Truncated { expected, actual });
    }
    if actual > expected {
        return Err(DataError::Trailing { expected, actual });
    }
    let values = bytes[HEADER_LEN as usize..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(Array2::from_shape_vec((n, d), values).expect("length checked"))
}

pub fn load_binary(path: impl AsRef<Path>) -> Result<DatasetBundle, DataError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| DataError::io(path, e))?;
    DatasetBundle::new(path.display().to_string(), read_binary(&bytes)?, None)
}

pub fn write_binary(path: impl AsRef<Path>, features: &Array2<f64>) -> Result<(), DataError> {
    let path = path.as_ref();
    let (n, d) = features.dim();
    let too_big = |what: &str| DataError::Spec(format!("{what} exceeds u32 range"));
    let n32 = u32::try_from(n).map_err(|_| too_big("row count"))?;
    let d32 = u32::try_from(d).map_err(|_| too_big("column count"))?;
    let mut bytes = Vec::with_capacity(HEADER_LEN as usize + 8 * n * d);
    bytes.extend_from_slice(&MAGIC);
    bytes.extend_from_slice(&n32.to_le_bytes());
    bytes.extend_from_slice(&d32.to_le_bytes());
    // iter() walks logical row-major order regardless of memory layout
    for x in features.iter() {
        bytes.extend_from_slice(&x.to_le_bytes());
    }
    fs::write(path, bytes).map_err(|e| DataError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn round_trip_is_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.dpmf");
        let x = array![[0.1, -0.0, 1e-308], [f64::MAX, 3.5, -7.25]];
        write_binary(&path, &x).unwrap();
        let back = load_binary(&path).unwrap().features;
        for (a, b) in x.iter().zip(back.iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        let t = x.t().to_owned();
        write_binary(&path, &t).unwrap();
        assert_eq!(load_binary(&path).unwrap().features, t);
    }

    #[test]
    fn layout() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.dpmf");
        write_binary(&path, &array![[1.0, 2.0]]).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(&bytes[..4], b"DPMF");
        assert_eq!(&bytes[4..12], &[1, 0, 0, 0, 2, 0, 0, 0]);
        assert_eq!(&bytes[12..20], &1.0f64.to_le_bytes());
        assert_eq!(bytes.len(), 28);
    }

    #[test]
    fn wrong_magic() {
        let mut bytes = b"DPMX".to_vec();
        bytes.extend_from_slice(&[0; 8]);
        assert!(matches!(read_binary(&bytes), Err(DataError::BadMagic(m)) if &m == b"DPMX"));
    }

    #[test]
    fn short_payload() {
        let mut bytes = MAGIC.to_vec();
        bytes.extend_from_slice(&2u32.to_le_bytes());
        bytes.extend_from_slice(&2u32.to_le_bytes());
        bytes.extend(std::iter::repeat_n(0u8, 24));
        let err = read_binary(&bytes).unwrap_err();
        assert!(matches!(
            err,
            DataError::Truncated {
                expected: 44,
                actual: 36
            }
        ));
        let msg = err.to_string();
        assert!(msg.contains("44") && msg.contains("36"), "{msg}");
        bytes.extend(std::iter::repeat_n(0u8, 16));
        assert!(matches!(
            read_binary(&bytes),
            Err(DataError::Trailing { .. })
        ));
    }

    #[test]
    fn non_finite_rejected_on_load() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.dpmf");
        write_binary(&path, &array![[1.0], [f64::NAN]]).unwrap();
        assert!(matches!(
            load_binary(&path),
            Err(DataError::NonFinite { row: 2, col: 1, .. })
        ));
    }
}
