//! `gzb` v1: the canonical binary dataset format.
//!
//! ```text
//! "GZB1"
//! u32 × 8   version=1, S, U, d_x, d_a, n_train, n_test_seen, n_test_unseen
//! f32[(S+U)·d_a]   descriptors
//! f32[n_train·d_x] train_x      u32[n_train] train_y
//! f32[..]          test_seen_x  u32[..]      test_seen_y
//! f32[..]          test_unseen_x u32[..]     test_unseen_y
//! ```
//! Everything little-endian, matrices row-major.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{FeatureDataset, Partition, SemanticTable};
use crate::error::{Error, Result};
use crate::nn::Mat;

pub const GZB_MAGIC: &[u8; 4] = b"GZB1";
const GZB_VERSION: u32 = 1;

pub fn write_gzb(ds: &FeatureDataset, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(GZB_MAGIC)?;
    let sem = &ds.semantic;
    let header = [
        GZB_VERSION,
        sem.seen_count() as u32,
        sem.unseen_count() as u32,
        ds.feature_dim() as u32,
        sem.dim() as u32,
        ds.train.len() as u32,
        ds.test_seen.len() as u32,
        ds.test_unseen.len() as u32,
    ];
    for v in header {
        w.write_all(&v.to_le_bytes())?;
    }
    write_f32s(&mut w, sem.descriptors().as_slice())?;
    for p in [&ds.train, &ds.test_seen, &ds.test_unseen] {
        write_f32s(&mut w, p.x.as_slice())?;
        for &y in &p.y {
            w.write_all(&y.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_gzb(path: &Path) -> Result<FeatureDataset> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|e| truncated(path, e))?;
    if &magic != GZB_MAGIC {
        return Err(Error::MagicMismatch {
            path: path.to_path_buf(),
            expected: String::from_utf8_lossy(GZB_MAGIC).into_owned(),
            found: String::from_utf8_lossy(&magic).into_owned(),
        });
    }
    let mut h = [0u32; 8];
    for v in h.iter_mut() {
        *v = read_u32(&mut r).map_err(|e| truncated(path, e))?;
    }
    let [version, s, u, d_x, d_a, n_tr, n_ts, n_tu] = h.map(|v| v as usize);
    if version as u32 != GZB_VERSION {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            msg: format!("unsupported gzb version {version}"),
        });
    }
    let desc = read_mat(&mut r, s + u, d_a).map_err(|e| truncated(path, e))?;
    let semantic = SemanticTable::new(desc, s, u)?;
    let mut parts = Vec::with_capacity(3);
    for n in [n_tr, n_ts, n_tu] {
        let x = read_mat(&mut r, n, d_x).map_err(|e| truncated(path, e))?;
        let mut y = Vec::with_capacity(n);
        for _ in 0..n {
            y.push(read_u32(&mut r).map_err(|e| truncated(path, e))?);
        }
        parts.push(Partition::new(x, y)?);
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            msg: "trailing bytes after gzb payload".into(),
        });
    }
    let tu = parts.pop().expect("three partitions");
    let ts = parts.pop().expect("three partitions");
    let tr = parts.pop().expect("three partitions");
    FeatureDataset::new(tr, ts, tu, semantic)
}

fn truncated(path: &Path, e: std::io::Error) -> Error {
    if e.kind() == std::io::ErrorKind::UnexpectedEof {
        Error::Parse {
            path: path.to_path_buf(),
            msg: "file truncated".into(),
        }
    } else {
        Error::Io(e)
    }
}

pub(crate) fn write_f32s<W: Write>(w: &mut W, xs: &[f32]) -> std::io::Result<()> {
    for v in xs {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub(crate) fn read_u32<R: Read>(r: &mut R) -> std::io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_mat<R: Read>(r: &mut R, rows: usize, cols: usize) -> std::io::Result<Mat> {
    let n = rows * cols;
    let mut buf = vec![0u8; n * 4];
    r.read_exact(&mut buf)?;
    let data = buf
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Ok(Mat::from_vec(rows, cols, data).expect("length matches"))
}

/// Matrix with a `u32 rows, u32 cols` prefix followed by the gzb float
/// payload; the unit of every checkpoint section.
pub fn write_matrix<W: Write>(w: &mut W, m: &Mat) -> std::io::Result<()> {
    w.write_all(&(m.rows() as u32).to_le_bytes())?;
    w.write_all(&(m.cols() as u32).to_le_bytes())?;
    write_f32s(w, m.as_slice())
}

pub fn read_matrix<R: Read>(r: &mut R) -> std::io::Result<Mat> {
    let rows = read_u32(r)? as usize;
    let cols = read_u32(r)? as usize;
    read_mat(r, rows, cols)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::test_support::random_dataset;

    #[test]
    fn roundtrip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.gzb");
        let ds = random_dataset(5, 3, 2, 6, 4);
        write_gzb(&ds, &p).unwrap();
        assert_eq!(read_gzb(&p).unwrap(), ds);
    }

    #[test]
    fn empty_test_seen_roundtrips() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.gzb");
        let mut ds = random_dataset(6, 3, 2, 6, 4);
        ds.test_seen = Partition::empty(6);
        write_gzb(&ds, &p).unwrap();
        let back = read_gzb(&p).unwrap();
        assert!(back.test_seen.is_empty());
        assert_eq!(back, ds);
    }

    #[test]
    fn bad_magic_and_truncation() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.gzb");
        std::fs::write(&p, b"NOPE\x01\x00\x00\x00").unwrap();
        assert!(matches!(read_gzb(&p), Err(Error::MagicMismatch { .. })));

        let ds = random_dataset(7, 2, 2, 3, 2);
        write_gzb(&ds, &p).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        std::fs::write(&p, &bytes[..bytes.len() - 3]).unwrap();
        assert!(matches!(read_gzb(&p), Err(Error::Parse { .. })));
    }

    #[test]
    fn split_violation_detected_on_load() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.gzb");
        let mut ds = random_dataset(8, 2, 2, 3, 2);
        ds.train.y[0] = 4;
        // bypass save_dataset validation to plant a corrupt file
        write_gzb(&ds, &p).unwrap();
        assert!(matches!(read_gzb(&p), Err(Error::SplitViolation(_))));
    }
}
