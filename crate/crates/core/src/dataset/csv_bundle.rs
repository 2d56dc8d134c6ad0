//! csv-bundle: a directory holding `descriptors.csv`, `train.csv`,
//! `test_seen.csv`, `test_unseen.csv` (no header; first column the class id,
//! the rest values) and `meta.json` with `{S, U, d_x, d_a}`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ClassId, FeatureDataset, Partition, SemanticTable};
use crate::error::{Error, Result};
use crate::nn::Mat;

#[derive(Debug, Serialize, Deserialize)]
struct Meta {
    #[serde(rename = "S")]
    seen: usize,
    #[serde(rename = "U")]
    unseen: usize,
    d_x: usize,
    d_a: usize,
}

const FILES: [&str; 3] = ["train.csv", "test_seen.csv", "test_unseen.csv"];

pub(super) fn write_bundle(ds: &FeatureDataset, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let sem = &ds.semantic;
    let meta = Meta {
        seen: sem.seen_count(),
        unseen: sem.unseen_count(),
        d_x: ds.feature_dim(),
        d_a: sem.dim(),
    };
    fs::write(dir.join("meta.json"), serde_json::to_vec_pretty(&meta)?)?;
    let ids = sem.all_ids();
    write_table(&dir.join("descriptors.csv"), sem.descriptors(), &ids)?;
    for (name, p) in FILES.iter().zip([&ds.train, &ds.test_seen, &ds.test_unseen]) {
        write_table(&dir.join(name), &p.x, &p.y)?;
    }
    Ok(())
}

fn write_table(path: &Path, x: &Mat, ids: &[ClassId]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    for (row, id) in x.iter_rows().zip(ids) {
        let mut rec = Vec::with_capacity(row.len() + 1);
        rec.push(id.to_string());
        // Display for f32 is the shortest string that parses back exactly.
        rec.extend(row.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

fn read_table(path: &Path, cols: usize) -> Result<(Mat, Vec<ClassId>)> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let mut data = Vec::new();
    let mut ids = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let parse_err = |msg: String| Error::Parse {
            path: path.to_path_buf(),
            msg: format!("line {}: {msg}", line + 1),
        };
        if rec.len() != cols + 1 {
            return Err(Error::shape(format!(
                "{}: line {} has {} values, expected {}",
                path.display(),
                line + 1,
                rec.len().saturating_sub(1),
                cols
            )));
        }
        let id: ClassId = rec[0].parse().map_err(|e| parse_err(format!("class id: {e}")))?;
        ids.push(id);
        for f in rec.iter().skip(1) {
            data.push(f.parse::<f32>().map_err(|e| parse_err(format!("value {f:?}: {e}")))?);
        }
    }
    Ok((Mat::from_vec(ids.len(), cols, data)?, ids))
}

pub(super) fn read_bundle(dir: &Path) -> Result<FeatureDataset> {
    let meta_path = dir.join("meta.json");
    let meta: Meta = serde_json::from_slice(&fs::read(&meta_path)?).map_err(|e| Error::Parse {
        path: meta_path.clone(),
        msg: e.to_string(),
    })?;
    let (desc, ids) = read_table(&dir.join("descriptors.csv"), meta.d_a)?;
    let expected: Vec<ClassId> = (1..=(meta.seen + meta.unseen) as ClassId).collect();
    if ids != expected {
        return Err(Error::Parse {
            path: dir.join("descriptors.csv"),
            msg: format!("descriptor rows must list class ids 1..={} in order", expected.len()),
        });
    }
    let semantic = SemanticTable::new(desc, meta.seen, meta.unseen)?;
    let mut parts = Vec::new();
    for name in FILES {
        let (x, y) = read_table(&dir.join(name), meta.d_x)?;
        parts.push(Partition::new(x, y)?);
    }
    let tu = parts.pop().expect("three partitions");
    let ts = parts.pop().expect("three partitions");
    let tr = parts.pop().expect("three partitions");
    FeatureDataset::new(tr, ts, tu, semantic)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::test_support::random_dataset;
    use crate::dataset::{load_dataset, save_dataset, DatasetFormat};

    #[test]
    fn roundtrip_within_text_precision() {
        let dir = tempfile::tempdir().unwrap();
        let ds = random_dataset(11, 3, 2, 5, 3);
        save_dataset(&ds, dir.path(), DatasetFormat::CsvBundle).unwrap();
        let back = load_dataset(dir.path(), DatasetFormat::CsvBundle).unwrap();
        assert_eq!(back.train.y, ds.train.y);
        for (a, b) in back.train.x.as_slice().iter().zip(ds.train.x.as_slice()) {
            assert!((a - b).abs() <= 1e-6);
        }
        assert_eq!(back.semantic.seen_count(), 3);
    }

    #[test]
    fn hand_written_two_class_bundle() {
        let dir = tempfile::tempdir().unwrap();
        let d = dir.path();
        fs::write(d.join("meta.json"), r#"{"S":1,"U":1,"d_x":2,"d_a":2}"#).unwrap();
        fs::write(d.join("descriptors.csv"), "1,0.1,0.9\n2,0.8,0.2\n").unwrap();
        fs::write(d.join("train.csv"), "1,1.0,2.0\n1,1.5,2.5\n1,0.5,1.5\n").unwrap();
        fs::write(d.join("test_seen.csv"), "").unwrap();
        fs::write(d.join("test_unseen.csv"), "2,3.0,0.5\n").unwrap();
        let ds = read_bundle(d).unwrap();
        assert_eq!(ds.train.len(), 3);
        assert!(ds.test_seen.is_empty());
        fs::write(d.join("train.csv"), "2,1.0,2.0\n").unwrap();
        assert!(matches!(read_bundle(d), Err(Error::SplitViolation(_))));
    }
}
