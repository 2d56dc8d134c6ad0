//! GZSL data model.
//!
//! Class ids are 1-based and ordered seen-then-unseen: ids `1..=S` are seen
//! classes, `S+1..=S+U` unseen. Row `id-1` of the descriptor table belongs
//! to class `id`.

mod csv_bundle;
mod gzb;
mod metrics;
mod synthetic;

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Mat;

pub use gzb::{read_gzb, write_gzb, write_matrix, read_matrix, GZB_MAGIC};
pub use metrics::{per_class_accuracies, per_class_top1};
pub use synthetic::{make_synthetic_world, ClassMap, OracleAccuracy, SyntheticWorld, SyntheticWorldSpec};

pub type ClassId = u32;

#[derive(Clone, Debug, PartialEq)]
pub struct SemanticTable {
    descriptors: Mat,
    seen: usize,
    unseen: usize,
}

impl SemanticTable {
    pub fn new(descriptors: Mat, seen: usize, unseen: usize) -> Result<Self> {
        if seen < 1 || unseen < 1 {
            return Err(Error::SplitViolation(format!(
                "need at least one seen and one unseen class, got S={seen}, U={unseen}"
            )));
        }
        if descriptors.rows() != seen + unseen {
            return Err(Error::shape(format!(
                "descriptor table has {} rows, expected S+U={}",
                descriptors.rows(),
                seen + unseen
            )));
        }
        if descriptors.cols() == 0 {
            return Err(Error::shape("descriptor dimension is zero"));
        }
        if !descriptors.is_finite() {
            return Err(Error::Numerics("descriptor table contains non-finite values".into()));
        }
        let mut rows = HashSet::new();
        for (i, r) in descriptors.iter_rows().enumerate() {
            let key: Vec<u32> = r.iter().map(|v| v.to_bits()).collect();
            if !rows.insert(key) {
                return Err(Error::SplitViolation(format!(
                    "descriptor of class {} duplicates an earlier class",
                    i + 1
                )));
            }
        }
        Ok(SemanticTable {
            descriptors,
            seen,
            unseen,
        })
    }

    pub fn seen_count(&self) -> usize {
        self.seen
    }

    pub fn unseen_count(&self) -> usize {
        self.unseen
    }

    pub fn num_classes(&self) -> usize {
        self.seen + self.unseen
    }

    pub fn dim(&self) -> usize {
        self.descriptors.cols()
    }

    pub fn descriptors(&self) -> &Mat {
        &self.descriptors
    }

    pub fn seen_descriptors(&self) -> Mat {
        self.descriptors.slice_rows(0, self.seen)
    }

    pub fn unseen_descriptors(&self) -> Mat {
        self.descriptors.slice_rows(self.seen, self.seen + self.unseen)
    }

    pub fn seen_ids(&self) -> Vec<ClassId> {
        (1..=self.seen as ClassId).collect()
    }

    pub fn unseen_ids(&self) -> Vec<ClassId> {
        (self.seen as ClassId + 1..=(self.seen + self.unseen) as ClassId).collect()
    }

    pub fn all_ids(&self) -> Vec<ClassId> {
        (1..=self.num_classes() as ClassId).collect()
    }

    pub fn is_seen(&self, id: ClassId) -> bool {
        id >= 1 && (id as usize) <= self.seen
    }

    pub fn is_unseen(&self, id: ClassId) -> bool {
        (id as usize) > self.seen && (id as usize) <= self.seen + self.unseen
    }

    /// Descriptor rows for a list of class ids.
    pub fn rows_for(&self, ids: &[ClassId]) -> Result<Mat> {
        let mut idx = Vec::with_capacity(ids.len());
        for &id in ids {
            if id == 0 || id as usize > self.num_classes() {
                return Err(Error::domain(format!("class id {id} not in descriptor table")));
            }
            idx.push(id as usize - 1);
        }
        Ok(self.descriptors.select_rows(&idx))
    }

    /// Like [`SemanticTable::rows_for`] but rejects unseen ids.
    pub fn seen_rows_for(&self, ids: &[ClassId]) -> Result<Mat> {
        if let Some(&bad) = ids.iter().find(|&&id| !self.is_seen(id)) {
            return Err(Error::SplitViolation(format!(
                "class {bad} is not a seen class (S={})",
                self.seen
            )));
        }
        self.rows_for(ids)
    }
}

/// Feature rows with their class labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Partition {
    pub x: Mat,
    pub y: Vec<ClassId>,
}

impl Partition {
    pub fn new(x: Mat, y: Vec<ClassId>) -> Result<Self> {
        if x.rows() != y.len() {
            return Err(Error::shape(format!(
                "{} feature rows but {} labels",
                x.rows(),
                y.len()
            )));
        }
        Ok(Partition { x, y })
    }

    pub fn empty(d_x: usize) -> Self {
        Partition {
            x: Mat::zeros(0, d_x),
            y: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureDataset {
    pub train: Partition,
    pub test_seen: Partition,
    pub test_unseen: Partition,
    pub semantic: SemanticTable,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetFormat {
    Gzb,
    CsvBundle,
}

impl DatasetFormat {
    /// Directories are csv bundles, everything else is gzb.
    pub fn infer(path: &Path) -> Self {
        if path.is_dir() {
            DatasetFormat::CsvBundle
        } else {
            DatasetFormat::Gzb
        }
    }
}

impl FeatureDataset {
    pub fn new(
        train: Partition,
        test_seen: Partition,
        test_unseen: Partition,
        semantic: SemanticTable,
    ) -> Result<Self> {
        let ds = FeatureDataset {
            train,
            test_seen,
            test_unseen,
            semantic,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn feature_dim(&self) -> usize {
        self.train.x.cols()
    }

    pub fn validate(&self) -> Result<()> {
        let d_x = self.train.x.cols();
        if d_x == 0 {
            return Err(Error::shape("feature dimension is zero"));
        }
        for (name, p) in self.partitions() {
            if p.x.rows() != p.y.len() {
                return Err(Error::shape(format!("{name}: rows and labels disagree")));
            }
            if p.x.cols() != d_x && !p.is_empty() {
                return Err(Error::shape(format!(
                    "{name} has {} feature columns, train has {d_x}",
                    p.x.cols()
                )));
            }
            if !p.x.is_finite() {
                return Err(Error::Numerics(format!("{name} contains non-finite features")));
            }
        }
        if self.train.is_empty() {
            return Err(Error::shape("training partition is empty"));
        }
        let sem = &self.semantic;
        let check = |name: &str, p: &Partition, want_seen: bool| -> Result<()> {
            for &id in &p.y {
                let ok = if want_seen { sem.is_seen(id) } else { sem.is_unseen(id) };
                if !ok {
                    let range = if want_seen {
                        format!("1..={}", sem.seen)
                    } else {
                        format!("{}..={}", sem.seen + 1, sem.num_classes())
                    };
                    return Err(Error::SplitViolation(format!(
                        "{name} label {id} outside {range}"
                    )));
                }
            }
            Ok(())
        };
        check("train", &self.train, true)?;
        check("test_seen", &self.test_seen, true)?;
        check("test_unseen", &self.test_unseen, false)?;
        Ok(())
    }

    fn partitions(&self) -> [(&'static str, &Partition); 3] {
        [
            ("train", &self.train),
            ("test_seen", &self.test_seen),
            ("test_unseen", &self.test_unseen),
        ]
    }
}

pub fn load_dataset(path: &Path, format: DatasetFormat) -> Result<FeatureDataset> {
    match format {
        DatasetFormat::Gzb => gzb::read_gzb(path),
        DatasetFormat::CsvBundle => csv_bundle::read_bundle(path),
    }
}

pub fn save_dataset(ds: &FeatureDataset, path: &Path, format: DatasetFormat) -> Result<()> {
    ds.validate()?;
    match format {
        DatasetFormat::Gzb => gzb::write_gzb(ds, path),
        DatasetFormat::CsvBundle => csv_bundle::write_bundle(ds, path),
    }
}
