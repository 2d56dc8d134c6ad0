use rand::seq::index;
use rand::Rng;

use super::config::{SamplerKind, TrainConfig};
use crate::dataset::{ClassId, FeatureDataset};
use crate::embedding::{groups_from_labels, AnchorGroup};
use crate::error::{Error, Result};
use crate::generation::sample_noise;
use crate::nn::{Mat, Real};

const MAX_RESAMPLES: usize = 10;

/// Rows of the training partition chosen for one step, with the anchor
/// groups for the instance loss (indices into `indices`).
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub indices: Vec<usize>,
    pub labels: Vec<ClassId>,
    pub groups: Vec<AnchorGroup>,
}

pub fn sample_batch<R: Rng + ?Sized>(ds: &FeatureDataset, cfg: &TrainConfig, rng: &mut R) -> Result<Batch> {
    let n = ds.train.len();
    if n == 0 {
        return Err(Error::domain("training partition is empty"));
    }
    match cfg.sampler {
        SamplerKind::RandomBatch => random_batch(ds, cfg.batch_size.min(n), rng),
        SamplerKind::PkSampler { p, k } => pk_batch(ds, cfg.batch_size, p, k, rng),
    }
}

fn random_batch<R: Rng + ?Sized>(ds: &FeatureDataset, size: usize, rng: &mut R) -> Result<Batch> {
    let y = &ds.train.y;
    for _ in 0..MAX_RESAMPLES {
        let indices: Vec<usize> = index::sample(rng, y.len(), size).into_vec();
        let labels: Vec<ClassId> = indices.iter().map(|&i| y[i]).collect();
        if labels.iter().any(|&c| c != labels[0]) {
            let groups = groups_from_labels(&labels);
            return Ok(Batch { indices, labels, groups });
        }
    }
    Err(Error::Sampler(format!(
        "no batch with two distinct classes after {MAX_RESAMPLES} draws"
    )))
}

fn pk_batch<R: Rng + ?Sized>(
    ds: &FeatureDataset,
    batch_size: usize,
    p: usize,
    k: usize,
    rng: &mut R,
) -> Result<Batch> {
    let y = &ds.train.y;
    let n_anchors = (batch_size / (1 + p + k)).max(1);
    let mut by_class: std::collections::BTreeMap<ClassId, Vec<usize>> = Default::default();
    for (i, &c) in y.iter().enumerate() {
        by_class.entry(c).or_default().push(i);
    }
    let mut indices = Vec::with_capacity(n_anchors * (1 + p + k));
    let mut groups = Vec::with_capacity(n_anchors);
    for _ in 0..n_anchors {
        let anchor = rng.random_range(0..y.len());
        let same = &by_class[&y[anchor]];
        if same.len() < p + 1 {
            return Err(Error::Sampler(format!(
                "class {} has {} rows, {p} positives requested",
                y[anchor],
                same.len()
            )));
        }
        let others = y.len() - same.len();
        if others < k {
            return Err(Error::Sampler(format!("only {others} rows outside class {}, {k} negatives requested", y[anchor])));
        }
        let base = indices.len();
        indices.push(anchor);
        // positives: p distinct rows of the class other than the anchor
        let self_pos = same.iter().position(|&i| i == anchor).expect("anchor in own class");
        for j in index::sample(rng, same.len() - 1, p) {
            let j = if j >= self_pos { j + 1 } else { j };
            indices.push(same[j]);
        }
        // negatives: k distinct rows outside the class
        for j in index::sample(rng, others, k) {
            indices.push(nth_outside(y, y[anchor], j));
        }
        groups.push(AnchorGroup {
            anchor: base,
            positives: (base + 1..base + 1 + p).collect(),
            negatives: (base + 1 + p..base + 1 + p + k).collect(),
        });
    }
    let labels = indices.iter().map(|&i| y[i]).collect();
    Ok(Batch { indices, labels, groups })
}

fn nth_outside(y: &[ClassId], class: ClassId, n: usize) -> usize {
    y.iter()
        .enumerate()
        .filter(|(_, &c)| c != class)
        .nth(n)
        .map(|(i, _)| i)
        .expect("index below the out-of-class count")
}

/// Everything one objective evaluation needs, drawn up front so the value is
/// a deterministic function of the parameters.
///
/// Rows `0..B` of the embedded block are real features, rows `B..2B` the
/// synthetic features generated from the same labels.
#[derive(Clone, Debug, PartialEq)]
pub struct StepBatch<T: Real = f32> {
    pub real_x: Mat<T>,
    pub labels: Vec<ClassId>,
    /// Descriptor of each label.
    pub attrs: Mat<T>,
    pub noise: Mat<T>,
    /// Ranking negatives for the real and synthetic rows.
    pub neg_attrs_real: Mat<T>,
    pub neg_attrs_fake: Mat<T>,
    /// Instance-loss groups over the stacked `[real; synthetic]` rows.
    pub groups: Vec<AnchorGroup>,
    pub seen_attrs: Mat<T>,
}

impl StepBatch<f32> {
    pub fn draw<R: Rng + ?Sized>(ds: &FeatureDataset, cfg: &TrainConfig, rng: &mut R) -> Result<Self> {
        let batch = sample_batch(ds, cfg, rng)?;
        Self::from_batch(ds, cfg, batch, rng)
    }

    pub fn from_batch<R: Rng + ?Sized>(
        ds: &FeatureDataset,
        cfg: &TrainConfig,
        batch: Batch,
        rng: &mut R,
    ) -> Result<Self> {
        let sem = &ds.semantic;
        let b = batch.indices.len();
        let real_x = ds.train.x.select_rows(&batch.indices);
        let attrs = sem.seen_rows_for(&batch.labels)?;
        let noise = sample_noise(b, cfg.noise_dim(sem.dim()), rng);
        let neg_real = draw_negatives(&batch.labels, sem.seen_count(), rng)?;
        let neg_fake = draw_negatives(&batch.labels, sem.seen_count(), rng)?;
        let mut groups = batch.groups.clone();
        groups.extend(batch.groups.iter().map(|g| AnchorGroup {
            anchor: g.anchor + b,
            positives: g.positives.iter().map(|&i| i + b).collect(),
            negatives: g.negatives.iter().map(|&i| i + b).collect(),
        }));
        if matches!(cfg.sampler, SamplerKind::RandomBatch) {
            // real and synthetic rows share one pool of positives/negatives
            let mut all = batch.labels.clone();
            all.extend_from_slice(&batch.labels);
            groups = groups_from_labels(&all);
        }
        Ok(StepBatch {
            real_x,
            labels: batch.labels,
            attrs,
            noise,
            neg_attrs_real: sem.seen_rows_for(&neg_real)?,
            neg_attrs_fake: sem.seen_rows_for(&neg_fake)?,
            groups,
            seen_attrs: sem.seen_descriptors(),
        })
    }
}

impl<T: Real> StepBatch<T> {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn cast<U: Real>(&self) -> StepBatch<U> {
        StepBatch {
            real_x: self.real_x.cast(),
            labels: self.labels.clone(),
            attrs: self.attrs.cast(),
            noise: self.noise.cast(),
            neg_attrs_real: self.neg_attrs_real.cast(),
            neg_attrs_fake: self.neg_attrs_fake.cast(),
            groups: self.groups.clone(),
            seen_attrs: self.seen_attrs.cast(),
        }
    }
}

/// One negative seen class per label, uniform over the other seen classes.
pub fn draw_negatives<R: Rng + ?Sized>(labels: &[ClassId], seen: usize, rng: &mut R) -> Result<Vec<ClassId>> {
    if seen < 2 {
        return Err(Error::Sampler("ranking negatives need at least two seen classes".into()));
    }
    Ok(labels
        .iter()
        .map(|&c| {
            let r = rng.random_range(1..seen as ClassId);
            if r >= c {
                r + 1
            } else {
                r
            }
        })
        .collect())
}
