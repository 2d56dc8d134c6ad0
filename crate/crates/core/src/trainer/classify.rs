use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::config::{Mode, TrainConfig};
use super::objective::NetBundle;
use crate::dataset::{per_class_accuracies, per_class_top1, ClassId, FeatureDataset};
use crate::error::{Error, Result};
use crate::generation::synthesize_unseen;
use crate::nn::{adam_step, row_softmax, AdamConfig, Mat, Param};

/// Space in which the final classifier consumes features.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSpace {
    Raw,
    Embedding,
}

/// Affine layer + softmax over all `S + U` classes; column `c` scores
/// class id `c + 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct SoftmaxClassifier {
    pub weight: Mat,
    pub bias: Mat,
    pub space: FeatureSpace,
}

impl SoftmaxClassifier {
    pub fn num_classes(&self) -> usize {
        self.weight.cols()
    }

    fn features(&self, nets: &NetBundle, x: &Mat) -> Result<Mat> {
        match self.space {
            FeatureSpace::Raw => Ok(x.clone()),
            FeatureSpace::Embedding => nets.e.infer(x),
        }
    }

    fn logits_of(&self, feats: &Mat) -> Result<Mat> {
        let mut l = feats.matmul(&self.weight)?;
        for i in 0..l.rows() {
            for (v, &b) in l.row_mut(i).iter_mut().zip(self.bias.as_slice()) {
                *v += b;
            }
        }
        Ok(l)
    }

    pub fn logits(&self, nets: &NetBundle, x: &Mat) -> Result<Mat> {
        self.logits_of(&self.features(nets, x)?)
    }

    pub fn predict(&self, nets: &NetBundle, x: &Mat) -> Result<Vec<ClassId>> {
        Ok(self.logits(nets, x)?.argmax_rows().into_iter().map(|c| c as ClassId + 1).collect())
    }

    /// Argmax restricted to `ids`.
    pub fn predict_among(&self, nets: &NetBundle, x: &Mat, ids: &[ClassId]) -> Result<Vec<ClassId>> {
        if ids.is_empty() {
            return Err(Error::domain("empty label space"));
        }
        let cols: Vec<usize> = ids.iter().map(|&c| c as usize - 1).collect();
        let l = self.logits(nets, x)?.transpose().select_rows(&cols).transpose();
        Ok(l.argmax_rows().into_iter().map(|j| ids[j]).collect())
    }
}

/// Fits the final classifier on real seen features plus synthetic unseen
/// features, in the mode's space. Synthetic seen features are not used.
pub fn fit_final_classifier<R: Rng + ?Sized>(
    nets: &NetBundle,
    ds: &FeatureDataset,
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<SoftmaxClassifier> {
    let sem = &ds.semantic;
    let n_classes = sem.num_classes();
    if cfg.mode == Mode::SeOnly {
        // no synthetic data: score by compatibility with every descriptor
        return Ok(SoftmaxClassifier {
            weight: sem.descriptors().transpose(),
            bias: Mat::zeros(1, n_classes),
            space: FeatureSpace::Embedding,
        });
    }
    let space = if cfg.mode.uses_embedding() {
        FeatureSpace::Embedding
    } else {
        FeatureSpace::Raw
    };
    let mut x = ds.train.x.clone();
    let mut y = ds.train.y.clone();
    if cfg.n_syn_per_unseen > 0 {
        let (sx, sy) = synthesize_unseen(&nets.g, sem, cfg.n_syn_per_unseen, rng)?;
        x = x.vcat(&sx)?;
        y.extend(sy);
    }
    let feats = match space {
        FeatureSpace::Raw => x,
        FeatureSpace::Embedding => nets.e.infer(&x)?,
    };
    let (weight, bias) = fit_softmax(&feats, &y, n_classes, cfg, rng)?;
    Ok(SoftmaxClassifier { weight, bias, space })
}

/// Mini-batch cross-entropy training of `softmax(xW + b)` from zero weights.
pub fn fit_softmax<R: Rng + ?Sized>(
    x: &Mat,
    y: &[ClassId],
    n_classes: usize,
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<(Mat, Mat)> {
    if x.rows() != y.len() || x.rows() == 0 {
        return Err(Error::shape(format!("{} rows for {} labels", x.rows(), y.len())));
    }
    let mut w = Param::new(Mat::zeros(x.cols(), n_classes));
    let mut b = Param::new(Mat::zeros(1, n_classes));
    let adam = AdamConfig {
        lr: cfg.classifier_lr,
        beta1: 0.9,
        beta2: 0.999,
        ..Default::default()
    };
    let mut order: Vec<usize> = (0..x.rows()).collect();
    for _ in 0..cfg.classifier_epochs {
        order.shuffle(rng);
        for chunk in order.chunks(cfg.classifier_batch) {
            let xb = x.select_rows(chunk);
            let mut logits = xb.matmul(&w.value)?;
            for i in 0..logits.rows() {
                for (v, &bb) in logits.row_mut(i).iter_mut().zip(b.value.as_slice()) {
                    *v += bb;
                }
            }
            let mut g = row_softmax(&logits);
            let inv = 1.0 / chunk.len() as f32;
            for (i, &r) in chunk.iter().enumerate() {
                g[(i, y[r] as usize - 1)] -= 1.0;
            }
            let g = g.scale(inv);
            w.grad = xb.t_matmul(&g)?;
            b.grad = g.sum_rows();
            adam_step(&mut [&mut w, &mut b], &adam)?;
        }
    }
    Ok((w.value, b.value))
}

pub fn harmonic_mean(s: f64, u: f64) -> f64 {
    if s + u > 0.0 {
        2.0 * s * u / (s + u)
    } else {
        0.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mode: Mode,
    pub seed: u64,
    /// Per-class accuracy over the full label space, for every class with
    /// test instances.
    pub per_class_acc: BTreeMap<ClassId, f64>,
    #[serde(rename = "U", skip_serializing_if = "Option::is_none", default)]
    pub u: Option<f64>,
    #[serde(rename = "S", skip_serializing_if = "Option::is_none", default)]
    pub s: Option<f64>,
    #[serde(rename = "H", skip_serializing_if = "Option::is_none", default)]
    pub h: Option<f64>,
    pub czsl_top1: f64,
}

/// GZSL accuracies over all `S + U` classes plus the conventional
/// unseen-only top-1.
pub fn evaluate(clf: &SoftmaxClassifier, nets: &NetBundle, ds: &FeatureDataset) -> Result<EvalReport> {
    if ds.test_seen.is_empty() || ds.test_unseen.is_empty() {
        return Err(Error::domain("GZSL evaluation needs non-empty test_seen and test_unseen"));
    }
    let mut report = evaluate_czsl(clf, nets, ds)?;
    let all = ds.semantic.all_ids();
    let pu = clf.predict(nets, &ds.test_unseen.x)?;
    let ps = clf.predict(nets, &ds.test_seen.x)?;
    let u = per_class_top1(&pu, &ds.test_unseen.y, &ds.semantic.unseen_ids())?;
    let s = per_class_top1(&ps, &ds.test_seen.y, &ds.semantic.seen_ids())?;
    let mut acc = per_class_accuracies(&pu, &ds.test_unseen.y, &all)?;
    acc.extend(per_class_accuracies(&ps, &ds.test_seen.y, &all)?);
    report.per_class_acc = acc;
    report.u = Some(u);
    report.s = Some(s);
    report.h = Some(harmonic_mean(s, u));
    Ok(report)
}

/// Conventional ZSL only: the label space is the unseen classes.
pub fn evaluate_czsl(clf: &SoftmaxClassifier, nets: &NetBundle, ds: &FeatureDataset) -> Result<EvalReport> {
    if ds.test_unseen.is_empty() {
        return Err(Error::domain("test_unseen is empty"));
    }
    if clf.num_classes() != ds.semantic.num_classes() {
        return Err(Error::shape(format!(
            "classifier has {} classes, dataset {}",
            clf.num_classes(),
            ds.semantic.num_classes()
        )));
    }
    let unseen = ds.semantic.unseen_ids();
    let pz = clf.predict_among(nets, &ds.test_unseen.x, &unseen)?;
    Ok(EvalReport {
        mode: nets.config.mode,
        seed: nets.config.seed,
        per_class_acc: per_class_accuracies(&pz, &ds.test_unseen.y, &unseen)?,
        u: None,
        s: None,
        h: None,
        czsl_top1: per_class_top1(&pz, &ds.test_unseen.y, &unseen)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn harmonic_mean_points() {
        assert_eq!(harmonic_mean(0.5, 0.5), 0.5);
        assert_eq!(harmonic_mean(0.9, 0.0), 0.0);
        assert_eq!(harmonic_mean(0.0, 0.0), 0.0);
        assert!((harmonic_mean(0.786, 0.631) - 0.700).abs() < 5e-4);
    }

    #[test]
    fn softmax_fits_separable_data() {
        let x = Mat::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.1], vec![0.1, 1.0]]).unwrap();
        let y = [1, 2, 1, 2];
        let cfg = TrainConfig {
            classifier_epochs: 200,
            ..Default::default()
        };
        let (w, b) = fit_softmax(&x, &y, 3, &cfg, &mut crate::rng_from_seed(0)).unwrap();
        let clf = SoftmaxClassifier {
            weight: w,
            bias: b,
            space: FeatureSpace::Raw,
        };
        let l = clf.logits_of(&x).unwrap();
        let pred: Vec<ClassId> = l.argmax_rows().into_iter().map(|c| c as ClassId + 1).collect();
        assert_eq!(pred, y);
        // class 3 never appears, so its column never wins
        assert!(l.iter_rows().all(|r| r[2] < r[0].max(r[1])));
    }

    proptest! {
        #[test]
        fn harmonic_mean_bounds(s in 0.0f64..=1.0, u in 0.0f64..=1.0) {
            let h = harmonic_mean(s, u);
            prop_assert!(h <= 2.0 * s.min(u) + 1e-12);
            prop_assert!(h <= s.max(u) + 1e-12);
            prop_assert!((h - harmonic_mean(u, s)).abs() < 1e-15);
            prop_assert!((0.0..=1.0).contains(&h));
        }
    }
}
