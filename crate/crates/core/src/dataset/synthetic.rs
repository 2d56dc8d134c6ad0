//! Class-conditional Gaussian worlds with a known descriptor→mean map.
//!
//! Descriptors are uniform on `[0,1]^d_a`, the class mean is an affine
//! function of the descriptor, and instances add isotropic Gaussian noise.
//!
//! The drawn map only responds to descriptor directions along which the
//! seen classes vary. With fewer seen classes than `d_a + 1` the remaining
//! directions could never be learned from seen data, so leaving them out
//! makes unseen-class means exactly recoverable from seen-class data.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use super::{per_class_top1, ClassId, FeatureDataset, Partition, SemanticTable};
use crate::error::{Error, Result};
use crate::nn::Mat;

/// `mean(a) = a · weight + bias`, `weight` is `d_a × d_x`.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassMap {
    pub weight: Mat,
    pub bias: Mat,
}

impl ClassMap {
    /// Gaussian weights with a bias that keeps every mean of the unit
    /// descriptor cube at or above `floor`.
    pub fn random<R: Rng + ?Sized>(d_a: usize, d_x: usize, floor: f64, rng: &mut R) -> Self {
        let weight: Mat = Mat::randn(d_a, d_x, 1.0, rng);
        Self::with_floor(weight, floor)
    }

    /// Like [`ClassMap::random`], with the weight columns projected onto the
    /// span of the centered `seen` descriptor rows.
    pub fn random_within<R: Rng + ?Sized>(seen: &Mat, d_x: usize, floor: f64, rng: &mut R) -> Self {
        let raw: Mat = Mat::randn(seen.cols(), d_x, 1.0, rng);
        let basis = centered_basis(seen);
        let d_a = seen.cols();
        let mut weight = Mat::zeros(d_a, d_x);
        for j in 0..d_x {
            let col: Vec<f64> = (0..d_a).map(|i| raw[(i, j)] as f64).collect();
            for q in &basis {
                let c: f64 = q.iter().zip(&col).map(|(a, b)| a * b).sum();
                for i in 0..d_a {
                    weight[(i, j)] += (c * q[i]) as f32;
                }
            }
        }
        Self::with_floor(weight, floor)
    }

    fn with_floor(weight: Mat, floor: f64) -> Self {
        let (d_a, d_x) = weight.shape();
        let mut bias = Mat::zeros(1, d_x);
        for j in 0..d_x {
            let neg: f32 = (0..d_a).map(|i| weight[(i, j)].min(0.0)).sum();
            bias[(0, j)] = floor as f32 - neg;
        }
        ClassMap { weight, bias }
    }

    pub fn apply(&self, a: &Mat) -> Result<Mat> {
        let mut m = a.matmul(&self.weight)?;
        for i in 0..m.rows() {
            for (v, &b) in m.row_mut(i).iter_mut().zip(self.bias.as_slice()) {
                *v += b;
            }
        }
        Ok(m)
    }
}

/// Orthonormal basis of the span of the centered rows (modified
/// Gram–Schmidt in double precision).
fn centered_basis(rows: &Mat) -> Vec<Vec<f64>> {
    let (n, d) = rows.shape();
    let mean: Vec<f64> = (0..d)
        .map(|j| (0..n).map(|i| rows[(i, j)] as f64).sum::<f64>() / n as f64)
        .collect();
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for i in 0..n {
        let mut v: Vec<f64> = (0..d).map(|j| rows[(i, j)] as f64 - mean[j]).collect();
        for q in &basis {
            let c: f64 = q.iter().zip(&v).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(q).for_each(|(x, qi)| *x -= c * qi);
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-9 {
            basis.push(v.into_iter().map(|x| x / norm).collect());
        }
    }
    basis
}

#[derive(Clone, Debug, Serialize)]
pub struct SyntheticWorldSpec {
    pub seen: usize,
    pub unseen: usize,
    pub d_x: usize,
    pub d_a: usize,
    pub n_per_class: usize,
    /// Drawn from `seed` when absent.
    #[serde(skip)]
    pub class_map: Option<ClassMap>,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for SyntheticWorldSpec {
    fn default() -> Self {
        SyntheticWorldSpec {
            seen: 7,
            unseen: 3,
            d_x: 32,
            d_a: 8,
            n_per_class: 100,
            class_map: None,
            noise_sigma: 0.5,
            seed: 0,
        }
    }
}

impl SyntheticWorldSpec {
    pub fn validate(&self) -> Result<()> {
        if self.seen < 1 || self.unseen < 1 {
            return Err(Error::Config("synthetic world needs S >= 1 and U >= 1".into()));
        }
        if self.d_a == 0 || self.d_x < self.d_a {
            return Err(Error::Config(format!(
                "need 0 < d_a <= d_x, got d_a={} d_x={}",
                self.d_a, self.d_x
            )));
        }
        if self.n_per_class < 2 {
            return Err(Error::Config("n_per_class must be at least 2".into()));
        }
        // Zero noise is accepted: it yields the degenerate world where every
        // instance equals its class mean.
        if !(self.noise_sigma >= 0.0) || !self.noise_sigma.is_finite() {
            return Err(Error::Config(format!("noise_sigma {} must be >= 0", self.noise_sigma)));
        }
        if let Some(m) = &self.class_map {
            if m.weight.shape() != (self.d_a, self.d_x) || m.bias.shape() != (1, self.d_x) {
                return Err(Error::Config("class_map shape does not match d_a × d_x".into()));
            }
        }
        Ok(())
    }
}

/// Nearest-true-mean classification accuracy, computed at generation time.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct OracleAccuracy {
    pub test_seen: f64,
    pub test_unseen: f64,
}

#[derive(Clone, Debug)]
pub struct SyntheticWorld {
    pub dataset: FeatureDataset,
    pub class_means: Mat,
    pub class_map: ClassMap,
    pub oracle: OracleAccuracy,
}

pub fn make_synthetic_world(spec: &SyntheticWorldSpec) -> Result<SyntheticWorld> {
    spec.validate()?;
    let mut rng = crate::rng_from_seed(spec.seed);
    let n_classes = spec.seen + spec.unseen;
    let desc = Mat::uniform(n_classes, spec.d_a, 0.0, 1.0, &mut rng);
    let class_map = match &spec.class_map {
        Some(m) => m.clone(),
        None => ClassMap::random_within(
            &desc.slice_rows(0, spec.seen),
            spec.d_x,
            (3.0 * spec.noise_sigma).max(1.0),
            &mut rng,
        ),
    };
    let means = class_map.apply(&desc)?;

    let n_train = ((spec.n_per_class as f64) * 0.8).round() as usize;
    let mut sample = |c: usize, n: usize, x: &mut Vec<f32>, y: &mut Vec<ClassId>| {
        for _ in 0..n {
            for &m in means.row(c) {
                let z: f64 = rng.sample(StandardNormal);
                x.push(m + (spec.noise_sigma * z) as f32);
            }
            y.push(c as ClassId + 1);
        }
    };
    let (mut tr_x, mut tr_y, mut ts_x, mut ts_y, mut tu_x, mut tu_y) =
        (vec![], vec![], vec![], vec![], vec![], vec![]);
    for c in 0..spec.seen {
        sample(c, n_train, &mut tr_x, &mut tr_y);
        sample(c, spec.n_per_class - n_train, &mut ts_x, &mut ts_y);
    }
    for c in spec.seen..n_classes {
        sample(c, spec.n_per_class, &mut tu_x, &mut tu_y);
    }
    let part = |x: Vec<f32>, y: Vec<ClassId>| Partition::new(Mat::from_vec(y.len(), spec.d_x, x)?, y);
    let dataset = FeatureDataset::new(
        part(tr_x, tr_y)?,
        part(ts_x, ts_y)?,
        part(tu_x, tu_y)?,
        SemanticTable::new(desc, spec.seen, spec.unseen)?,
    )?;

    let all: Vec<ClassId> = dataset.semantic.all_ids();
    let nearest = |p: &Partition| -> Vec<ClassId> {
        p.x.iter_rows()
            .map(|r| {
                let mut best = (f32::INFINITY, 0);
                for (c, m) in means.iter_rows().enumerate() {
                    let d: f32 = r.iter().zip(m).map(|(a, b)| (a - b) * (a - b)).sum();
                    if d < best.0 {
                        best = (d, c);
                    }
                }
                best.1 as ClassId + 1
            })
            .collect()
    };
    let oracle = OracleAccuracy {
        test_seen: per_class_top1(&nearest(&dataset.test_seen), &dataset.test_seen.y, &all)?,
        test_unseen: per_class_top1(&nearest(&dataset.test_unseen), &dataset.test_unseen.y, &all)?,
    };
    Ok(SyntheticWorld {
        dataset,
        class_means: means,
        class_map,
        oracle,
    })
}
