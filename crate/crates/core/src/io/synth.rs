//! Isotropic Gaussian blobs with known labels.

use std::str::FromStr;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{DataError, DatasetBundle};

const CENTER_TRIES: usize = 1000;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub k_true: usize,
    pub dim: usize,
    pub n: usize,
    /// Minimum distance between any two centers.
    pub sep: f64,
    /// Per-coordinate standard deviation around each center.
    pub spread: f64,
    pub weights: Vec<f64>,
    pub seed: u64,
}

impl SynthSpec {
    /// Equal mixing weights.
    pub fn new(k_true: usize, dim: usize, n: usize, sep: f64, spread: f64, seed: u64) -> Self {
        SynthSpec {
            k_true,
            dim,
            n,
            sep,
            spread,
            weights: vec![1.0 / k_true.max(1) as f64; k_true],
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), DataError> {
        let bad = |m: String| Err(DataError::Spec(m));
        if self.k_true == 0 {
            return bad("k must be at least 1".into());
        }
        if self.dim == 0 || self.n == 0 {
            return bad("d and n must be positive".into());
        }
        if !(self.sep.is_finite() && self.sep >= 0.0) {
            return bad(format!(
                "sep = {} must be finite and non-negative",
                self.sep
            ));
        }
        if !(self.spread.is_finite() && self.spread >= 0.0) {
            return bad(format!(
                "spread = {} must be finite and non-negative",
                self.spread
            ));
        }
        if self.weights.len() != self.k_true {
            return bad(format!(
                "{} weights for {} clusters",
                self.weights.len(),
                self.k_true
            ));
        }
        if self.weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return bad("weights must be finite and non-negative".into());
        }
        let sum: f64 = self.weights.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return bad(format!("weights sum to {sum}, expected 1"));
        }
        Ok(())
    }

    /// Cluster sizes by largest remainder, so they sum to `n` exactly.
    pub fn counts(&self) -> Vec<usize> {
        let raw: Vec<f64> = self.weights.iter().map(|w| w * self.n as f64).collect();
        let mut counts: Vec<usize> = raw.iter().map(|r| r.floor() as usize).collect();
        let mut left = self.n - counts.iter().sum::<usize>().min(self.n);
        let mut order: Vec<usize> = (0..raw.len()).collect();
        order.sort_by(|&a, &b| {
            let fa = raw[a] - raw[a].floor();
            let fb = raw[b] - raw[b].floor();
            fb.total_cmp(&fa).then(a.cmp(&b))
        });
        for &k in order.iter().cycle() {
            if left == 0 {
                break;
            }
            counts[k] += 1;
            left -= 1;
        }
        counts
    }
}

/// Parses `k=5,d=8,n=2000,sep=10,spread=1`. Optional keys: `seed`, and
/// `weights` as colon-separated values. Missing keys take these defaults.
impl FromStr for SynthSpec {
    type Err = DataError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut spec = SynthSpec::new(5, 8, 2000, 10.0, 1.0, 0);
        let mut weights = None;
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (key, value) = part
                .split_once('=')
                .ok_or_else(|| DataError::Spec(format!("expected key=value, got {part:?}")))?;
            let value = value.trim();
            let key = key.trim();
            let num_err = || DataError::Spec(format!("bad value {value:?} for {key}"));
            match key {
                "k" => spec.k_true = value.parse().map_err(|_| num_err())?,
                "d" => spec.dim = value.parse().map_err(|_| num_err())?,
                "n" => spec.n = value.parse().map_err(|_| num_err())?,
                "sep" => spec.sep = value.parse().map_err(|_| num_err())?,
                "spread" => spec.spread = value.parse().map_err(|_| num_err())?,
                "seed" => spec.seed = value.parse().map_err(|_| num_err())?,
                "weights" => {
                    let w: Result<Vec<f64>, _> = value.split(':').map(str::parse).collect();
                    weights = Some(w.map_err(|_| num_err())?);
                }
                other => return Err(DataError::Spec(format!("unknown key {other:?}"))),
            }
        }
        spec.weights =
            weights.unwrap_or_else(|| vec![1.0 / spec.k_true.max(1) as f64; spec.k_true]);
        spec.validate()?;
        Ok(spec)
    }
}

fn draw_centers(spec: &SynthSpec, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let mut centers = Array2::zeros((spec.k_true, spec.dim));
    let mut scale = spec.sep.max(f64::MIN_POSITIVE);
    let mut placed = 0;
    while placed < spec.k_true {
        let mut ok = false;
        for _ in 0..CENTER_TRIES {
            let cand: Vec<f64> = (0..spec.dim)
                .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
                .collect();
            ok = (0..placed).all(|j| {
                let d2: f64 = centers
                    .row(j)
                    .iter()
                    .zip(&cand)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                d2 >= spec.sep * spec.sep
            });
            if ok {
                centers.row_mut(placed).assign(&ndarray::Array1::from(cand));
                break;
            }
        }
        if ok {
            placed += 1;
        } else {
            // crowded at this scale; widen the box and keep going
            scale *= 1.5;
        }
    }
    centers
}

/// Draws centers pairwise at least `sep` apart, then `N_k` points around
/// each. Sample order is shuffled. Deterministic in `spec.seed`.
pub fn synth_generate(spec: &SynthSpec) -> Result<(DatasetBundle, Array2<f64>), DataError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let centers = draw_centers(spec, &mut rng);
    let mut labels: Vec<usize> = spec
        .counts()
        .iter()
        .enumerate()
        .flat_map(|(k, &c)| std::iter::repeat_n(k, c))
        .collect();
    labels.shuffle(&mut rng);
    let mut x = Array2::zeros((spec.n, spec.dim));
    for (mut row, &l) in x.rows_mut().into_iter().zip(&labels) {
        for (v, c) in row.iter_mut().zip(centers.row(l)) {
            *v = c + spec.spread * rng.sample::<f64, _>(StandardNormal);
        }
    }
    let name = format!(
        "synth(k={},d={},n={},sep={},spread={})",
        spec.k_true, spec.dim, spec.n, spec.sep, spec.spread
    );
    Ok((DatasetBundle::new(name, x, Some(labels))?, centers))
}
