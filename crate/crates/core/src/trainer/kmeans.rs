//! k-means++ seeding followed by Lloyd iterations, used to place the initial
//! cluster means.

use ndarray::{Array2, ArrayView2, Axis};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;

use crate::error::{DpmError, Result};
use crate::gradients::sq_dist;
use crate::scalar::Scalar;

pub const MAX_LLOYD_ITERS: usize = 25;
pub const INERTIA_TOL: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansFit<T> {
    pub centers: Array2<T>,
    pub labels: Vec<usize>,
    pub inertia: T,
    pub iterations: usize,
}

fn nearest<T: Scalar>(x: ndarray::ArrayView1<'_, T>, centers: &Array2<T>) -> (usize, T) {
    let mut best = (0, T::infinity());
    for (k, c) in centers.rows().into_iter().enumerate() {
        let d = sq_dist(x, c);
        if d < best.1 {
            best = (k, d);
        }
    }
    best
}

fn seed_plus_plus<T: Scalar, R: Rng + ?Sized>(
    data: ArrayView2<'_, T>,
    k: usize,
    rng: &mut R,
) -> Array2<T> {
    let n = data.nrows();
    let mut centers = Array2::zeros((k, data.ncols()));
    centers.row_mut(0).assign(&data.row(rng.random_range(0..n)));
    let mut dist: Vec<f64> = data
        .rows()
        .into_iter()
        .map(|x| sq_dist(x, centers.row(0)).to_f64_lossy())
        .collect();
    for c in 1..k {
        let pick = match WeightedIndex::new(&dist) {
            Ok(w) => w.sample(rng),
            // every point already coincides with a center
            Err(_) => rng.random_range(0..n),
        };
        centers.row_mut(c).assign(&data.row(pick));
        for (d, x) in dist.iter_mut().zip(data.rows()) {
            let nd = sq_dist(x, centers.row(c)).to_f64_lossy();
            if nd < *d {
                *d = nd;
            }
        }
    }
    centers
}

/// Runs k-means++ seeding and at most [`MAX_LLOYD_ITERS`] Lloyd iterations,
/// stopping early once the relative inertia change drops below [`INERTIA_TOL`].
/// Empty clusters keep their previous center.
pub fn kmeans_fit<T: Scalar, R: Rng + ?Sized>(
    data: ArrayView2<'_, T>,
    k: usize,
    rng: &mut R,
) -> Result<KMeansFit<T>> {
    let n = data.nrows();
    if n == 0 {
        return Err(DpmError::Empty("data"));
    }
    if k == 0 {
        return Err(DpmError::InvalidConfig(
            "k-means needs at least one cluster".into(),
        ));
    }
    if k > n {
        return Err(DpmError::TooMany {
            requested: k,
            available: n,
        });
    }
    let mut centers = seed_plus_plus(data, k, rng);
    let mut labels = vec![0; n];
    let mut inertia = T::infinity();
    let mut iterations = 0;
    for _ in 0..MAX_LLOYD_ITERS {
        iterations += 1;
        let mut total = T::zero();
        for (l, x) in labels.iter_mut().zip(data.rows()) {
            let (c, d) = nearest(x, &centers);
            *l = c;
            total += d;
        }
        let mut sums = Array2::<T>::zeros(centers.raw_dim());
        let mut counts = vec![0usize; k];
        for (&l, x) in labels.iter().zip(data.rows()) {
            let mut row = sums.row_mut(l);
            row += &x;
            counts[l] += 1;
        }
        for (c, &cnt) in counts.iter().enumerate() {
            if cnt > 0 {
                let mean = &sums.row(c) / T::count(cnt);
                centers.row_mut(c).assign(&mean);
            }
        }
        let change = if inertia.is_finite() {
            (inertia - total).abs() / inertia.max(T::min_positive_value())
        } else {
            T::infinity()
        };
        inertia = total;
        if change < T::lit(INERTIA_TOL) || total == T::zero() {
            break;
        }
    }
    // final assignment against the last centers
    let mut total = T::zero();
    for (l, x) in labels.iter_mut().zip(data.rows()) {
        let (c, d) = nearest(x, &centers);
        *l = c;
        total += d;
    }
    Ok(KMeansFit {
        centers,
        labels,
        inertia: total,
        iterations,
    })
}

/// Initial cluster centers.
pub fn kmeans_init<T: Scalar, R: Rng + ?Sized>(
    data: ArrayView2<'_, T>,
    k: usize,
    rng: &mut R,
) -> Result<Array2<T>> {
    kmeans_fit(data, k, rng).map(|f| f.centers)
}

/// Sum of squared distances from every point to its nearest center.
pub fn inertia<T: Scalar>(data: ArrayView2<'_, T>, centers: &Array2<T>) -> T {
    data.axis_iter(Axis(0)).map(|x| nearest(x, centers).1).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn recovers_repeated_points() {
        let pts = array![[0.0, 0.0], [5.0, 5.0], [-3.0, 8.0]];
        let data = Array2::from_shape_fn((30, 2), |(i, d)| pts[[i % 3, d]]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let centers = kmeans_init(data.view(), 3, &mut rng).unwrap();
        for p in pts.rows() {
            assert!(centers.rows().into_iter().any(|c| c == p));
        }
        assert_eq!(inertia(data.view(), &centers), 0.0);
    }

    #[test]
    fn single_cluster_is_the_mean() {
        let data = array![[1.0f64, 2.0], [3.0, 4.0], [5.0, 0.0]];
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let centers = kmeans_init(data.view(), 1, &mut rng).unwrap();
        assert!((centers[[0, 0]] - 3.0).abs() < 1e-12);
        assert!((centers[[0, 1]] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_sizes() {
        let data = array![[1.0], [2.0]];
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert!(matches!(
            kmeans_init(data.view(), 3, &mut rng),
            Err(DpmError::TooMany {
                requested: 3,
                available: 2
            })
        ));
        let empty = Array2::<f64>::zeros((0, 2));
        assert!(kmeans_init(empty.view(), 1, &mut rng).is_err());
    }

    // exhaustive optimum over all 3^12 labelings
    fn best_partition_inertia(data: &Array2<f64>, k: usize) -> f64 {
        let n = data.nrows();
        let total = k.pow(n as u32);
        let mut best = f64::INFINITY;
        let mut labels = vec![0usize; n];
        for code in 0..total {
            let mut c = code;
            for l in labels.iter_mut() {
                *l = c % k;
                c /= k;
            }
            let mut sums = vec![[0.0f64; 2]; k];
            let mut sq = vec![0.0f64; k];
            let mut cnt = vec![0usize; k];
            for (i, &l) in labels.iter().enumerate() {
                sums[l][0] += data[[i, 0]];
                sums[l][1] += data[[i, 1]];
                sq[l] += data[[i, 0]].powi(2) + data[[i, 1]].powi(2);
                cnt[l] += 1;
            }
            let mut inertia = 0.0;
            for j in 0..k {
                if cnt[j] > 0 {
                    inertia += sq[j] - (sums[j][0].powi(2) + sums[j][1].powi(2)) / cnt[j] as f64;
                }
            }
            if inertia < best {
                best = inertia;
            }
        }
        best
    }

    #[test]
    fn close_to_exhaustive_optimum_on_blobs() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let centers = [[0.0, 0.0], [6.0, 0.0], [0.0, 6.0]];
        let data = Array2::from_shape_fn((12, 2), |(i, d)| {
            centers[i % 3][d] + rng.random_range(-1.0..1.0)
        });
        let best = best_partition_inertia(&data, 3);
        for seed in 0..5 {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
            let fit = kmeans_fit(data.view(), 3, &mut rng).unwrap();
            assert!(
                fit.inertia <= 1.05 * best + 1e-12,
                "{} vs {}",
                fit.inertia,
                best
            );
            assert!(fit.iterations <= MAX_LLOYD_ITERS);
        }
    }
}
