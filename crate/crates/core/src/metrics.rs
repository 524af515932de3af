//! Two-sample metrics: MMD², k-NN KL divergence, exact empirical W2, feasibility rate.

use kdtree::distance::squared_euclidean;
use kdtree::KdTree;
use serde::{Deserialize, Serialize};

use crate::batch::SampleBatch;
use crate::error::{Error, Result};
use crate::geometry::ConvexDomain;

/// Largest sample size accepted by [`w2_exact`].
pub const W2_MAX_POINTS: usize = 1024;
/// Points used for the median-distance bandwidth; larger unions are strided down.
const MEDIAN_SUBSAMPLE: usize = 2000;
const KNN_RADIUS_FLOOR: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub mmd_squared: f64,
    pub kl: f64,
    pub w2: Option<f64>,
    pub feasibility: f64,
    pub n_gen: usize,
    pub n_ref: usize,
    pub kernel_bandwidth: f64,
    pub kl_k: usize,
    /// Fraction of generated samples nearest to each mixture mean, when requested.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub occupancy: Option<Vec<f64>>,
}

fn check_dims(x: &SampleBatch, y: &SampleBatch) -> Result<()> {
    if x.dim() != y.dim() {
        return Err(Error::Dimension {
            expected: x.dim(),
            got: y.dim(),
        });
    }
    Ok(())
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Median pairwise Euclidean distance over `X ∪ Y` (strided to at most 2000 points).
pub fn median_heuristic(x: &SampleBatch, y: &SampleBatch) -> f64 {
    let all: Vec<&[f64]> = x.rows().chain(y.rows()).collect();
    let stride = all.len().div_ceil(MEDIAN_SUBSAMPLE).max(1);
    let pts: Vec<&[f64]> = all.into_iter().step_by(stride).collect();
    let mut d: Vec<f64> = Vec::with_capacity(pts.len() * pts.len().saturating_sub(1) / 2);
    for i in 0..pts.len() {
        for j in i + 1..pts.len() {
            d.push(sq_dist(pts[i], pts[j]).sqrt());
        }
    }
    if d.is_empty() {
        return 1.0;
    }
    let mid = d.len() / 2;
    let (_, m, _) = d.select_nth_unstable_by(mid, f64::total_cmp);
    if *m > 0.0 {
        *m
    } else {
        1.0
    }
}

fn mean_kernel(a: &SampleBatch, b: &SampleBatch, gamma: f64) -> f64 {
    let mut total = 0.0;
    for p in a.rows() {
        let mut row = 0.0;
        for q in b.rows() {
            row += (-gamma * sq_dist(p, q)).exp();
        }
        total += row;
    }
    total / (a.len() as f64 * b.len() as f64)
}

/// Biased V-statistic MMD² with an RBF kernel `exp(−‖a−b‖²/(2σ²))`. Returns `(value, σ)`;
/// σ defaults to the median heuristic.
pub fn mmd_squared(x: &SampleBatch, y: &SampleBatch, bandwidth: Option<f64>) -> Result<(f64, f64)> {
    check_dims(x, y)?;
    if x.is_empty() || y.is_empty() {
        return Err(Error::Precondition("MMD needs nonempty batches".into()));
    }
    let sigma = match bandwidth {
        Some(s) if s > 0.0 => s,
        Some(s) => return Err(Error::InvalidParameter(format!("bandwidth must be positive, got {s}"))),
        None => median_heuristic(x, y),
    };
    let gamma = 1.0 / (2.0 * sigma * sigma);
    let value = mean_kernel(x, x, gamma) + mean_kernel(y, y, gamma) - 2.0 * mean_kernel(x, y, gamma);
    Ok((value, sigma))
}

fn build_tree(b: &SampleBatch) -> Result<KdTree<f64, usize, &[f64]>> {
    let mut tree = KdTree::with_capacity(b.dim(), 64);
    for (i, row) in b.rows().enumerate() {
        tree.add(row, i).map_err(|e| Error::Numeric(format!("kd-tree insert: {e:?}")))?;
    }
    Ok(tree)
}

/// Distance to the `k`-th nearest neighbour, counting from 1.
fn kth_distance(tree: &KdTree<f64, usize, &[f64]>, p: &[f64], k: usize) -> Result<f64> {
    let found = tree
        .nearest(p, k, &squared_euclidean)
        .map_err(|e| Error::Numeric(format!("kd-tree query: {e:?}")))?;
    let sq = found.last().map(|(d, _)| *d).ok_or_else(|| Error::Numeric("empty neighbour set".into()))?;
    Ok(sq.sqrt())
}

/// k-NN estimate of `KL(P‖Q)`:
/// `(d/n) Σ log(ν_k(i)/ρ_k(i)) + log(m/(n−1))`, with `ρ_k` the k-NN radius of `P_i` within `P`
/// (excluding itself) and `ν_k` its k-NN radius in `Q`. Radii are floored at 10⁻¹².
pub fn kl_knn(p: &SampleBatch, q: &SampleBatch, k: usize) -> Result<f64> {
    check_dims(p, q)?;
    if k == 0 {
        return Err(Error::Precondition("k must be positive".into()));
    }
    let (n, m) = (p.len(), q.len());
    if n < k + 1 || m < k + 1 {
        return Err(Error::Precondition(format!(
            "k = {k} needs at least {} points in each batch (got {n} and {m})",
            k + 1
        )));
    }
    let tree_p = build_tree(p)?;
    let tree_q = build_tree(q)?;
    let d = p.dim() as f64;
    let mut sum = 0.0;
    for row in p.rows() {
        // The query point itself is returned at distance 0, so ask for k+1.
        let rho = kth_distance(&tree_p, row, k + 1)?.max(KNN_RADIUS_FLOOR);
        let nu = kth_distance(&tree_q, row, k)?.max(KNN_RADIUS_FLOOR);
        sum += (nu / rho).ln();
    }
    Ok(d / n as f64 * sum + (m as f64 / (n as f64 - 1.0)).ln())
}

/// Minimum-cost perfect matching on a square cost matrix (row-major), by shortest augmenting
/// paths with dual potentials. Returns `(total cost, column assigned to each row)`.
pub fn assignment(cost: &[f64], n: usize) -> (f64, Vec<usize>) {
    // 1-based arrays with a virtual column 0.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut cols = vec![0usize; n];
    for j in 1..=n {
        if owner[j] > 0 {
            cols[owner[j] - 1] = j - 1;
        }
    }
    let total = (0..n).map(|i| cost[i * n + cols[i]]).sum();
    (total, cols)
}

/// Exact W2 between two equal-size empirical measures.
pub fn w2_exact(x: &SampleBatch, y: &SampleBatch) -> Result<f64> {
    check_dims(x, y)?;
    let n = x.len();
    if n != y.len() {
        return Err(Error::Precondition(format!("W2 needs equal sizes, got {n} and {}", y.len())));
    }
    if n > W2_MAX_POINTS {
        return Err(Error::Precondition(format!("W2 is capped at {W2_MAX_POINTS} points, got {n}")));
    }
    if n == 0 {
        return Ok(0.0);
    }
    let mut cost = Vec::with_capacity(n * n);
    for a in x.rows() {
        for b in y.rows() {
            cost.push(sq_dist(a, b));
        }
    }
    let (total, _) = assignment(&cost, n);
    Ok((total.max(0.0) / n as f64).sqrt())
}

/// Fraction of rows strictly inside `domain` (0 for an empty batch).
pub fn feasibility_rate(domain: &ConvexDomain, x: &SampleBatch) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    x.rows().filter(|r| domain.contains(r)).count() as f64 / x.len() as f64
}

/// Fraction of rows whose nearest mean (Euclidean) is each of `means`.
pub fn mode_occupancy(x: &SampleBatch, means: &[Vec<f64>]) -> Vec<f64> {
    let mut counts = vec![0usize; means.len()];
    for r in x.rows() {
        let best = means
            .iter()
            .enumerate()
            .map(|(k, m)| (k, sq_dist(r, m)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(k, _)| k);
        if let Some(k) = best {
            counts[k] += 1;
        }
    }
    let n = x.len().max(1) as f64;
    counts.iter().map(|&c| c as f64 / n).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::batch::{BatchMeta, Space};
    use crate::prior::{rng_from_seed, Prior};
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn batch(rows: &[Vec<f64>]) -> SampleBatch {
        SampleBatch::from_rows(rows, Space::Primal, BatchMeta::default()).unwrap()
    }

    fn gaussian(n: usize, d: usize, shift: f64, seed: u64) -> SampleBatch {
        let mut rng = rng_from_seed(seed);
        let data: Vec<f64> = (0..n * d).map(|_| shift + rng.sample::<f64, _>(StandardNormal)).collect();
        SampleBatch::new(data, d, Space::Primal, BatchMeta::default()).unwrap()
    }

    #[test]
    fn mmd_examples() {
        let x = Prior::gaussian(3).sample(50, 1);
        assert!(mmd_squared(&x, &x, None).unwrap().0.abs() < 1e-12);
        let (v, s) = mmd_squared(&batch(&[vec![0.0]]), &batch(&[vec![1.0]]), Some(1.0)).unwrap();
        assert_eq!(s, 1.0);
        assert!((v - (2.0 - 2.0 * (-0.5f64).exp())).abs() < 1e-15);
        assert!((v - 0.786_938).abs() < 1e-6);
        assert!(matches!(
            mmd_squared(&batch(&[vec![0.0]]), &batch(&[vec![0.0, 1.0]]), None),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn mmd_is_permutation_invariant_and_symmetric() {
        let x = Prior::gaussian(2).sample(40, 2);
        let y = Prior::student_t(2, 3.0).unwrap().sample(30, 3);
        let mut rows: Vec<Vec<f64>> = x.rows().map(<[f64]>::to_vec).collect();
        rows.reverse();
        rows.swap(3, 17);
        let xp = batch(&rows);
        let (a, sa) = mmd_squared(&x, &y, None).unwrap();
        let (b, _) = mmd_squared(&xp, &y, Some(sa)).unwrap();
        let (c, _) = mmd_squared(&y, &x, Some(sa)).unwrap();
        assert!((a - b).abs() < 1e-12 && (a - c).abs() < 1e-12);
    }

    #[test]
    fn mmd_invariant_under_rotation() {
        let x = Prior::gaussian(2).sample(30, 5);
        let y = gaussian(30, 2, 0.7, 6);
        let (c, s) = (0.6f64, 0.8f64);
        let rot = |b: &SampleBatch| {
            batch(&b.rows().map(|r| vec![c * r[0] - s * r[1], s * r[0] + c * r[1]]).collect::<Vec<_>>())
        };
        let (a, sigma) = mmd_squared(&x, &y, None).unwrap();
        let (b, sigma_rot) = mmd_squared(&rot(&x), &rot(&y), None).unwrap();
        assert!((sigma - sigma_rot).abs() < 1e-9 * sigma);
        assert!((a - b).abs() < 1e-10);
    }

    #[test]
    fn kl_matched_distributions() {
        let p = gaussian(10_000, 2, 0.0, 1);
        let q = gaussian(10_000, 2, 0.0, 2);
        let kl = kl_knn(&p, &q, 5).unwrap();
        assert!(kl.abs() <= 0.05, "{kl}");
    }

    #[test]
    fn kl_shifted_gaussians() {
        // KL(N(0,1) ‖ N(1,1)) = 1/2.
        let p = gaussian(100_000, 1, 0.0, 3);
        let q = gaussian(100_000, 1, 1.0, 4);
        let kl = kl_knn(&p, &q, 5).unwrap();
        assert!((kl - 0.5).abs() <= 0.05, "{kl}");
    }

    #[test]
    fn kl_preconditions_and_duplicates() {
        let p = gaussian(5, 1, 0.0, 1);
        assert!(matches!(kl_knn(&p, &p, 5), Err(Error::Precondition(_))));
        let dup = batch(&vec![vec![1.0, 1.0]; 20]);
        let q = gaussian(20, 2, 0.0, 2);
        assert!(kl_knn(&dup, &q, 3).unwrap().is_finite());
    }

    #[test]
    fn w2_examples() {
        let x = batch(&[vec![0.0], vec![1.0]]);
        let y = batch(&[vec![2.0], vec![3.0]]);
        // Brute force over both matchings.
        let costs = [(2.0f64.powi(2) + 2.0f64.powi(2)) / 2.0, (3.0f64.powi(2) + 1.0f64.powi(2)) / 2.0];
        let brute = costs.iter().copied().fold(f64::INFINITY, f64::min).sqrt();
        assert!((brute - 2.0).abs() < 1e-15);
        assert!((w2_exact(&x, &y).unwrap() - brute).abs() < 1e-12);
        let z = Prior::gaussian(3).sample(64, 9);
        assert_eq!(w2_exact(&z, &z).unwrap(), 0.0);
        let shifted = batch(&z.rows().map(|r| vec![r[0] + 1.0, r[1] - 2.0, r[2] + 2.0]).collect::<Vec<_>>());
        assert!((w2_exact(&z, &shifted).unwrap() - 3.0).abs() < 1e-9);
        assert!(w2_exact(&x, &batch(&[vec![0.0]])).is_err());
    }

    #[test]
    fn assignment_matches_brute_force() {
        let mut rng = rng_from_seed(17);
        for n in 1..=6 {
            let cost: Vec<f64> = (0..n * n).map(|_| rng.random::<f64>()).collect();
            let (best, cols) = assignment(&cost, n);
            let mut perm: Vec<usize> = (0..n).collect();
            let mut brute = f64::INFINITY;
            permutations(&mut perm, 0, &mut |p| {
                brute = brute.min((0..n).map(|i| cost[i * n + p[i]]).sum());
            });
            assert!((best - brute).abs() < 1e-12);
            let mut seen = cols.clone();
            seen.sort();
            assert_eq!(seen, (0..n).collect::<Vec<_>>());
        }
    }

    fn permutations(p: &mut Vec<usize>, k: usize, f: &mut dyn FnMut(&[usize])) {
        if k == p.len() {
            f(p);
            return;
        }
        for i in k..p.len() {
            p.swap(k, i);
            permutations(p, k + 1, f);
            p.swap(k, i);
        }
    }

    #[test]
    fn feasibility_examples() {
        let ball = ConvexDomain::ball(1.0, 1).unwrap();
        assert_eq!(feasibility_rate(&ball, &batch(&[vec![0.0], vec![0.5]])), 1.0);
        assert_eq!(feasibility_rate(&ball, &batch(&[vec![1.0], vec![-1.0]])), 0.0);
        assert_eq!(feasibility_rate(&ball, &batch(&[vec![0.0], vec![2.0]])), 0.5);
    }

    #[test]
    fn occupancy_by_nearest_mean() {
        let b = batch(&[vec![0.1], vec![0.2], vec![4.9], vec![-0.3]]);
        assert_eq!(mode_occupancy(&b, &[vec![0.0], vec![5.0]]), vec![0.75, 0.25]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn w2_triangle_inequality(seed in 0u64..10_000, n in 2usize..12) {
            let a = Prior::gaussian(2).sample(n, seed);
            let b = gaussian(n, 2, 0.5, seed + 1);
            let c = Prior::student_t(2, 3.0).unwrap().sample(n, seed + 2);
            let ab = w2_exact(&a, &b).unwrap();
            let bc = w2_exact(&b, &c).unwrap();
            let ac = w2_exact(&a, &c).unwrap();
            prop_assert!(ac <= ab + bc + 1e-9);
        }
    }
}
