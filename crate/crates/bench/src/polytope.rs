//! Seeded random polytopes standing in for the 10-dimensional benchmark constraints.

use mirrorflow::prior::rng_from_seed;
use mirrorflow::ConvexDomain;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::{BenchError, Result};

const MAX_ATTEMPTS: u64 = 100;
const BOUNDEDNESS_RAYS: usize = 10_000;
const RAY_LENGTH: f64 = 1e6;

/// `m` unit rows uniform on the sphere with offsets `u_i ~ U[3, 8]`, so the origin is
/// interior with margin at least 3. A draw counts as bounded when every one of
/// `BOUNDEDNESS_RAYS` random rays from the origin leaves within length `RAY_LENGTH`;
/// unbounded draws are regenerated.
pub fn generate_random_polytope(d: usize, m: usize, seed: u64) -> Result<ConvexDomain> {
    if d == 0 || m < d + 1 {
        return Err(BenchError::Generation(format!("need m ≥ d + 1, got d = {d}, m = {m}")));
    }
    let mut rng = rng_from_seed(seed);
    for _ in 0..MAX_ATTEMPTS {
        let rows: Vec<Vec<f64>> = (0..m).map(|_| unit_vector(&mut rng, d)).collect();
        let offsets: Vec<f64> = (0..m).map(|_| rng.random_range(3.0..8.0)).collect();
        let domain = ConvexDomain::polytope(rows, offsets)?;
        let origin = vec![0.0; d];
        let bounded = (0..BOUNDEDNESS_RAYS).all(|_| domain.max_step(&origin, &unit_vector(&mut rng, d)) < RAY_LENGTH);
        if bounded {
            return Ok(domain);
        }
    }
    Err(BenchError::Generation(format!(
        "no bounded polytope with d = {d}, m = {m} after {MAX_ATTEMPTS} attempts"
    )))
}

fn unit_vector<R: Rng + ?Sized>(rng: &mut R, d: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-12 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// Raises each offset to `max(b_i, max_p a_iᵀp + margin·‖a_i‖)` so every point lies at
/// distance at least `margin` from the boundary.
pub fn lift_offsets(domain: &ConvexDomain, points: &[Vec<f64>], margin: f64) -> Result<ConvexDomain> {
    let (Some(rows), Some(offsets)) = (domain.rows(), domain.offsets()) else {
        return Err(BenchError::Generation("only polytope offsets can be lifted".into()));
    };
    let lifted = rows
        .iter()
        .zip(offsets)
        .map(|(row, &b)| {
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            points
                .iter()
                .map(|p| row.iter().zip(p).map(|(a, x)| a * x).sum::<f64>() + margin * norm)
                .fold(b, f64::max)
        })
        .collect();
    Ok(ConvexDomain::polytope(rows, lifted)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn contains_origin_and_is_deterministic() {
        for seed in 0..5 {
            let a = generate_random_polytope(3, 8, seed).unwrap();
            assert!(a.boundary_distance(&[0.0; 3]) >= 3.0 - 1e-12);
            assert_eq!(a, generate_random_polytope(3, 8, seed).unwrap());
        }
    }

    #[test]
    fn ten_dimensional_default() {
        let d = generate_random_polytope(10, 30, 0).unwrap();
        assert_eq!(d.n_constraints(), 30);
        let x = d.find_interior_point().unwrap();
        assert!(d.contains(&x));
        for row in d.rows().unwrap() {
            let n: f64 = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((n - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn too_few_rows() {
        assert!(matches!(generate_random_polytope(3, 3, 0), Err(BenchError::Generation(_))));
    }

    #[test]
    fn lifting_keeps_points_inside() {
        let d = generate_random_polytope(4, 10, 1).unwrap();
        let pts = vec![vec![6.0, -6.0, 6.0, -6.0], vec![-9.0, 0.0, 0.0, 2.0]];
        let lifted = lift_offsets(&d, &pts, 1.5).unwrap();
        for p in &pts {
            assert!(lifted.boundary_distance(p) >= 1.5 - 1e-9);
        }
    }
}
