//! Seeded random draws shared by diagnostics, corpus generation and noise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::vector::RealVector;

/// Identifier of the generator behind [`seeded_rng`], stored in reports.
pub const RNG_ALGORITHM: &str = "chacha8";

pub type SeededRng = ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_vector<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> RealVector {
    RealVector::from(
        (0..dim)
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect::<Vec<_>>(),
    )
}

/// Uniformly distributed direction on the unit sphere.
pub fn unit_vector<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> RealVector {
    loop {
        let g = gaussian_vector(rng, dim);
        let n = g.norm();
        if n > 1e-300 {
            return g.scaled(1.0 / n);
        }
    }
}

/// Uniform draw from the closed ball `B_radius(center)`.
pub fn point_in_ball<R: Rng + ?Sized>(rng: &mut R, center: &RealVector, radius: f64) -> RealVector {
    let dim = center.dim();
    let dir = unit_vector(rng, dim);
    let r = radius * rng.random::<f64>().powf(1.0 / dim as f64);
    center.add_scaled(r, &dir)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn draws_are_reproducible() {
        let a = gaussian_vector(&mut seeded_rng(3), 5);
        let b = gaussian_vector(&mut seeded_rng(3), 5);
        assert_eq!(a, b);
        assert_ne!(a, gaussian_vector(&mut seeded_rng(4), 5));
    }

    #[test]
    fn ball_points_stay_inside() {
        let mut rng = seeded_rng(11);
        let c = RealVector::from([1.0, -2.0, 0.5]);
        for _ in 0..1000 {
            let p = point_in_ball(&mut rng, &c, 0.3);
            assert!(p.distance(&c) <= 0.3 + 1e-15);
        }
        let u = unit_vector(&mut rng, 7);
        assert!((u.norm() - 1.0).abs() < 1e-15);
    }
}
