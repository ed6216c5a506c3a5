//! Point sets on the sphere for grid scans and random probes.

use super::point::SpherePoint;
use crate::scalar::C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Inverse stereographic image of a unit vector, as a projective pair.
pub fn from_unit_vector(x: f64, y: f64, z: f64) -> SpherePoint<C64> {
    // ζ = (x + iy)/(1 − z) = (1 + z)/(x − iy); pick the better conditioned pair
    let pair = if z <= 0.0 {
        (C64::new(x, y), C64::new(1.0 - z, 0.0))
    } else {
        (C64::new(1.0 + z, 0.0), C64::new(x, -y))
    };
    SpherePoint::new(pair.0, pair.1).expect("unit vector")
}

/// Low-discrepancy Fibonacci lattice with n points.
pub fn fibonacci_sphere(n: usize) -> Vec<SpherePoint<C64>> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            let z = 1.0 - (2.0 * i as f64 + 1.0) / n as f64;
            let rho = (1.0 - z * z).max(0.0).sqrt();
            let phi = golden * i as f64;
            from_unit_vector(rho * phi.cos(), rho * phi.sin(), z)
        })
        .collect()
}

/// n points uniform for the spherical area measure, reproducible from `seed`.
pub fn random_sphere(n: usize, seed: u64) -> Vec<SpherePoint<C64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let z: f64 = rng.gen_range(-1.0..1.0);
            let phi: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            let rho = (1.0 - z * z).sqrt();
            from_unit_vector(rho * phi.cos(), rho * phi.sin(), z)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sphere::chordal_distance;

    #[test]
    fn poles_and_equator() {
        let south = from_unit_vector(0.0, 0.0, -1.0);
        assert_eq!(south.to_c64(), Some(C64::new(0.0, 0.0)));
        assert!(from_unit_vector(0.0, 0.0, 1.0).is_infinity());
        let e = from_unit_vector(1.0, 0.0, 0.0).to_c64().unwrap();
        assert!((e - C64::new(1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn chordal_distance_is_euclidean_in_space() {
        let a = (0.6, 0.0, 0.8);
        let b = (0.0, -0.6, -0.8);
        let d = ((a.0 - b.0) * (a.0 - b.0) + (a.1 - b.1) * (a.1 - b.1) + (a.2 - b.2) * (a.2 - b.2) as f64).sqrt();
        let pa = from_unit_vector(a.0, a.1, a.2);
        let pb = from_unit_vector(b.0, b.1, b.2);
        assert!((chordal_distance(&pa, &pb) - d).abs() < 1e-14);
    }

    #[test]
    fn seeded_samples_repeat() {
        let a = random_sphere(5, 7);
        let b = random_sphere(5, 7);
        assert!(a.iter().zip(&b).all(|(p, q)| chordal_distance(p, q) == 0.0));
        assert_eq!(fibonacci_sphere(100).len(), 100);
    }
}
