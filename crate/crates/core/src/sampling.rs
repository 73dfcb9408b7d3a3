//! Experimental-design point generators.
//!
//! All generators return points in the closed unit cube as an `n x d` matrix
//! (one point per row). Callers map them affinely onto their own domains.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Generator {
    Halton,
    LatinHypercube,
    Equispaced,
}

/// A design in `[0,1]^d` together with how it was produced.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSet {
    pub points: DMatrix<f64>,
    pub generator: Generator,
    /// Seed of the PRNG; only meaningful for Latin hypercube designs.
    pub seed: Option<u64>,
}

impl PointSet {
    pub fn len(&self) -> usize {
        self.points.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.points.ncols()
    }

    /// Maps every coordinate from `[0,1]` onto `[lo, hi]`.
    pub fn scaled(&self, lo: f64, hi: f64) -> DMatrix<f64> {
        self.points.map(|u| lo + (hi - lo) * u)
    }
}

/// The first `n` primes.
pub fn first_primes(n: usize) -> Vec<u64> {
    let mut primes: Vec<u64> = Vec::with_capacity(n);
    let mut candidate = 2u64;
    while primes.len() < n {
        if primes
            .iter()
            .take_while(|&&p| p * p <= candidate)
            .all(|&p| !candidate.is_multiple_of(p))
        {
            primes.push(candidate);
        }
        candidate += 1;
    }
    primes
}

/// Radical inverse of `index` in `base`, built as an exact integer fraction
/// before the single final division so results are platform independent.
fn radical_inverse(mut index: u64, base: u64) -> f64 {
    let mut numerator = 0u64;
    let mut denominator = 1u64;
    while index > 0 {
        numerator = numerator * base + index % base;
        denominator *= base;
        index /= base;
    }
    numerator as f64 / denominator as f64
}

/// First `n` entries of the unscrambled Halton sequence in `d` dimensions,
/// using the first `d` primes as bases and starting at index 1.
pub fn halton(n: usize, d: usize) -> Result<PointSet> {
    if n == 0 || d == 0 {
        return Err(Error::Input(format!("halton needs n >= 1 and d >= 1, got n={n}, d={d}")));
    }
    // Denominators are base^digits; keep them inside u64 comfortably.
    if d > 64 {
        return Err(Error::Input(format!("halton dimension {d} exceeds 64")));
    }
    let bases = first_primes(d);
    let points = DMatrix::from_fn(n, d, |i, j| radical_inverse(i as u64 + 1, bases[j]));
    Ok(PointSet {
        points,
        generator: Generator::Halton,
        seed: None,
    })
}

/// Latin hypercube design: every coordinate has exactly one point in each of
/// the `n` strata `[k/n, (k+1)/n)`, jittered uniformly inside its stratum.
pub fn latin_hypercube(n: usize, d: usize, seed: u64) -> Result<PointSet> {
    if n == 0 || d == 0 {
        return Err(Error::Input(format!(
            "latin hypercube needs n >= 1 and d >= 1, got n={n}, d={d}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = DMatrix::zeros(n, d);
    let mut strata: Vec<usize> = (0..n).collect();
    for j in 0..d {
        strata.shuffle(&mut rng);
        for (i, &k) in strata.iter().enumerate() {
            let jitter: f64 = rng.gen();
            // Guard against rounding up into the next stratum.
            let u = ((k as f64 + jitter) / n as f64).min((k as f64 + 1.0) / n as f64 - f64::EPSILON);
            points[(i, j)] = u.max(k as f64 / n as f64);
        }
    }
    Ok(PointSet {
        points,
        generator: Generator::LatinHypercube,
        seed: Some(seed),
    })
}

/// Points spread around the boundary of the unit square.
///
/// The perimeter is walked counter-clockwise from the origin. Each side gets
/// `n / 4` points starting at its first corner; when `n` is not divisible by
/// four the first `n % 4` sides receive one extra point.
pub fn boundary_equispaced(n: usize) -> Result<PointSet> {
    if n < 4 {
        return Err(Error::Input(format!("boundary design needs at least 4 points, got {n}")));
    }
    let corners = [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)];
    let mut points = DMatrix::zeros(n, 2);
    let mut row = 0;
    for side in 0..4 {
        let count = n / 4 + usize::from(side < n % 4);
        let (x0, y0) = corners[side];
        let (x1, y1) = corners[(side + 1) % 4];
        for k in 0..count {
            let s = k as f64 / count as f64;
            points[(row, 0)] = x0 + s * (x1 - x0);
            points[(row, 1)] = y0 + s * (y1 - y0);
            row += 1;
        }
    }
    Ok(PointSet {
        points,
        generator: Generator::Equispaced,
        seed: None,
    })
}

/// `n` equispaced points on `[lo, hi]`, endpoints included.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n)
            .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
            .collect(),
    }
}

/// A seeded permutation of `0..n`.
pub fn permutation(n: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    order
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn halton_base_two_prefix() {
        let set = halton(3, 1).unwrap();
        assert_eq!(set.points.as_slice(), &[0.5, 0.25, 0.75]);
    }

    #[test]
    fn halton_two_dimensions() {
        let set = halton(2, 2).unwrap();
        assert_eq!(set.points[(0, 0)], 0.5);
        assert_eq!(set.points[(0, 1)], 1.0 / 3.0);
        assert_eq!(set.points[(1, 0)], 0.25);
        assert_eq!(set.points[(1, 1)], 2.0 / 3.0);
    }

    #[test]
    fn primes() {
        assert_eq!(first_primes(10), vec![2, 3, 5, 7, 11, 13, 17, 19, 23, 29]);
    }

    #[test]
    fn lhs_single_point() {
        let set = latin_hypercube(1, 3, 7).unwrap();
        assert!(set.points.iter().all(|&u| (0.0..1.0).contains(&u)));
    }

    #[test]
    fn lhs_is_reproducible() {
        let a = latin_hypercube(25, 2, 11).unwrap();
        let b = latin_hypercube(25, 2, 11).unwrap();
        let c = latin_hypercube(25, 2, 12).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.points, c.points);
    }

    #[test]
    fn lhs_one_point_per_stratum() {
        let n = 37;
        let set = latin_hypercube(n, 3, 3).unwrap();
        for j in 0..3 {
            let mut hits = vec![0usize; n];
            for i in 0..n {
                let k = (set.points[(i, j)] * n as f64).floor() as usize;
                hits[k] += 1;
            }
            assert!(hits.iter().all(|&h| h == 1), "column {j}: {hits:?}");
        }
    }

    #[test]
    fn boundary_corners_and_midpoints() {
        let four = boundary_equispaced(4).unwrap();
        let expected = [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)];
        for (i, &(x, y)) in expected.iter().enumerate() {
            assert_eq!((four.points[(i, 0)], four.points[(i, 1)]), (x, y));
        }
        let eight = boundary_equispaced(8).unwrap();
        assert_eq!((eight.points[(1, 0)], eight.points[(1, 1)]), (0.5, 0.0));
        assert_eq!((eight.points[(3, 0)], eight.points[(3, 1)]), (1.0, 0.5));
        assert_eq!((eight.points[(5, 0)], eight.points[(5, 1)]), (0.5, 1.0));
        assert_eq!((eight.points[(7, 0)], eight.points[(7, 1)]), (0.0, 0.5));
    }

    #[test]
    fn boundary_membership_with_remainder() {
        for n in [4, 7, 10, 24, 33] {
            let set = boundary_equispaced(n).unwrap();
            assert_eq!(set.len(), n);
            for i in 0..n {
                let (x, y) = (set.points[(i, 0)], set.points[(i, 1)]);
                assert!(x == 0.0 || x == 1.0 || y == 0.0 || y == 1.0);
            }
        }
        assert!(boundary_equispaced(3).is_err());
    }

    #[test]
    fn linspace_endpoints() {
        let g = linspace(-1.0, 1.0, 5);
        assert_eq!(g, vec![-1.0, -0.5, 0.0, 0.5, 1.0]);
    }
}
