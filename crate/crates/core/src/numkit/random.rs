use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::decomp::inverse;
use super::matrix::{dot, norm2, Matrix};
use crate::error::{Error, Result};

/// Generator used throughout the crate.
pub type SeededRng = ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent generator for worker/chunk `stream` derived from a root seed.
/// The same `(seed, stream)` pair always yields the same sequence.
pub fn split_rng(seed: u64, stream: u64) -> SeededRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn gaussian<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

pub fn gaussian_vec<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    (0..n).map(|_| gaussian(rng)).collect()
}

pub fn gaussian_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| gaussian(rng))
}

/// Haar-distributed orthogonal matrix (QR of a Gaussian matrix with the
/// diagonal of R made positive).
pub fn random_orthogonal<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Matrix {
    loop {
        let g = gaussian_matrix(d, d, rng);
        let mut q = Matrix::zeros(d, d);
        let mut ok = true;
        for j in 0..d {
            let mut v: Vec<f64> = g.col(j).to_vec();
            // two passes of modified Gram-Schmidt
            for _ in 0..2 {
                for c in 0..j {
                    let p = dot(q.col(c), &v);
                    for (x, &y) in v.iter_mut().zip(q.col(c)) {
                        *x -= p * y;
                    }
                }
            }
            let n = norm2(&v);
            if n < 1e-8 {
                ok = false;
                break;
            }
            for i in 0..d {
                q[(i, j)] = v[i] / n;
            }
        }
        if ok {
            return q;
        }
    }
}

/// Random `d x d` matrix `Q1 diag(s) Q2^T` with singular values drawn in
/// `[1, cond_max]`, so its condition number never exceeds `cond_max`.
pub fn random_invertible<R: Rng + ?Sized>(d: usize, cond_max: f64, rng: &mut R) -> Result<Matrix> {
    if d == 0 {
        return Err(Error::InvalidArgument("random_invertible: d must be positive".into()));
    }
    if !(cond_max >= 1.0) || !cond_max.is_finite() {
        return Err(Error::InvalidArgument("random_invertible: cond_max must be >= 1".into()));
    }
    let q1 = random_orthogonal(d, rng);
    let q2 = random_orthogonal(d, rng);
    let s: Vec<f64> = (0..d).map(|_| rng.random_range(1.0..=cond_max)).collect();
    Ok(&(&q1 * &Matrix::diag(&s)) * &q2.transpose())
}

/// A random invertible matrix together with its inverse.
pub fn random_invertible_pair<R: Rng + ?Sized>(
    d: usize,
    cond_max: f64,
    rng: &mut R,
) -> Result<(Matrix, Matrix)> {
    let c = random_invertible(d, cond_max, rng)?;
    let ci = inverse(&c)?;
    Ok((c, ci))
}

/// Random direction with unit spectral norm.
pub fn random_unit_spectral<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Matrix {
    loop {
        let g = gaussian_matrix(rows, cols, rng);
        let n = super::decomp::spectral_norm(&g);
        if n > 1e-12 {
            return g.scale(1.0 / n);
        }
    }
}

/// Random direction with unit Frobenius norm.
pub fn random_unit_frobenius<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Matrix {
    loop {
        let g = gaussian_matrix(rows, cols, rng);
        let n = super::matrix::fro_norm(&g);
        if n > 1e-12 {
            return g.scale(1.0 / n);
        }
    }
}

/// Mixes a root seed with a tag into a new seed (splitmix64 finalizer).
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Uniform draw from the open interval `(0, 1)`.
pub fn open_unit<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return u;
        }
    }
}
