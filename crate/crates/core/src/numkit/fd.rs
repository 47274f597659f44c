//! Central finite-difference oracles over a flat parameter vector.

use alloc::vec;
use alloc::vec::Vec;

use super::matrix::Matrix;
use crate::error::{Error, Result};

/// Default base step; the effective step is `h * (1 + |point|_inf)`.
pub const DEFAULT_STEP: f64 = 1e-5;

fn effective_step(point: &[f64], h: f64) -> Result<f64> {
    if !(h > 0.0) {
        return Err(Error::InvalidArgument("finite-difference step must be positive".into()));
    }
    let inf = point.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    Ok(h * (1.0 + inf))
}

fn eval<F: FnMut(&[f64]) -> f64>(f: &mut F, x: &[f64]) -> Result<f64> {
    let v = f(x);
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite("finite-difference evaluation"))
    }
}

pub fn fd_gradient<F>(mut f: F, point: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> f64,
{
    let step = effective_step(point, h)?;
    let mut x = point.to_vec();
    let mut g = vec![0.0; point.len()];
    for i in 0..point.len() {
        x[i] = point[i] + step;
        let fp = eval(&mut f, &x)?;
        x[i] = point[i] - step;
        let fm = eval(&mut f, &x)?;
        x[i] = point[i];
        g[i] = (fp - fm) / (2.0 * step);
    }
    Ok(g)
}

/// Second-order central differences, symmetrized.
pub fn fd_hessian<F>(mut f: F, point: &[f64], h: f64) -> Result<Matrix>
where
    F: FnMut(&[f64]) -> f64,
{
    let n = point.len();
    let step = effective_step(point, h)?;
    let mut x = point.to_vec();
    let f0 = eval(&mut f, &x)?;
    let mut hess = Matrix::zeros(n, n);
    for i in 0..n {
        x[i] = point[i] + step;
        let fp = eval(&mut f, &x)?;
        x[i] = point[i] - step;
        let fm = eval(&mut f, &x)?;
        x[i] = point[i];
        hess[(i, i)] = (fp - 2.0 * f0 + fm) / (step * step);
        for j in 0..i {
            let mut corner = |si: f64, sj: f64, x: &mut Vec<f64>| -> Result<f64> {
                x[i] = point[i] + si * step;
                x[j] = point[j] + sj * step;
                let v = eval(&mut f, x);
                x[i] = point[i];
                x[j] = point[j];
                v
            };
            let fpp = corner(1.0, 1.0, &mut x)?;
            let fpm = corner(1.0, -1.0, &mut x)?;
            let fmp = corner(-1.0, 1.0, &mut x)?;
            let fmm = corner(-1.0, -1.0, &mut x)?;
            let v = (fpp - fpm - fmp + fmm) / (4.0 * step * step);
            hess[(i, j)] = v;
            hess[(j, i)] = v;
        }
    }
    Ok(hess.symmetrized())
}

/// `|a - b| / max(|a|, |b|)` in the 2-norm, with a tiny floor so two zero
/// vectors compare equal.
pub fn rel_error(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    let na: f64 = a.iter().map(|x| x * x).sum();
    let nb: f64 = b.iter().map(|x| x * x).sum();
    let denom = libm::sqrt(na.max(nb)).max(1e-300);
    libm::sqrt(diff) / denom
}
