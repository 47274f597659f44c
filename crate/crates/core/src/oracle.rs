//! Finite-difference cross-checks of the analytic gradients and of the Gram
//! form of the Hessian at a minimizer.

use alloc::vec::Vec;

use rand::Rng;

use crate::datagen::DataPair;
use crate::error::{Error, Result};
use crate::networks::{Activation, Architecture, LinearNet, Net, NonlinearNet, ResidualNet};
use crate::numkit::{fd_gradient, fd_hessian, gaussian_matrix, rel_error, spectral_norm, Matrix};

/// Shape of a network family member.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NetShape {
    pub architecture: Architecture,
    pub d: usize,
    pub l: usize,
    pub r: usize,
    pub slope: f64,
}

impl NetShape {
    pub fn linear(d: usize, l: usize) -> Self {
        Self { architecture: Architecture::Linear, d, l, r: 1, slope: 0.0 }
    }

    pub fn residual(d: usize, l: usize, r: usize) -> Self {
        Self { architecture: Architecture::Residual, d, l, r, slope: 0.0 }
    }

    pub fn nonlinear(d: usize, slope: f64) -> Self {
        Self { architecture: Architecture::Nonlinear, d, l: 2, r: 1, slope }
    }
}

/// Network with i.i.d. `N(0, scale^2)` entries.
pub fn random_net<R: Rng + ?Sized>(shape: &NetShape, scale: f64, rng: &mut R) -> Result<Net> {
    let d = shape.d;
    let mut draw = || gaussian_matrix(d, d, rng).scale(scale);
    Ok(match shape.architecture {
        Architecture::Linear => Net::Linear(LinearNet::new((0..shape.l).map(|_| draw()).collect())?),
        Architecture::Residual => Net::Residual(ResidualNet::new(
            (0..shape.l)
                .map(|_| (0..shape.r).map(|_| draw()).collect::<Vec<Matrix>>())
                .collect(),
        )?),
        Architecture::Nonlinear => {
            let w1 = draw();
            let w2 = draw();
            Net::Nonlinear(NonlinearNet::new(w1, w2, Activation::new(shape.slope)?)?)
        }
    })
}

/// Effective finite-difference step used at `net` for base step `h`.
pub fn effective_step(net: &Net, h: f64) -> f64 {
    let p_inf = net.flat_params().iter().fold(0.0f64, |m, x| m.max(x.abs()));
    h * (1.0 + p_inf)
}

/// Whether no pre-activation can cross zero under parameter moves of size
/// `reach` times the effective step. Always true for the linear families.
pub fn kink_safe(net: &Net, data: &DataPair, h: f64, reach: f64) -> Result<bool> {
    match net {
        Net::Nonlinear(n) => {
            let margin = crate::networks::kink_margin(n, data)?;
            let sum_x: f64 = (0..data.m())
                .map(|j| data.x().col(j).iter().map(|v| v.abs()).sum::<f64>())
                .fold(0.0, f64::max);
            Ok(margin > reach * effective_step(net, h) * sum_x.max(spectral_norm(data.x())))
        }
        _ => Ok(true),
    }
}

/// Relative error between the analytic gradient and central differences.
pub fn gradient_rel_error(net: &Net, data: &DataPair, h: f64) -> Result<f64> {
    let analytic = net.grad(data)?;
    let fd = fd_gradient(|p| net.loss_at(data, p), &net.flat_params(), h)?;
    Ok(rel_error(analytic.as_slice(), &fd))
}

/// Relative Frobenius error between `F^T F` and the finite-difference Hessian
/// at a minimizer.
pub fn hessian_rel_error(net_star: &Net, data: &DataPair, h: f64) -> Result<f64> {
    let gram = net_star.hessian_at_min(data)?;
    let fd = fd_hessian(|p| net_star.loss_at(data, p), &net_star.flat_params(), h)?;
    if gram.shape() != fd.shape() {
        return Err(Error::DimensionMismatch {
            op: "hessian_rel_error",
            left: gram.shape(),
            right: fd.shape(),
        });
    }
    Ok(rel_error(gram.as_slice(), fd.as_slice()))
}
