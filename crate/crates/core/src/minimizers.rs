//! Closed-form global minimizers for the three models and their
//! invertible-transform equivalence classes.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;

use crate::datagen::{regression_map, spectral_summary, DataPair};
use crate::error::{Error, Result};
use crate::numkit::{eta_min, fix_column_signs, inverse, rank, random_invertible, solve, svd, Lu, Matrix};
use crate::networks::{Activation, LinearNet, Net, NonlinearNet, ResidualNet};

/// Default condition-number bound for randomly drawn transforms.
pub const DEFAULT_COND_MAX: f64 = 10.0;

/// How to pick the free invertible matrices `C` of an equivalence class.
#[derive(Debug, Clone, PartialEq)]
pub enum Transforms {
    Identity,
    Random { cond_max: f64 },
    /// Explicit matrices, in the order documented by each constructor.
    Given(Vec<Matrix>),
}

impl Transforms {
    pub fn random() -> Self {
        Transforms::Random {
            cond_max: DEFAULT_COND_MAX,
        }
    }

    fn realize<R: Rng + ?Sized>(&self, d: usize, count: usize, rng: &mut R) -> Result<Vec<Matrix>> {
        match self {
            Transforms::Identity => Ok((0..count).map(|_| Matrix::identity(d)).collect()),
            Transforms::Random { cond_max } => (0..count)
                .map(|_| random_invertible(d, *cond_max, rng))
                .collect(),
            Transforms::Given(cs) => {
                if cs.len() != count {
                    return Err(Error::InvalidArgument(format!(
                        "expected {count} transforms, got {}",
                        cs.len()
                    )));
                }
                for c in cs {
                    if c.shape() != (d, d) {
                        return Err(Error::DimensionMismatch {
                            op: "transforms",
                            left: (d, d),
                            right: c.shape(),
                        });
                    }
                    Lu::new(c)?;
                }
                Ok(cs.clone())
            }
        }
    }
}

/// `eta_min` of one parameter block; `None` when the block is zero.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BlockRank {
    pub label: String,
    pub eta_min: Option<f64>,
    pub rank: usize,
}

/// A constructed global minimizer together with what it is claimed to achieve.
#[derive(Debug, Clone)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MinimizerCertificate {
    pub net: Net,
    /// Predicted minimum of the loss `1/2 |.|_F^2`.
    pub predicted_value: f64,
    pub achieved_loss: f64,
    pub grad_norm: f64,
    pub transforms: Vec<Matrix>,
    pub rank_profile: Vec<BlockRank>,
}

impl MinimizerCertificate {
    fn finish(net: Net, data: &DataPair, predicted_value: f64, transforms: Vec<Matrix>) -> Result<Self> {
        let achieved_loss = net.loss(data)?;
        let grad_norm = net.grad(data)?.total_norm;
        let rank_profile = rank_profile(&net);
        Ok(Self {
            net,
            predicted_value,
            achieved_loss,
            grad_norm,
            transforms,
            rank_profile,
        })
    }

    pub fn value_gap(&self) -> f64 {
        (self.achieved_loss - self.predicted_value).abs()
    }

    /// Optimality, stationarity and (for linear nets) full rank all hold.
    pub fn holds(&self) -> bool {
        let value_ok = self.value_gap() < 1e-8 * (1.0 + self.predicted_value.abs());
        let grad_ok = self.grad_norm < 1e-8;
        let rank_ok = match self.net {
            Net::Linear(_) => self.rank_profile.iter().all(|b| b.rank == self.net.dim()),
            _ => true,
        };
        value_ok && grad_ok && rank_ok
    }

    pub fn linear(&self) -> Option<&LinearNet> {
        match &self.net {
            Net::Linear(n) => Some(n),
            _ => None,
        }
    }

    pub fn residual(&self) -> Option<&ResidualNet> {
        match &self.net {
            Net::Residual(n) => Some(n),
            _ => None,
        }
    }

    pub fn nonlinear(&self) -> Option<&NonlinearNet> {
        match &self.net {
            Net::Nonlinear(n) => Some(n),
            _ => None,
        }
    }
}

/// `Tr(Sigma_YY) - sum_i lambda_i`, the minimum of `|W X - Y|_F^2` over
/// end-to-end maps. The square loss `1/2 |.|_F^2` bottoms out at half this.
pub fn optimal_value(data: &DataPair) -> Result<f64> {
    Ok(spectral_summary(data)?.optimal_value)
}

/// `W_l = U C_l`, `W_k = C_{k+1}^{-1} C_k`, `W_1 = C_2^{-1} U^T Sigma_XY^T Sigma_XX^{-1}`.
///
/// `Transforms::Given` takes `[C_2, ..., C_l]`.
pub fn linear_minimizer<R: Rng + ?Sized>(
    data: &DataPair,
    l: usize,
    transforms: &Transforms,
    rng: &mut R,
) -> Result<MinimizerCertificate> {
    if l == 0 {
        return Err(Error::InvalidArgument("depth l must be at least 1".into()));
    }
    let d = data.d();
    let summary = spectral_summary(data)?;
    let u = summary.eig.vectors;
    let map = regression_map(data)?;
    let cs = transforms.realize(d, l - 1, rng)?;

    let layers = if l == 1 {
        alloc::vec![map]
    } else {
        let inv: Vec<Matrix> = cs.iter().map(inverse).collect::<Result<_>>()?;
        // cs[i] is C_{i+2}
        let mut layers = Vec::with_capacity(l);
        layers.push(&(&inv[0] * &u.transpose()) * &map);
        for k in 2..l {
            // W_k = C_{k+1}^{-1} C_k
            layers.push(&inv[k - 1] * &cs[k - 2]);
        }
        layers.push(&u * &cs[l - 2]);
        layers
    };
    let net = Net::Linear(LinearNet::new(layers)?);
    MinimizerCertificate::finish(net, data, 0.5 * summary.optimal_value, cs)
}

/// Residual minimizer built from a linear minimizer `W_k*` by factoring each
/// `W_k* - I = U_k S_k V_k^T` as `A_kr = U_k C_kr`, `A_kq = C_{k(q+1)}^{-1} C_kq`,
/// `A_k1 = C_k2^{-1} U_k^T (W_k* - I)`.
///
/// `unit` transforms follow [`linear_minimizer`]; `Given` inner transforms are
/// `[C_12, ..., C_1r, C_22, ..., C_lr]`.
pub fn residual_minimizer<R: Rng + ?Sized>(
    data: &DataPair,
    l: usize,
    r: usize,
    unit: &Transforms,
    inner: &Transforms,
    rng: &mut R,
) -> Result<MinimizerCertificate> {
    if !data.is_square() {
        return Err(Error::InvalidArgument("residual minimizers need m = d".into()));
    }
    if r == 0 {
        return Err(Error::InvalidArgument("shortcut depth r must be at least 1".into()));
    }
    let d = data.d();
    let lin = linear_minimizer(data, l, unit, rng)?;
    let ws = lin.linear().expect("linear certificate").layers().to_vec();
    let inner_cs = inner.realize(d, l * (r - 1), rng)?;
    let eye = Matrix::identity(d);

    let mut units = Vec::with_capacity(l);
    for (k, w) in ws.iter().enumerate() {
        let shifted = w - &eye;
        if r == 1 {
            units.push(alloc::vec![shifted]);
            continue;
        }
        if rank(&shifted) < d {
            return Err(Error::FactorizationUnavailable { unit: k + 1 });
        }
        let mut uk = svd(&shifted).u;
        fix_column_signs(&mut uk);
        // cs[q] is C_{k,q+2}
        let cs = &inner_cs[k * (r - 1)..(k + 1) * (r - 1)];
        let inv: Vec<Matrix> = cs.iter().map(inverse).collect::<Result<_>>()?;
        let mut unit_blocks = Vec::with_capacity(r);
        unit_blocks.push(&(&inv[0] * &uk.transpose()) * &shifted);
        for q in 2..r {
            unit_blocks.push(&inv[q - 1] * &cs[q - 2]);
        }
        unit_blocks.push(&uk * &cs[r - 2]);
        units.push(unit_blocks);
    }
    let net = Net::Residual(ResidualNet::new(units)?);
    let mut transforms = lin.transforms;
    transforms.extend(inner_cs);
    MinimizerCertificate::finish(net, data, lin.predicted_value, transforms)
}

/// `W_2* = W~_2*`, `W_1* = sigma^{-1}(W~_1* X) X^{-1}` from a two-layer linear
/// minimizer `(W~_1*, W~_2*)`. `Given` transforms hold `[C_2]`.
pub fn nonlinear_minimizer<R: Rng + ?Sized>(
    data: &DataPair,
    activation: Activation,
    transforms: &Transforms,
    rng: &mut R,
) -> Result<MinimizerCertificate> {
    if !data.is_square() {
        return Err(Error::InvalidArgument("nonlinear minimizers need m = d".into()));
    }
    let x = data.x();
    Lu::new(x)?;
    let lin = linear_minimizer(data, 2, transforms, rng)?;
    let layers = lin.linear().expect("linear certificate").layers();
    let target = &layers[0] * x;
    let pre = activation.inverse_matrix(&target);
    // W_1 X = pre  <=>  X^T W_1^T = pre^T
    let w1 = solve(&x.transpose(), &pre.transpose())?.transpose();
    let net = Net::Nonlinear(NonlinearNet::new(w1, layers[1].clone(), activation)?);
    MinimizerCertificate::finish(net, data, lin.predicted_value, lin.transforms)
}

/// `(W_l C_l, C_l^{-1} W_{l-1} C_{l-1}, ..., C_2^{-1} W_1)` with `cs = [C_2, ..., C_l]`.
pub fn apply_equivalence(net: &LinearNet, cs: &[Matrix]) -> Result<LinearNet> {
    let l = net.depth();
    if cs.len() + 1 != l {
        return Err(Error::InvalidArgument(format!(
            "a depth-{l} network takes {} transforms, got {}",
            l - 1,
            cs.len()
        )));
    }
    let inv: Vec<Matrix> = cs.iter().map(inverse).collect::<Result<_>>()?;
    let eye = Matrix::identity(net.dim());
    let layers = net
        .layers()
        .iter()
        .enumerate()
        .map(|(i, w)| {
            // layer index k = i + 1; left factor C_{k+1}^{-1}, right factor C_k
            let left = if i + 1 < l { &inv[i] } else { &eye };
            let right = if i >= 1 { &cs[i - 1] } else { &eye };
            &(left * w) * right
        })
        .collect();
    LinearNet::new(layers)
}

fn block_rank(label: String, m: &Matrix) -> BlockRank {
    BlockRank {
        label,
        eta_min: eta_min(m).ok(),
        rank: rank(m),
    }
}

/// `eta_min` of every parameter block; residual nets also report each unit
/// map `W_k`.
pub fn rank_profile(net: &Net) -> Vec<BlockRank> {
    match net {
        Net::Linear(n) => n
            .layers()
            .iter()
            .enumerate()
            .map(|(k, w)| block_rank(format!("W{}", k + 1), w))
            .collect(),
        Net::Residual(n) => {
            let mut out = Vec::new();
            for (k, unit) in n.units().iter().enumerate() {
                for (q, a) in unit.iter().enumerate() {
                    out.push(block_rank(format!("A{}{}", k + 1, q + 1), a));
                }
            }
            for (k, w) in n.unit_maps().iter().enumerate() {
                out.push(block_rank(format!("W{}", k + 1), w));
            }
            out
        }
        Net::Nonlinear(n) => alloc::vec![
            block_rank("W1".into(), &n.w1),
            block_rank("W2".into(), &n.w2),
        ],
    }
}
