//! The three square-loss models, their analytic gradients, and the factor
//! matrices whose Gram products give the Hessian at zero-loss minimizers.
//!
//! Parameter vectors are layer-major concatenations of column-major `vec`
//! blocks: `[vec W_1; ...; vec W_l]`, `[vec A_11; vec A_12; ...; vec A_lr]`,
//! and `[vec W_1; vec W_2]`.

use alloc::format;
use alloc::vec::Vec;

use crate::datagen::DataPair;
use crate::error::{Error, Result};
use crate::numkit::{hadamard, kron, norm2, Matrix};

/// Loss below which a point counts as a zero-loss global minimizer.
pub const STATIONARY_LOSS_TOL: f64 = 1e-8;

/// Preactivations closer than this to zero are treated as sitting on the kink.
pub const KINK_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Architecture {
    Linear,
    Residual,
    Nonlinear,
}

impl Architecture {
    pub fn name(self) -> &'static str {
        match self {
            Architecture::Linear => "linear",
            Architecture::Residual => "residual",
            Architecture::Nonlinear => "nonlinear",
        }
    }
}

/// Parametric ReLU `sigma(x) = max(x, a x)` with `0 < a < 1`.
///
/// The derivative at the kink is taken to be `a`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Activation {
    slope: f64,
}

impl Activation {
    pub fn new(slope: f64) -> Result<Self> {
        if !(slope > 0.0 && slope < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "activation slope must lie in (0, 1), got {slope}"
            )));
        }
        Ok(Self { slope })
    }

    pub fn slope(&self) -> f64 {
        self.slope
    }

    #[inline]
    pub fn apply(&self, x: f64) -> f64 {
        if x >= 0.0 {
            x
        } else {
            self.slope * x
        }
    }

    #[inline]
    pub fn inverse(&self, y: f64) -> f64 {
        if y >= 0.0 {
            y
        } else {
            y / self.slope
        }
    }

    #[inline]
    pub fn derivative(&self, x: f64) -> f64 {
        if x > 0.0 {
            1.0
        } else {
            self.slope
        }
    }

    pub fn apply_matrix(&self, m: &Matrix) -> Matrix {
        m.map(|x| self.apply(x))
    }

    pub fn inverse_matrix(&self, m: &Matrix) -> Matrix {
        m.map(|y| self.inverse(y))
    }

    pub fn derivative_matrix(&self, m: &Matrix) -> Matrix {
        m.map(|x| self.derivative(x))
    }
}

/// Deep linear network `W_l ... W_1`, all layers `d x d`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LinearNet {
    layers: Vec<Matrix>,
}

impl LinearNet {
    /// `layers[0]` is `W_1`.
    pub fn new(layers: Vec<Matrix>) -> Result<Self> {
        square_dim(&layers, "LinearNet")?;
        Ok(Self { layers })
    }

    pub fn zeros(d: usize, l: usize) -> Self {
        Self {
            layers: (0..l).map(|_| Matrix::zeros(d, d)).collect(),
        }
    }

    pub fn layers(&self) -> &[Matrix] {
        &self.layers
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn dim(&self) -> usize {
        self.layers[0].rows()
    }

    /// `W_l ... W_1`.
    pub fn end_to_end(&self) -> Matrix {
        Matrix::product(self.dim(), self.layers.iter().rev()).expect("square layers")
    }
}

/// Linear residual network with `l` units of shortcut depth `r`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ResidualNet {
    /// `units[k][q]` is `A_{k+1, q+1}`.
    units: Vec<Vec<Matrix>>,
}

impl ResidualNet {
    pub fn new(units: Vec<Vec<Matrix>>) -> Result<Self> {
        if units.is_empty() {
            return Err(Error::InvalidArgument("ResidualNet needs at least one unit".into()));
        }
        let r = units[0].len();
        if units.iter().any(|u| u.len() != r) {
            return Err(Error::InvalidArgument("all residual units need the same depth r".into()));
        }
        let flat: Vec<Matrix> = units.iter().flatten().cloned().collect();
        square_dim(&flat, "ResidualNet")?;
        Ok(Self { units })
    }

    pub fn zeros(d: usize, l: usize, r: usize) -> Self {
        Self {
            units: (0..l).map(|_| (0..r).map(|_| Matrix::zeros(d, d)).collect()).collect(),
        }
    }

    pub fn units(&self) -> &[Vec<Matrix>] {
        &self.units
    }

    pub fn num_units(&self) -> usize {
        self.units.len()
    }

    pub fn shortcut_depth(&self) -> usize {
        self.units[0].len()
    }

    pub fn dim(&self) -> usize {
        self.units[0][0].rows()
    }

    /// `A_{kr} ... A_{k1}` for unit index `k` (0-based).
    pub fn unit_product(&self, k: usize) -> Matrix {
        Matrix::product(self.dim(), self.units[k].iter().rev()).expect("square blocks")
    }

    /// `W_k = I + A_{kr} ... A_{k1}`, recomputed on every call.
    pub fn unit_map(&self, k: usize) -> Matrix {
        &Matrix::identity(self.dim()) + &self.unit_product(k)
    }

    pub fn unit_maps(&self) -> Vec<Matrix> {
        (0..self.num_units()).map(|k| self.unit_map(k)).collect()
    }

    /// The plain linear network with layers `W_k`.
    pub fn as_linear(&self) -> LinearNet {
        LinearNet {
            layers: self.unit_maps(),
        }
    }
}

/// One-hidden-layer network `W_2 sigma(W_1 X)`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct NonlinearNet {
    pub w1: Matrix,
    pub w2: Matrix,
    pub activation: Activation,
}

impl NonlinearNet {
    pub fn new(w1: Matrix, w2: Matrix, activation: Activation) -> Result<Self> {
        square_dim(&[w1.clone(), w2.clone()], "NonlinearNet")?;
        Ok(Self { w1, w2, activation })
    }

    pub fn dim(&self) -> usize {
        self.w1.rows()
    }

    pub fn preactivation(&self, data: &DataPair) -> Result<Matrix> {
        self.w1.matmul(data.x())
    }

    pub fn hidden(&self, data: &DataPair) -> Result<Matrix> {
        Ok(self.activation.apply_matrix(&self.preactivation(data)?))
    }
}

fn square_dim(blocks: &[Matrix], what: &'static str) -> Result<usize> {
    let first = blocks
        .first()
        .ok_or_else(|| Error::InvalidArgument(format!("{what} needs at least one block")))?;
    let d = first.rows();
    for b in blocks {
        if b.shape() != (d, d) {
            return Err(Error::DimensionMismatch {
                op: what,
                left: (d, d),
                right: b.shape(),
            });
        }
    }
    Ok(d)
}

fn check_data(d: usize, data: &DataPair, op: &'static str) -> Result<()> {
    if data.d() != d {
        return Err(Error::DimensionMismatch {
            op,
            left: (d, d),
            right: (data.d(), data.m()),
        });
    }
    Ok(())
}

/// Loss value and error matrix `e`.
#[derive(Debug, Clone)]
pub struct Eval {
    pub loss: f64,
    pub error: Matrix,
}

fn eval_from_error(error: Matrix) -> Eval {
    let sq: f64 = error.as_slice().iter().map(|x| x * x).sum();
    Eval {
        loss: 0.5 * sq,
        error,
    }
}

/// Gradient blocks in parameter order, concatenated.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GradientBlocks {
    flat: Vec<f64>,
    block_len: usize,
    pub total_norm: f64,
}

impl GradientBlocks {
    fn from_blocks(blocks: &[Matrix]) -> Self {
        let block_len = blocks[0].as_slice().len();
        let flat: Vec<f64> = blocks.iter().flat_map(|b| b.as_slice().iter().copied()).collect();
        let total_norm = norm2(&flat);
        Self {
            flat,
            block_len,
            total_norm,
        }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.flat
    }

    pub fn num_blocks(&self) -> usize {
        self.flat.len() / self.block_len
    }

    pub fn block(&self, i: usize) -> &[f64] {
        &self.flat[i * self.block_len..(i + 1) * self.block_len]
    }
}

// W_{k-1} ... W_1 X for k = 1..=l, as prefixes[k-1].
fn prefixes(layers: &[Matrix], x: &Matrix) -> Vec<Matrix> {
    let mut out = Vec::with_capacity(layers.len() + 1);
    out.push(x.clone());
    for w in layers {
        let next = w * out.last().unwrap();
        out.push(next);
    }
    out
}

// W_l ... W_{k+1} for k = 1..=l, as suffixes[k-1]; suffixes[l-1] = I.
fn suffixes(layers: &[Matrix]) -> Vec<Matrix> {
    let l = layers.len();
    let d = layers[0].rows();
    let mut out = alloc::vec![Matrix::identity(d); l];
    for k in (0..l.saturating_sub(1)).rev() {
        out[k] = &out[k + 1] * &layers[k + 1];
    }
    out
}

pub fn linear_eval(net: &LinearNet, data: &DataPair) -> Result<Eval> {
    check_data(net.dim(), data, "linear_eval")?;
    let out = net.end_to_end().matmul(data.x())?;
    Ok(eval_from_error(out.try_sub(data.y())?))
}

/// Block `k` is `G_k^T vec(e)`, evaluated as `vec(S_k^T e P_k^T)` with
/// `P_k = W_{k-1}...W_1 X` and `S_k = W_l...W_{k+1}`.
pub fn linear_grad(net: &LinearNet, data: &DataPair) -> Result<GradientBlocks> {
    let e = linear_eval(net, data)?.error;
    let pre = prefixes(net.layers(), data.x());
    let suf = suffixes(net.layers());
    let blocks: Vec<Matrix> = (0..net.depth())
        .map(|k| &(&suf[k].transpose() * &e) * &pre[k].transpose())
        .collect();
    Ok(GradientBlocks::from_blocks(&blocks))
}

/// `G_k = (W_{k-1}...W_1 X)^T (x) (W_l...W_{k+1})`.
pub fn build_g_block(net: &LinearNet, data: &DataPair, k: usize) -> Result<Matrix> {
    check_data(net.dim(), data, "build_g")?;
    let pre = prefixes(net.layers(), data.x());
    let suf = suffixes(net.layers());
    kron(&pre[k].transpose(), &suf[k])
}

/// `G = [G_1, ..., G_l]`, of size `dm x l d^2`.
pub fn build_g(net: &LinearNet, data: &DataPair) -> Result<Matrix> {
    check_data(net.dim(), data, "build_g")?;
    let pre = prefixes(net.layers(), data.x());
    let suf = suffixes(net.layers());
    let blocks = (0..net.depth())
        .map(|k| kron(&pre[k].transpose(), &suf[k]))
        .collect::<Result<Vec<_>>>()?;
    Matrix::hcat(&blocks)
}

fn require_minimizer(loss: f64, data: &DataPair) -> Result<()> {
    if !data.is_square() {
        return Err(Error::InvalidArgument(
            "Hessian factor formulas need m = d (zero-loss minimizers)".into(),
        ));
    }
    if !(loss < STATIONARY_LOSS_TOL) {
        return Err(Error::NotAMinimizer { loss });
    }
    Ok(())
}

fn gram(f: &Matrix) -> Matrix {
    (&f.transpose() * f).symmetrized()
}

/// `G(W*)^T G(W*)`; only valid where the error vanishes.
pub fn linear_hessian_at_min(net_star: &LinearNet, data: &DataPair) -> Result<Matrix> {
    require_minimizer(linear_eval(net_star, data)?.loss, data)?;
    Ok(gram(&build_g(net_star, data)?))
}

pub fn residual_eval(net: &ResidualNet, data: &DataPair) -> Result<Eval> {
    check_data(net.dim(), data, "residual_eval")?;
    linear_eval(&net.as_linear(), data)
}

// A_{k(q-1)} ... A_{k1} (inner prefix) and A_{kr} ... A_{k(q+1)} (inner suffix)
// for every q of one unit.
fn inner_products(unit: &[Matrix]) -> (Vec<Matrix>, Vec<Matrix>) {
    let d = unit[0].rows();
    let r = unit.len();
    let mut pre = Vec::with_capacity(r);
    let mut acc = Matrix::identity(d);
    for a in unit {
        pre.push(acc.clone());
        acc = a * &acc;
    }
    let mut suf = alloc::vec![Matrix::identity(d); r];
    for q in (0..r.saturating_sub(1)).rev() {
        suf[q] = &suf[q + 1] * &unit[q + 1];
    }
    (pre, suf)
}

/// Block `(k, q)` is `Q_{kq}^T vec(e)`.
pub fn residual_grad(net: &ResidualNet, data: &DataPair) -> Result<GradientBlocks> {
    let lin = net.as_linear();
    let e = linear_eval(&lin, data)?.error;
    let pre = prefixes(lin.layers(), data.x());
    let suf = suffixes(lin.layers());
    let mut blocks = Vec::with_capacity(net.num_units() * net.shortcut_depth());
    for (k, unit) in net.units().iter().enumerate() {
        let outer = &(&suf[k].transpose() * &e) * &pre[k].transpose();
        let (ipre, isuf) = inner_products(unit);
        for q in 0..unit.len() {
            blocks.push(&(&isuf[q].transpose() * &outer) * &ipre[q].transpose());
        }
    }
    Ok(GradientBlocks::from_blocks(&blocks))
}

/// `Q = [Q_11, Q_12, ..., Q_lr]` with
/// `Q_kq = [P_k^T (x) S_k] [R_kq^T (x) T_kq]`.
pub fn build_q(net: &ResidualNet, data: &DataPair) -> Result<Matrix> {
    check_data(net.dim(), data, "build_q")?;
    let lin = net.as_linear();
    let pre = prefixes(lin.layers(), data.x());
    let suf = suffixes(lin.layers());
    let mut blocks = Vec::new();
    for (k, unit) in net.units().iter().enumerate() {
        let outer = kron(&pre[k].transpose(), &suf[k])?;
        let (ipre, isuf) = inner_products(unit);
        for q in 0..unit.len() {
            let inner = kron(&ipre[q].transpose(), &isuf[q])?;
            blocks.push(outer.matmul(&inner)?);
        }
    }
    Matrix::hcat(&blocks)
}

pub fn residual_hessian_at_min(net_star: &ResidualNet, data: &DataPair) -> Result<Matrix> {
    require_minimizer(residual_eval(net_star, data)?.loss, data)?;
    Ok(gram(&build_q(net_star, data)?))
}

pub fn nonlinear_eval(net: &NonlinearNet, data: &DataPair) -> Result<Eval> {
    check_data(net.dim(), data, "nonlinear_eval")?;
    let out = net.w2.matmul(&net.hidden(data)?)?;
    Ok(eval_from_error(out.try_sub(data.y())?))
}

/// Blocks `[grad W_1, grad W_2]` with
/// `grad W_1 = (sigma'(W_1 X) o (W_2^T e)) X^T` and `grad W_2 = e sigma(W_1 X)^T`.
pub fn nonlinear_grad(net: &NonlinearNet, data: &DataPair) -> Result<GradientBlocks> {
    let z = net.preactivation(data)?;
    let s = net.activation.apply_matrix(&z);
    let e = net.w2.matmul(&s)?.try_sub(data.y())?;
    let back = hadamard(&net.activation.derivative_matrix(&z), &(&net.w2.transpose() * &e))?;
    let g1 = &back * &data.x().transpose();
    let g2 = &e * &s.transpose();
    Ok(GradientBlocks::from_blocks(&[g1, g2]))
}

/// Smallest `|(W_1 X)_ij|`.
pub fn kink_margin(net: &NonlinearNet, data: &DataPair) -> Result<f64> {
    Ok(net
        .preactivation(data)?
        .as_slice()
        .iter()
        .fold(f64::INFINITY, |m, x| m.min(x.abs())))
}

/// `H` with
/// `H^T = [(X (x) I) diag(sigma'(vec W_1 X)) (I (x) W_2^T); sigma(W_1 X) (x) I]`,
/// so that columns are ordered `(W_1 block, W_2 block)`. Kink entries use
/// `sigma'(0) = a`.
pub fn build_h(net: &NonlinearNet, data: &DataPair) -> Result<Matrix> {
    check_data(net.dim(), data, "build_h")?;
    let d = net.dim();
    let m = data.m();
    let z = net.preactivation(data)?;
    let dz = Matrix::diag(net.activation.derivative_matrix(&z).as_slice());
    let top = &(&kron(data.x(), &Matrix::identity(d))? * &dz)
        * &kron(&Matrix::identity(m), &net.w2.transpose())?;
    let bottom = kron(&net.activation.apply_matrix(&z), &Matrix::identity(d))?;
    // H = [top^T, bottom^T]
    Matrix::hcat(&[top.transpose(), bottom.transpose()])
}

pub fn nonlinear_hessian_at_min(net_star: &NonlinearNet, data: &DataPair) -> Result<Matrix> {
    require_minimizer(nonlinear_eval(net_star, data)?.loss, data)?;
    let margin = kink_margin(net_star, data)?;
    if margin < KINK_TOL {
        return Err(Error::KinkProximity {
            value: margin,
            tol: KINK_TOL,
        });
    }
    Ok(gram(&build_h(net_star, data)?))
}

/// Any of the three parameterizations, viewed as a flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "architecture", rename_all = "lowercase"))]
pub enum Net {
    Linear(LinearNet),
    Residual(ResidualNet),
    Nonlinear(NonlinearNet),
}

impl Net {
    pub fn architecture(&self) -> Architecture {
        match self {
            Net::Linear(_) => Architecture::Linear,
            Net::Residual(_) => Architecture::Residual,
            Net::Nonlinear(_) => Architecture::Nonlinear,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Net::Linear(n) => n.dim(),
            Net::Residual(n) => n.dim(),
            Net::Nonlinear(n) => n.dim(),
        }
    }

    /// Parameter blocks in gradient order.
    pub fn blocks(&self) -> Vec<&Matrix> {
        match self {
            Net::Linear(n) => n.layers.iter().collect(),
            Net::Residual(n) => n.units.iter().flatten().collect(),
            Net::Nonlinear(n) => alloc::vec![&n.w1, &n.w2],
        }
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks().len()
    }

    pub fn num_params(&self) -> usize {
        let d = self.dim();
        self.num_blocks() * d * d
    }

    pub fn flat_params(&self) -> Vec<f64> {
        self.blocks().into_iter().flat_map(|b| b.as_slice().iter().copied()).collect()
    }

    /// Same architecture with parameters replaced by `flat`.
    pub fn with_params(&self, flat: &[f64]) -> Result<Net> {
        let d = self.dim();
        let n = d * d;
        if flat.len() != self.num_params() {
            return Err(Error::LengthMismatch {
                len: flat.len(),
                rows: self.num_params(),
                cols: 1,
            });
        }
        let mut chunks = flat
            .chunks(n)
            .map(|c| Matrix::from_col_major(d, d, c.to_vec()).expect("chunk size"));
        Ok(match self {
            Net::Linear(net) => Net::Linear(LinearNet {
                layers: (0..net.depth()).map(|_| chunks.next().unwrap()).collect(),
            }),
            Net::Residual(net) => Net::Residual(ResidualNet {
                units: (0..net.num_units())
                    .map(|_| (0..net.shortcut_depth()).map(|_| chunks.next().unwrap()).collect())
                    .collect(),
            }),
            Net::Nonlinear(net) => Net::Nonlinear(NonlinearNet {
                w1: chunks.next().unwrap(),
                w2: chunks.next().unwrap(),
                activation: net.activation,
            }),
        })
    }

    /// Replaces each block `B_i` by `B_i + deltas[i]`.
    pub fn perturbed(&self, deltas: &[Matrix]) -> Result<Net> {
        let blocks = self.blocks();
        if deltas.len() != blocks.len() {
            return Err(Error::InvalidArgument(format!(
                "expected {} perturbation blocks, got {}",
                blocks.len(),
                deltas.len()
            )));
        }
        let mut flat = Vec::with_capacity(self.num_params());
        for (b, db) in blocks.iter().zip(deltas) {
            flat.extend(b.try_add(db)?.as_slice().iter().copied());
        }
        self.with_params(&flat)
    }

    pub fn eval(&self, data: &DataPair) -> Result<Eval> {
        match self {
            Net::Linear(n) => linear_eval(n, data),
            Net::Residual(n) => residual_eval(n, data),
            Net::Nonlinear(n) => nonlinear_eval(n, data),
        }
    }

    pub fn loss(&self, data: &DataPair) -> Result<f64> {
        Ok(self.eval(data)?.loss)
    }

    pub fn grad(&self, data: &DataPair) -> Result<GradientBlocks> {
        match self {
            Net::Linear(n) => linear_grad(n, data),
            Net::Residual(n) => residual_grad(n, data),
            Net::Nonlinear(n) => nonlinear_grad(n, data),
        }
    }

    /// `G`, `Q` or `H` at this point.
    pub fn factor(&self, data: &DataPair) -> Result<Matrix> {
        match self {
            Net::Linear(n) => build_g(n, data),
            Net::Residual(n) => build_q(n, data),
            Net::Nonlinear(n) => build_h(n, data),
        }
    }

    pub fn hessian_at_min(&self, data: &DataPair) -> Result<Matrix> {
        match self {
            Net::Linear(n) => linear_hessian_at_min(n, data),
            Net::Residual(n) => residual_hessian_at_min(n, data),
            Net::Nonlinear(n) => nonlinear_hessian_at_min(n, data),
        }
    }

    /// `|vec(self - other)|_2`.
    pub fn distance(&self, other: &Net) -> f64 {
        let a = self.flat_params();
        let b = other.flat_params();
        let diff: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
        norm2(&diff)
    }

    /// Loss as a function of the flat parameter vector; `NaN` if `flat` has
    /// the wrong length.
    pub fn loss_at(&self, data: &DataPair, flat: &[f64]) -> f64 {
        self.with_params(flat)
            .and_then(|n| n.loss(data))
            .unwrap_or(f64::NAN)
    }
}

impl From<LinearNet> for Net {
    fn from(n: LinearNet) -> Self {
        Net::Linear(n)
    }
}

impl From<ResidualNet> for Net {
    fn from(n: ResidualNet) -> Self {
        Net::Residual(n)
    }
}

impl From<NonlinearNet> for Net {
    fn from(n: NonlinearNet) -> Self {
        Net::Nonlinear(n)
    }
}
