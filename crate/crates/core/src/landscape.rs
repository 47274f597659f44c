//! Analytic constants and sampled certification of the gradient-dominance and
//! regularity inequalities around a constructed minimizer.
//!
//! Gradient-dominance neighborhoods are sampled in the spectral norm and
//! regularity neighborhoods in the Frobenius norm. Sweeps are split into
//! fixed-size chunks, each driven by its own generator derived from the sweep
//! seed, so a sweep gives the same report however its chunks are scheduled.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;

use crate::datagen::DataPair;
use crate::error::{Error, Result};
use crate::networks::{Architecture, Net, NonlinearNet, ResidualNet};
use crate::numkit::{
    derive_seed, dot, eta_min, gaussian_vec, norm2, open_unit, random_unit_frobenius,
    random_unit_spectral, sigma_min, spectral_norm, split_rng, svd, Matrix, RANK_RTOL,
};

/// Absolute slack absorbing floating-point noise near equality.
pub const VIOLATION_SLACK: f64 = 1e-8;
/// Excess loss and squared gradient norm both below this count as `0/0 := 0`.
pub const ZERO_TOL: f64 = 1e-14;
/// Samples per independently seeded chunk.
pub const CHUNK: usize = 256;
pub const MAX_WITNESSES: usize = 8;
pub const DEFAULT_GAMMA: f64 = 0.5;
/// Consecutive rejections after which the nonlinear sampler halves its radius.
pub const REJECTION_BUDGET: usize = 1000;
/// Inner radius fraction of the shell probed by [`epsilon_search`].
pub const SEARCH_SHELL: f64 = 0.5;
/// Fraction of regularity samples drawn purely from the row space of the factor.
const ROW_SPACE_SHARE: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum NormKind {
    Spectral,
    Frobenius,
}

/// Constants of the gradient-dominance inequality `loss - loss* <= lambda |grad|^2`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GdParams {
    pub architecture: Architecture,
    /// Half the smallest singular value of the unit maps (or of `sigma(W_1* X)`).
    pub tau: f64,
    /// Half the smallest singular value over residual blocks (`r > 1` only).
    pub tau_tilde: Option<f64>,
    /// Certified block radius keeping every unit map within `tau` (residual only).
    pub tau_hat: Option<f64>,
    pub lambda: f64,
    pub eta_min_x: f64,
    /// Per-block sampling radius in parameter space.
    pub radius: f64,
    pub depth: usize,
    pub shortcut_depth: usize,
}

fn powi(x: f64, n: i32) -> f64 {
    libm::pow(x, n as f64)
}

fn square_data(data: &DataPair) -> Result<()> {
    if !data.is_square() {
        return Err(Error::InvalidArgument("landscape checks need m = d".into()));
    }
    Ok(())
}

fn half_min_sigma<'a>(ms: impl IntoIterator<Item = &'a Matrix>) -> f64 {
    0.5 * ms.into_iter().map(sigma_min).fold(f64::INFINITY, f64::min)
}

pub fn gd_params_linear(net_star: &crate::networks::LinearNet, data: &DataPair) -> Result<GdParams> {
    square_data(data)?;
    let l = net_star.depth();
    let tau = half_min_sigma(net_star.layers());
    if !(tau > 0.0) {
        return Err(Error::DegenerateGeometry("minimizer has a singular layer".into()));
    }
    let eta_x = eta_min(data.x())?;
    let lambda = 1.0 / (2.0 * l as f64 * powi(tau, 2 * (l as i32 - 1)) * eta_x * eta_x);
    Ok(GdParams {
        architecture: Architecture::Linear,
        tau,
        tau_tilde: None,
        tau_hat: None,
        lambda,
        eta_min_x: eta_x,
        radius: tau,
        depth: l,
        shortcut_depth: 1,
    })
}

/// Product-perturbation bound: with `a = max |A*_kq|`, every unit map moves by
/// at most `(a + t)^r - a^r` when every block moves by less than `t`.
pub fn unit_perturbation_bound(a: f64, t: f64, r: usize) -> f64 {
    powi(a + t, r as i32) - powi(a, r as i32)
}

/// Largest `t` with `unit_perturbation_bound(a, t, r) <= tau`, by bisection.
pub fn tau_hat_bisection(a: f64, tau: f64, r: usize, budget: usize) -> Result<f64> {
    if r == 1 {
        return Ok(tau);
    }
    let mut lo = 0.0;
    let mut hi = tau;
    while unit_perturbation_bound(a, hi, r) <= tau {
        hi *= 2.0;
    }
    for _ in 0..budget {
        let mid = 0.5 * (lo + hi);
        if unit_perturbation_bound(a, mid, r) <= tau {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if !(lo > 1e-12) {
        return Err(Error::DegenerateGeometry(format!(
            "no positive block radius keeps unit maps within tau = {tau:e}"
        )));
    }
    Ok(lo)
}

pub fn gd_params_residual(net_star: &ResidualNet, data: &DataPair, search_budget: usize) -> Result<GdParams> {
    square_data(data)?;
    let l = net_star.num_units();
    let r = net_star.shortcut_depth();
    let tau = half_min_sigma(&net_star.unit_maps());
    if !(tau > 0.0) {
        return Err(Error::DegenerateGeometry("minimizer has a singular unit map".into()));
    }
    let tau_tilde = if r > 1 {
        let t = half_min_sigma(net_star.units().iter().flatten());
        if !(t > 0.0) {
            return Err(Error::DegenerateGeometry("residual minimizer has a singular block".into()));
        }
        Some(t)
    } else {
        None
    };
    let a_max = net_star
        .units()
        .iter()
        .flatten()
        .map(spectral_norm)
        .fold(0.0, f64::max);
    let tau_hat = tau_hat_bisection(a_max, tau, r, search_budget)?;
    let eta_x = eta_min(data.x())?;
    let tt = tau_tilde.unwrap_or(1.0);
    let lambda = 1.0
        / (2.0
            * (l * r) as f64
            * powi(tt, 2 * (r as i32 - 1))
            * powi(tau, 2 * (l as i32 - 1))
            * eta_x
            * eta_x);
    Ok(GdParams {
        architecture: Architecture::Residual,
        tau,
        tau_tilde,
        tau_hat: Some(tau_hat),
        lambda,
        eta_min_x: eta_x,
        radius: tau_tilde.map_or(tau_hat, |t| t.min(tau_hat)),
        depth: l,
        shortcut_depth: r,
    })
}

/// The sampling radius is `2 tau / |X|`; membership is decided in activation
/// space.
pub fn gd_params_nonlinear(net_star: &NonlinearNet, data: &DataPair) -> Result<GdParams> {
    square_data(data)?;
    let tau = 0.5 * sigma_min(&net_star.hidden(data)?);
    if !(tau > 0.0) {
        return Err(Error::DegenerateGeometry("sigma(W_1* X) is singular".into()));
    }
    Ok(GdParams {
        architecture: Architecture::Nonlinear,
        tau,
        tau_tilde: None,
        tau_hat: None,
        lambda: 1.0 / (2.0 * tau * tau),
        eta_min_x: eta_min(data.x())?,
        radius: 2.0 * tau / spectral_norm(data.x()),
        depth: 2,
        shortcut_depth: 1,
    })
}

pub fn gd_params(net_star: &Net, data: &DataPair, search_budget: usize) -> Result<GdParams> {
    match net_star {
        Net::Linear(n) => gd_params_linear(n, data),
        Net::Residual(n) => gd_params_residual(n, data, search_budget),
        Net::Nonlinear(n) => gd_params_nonlinear(n, data),
    }
}

/// Sampling estimate of the largest block radius keeping all unit maps within
/// `tau`, for comparison with the certified `tau_hat`.
pub fn empirical_tau_hat<R: Rng + ?Sized>(
    net_star: &ResidualNet,
    tau: f64,
    samples_per_level: usize,
    levels: usize,
    rng: &mut R,
) -> Result<f64> {
    let star = Net::Residual(net_star.clone());
    let maps = net_star.unit_maps();
    let mut lo = 0.0;
    let mut hi = 4.0 * tau.max(1.0);
    for _ in 0..levels {
        let mid = 0.5 * (lo + hi);
        let mut ok = true;
        for _ in 0..samples_per_level {
            let Net::Residual(s) = sample_neighborhood(&star, mid, NormKind::Spectral, rng)? else {
                unreachable!()
            };
            if s.unit_maps().iter().zip(&maps).any(|(w, ws)| spectral_norm(&(w - ws)) >= tau) {
                ok = false;
                break;
            }
        }
        if ok {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

/// Perturbs every block by a random direction of norm `u * radius`, `u`
/// uniform in `(0, 1)`.
pub fn sample_neighborhood<R: Rng + ?Sized>(
    net_star: &Net,
    radius: f64,
    norm: NormKind,
    rng: &mut R,
) -> Result<Net> {
    if !(radius > 0.0) {
        return Err(Error::InvalidArgument("sampling radius must be positive".into()));
    }
    let d = net_star.dim();
    let deltas: Vec<Matrix> = (0..net_star.num_blocks())
        .map(|_| {
            let dir = match norm {
                NormKind::Spectral => random_unit_spectral(d, d, rng),
                NormKind::Frobenius => random_unit_frobenius(d, d, rng),
            };
            dir.scale(open_unit(rng) * radius)
        })
        .collect();
    net_star.perturbed(&deltas)
}

/// `|sigma(W_1 X) - sigma(W_1* X)|`.
pub fn activation_distance(net: &NonlinearNet, net_star: &NonlinearNet, data: &DataPair) -> Result<f64> {
    Ok(spectral_norm(&net.hidden(data)?.try_sub(&net_star.hidden(data)?)?))
}

/// A nonlinear sample accepted into the activation-space neighborhood.
#[derive(Debug, Clone)]
pub struct NonlinearSample {
    pub net: Net,
    /// Radius in use when the sample was accepted.
    pub radius: f64,
    pub shrinks: usize,
}

/// Rejection sampler for `{W : |sigma(W_1 X) - sigma(W_1* X)| <= tau}`; halves
/// the radius after [`REJECTION_BUDGET`] consecutive rejections.
pub fn sample_nonlinear_gd<R: Rng + ?Sized>(
    net_star: &NonlinearNet,
    data: &DataPair,
    tau: f64,
    radius: f64,
    rng: &mut R,
) -> Result<NonlinearSample> {
    let star = Net::Nonlinear(net_star.clone());
    let mut radius = radius;
    let mut shrinks = 0;
    loop {
        for _ in 0..REJECTION_BUDGET {
            let cand = sample_neighborhood(&star, radius, NormKind::Spectral, rng)?;
            let Net::Nonlinear(n) = &cand else { unreachable!() };
            if activation_distance(n, net_star, data)? <= tau {
                return Ok(NonlinearSample {
                    net: cand,
                    radius,
                    shrinks,
                });
            }
        }
        radius *= 0.5;
        shrinks += 1;
        if shrinks > 60 {
            return Err(Error::DegenerateGeometry(
                "nonlinear neighborhood sampler cannot accept any point".into(),
            ));
        }
    }
}

/// Whether `net` lies in the gradient-dominance neighborhood described by `params`.
pub fn in_gd_neighborhood(net: &Net, net_star: &Net, data: &DataPair, params: &GdParams) -> Result<bool> {
    Ok(match (net, net_star) {
        (Net::Nonlinear(n), Net::Nonlinear(s)) => activation_distance(n, s, data)? <= params.tau,
        (Net::Linear(_), Net::Linear(_)) | (Net::Residual(_), Net::Residual(_)) => {
            let bound = if params.architecture == Architecture::Linear {
                params.tau
            } else {
                params.radius
            };
            net.blocks()
                .iter()
                .zip(net_star.blocks())
                .all(|(a, b)| spectral_norm(&(*a - b)) < bound)
        }
        _ => return Err(Error::InvalidArgument("architecture mismatch".into())),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum ConditionKind {
    GradientDominance,
    Regularity,
}

/// One evaluated sample. `value` is the ratio `(loss - loss*) / (lambda |grad|^2)`
/// for gradient dominance and the slack `<grad, v> - alpha |grad|^2 - beta |v|^2`
/// for regularity.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SampleRecord {
    pub index: usize,
    pub displacement: f64,
    /// `None` for regularity samples whose direction does not qualify.
    pub excess_loss: Option<f64>,
    pub grad_norm_sq: Option<f64>,
    pub value: Option<f64>,
    pub qualifies: bool,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ConditionReport {
    pub condition: ConditionKind,
    pub architecture: Architecture,
    pub radius: f64,
    pub samples_tested: usize,
    pub samples_qualifying: usize,
    pub worst_ratio: Option<f64>,
    pub min_slack: Option<f64>,
    /// Smallest slack divided by `|v|^2`.
    pub min_normalized_slack: Option<f64>,
    pub violations: usize,
    pub witnesses: Vec<SampleRecord>,
    /// Per-sample table, filled only when requested.
    pub records: Vec<SampleRecord>,
    pub warnings: Vec<String>,
}

fn opt_max(a: Option<f64>, b: Option<f64>) -> Option<f64> {
    match (a, b) {
        (Some(x), Some(y)) => Some(x.max(y)),
        (x, None) => x,
        (None, y) => y,
    }
}

fn opt_min(a: Option<f64>, b: Option<f64>) -> Option<f64> {
    match (a, b) {
        (Some(x), Some(y)) => Some(x.min(y)),
        (x, None) => x,
        (None, y) => y,
    }
}

impl ConditionReport {
    pub fn empty(condition: ConditionKind, architecture: Architecture, radius: f64) -> Self {
        Self {
            condition,
            architecture,
            radius,
            samples_tested: 0,
            samples_qualifying: 0,
            worst_ratio: None,
            min_slack: None,
            min_normalized_slack: None,
            violations: 0,
            witnesses: Vec::new(),
            records: Vec::new(),
            warnings: Vec::new(),
        }
    }

    /// Order-independent merge of two partial sweeps.
    pub fn merge(mut self, other: ConditionReport) -> ConditionReport {
        self.radius = self.radius.min(other.radius);
        self.samples_tested += other.samples_tested;
        self.samples_qualifying += other.samples_qualifying;
        self.worst_ratio = opt_max(self.worst_ratio, other.worst_ratio);
        self.min_slack = opt_min(self.min_slack, other.min_slack);
        self.min_normalized_slack = opt_min(self.min_normalized_slack, other.min_normalized_slack);
        self.violations += other.violations;
        self.witnesses.extend(other.witnesses);
        self.witnesses.sort_by_key(|w| w.index);
        self.witnesses.truncate(MAX_WITNESSES);
        self.records.extend(other.records);
        self.records.sort_by_key(|r| r.index);
        for w in other.warnings {
            if !self.warnings.contains(&w) {
                self.warnings.push(w);
            }
        }
        self.warnings.sort();
        self
    }

    pub fn passed(&self) -> bool {
        self.violations == 0
    }

    fn push(&mut self, rec: SampleRecord, violated: bool, keep: bool) {
        if violated {
            self.violations += 1;
            if self.witnesses.len() < MAX_WITNESSES {
                self.witnesses.push(rec.clone());
            }
        }
        if keep {
            self.records.push(rec);
        }
    }
}

/// Sample count, seed, and whether to keep the per-sample table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SweepConfig {
    pub n_samples: usize,
    pub seed: u64,
    pub keep_records: bool,
}

impl SweepConfig {
    pub fn new(n_samples: usize, seed: u64) -> Self {
        Self {
            n_samples,
            seed,
            keep_records: false,
        }
    }

    pub fn chunks(&self) -> usize {
        self.n_samples.div_ceil(CHUNK)
    }

    fn chunk_range(&self, chunk: usize) -> core::ops::Range<usize> {
        let lo = chunk * CHUNK;
        lo.min(self.n_samples)..((chunk + 1) * CHUNK).min(self.n_samples)
    }
}

fn gd_ratio(excess: f64, grad_sq: f64, lambda: f64) -> f64 {
    if excess.abs() < ZERO_TOL && grad_sq < ZERO_TOL {
        0.0
    } else if grad_sq == 0.0 {
        if excess > 0.0 {
            f64::INFINITY
        } else {
            0.0
        }
    } else {
        excess / (lambda * grad_sq)
    }
}

/// Gradient-dominance ratio at a single point.
pub fn gd_ratio_at(net: &Net, data: &DataPair, loss_star: f64, lambda: f64) -> Result<(f64, f64, f64)> {
    let excess = net.loss(data)? - loss_star;
    let g = net.grad(data)?.total_norm;
    let grad_sq = g * g;
    Ok((gd_ratio(excess, grad_sq, lambda), excess, grad_sq))
}

/// One chunk of [`check_gd`].
pub fn check_gd_chunk(
    net_star: &Net,
    data: &DataPair,
    params: &GdParams,
    sweep: &SweepConfig,
    chunk: usize,
) -> Result<ConditionReport> {
    if net_star.architecture() != params.architecture {
        return Err(Error::InvalidArgument("parameters belong to another architecture".into()));
    }
    let mut rng = split_rng(sweep.seed, chunk as u64);
    let loss_star = net_star.loss(data)?;
    let mut report = ConditionReport::empty(ConditionKind::GradientDominance, params.architecture, params.radius);
    for index in sweep.chunk_range(chunk) {
        let net = match net_star {
            Net::Nonlinear(s) => {
                let sample = sample_nonlinear_gd(s, data, params.tau, report.radius, &mut rng)?;
                if sample.shrinks > 0 {
                    report.radius = sample.radius;
                    report.warnings.push(format!(
                        "nonlinear sampler shrank its radius to {:e}",
                        sample.radius
                    ));
                }
                sample.net
            }
            _ => sample_neighborhood(net_star, params.radius, NormKind::Spectral, &mut rng)?,
        };
        let (ratio, excess, grad_sq) = gd_ratio_at(&net, data, loss_star, params.lambda)?;
        report.samples_tested += 1;
        report.samples_qualifying += 1;
        report.worst_ratio = opt_max(report.worst_ratio, Some(ratio));
        let rec = SampleRecord {
            index,
            displacement: net.distance(net_star),
            excess_loss: Some(excess),
            grad_norm_sq: Some(grad_sq),
            value: Some(ratio),
            qualifies: true,
        };
        report.push(rec, !(ratio <= 1.0 + VIOLATION_SLACK), sweep.keep_records);
    }
    report.warnings.dedup();
    Ok(report)
}

/// Samples the analytic neighborhood and records the worst ratio
/// `(loss - loss*) / (lambda |grad|^2)`; a ratio above `1 + 1e-8` is a violation.
pub fn check_gd(net_star: &Net, data: &DataPair, params: &GdParams, sweep: &SweepConfig) -> Result<ConditionReport> {
    let mut report = ConditionReport::empty(ConditionKind::GradientDominance, params.architecture, params.radius);
    for chunk in 0..sweep.chunks() {
        report = report.merge(check_gd_chunk(net_star, data, params, sweep, chunk)?);
    }
    Ok(report)
}

/// Constants of the regularity inequality
/// `<grad, v> >= alpha |grad|^2 + beta |v|^2` along qualifying directions.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RcParams {
    pub architecture: Architecture,
    pub zeta: f64,
    pub zeta_tilde: Option<f64>,
    pub gamma: f64,
    pub delta: f64,
    pub alpha: f64,
    pub beta: f64,
    /// Certified Frobenius block radius; zero until [`epsilon_search`] runs.
    pub epsilon: f64,
    /// `eta_min` of the factor matrix at the minimizer.
    pub factor_eta_min: f64,
}

/// Builds the constants for `net_star`; `delta = None` selects `eta_min` of
/// the factor matrix `G`, `Q` or `H`.
pub fn rc_params(net_star: &Net, data: &DataPair, gamma: f64, delta: Option<f64>) -> Result<RcParams> {
    square_data(data)?;
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::InvalidArgument(format!("gamma must lie in (0, 1), got {gamma}")));
    }
    if let Some(dl) = delta {
        if !(dl > 0.0) {
            return Err(Error::InvalidArgument(format!("delta must be positive, got {dl}")));
        }
    }
    let x_norm = spectral_norm(data.x());
    let x_sq = x_norm * x_norm;
    let max_norm = |ms: &[Matrix]| ms.iter().map(spectral_norm).fold(0.0, f64::max);
    let (zeta, zeta_tilde, alpha) = match net_star {
        Net::Linear(n) => {
            let l = n.depth() as i32;
            let zeta = 2.0 * max_norm(n.layers());
            (zeta, None, gamma / (l as f64 * powi(zeta, 2 * (l - 1)) * x_sq))
        }
        Net::Residual(n) => {
            let l = n.num_units() as i32;
            let r = n.shortcut_depth() as i32;
            let zeta = 2.0 * max_norm(&n.unit_maps());
            let blocks: Vec<Matrix> = n.units().iter().flatten().cloned().collect();
            let zt = 2.0 * max_norm(&blocks);
            let alpha = gamma / ((l * r) as f64 * powi(zt, 2 * (r - 1)) * powi(zeta, 2 * (l - 1)) * x_sq);
            (zeta, Some(zt), alpha)
        }
        Net::Nonlinear(n) => {
            let z = n.preactivation(data)?;
            let hidden = n.activation.apply_matrix(&z);
            let deriv_inf = n.activation.derivative_matrix(&z).max_abs();
            let zeta = 2.0 * spectral_norm(&hidden).max(spectral_norm(&n.w2)).max(deriv_inf);
            let denom = (x_sq * powi(zeta, 4)).max(zeta * zeta);
            (zeta, None, gamma / denom)
        }
    };
    let factor_eta_min = eta_min(&net_star.factor(data)?)?;
    let delta = delta.unwrap_or(factor_eta_min);
    Ok(RcParams {
        architecture: net_star.architecture(),
        zeta,
        zeta_tilde,
        gamma,
        delta,
        alpha,
        beta: (1.0 - gamma) * delta * delta / 2.0,
        epsilon: 0.0,
        factor_eta_min,
    })
}

/// `|F v| >= delta |v|`, with a relative tolerance of `1e-12` at equality.
pub fn direction_qualifies(factor: &Matrix, displacement: &[f64], delta: f64) -> Result<bool> {
    let vn = norm2(displacement);
    if vn == 0.0 {
        return Err(Error::InvalidArgument("zero displacement has no direction".into()));
    }
    let fv = norm2(&factor.matvec(displacement)?);
    Ok(fv >= delta * vn * (1.0 - 1e-12))
}

/// Factor matrix at the minimizer plus an orthonormal basis of its row space.
#[derive(Debug, Clone)]
pub struct FactorGeometry {
    pub factor: Matrix,
    row_basis: Vec<Vec<f64>>,
}

impl FactorGeometry {
    pub fn new(factor: Matrix) -> Self {
        let dec = svd(&factor);
        let smax = dec.s[0];
        let row_basis = dec
            .s
            .iter()
            .enumerate()
            .filter(|(_, &s)| smax > 0.0 && s > RANK_RTOL * smax)
            .map(|(k, _)| dec.v.col(k).to_vec())
            .collect();
        Self { factor, row_basis }
    }

    /// Orthogonal projection onto the row space (the complement of the kernel).
    pub fn project_row(&self, v: &[f64]) -> Vec<f64> {
        let mut out = alloc::vec![0.0; v.len()];
        for b in &self.row_basis {
            let c = dot(b, v);
            for (o, &x) in out.iter_mut().zip(b) {
                *o += c * x;
            }
        }
        out
    }
}

/// Random displacement `row + t * kernel` (with `t = 0` a quarter of the time),
/// scaled so the largest block Frobenius norm is `u * eps`, `u` uniform in
/// `(shell, 1)`.
pub fn sample_rc_displacement<R: Rng + ?Sized>(
    geom: &FactorGeometry,
    block_len: usize,
    eps: f64,
    shell: f64,
    rng: &mut R,
) -> Vec<f64> {
    let n = geom.factor.cols();
    loop {
        let g = gaussian_vec(n, rng);
        let row = geom.project_row(&g);
        let t = if rng.random::<f64>() < ROW_SPACE_SHARE {
            0.0
        } else {
            open_unit(rng)
        };
        let v: Vec<f64> = g.iter().zip(&row).map(|(&gi, &ri)| ri + t * (gi - ri)).collect();
        let max_block = v.chunks(block_len).map(norm2).fold(0.0, f64::max);
        if max_block > 1e-12 {
            let s = (shell + (1.0 - shell) * open_unit(rng)) * eps / max_block;
            return v.into_iter().map(|x| x * s).collect();
        }
    }
}

/// Regularity slack `<grad, v> - alpha |grad|^2 - beta |v|^2` at `net_star + v`.
pub fn rc_slack(net_star: &Net, data: &DataPair, rc: &RcParams, v: &[f64]) -> Result<(f64, f64)> {
    let base = net_star.flat_params();
    let flat: Vec<f64> = base.iter().zip(v).map(|(a, b)| a + b).collect();
    let net = net_star.with_params(&flat)?;
    let g = net.grad(data)?;
    let grad_sq = g.total_norm * g.total_norm;
    let v_sq = dot(v, v);
    let slack = dot(g.as_slice(), v) - rc.alpha * grad_sq - rc.beta * v_sq;
    Ok((slack, grad_sq))
}

#[allow(clippy::too_many_arguments)]
fn rc_sweep_chunk(
    net_star: &Net,
    data: &DataPair,
    rc: &RcParams,
    geom: &FactorGeometry,
    eps: f64,
    shell: f64,
    sweep: &SweepConfig,
    chunk: usize,
) -> Result<ConditionReport> {
    let mut rng = split_rng(sweep.seed, chunk as u64);
    let d = net_star.dim();
    let loss_star = net_star.loss(data)?;
    let base = net_star.flat_params();
    let mut report = ConditionReport::empty(ConditionKind::Regularity, rc.architecture, eps);
    for index in sweep.chunk_range(chunk) {
        let v = sample_rc_displacement(geom, d * d, eps, shell, &mut rng);
        report.samples_tested += 1;
        let qualifies = direction_qualifies(&geom.factor, &v, rc.delta)?;
        if !qualifies {
            if sweep.keep_records {
                report.records.push(SampleRecord {
                    index,
                    displacement: norm2(&v),
                    excess_loss: None,
                    grad_norm_sq: None,
                    value: None,
                    qualifies: false,
                });
            }
            continue;
        }
        report.samples_qualifying += 1;
        let (slack, grad_sq) = rc_slack(net_star, data, rc, &v)?;
        let v_sq = dot(&v, &v);
        report.min_slack = opt_min(report.min_slack, Some(slack));
        report.min_normalized_slack = opt_min(report.min_normalized_slack, Some(slack / v_sq));
        let flat: Vec<f64> = base.iter().zip(&v).map(|(a, b)| a + b).collect();
        let rec = SampleRecord {
            index,
            displacement: libm::sqrt(v_sq),
            excess_loss: Some(net_star.loss_at(data, &flat) - loss_star),
            grad_norm_sq: Some(grad_sq),
            value: Some(slack),
            qualifies: true,
        };
        report.push(rec, !(slack >= -VIOLATION_SLACK), sweep.keep_records);
    }
    Ok(report)
}

fn rc_sweep(
    net_star: &Net,
    data: &DataPair,
    rc: &RcParams,
    geom: &FactorGeometry,
    eps: f64,
    shell: f64,
    sweep: &SweepConfig,
) -> Result<ConditionReport> {
    let mut report = ConditionReport::empty(ConditionKind::Regularity, rc.architecture, eps);
    for chunk in 0..sweep.chunks() {
        report = report.merge(rc_sweep_chunk(net_star, data, rc, geom, eps, shell, sweep, chunk)?);
    }
    Ok(report)
}

/// Walks the lattice `eps_hi / 2^j`, `j = 0..levels`, and returns the smaller
/// radius of the first two consecutive levels at which every qualifying
/// sample satisfies the regularity inequality. Search samples are drawn from
/// the outer shell `(SEARCH_SHELL * eps, eps)` of each ball. The radius is a
/// sampling certificate, not a proof. If no such pair exists, `epsilon`
/// stays `0` and the report says so.
#[allow(clippy::too_many_arguments)]
pub fn epsilon_search(
    net_star: &Net,
    data: &DataPair,
    rc: &RcParams,
    n_samples_per_level: usize,
    seed: u64,
    eps_hi: f64,
    levels: usize,
) -> Result<(RcParams, ConditionReport)> {
    if !(eps_hi > 0.0) || levels < 2 {
        return Err(Error::InvalidArgument("epsilon_search needs eps_hi > 0 and levels >= 2".into()));
    }
    let geom = FactorGeometry::new(net_star.factor(data)?);
    let mut prev_passed = false;
    let mut last = None;
    for j in 0..levels {
        let eps = eps_hi / libm::pow(2.0, j as f64);
        let sweep = SweepConfig::new(n_samples_per_level, derive_seed(seed, j as u64));
        let report = rc_sweep(net_star, data, rc, &geom, eps, SEARCH_SHELL, &sweep)?;
        let passed = report.violations == 0 && report.samples_qualifying > 0;
        if passed && prev_passed {
            let mut out = rc.clone();
            out.epsilon = eps;
            return Ok((out, report));
        }
        prev_passed = passed;
        last = Some(report);
    }
    let mut report = last.expect("levels >= 2");
    report.warnings.push(format!(
        "no lattice radius down to {:e} passed twice in a row; epsilon set to 0",
        eps_hi / libm::pow(2.0, (levels - 1) as f64)
    ));
    let mut out = rc.clone();
    out.epsilon = 0.0;
    Ok((out, report))
}

/// Re-certifies the regularity inequality inside the ball of radius `rc.epsilon`.
pub fn check_rc(net_star: &Net, data: &DataPair, rc: &RcParams, sweep: &SweepConfig) -> Result<ConditionReport> {
    if !(rc.epsilon > 0.0) {
        return Err(Error::InvalidArgument("check_rc needs a positive epsilon".into()));
    }
    let geom = FactorGeometry::new(net_star.factor(data)?);
    rc_sweep(net_star, data, rc, &geom, rc.epsilon, 0.0, sweep)
}

/// One chunk of [`check_rc`], for callers scheduling chunks themselves.
pub fn check_rc_chunk(
    net_star: &Net,
    data: &DataPair,
    rc: &RcParams,
    geom: &FactorGeometry,
    sweep: &SweepConfig,
    chunk: usize,
) -> Result<ConditionReport> {
    if !(rc.epsilon > 0.0) {
        return Err(Error::InvalidArgument("check_rc needs a positive epsilon".into()));
    }
    rc_sweep_chunk(net_star, data, rc, geom, rc.epsilon, 0.0, sweep, chunk)
}

/// `(sigma_min(I + A), 1 - |A|)`; the first is never below the second.
pub fn shortcut_margin(a: &Matrix) -> (f64, f64) {
    let eye = Matrix::identity(a.rows());
    (sigma_min(&(&eye + a)), 1.0 - spectral_norm(a))
}

/// Upper bound on the residual (`r = 1`) gradient-dominance constant when
/// every block satisfies `|A_k*| <= rho < 1`.
pub fn residual_lambda_bound(l: usize, rho: f64, eta_min_x: f64) -> f64 {
    let tau_lo = 0.5 * (1.0 - rho);
    1.0 / (2.0 * l as f64 * powi(tau_lo, 2 * (l as i32 - 1)) * eta_min_x * eta_min_x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::fixture_f1;
    use crate::minimizers::{linear_minimizer, nonlinear_minimizer, residual_minimizer, Transforms};
    use crate::networks::Activation;
    use crate::numkit::seeded_rng;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12 * (1.0 + b.abs())
    }

    #[test]
    fn f1_linear_constants() {
        let mut rng = seeded_rng(0);
        let data = fixture_f1();
        let cert = linear_minimizer(&data, 2, &Transforms::Identity, &mut rng).unwrap();
        let p = gd_params(&cert.net, &data, 60).unwrap();
        assert!(close(p.tau, 0.5) && close(p.lambda, 1.0));

        let scaled = data.with_scaled_y(2.0);
        let cert = linear_minimizer(&scaled, 2, &Transforms::Identity, &mut rng).unwrap();
        let p = gd_params(&cert.net, &scaled, 60).unwrap();
        assert!(close(p.tau, 0.5) && close(p.lambda, 1.0));

        let rc = rc_params(&cert.net, &data, 0.5, Some(1.0));
        assert!(rc.is_ok());
    }

    #[test]
    fn single_layer_lambda() {
        let mut rng = seeded_rng(0);
        let data = fixture_f1();
        let cert = linear_minimizer(&data, 1, &Transforms::Identity, &mut rng).unwrap();
        let p = gd_params(&cert.net, &data, 60).unwrap();
        assert!(close(p.lambda, 0.5));
        assert!(close(p.tau, 0.5));
    }

    #[test]
    fn f1_residual_constants() {
        let mut rng = seeded_rng(0);
        let data = fixture_f1();
        let cert =
            residual_minimizer(&data, 2, 1, &Transforms::Identity, &Transforms::Identity, &mut rng).unwrap();
        let p = gd_params(&cert.net, &data, 60).unwrap();
        assert!(close(p.tau, 0.5) && close(p.lambda, 1.0));
        assert_eq!(p.tau_hat, Some(p.tau));
        assert_eq!(p.tau_tilde, None);
    }

    #[test]
    fn f1_nonlinear_constants() {
        let mut rng = seeded_rng(0);
        let data = fixture_f1();
        let act = Activation::new(0.5).unwrap();
        let cert = nonlinear_minimizer(&data, act, &Transforms::Identity, &mut rng).unwrap();
        let p = gd_params(&cert.net, &data, 60).unwrap();
        assert!(close(p.tau, 0.5) && close(p.lambda, 2.0));
        let rc = rc_params(&cert.net, &data, 0.5, None).unwrap();
        assert!(close(rc.zeta, 4.0));
        assert!(close(rc.alpha, 1.0 / 512.0));
    }

    #[test]
    fn f1_linear_rc_constants() {
        let mut rng = seeded_rng(0);
        let data = fixture_f1();
        let cert = linear_minimizer(&data, 2, &Transforms::Identity, &mut rng).unwrap();
        let rc = rc_params(&cert.net, &data, 0.5, Some(1.0)).unwrap();
        assert!(close(rc.zeta, 4.0));
        assert!(close(rc.alpha, 1.0 / 64.0));
        assert!(close(rc.beta, 0.25));
        assert!(rc_params(&cert.net, &data, 0.5, Some(0.0)).is_err());
        assert!(rc_params(&cert.net, &data, 1.0, None).is_err());
    }

    #[test]
    fn tau_hat_bound_holds() {
        for r in 2..5 {
            let t = tau_hat_bisection(0.8, 0.3, r, 80).unwrap();
            assert!(unit_perturbation_bound(0.8, t, r) <= 0.3);
            assert!(unit_perturbation_bound(0.8, t * (1.0 + 1e-9), r) > 0.3);
            // closed form (a^r + tau)^(1/r) - a
            let exact = libm::pow(libm::pow(0.8, r as f64) + 0.3, 1.0 / r as f64) - 0.8;
            assert!((t - exact).abs() < 1e-12);
        }
        assert_eq!(tau_hat_bisection(0.8, 0.3, 1, 0).unwrap(), 0.3);
    }

    #[test]
    fn ratio_convention() {
        assert_eq!(gd_ratio(0.0, 0.0, 1.0), 0.0);
        assert_eq!(gd_ratio(1e-16, 1e-20, 1.0), 0.0);
        assert_eq!(gd_ratio(1.0, 0.0, 1.0), f64::INFINITY);
        assert_eq!(gd_ratio(1.0, 4.0, 0.5), 0.5);
    }

    #[test]
    fn qualification_errors_and_kernel() {
        let f = Matrix::from_rows(&[[1.0, 0.0], [0.0, 0.0]]);
        assert!(direction_qualifies(&f, &[0.0, 0.0], 1.0).is_err());
        assert!(!direction_qualifies(&f, &[0.0, 3.0], 1e-9).unwrap());
        assert!(direction_qualifies(&f, &[2.0, 0.0], 1.0).unwrap());
    }

    #[test]
    fn merge_is_order_independent() {
        let mut rng = seeded_rng(3);
        let data = fixture_f1();
        let cert = linear_minimizer(&data, 2, &Transforms::Identity, &mut rng).unwrap();
        let p = gd_params(&cert.net, &data, 60).unwrap();
        let sweep = SweepConfig {
            n_samples: 3 * CHUNK,
            seed: 11,
            keep_records: true,
        };
        let parts: Vec<_> = (0..3)
            .map(|c| check_gd_chunk(&cert.net, &data, &p, &sweep, c).unwrap())
            .collect();
        let empty = || ConditionReport::empty(ConditionKind::GradientDominance, Architecture::Linear, p.radius);
        let fwd = parts.iter().cloned().fold(empty(), ConditionReport::merge);
        let rev = parts.iter().rev().cloned().fold(empty(), ConditionReport::merge);
        assert_eq!(fwd, rev);
        assert_eq!(fwd, check_gd(&cert.net, &data, &p, &sweep).unwrap());
    }
}
