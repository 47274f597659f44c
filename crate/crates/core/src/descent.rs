//! Fixed-step gradient descent from inside the certified neighborhoods, and a
//! geometric fit of the loss residuals.

use alloc::vec::Vec;

use rand::Rng;

use crate::datagen::DataPair;
use crate::error::{Error, Result};
use crate::landscape::{in_gd_neighborhood, sample_neighborhood, GdParams, NormKind};
use crate::networks::Net;
use crate::numkit::{random_unit_spectral, spectral_norm};

/// Residuals below this stop the run.
pub const RESIDUAL_FLOOR: f64 = 1e-14;
/// A run diverges once its loss exceeds this multiple of the initial loss.
pub const DIVERGENCE_FACTOR: f64 = 1e3;
pub const DEFAULT_TAIL_FRACTION: f64 = 0.5;
/// Fewest tail points accepted by [`fit_geometric`].
pub const MIN_TAIL_POINTS: usize = 10;
pub const DEFAULT_MAX_HALVINGS: usize = 30;
pub const STEP_FRACTION: f64 = 0.5;

/// Outcome of fitting `log(residual_k) ~ c + k log(ratio)`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "snake_case"))]
pub enum RateEstimate {
    Fitted { ratio: f64, r_squared: f64, points: usize },
    /// Residuals hit the floating-point floor before enough tail points.
    ConvergedToPrecision { points: usize },
}

impl RateEstimate {
    pub fn ratio(&self) -> Option<f64> {
        match self {
            RateEstimate::Fitted { ratio, .. } => Some(*ratio),
            RateEstimate::ConvergedToPrecision { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DescentTrace {
    /// Loss at every recorded iterate, the start included.
    pub losses: Vec<f64>,
    /// `|vec(net_k - net*)|` for every recorded iterate.
    pub iterate_dists: Vec<f64>,
    pub loss_star: f64,
    pub step: f64,
    /// Gradient steps taken.
    pub iters: usize,
    pub diverged: bool,
    /// The residual dropped below [`RESIDUAL_FLOOR`].
    pub converged: bool,
    /// First recorded iterate outside the gradient-dominance neighborhood.
    pub first_exit: Option<usize>,
    /// Step halvings applied by [`run_gd_monotone`].
    pub halvings: usize,
    pub rate: Option<RateEstimate>,
}

impl DescentTrace {
    pub fn residuals(&self) -> Vec<f64> {
        self.losses.iter().map(|l| l - self.loss_star).collect()
    }

    pub fn is_monotone(&self) -> bool {
        self.losses.windows(2).all(|w| w[1] <= w[0])
    }

    pub fn fitted_ratio(&self) -> Option<f64> {
        self.rate.and_then(|r| r.ratio())
    }

    /// Residuals recorded while the iterates were in the neighborhood.
    pub fn in_neighborhood_residuals(&self) -> Vec<f64> {
        let end = self.first_exit.unwrap_or(self.losses.len());
        self.residuals()[..end].to_vec()
    }
}

/// Block radius of the parameter-space ball matching `params`: `tau` for
/// linear nets, `min(tau_hat, tau_tilde)` for residual nets and `tau / |X|`
/// for the nonlinear net, whose neighborhood lives in activation space.
pub fn neighborhood_block_radius(params: &GdParams, data: &DataPair) -> f64 {
    match params.architecture {
        crate::networks::Architecture::Nonlinear => params.tau / spectral_norm(data.x()),
        _ => params.radius,
    }
}

/// `net*` with every block moved by exactly `fraction` times
/// [`neighborhood_block_radius`] in the spectral norm.
pub fn displaced_start<R: Rng + ?Sized>(
    net_star: &Net,
    data: &DataPair,
    params: &GdParams,
    fraction: f64,
    rng: &mut R,
) -> Result<Net> {
    let rad = fraction * neighborhood_block_radius(params, data);
    let d = net_star.dim();
    let deltas: Vec<_> = (0..net_star.num_blocks())
        .map(|_| random_unit_spectral(d, d, rng).scale(rad))
        .collect();
    net_star.perturbed(&deltas)
}

/// Random start inside the ball of block radius `radius` (uniform scale).
pub fn random_start<R: Rng + ?Sized>(net_star: &Net, radius: f64, rng: &mut R) -> Result<Net> {
    sample_neighborhood(net_star, radius, NormKind::Spectral, rng)
}

/// `STEP_FRACTION / |F|^2`, a fraction of the inverse curvature of the loss at
/// a zero-loss minimizer.
pub fn default_step(net_star: &Net, data: &DataPair) -> Result<f64> {
    let f = spectral_norm(&net_star.factor(data)?);
    if !(f > 0.0) {
        return Err(Error::DegenerateGeometry("factor matrix vanishes".into()));
    }
    Ok(STEP_FRACTION / (f * f))
}

/// Plain gradient descent `theta <- theta - step * grad` for at most `iters`
/// steps. With `neighborhood`, exits are tracked and the rate fit uses only
/// the part of the run before the first exit.
pub fn run_gd(
    net0: &Net,
    net_star: &Net,
    data: &DataPair,
    step: f64,
    iters: usize,
    neighborhood: Option<&GdParams>,
) -> Result<DescentTrace> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::InvalidArgument("step must be positive and finite".into()));
    }
    if net0.architecture() != net_star.architecture() || net0.num_params() != net_star.num_params() {
        return Err(Error::InvalidArgument("start and minimizer differ in shape".into()));
    }
    let loss_star = net_star.loss(data)?;
    let mut net = net0.clone();
    let mut trace = DescentTrace {
        losses: Vec::with_capacity(iters + 1),
        iterate_dists: Vec::with_capacity(iters + 1),
        loss_star,
        step,
        iters: 0,
        diverged: false,
        converged: false,
        first_exit: None,
        halvings: 0,
        rate: None,
    };
    let mut loss = net.loss(data)?;
    let limit = DIVERGENCE_FACTOR * loss.max(f64::MIN_POSITIVE);
    loop {
        trace.losses.push(loss);
        trace.iterate_dists.push(net.distance(net_star));
        if let (Some(p), None) = (neighborhood, trace.first_exit) {
            if !in_gd_neighborhood(&net, net_star, data, p)? {
                trace.first_exit = Some(trace.losses.len() - 1);
            }
        }
        if !loss.is_finite() || loss > limit {
            trace.diverged = true;
            break;
        }
        if loss - loss_star < RESIDUAL_FLOOR {
            trace.converged = true;
            break;
        }
        if trace.iters == iters {
            break;
        }
        let g = net.grad(data)?;
        let flat: Vec<f64> = net
            .flat_params()
            .iter()
            .zip(g.as_slice())
            .map(|(p, gi)| p - step * gi)
            .collect();
        net = net.with_params(&flat)?;
        loss = net.loss(data)?;
        trace.iters += 1;
    }
    if !trace.diverged {
        trace.rate = fit_geometric(&trace.in_neighborhood_residuals(), DEFAULT_TAIL_FRACTION).ok();
    }
    Ok(trace)
}

/// [`run_gd`] with the halving guard: a run whose loss ever increases is
/// repeated at half the step, up to `max_halvings` times.
pub fn run_gd_monotone(
    net0: &Net,
    net_star: &Net,
    data: &DataPair,
    step: f64,
    iters: usize,
    neighborhood: Option<&GdParams>,
    max_halvings: usize,
) -> Result<DescentTrace> {
    let mut step = step;
    for halvings in 0..=max_halvings {
        let mut trace = run_gd(net0, net_star, data, step, iters, neighborhood)?;
        trace.halvings = halvings;
        if !trace.diverged && trace.is_monotone() {
            return Ok(trace);
        }
        step *= 0.5;
    }
    Err(Error::RetriesExhausted {
        retries: max_halvings,
        reason: alloc::format!("no monotone run down to step {:e}", 2.0 * step),
    })
}

/// Least-squares fit of `log r_k` against `k` over the last `tail_fraction`
/// of the positive prefix of `residuals`; `ratio = exp(slope)`.
pub fn fit_geometric(residuals: &[f64], tail_fraction: f64) -> Result<RateEstimate> {
    if !(tail_fraction > 0.0 && tail_fraction <= 1.0) {
        return Err(Error::InvalidArgument("tail_fraction must lie in (0, 1]".into()));
    }
    let usable = residuals
        .iter()
        .position(|&r| !(r > 0.0 && r.is_finite()))
        .unwrap_or(residuals.len());
    let underflowed = usable < residuals.len()
        || residuals.last().is_some_and(|&r| r < RESIDUAL_FLOOR);
    let tail = libm::ceil(usable as f64 * tail_fraction) as usize;
    if tail < MIN_TAIL_POINTS {
        if underflowed {
            return Ok(RateEstimate::ConvergedToPrecision { points: usable });
        }
        return Err(Error::InvalidArgument(alloc::format!(
            "need at least {MIN_TAIL_POINTS} tail points, have {tail}"
        )));
    }
    let start = usable - tail;
    let n = tail as f64;
    let xs = (start..usable).map(|k| k as f64);
    let ys: Vec<f64> = residuals[start..usable].iter().map(|&r| libm::log(r)).collect();
    let x_mean = xs.clone().sum::<f64>() / n;
    let y_mean = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (x, &y) in xs.zip(&ys) {
        sxx += (x - x_mean) * (x - x_mean);
        sxy += (x - x_mean) * (y - y_mean);
    }
    let slope = sxy / sxx;
    let ss_tot: f64 = ys.iter().map(|y| (y - y_mean) * (y - y_mean)).sum();
    let ss_res: f64 = ys
        .iter()
        .enumerate()
        .map(|(i, &y)| {
            let fit = y_mean + slope * ((start + i) as f64 - x_mean);
            (y - fit) * (y - fit)
        })
        .sum();
    let r_squared = if ss_tot <= f64::EPSILON * f64::EPSILON * n {
        1.0
    } else {
        1.0 - ss_res / ss_tot
    };
    Ok(RateEstimate::Fitted {
        ratio: libm::exp(slope),
        r_squared,
        points: tail,
    })
}

/// Rate fit over the in-neighborhood part of `trace`.
pub fn estimate_rate(trace: &DescentTrace, tail_fraction: f64) -> Result<RateEstimate> {
    fit_geometric(&trace.in_neighborhood_residuals(), tail_fraction)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::fixture_f1;
    use crate::minimizers::{linear_minimizer, Transforms};
    use crate::numkit::seeded_rng;

    #[test]
    fn exact_geometric_input() {
        let r: Vec<f64> = (0..40).map(|k| 3.0 * libm::pow(0.7, k as f64)).collect();
        let RateEstimate::Fitted { ratio, r_squared, points } = fit_geometric(&r, 0.5).unwrap() else {
            panic!()
        };
        assert!((ratio - 0.7).abs() < 1e-12);
        assert!((r_squared - 1.0).abs() < 1e-12);
        assert_eq!(points, 20);
    }

    #[test]
    fn constant_residuals() {
        let r = [0.25; 30];
        let est = fit_geometric(&r, 0.5).unwrap();
        assert_eq!(est, RateEstimate::Fitted { ratio: 1.0, r_squared: 1.0, points: 15 });
    }

    #[test]
    fn too_short_or_underflowed() {
        assert!(fit_geometric(&[1.0, 0.5, 0.25], 0.5).is_err());
        assert_eq!(
            fit_geometric(&[1.0, 1e-8, 0.0], 0.5).unwrap(),
            RateEstimate::ConvergedToPrecision { points: 2 }
        );
        assert!(fit_geometric(&[1.0; 20], 0.0).is_err());
    }

    #[test]
    fn start_at_minimizer() {
        let mut rng = seeded_rng(0);
        let data = fixture_f1();
        let cert = linear_minimizer(&data, 2, &Transforms::Identity, &mut rng).unwrap();
        let t = run_gd(&cert.net, &cert.net, &data, 0.01, 100, None).unwrap();
        assert!(t.converged && !t.diverged);
        assert_eq!(t.iters, 0);
        assert_eq!(t.losses, [0.0]);
        assert!(matches!(t.rate, Some(RateEstimate::ConvergedToPrecision { .. })));
    }

    #[test]
    fn bad_step_rejected() {
        let data = fixture_f1();
        let net = Net::Linear(crate::networks::LinearNet::zeros(2, 2));
        assert!(run_gd(&net, &net, &data, 0.0, 10, None).is_err());
        assert!(run_gd(&net, &net, &data, f64::NAN, 10, None).is_err());
    }
}
