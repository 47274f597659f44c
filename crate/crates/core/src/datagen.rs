//! Synthetic data pairs satisfying the standing spectral assumptions, and
//! the spectral summary `Sigma = Sigma_XY^T Sigma_XX^{-1} Sigma_XY`.

use alloc::format;

use rand::Rng;

use crate::error::{Error, Result};
use crate::numkit::{gaussian_matrix, sigma_min, solve, sym_eig_desc, EigenPairs, Matrix};

/// Default tolerance for the full-rank checks in [`validate_assumptions`].
pub const VALIDATION_TOL: f64 = 1e-8;

/// Default relative eigenvalue gap used by [`gen_data`], as a fraction of
/// the largest eigenvalue of `Sigma`.
pub const DEFAULT_GAP_REL: f64 = 1e-3;

/// Input/output matrices `X`, `Y`, both `d x m` with `m >= d`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DataPair {
    x: Matrix,
    y: Matrix,
}

impl DataPair {
    pub fn new(x: Matrix, y: Matrix) -> Result<Self> {
        if x.shape() != y.shape() {
            return Err(Error::DimensionMismatch {
                op: "DataPair::new",
                left: x.shape(),
                right: y.shape(),
            });
        }
        if x.cols() < x.rows() {
            return Err(Error::InvalidData(format!(
                "m = {} < d = {}: Sigma_XX cannot be full rank",
                x.cols(),
                x.rows()
            )));
        }
        if !x.is_finite() || !y.is_finite() {
            return Err(Error::NonFinite("data pair"));
        }
        Ok(Self { x, y })
    }

    pub fn x(&self) -> &Matrix {
        &self.x
    }

    pub fn y(&self) -> &Matrix {
        &self.y
    }

    pub fn d(&self) -> usize {
        self.x.rows()
    }

    pub fn m(&self) -> usize {
        self.x.cols()
    }

    pub fn is_square(&self) -> bool {
        self.d() == self.m()
    }

    /// Same inputs, outputs multiplied by `c`.
    pub fn with_scaled_y(&self, c: f64) -> Self {
        Self {
            x: self.x.clone(),
            y: self.y.scale(c),
        }
    }

    pub fn sigma_xx(&self) -> Matrix {
        &self.x * &self.x.transpose()
    }

    pub fn sigma_xy(&self) -> Matrix {
        &self.x * &self.y.transpose()
    }

    pub fn sigma_yy(&self) -> Matrix {
        &self.y * &self.y.transpose()
    }
}

/// The diagonal fixture `X = I_2`, `Y = diag(2, 1)`.
pub fn fixture_f1() -> DataPair {
    DataPair::new(Matrix::identity(2), Matrix::diag(&[2.0, 1.0])).expect("valid fixture")
}

/// Outcome of checking the standing assumptions, with measured margins.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ValidationReport {
    pub tol: f64,
    /// Smallest singular value of `Sigma_XX`.
    pub sigma_xx_margin: f64,
    /// Smallest singular value of `Sigma_XY`.
    pub sigma_xy_margin: f64,
    /// Smallest gap between consecutive eigenvalues of `Sigma`; for `d = 1`
    /// the single eigenvalue itself.
    pub eigen_gap: f64,
    pub sigma_xx_full_rank: bool,
    pub sigma_xy_full_rank: bool,
    pub distinct_eigenvalues: bool,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.sigma_xx_full_rank && self.sigma_xy_full_rank && self.distinct_eigenvalues
    }
}

pub fn validate_assumptions(pair: &DataPair, tol: f64) -> ValidationReport {
    let sigma_xx_margin = sigma_min(&pair.sigma_xx());
    let sigma_xy_margin = sigma_min(&pair.sigma_xy());
    let eigen_gap = if sigma_xx_margin > tol {
        sigma_matrix(pair)
            .ok()
            .and_then(|s| sym_eig_desc(&s).ok())
            .map(|e| min_gap(&e.values))
            .unwrap_or(0.0)
    } else {
        0.0
    };
    ValidationReport {
        tol,
        sigma_xx_margin,
        sigma_xy_margin,
        eigen_gap,
        sigma_xx_full_rank: sigma_xx_margin > tol,
        sigma_xy_full_rank: sigma_xy_margin > tol,
        distinct_eigenvalues: eigen_gap > tol,
    }
}

fn min_gap(values: &[f64]) -> f64 {
    if values.len() == 1 {
        return values[0];
    }
    values
        .windows(2)
        .map(|w| w[0] - w[1])
        .fold(f64::INFINITY, f64::min)
}

/// `Sigma_XY^T Sigma_XX^{-1}`, i.e. the least-squares map `Y X^T (X X^T)^{-1}`,
/// computed by a linear solve.
pub fn regression_map(pair: &DataPair) -> Result<Matrix> {
    Ok(solve(&pair.sigma_xx(), &pair.sigma_xy())?.transpose())
}

fn sigma_matrix(pair: &DataPair) -> Result<Matrix> {
    let sxy = pair.sigma_xy();
    let z = solve(&pair.sigma_xx(), &sxy)?;
    Ok((&sxy.transpose() * &z).symmetrized())
}

/// `Sigma`, its eigensystem, `Tr(Sigma_YY)`, and the least-squares optimum
/// `Tr(Sigma_YY) - sum_i lambda_i` of `|W X - Y|_F^2`.
#[derive(Debug, Clone)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SpectralSummary {
    pub sigma: Matrix,
    pub eig: EigenPairs,
    pub sigma_yy_trace: f64,
    pub optimal_value: f64,
}

pub fn spectral_summary(pair: &DataPair) -> Result<SpectralSummary> {
    let sigma = sigma_matrix(pair)?;
    let eig = sym_eig_desc(&sigma)?;
    let sigma_yy_trace = pair.sigma_yy().trace();
    let top: f64 = eig.values.iter().take(pair.d()).sum();
    Ok(SpectralSummary {
        sigma,
        eig,
        sigma_yy_trace,
        optimal_value: sigma_yy_trace - top,
    })
}

/// Draws Gaussian `X`, `Y` until the pair validates and the eigenvalue gap
/// of `Sigma` exceeds `gap_rel * lambda_max`.
pub fn gen_data<R: Rng + ?Sized>(
    d: usize,
    m: usize,
    rng: &mut R,
    gap_rel: f64,
    retries: usize,
) -> Result<DataPair> {
    if d == 0 {
        return Err(Error::InvalidArgument("gen_data: d must be positive".into()));
    }
    if m < d {
        return Err(Error::InvalidArgument(format!(
            "gen_data: m = {m} < d = {d}, Sigma_XX cannot be full rank"
        )));
    }
    let mut last_reason = alloc::string::String::from("no attempt made");
    for _ in 0..retries.max(1) {
        let pair = DataPair::new(gaussian_matrix(d, m, rng), gaussian_matrix(d, m, rng))?;
        let report = validate_assumptions(&pair, VALIDATION_TOL);
        if !report.passed() {
            last_reason = format!("{report:?}");
            continue;
        }
        let summary = spectral_summary(&pair)?;
        let lmax = summary.eig.values[0];
        if d == 1 || report.eigen_gap > gap_rel * lmax {
            return Ok(pair);
        }
        last_reason = format!("eigen gap {:e} <= {:e}", report.eigen_gap, gap_rel * lmax);
    }
    Err(Error::RetriesExhausted {
        retries,
        reason: last_reason,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::seeded_rng;

    #[test]
    fn f1_validates_with_hand_margins() {
        let r = validate_assumptions(&fixture_f1(), VALIDATION_TOL);
        assert!(r.passed());
        assert!((r.sigma_xx_margin - 1.0).abs() < 1e-14);
        assert!((r.sigma_xy_margin - 1.0).abs() < 1e-14);
        assert!((r.eigen_gap - 3.0).abs() < 1e-14);
    }

    #[test]
    fn f1_summary() {
        let s = spectral_summary(&fixture_f1()).unwrap();
        assert_eq!(s.sigma, Matrix::diag(&[4.0, 1.0]));
        assert_eq!(s.eig.values, [4.0, 1.0]);
        assert_eq!(s.eig.vectors, Matrix::identity(2));
        assert_eq!(s.sigma_yy_trace, 5.0);
        assert_eq!(s.optimal_value, 0.0);
    }

    #[test]
    fn zero_row_fails_sigma_xx() {
        let x = Matrix::from_rows(&[[1.0, 2.0], [0.0, 0.0]]);
        let pair = DataPair::new(x, Matrix::identity(2)).unwrap();
        let r = validate_assumptions(&pair, VALIDATION_TOL);
        assert!(!r.sigma_xx_full_rank);
        assert!(!r.passed());
    }

    #[test]
    fn zero_y_fails_sigma_xy() {
        let pair = DataPair::new(Matrix::identity(2), Matrix::zeros(2, 2)).unwrap();
        let r = validate_assumptions(&pair, VALIDATION_TOL);
        assert!(r.sigma_xx_full_rank);
        assert!(!r.sigma_xy_full_rank);
        assert!(!r.distinct_eigenvalues);
    }

    #[test]
    fn y_equal_x_exercises_gap() {
        // Sigma reduces to Sigma_XX; an orthogonal X gives a repeated eigenvalue.
        let x = Matrix::from_rows(&[[0.0, 1.0], [1.0, 0.0]]);
        let pair = DataPair::new(x.clone(), x).unwrap();
        let r = validate_assumptions(&pair, VALIDATION_TOL);
        assert!(r.sigma_xx_full_rank && r.sigma_xy_full_rank);
        assert!(r.eigen_gap < 1e-12);
        assert!(!r.passed());
    }

    #[test]
    fn m_less_than_d_rejected() {
        let mut rng = seeded_rng(0);
        assert!(matches!(gen_data(3, 2, &mut rng, 1e-3, 50), Err(Error::InvalidArgument(_))));
        assert!(DataPair::new(Matrix::zeros(3, 2), Matrix::zeros(3, 2)).is_err());
    }

    #[test]
    fn gen_data_small() {
        let mut rng = seeded_rng(7);
        let pair = gen_data(2, 2, &mut rng, 1e-3, 50).unwrap();
        assert!(validate_assumptions(&pair, VALIDATION_TOL).passed());
        assert!(sigma_min(pair.x()) > 0.0);
        assert!(sigma_min(pair.y()) > 0.0);
    }

    #[test]
    fn impossible_gap_exhausts_retries() {
        let mut rng = seeded_rng(1);
        assert!(matches!(
            gen_data(3, 3, &mut rng, 10.0, 5),
            Err(Error::RetriesExhausted { retries: 5, .. })
        ));
    }
}
