//! Run reports. JSON is canonical; CSV is a flat projection of the
//! sample-level tables.

use landscape_core::datagen::ValidationReport;
use landscape_core::descent::DescentTrace;
use landscape_core::landscape::{ConditionReport, GdParams, RcParams, SampleRecord};
use landscape_core::minimizers::{BlockRank, MinimizerCertificate};
use landscape_core::networks::{Architecture, Net};
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::LabError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSummary {
    pub source: String,
    pub d: usize,
    pub m: usize,
    pub validation: ValidationReport,
    /// Least-squares optimum of `|W X - Y|_F^2`.
    pub optimal_value: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CertificateSummary {
    pub architecture: Architecture,
    pub predicted_value: f64,
    pub achieved_loss: f64,
    pub value_gap: f64,
    pub grad_norm: f64,
    pub holds: bool,
    pub rank_profile: Vec<BlockRank>,
    pub net: Net,
}

impl From<&MinimizerCertificate> for CertificateSummary {
    fn from(c: &MinimizerCertificate) -> Self {
        Self {
            architecture: c.net.architecture(),
            predicted_value: c.predicted_value,
            achieved_loss: c.achieved_loss,
            value_gap: c.value_gap(),
            grad_norm: c.grad_norm,
            holds: c.holds(),
            rank_profile: c.rank_profile.clone(),
            net: c.net.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GdSection {
    pub params: GdParams,
    /// Sampling radius actually used when overridden by the config.
    pub radius_override: Option<f64>,
    /// Largest block radius found by sampling to keep unit maps within `tau`.
    pub empirical_tau_hat: Option<f64>,
    pub report: ConditionReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RcSection {
    pub params: RcParams,
    pub search: Option<ConditionReport>,
    pub check: Option<ConditionReport>,
}

/// Residual (`r = 1`) and plain descent from matched starting points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShortcutComparison {
    pub residual_ratio: Option<f64>,
    pub plain_ratio: Option<f64>,
    pub lambda_residual: f64,
    pub lambda_plain: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DescentSection {
    pub start_fraction: f64,
    pub start_block_radius: f64,
    pub trace: DescentTrace,
    pub comparison: Option<ShortcutComparison>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub version: String,
    pub command: String,
    pub config: ExperimentConfig,
    pub data: Option<DataSummary>,
    pub certificate: Option<CertificateSummary>,
    pub gd: Option<GdSection>,
    pub rc: Option<RcSection>,
    pub descent: Option<DescentSection>,
    pub violations: usize,
    pub errors: Vec<String>,
    pub passed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_time_ms: Option<f64>,
}

impl RunReport {
    pub fn new(command: &str, config: &ExperimentConfig) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            config: config.clone(),
            data: None,
            certificate: None,
            gd: None,
            rc: None,
            descent: None,
            violations: 0,
            errors: Vec::new(),
            passed: false,
            wall_time_ms: None,
        }
    }

    pub fn finish(&mut self) {
        self.violations = self.gd.as_ref().map_or(0, |g| g.report.violations)
            + self
                .rc
                .as_ref()
                .and_then(|r| r.check.as_ref())
                .map_or(0, |c| c.violations);
        self.passed = self.violations == 0 && self.errors.is_empty();
    }

    pub fn exit_code(&self) -> i32 {
        if !self.errors.is_empty() {
            2
        } else if self.violations > 0 {
            1
        } else {
            0
        }
    }

    pub fn to_json(&self) -> Result<String, LabError> {
        let mut s = serde_json::to_string_pretty(self).map_err(|e| LabError::Json(e.to_string()))?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self, LabError> {
        serde_json::from_str(text).map_err(|e| LabError::Json(e.to_string()))
    }

    /// One row per recorded sample or descent iterate:
    /// `table,index,distance,excess,grad_norm_sq,value,qualifies`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("table,index,distance,excess,grad_norm_sq,value,qualifies\n");
        let opt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:e}"));
        let mut rows = |table: &str, recs: &[SampleRecord]| {
            for r in recs {
                out.push_str(&format!(
                    "{table},{},{:e},{},{},{},{}\n",
                    r.index,
                    r.displacement,
                    opt(r.excess_loss),
                    opt(r.grad_norm_sq),
                    opt(r.value),
                    r.qualifies
                ));
            }
        };
        if let Some(g) = &self.gd {
            rows("gd", &g.report.records);
        }
        if let Some(c) = self.rc.as_ref().and_then(|r| r.check.as_ref()) {
            rows("rc", &c.records);
        }
        if let Some(ds) = &self.descent {
            let t = &ds.trace;
            for (k, (loss, dist)) in t.losses.iter().zip(&t.iterate_dists).enumerate() {
                out.push_str(&format!(
                    "descent,{k},{dist:e},{:e},,{loss:e},{}\n",
                    loss - t.loss_star,
                    t.first_exit.is_none_or(|e| k < e)
                ));
            }
        }
        out
    }
}
