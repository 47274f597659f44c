//! Subcommands. Every random draw comes from a stream derived from the
//! configured seed, so a command's report depends only on its config.

use std::thread;

use landscape_core::datagen::{
    fixture_f1, gen_data, spectral_summary, validate_assumptions, DataPair, DEFAULT_GAP_REL, VALIDATION_TOL,
};
use landscape_core::descent::{
    default_step, displaced_start, neighborhood_block_radius, run_gd_monotone, DEFAULT_MAX_HALVINGS,
};
use landscape_core::landscape::{
    check_gd_chunk, check_rc_chunk, empirical_tau_hat, epsilon_search, gd_params, rc_params, ConditionKind,
    ConditionReport, FactorGeometry, GdParams, RcParams, SweepConfig,
};
use landscape_core::minimizers::{
    linear_minimizer, nonlinear_minimizer, residual_minimizer, MinimizerCertificate, Transforms,
};
use landscape_core::networks::{Activation, Architecture, Net};
use landscape_core::numkit::{derive_seed, seeded_rng};

use crate::config::{DataSource, DeltaPolicy, ExperimentConfig, Format, Scope, TransformPolicy};
use crate::report::{
    CertificateSummary, DataSummary, DescentSection, GdSection, RcSection, RunReport, ShortcutComparison,
};
use crate::{fixture, LabError};

const STREAM_DATA: u64 = 1;
const STREAM_MINIMIZER: u64 = 2;
const STREAM_GD: u64 = 3;
const STREAM_RC_SEARCH: u64 = 4;
const STREAM_RC_CHECK: u64 = 5;
const STREAM_DESCENT: u64 = 6;
const STREAM_TAU_HAT: u64 = 7;

const GEN_RETRIES: usize = 1000;
const TAU_HAT_SEARCH_BUDGET: usize = 200;
const TAU_HAT_SAMPLES: usize = 200;
const TAU_HAT_LEVELS: usize = 30;

/// Environment variable holding the sweep worker count.
pub const WORKERS_ENV: &str = "LANDSCAPE_WORKERS";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Gen,
    Minimize,
    CheckGd,
    CheckRc,
    Descend,
    Full,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Gen => "gen",
            Command::Minimize => "minimize",
            Command::CheckGd => "check-gd",
            Command::CheckRc => "check-rc",
            Command::Descend => "descend",
            Command::Full => "full",
        }
    }

    pub fn scope(self) -> Scope {
        match self {
            Command::Gen => Scope::Generate,
            Command::Minimize => Scope::Minimize,
            _ => Scope::Landscape,
        }
    }
}

/// Worker count from [`WORKERS_ENV`], else the available parallelism.
pub fn workers() -> usize {
    std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| thread::available_parallelism().map_or(1, |n| n.get()))
}

fn chunked<F>(sweep: &SweepConfig, workers: usize, empty: ConditionReport, f: F) -> Result<ConditionReport, LabError>
where
    F: Fn(usize) -> landscape_core::Result<ConditionReport> + Sync,
{
    let chunks = sweep.chunks();
    let workers = workers.clamp(1, chunks.max(1));
    let parts: Vec<landscape_core::Result<ConditionReport>> = thread::scope(|s| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                let f = &f;
                s.spawn(move || (w..chunks).step_by(workers).map(f).collect::<Vec<_>>())
            })
            .collect();
        handles.into_iter().flat_map(|h| h.join().expect("sweep worker panicked")).collect()
    });
    let mut report = empty;
    for p in parts {
        report = report.merge(p?);
    }
    Ok(report)
}

/// Gradient-dominance sweep with chunks spread over `workers` threads.
pub fn par_check_gd(
    net_star: &Net,
    data: &DataPair,
    params: &GdParams,
    sweep: &SweepConfig,
    workers: usize,
) -> Result<ConditionReport, LabError> {
    let empty = ConditionReport::empty(ConditionKind::GradientDominance, params.architecture, params.radius);
    chunked(sweep, workers, empty, |c| check_gd_chunk(net_star, data, params, sweep, c))
}

/// Regularity re-check with chunks spread over `workers` threads.
pub fn par_check_rc(
    net_star: &Net,
    data: &DataPair,
    rc: &RcParams,
    sweep: &SweepConfig,
    workers: usize,
) -> Result<ConditionReport, LabError> {
    let geom = FactorGeometry::new(net_star.factor(data)?);
    let empty = ConditionReport::empty(ConditionKind::Regularity, rc.architecture, rc.epsilon);
    chunked(sweep, workers, empty, |c| check_rc_chunk(net_star, data, rc, &geom, sweep, c))
}

/// The data pair named by the config, with a short description of its source.
pub fn load_data(cfg: &ExperimentConfig) -> Result<(DataPair, String), LabError> {
    let (pair, source) = match &cfg.fixture {
        DataSource::Generated => {
            let d = cfg.d.unwrap_or(2);
            let m = cfg.m.unwrap_or(d);
            let mut rng = seeded_rng(derive_seed(cfg.seed, STREAM_DATA));
            (gen_data(d, m, &mut rng, DEFAULT_GAP_REL, GEN_RETRIES)?, "generated".to_string())
        }
        DataSource::F1 => (fixture_f1(), "f1".to_string()),
        DataSource::File(p) => (fixture::load(p)?, format!("file:{}", p.display())),
    };
    for (field, want, got) in [("d", cfg.d, pair.d()), ("m", cfg.m, pair.m())] {
        if want.is_some_and(|w| w != got) {
            return Err(LabError::Config {
                field: field.into(),
                message: format!("fixture has {field} = {got}, config asks for {}", want.unwrap()),
            });
        }
    }
    let pair = if cfg.y_scale != 1.0 { pair.with_scaled_y(cfg.y_scale) } else { pair };
    Ok((pair, source))
}

/// `gen`: the fixture selected by the config.
pub fn cmd_gen(cfg: &ExperimentConfig) -> Result<DataPair, LabError> {
    cfg.validate(Scope::Generate)?;
    Ok(load_data(cfg)?.0)
}

fn transforms(cfg: &ExperimentConfig) -> Transforms {
    match cfg.transforms {
        TransformPolicy::Identity => Transforms::Identity,
        TransformPolicy::Random => Transforms::Random {
            cond_max: cfg.cond_max,
        },
    }
}

pub fn build_certificate(cfg: &ExperimentConfig, data: &DataPair) -> Result<MinimizerCertificate, LabError> {
    let mut rng = seeded_rng(derive_seed(cfg.seed, STREAM_MINIMIZER));
    let t = transforms(cfg);
    Ok(match cfg.architecture {
        Architecture::Linear => linear_minimizer(data, cfg.l, &t, &mut rng)?,
        Architecture::Residual => residual_minimizer(data, cfg.l, cfg.shortcut_depth(), &t, &t, &mut rng)?,
        Architecture::Nonlinear => {
            nonlinear_minimizer(data, Activation::new(cfg.activation_slope())?, &t, &mut rng)?
        }
    })
}

fn gd_section(cfg: &ExperimentConfig, net: &Net, data: &DataPair, workers: usize) -> Result<GdSection, LabError> {
    let params = gd_params(net, data, TAU_HAT_SEARCH_BUDGET)?;
    let mut sampling = params.clone();
    if let Some(r) = cfg.gd_radius {
        sampling.radius = r;
    }
    let sweep = SweepConfig {
        keep_records: cfg.format == Format::Csv,
        ..SweepConfig::new(cfg.samples, derive_seed(cfg.seed, STREAM_GD))
    };
    let mut report = par_check_gd(net, data, &sampling, &sweep, workers)?;
    if cfg.gd_radius.is_some_and(|r| r > params.radius) {
        report
            .warnings
            .push("sampling radius exceeds the analytic radius; violations there are not counterexamples".into());
    }
    let empirical_tau_hat = match net {
        Net::Residual(n) => {
            let mut rng = seeded_rng(derive_seed(cfg.seed, STREAM_TAU_HAT));
            Some(empirical_tau_hat(n, params.tau, TAU_HAT_SAMPLES, TAU_HAT_LEVELS, &mut rng)?)
        }
        _ => None,
    };
    Ok(GdSection {
        params,
        radius_override: cfg.gd_radius,
        empirical_tau_hat,
        report,
    })
}

fn rc_section(
    cfg: &ExperimentConfig,
    net: &Net,
    data: &DataPair,
    workers: usize,
    errors: &mut Vec<String>,
) -> Result<RcSection, LabError> {
    let delta = match cfg.delta {
        DeltaPolicy::EtaMin => None,
        DeltaPolicy::Fixed(v) => Some(v),
    };
    let base = rc_params(net, data, cfg.gamma, delta)?;
    let (params, search) = match cfg.epsilon {
        Some(eps) => (RcParams { epsilon: eps, ..base }, None),
        None => {
            let (p, rep) = epsilon_search(
                net,
                data,
                &base,
                cfg.rc_samples,
                derive_seed(cfg.seed, STREAM_RC_SEARCH),
                cfg.eps_hi,
                cfg.eps_levels,
            )?;
            (p, Some(rep))
        }
    };
    let check = if params.epsilon > 0.0 {
        let sweep = SweepConfig {
            keep_records: cfg.format == Format::Csv,
            ..SweepConfig::new(cfg.rc_samples, derive_seed(cfg.seed, STREAM_RC_CHECK))
        };
        Some(par_check_rc(net, data, &params, &sweep, workers)?)
    } else {
        errors.push("regularity: no positive radius certified".into());
        None
    };
    Ok(RcSection { params, search, check })
}

fn descent_section(cfg: &ExperimentConfig, net: &Net, data: &DataPair) -> Result<DescentSection, LabError> {
    let params = gd_params(net, data, TAU_HAT_SEARCH_BUDGET)?;
    let mut rng = seeded_rng(derive_seed(cfg.seed, STREAM_DESCENT));
    let start = displaced_start(net, data, &params, cfg.descent_start, &mut rng)?;
    let step = match cfg.step {
        Some(s) => s,
        None => default_step(net, data)?,
    };
    let trace = run_gd_monotone(&start, net, data, step, cfg.descent_iters, Some(&params), DEFAULT_MAX_HALVINGS)?;
    let comparison = match (net, &start) {
        (Net::Residual(res), Net::Residual(res0)) if res.shortcut_depth() == 1 => {
            let plain = Net::Linear(res.as_linear());
            let plain0 = Net::Linear(res0.as_linear());
            let plain_params = gd_params(&plain, data, TAU_HAT_SEARCH_BUDGET)?;
            let plain_trace =
                run_gd_monotone(&plain0, &plain, data, step, cfg.descent_iters, None, DEFAULT_MAX_HALVINGS)?;
            Some(ShortcutComparison {
                residual_ratio: trace.fitted_ratio(),
                plain_ratio: plain_trace.fitted_ratio(),
                lambda_residual: params.lambda,
                lambda_plain: plain_params.lambda,
            })
        }
        _ => None,
    };
    Ok(DescentSection {
        start_fraction: cfg.descent_start,
        start_block_radius: cfg.descent_start * neighborhood_block_radius(&params, data),
        trace,
        comparison,
    })
}

fn stage<T>(report: &mut RunReport, what: &str, r: Result<T, LabError>) -> Option<T> {
    match r {
        Ok(v) => Some(v),
        Err(e) => {
            report.errors.push(format!("{what}: {e}"));
            None
        }
    }
}

/// Runs `command` (anything but `gen`) and collects its report. Stage
/// failures become report errors; config errors are returned.
pub fn execute(command: Command, cfg: &ExperimentConfig, workers: usize) -> Result<RunReport, LabError> {
    cfg.validate(command.scope())?;
    let mut report = RunReport::new(command.name(), cfg);
    let Some((data, source)) = stage(&mut report, "data", load_data(cfg)) else {
        report.finish();
        return Ok(report);
    };
    let validation = validate_assumptions(&data, VALIDATION_TOL);
    if !validation.passed() {
        report.errors.push("data: standing assumptions fail".into());
    }
    if command.scope() == Scope::Landscape && !data.is_square() {
        return Err(LabError::Config {
            field: "m".into(),
            message: "this command needs m = d".into(),
        });
    }
    let optimal_value = spectral_summary(&data).ok().map(|s| s.optimal_value);
    report.data = Some(DataSummary {
        source,
        d: data.d(),
        m: data.m(),
        validation,
        optimal_value,
    });
    let Some(cert) = stage(&mut report, "minimizer", build_certificate(cfg, &data)) else {
        report.finish();
        return Ok(report);
    };
    if !cert.holds() {
        report.errors.push("minimizer: certificate does not hold".into());
    }
    report.certificate = Some(CertificateSummary::from(&cert));
    let net = &cert.net;
    if matches!(command, Command::CheckGd | Command::Full) {
        report.gd = stage(&mut report, "gradient dominance", gd_section(cfg, net, &data, workers));
    }
    if matches!(command, Command::CheckRc | Command::Full) {
        let mut errs = Vec::new();
        report.rc = stage(&mut report, "regularity", rc_section(cfg, net, &data, workers, &mut errs));
        report.errors.extend(errs);
    }
    if matches!(command, Command::Descend | Command::Full) {
        report.descent = stage(&mut report, "descent", descent_section(cfg, net, &data));
    }
    report.finish();
    Ok(report)
}

pub fn cmd_minimize(cfg: &ExperimentConfig) -> Result<RunReport, LabError> {
    execute(Command::Minimize, cfg, workers())
}

pub fn cmd_check_gd(cfg: &ExperimentConfig) -> Result<RunReport, LabError> {
    execute(Command::CheckGd, cfg, workers())
}

pub fn cmd_check_rc(cfg: &ExperimentConfig) -> Result<RunReport, LabError> {
    execute(Command::CheckRc, cfg, workers())
}

pub fn cmd_descend(cfg: &ExperimentConfig) -> Result<RunReport, LabError> {
    execute(Command::Descend, cfg, workers())
}

pub fn cmd_full(cfg: &ExperimentConfig) -> Result<RunReport, LabError> {
    execute(Command::Full, cfg, workers())
}
