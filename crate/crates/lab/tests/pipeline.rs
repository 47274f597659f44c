use landscape_core::datagen::{fixture_f1, gen_data, DEFAULT_GAP_REL};
use landscape_core::networks::Architecture;
use landscape_core::numkit::seeded_rng;
use landscape_lab::config::{DataSource, DeltaPolicy, TransformPolicy};
use landscape_lab::run::{cmd_full, cmd_minimize, execute, Command};
use landscape_lab::{fixture, ExperimentConfig, LabError, RunReport, Scope};

fn f1_identity() -> ExperimentConfig {
    ExperimentConfig {
        fixture: DataSource::F1,
        transforms: TransformPolicy::Identity,
        samples: 2000,
        rc_samples: 1000,
        ..ExperimentConfig::default()
    }
}

#[test]
fn fixture_round_trip_is_exact() {
    let mut rng = seeded_rng(3);
    let pair = gen_data(3, 5, &mut rng, DEFAULT_GAP_REL, 1000).unwrap();
    let back = fixture::parse(&fixture::to_string(&pair)).unwrap();
    assert_eq!(back, pair);
    let f1 = fixture::parse(&fixture::to_string(&fixture_f1())).unwrap();
    assert_eq!(f1, fixture_f1());
}

#[test]
fn fixture_file_round_trip() {
    let dir = std::env::temp_dir().join(format!("landscape-fixture-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("f1.txt");
    fixture::save(&fixture_f1(), &path).unwrap();
    assert_eq!(fixture::load(&path).unwrap(), fixture_f1());
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn fixture_parse_errors_name_the_problem() {
    let cases = [
        ("", "empty"),
        ("2\n", "header"),
        ("2 2\n1 0\n0 1\n1 0\n", "rows"),
        ("2 2\n1 0\n0 x\n1 0\n0 1\n", "line 3"),
        ("2 2\n1 0 0\n0 1\n1 0\n0 1\n", "line 2"),
    ];
    for (text, needle) in cases {
        let err = fixture::parse(text).unwrap_err();
        assert!(matches!(err, LabError::Fixture(_)), "{text:?}: {err}");
        assert!(err.to_string().contains(needle), "{text:?}: `{err}` lacks `{needle}`");
    }
}

#[test]
fn fixture_comments_and_blank_lines_are_ignored() {
    let text = "# F1\n2 2\n\n1 0\n0 1\n# targets\n2 0\n0 1\n";
    assert_eq!(fixture::parse(text).unwrap(), fixture_f1());
}

#[test]
fn config_parses_keys_and_comments() {
    let cfg = ExperimentConfig::parse(
        "architecture = residual # comment\nd = 3\nl = 3\nr = 2\nseed = 9\ndelta = 0.25\nformat = csv\n",
    )
    .unwrap();
    assert_eq!(cfg.architecture, Architecture::Residual);
    assert_eq!((cfg.d, cfg.l, cfg.r, cfg.seed), (Some(3), 3, Some(2), 9));
    assert_eq!(cfg.delta, DeltaPolicy::Fixed(0.25));
    cfg.validate(Scope::Landscape).unwrap();
}

fn config_error(text: &str, scope: Scope) -> String {
    let err = ExperimentConfig::parse(text)
        .and_then(|c| c.validate(scope))
        .unwrap_err();
    match err {
        LabError::Config { field, .. } => field,
        other => panic!("expected a config error, got {other}"),
    }
}

#[test]
fn config_rejections_name_the_field() {
    assert_eq!(config_error("depth = 2\n", Scope::Minimize), "depth");
    assert_eq!(config_error("l = 2\nl = 3\n", Scope::Minimize), "l");
    assert_eq!(config_error("r = 2\n", Scope::Minimize), "r");
    assert_eq!(config_error("architecture = residual\nslope = 0.3\n", Scope::Minimize), "slope");
    assert_eq!(config_error("architecture = nonlinear\nslope = 1.5\n", Scope::Minimize), "slope");
    assert_eq!(config_error("architecture = nonlinear\nl = 3\n", Scope::Minimize), "l");
    assert_eq!(config_error("d = 2\nm = 4\n", Scope::Landscape), "m");
    assert_eq!(config_error("d = 3\nm = 2\n", Scope::Minimize), "m");
    assert_eq!(config_error("gamma = 1\n", Scope::Landscape), "gamma");
    assert_eq!(config_error("delta = -1\n", Scope::Landscape), "delta");
    assert_eq!(config_error("seed = x\n", Scope::Landscape), "seed");
    assert_eq!(config_error("just text\n", Scope::Landscape), "<file>");
}

#[test]
fn rectangular_linear_minimize_is_allowed() {
    let cfg = ExperimentConfig::parse("d = 2\nm = 5\nl = 3\n").unwrap();
    let rep = cmd_minimize(&cfg).unwrap();
    assert!(rep.passed, "{:?}", rep.errors);
    let cert = rep.certificate.unwrap();
    assert!(cert.value_gap < 1e-10 && cert.predicted_value > 0.0);
}

#[test]
fn f1_full_run_matches_closed_form() {
    let rep = cmd_full(&f1_identity()).unwrap();
    assert!(rep.passed, "{:?}", rep.errors);
    assert_eq!(rep.exit_code(), 0);
    let cert = rep.certificate.as_ref().unwrap();
    assert!(cert.achieved_loss.abs() < 1e-14);
    let gd = rep.gd.as_ref().unwrap();
    assert!((gd.params.lambda - 1.0).abs() < 1e-12);
    assert!((gd.params.tau - 0.5).abs() < 1e-12);
    assert_eq!(gd.report.violations, 0);
    assert_eq!(gd.report.samples_tested, 2000);
    let rc = rep.rc.as_ref().unwrap();
    assert!(rc.params.epsilon > 0.0);
    assert_eq!(rc.check.as_ref().unwrap().violations, 0);
    let ds = rep.descent.as_ref().unwrap();
    assert!(ds.trace.is_monotone());
    assert!(ds.trace.rate.as_ref().unwrap().ratio().unwrap() < 1.0);
}

#[test]
fn json_report_round_trips() {
    let rep = cmd_full(&f1_identity()).unwrap();
    let text = rep.to_json().unwrap();
    let back = RunReport::from_json(&text).unwrap();
    assert_eq!(back.to_json().unwrap(), text);
    assert!(!text.contains("wall_time_ms"));
}

#[test]
fn worker_count_does_not_change_the_report() {
    let cfg = ExperimentConfig {
        architecture: Architecture::Residual,
        d: Some(2),
        l: 3,
        seed: 5,
        samples: 1500,
        rc_samples: 600,
        ..ExperimentConfig::default()
    };
    let one = execute(Command::CheckGd, &cfg, 1).unwrap().to_json().unwrap();
    let many = execute(Command::CheckGd, &cfg, 3).unwrap().to_json().unwrap();
    assert_eq!(one, many);
    let one = execute(Command::CheckRc, &cfg, 1).unwrap().to_json().unwrap();
    let many = execute(Command::CheckRc, &cfg, 4).unwrap().to_json().unwrap();
    assert_eq!(one, many);
}

#[test]
fn different_seeds_give_different_reports() {
    let a = ExperimentConfig { samples: 500, ..ExperimentConfig::default() };
    let b = ExperimentConfig { seed: 1, ..a.clone() };
    assert_ne!(
        execute(Command::CheckGd, &a, 1).unwrap().to_json().unwrap(),
        execute(Command::CheckGd, &b, 1).unwrap().to_json().unwrap()
    );
}

#[test]
fn tiny_radius_override_still_passes_and_is_recorded() {
    let cfg = ExperimentConfig { gd_radius: Some(1e-3), samples: 500, ..f1_identity() };
    let rep = execute(Command::CheckGd, &cfg, 1).unwrap();
    let gd = rep.gd.unwrap();
    assert_eq!(gd.radius_override, Some(1e-3));
    assert_eq!(gd.report.violations, 0);
}

#[test]
fn csv_has_rows_for_every_section() {
    let cfg = ExperimentConfig { format: landscape_lab::Format::Csv, ..f1_identity() };
    let csv = cmd_full(&cfg).unwrap().to_csv();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "table,index,distance,excess,grad_norm_sq,value,qualifies");
    let tables: std::collections::BTreeSet<_> = lines.map(|l| l.split(',').next().unwrap().to_string()).collect();
    assert!(["gd", "rc", "descent"].iter().all(|t| tables.contains(*t)), "{tables:?}");
}
