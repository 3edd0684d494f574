use std::fs;

use heavyball::analysis::{full_diagnostics, DiagnosticsReport, DiagnosticsSettings};
use heavyball::dynamics::Problem;
use heavyball::example_xy::{envelope_constants, ExampleInit};
use heavyball::experiment::{
    self, read_trajectory_csv, write_trajectory_csv, ConfigOverrides, CsvError, ExperimentConfig, Preset,
    CSV_SCHEMA_LINE,
};
use heavyball::ode::IntegratorConfig;

fn config_in(preset: Preset, dir: &std::path::Path) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::defaults(preset);
    cfg.out = dir.to_string_lossy().into_owned();
    cfg
}

#[test]
fn csv_round_trips_with_fixed_header() {
    let run = ExampleInit::reference()
        .heavy_ball()
        .simulate(&IntegratorConfig::new(5.0), false)
        .unwrap();
    let mut buf = Vec::new();
    write_trajectory_csv(&run, 2000, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some(CSV_SCHEMA_LINE));
    assert_eq!(lines.next(), Some("t,x1,x2,v1,v2,F,grad_norm"));

    let table = read_trajectory_csv(text.as_bytes()).unwrap();
    assert_eq!(table.dim, 2);
    assert_eq!(table.rows.len(), 2000);
    assert_eq!(table.time(0), 0.0);
    assert_eq!(table.time(1999), 5.0);
    assert_eq!(table.position(0), &[1.0, -1.0]);
    assert_eq!(table.velocity(0), &[0.1, 0.1]);
    assert!((table.energy(0) - 4.0001).abs() < 1e-12);
    assert!((table.grad_norm(0) - 4.0 * 2f64.sqrt()).abs() < 1e-12);
    // Values survive text formatting exactly.
    for i in (0..2000).step_by(97) {
        let (x, v) = run.phase(table.time(i)).unwrap();
        assert_eq!(table.position(i), x.as_slice());
        assert_eq!(table.velocity(i), v.as_slice());
    }
}

#[test]
fn csv_with_other_schema_version_is_rejected() {
    let text = "# heavyball-trajectory v2\nt,x1,x2,v1,v2,F,grad_norm\n0,1,-1,0,0,4,5\n";
    assert!(matches!(
        read_trajectory_csv(text.as_bytes()),
        Err(CsvError::SchemaMismatch(_))
    ));
}

#[test]
fn diagnostics_report_json_round_trips() {
    let p = Problem::HeavyBall(ExampleInit::reference().heavy_ball());
    let (_, report) = full_diagnostics(&p, &IntegratorConfig::new(20.0), &DiagnosticsSettings::default()).unwrap();
    let json = report.to_json();
    let back = DiagnosticsReport::from_json(&json).unwrap();
    assert_eq!(back, report);
    assert!(DiagnosticsReport::from_json("{\"schema_version\": 1}").is_err());
}

#[test]
fn identical_configs_write_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    for preset in Preset::ALL {
        let cfg = config_in(preset, &dir.path().join(preset.name()));
        let first = experiment::run(&cfg).unwrap();
        let bytes: Vec<Vec<u8>> = first.files.iter().map(|f| fs::read(f).unwrap()).collect();
        let second = experiment::run(&cfg).unwrap();
        assert_eq!(first.files, second.files);
        for (f, before) in second.files.iter().zip(&bytes) {
            assert_eq!(&fs::read(f).unwrap(), before, "{}", f.display());
        }
    }
}

#[test]
fn figure1_writes_both_trajectories_and_splits() {
    let dir = tempfile::tempdir().unwrap();
    let out = experiment::run(&config_in(Preset::Figure1, dir.path())).unwrap();
    assert!(out.passed(), "{:?}", out.failed_checks());
    let names: Vec<_> = out
        .files
        .iter()
        .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
        .collect();
    assert_eq!(names, ["heavy_ball.csv", "gradient_flow.csv", "diagnostics.json"]);
    for f in &out.files[..2] {
        let table = read_trajectory_csv(fs::File::open(f).unwrap()).unwrap();
        assert_eq!(table.rows.len(), 2000);
    }
    let doc: serde_json::Value = serde_json::from_str(&fs::read_to_string(&out.files[2]).unwrap()).unwrap();
    assert_eq!(doc["heavy_ball"]["limit_point"]["classification"], "hyperbola");
    assert_eq!(doc["gradient_flow"]["limit_point"]["classification"], "origin");
}

#[test]
fn claims_preset_rejects_large_epsilon() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config_in(Preset::Claims, dir.path());
    cfg.epsilon = 0.02;
    let err = experiment::run(&cfg).unwrap_err();
    assert_eq!(err.kind(), "config");
    assert!(
        err.to_string()
            .contains("epsilon exceeds γ²/(8a²+8)=0.015625 for a=1, γ=0.5"),
        "{err}"
    );
}

#[test]
fn validate_echoes_envelope_constants() {
    let cfg = ExperimentConfig::defaults(Preset::Figure1);
    let derived = cfg.derived().unwrap();
    let direct = envelope_constants(&cfg.example_init()).unwrap();
    assert_eq!(derived.envelopes, Some(direct));
}

#[test]
fn config_file_flags_and_env_resolve_in_order() {
    let file =
        ConfigOverrides::parse("preset = \"claims\"\ngamma = 0.8\nout = \"from-file\"\nhorizon = 7.0\n").unwrap();
    let flags = ConfigOverrides {
        gamma: Some(0.6),
        ..Default::default()
    };
    let cfg = ExperimentConfig::resolve(&file, Some("from-env".into()), &flags);
    assert_eq!(cfg.preset, Preset::Claims);
    assert_eq!(cfg.gamma, 0.6);
    assert_eq!(cfg.horizon, 7.0);
    assert_eq!(cfg.out, "from-env");
    assert_eq!(cfg.objective, "xy");
    let again = ExperimentConfig::parse(&cfg.to_canonical()).unwrap();
    assert_eq!(again, cfg);
}

#[test]
fn unknown_config_keys_are_errors() {
    assert!(ConfigOverrides::parse("gama = 0.5\n").is_err());
}
