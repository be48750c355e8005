use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

use sfwm_cli::config::{load_config, EvalMode, ExperimentConfig, Overrides};
use sfwm_cli::output::{read_rows_csv, rounded};
use sfwm_core::montecarlo::{sweep_power, SweepMethod};

fn sfwm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sfwm")).args(args).output().expect("binary runs")
}

fn error_record(out: &Output) -> Value {
    let stderr = String::from_utf8_lossy(&out.stderr);
    let line = stderr.lines().last().expect("error record on stderr");
    serde_json::from_str(line).expect("error record is JSON")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.display().to_string()
}

#[test]
fn preset_fills_reference_values() {
    let overrides = Overrides { preset: Some("paper-fig3".into()), ..Default::default() };
    let cfg = load_config(None, &overrides).unwrap().config;
    assert_eq!(cfg.waveguide.length_m, 96e-6);
    let n_g = cfg.waveguide.group_index_profile.group_index_at(cfg.pump.wavelength_nm).unwrap();
    assert_eq!(n_g, 30.0);
    assert_eq!(cfg.pump.rep_rate_hz, 5e6);
    for ch in [cfg.channels.signal, cfg.channels.idler] {
        assert_eq!(ch.total_loss_db, 21.8);
        assert_eq!(ch.detuning_nm, 4.8);
    }
}

#[test]
fn empty_file_is_a_parse_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = write(dir.path(), "empty.json", "");
    let out = sfwm(&["simulate", "--config", &path]);
    assert_eq!(out.status.code(), Some(2));
    let rec = error_record(&out);
    assert_eq!(rec["error"]["kind"], "parse");
    assert_eq!(rec["error"]["line"], 1);
}

#[test]
fn malformed_json_reports_position() {
    let dir = tempfile::tempdir().unwrap();
    let path = write(dir.path(), "bad.json", "{\n  \"run\": {\"seed\": 1,}\n}");
    let out = sfwm(&["simulate", "--config", &path]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_record(&out)["error"]["line"], 2);
}

#[test]
fn negative_loss_names_total_loss() {
    let dir = tempfile::tempdir().unwrap();
    let path = write(dir.path(), "loss.json", r#"{"channels": {"signal": {"total_loss_db": -3}}}"#);
    let out = sfwm(&["simulate", "--config", &path]);
    assert_eq!(out.status.code(), Some(2));
    let rec = error_record(&out);
    assert_eq!(rec["error"]["kind"], "range");
    assert!(rec["error"]["field"].as_str().unwrap().contains("total_loss"), "{rec}");
}

#[test]
fn unknown_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = write(dir.path(), "extra.json", r#"{"waveguide": {"lenght_m": 1e-4}}"#);
    let out = sfwm(&["simulate", "--config", &path]);
    assert_eq!(out.status.code(), Some(2));
    let rec = error_record(&out);
    assert_eq!(rec["error"]["kind"], "schema");
    assert!(rec["error"]["message"].as_str().unwrap().contains("lenght_m"));
}

#[test]
fn zero_pulses_is_a_validation_error() {
    let out = sfwm(&["simulate", "--preset", "paper-counting", "--pulses", "0", "--mode", "mc"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_record(&out)["error"]["field"], "run.n_pulses");
}

#[test]
fn missing_config_file_is_an_io_error() {
    let out = sfwm(&["simulate", "--config", "/nonexistent/config.json"]);
    assert_eq!(out.status.code(), Some(4));
    assert_eq!(error_record(&out)["error"]["kind"], "io");
}

#[test]
fn unwritable_output_is_an_io_error() {
    let out = sfwm(&["simulate", "--out", "/nonexistent/dir/out.csv"]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn coarse_sweep_peaks_at_grid_point_nearest_reference_power() {
    let out = sfwm(&["sweep", "--preset", "paper-fig3", "--powers", "0.05:0.60:0.05", "--mode", "analytic"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = read_rows_csv(&out.stdout[..]).unwrap();
    assert_eq!(rows.len(), 12);
    let peak = rows.iter().max_by(|a, b| a.car.unwrap().total_cmp(&b.car.unwrap())).unwrap();
    assert!((peak.power_w - 0.23).abs() <= 0.03, "peak at {}", peak.power_w);
    assert_eq!(peak.power_w, 0.25);
}

#[test]
fn fine_sweep_peaks_at_reference_power() {
    let out = sfwm(&["sweep", "--powers", "0.05:0.60:0.01"]);
    let rows = read_rows_csv(&out.stdout[..]).unwrap();
    assert_eq!(rows.len(), 56);
    let peak = rows.iter().max_by(|a, b| a.car.unwrap().total_cmp(&b.car.unwrap())).unwrap();
    assert_eq!(peak.power_w, 0.23);
}

#[test]
fn calibrate_mu_anchor_gives_square_root_law() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("cal.json");
    let out = sfwm(&["calibrate", "--targets", "mu=0.006@0.23W", "--out", out_path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let doc: Value = serde_json::from_str(&std::fs::read_to_string(&out_path).unwrap()).unwrap();
    let gl = doc["calibration"]["gamma_eff_length"].as_f64().unwrap();
    assert!((gl - 0.337).abs() <= 0.001, "{gl}");
    assert!(doc["metadata"]["config_sha256"].is_string());

    // The calibrated configuration reloads as an ordinary config file.
    let cfg_path = write(dir.path(), "calibrated.json", &doc["config"].to_string());
    let loaded = load_config(Some(Path::new(&cfg_path)), &Overrides::default()).unwrap();
    assert!(loaded.provenance.is_empty());
    let reparsed: ExperimentConfig = serde_json::from_value(doc["config"].clone()).unwrap();
    assert_eq!(loaded.config, reparsed);
}

#[test]
fn full_calibration_reproduces_frozen_preset() {
    let out = sfwm(&[
        "calibrate",
        "--preset",
        "paper-counting",
        "--targets",
        "mu=0.006@0.23W,car=12.8@0.23W,peak=0.23W,deviation=0.102@0.42W",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let doc: Value = serde_json::from_slice(&out.stdout).unwrap();
    let cal = &doc["calibration"];
    let close = |key: &str, frozen: f64| {
        let v = cal[key].as_f64().unwrap();
        assert!((v - frozen).abs() <= 2e-3 * frozen, "{key}: {v} vs {frozen}");
    };
    close("tpa_strength", sfwm_core::presets::FIG3_TPA_STRENGTH);
    close("noise_per_gate", sfwm_core::presets::FIG3_DARK_NOISE);
    close("leakage_per_watt", sfwm_core::presets::FIG3_LEAKAGE_PER_WATT);
}

#[test]
fn unreachable_anchor_is_a_numerical_error() {
    let out = sfwm(&["calibrate", "--targets", "car=500@0.23W"]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(error_record(&out)["error"]["kind"], "numerical");
}

#[test]
fn fca_peak_with_rolloff_reports_failure() {
    let out = sfwm(&[
        "calibrate",
        "--targets",
        "car=12.8@0.23W,peak=0.23W,deviation=0.1@0.42W",
        "--peak-via",
        "fca",
    ]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn csv_round_trips_with_metadata_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let csv_path = dir.path().join("sweep.csv");
    let out = sfwm(&[
        "sweep",
        "--powers",
        "0.1:0.5:0.1",
        "--seed",
        "42",
        "--pulses",
        "2000000",
        "--mode",
        "both",
        "--out",
        csv_path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));

    let overrides = Overrides {
        seed: Some(42),
        pulses: Some(2_000_000),
        powers: Some("0.1:0.5:0.1".parse().unwrap()),
        mode: Some(EvalMode::Both),
        ..Default::default()
    };
    let loaded = load_config(None, &overrides).unwrap();
    let powers = loaded.config.sweep.powers.points();
    let cfg = loaded.config.run_config();

    for (suffix, method) in [("analytic", SweepMethod::Analytic), ("mc", SweepMethod::MonteCarlo)] {
        let file = dir.path().join(format!("sweep.{suffix}.csv"));
        let text = std::fs::read_to_string(&file).unwrap();
        assert!(text.starts_with("power_w,mu,c_raw,a,c_net,car,car_sigma\n"));
        let from_file = read_rows_csv(text.as_bytes()).unwrap();
        let in_memory: Vec<_> = sweep_power(&cfg, &powers, method)
            .unwrap()
            .into_iter()
            .map(|p| rounded(&p.outcome.unwrap()))
            .collect();
        assert_eq!(from_file, in_memory, "{suffix}");
    }

    let meta: Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("sweep.meta.json")).unwrap()).unwrap();
    assert_eq!(meta["seed"], 42);
    assert_eq!(meta["config_sha256"], loaded.config.hash());
    assert_eq!(meta["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(meta["files"].as_array().unwrap().len(), 2);
    let provenance = meta["provenance"].as_array().unwrap();
    let paths: Vec<&str> = provenance.iter().map(|p| p["path"].as_str().unwrap()).collect();
    assert!(paths.contains(&"waveguide.tpa_strength"));
    assert!(!paths.contains(&"run.seed"));
}

#[test]
fn json_output_embeds_metadata() {
    let out = sfwm(&["simulate", "--preset", "paper-counting", "--format", "json", "--mode", "both"]);
    assert_eq!(out.status.code(), Some(0));
    let doc: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(doc["metadata"]["preset"], "paper-counting");
    assert_eq!(doc["metadata"]["command"], "simulate");
    let analytic = &doc["tables"]["analytic"][0];
    assert!((analytic["c_net"].as_f64().unwrap() - 393.0).abs() <= 5.0);
    let mc = &doc["tables"]["mc"][0];
    let sigma = (mc["c_raw"].as_f64().unwrap() + mc["a"].as_f64().unwrap()).sqrt();
    assert!((mc["c_net"].as_f64().unwrap() - 393.0).abs() <= 3.0 * sigma);
}

#[test]
fn simulate_is_reproducible() {
    let args = ["simulate", "--preset", "paper-counting", "--mode", "mc", "--seed", "3", "--pulses", "3000000"];
    let a = sfwm(&args);
    let b = sfwm(&args);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn multiplex_table_lists_each_unit_count() {
    let out = sfwm(&["multiplex"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("n_units,herald_click,herald_success,p_single,p_multi_given_herald"));
    let rows: Vec<Vec<f64>> =
        lines.map(|l| l.split(',').map(|t| t.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 16);
    assert!(rows.windows(2).all(|w| w[1][2] > w[0][2]));
}
