use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use sfwm_core::calibration::{calibrate, CalibrationTargets, PeakMechanism};
use sfwm_core::montecarlo::{evaluate, sweep_power, SweepMethod};
use sfwm_core::multiplexing::{
    any_herald_probability, heralded_output_stats, MultiplexSpec,
};
use sfwm_core::pair_statistics::{channel_transmittance, click_probability};

use crate::config::{load_config, EvalMode, LoadedConfig, OutputFormat, Overrides, PowerRange};
use crate::error::CliError;
use crate::output::{
    format_sig, round_sig, sidecar_path, suffixed_path, table_json, write_file, write_json,
    write_table_csv, FailedPoint, Metadata, TableRow,
};

#[derive(Debug, Parser)]
#[command(name = "sfwm", version, about = "Slow-light SFWM photon-pair source simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Counts at the configured pump power.
    Simulate(CommonArgs),
    /// Counts over a grid of pump powers.
    Sweep(CommonArgs),
    /// Herald success and output statistics for N multiplexed sources.
    Multiplex(CommonArgs),
    /// Solve model parameters from measured anchors and write a calibration file.
    Calibrate(CalibrateArgs),
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// JSON configuration file; missing keys come from the preset.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Base preset (paper-counting, paper-fig3).
    #[arg(long, value_name = "NAME")]
    pub preset: Option<String>,
    #[arg(long, value_name = "U64")]
    pub seed: Option<u64>,
    /// Number of gated pulses per acquisition.
    #[arg(long, value_name = "N")]
    pub pulses: Option<u64>,
    #[arg(long, value_enum)]
    pub mode: Option<EvalMode>,
    /// Pump peak-power grid in watts, endpoints inclusive.
    #[arg(long, value_name = "START:STOP:STEP")]
    pub powers: Option<PowerRange>,
    /// Output file; stdout when absent.
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<OutputFormat>,
}

impl CommonArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            preset: self.preset.clone(),
            seed: self.seed,
            pulses: self.pulses,
            powers: self.powers,
            format: self.format,
            mode: self.mode,
        }
    }

    fn load(&self) -> Result<LoadedConfig, CliError> {
        load_config(self.config.as_deref(), &self.overrides())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PeakVia {
    Leakage,
    Fca,
}

#[derive(Debug, Clone, Args)]
pub struct CalibrateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Anchors, e.g. `mu=0.006@0.23W,car=12.8@0.23W,peak=0.23W,deviation=0.10@0.42W`.
    #[arg(long, value_name = "LIST")]
    pub targets: String,
    /// Parameter that places the CAR maximum.
    #[arg(long, value_enum, default_value = "leakage")]
    pub peak_via: PeakVia,
}

/// Parses `name=value[@power]` anchors separated by commas.
pub fn parse_targets(text: &str) -> Result<CalibrationTargets, CliError> {
    let bad = |item: &str, why: &str| CliError::range("targets", format!("`{item}`: {why}"));
    let number = |item: &str, t: &str| -> Result<f64, CliError> {
        let t = t.trim();
        let (t, scale) = match t.strip_suffix('%') {
            Some(p) => (p, 0.01),
            None => (t.trim_end_matches(['W', 'w']), 1.0),
        };
        t.trim().parse::<f64>().map(|v| v * scale).map_err(|_| bad(item, "not a number"))
    };
    let mut targets = CalibrationTargets::default();
    for item in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let (key, rest) = item.split_once('=').ok_or_else(|| bad(item, "expected name=value"))?;
        let (value, power) = match rest.split_once('@') {
            Some((v, p)) => (number(item, v)?, Some(number(item, p)?)),
            None => (number(item, rest)?, None),
        };
        let need_power = || power.ok_or_else(|| bad(item, "needs @POWER"));
        match key.trim() {
            "mu" => targets.mu_at = Some((value, need_power()?)),
            "car" => targets.car_at = Some((value, need_power()?)),
            "deviation" => targets.deviation_at = Some((value, need_power()?)),
            "peak" => targets.car_peak_w = Some(value),
            other => return Err(bad(item, &format!("unknown anchor `{other}` (mu, car, peak, deviation)"))),
        }
    }
    if targets == CalibrationTargets::default() {
        return Err(CliError::range("targets", "no anchors given"));
    }
    Ok(targets)
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Simulate(args) => simulate(args),
        Command::Sweep(args) => sweep(args),
        Command::Multiplex(args) => multiplex(args),
        Command::Calibrate(args) => calibrate_cmd(args),
    }
}

fn log(line: &str) {
    eprintln!("sfwm: {line}");
}

fn methods(mode: EvalMode) -> Vec<(&'static str, SweepMethod)> {
    match mode {
        EvalMode::Analytic => vec![("analytic", SweepMethod::Analytic)],
        EvalMode::Mc => vec![("mc", SweepMethod::MonteCarlo)],
        EvalMode::Both => vec![("analytic", SweepMethod::Analytic), ("mc", SweepMethod::MonteCarlo)],
    }
}

/// A named result table in both output encodings.
struct Table {
    name: String,
    csv: Vec<u8>,
    json: Value,
}

impl Table {
    fn counts(name: &str, rows: &[TableRow]) -> Result<Self, CliError> {
        let mut csv = Vec::new();
        write_table_csv(&mut csv, rows).map_err(|e| CliError::Numerical(e.to_string()))?;
        Ok(Self { name: name.to_string(), csv, json: table_json(rows) })
    }
}

fn emit(tables: &[Table], meta: &mut Metadata, out: Option<&Path>, format: OutputFormat) -> Result<(), CliError> {
    let document = |meta: &Metadata| {
        let body: serde_json::Map<String, Value> =
            tables.iter().map(|t| (t.name.clone(), t.json.clone())).collect();
        json!({ "metadata": meta, "tables": body })
    };
    match (out, format) {
        (Some(path), OutputFormat::Json) => {
            meta.files = vec![path.display().to_string()];
            write_json(path, &document(meta))?;
            log(&format!("wrote {}", path.display()));
        }
        (Some(path), OutputFormat::Csv) => {
            let paths: Vec<PathBuf> = if tables.len() == 1 {
                vec![path.to_path_buf()]
            } else {
                tables.iter().map(|t| suffixed_path(path, &t.name)).collect()
            };
            for (t, p) in tables.iter().zip(&paths) {
                write_file(p, &t.csv)?;
                log(&format!("wrote {}", p.display()));
            }
            meta.files = paths.iter().map(|p| p.display().to_string()).collect();
            let side = sidecar_path(path);
            write_json(&side, &serde_json::to_value(&*meta).expect("serializable"))?;
            log(&format!("wrote {}", side.display()));
        }
        (None, OutputFormat::Json) => {
            let text = serde_json::to_string_pretty(&document(meta)).expect("serializable");
            println!("{text}");
        }
        (None, OutputFormat::Csv) => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            let io = |e: std::io::Error| CliError::io(Path::new("<stdout>"), e);
            for (k, t) in tables.iter().enumerate() {
                if tables.len() > 1 {
                    if k > 0 {
                        writeln!(lock).map_err(io)?;
                    }
                    writeln!(lock, "# {}", t.name).map_err(io)?;
                }
                lock.write_all(&t.csv).map_err(io)?;
            }
        }
    }
    Ok(())
}

fn announce(command: &str, loaded: &LoadedConfig, meta: &Metadata) {
    let defaulted = loaded.provenance.len();
    log(&format!(
        "{command}: preset {}, seed {}, config sha256 {}, {defaulted} values from preset",
        meta.preset,
        meta.seed,
        &meta.config_sha256[..12]
    ));
}

fn simulate(args: &CommonArgs) -> Result<(), CliError> {
    let loaded = args.load()?;
    let cfg = loaded.config.run_config();
    let mut meta = Metadata::new("simulate", &loaded);
    announce("simulate", &loaded, &meta);
    let mut tables = Vec::new();
    for (name, method) in methods(loaded.config.output.mode) {
        let row = evaluate(&cfg, method)?;
        tables.push(Table::counts(name, &[TableRow::Ok(row)])?);
    }
    emit(&tables, &mut meta, args.out.as_deref(), loaded.config.output.format)
}

fn sweep(args: &CommonArgs) -> Result<(), CliError> {
    let loaded = args.load()?;
    let cfg = loaded.config.run_config();
    let powers = loaded.config.sweep.powers.points();
    let mut meta = Metadata::new("sweep", &loaded);
    announce("sweep", &loaded, &meta);
    log(&format!("{} powers from {} to {} W", powers.len(), powers[0], powers[powers.len() - 1]));

    let mut tables = Vec::new();
    let mut first_error = None;
    let mut successes = 0;
    for (name, method) in methods(loaded.config.output.mode) {
        let mut rows = Vec::with_capacity(powers.len());
        for point in sweep_power(&cfg, &powers, method)? {
            match point.outcome {
                Ok(row) => {
                    successes += 1;
                    rows.push(TableRow::Ok(row));
                }
                Err(err) => {
                    log(&format!("{name}: point {} W failed: {err}", point.power_w));
                    meta.failed_points.push(FailedPoint {
                        table: name.to_string(),
                        power_w: point.power_w,
                        error: err.to_string(),
                    });
                    rows.push(TableRow::Failed { power_w: point.power_w });
                    first_error.get_or_insert(err);
                }
            }
        }
        tables.push(Table::counts(name, &rows)?);
    }
    if successes == 0 {
        if let Some(err) = first_error {
            return Err(err.into());
        }
    }
    emit(&tables, &mut meta, args.out.as_deref(), loaded.config.output.format)
}

#[derive(Serialize)]
struct MultiplexRow {
    n_units: u32,
    herald_click: f64,
    herald_success: f64,
    p_single: f64,
    p_multi_given_herald: f64,
}

const MULTIPLEX_HEADER: [&str; 5] = ["n_units", "herald_click", "herald_success", "p_single", "p_multi_given_herald"];

fn multiplex(args: &CommonArgs) -> Result<(), CliError> {
    let loaded = args.load()?;
    let spec = loaded.config.multiplex;
    let mut meta = Metadata::new("multiplex", &loaded);
    announce("multiplex", &loaded, &meta);

    let eta = channel_transmittance(&spec.herald_channel)?;
    let p_h = click_probability(&spec.model()?, eta, spec.herald_channel.noise_per_gate);
    let mut rows = Vec::new();
    for n in 1..=spec.n_units {
        let unit = MultiplexSpec { n_units: n, ..spec };
        let stats = heralded_output_stats(&unit)?;
        rows.push(MultiplexRow {
            n_units: n,
            herald_click: round_sig(p_h),
            herald_success: round_sig(any_herald_probability(p_h, n)),
            p_single: round_sig(stats.p_single),
            p_multi_given_herald: round_sig(stats.p_multi_given_herald),
        });
    }
    let mut csv_buf = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut csv_buf);
        let err = |e: csv::Error| CliError::Numerical(e.to_string());
        w.write_record(MULTIPLEX_HEADER).map_err(err)?;
        for r in &rows {
            w.write_record([
                r.n_units.to_string(),
                format_sig(r.herald_click),
                format_sig(r.herald_success),
                format_sig(r.p_single),
                format_sig(r.p_multi_given_herald),
            ])
            .map_err(err)?;
        }
        w.flush().map_err(|e| CliError::io(Path::new("<buffer>"), e))?;
    }
    let table = Table {
        name: "multiplex".into(),
        csv: csv_buf,
        json: serde_json::to_value(&rows).expect("serializable"),
    };
    emit(&[table], &mut meta, args.out.as_deref(), loaded.config.output.format)
}

fn calibrate_cmd(args: &CalibrateArgs) -> Result<(), CliError> {
    let targets = parse_targets(&args.targets)?;
    let loaded = args.common.load()?;
    let mechanism = match args.peak_via {
        PeakVia::Leakage => PeakMechanism::Leakage,
        PeakVia::Fca => PeakMechanism::Fca,
    };
    let mut meta = Metadata::new("calibrate", &loaded);
    announce("calibrate", &loaded, &meta);
    let cal = calibrate(&loaded.config.run_config(), &targets, mechanism)?;
    log(&format!(
        "gamma_eff*L = {} /W, noise_per_gate = {:e}, leakage_per_watt = {:e}, tpa = {}, fca = {}",
        format_sig(cal.gamma_eff_length),
        cal.noise_per_gate,
        cal.leakage_per_watt,
        format_sig(cal.tpa_strength),
        format_sig(cal.fca_strength)
    ));
    let calibrated = loaded.config.with_run_config(&cal.apply(&loaded.config.run_config()));
    let document = |meta: &Metadata| {
        json!({
            "metadata": meta,
            "targets": targets,
            "calibration": cal,
            "config": calibrated,
        })
    };
    match &args.common.out {
        Some(path) => {
            meta.files = vec![path.display().to_string()];
            write_json(path, &document(&meta))?;
            log(&format!("wrote {}", path.display()));
        }
        None => println!("{}", serde_json::to_string_pretty(&document(&meta)).expect("serializable")),
    }
    Ok(())
}
