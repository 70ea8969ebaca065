//! The `decoherence` command-line tool.
//!
//! Every command reads an optional TOML [`RunConfig`], applies flag
//! overrides (flags win) and writes CSV or JSON with a provenance header.
//! Exit codes: 0 success, 2 configuration error, 3 numerical failure,
//! 4 infeasible design.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::config::{ModelKind, OutputFormat, RunConfig, SweepAxis};
use crate::dynamics::{integrate, integrate_adiabatic, Trajectory};
use crate::error::{Error, Result};
use crate::estimation::{
    design_decoherence, effective_from_fit, fit_nutation, invert_saturation, CurveSample, FieldMode,
    FitOptions,
};
use crate::model::{effective_rates, Sublevel};
use crate::protocol::format::{
    read_accumulated, read_trajectories, sha256_hex, write_accumulated, write_trajectories, Provenance,
};
use crate::protocol::{accumulate_with, replay, ProtocolSimulator, TrajectoryRecord};
use crate::units::{from_two_pi_khz, to_two_pi_khz};

#[derive(Debug, Parser)]
#[command(name = "decoherence", version, about = "Light-induced decoherence of a microwave-driven hyperfine qubit")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FieldArg {
    Fixed,
    MinimizeIntensity,
}

#[derive(Debug, Default, Args)]
pub struct Common {
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output file; stdout when absent.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<FormatArg>,
    #[arg(long, global = true)]
    pub i0: Option<f64>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub alpha_deg: Option<f64>,
    #[arg(long = "b-field-2pikhz", global = true, allow_hyphen_values = true)]
    pub b_field: Option<f64>,
    #[arg(long = "omega-2pikhz", global = true)]
    pub omega: Option<f64>,
    #[arg(long = "detuning-2pikhz", global = true, allow_hyphen_values = true)]
    pub detuning: Option<f64>,
    #[arg(long, global = true)]
    pub dt_us: Option<f64>,
    #[arg(long, global = true)]
    pub nmax: Option<usize>,
    #[arg(long, global = true)]
    pub ntraj: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Scattering and effective rates (JSON).
    Rates,
    /// Deterministic P₁(θ) on the protocol grid.
    Simulate,
    /// Monte Carlo trajectories plus their accumulated curve.
    Trajectories {
        /// Regenerate the trajectories stored in this file.
        #[arg(long)]
        replay: Option<PathBuf>,
        /// Accumulated-curve output; defaults to `<out>.curve.csv`.
        #[arg(long)]
        curve: Option<PathBuf>,
    },
    /// Damped-cosine fit of a simulated or accumulated curve.
    Fit {
        input: PathBuf,
    },
    /// Knob settings for target relaxation rates.
    Design {
        #[arg(long = "gamma-2pikhz")]
        gamma: Option<f64>,
        /// Longitudinal target Γ; `inf` for none.
        #[arg(long = "big-gamma-2pikhz")]
        big_gamma: Option<f64>,
        #[arg(long)]
        i0_max: Option<f64>,
        #[arg(long, value_enum)]
        field: Option<FieldArg>,
    },
    /// Simulated curves over a grid of one knob, long format.
    Sweep {
        #[arg(long)]
        axis: Option<String>,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        values: Vec<f64>,
    },
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Parse { .. } | Error::InvalidParams(_) | Error::Io(_) => 2,
        Error::Infeasible { .. } => 4,
        _ => 3,
    }
}

/// Parse `std::env::args`, run, and return the process exit code.
pub fn main_from_env() -> i32 {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn load_config(common: &Common) -> Result<RunConfig> {
    let mut c = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(s) = common.seed {
        c.seed = s;
    }
    if let Some(p) = &common.out {
        c.output.out = Some(p.clone());
    }
    if let Some(f) = common.format {
        c.output.format = Some(match f {
            FormatArg::Csv => OutputFormat::Csv,
            FormatArg::Json => OutputFormat::Json,
        });
    }
    let p = &mut c.physics;
    if let Some(v) = common.i0 {
        p.i0 = v;
    }
    if let Some(v) = common.alpha_deg {
        p.alpha_deg = v;
    }
    if let Some(v) = common.b_field {
        p.b_field_2pikhz = v;
    }
    if let Some(v) = common.omega {
        p.omega_2pikhz = v;
    }
    if let Some(v) = common.detuning {
        p.detuning_2pikhz = v;
    }
    if let Some(v) = common.dt_us {
        c.protocol.dt_us = v;
    }
    if let Some(v) = common.nmax {
        c.protocol.n_max = v;
    }
    if let Some(v) = common.ntraj {
        c.protocol.n_trajectories = v;
    }
    Ok(c)
}

pub fn run(cli: &Cli) -> Result<()> {
    let mut config = load_config(&cli.common)?;
    match &cli.command {
        Command::Rates => cmd_rates(&config),
        Command::Simulate => cmd_simulate(&config),
        Command::Trajectories { replay, curve } => {
            if curve.is_some() {
                config.output.curve = curve.clone();
            }
            cmd_trajectories(&config, replay.as_deref())
        }
        Command::Fit { input } => cmd_fit(&config, input, cli.common.omega.is_some()),
        Command::Design {
            gamma,
            big_gamma,
            i0_max,
            field,
        } => {
            let d = &mut config.design;
            d.gamma_2pikhz = gamma.or(d.gamma_2pikhz);
            d.big_gamma_2pikhz = big_gamma.or(d.big_gamma_2pikhz);
            d.i0_max = i0_max.unwrap_or(d.i0_max);
            if let Some(f) = field {
                d.field = match f {
                    FieldArg::Fixed => FieldMode::Fixed,
                    FieldArg::MinimizeIntensity => FieldMode::MinimizeIntensity,
                };
            }
            cmd_design(&config)
        }
        Command::Sweep { axis, values } => {
            if let Some(a) = axis {
                config.sweep.axis = Some(SweepAxis::parse(a)?);
            }
            if !values.is_empty() {
                config.sweep.values = values.clone();
            }
            cmd_sweep(&config)
        }
    }
}

fn open_out(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).map_err(|e| Error::Io(format!("{}: {e}", p.display())))?,
        )),
        None => Box::new(BufWriter::new(io::stdout())),
    })
}

fn provenance(config: &RunConfig) -> Provenance {
    Provenance::new(config.hash(), config.seed)
}

fn provenance_json(p: &Provenance) -> Value {
    json!({ "version": p.version, "config_hash": p.config_hash, "seed": p.seed })
}

fn write_json(config: &RunConfig, value: &Value) -> Result<()> {
    let mut w = open_out(config.output.out.as_deref())?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| Error::Io(e.to_string()))?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn khz(x: f64) -> f64 {
    to_two_pi_khz(x)
}

fn opt_khz(x: Option<f64>) -> Value {
    x.filter(|v| *v > 0.0).map_or(Value::Null, |v| json!(khz(v)))
}

pub fn cmd_rates(config: &RunConfig) -> Result<()> {
    let params = config.physical_params()?;
    let rates = config.rates(&params)?;
    let eff = effective_rates(&params, &rates);
    let prov = provenance(config);
    let p3 = |m| rates.p3(m);
    let value = json!({
        "provenance": provenance_json(&prov),
        "units": { "rates": "2pi*kHz", "p3": "probability" },
        "scattering": {
            "r1": khz(rates.r1),
            "r2": khz(rates.r2),
            "r2_over_r1": rates.ratio(),
            "p3": { "m-1": p3(Sublevel::Minus), "m0": p3(Sublevel::Zero), "m+1": p3(Sublevel::Plus) },
        },
        "effective": {
            "gamma": opt_khz(Some(eff.gamma)),
            "Gamma": opt_khz(eff.gamma_longitudinal),
            "p1_inf": eff.p1_inf,
        },
    });
    match config.output.format.unwrap_or(OutputFormat::Json) {
        OutputFormat::Json => write_json(config, &value),
        OutputFormat::Csv => {
            let mut w = open_out(config.output.out.as_deref())?;
            for line in prov.comment_lines() {
                writeln!(w, "{line}")?;
            }
            writeln!(w, "quantity,value,unit")?;
            let rows: [(&str, Option<f64>, &str); 6] = [
                ("r1", Some(khz(rates.r1)), "2pi*kHz"),
                ("r2", Some(khz(rates.r2)), "2pi*kHz"),
                ("r2_over_r1", rates.ratio(), ""),
                ("gamma", value["effective"]["gamma"].as_f64(), "2pi*kHz"),
                ("Gamma", value["effective"]["Gamma"].as_f64(), "2pi*kHz"),
                ("p1_inf", eff.p1_inf, ""),
            ];
            for (name, v, unit) in rows {
                let v = v.map_or(String::new(), |v| v.to_string());
                writeln!(w, "{name},{v},{unit}")?;
            }
            w.flush()?;
            Ok(())
        }
    }
}

/// θ grid N·δt for N = 0..=n_max.
fn drive_grid(config: &RunConfig) -> Result<Vec<f64>> {
    let proto = config.protocol_config()?;
    Ok(std::iter::once(0.0).chain(proto.drive_times()).collect())
}

fn run_dynamics(config: &RunConfig) -> Result<Trajectory> {
    let params = config.physical_params()?;
    let rates = config.rates(&params)?;
    let times = drive_grid(config)?;
    let init = config.initial_state()?;
    let integ = config.integrator_config()?;
    let result = match config.simulate.model {
        ModelKind::FourLevel => integrate(&init, &params, &rates, &integ, &times),
        ModelKind::Adiabatic => integrate_adiabatic(&init, &params, &rates, &integ, &times),
    };
    result.inspect_err(|_| {
        eprintln!("parameters:\n{}", toml::to_string(&config.physics).unwrap_or_default());
    })
}

fn echo_config(w: &mut dyn Write, config: &RunConfig) -> Result<()> {
    let mut c = config.clone();
    c.output = Default::default();
    writeln!(w, "# config:")?;
    for line in c.to_toml().lines().filter(|l| !l.is_empty()) {
        writeln!(w, "#   {line}")?;
    }
    Ok(())
}

pub const SIMULATE_COLUMNS: [&str; 7] = ["theta_rad", "tau_s", "p1", "n0", "n1", "n2", "n3"];

pub fn cmd_simulate(config: &RunConfig) -> Result<()> {
    let tr = run_dynamics(config)?;
    let omega = config.physical_params()?.omega_mw;
    let prov = provenance(config);
    let rows: Vec<[f64; 7]> = tr
        .times
        .iter()
        .zip(&tr.states)
        .map(|(&t, s)| [omega * t, t, s.p1(), s.n0, s.n1, s.n2, s.n3])
        .collect();
    match config.format() {
        OutputFormat::Json => write_json(
            config,
            &json!({
                "provenance": provenance_json(&prov),
                "omega_2pikhz": config.physics.omega_2pikhz,
                "columns": SIMULATE_COLUMNS,
                "rows": rows,
            }),
        ),
        OutputFormat::Csv => {
            let mut w = open_out(config.output.out.as_deref())?;
            for line in prov.comment_lines() {
                writeln!(w, "{line}")?;
            }
            writeln!(w, "# omega_2pikhz={}", config.physics.omega_2pikhz)?;
            echo_config(&mut w, config)?;
            writeln!(w, "{}", SIMULATE_COLUMNS.join(","))?;
            for r in rows {
                let cells: Vec<String> = r.iter().map(f64::to_string).collect();
                writeln!(w, "{}", cells.join(","))?;
            }
            w.flush()?;
            Ok(())
        }
    }
}

fn curve_path(config: &RunConfig) -> Option<PathBuf> {
    config
        .output
        .curve
        .clone()
        .or_else(|| config.output.out.as_ref().map(|p| p.with_extension("curve.csv")))
}

pub fn cmd_trajectories(config: &RunConfig, replay_from: Option<&Path>) -> Result<()> {
    let records: Vec<TrajectoryRecord> = match replay_from {
        Some(path) => {
            let f = File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
            let file = read_trajectories(BufReader::new(f))?;
            file.records.iter().map(replay).collect::<Result<_>>()?
        }
        None => ProtocolSimulator::new(config.experiment()?)?.run_all(),
    };
    let mut w = open_out(config.output.out.as_deref())?;
    write_trajectories(&records, &mut w)?;
    w.flush()?;
    if let Some(path) = curve_path(config) {
        let curve = accumulate_with(&records, config.protocol.z)?;
        let mut w = open_out(Some(&path))?;
        write_accumulated(&curve, &mut w)?;
        w.flush()?;
    }
    Ok(())
}

/// Samples and the microwave Ω (rad/s) recorded in the file, if any.
fn read_curve(text: &str) -> Result<(Vec<CurveSample>, Option<f64>)> {
    let header = text
        .lines()
        .enumerate()
        .find(|(_, l)| !l.starts_with('#') && !l.trim().is_empty());
    match header {
        Some((_, h)) if h.starts_with("N,") => {
            let table = read_accumulated(text.as_bytes())?;
            let exp = table
                .experiment
                .ok_or_else(|| Error::Config("accumulated curve lacks its configuration snapshot".into()))?;
            let samples = CurveSample::from_points(&table.points, exp.protocol.dt_unit, table.z());
            Ok((samples, Some(exp.params.omega_mw)))
        }
        Some((line0, h)) if h.starts_with("theta_rad,") => {
            let omega = text
                .lines()
                .find_map(|l| l.strip_prefix("# omega_2pikhz="))
                .and_then(|v| v.trim().parse::<f64>().ok())
                .map(from_two_pi_khz);
            let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
            let mut samples = Vec::new();
            for (i, rec) in rdr.records().enumerate() {
                let rec = rec.map_err(|e| Error::Parse {
                    line: e.position().map_or(line0 + 2 + i, |p| p.line() as usize),
                    message: e.to_string(),
                })?;
                let field = |k: usize| -> Result<f64> {
                    rec.get(k).and_then(|v| v.parse().ok()).ok_or_else(|| Error::Parse {
                        line: rec.position().map_or(0, |p| p.line() as usize),
                        message: format!("column {} is not a number", SIMULATE_COLUMNS[k]),
                    })
                };
                samples.push(CurveSample::new(field(1)?, field(2)?));
            }
            Ok((samples, omega))
        }
        Some((line, _)) => Err(Error::Parse {
            line: line + 1,
            message: "expected a simulate (theta_rad,...) or accumulated (N,...) curve header".into(),
        }),
        None => Err(Error::Parse {
            line: 1,
            message: "empty curve file".into(),
        }),
    }
}

pub fn cmd_fit(config: &RunConfig, input: &Path, omega_from_flag: bool) -> Result<()> {
    let mut bytes = Vec::new();
    File::open(input)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::Io(format!("{}: {e}", input.display())))?;
    let text = String::from_utf8(bytes).map_err(|e| Error::Parse {
        line: 1,
        message: e.to_string(),
    })?;
    let (samples, file_omega) = read_curve(&text)?;
    // samples at τ = 0 carry no phase information beyond the initial state
    let samples: Vec<_> = samples.into_iter().filter(|s| s.tau > 0.0).collect();
    let config_omega = config.physical_params()?.omega_mw;
    let omega_mw = match file_omega {
        Some(w) if !omega_from_flag => w,
        _ => config_omega,
    };
    let fit = fit_nutation(&samples, &FitOptions::default())?;
    let derived = match effective_from_fit(&fit, omega_mw) {
        Ok(eff) => json!({
            "gamma": khz(eff.gamma),
            "Gamma": eff.gamma_longitudinal.map(khz),
            "r2_over_r1": invert_saturation(fit.p_inf).ok(),
            "omega_mw": khz(omega_mw),
        }),
        Err(e) => json!({
            "gamma": Value::Null,
            "Gamma": Value::Null,
            "r2_over_r1": Value::Null,
            "omega_mw": khz(omega_mw),
            "note": e.to_string(),
        }),
    };
    let prov = provenance(config);
    let value = json!({
        "provenance": provenance_json(&prov),
        "input_sha256": sha256_hex(text.as_bytes()),
        "units": { "omega": "2pi*kHz", "lambda": "2pi*kHz", "phase": "rad" },
        "omega": khz(fit.omega),
        "lambda": khz(fit.lambda),
        "p_inf": fit.p_inf,
        "amplitude": fit.amplitude,
        "phase": fit.phase,
        "residual_rms": fit.residual_rms,
        "converged": fit.converged,
        "low_confidence": fit.low_confidence,
        "iterations": fit.iterations,
        "derived": derived,
    });
    write_json(config, &value)?;
    fit.require_converged().map(|_| ())
}

pub fn cmd_design(config: &RunConfig) -> Result<()> {
    let template = config.physical_params()?;
    let target = config.design_target(&template)?;
    let prov = provenance(config);
    match design_decoherence(&target, &template) {
        Ok(sol) => {
            let eff = sol.achieved;
            write_json(
                config,
                &json!({
                    "provenance": provenance_json(&prov),
                    "feasible": true,
                    "i0": sol.i0,
                    "alpha_deg": sol.alpha.to_degrees(),
                    "b_field_2pikhz": khz(sol.zeeman_delta),
                    "newton_steps": sol.newton_steps,
                    "target": {
                        "gamma": config.design.gamma_2pikhz,
                        "Gamma": config.design.big_gamma_2pikhz.filter(|g| g.is_finite()),
                    },
                    "achieved": {
                        "gamma": khz(eff.gamma),
                        "Gamma": eff.gamma_longitudinal.map(khz),
                        "p1_inf": eff.p1_inf,
                    },
                }),
            )
        }
        Err(e @ Error::Infeasible { .. }) => {
            let Error::Infeasible { constraint } = &e else { unreachable!() };
            write_json(
                config,
                &json!({
                    "provenance": provenance_json(&prov),
                    "feasible": false,
                    "constraint": constraint,
                }),
            )?;
            Err(e)
        }
        Err(e) => Err(e),
    }
}

pub const SWEEP_COLUMNS: [&str; 5] = ["axis", "value", "theta_rad", "tau_s", "p1"];

pub fn cmd_sweep(config: &RunConfig) -> Result<()> {
    let mut config = config.clone();
    config.sweep.values.sort_by(f64::total_cmp);
    let config = &config;
    let values = &config.sweep.values;
    let axis = config.sweep.axis;
    let curves: Vec<(f64, Trajectory)> = match axis {
        Some(axis) => values
            .par_iter()
            .map(|&v| {
                let mut c = config.clone();
                axis.apply(&mut c.physics, v);
                run_dynamics(&c).map(|tr| (v, tr))
            })
            .collect::<Result<_>>()?,
        None => Vec::new(),
    };
    let name = axis.map_or("", SweepAxis::name);
    let omega = config.physical_params()?.omega_mw;
    let omega_at = |v: f64| match axis {
        Some(SweepAxis::Omega2pikhz) => from_two_pi_khz(v),
        _ => omega,
    };
    let prov = provenance(config);
    match config.format() {
        OutputFormat::Json => {
            let rows: Vec<Value> = curves
                .iter()
                .flat_map(|(v, tr)| {
                    let w = omega_at(*v);
                    tr.times
                        .iter()
                        .zip(tr.p1())
                        .map(move |(&t, p)| json!([name, v, w * t, t, p]))
                })
                .collect();
            write_json(
                config,
                &json!({
                    "provenance": provenance_json(&prov),
                    "config": serde_json::to_value(RunConfig { output: Default::default(), ..config.clone() })
                        .map_err(|e| Error::Io(e.to_string()))?,
                    "columns": SWEEP_COLUMNS,
                    "rows": rows,
                }),
            )
        }
        OutputFormat::Csv => {
            let mut w = open_out(config.output.out.as_deref())?;
            for line in prov.comment_lines() {
                writeln!(w, "{line}")?;
            }
            echo_config(&mut w, config)?;
            writeln!(w, "{}", SWEEP_COLUMNS.join(","))?;
            for (v, tr) in &curves {
                let om = omega_at(*v);
                for (&t, p) in tr.times.iter().zip(tr.p1()) {
                    writeln!(w, "{name},{v},{},{t},{p}", om * t)?;
                }
            }
            w.flush()?;
            Ok(())
        }
    }
}
