use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use serde_json::json;

use pcnls::criteria::{classify, DataStats};
use pcnls::diagnostics::decay_fit;
use pcnls::ground_state::{shoot_ground_state, threshold_mass_bound};
use pcnls::lab::{self, ConfigMap, RunConfig};
use pcnls::propagators::LensState;
use pcnls::pseudoconformal::{extract_scattering_state, ExtractOptions};
use pcnls::{Error, ModelParams, RadialField};

#[derive(Parser)]
#[command(name = "pcnls", version, about = "Radial NLS laboratory in the physical and lens frames")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct RunArgs {
    /// key=value or JSON config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. --set grid.M=2048 (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Directory receiving run directories.
    #[arg(long, default_value = "runs")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Evolve in the physical frame (or both frames with frame=both).
    Simulate(RunArgs),
    /// Evolve in the lens frame (or both frames with frame=both).
    Lens(RunArgs),
    /// Compute the ground state and the sharp Gagliardo-Nirenberg constant.
    GroundState {
        #[arg(long = "N")]
        dim: usize,
        #[arg(long, default_value_t = 1e-12)]
        tol: f64,
        /// Write the sampled profile as CSV.
        #[arg(long)]
        profile: Option<PathBuf>,
    },
    /// Classify a parameter tuple and datum statistics.
    #[command(allow_negative_numbers = true)]
    Classify {
        #[arg(long = "N")]
        dim: usize,
        #[arg(long)]
        lambda1: f64,
        #[arg(long, default_value_t = 0.0)]
        lambda2: f64,
        #[arg(long)]
        p1: f64,
        /// Defaults to the energy-critical power.
        #[arg(long)]
        p2: Option<f64>,
        /// `‖φ‖₂`.
        #[arg(long, default_value_t = 0.0)]
        mass: f64,
        #[arg(long, default_value_t = 0.0)]
        energy: f64,
    },
    /// Fit the decay exponent of a `t,value` CSV.
    DecayFit {
        input: PathBuf,
        #[arg(long)]
        r: f64,
        #[arg(long = "N")]
        dim: usize,
    },
    /// Extract the scattering state from lens-frame fields near s = 1.
    Extract {
        /// `s:path` pairs of field CSVs (repeatable, at least two).
        #[arg(long = "state", value_name = "S:PATH", required = true)]
        states: Vec<String>,
        #[arg(long, default_value_t = 1000)]
        substeps: usize,
        /// Where to write the scattering state CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run every point of the `sweep.<key>=v1,v2` lattice in a config.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        #[arg(long, default_value = "runs")]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
}

fn config_map(config: Option<&PathBuf>, overrides: &[String]) -> anyhow::Result<ConfigMap> {
    let mut map = match config {
        Some(path) => lab::load_config_map(path)?,
        None => ConfigMap::new(),
    };
    for kv in overrides {
        let Some((k, v)) = kv.split_once('=') else {
            return Err(Error::Parameter(format!("--set expects KEY=VALUE, got '{kv}'")).into());
        };
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(map)
}

fn print_json(value: &serde_json::Value) -> anyhow::Result<()> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

fn run_frame(args: &RunArgs, frame: &str) -> anyhow::Result<()> {
    let mut map = config_map(args.config.as_ref(), &args.overrides)?;
    if map.get("frame").map(String::as_str) != Some("both") {
        map.insert("frame".into(), frame.into());
    }
    let cfg = RunConfig::from_map(&map)?;
    let record = lab::run(&cfg, &args.out)?;
    let dir = args.out.join(&record.run_id);
    print_json(&json!({
        "run_dir": dir,
        "verdict": record.verdict,
        "monitors": record.monitors,
        "frame_equivalence": record.frame_equivalence,
    }))
}

fn read_series(path: &PathBuf) -> anyhow::Result<Vec<(f64, f64)>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Parameter(format!("cannot read {}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        match (cols.first().map(|c| c.parse::<f64>()), cols.get(1).map(|c| c.parse::<f64>())) {
            (Some(Ok(t)), Some(Ok(v))) => out.push((t, v)),
            // a header line
            _ if k == 0 => {}
            _ => {
                return Err(Error::Parameter(format!("{}:{}: expected t,value", path.display(), k + 1))
                    .into())
            }
        }
    }
    Ok(out)
}

fn dispatch(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Simulate(args) => run_frame(&args, "physical"),
        Command::Lens(args) => run_frame(&args, "lens"),
        Command::GroundState { dim, tol, profile } => {
            let gs = shoot_ground_state(dim, tol)?;
            if let Some(path) = profile {
                gs.profile.save_csv(&path)?;
            }
            print_json(&serde_json::to_value(&gs)?)
        }
        Command::Classify { dim, lambda1, lambda2, p1, p2, mass, energy } => {
            let p2 = p2.unwrap_or(if dim > 2 { 4.0 / (dim as f64 - 2.0) } else { f64::INFINITY });
            let params = ModelParams::new(dim, lambda1, lambda2, p1, p2)?;
            let stats = DataStats { mass, energy, sigma_norm: 0.0 };
            let verdict = match classify(&params, &stats, None) {
                Err(Error::MissingOracle(_)) => {
                    let gs = pcnls::ground_state::ground_state(dim)?;
                    let v = classify(&params, &stats, Some(gs.cn))?;
                    let bound = threshold_mass_bound(&params, gs.cn)?;
                    return print_json(&json!({
                        "verdict": v,
                        "cn": gs.cn,
                        "threshold_bound": bound,
                    }));
                }
                other => other?,
            };
            print_json(&json!({ "verdict": verdict }))
        }
        Command::DecayFit { input, r, dim } => {
            let series = read_series(&input)?;
            print_json(&serde_json::to_value(decay_fit(&series, r, dim)?)?)
        }
        Command::Extract { states, substeps, out } => {
            let mut lens = Vec::new();
            for entry in &states {
                let Some((s, path)) = entry.split_once(':') else {
                    bail!(Error::Parameter(format!("--state expects S:PATH, got '{entry}'")));
                };
                let s: f64 = s
                    .parse()
                    .map_err(|_| Error::Parameter(format!("bad s value in '{entry}'")))?;
                let field = RadialField::load_csv(path)
                    .with_context(|| format!("loading lens field {path}"))?;
                lens.push(LensState::new(s, field)?);
            }
            let opts = ExtractOptions { substeps, ..Default::default() };
            let (u_plus, report) = extract_scattering_state(&lens, &opts)?;
            if let Some(path) = out {
                u_plus.save_csv(&path)?;
            }
            print_json(&json!({
                "entries": report.entries,
                "sigma_decreasing": report.sigma_decreasing(),
                "u_plus_mass": u_plus.mass(),
            }))
        }
        Command::Sweep { config, overrides, out, jobs } => {
            let map = config_map(Some(&config), &overrides)?;
            let (base, axes) = lab::sweep_axes(&map);
            if axes.is_empty() {
                bail!(Error::Parameter("config has no sweep.<key> entries".into()));
            }
            let report = lab::sweep(&base, &axes, &out, jobs)?;
            let failed = report.rows.iter().filter(|r| r.error.is_some()).count();
            print_json(&json!({
                "csv": report.csv,
                "points": report.rows.len(),
                "failed": failed,
                "resumed": report.rows.iter().filter(|r| r.resumed).count(),
            }))
        }
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    let core = err.chain().find_map(|e| e.downcast_ref::<Error>());
    match core {
        Some(e) if e.is_parameter_error() => 2,
        Some(Error::Io(_)) => 2,
        _ => 3,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
