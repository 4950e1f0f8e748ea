use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use jcfb_cli::{parse_config, run_job, CliError, Mode};

/// Tensor-network simulation of a Jaynes-Cummings system with time-delayed
/// coherent feedback. Writes CSV tables, the resolved configuration and a run
/// manifest into the output directory.
#[derive(Debug, Parser)]
#[command(name = "jcfb", version)]
struct Args {
    /// TOML job file (a previous run's manifest.toml also works).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a configuration key, e.g. `--set params.kappa1=0.1`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Output directory (overrides `output_dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for sweeps; 0 uses all cores.
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    /// simulate, correlations, spectrum, trace-fft, linear-spectrum, poles, oracle or sweep.
    #[arg(long)]
    mode: Option<String>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    match execute(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("jcfb: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn execute(args: &Args) -> Result<(), CliError> {
    let document = match &args.config {
        Some(path) => std::fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.display().to_string(),
            source,
        })?,
        None => String::new(),
    };
    let mut overrides = args.set.clone();
    if let Some(m) = &args.mode {
        let mode: Mode = m.parse()?;
        overrides.push(format!("mode = \"{mode}\""));
    }
    let cfg = parse_config(&document, &overrides)?;
    let out = args.out.clone().unwrap_or_else(|| PathBuf::from(&cfg.output_dir));
    let report = run_job(&cfg, &out, args.jobs)?;
    let info = &report.manifest.run_info;
    for p in &info.points {
        let status = format!("{:?}", p.status).to_lowercase();
        eprintln!(
            "{:<24} {status:<9} max bond {:>4}  discarded {:.2e}  {}",
            p.label, p.max_bond, p.discarded_weight, p.file
        );
    }
    eprintln!("wrote {} files to {} in {:.2} s", info.files.len(), out.display(), info.wall_time_s);
    match report.failure {
        Some(e) => Err(e),
        None => Ok(()),
    }
}
