use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use mottsim::config::RunConfig;
use mottsim::hilbert::Channel;
use mottsim::runner::{
    cmd_scan, cmd_simulate, cmd_speed, cmd_tomography_check, format_sig, TomographyCheck,
};

/// Entanglement propagation in dissipative Bose-Hubbard photon chains.
#[derive(Parser)]
#[command(name = "mottsim", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Run configuration file (flat key = value lines).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides output_dir from the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for scans and trajectory ensembles.
    #[arg(long)]
    threads: Option<usize>,
    /// Override master_seed from the config.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Evolve the configured initial state and write negativity traces.
    Simulate(Common),
    /// Peak negativity of the r = 1 pair versus dissipation rate.
    Scan {
        #[command(flatten)]
        common: Common,
        /// Dissipation channel to sweep.
        #[arg(long, value_parser = parse_channel)]
        channel: Channel,
        /// Comma-separated rates in units of J.
        #[arg(long)]
        rates: String,
    },
    /// Propagation speed versus interaction strength.
    Speed {
        #[command(flatten)]
        common: Common,
        /// Comma-separated U/J values.
        #[arg(long = "u-over-j")]
        u_over_j: String,
    },
    /// Verify moment tomography against the direct partial trace.
    TomographyCheck(Common),
}

fn parse_channel(s: &str) -> Result<Channel, String> {
    match s {
        "loss" => Ok(Channel::Loss),
        "dephasing" => Ok(Channel::Dephasing),
        _ => Err("expected 'loss' or 'dephasing'".into()),
    }
}

fn parse_float_list(s: &str) -> Result<Vec<f64>, String> {
    s.split(',')
        .map(|v| v.trim())
        .filter(|v| !v.is_empty())
        .map(|v| v.parse::<f64>().map_err(|e| format!("'{v}': {e}")))
        .collect()
}

fn load_config(common: &Common) -> mottsim::Result<(RunConfig, PathBuf)> {
    let mut cfg = RunConfig::from_file(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.master_seed = seed;
    }
    let out = common
        .out
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("."));
    Ok((cfg, out))
}

fn install_threads(threads: Option<usize>) {
    if let Some(n) = threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
        {
            eprintln!("mottsim: thread pool setup: {e}");
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let start = Instant::now();
    let code = match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("mottsim: {e}");
            ExitCode::from(1)
        }
    };
    eprintln!("mottsim: finished in {:.2}s", start.elapsed().as_secs_f64());
    code
}

fn run(cli: Cli) -> mottsim::Result<ExitCode> {
    match cli.command {
        Command::Simulate(common) => {
            install_threads(common.threads);
            let (cfg, out) = load_config(&common)?;
            let result = cmd_simulate(&cfg, &out)?;
            println!(
                "wrote {} and {}",
                result.negativity_csv.display(),
                result.summary_json.display()
            );
            if let Some(rdm) = &result.rdm_json {
                println!("wrote {}", rdm.display());
            }
            if let Some(speed) = &result.summary.speed {
                println!(
                    "speed = {} ± {} (units of J)",
                    format_sig(speed.speed),
                    format_sig(speed.uncertainty)
                );
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Scan {
            common,
            channel,
            rates,
        } => {
            install_threads(common.threads);
            let (cfg, out) = load_config(&common)?;
            let rates = parse_float_list(&rates).map_err(mottsim::Error::Config)?;
            let result = cmd_scan(&cfg, channel, &rates, &out)?;
            println!("wrote {}", result.peak_scan_csv.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Speed { common, u_over_j } => {
            install_threads(common.threads);
            let (cfg, out) = load_config(&common)?;
            let list = parse_float_list(&u_over_j).map_err(mottsim::Error::Config)?;
            let result = cmd_speed(&cfg, &list, &out)?;
            println!("wrote {}", result.speed_csv.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::TomographyCheck(common) => {
            install_threads(common.threads);
            let (cfg, _) = load_config(&common)?;
            match cmd_tomography_check(&cfg)? {
                TomographyCheck::Report {
                    max_error,
                    snapshots,
                    pairs,
                    bosonic_forms_max_dev,
                } => {
                    println!(
                        "tomography check: {} pairs, {} snapshots, max reconstruction error {}",
                        pairs.len(),
                        snapshots,
                        format_sig(max_error)
                    );
                    println!(
                        "bosonic generator forms vs matrix forms: max deviation {}",
                        format_sig(bosonic_forms_max_dev)
                    );
                    if max_error > 1e-8 {
                        eprintln!("mottsim: reconstruction error above 1e-8");
                        Ok(ExitCode::from(1))
                    } else {
                        Ok(ExitCode::SUCCESS)
                    }
                }
                TomographyCheck::UnsupportedCutoff { cutoff } => {
                    eprintln!(
                        "mottsim: tomography requires cutoff 3 (SU(3) generators); \
                         this run has cutoff {cutoff} - unsupported"
                    );
                    Ok(ExitCode::from(2))
                }
            }
        }
    }
}
