use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use molmech_cli::{exit_code_for, run_command, Command, Flags};

/// Molecule–phonon open-system simulator.
#[derive(Parser, Debug)]
#[command(name = "molmech", version)]
struct Cli {
    command: Command,
    /// Run configuration (TOML).
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Material file for `estimate`.
    #[arg(long, value_name = "PATH")]
    material: Option<PathBuf>,
    /// Output directory; overrides [output] directory.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Sweep worker threads.
    #[arg(long, value_name = "N", env = "MOLMECH_WORKERS")]
    workers: Option<usize>,
    /// Phonon Fock cutoff.
    #[arg(long, value_name = "N")]
    cutoff: Option<usize>,
    /// Relative integrator tolerance.
    #[arg(long, value_name = "X")]
    rtol: Option<f64>,
    /// Also run the control-only and signal-only memory baselines.
    #[arg(long)]
    baselines: bool,
    /// Stop a sweep at the first failing point.
    #[arg(long)]
    fail_fast: bool,
    /// Repeat at twice the cutoff and report the change.
    #[arg(long)]
    check_cutoff: bool,
    /// Detuning grid `start:stop:count` in γ-units.
    #[arg(long, value_name = "A:B:N", allow_hyphen_values = true)]
    detuning_range: Option<String>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let flags = Flags {
        config: cli.config,
        material: cli.material,
        out: cli.out,
        workers: cli.workers,
        cutoff: cli.cutoff,
        rtol: cli.rtol,
        baselines: cli.baselines,
        fail_fast: cli.fail_fast,
        check_cutoff: cli.check_cutoff,
        detuning_range: cli.detuning_range,
    };
    match run_command(cli.command, &flags) {
        Ok(out) => {
            println!("{}", out.summary.trim_end());
            for f in &out.files {
                println!("wrote {}", f.display());
            }
            ExitCode::from(out.exit_code as u8)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code_for(&e) as u8)
        }
    }
}
