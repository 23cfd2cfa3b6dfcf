use std::path::PathBuf;
use std::process::ExitCode;

use bubble_lab::{resolve_out_dir, run, Command, RunConfig, RunError};
use clap::Parser;

#[derive(Debug, Parser)]
#[command(name = "annulus-bubble-lab", version, about = "Sign-changing bubble solutions on an annulus: radial solve, spectra, reduced energy and ansatz checks")]
struct Cli {
    /// One of radial, spectrum, sweep, landscape, construct, verify, all.
    command: String,
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides the environment and the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for the parallel kernels.
    #[arg(long)]
    threads: Option<usize>,
}

fn execute(cli: &Cli) -> Result<i32, RunError> {
    let command: Command = cli.command.parse()?;
    let cfg = RunConfig::load(&cli.config)?;
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(RunError::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| RunError::Config(e.to_string()))?;
    }
    let out = resolve_out_dir(cli.out.as_deref(), &cfg);
    let outcome = run(command, &cfg, &out)?;
    for st in &outcome.manifest.stages {
        println!("{:<10} {:?}", st.name, st.status);
        for v in &st.violations {
            println!("    violation: {v}");
        }
        if let Some(e) = &st.error {
            println!("    error: {e}");
        }
    }
    println!("manifest: {}", out.join(bubble_lab::manifest::MANIFEST_FILE).display());
    if let Some(e) = outcome.error() {
        eprintln!("annulus-bubble-lab: {e}");
    }
    Ok(outcome.exit_code())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("annulus-bubble-lab: {e}");
            e.exit_code()
        }
    };
    ExitCode::from(code as u8)
}
