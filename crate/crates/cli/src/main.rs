use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use swssb_cli::output::Sink;
use swssb_cli::spec::{ExperimentSpec, Kind};
use swssb_cli::CliError;

#[derive(Parser)]
#[command(name = "swssb", version, about = "Run a declarative experiment and write CSV/JSON artifacts.")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Experiment file (TOML).
    #[arg(long)]
    spec: PathBuf,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Worker threads; results do not depend on this.
    #[arg(long)]
    threads: Option<usize>,
    /// Overrides the seed in the spec.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Exact evolution: density profiles, correlators, snapshots.
    Evolve(Common),
    /// Rényi correlator series with rescaled axes.
    Correlators(Common),
    /// Classical CMI scans on exact distributions.
    Cmi(Common),
    /// Decoder success tables.
    Decode(Common),
    /// Winding-number fluctuations from the SSEP sampler.
    Winding(Common),
    /// Gaussian hydrodynamics: CMI and Bhattacharyya distances.
    Hydro(Common),
    /// Rotor-model lengths, exponents and CMI curves.
    Rotor(Common),
    /// RG exponent table and flow field.
    Rg(Common),
    /// Model F Langevin time series.
    Modelf(Common),
}

fn execute(kind: Kind, c: Common) -> Result<Vec<PathBuf>, CliError> {
    let text = std::fs::read_to_string(&c.spec).map_err(|e| CliError::Usage(format!("{}: {e}", c.spec.display())))?;
    let mut spec = ExperimentSpec::parse(&text)?;
    if spec.experiment != kind {
        return Err(CliError::Usage(format!(
            "spec describes '{}' but the subcommand is '{}'",
            spec.experiment.name(),
            kind.name()
        )));
    }
    if let Some(s) = c.seed {
        spec.seed = Some(s);
    }
    if let Some(n) = c.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be >= 1".into()));
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| CliError::Io(e.to_string()))?;
    }
    let mut sink = Sink::new(&c.out, spec)?;
    swssb_cli::run::run(&mut sink)?;
    Ok(sink.written)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let (kind, common) = match cli.command {
        Command::Evolve(c) => (Kind::Evolve, c),
        Command::Correlators(c) => (Kind::Correlators, c),
        Command::Cmi(c) => (Kind::Cmi, c),
        Command::Decode(c) => (Kind::Decode, c),
        Command::Winding(c) => (Kind::Winding, c),
        Command::Hydro(c) => (Kind::Hydro, c),
        Command::Rotor(c) => (Kind::Rotor, c),
        Command::Rg(c) => (Kind::Rg, c),
        Command::Modelf(c) => (Kind::Modelf, c),
    };
    match execute(kind, common) {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("swssb: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
