use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ebsrd::compare::compare_dirs;
use ebsrd::config::{ExperimentConfig, StabilizerName};
use ebsrd::output::{plan_dump, write_file};
use ebsrd::run::run_config;
use ebsrd::{exit, CliError, Experiment, Overrides};

#[derive(Parser, Debug)]
#[command(name = "ebsrd", version, about = "Embedded-boundary state redistribution experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run an experiment and write its artifacts.
    Run {
        config: PathBuf,
        /// Artifact directory; defaults to `out/<config name>`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Number of patches to decompose the domain into.
        #[arg(long)]
        patches: Option<usize>,
        /// none, frd, srd-original or srd-weighted.
        #[arg(long, value_parser = parse_stabilizer)]
        stabilizer: Option<StabilizerName>,
        /// Override the number of steps.
        #[arg(long)]
        steps: Option<usize>,
        /// Report the deepest ghost rings read by the stabilizer.
        #[arg(long)]
        check_reads: bool,
    },
    /// Compare the field dumps of two run directories.
    Compare {
        a: PathBuf,
        b: PathBuf,
        /// Where to write the report line.
        #[arg(long, default_value = "compare.txt")]
        report: PathBuf,
    },
    /// Print the neighborhood plan of a config's mesh.
    DumpPlan { config: PathBuf },
}

fn parse_stabilizer(s: &str) -> Result<StabilizerName, String> {
    StabilizerName::parse(s).ok_or_else(|| format!("unknown stabilizer `{s}`"))
}

fn default_out(config: &Path) -> PathBuf {
    let stem = config.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "run".into());
    Path::new("out").join(stem)
}

fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run { config, out, patches, stabilizer, steps, check_reads } => {
            let base = ExperimentConfig::load(&config)?;
            let cfg = Overrides { patches, stabilizer, steps }.apply(&base)?;
            let dir = out.unwrap_or_else(|| default_out(&config));
            let (_, summary) = run_config(&cfg, Some(&dir))?;
            println!(
                "steps={} time={:e} dt={:e} min={:e} max={:e} total={:e}",
                summary.steps, summary.time, summary.dt, summary.min, summary.max, summary.total
            );
            if summary.diagnostics.rank_deficient > 0 {
                eprintln!(
                    "warning: {} rank-deficient slope fits, first at {:?}",
                    summary.diagnostics.rank_deficient, summary.diagnostics.first_rank_deficient
                );
            }
            if check_reads {
                let halo = cfg.scheme_config()?.halo;
                let (pre, post) = summary.halo_reads;
                println!("READS pre={pre}/{} post={post}/{}", halo.pre, halo.post);
            }
            println!("artifacts in {}", dir.display());
        }
        Command::Compare { a, b, report } => {
            let cmp = compare_dirs(&a, &b)?;
            let line = cmp.report();
            println!("{line}");
            write_file(&report, &format!("{line}\n"))?;
        }
        Command::DumpPlan { config } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if !matches!(cfg.scheme.stabilizer, StabilizerName::SrdOriginal | StabilizerName::SrdWeighted) {
                cfg.scheme.stabilizer = StabilizerName::SrdWeighted;
            }
            let exp = Experiment::build(&cfg)?;
            emit(&plan_dump(exp.solver.plans())?)?;
        }
    }
    Ok(())
}

/// Write to stdout; a reader that closes the pipe early is not an error.
fn emit(text: &str) -> Result<(), CliError> {
    match std::io::stdout().lock().write_all(text.as_bytes()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(CliError::io("stdout", e)),
        _ => Ok(()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::from(exit::OK as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
