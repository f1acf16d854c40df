use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use so3krates::data::RotorChainSpec;
use so3krates_cli::commands::{self, DumpKind, GenDataOptions, VerifyOptions};
use so3krates_cli::{CliError, RunConfig};

/// Train and inspect SO(3)-equivariant attention potentials.
#[derive(Parser, Debug)]
#[command(name = "so3krates", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a rotor-chain dataset as train/valid/test extended-XYZ files.
    GenData {
        /// Chain carbons (even, at least 4).
        #[arg(long, default_value_t = 10)]
        n_carbons: usize,
        #[arg(long, default_value_t = 101)]
        samples: usize,
        /// Training structures; 80% of the samples by default.
        #[arg(long)]
        n_train: Option<usize>,
        /// Validation structures; 10% of the samples by default.
        #[arg(long)]
        n_valid: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// C-C spacing in Angstrom.
        #[arg(long, default_value_t = 1.28)]
        cc: f64,
        /// C-H bond length in Angstrom.
        #[arg(long, default_value_t = 1.09)]
        ch: f64,
        /// H-C-H angle in degrees.
        #[arg(long, default_value_t = 120.0)]
        hch: f64,
        /// Energy amplitude A in E = A cos(2 theta).
        #[arg(long, default_value_t = 0.5)]
        amplitude: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model; writes checkpoints, metrics.csv and config.toml to out_dir.
    Train {
        /// Configuration document (TOML key = value).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Override a configuration key, e.g. --set epochs=200.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        /// Continue from out_dir/last.
        #[arg(long)]
        resume: bool,
    },
    /// Report energy and force errors of a checkpoint on a dataset.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Fit the energy shift on this dataset instead of the evaluated one.
        #[arg(long)]
        shift_data: Option<PathBuf>,
        /// Also write the report to this file.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Run the symmetry, gradient and coefficient-table checks.
    Verify {
        /// Check trained parameters instead of a fresh model.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Random structures for the model checks.
        #[arg(long, default_value_t = 10)]
        structures: usize,
        /// Rigid motions per structure.
        #[arg(long, default_value_t = 5)]
        motions: usize,
        #[arg(long, hide = true)]
        corrupt_cg: bool,
    },
    /// Write attention coefficients and SPHC vectors as CSV.
    Dump {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum, default_value_t = What::All)]
        what: What,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum What {
    Attention,
    Sphc,
    All,
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::GenData {
            n_carbons,
            samples,
            n_train,
            n_valid,
            seed,
            cc,
            ch,
            hch,
            amplitude,
            out,
        } => {
            let opts = GenDataOptions {
                spec: RotorChainSpec {
                    n_carbons,
                    cc,
                    ch,
                    hch_deg: hch,
                    amplitude,
                    seed,
                },
                samples,
                n_train,
                n_valid,
                out,
            };
            let s = commands::gen_data(&opts)?;
            println!(
                "wrote {} train, {} valid, {} test structures of {} atoms to {}",
                s.train,
                s.valid,
                s.test,
                s.atoms_per_structure,
                opts.out.display()
            );
        }
        Command::Train {
            config,
            overrides,
            resume,
        } => {
            let cfg = RunConfig::load(config.as_deref(), &overrides)?;
            let s = commands::train(&cfg, resume)?;
            println!(
                "trained {} epochs (now at epoch {}, {} optimizer steps); loss {} -> {}",
                s.epochs_run,
                s.final_epoch,
                s.optimizer_steps,
                s.first_loss.map_or("-".into(), |v| format!("{v:.6e}")),
                s.last_loss.map_or("-".into(), |v| format!("{v:.6e}")),
            );
            println!("outputs in {}", s.out_dir.display());
        }
        Command::Eval {
            checkpoint,
            data,
            shift_data,
            report,
        } => {
            let r = commands::eval(&checkpoint, &data, shift_data.as_deref())?;
            print!("{r}");
            if let Some(p) = report {
                std::fs::write(p, r.to_string())?;
            }
        }
        Command::Verify {
            checkpoint,
            config,
            overrides,
            seed,
            structures,
            motions,
            corrupt_cg,
        } => {
            let cfg = RunConfig::load(config.as_deref(), &overrides)?;
            let report = commands::verify(&VerifyOptions {
                checkpoint,
                config: cfg,
                seed,
                structures,
                motions,
                corrupt_cg,
            })?;
            print!("{report}");
            if !report.all_passed() {
                let failed = report.checks.iter().filter(|c| !c.passed()).count();
                return Err(CliError::Numeric(format!("{failed} check(s) failed")));
            }
        }
        Command::Dump {
            checkpoint,
            data,
            what,
            out,
        } => {
            let kind = match what {
                What::Attention => DumpKind::Attention,
                What::Sphc => DumpKind::Sphc,
                What::All => DumpKind::All,
            };
            let s = commands::dump(&checkpoint, &data, kind, &out)?;
            for f in &s.files {
                println!("wrote {}", f.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
