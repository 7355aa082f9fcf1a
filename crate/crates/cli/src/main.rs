//! `zt5g`: enroll devices, build the HAKF database, run handshakes (honest
//! or attacked) and simulation sweeps.

mod demo;
mod failure;
mod report;
mod workspace;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use demo::Adversary;
use failure::Failure;
use workspace::{user_seed, Profile, Workspace};

#[derive(Parser)]
#[command(name = "zt5g", version, about = "PUF-bound post-quantum device authentication toolkit")]
struct Cli {
    /// Workspace directory.
    #[arg(long, global = true, default_value = ".")]
    workspace: PathBuf,
    /// Seed for reproducible runs. Random when absent.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Create keys, a simulated HRA device and its hashed image for a user.
    Enroll {
        user_id: String,
        /// Challenge bits of the HRA device; the image has 2^m rows.
        #[arg(long, default_value_t = 8, value_parser = clap::value_parser!(u8).range(1..=20))]
        m: u8,
        #[arg(long, value_enum, default_value_t = Profile::Default)]
        params: Profile,
        /// Merkle tree height; the user can sign 2^h times.
        #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u8).range(1..=20))]
        sign_height: u8,
    },
    /// Build the HAKF database from every enrolled image.
    InitDb,
    /// Run one handshake between two enrolled users.
    Handshake {
        initiator: String,
        responder: String,
        #[arg(long, value_enum)]
        adversary: Option<Adversary>,
    },
    /// Run a simulation sweep and write CSV results.
    Simulate {
        /// Scenario file (TOML). Defaults apply to anything left out.
        #[arg(long)]
        scenario: Option<PathBuf>,
        /// Summary CSV. Defaults to results/sweep.csv in the workspace.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Plot overhead and latency from a summary CSV.
    Report {
        /// Summary CSV. Defaults to results/sweep.csv in the workspace.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Directory for the SVG files. Defaults to the input's directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print a scenario file with every default filled in.
    Scenario,
}

fn run(cli: Cli, out: &mut impl Write) -> anyhow::Result<()> {
    let ws = Workspace::new(&cli.workspace);
    match cli.command {
        Command::Enroll {
            user_id,
            m,
            params,
            sign_height,
        } => {
            let creds = ws.enroll(&user_id, user_seed(cli.seed, &user_id), m, sign_height, params)?;
            writeln!(
                out,
                "enrolled {user_id}: {} image rows, {} signatures",
                1u64 << m,
                creds.signer.remaining_signatures()
            )?;
        }
        Command::InitDb => {
            let db = ws.init_db()?;
            writeln!(
                out,
                "wrote {}: {} users, {} rows",
                ws.db_path().display(),
                db.user_count(),
                db.row_count()
            )?;
        }
        Command::Handshake {
            initiator,
            responder,
            adversary,
        } => {
            let mut rng = match cli.seed {
                Some(s) => ChaCha20Rng::seed_from_u64(s),
                None => ChaCha20Rng::from_entropy(),
            };
            demo::run(&ws, &initiator, &responder, adversary, &mut rng, out)?;
        }
        Command::Simulate { scenario, out: csv } => {
            let mut s = report::load_scenario(scenario.as_deref())?;
            if let Some(seed) = cli.seed {
                s.sweep.first_seed = seed;
            }
            let csv = csv.unwrap_or_else(|| ws.results_dir().join("sweep.csv"));
            report::simulate(&s, &csv, out)?;
        }
        Command::Report { input, out: dir } => {
            let input = input.unwrap_or_else(|| ws.results_dir().join("sweep.csv"));
            let dir = dir.unwrap_or_else(|| {
                input
                    .parent()
                    .filter(|p| !p.as_os_str().is_empty())
                    .map(PathBuf::from)
                    .unwrap_or_else(|| PathBuf::from("."))
            });
            for p in report::report(&input, &dir)? {
                writeln!(out, "wrote {}", p.display())?;
            }
        }
        Command::Scenario => write!(out, "{}", zt5g_core::SimScenario::default().to_toml())?,
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut stdout = std::io::stdout().lock();
    match run(cli, &mut stdout) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (class, code) = match e.downcast_ref::<Failure>() {
                Some(f) => (f.class, f.exit_code()),
                None => ("internal", 1),
            };
            let _ = stdout.flush();
            eprintln!("error[{class}]: {e:#}");
            ExitCode::from(code)
        }
    }
}
