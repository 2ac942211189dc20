use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use kinex_cli::run::{collide_once, run};
use kinex_cli::scenario::{parse_scenario, CollideSpec};
use kinex_cli::{worker_count, CliError};
use kinex_core::{verify, MassLaw};

#[derive(Parser)]
#[command(name = "kinex", version, about = "Mass-exchange kinetic theory experiments and checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the scenario described by a JSON config.
    Run { config: PathBuf },
    /// Run a verification suite and print its JSON report.
    Verify {
        suite: Suite,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Small interactive demonstrations.
    Demo {
        #[command(subcommand)]
        demo: Demo,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Suite {
    Thermo,
    Collision,
    Kinetic,
}

#[derive(Subcommand)]
enum Demo {
    /// Apply the collision law to one pair and print the outgoing pair.
    Collide {
        #[arg(long)]
        m: u32,
        #[arg(long)]
        m1: u32,
        /// Outgoing mass of the first particle.
        #[arg(long)]
        m_out: u32,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_value = "1,0,0")]
        v: Vec<f64>,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_value = "-1,0,0")]
        v1: Vec<f64>,
        /// Deflection direction; must satisfy Ω·(v − v1) ≤ 0.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_value = "0,-1,0")]
        omega: Vec<f64>,
        #[arg(long, default_value_t = 3)]
        n: usize,
        #[arg(long, default_value_t = 8)]
        m_max: usize,
    },
}

fn init_pool(threads: usize) -> Result<usize, CliError> {
    let threads = worker_count(threads)?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::Validation(format!("thread pool: {e}")))?;
    Ok(threads)
}

fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run { config } => {
            let scn = parse_scenario(&config)?;
            let threads = init_pool(scn.threads)?;
            let summary = run(&scn, threads)?;
            println!("{}", serde_json::to_string_pretty(&summary).unwrap());
        }
        Command::Verify { suite, seed } => {
            init_pool(1)?;
            let report = match suite {
                Suite::Thermo => verify::thermo_suite(seed, 200),
                Suite::Collision => verify::collision_suite(seed, 10_000),
                Suite::Kinetic => verify::kinetic_suite(seed),
            }
            .map_err(|e| CliError::Numerical { stage: "verify".into(), message: e.to_string() })?;
            println!("{}", serde_json::to_string_pretty(&report).unwrap());
            if !report.all_passed() {
                return Err(CliError::Numerical { stage: format!("{} suite", report.suite), message: "some checks failed".into() });
            }
        }
        Command::Demo { demo: Demo::Collide { m, m1, m_out, v, v1, omega, n, m_max } } => {
            let law = MassLaw::uniform(m_max, n).map_err(|e| CliError::Validation(e.to_string()))?;
            let spec = CollideSpec { m, m1, v, v1, m_out, omega };
            let (p, q, a, b) = collide_once(&law, &spec)?;
            let out = serde_json::json!({
                "incoming": [p, q],
                "outgoing": [a, b],
                "momentum_error": (a.v * a.m as f64 + b.v * b.m as f64 - p.v * m as f64 - q.v * m1 as f64).norm(),
                "energy_error": (a.m as f64 * a.v.norm_squared() + b.m as f64 * b.v.norm_squared()
                    - m as f64 * p.v.norm_squared() - m1 as f64 * q.v.norm_squared()).abs(),
            });
            println!("{}", serde_json::to_string_pretty(&out).unwrap());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("kinex: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
