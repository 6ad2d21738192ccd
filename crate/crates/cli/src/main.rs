use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use iddm::checkpoint::Checkpoint;
use iddm::commands::{self, Model};
use iddm::config::RunConfig;
use iddm::{fixture, train, CliError};
use iddm_core::oracle::VerifyOptions;

#[derive(Parser)]
#[command(name = "iddm", version, about = "Interpolating discrete diffusion on toy data")]
struct Cli {
    /// Worker threads; outputs do not depend on this.
    #[arg(long, global = true, env = "IDDM_THREADS", default_value_t = 1)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the exact-enumeration check suite.
    Verify {
        #[arg(long, default_value_t = 10_000)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 8)]
        max_k: usize,
        /// Perturb the posterior weights by this amount (fault injection).
        #[arg(long, hide = true, default_value_t = 0.0)]
        inject_weight_fault: f64,
    },
    /// Train a denoiser and write a checkpoint.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate samples from a checkpoint.
    Sample {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0.0)]
        lambda: f64,
        #[arg(long, default_value_t = 4.0)]
        rho: f64,
        #[arg(long, default_value_t = 64)]
        steps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Negative ELBO per token and perplexity of a dataset file.
    Elbo {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 0.0)]
        lambda: f64,
        /// Grid warp; the bound is reported on the uniform grid by default.
        #[arg(long, default_value_t = 1.0)]
        rho: f64,
        #[arg(long, default_value_t = 64)]
        steps: usize,
        #[arg(long, default_value_t = iddm_core::objective::DEFAULT_MC)]
        mc: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Grid of samples and ELBOs over lambda, rho and step counts.
    Sweep {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "0")]
        lambdas: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "4")]
        rhos: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "64")]
        steps: Vec<usize>,
        #[arg(long, default_value_t = 1000)]
        n: usize,
        #[arg(long, default_value_t = iddm_core::objective::DEFAULT_MC)]
        mc: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also write the table here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn run(command: Command) -> Result<ExitCode, CliError> {
    match command {
        Command::Verify {
            trials,
            seed,
            max_k,
            inject_weight_fault,
        } => {
            let opts = VerifyOptions {
                trials,
                seed,
                max_k,
                weight_fault: inject_weight_fault,
            };
            let (reports, ok) = commands::verify(&opts);
            print!("{}", commands::format_verify_report(&reports));
            return Ok(if ok { ExitCode::SUCCESS } else { ExitCode::FAILURE });
        }
        Command::Train { config, out } => {
            let cfg = match config {
                Some(p) => RunConfig::load(&p)?,
                None => RunConfig::default(),
            };
            let outcome = train::train(&cfg, &mut |step, loss| {
                eprintln!("step {step}\tloss {loss:.6}");
            })?;
            Checkpoint::new(cfg, outcome.params)?.save(&out)?;
            if let Some(last) = outcome.losses.last() {
                println!("final_loss\t{last:.6}");
            }
        }
        Command::Sample {
            ckpt,
            n,
            lambda,
            rho,
            steps,
            seed,
            out,
        } => {
            let model = Model::from_checkpoint(Checkpoint::load(&ckpt)?)?;
            let run = commands::sample(&model, n, lambda, rho, steps, seed)?;
            fixture::write(&out, model.categories(), model.positions(), &run.samples)?;
            println!("mean_transitions\t{:.6}", run.mean_transitions());
        }
        Command::Elbo {
            ckpt,
            data,
            lambda,
            rho,
            steps,
            mc,
            seed,
        } => {
            let model = Model::from_checkpoint(Checkpoint::load(&ckpt)?)?;
            let data = fixture::read(&data)?;
            let (nats, ppl) = commands::elbo_metric(&model, &data, lambda, rho, steps, mc, seed)?;
            println!("nats_per_token\t{nats:.6}");
            println!("perplexity\t{ppl:.6}");
        }
        Command::Sweep {
            ckpt,
            lambdas,
            rhos,
            steps,
            n,
            mc,
            seed,
            out,
        } => {
            let model = Model::from_checkpoint(Checkpoint::load(&ckpt)?)?;
            let rows = commands::sweep(&model, &lambdas, &rhos, &steps, n, mc, seed)?;
            let table = commands::format_sweep(&rows);
            if let Some(path) = out {
                std::fs::write(&path, &table).map_err(|source| CliError::Io { path, source })?;
            }
            print!("{table}");
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let pool = match rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads.max(1))
        .build()
    {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {}", CliError::Threads(e.to_string()));
            return ExitCode::from(2);
        }
    };
    match pool.install(|| run(cli.command)) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
