use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lieval_core::experiment::{
    keyspace_report, run_report, stage_attack, stage_encrypt, stage_evaluate, write_report, ExperimentConfig,
    ExperimentError, Layout,
};

#[derive(Parser)]
#[command(name = "lieval", version, about = "Encrypt images, attack the ciphertexts, score the reconstructions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write plaintexts, ciphertexts and key records for every cell.
    Encrypt(Common),
    /// Run each cell's attack on the ciphertexts written by `encrypt`.
    Attack(Common),
    /// Score reconstructions written by `attack`; writes report.json and metrics.csv.
    Evaluate(Common),
    /// Encrypt, attack and evaluate in one pass.
    Report(Common),
    /// Print the key-space size of a scheme.
    Keyspace {
        #[arg(long, value_parser = ["pixelwise", "blockwise"])]
        scheme: String,
        /// Pixel count, required for the pixel-wise scheme.
        #[arg(long)]
        n: Option<u64>,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Output directory; defaults to the config's `output_dir`, then `out`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// `dotted.path=value`, applied to the config before validation.
    #[arg(long = "seed-override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl Common {
    fn load(&self) -> Result<(ExperimentConfig, Layout), ExperimentError> {
        let cfg = ExperimentConfig::load(&self.config, &self.overrides)?;
        let root = self
            .out
            .clone()
            .or_else(|| cfg.output_dir.clone())
            .unwrap_or_else(|| Path::new("out").to_path_buf());
        Ok((cfg, Layout::new(root)))
    }
}

fn run(cli: Cli) -> Result<(), ExperimentError> {
    match cli.command {
        Command::Encrypt(c) => {
            let (cfg, layout) = c.load()?;
            stage_encrypt(&cfg, &layout)?;
            println!("ciphertexts written to {}", layout.root.display());
        }
        Command::Attack(c) => {
            let (cfg, layout) = c.load()?;
            stage_attack(&cfg, &layout)?;
            println!("reconstructions written to {}", layout.root.display());
        }
        Command::Evaluate(c) => {
            let (cfg, layout) = c.load()?;
            let report = stage_evaluate(&cfg, &layout)?;
            write_report(&layout, &report)?;
            print_summary(&report);
        }
        Command::Report(c) => {
            let (cfg, layout) = c.load()?;
            let report = run_report(&cfg, &layout)?;
            print_summary(&report);
        }
        Command::Keyspace { scheme, n } => {
            let ks = keyspace_report(&scheme, n)?;
            println!("{}", serde_json::to_string_pretty(&ks).expect("json"));
        }
    }
    Ok(())
}

fn print_summary(report: &lieval_core::experiment::Report) {
    println!("{:<10} {:<10} {:<6} {:>10} {:>10} {:>12}", "scheme", "policy", "attack", "ssim", "baseline", "mse");
    for c in &report.cells {
        println!(
            "{:<10} {:<10} {:<6} {:>10.4} {:>10.4} {:>12.2}",
            c.scheme, c.key_policy, c.attack, c.mean_ssim, c.baseline_ssim, c.mean_mse
        );
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
