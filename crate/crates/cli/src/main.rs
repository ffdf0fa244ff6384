use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use magflow::config::RunConfig;
use magflow::run;

/// Certify the Anosov property of magnetic flows on surfaces.
#[derive(Parser)]
#[command(name = "magflow", version)]
struct Cli {
    /// More log output (-v info, -vv debug, -vvv trace).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Classify the configured model; writes report.json, summary.txt and
    /// orbit CSVs.
    Run(Common),
    /// Classify over the `[sweep]` grid; writes sweep.csv.
    Sweep(Common),
}

#[derive(Args)]
struct Common {
    /// TOML configuration file.
    config: PathBuf,
    /// Output directory (overrides `output.directory`).
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Worker threads (overrides `output.workers`).
    #[arg(short = 'j', long)]
    workers: Option<usize>,
}

impl Common {
    fn load(&self) -> magflow::Result<RunConfig> {
        let mut cfg = RunConfig::load(&self.config)?;
        if let Some(dir) = &self.output {
            cfg.output.directory = dir.clone();
        }
        if self.workers.is_some() {
            cfg.output.workers = self.workers;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        2 => log::LevelFilter::Debug,
        _ => log::LevelFilter::Trace,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .parse_default_env()
        .init();

    let result = match &cli.command {
        Command::Run(c) => c.load().and_then(|cfg| run::run(&cfg)).map(|out| {
            println!("{}", out.report.verdict);
            let dir = out.files.first().and_then(|f| f.parent());
            println!(
                "wrote {} files to {}",
                out.files.len(),
                dir.unwrap_or(".".as_ref()).display()
            );
            out.exit_code
        }),
        Command::Sweep(c) => c.load().and_then(|cfg| run::sweep(&cfg)).map(|out| {
            for r in &out.rows {
                println!("{:<10} {}", r.parameter, r.verdict);
            }
            println!("wrote {}", out.csv.display());
            out.exit_code
        }),
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
