mod charts;
mod cli;
mod commands;
mod config;
mod error;
mod manifest;

use clap::error::ErrorKind;
use clap::Parser;

use crate::cli::{Cli, Command};
use crate::commands::Ctx;
use crate::config::Resolver;
use crate::error::{CliError, EXIT_OK, EXIT_USAGE};

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().filter_or("ELICIT_LOG", level))
        .format_timestamp(None)
        .try_init();
}

fn run(cli: Cli, argv: Vec<String>) -> Result<(), CliError> {
    init_logging(cli.global.verbose);
    let name = match &cli.command {
        Command::Ingest(_) => "ingest",
        Command::Label(_) => "label",
        Command::Prep(_) => "prep",
        Command::Split(_) => "split",
        Command::Train(_) => "train",
        Command::Eval(_) => "eval",
        Command::Classify(_) => "classify",
        Command::Report(_) => "report",
        Command::Serve(_) => "serve",
    };
    let mut ctx = Ctx::new(cli.global, name, argv, Resolver::from_process_env())?;
    let dir = match cli.command {
        Command::Ingest(a) => commands::ingest(&mut ctx, a)?,
        Command::Label(a) => commands::label(&mut ctx, a)?,
        Command::Prep(a) => commands::prep(&mut ctx, a)?,
        Command::Split(a) => commands::split_cmd(&mut ctx, a)?,
        Command::Train(a) => commands::train(&mut ctx, a)?,
        Command::Eval(a) => commands::eval(&mut ctx, a)?,
        Command::Classify(a) => commands::classify(&mut ctx, a)?,
        Command::Report(a) => commands::report(&mut ctx, a)?,
        Command::Serve(a) => commands::serve(&mut ctx, a)?,
    };
    if ctx.manifest.is_some() {
        let path = ctx.finish(&dir)?;
        log::info!("manifest: {}", path.display());
    }
    Ok(())
}

fn main() {
    let argv: Vec<String> = std::env::args().collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    if let Err(e) = run(cli, argv) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
