mod args;
mod commands;
mod config;
mod dump;
mod error;
mod manifest;

use std::ffi::OsString;

use clap::error::ErrorKind;
use clap::{CommandFactory, Parser};

use args::{Cli, Command};
use error::{usage, CliError, CliResult, Kind};

const SEED_ENV: &str = "STABLEAML_SEED";

fn main() {
    let code = match run(std::env::args_os().collect()) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", e.line());
            if let Some(extra) = &e.extra {
                eprintln!("{}", extra.trim_end());
            }
            e.kind.exit_code()
        }
    };
    std::process::exit(code);
}

/// `--seed`, else `STABLEAML_SEED`, else the command's default.
fn resolve_seed(flag: Option<u64>) -> CliResult<Option<u64>> {
    if flag.is_some() {
        return Ok(flag);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| usage(format!("{SEED_ENV}={v:?} is not an unsigned integer"))),
        Err(_) => Ok(None),
    }
}

fn parse(argv: Vec<OsString>) -> CliResult<Option<Cli>> {
    let argv = config::expand(argv, &Cli::command())?;
    match Cli::try_parse_from(argv) {
        Ok(cli) => Ok(Some(cli)),
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            print!("{e}");
            Ok(None)
        }
        Err(e) => {
            let text = e.to_string();
            let mut lines = text.lines();
            let first = lines.next().unwrap_or("invalid arguments");
            let rest: Vec<&str> = lines.collect();
            Err(CliError {
                kind: Kind::Usage,
                detail: first.trim_start_matches("error: ").to_string(),
                extra: Some(rest.join("\n").trim().to_string()),
            })
        }
    }
}

fn run(argv: Vec<OsString>) -> CliResult<()> {
    let Some(cli) = parse(argv)? else {
        return Ok(());
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(usage("--threads must be positive"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| usage(format!("thread pool: {e}")))?;
    }
    if let Some(path) = &cli.dump_model {
        return dump::dump(path);
    }
    let Some(command) = cli.command else {
        return Err(CliError {
            kind: Kind::Usage,
            detail: "no subcommand given".into(),
            extra: Some(Cli::command().render_help().to_string()),
        });
    };
    match &command {
        Command::Ingest(a) => commands::ingest(a),
        Command::Featurize(a) => commands::featurize(a),
        Command::GraphStats(a) => commands::graph_stats(a),
        Command::Synth(a) => commands::synth(a, resolve_seed(a.seed)?),
        Command::Train(a) => commands::train(a, resolve_seed(a.seed)?),
        Command::Evaluate(a) => commands::evaluate(a),
        Command::Explain(a) => commands::explain(a, resolve_seed(a.seed)?),
        Command::Report(a) => commands::report(a),
    }
    .map_err(|e| {
        if e.kind == Kind::Usage && e.extra.is_none() {
            CliError {
                extra: {
                    let mut root = Cli::command();
                    root.build();
                    root.find_subcommand_mut(command.name())
                        .map(|c| c.render_usage().to_string())
                },
                ..e
            }
        } else {
            e
        }
    })
}
