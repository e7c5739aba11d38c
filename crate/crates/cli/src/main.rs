mod args;
mod commands;
mod report;

use std::ffi::OsString;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

use args::{Cli, Command, LogLevel};
use commands::Ctx;

fn init_logging(level: LogLevel) {
    let filter = match level {
        LogLevel::Error => log::LevelFilter::Error,
        LogLevel::Warn => log::LevelFilter::Warn,
        LogLevel::Info => log::LevelFilter::Info,
        LogLevel::Debug => log::LevelFilter::Debug,
        LogLevel::Trace => log::LevelFilter::Trace,
    };
    env_logger::Builder::new()
        .filter_level(filter)
        .format_timestamp(None)
        .init();
}

/// 0 success, 1 usage or validation failure, 2 I/O or malformed input.
fn exit_code(err: &cvdsm::Error) -> u8 {
    if err.is_io() || matches!(err, cvdsm::Error::Parse { .. }) {
        2
    } else {
        1
    }
}

fn run(argv: impl IntoIterator<Item = OsString>) -> u8 {
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    init_logging(cli.log_level);

    let threads = match cli.threads {
        Some(0) => {
            eprintln!("error: --threads must be at least 1");
            return 1;
        }
        Some(n) => {
            if let Err(e) = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
            {
                log::warn!("could not size the thread pool: {e}");
            }
            n
        }
        None => rayon::current_num_threads(),
    };
    let ctx = Ctx {
        seed: cli.seed,
        exec: if threads == 1 {
            cvdsm::Exec::Sequential
        } else {
            cvdsm::Exec::Parallel
        },
        threads,
        timestamp: !cli.no_timestamp,
    };

    let result = match &cli.command {
        Command::Polar(a) => commands::polar(a),
        Command::Extract(a) => commands::extract(&ctx, a),
        Command::Synth(a) => commands::synth(&ctx, a),
        Command::Index(a) => commands::index(&ctx, a),
        Command::Match(a) => commands::match_cmd(a),
        Command::Query(a) => commands::query(&ctx, a),
        Command::Evaluate(a) => commands::evaluate(&ctx, a),
        Command::Bench(a) => commands::bench(&ctx, a),
        Command::TrainToy(a) => commands::train(&ctx, a),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn main() -> ExitCode {
    ExitCode::from(run(std::env::args_os()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn io_errors_exit_2_and_validation_errors_exit_1() {
        let io = cvdsm::Error::Io(std::io::Error::new(std::io::ErrorKind::NotFound, "x"));
        assert_eq!(exit_code(&io), 2);
        assert_eq!(exit_code(&cvdsm::Error::Format("bad magic".into())), 2);
        assert_eq!(exit_code(&cvdsm::Error::Validation("dup".into())), 1);
        assert_eq!(exit_code(&cvdsm::Error::Dimension("dims".into())), 1);
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
