//! The `ibnmp` command-line tool.

pub mod args;
mod commands;
pub mod demo;
pub mod exit;

use std::io::{IsTerminal, Write};

use clap::Parser;
use tracing_subscriber::EnvFilter;

pub use args::Cli;
pub use commands::write_view;
use exit::CliError;

/// Installs the stderr log subscriber once. `RUST_LOG` wins over `level`.
pub fn init_logging(level: &str) {
    let filter = EnvFilter::try_from_default_env()
        .or_else(|_| EnvFilter::try_new(level))
        .unwrap_or_else(|_| EnvFilter::new("info"));
    let _ = tracing_subscriber::fmt().with_env_filter(filter).with_writer(std::io::stderr)
        .with_ansi(std::io::stderr().is_terminal())
        .try_init();
}

/// Resolves on Ctrl-C or SIGTERM.
pub async fn shutdown_signal() {
    #[cfg(unix)]
    {
        use tokio::signal::unix::{signal, SignalKind};
        let mut term = signal(SignalKind::terminate()).expect("SIGTERM handler");
        tokio::select! {
            _ = tokio::signal::ctrl_c() => {}
            _ = term.recv() => {}
        }
    }
    #[cfg(not(unix))]
    let _ = tokio::signal::ctrl_c().await;
}

/// Executes a parsed command line and returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    if let Some(level) = &cli.log {
        init_logging(level);
    }
    let env = ibn_node::config::process_env();
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    let result: Result<(), CliError> = match cli.command {
        args::Command::Bench(cmd) => commands::bench(cmd, &mut out),
        args::Command::Keygen(a) => commands::keygen(a, &mut out),
        cmd => match tokio::runtime::Runtime::new() {
            Err(e) => Err(CliError::failure(e.to_string())),
            Ok(rt) => rt.block_on(async {
                match cmd {
                    args::Command::Ibnsc(a) => commands::ibnsc(a, &env, &mut out).await,
                    args::Command::Peer(a) => commands::peer(a, &env, &mut out).await,
                    args::Command::Demo(args::DemoCommand::Up(a)) => {
                        let exe = std::env::current_exe().map_err(|e| CliError::failure(e.to_string()))?;
                        let mut err = std::io::stderr();
                        tokio::select! {
                            r = demo::up(a, exe, &mut out, &mut err) => r.map(|_| ()),
                            _ = shutdown_signal() => Err(CliError::failure("interrupted")),
                        }
                    }
                    _ => unreachable!(),
                }
            }),
        },
    };
    let _ = out.flush();
    match result {
        Ok(()) => exit::OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.code
        }
    }
}

/// Parses `std::env::args` and runs.
pub fn main_with_args() -> i32 {
    run(Cli::parse())
}
