//! The `photostat` command line.
//!
//! [`run`] parses an argument list, runs one pipeline stage and returns the
//! process exit code: 0 on success, 1 on a usage error (after printing help
//! or the clap diagnostic), 2 when the computation fails. A failure prints a
//! JSON object `{"error": <kind>, "message": <text>}` on stderr, where
//! `kind` is [`photostat::Error::kind`].
//!
//! Relative output paths resolve against the directory named by
//! [`OUT_DIR_ENV`] when it is set. Every run writes a [`Manifest`] beside its
//! outputs.
//!
//! Every flag of every subcommand is documented in `--help`, defaults
//! included:
//!
//! ```
//! assert_eq!(photostat_cli::undocumented_flags(), Vec::<String>::new());
//! ```

mod args;
mod commands;
mod manifest;
mod recipes;
mod util;

use std::ffi::OsString;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{CommandFactory, Parser};

pub use args::Cli;
pub use manifest::Manifest;
pub use recipes::{
    saturation_intensities, write_saturation_csv, SATURATION_NOISE, SATURATION_TRUTH,
};

use args::Command;
use manifest::Outcome;

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "PHOTOSTAT_OUT_DIR";

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_COMPUTATION: i32 = 2;

/// The clap command tree, for help rendering and introspection.
pub fn command() -> clap::Command {
    Cli::command()
}

/// Runs one command line; `argv[0]` is the program name.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let started = SystemTime::now();
    let clock = Instant::now();
    match dispatch(&cli.command).and_then(|o| finish(o, &argv, started, clock)) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let report = serde_json::json!({ "error": e.kind(), "message": e.to_string() });
            eprintln!("{report}");
            EXIT_COMPUTATION
        }
    }
}

fn dispatch(cmd: &Command) -> photostat::Result<Outcome> {
    match cmd {
        Command::Simulate(a) => commands::simulate(a),
        Command::Correlate(a) => commands::correlate(a),
        Command::Fit(c) => commands::fit(c),
        Command::Thermo(c) => commands::thermo(c),
        Command::Scan(c) => commands::scan(c),
        Command::Reproduce(a) => recipes::reproduce(a),
    }
}

fn finish(
    o: Outcome,
    argv: &[OsString],
    started: SystemTime,
    clock: Instant,
) -> photostat::Result<()> {
    let manifest = Manifest {
        tool: "photostat".to_owned(),
        version: env!("CARGO_PKG_VERSION").to_owned(),
        argv: argv
            .iter()
            .map(|a| a.to_string_lossy().into_owned())
            .collect(),
        command: o.command.iter().map(|s| (*s).to_owned()).collect(),
        config: o.config,
        seeds: o.seeds,
        inputs: o.inputs,
        outputs: o.outputs,
        started_unix_s: started
            .duration_since(UNIX_EPOCH)
            .map_or(0.0, |d| d.as_secs_f64()),
        wall_clock_s: clock.elapsed().as_secs_f64(),
    };
    util::write_json(&o.manifest_path, &manifest)?;
    println!("{}", o.summary);
    Ok(())
}

/// Flags whose `--help` entry lacks a description or its default value,
/// as `"<subcommand path> --<flag>"`. Empty when the help is complete.
pub fn undocumented_flags() -> Vec<String> {
    let mut cmd = command();
    cmd.build();
    let mut gaps = Vec::new();
    collect_gaps(&mut cmd, "photostat", &mut gaps);
    gaps
}

fn collect_gaps(cmd: &mut clap::Command, path: &str, gaps: &mut Vec<String>) {
    let help = cmd.render_long_help().to_string();
    for arg in cmd.get_arguments() {
        let id = arg.get_id().as_str();
        if id == "help" || id == "version" {
            continue;
        }
        let name = arg
            .get_long()
            .map_or_else(|| format!("<{id}>"), |l| format!("--{l}"));
        if arg.get_help().is_none() && arg.get_long_help().is_none() {
            gaps.push(format!("{path} {name}: no description"));
        }
        if arg.get_long().is_some() && !help.contains(&name) {
            gaps.push(format!("{path} {name}: missing from help"));
        }
        // Switches carry an implicit `false` that help never shows.
        let defaults = if arg.get_action().takes_values() { arg.get_default_values() } else { &[] };
        for d in defaults {
            let shown = format!("[default: {}]", d.to_string_lossy());
            if !help.contains(&shown) {
                gaps.push(format!("{path} {name}: default not shown"));
            }
        }
    }
    let names: Vec<String> = cmd
        .get_subcommands()
        .map(|s| s.get_name().to_owned())
        .collect();
    for n in names {
        if n == "help" {
            continue;
        }
        let sub = cmd.find_subcommand_mut(&n).expect("listed subcommand");
        collect_gaps(sub, &format!("{path} {n}"), gaps);
    }
}
