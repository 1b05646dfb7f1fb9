//! `tsobound`: command-line front end of the TSO verifier.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use tsobound_core::explore::{replay, DEFAULT_BUDGET_STATES};
use tsobound_core::program::{constant_write_transform, print_program, Program, DEFAULT_BRANCH_LIMIT};
use tsobound_core::symbolic::{export_trace_automaton, LabelRegistry};
use tsobound_core::verify::{
    bench, load_program, parse_events, render_bench_table, verify, VerifyOptions, EXIT_INPUT,
};

#[derive(Parser)]
#[command(name = "tsobound", version, about = "Safety verification of concurrent programs under TSO")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Structured,
}

#[derive(Subcommand)]
enum Command {
    /// Search for a buffer bound at which the program is proved safe or a
    /// counterexample appears; optionally repair it with fences.
    Verify {
        path: PathBuf,
        #[arg(long, default_value_t = 16)]
        k_max: usize,
        /// Insert fences on TSO counterexamples until the program is safe.
        #[arg(long)]
        fence: bool,
        /// Replace the program's specification, e.g. `error: P1@L4 && P2@L9;`.
        #[arg(long)]
        spec: Option<String>,
        #[arg(long, default_value_t = DEFAULT_BUDGET_STATES)]
        budget_states: usize,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Replay an event file (`step P L` / `flush P x=v` per line).
    Trace {
        path: PathBuf,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        events_file: PathBuf,
    },
    /// Verify every `*.tso` file of a directory with fence synthesis.
    Bench {
        dir: PathBuf,
        #[arg(long, default_value_t = 16)]
        k_max: usize,
        #[arg(long, default_value_t = DEFAULT_BUDGET_STATES)]
        budget_states: usize,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Print the symbolic trace automaton for a buffer bound.
    Symbolic {
        path: PathBuf,
        #[arg(long)]
        k: usize,
        /// Rewrite writes so that they only store constants first.
        #[arg(long)]
        constant_writes: bool,
        #[arg(long, default_value_t = 100_000)]
        max_states: usize,
    },
    /// Print the program in automaton form.
    Print {
        path: PathBuf,
        #[arg(long)]
        constant_writes: bool,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    ExitCode::from(run(cli.command) as u8)
}

/// Writes to stdout, ignoring a closed pipe.
fn emit(text: &str) {
    let _ = std::io::stdout().lock().write_all(text.as_bytes());
}

fn input_error(e: impl std::fmt::Display) -> i32 {
    eprintln!("error: {e}");
    EXIT_INPUT
}

fn load(path: &Path, spec: Option<&str>, constant_writes: bool) -> Result<Program, i32> {
    let p = load_program(path, spec).map_err(input_error)?;
    if constant_writes {
        constant_write_transform(&p, DEFAULT_BRANCH_LIMIT).map_err(input_error)
    } else {
        Ok(p)
    }
}

fn run(cmd: Command) -> i32 {
    match cmd {
        Command::Verify {
            path,
            k_max,
            fence,
            spec,
            budget_states,
            format,
        } => {
            let p = match load(&path, spec.as_deref(), false) {
                Ok(p) => p,
                Err(code) => return code,
            };
            let name = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            let opts = VerifyOptions {
                k_max,
                budget_states,
                fence,
                ..VerifyOptions::default()
            };
            let report = verify(&name, &p, &opts).report;
            match format {
                Format::Text => emit(&report.render_text()),
                Format::Structured => emit(&format!("{}\n", report.to_json())),
            }
            report.exit_code()
        }
        Command::Trace {
            path,
            k,
            events_file,
        } => {
            let p = match load(&path, None, false) {
                Ok(p) => p,
                Err(code) => return code,
            };
            let text = match fs::read_to_string(&events_file) {
                Ok(t) => t,
                Err(e) => return input_error(format!("{}: {e}", events_file.display())),
            };
            let events = match parse_events(&p, &text) {
                Ok(ev) => ev,
                Err(e) => return input_error(format!("{}: {e}", events_file.display())),
            };
            match replay(&p, k, &events) {
                Ok(s) => {
                    emit(&format!("{}\n", s.render(&p)));
                    0
                }
                Err(e) => {
                    eprintln!("{e}");
                    1
                }
            }
        }
        Command::Bench {
            dir,
            k_max,
            budget_states,
            format,
        } => {
            let opts = VerifyOptions {
                k_max,
                budget_states,
                ..VerifyOptions::default()
            };
            let rows = match bench(&dir, &opts) {
                Ok(rows) => rows,
                Err(e) => return input_error(format!("{}: {e}", dir.display())),
            };
            match format {
                Format::Text => emit(&render_bench_table(&rows)),
                Format::Structured => emit(&format!(
                    "{}\n",
                    serde_json::to_string_pretty(&rows).expect("rows serialize")
                )),
            }
            0
        }
        Command::Symbolic {
            path,
            k,
            constant_writes,
            max_states,
        } => {
            let p = match load(&path, None, constant_writes) {
                Ok(p) => p,
                Err(code) => return code,
            };
            let reg = LabelRegistry::new(&p);
            match export_trace_automaton(&p, k, &reg, max_states) {
                Ok(text) => {
                    emit(&text);
                    0
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    3
                }
            }
        }
        Command::Print {
            path,
            constant_writes,
        } => match load(&path, None, constant_writes) {
            Ok(p) => {
                emit(&print_program(&p));
                0
            }
            Err(code) => code,
        },
    }
}
