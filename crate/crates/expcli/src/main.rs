use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use rls_exp::runner::{run, RunStatus};
use rls_exp::suites::{run_suite, Suite, VerifyOptions};
use rls_exp::trace::TraceFile;
use rls_exp::{catalog, plot, ExpError};

#[derive(Parser)]
#[command(
    name = "rls-exp",
    version,
    about = "Run and verify recursive least squares experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum SuiteArg {
    Oracle,
    Invariants,
    Bounds,
    All,
}

impl From<SuiteArg> for Suite {
    fn from(s: SuiteArg) -> Self {
        match s {
            SuiteArg::Oracle => Suite::Oracle,
            SuiteArg::Invariants => Suite::Invariants,
            SuiteArg::Bounds => Suite::Bounds,
            SuiteArg::All => Suite::All,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write its CSV trace.
    Run {
        /// Builtin name or path to a scenario TOML file.
        #[arg(long)]
        scenario: String,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Also render SVG figures from the written CSV.
        #[arg(long)]
        plots: bool,
    },
    /// Run verification suites; exits 1 if any check fails.
    Verify {
        #[arg(long, value_enum, default_value = "all")]
        suite: SuiteArg,
        /// Evaluate the Prop-4 bound with a wrong λ (negative control).
        #[arg(long, num_args = 0..=1, default_missing_value = "0.9", value_name = "LAMBDA")]
        corrupt_lambda: Option<f64>,
    },
    /// List builtin scenarios.
    List {
        /// Emit JSON instead of a table.
        #[arg(long)]
        machine: bool,
    },
}

const EXIT_CHECK_FAILED: u8 = 1;
const EXIT_DIVERGED: u8 = 3;

/// Prints a line; a closed pipe (e.g. `| head`) is not an error.
fn say(line: impl std::fmt::Display) {
    let _ = writeln!(std::io::stdout().lock(), "{line}");
}

fn cmd_run(scenario: &str, steps: Option<usize>, seed: Option<u64>, out: PathBuf, plots: bool) -> Result<u8, ExpError> {
    let sc = catalog::resolve(scenario)?.with_overrides(steps, seed)?;
    let output = run(&sc)?;
    let trace = TraceFile::from_run(&output);
    let path = out.join(format!("{}.csv", sc.name));
    trace.write_atomic(&path)?;
    say(format_args!("wrote {} ({} rows)", path.display(), trace.rows.len()));
    if plots {
        for f in plot::plot_trace(&path)? {
            say(format_args!("wrote {}", f.display()));
        }
    }
    Ok(match output.status {
        RunStatus::Completed => 0,
        RunStatus::Diverged { k, reason } => {
            eprintln!("divergence guard tripped at k = {k}: {reason}");
            EXIT_DIVERGED
        }
    })
}

fn cmd_verify(suite: Suite, corrupt_lambda: Option<f64>) -> u8 {
    let results = run_suite(suite, &VerifyOptions { corrupt_lambda });
    for r in &results {
        say(r);
    }
    let failed = results.iter().filter(|r| !r.passed).count();
    say(format_args!(
        "{} checks, {} passed, {failed} failed",
        results.len(),
        results.len() - failed
    ));
    if failed == 0 {
        0
    } else {
        EXIT_CHECK_FAILED
    }
}

fn cmd_list(machine: bool) -> Result<u8, ExpError> {
    let entries = catalog::catalog();
    if machine {
        let json = serde_json::to_string_pretty(&entries)?;
        say(json);
    } else {
        for e in entries {
            say(format_args!(
                "{:<24} {:<20} lambda={:<6} {}",
                e.name, e.strategy, e.lambda, e.description
            ));
            say(format_args!("{:<24} mirrors: {}", "", e.mirrors));
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            scenario,
            steps,
            seed,
            out,
            plots,
        } => cmd_run(&scenario, steps, seed, out, plots),
        Command::Verify { suite, corrupt_lambda } => Ok(cmd_verify(suite.into(), corrupt_lambda)),
        Command::List { machine } => cmd_list(machine),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
