use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use pucci_lab::probe::LemmaConfig;
use pucci_lab::scenario::{domain_summary, gnuplot_columns, sweep, Body, LedgerRequest, Scenario, Vary};
use pucci_lab::LabError;

#[derive(Parser)]
#[command(name = "lab", version, about = "Boundary differentiability experiments for the Pucci class")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve, probe and cross-check one scenario, writing its report bundle.
    Run {
        file: PathBuf,
        #[arg(long, env = "LAB_OUT", default_value = "out")]
        out: PathBuf,
    },
    /// Run a scenario over the Cartesian product of the varied keys.
    Sweep {
        file: PathBuf,
        /// `key=v1,v2,...`; repeat for more axes. Keys like `h`, `eta`, `domain.beta`.
        #[arg(long)]
        vary: Vec<Vary>,
        #[arg(long)]
        jobs: Option<usize>,
        #[arg(long, env = "LAB_OUT", default_value = "out")]
        out: PathBuf,
    },
    /// Run the lemma suite with default settings.
    Lemmas {
        #[arg(long, env = "LAB_OUT", default_value = "out")]
        out: PathBuf,
        /// Grid step of the lemma solves.
        #[arg(long)]
        h: Option<f64>,
    },
    /// Run a dyadic recurrence directly and print its trace as CSV.
    Ledger {
        /// 31 (one-sided), L41 (bracket) or 41 (two-sided).
        #[arg(long)]
        theorem: String,
        /// `eta=..,mu=..,alpha1=..,c0=..` plus optional cbar, depth, sigma, omega, oracle.
        #[arg(long)]
        params: String,
    },
    /// Report the geometric conditions of a scenario's domain as JSON.
    CheckDomain { file: PathBuf },
    /// Convert a CSV report to whitespace-separated columns for gnuplot.
    Columns { file: PathBuf },
}

fn lab_error(e: &anyhow::Error) -> Option<&LabError> {
    e.chain().find_map(|c| c.downcast_ref::<LabError>())
}

fn run(out: &Path, sc: &Scenario) -> anyhow::Result<()> {
    let output = sc.execute()?;
    let paths = output.write(out)?;
    let m = &output.report.metrics;
    println!("{}: wrote {}", sc.name, paths.report.display());
    if let Some(v) = &output.report.verdict {
        println!(
            "  verdict {:?}, exponent {:.4}, gradient ({:.3e}, {:.3e})",
            v.differentiable,
            m.exponent.unwrap_or(f64::NAN),
            v.gradient_estimate[0],
            v.gradient_estimate[1]
        );
    }
    if let Some(e) = &output.report.probe_error {
        println!("  probe: {e}");
    }
    if let Some(r) = &output.report.lemmas {
        for rec in r {
            println!("  {} {}", if rec.passed { "pass" } else { "FAIL" }, rec.name);
        }
    }
    if let Some(r) = &output.report.recurrence {
        println!("  recurrence {:?}: {}", r.recurrence, if r.passed { "bounds hold" } else { "bound violated" });
    }
    Ok(())
}

fn dispatch(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Run { file, out } => run(&out, &Scenario::load(&file)?),
        Command::Sweep { file, vary, jobs, out } => {
            let text = std::fs::read_to_string(&file)
                .map_err(|e| LabError::config("file", format!("{}: {e}", file.display())))?;
            let base = file.parent().unwrap_or(Path::new(""));
            let jobs = jobs.unwrap_or_else(rayon::current_num_threads);
            let outcome = sweep(&text, base, &vary, jobs, Some(&out))?;
            print!("{}", outcome.csv);
            if outcome.failures > 0 {
                anyhow::bail!(SweepFailed(outcome.first_failure_code.unwrap_or(1), outcome.failures, outcome.rows));
            }
            Ok(())
        }
        Command::Lemmas { out, h } => {
            let mut body = LemmaConfig::default();
            if let Some(h) = h {
                body.h = h;
            }
            let sc = Scenario {
                name: "lemma_suite".into(),
                description: "lemma suite with default settings".into(),
                seed: 0,
                body: Body::Lemmas(body),
                base: PathBuf::new(),
            };
            // reparse so the command line gets the same validation as a file
            let sc = Scenario::from_toml(&sc.canonical(), Path::new(""))?;
            run(&out, &sc)
        }
        Command::Ledger { theorem, params } => {
            let trace = LedgerRequest::parse(&theorem, &params)?.run()?;
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(trace.to_csv(None).as_bytes())?;
            for c in &trace.checks {
                eprintln!("{} {}: {}", if c.pass { "pass" } else { "FAIL" }, c.name, c.detail);
            }
            Ok(())
        }
        Command::CheckDomain { file } => {
            let summary = domain_summary(&Scenario::load(&file)?)?;
            println!("{}", serde_json::to_string_pretty(&summary)?);
            Ok(())
        }
        Command::Columns { file } => {
            let text = std::fs::read_to_string(&file)?;
            print!("{}", gnuplot_columns(&text));
            Ok(())
        }
    }
}

#[derive(Debug)]
struct SweepFailed(i32, usize, usize);

impl std::fmt::Display for SweepFailed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} of {} sweep members failed; output is partial", self.1, self.2)
    }
}

impl std::error::Error for SweepFailed {}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let code = match (e.downcast_ref::<SweepFailed>(), lab_error(&e)) {
                (Some(s), _) => s.0,
                (None, Some(l)) => l.exit_code(),
                (None, None) => 1,
            };
            ExitCode::from(code as u8)
        }
    }
}
