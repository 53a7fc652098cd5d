//! `paircycle` command-line tool.
//!
//! Exit codes: 0 success, 2 data error, 3 configuration error, 4 analysis
//! refusal.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use paircycle::analysis::{analyze, AnalysisConfig};
use paircycle::config::{write_study_outputs, StudyConfig};
use paircycle::estimate::ComparisonData;
use paircycle::inference::Correction;
use paircycle::ingest::read_long_csv;
use paircycle::select::Method;
use paircycle::Error;

const EXIT_DATA: u8 = 2;
const EXIT_CONFIG: u8 = 3;
const EXIT_REFUSED: u8 = 4;

#[derive(Parser, Debug)]
#[command(
    name = "paircycle",
    version,
    about = "Cyclic paired-comparison analysis"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Validate a long CSV file (header `i,j,y`) and summarize it.
    IngestCheck {
        /// Input CSV file.
        data: PathBuf,
    },
    /// Decompose, test, select, rank and (optionally) bet; writes a JSON report.
    Analyze {
        /// Input CSV file.
        data: PathBuf,
        #[command(flatten)]
        opts: AnalysisArgs,
        /// Include the betting table.
        #[arg(long)]
        bet: bool,
    },
    /// Run a simulation study described by a TOML or JSON file.
    Simulate {
        /// Study configuration file.
        config: PathBuf,
        /// Output directory for the CSV tables and `study.json`.
        #[arg(long, default_value = "study-out")]
        out: PathBuf,
        /// Override the configured seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the configured replication count.
        #[arg(long)]
        replications: Option<usize>,
    },
    /// Betting gains of the selected model against a transitive bookmaker.
    Bet {
        /// Input CSV file.
        data: PathBuf,
        #[command(flatten)]
        opts: AnalysisArgs,
    },
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum CorrectionArg {
    Bonferroni,
    Bh,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum MethodArg {
    Ftbs,
    Fsts,
    Fsr,
    FtbsFsr,
    FtbsFsts,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    /// Single-line JSON.
    Json,
    /// Indented JSON.
    Pretty,
}

#[derive(Args, Debug)]
struct AnalysisArgs {
    /// Level of the lack-of-fit tests.
    #[arg(long)]
    alpha_lof: Option<f64>,
    /// Level of the per-pair cyclic-component tests.
    #[arg(long)]
    alpha_comp: Option<f64>,
    /// Optional p-value screen for FSTS candidates.
    #[arg(long)]
    alpha_triads: Option<f64>,
    /// Level of the FSR partial F-tests.
    #[arg(long)]
    alpha_fsr: Option<f64>,
    /// Multiple-testing correction of the component tests.
    #[arg(long, value_enum)]
    correction: Option<CorrectionArg>,
    /// Selection procedure.
    #[arg(long, value_enum, default_value = "ftbs")]
    method: MethodArg,
    /// Seed of the Monte-Carlo tail estimates.
    #[arg(long)]
    seed: Option<u64>,
    /// Monte-Carlo draws for weighted chi-square tails.
    #[arg(long)]
    mc_draws: Option<usize>,
    /// Zero tolerance for rankings and transitivity grades.
    #[arg(long)]
    tolerance: Option<f64>,
    /// Output file; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Report layout.
    #[arg(long, value_enum, default_value = "pretty")]
    format: Format,
}

impl AnalysisArgs {
    fn config(&self, betting: bool) -> AnalysisConfig {
        let mut cfg = AnalysisConfig {
            method: match self.method {
                MethodArg::Ftbs => Method::Ftbs,
                MethodArg::Fsts => Method::Fsts,
                MethodArg::Fsr => Method::Fsr,
                MethodArg::FtbsFsr => Method::FtbsFsr,
                MethodArg::FtbsFsts => Method::FtbsFsts,
            },
            betting,
            tolerance: self.tolerance,
            alpha_triads: self.alpha_triads,
            ..AnalysisConfig::default()
        };
        if let Some(a) = self.alpha_lof {
            cfg.alpha_lof = a;
        }
        if let Some(a) = self.alpha_comp {
            cfg.alpha_components = a;
        }
        if let Some(a) = self.alpha_fsr {
            cfg.alpha_fsr = a;
        }
        if let Some(c) = self.correction {
            cfg.correction = match c {
                CorrectionArg::Bonferroni => Correction::Bonferroni,
                CorrectionArg::Bh => Correction::BenjaminiHochberg,
            };
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(d) = self.mc_draws {
            cfg.mc_draws = d;
        }
        cfg
    }
}

/// An error together with the exit code it maps to.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Config(_) => EXIT_CONFIG,
            Error::Refused(_)
            | Error::Saturated(_)
            | Error::NoModelWithinSize(_)
            | Error::BudgetExceeded { .. } => EXIT_REFUSED,
            _ => EXIT_DATA,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn load_data(path: &Path) -> Result<ComparisonData, Failure> {
    read_long_csv(path).map_err(|e| Failure {
        code: EXIT_DATA,
        message: format!("{}: {e}", path.display()),
    })
}

fn render<T: serde::Serialize>(value: &T, format: Format) -> Result<String, Failure> {
    let text = match format {
        Format::Json => serde_json::to_string(value),
        Format::Pretty => serde_json::to_string_pretty(value),
    };
    text.map(|t| t + "\n").map_err(|e| Failure {
        code: EXIT_DATA,
        message: format!("cannot serialize report: {e}"),
    })
}

fn emit(text: &str, out: Option<&Path>) -> Result<(), Failure> {
    match out {
        Some(path) => fs::write(path, text).map_err(|e| Failure {
            code: EXIT_DATA,
            message: format!("{}: {e}", path.display()),
        }),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::IngestCheck { data } => {
            let d = load_data(&data)?;
            let counts: Vec<usize> = d.counts().to_vec();
            let min = counts.iter().copied().min().unwrap_or(0);
            let max = counts.iter().copied().max().unwrap_or(0);
            let sigma2 = d.sigma2_hat();
            println!(
                "ok: K = {}, pairs = {}, comparisons = {}, per-pair counts {}..{}, sigma2_hat = {}{}",
                d.k(),
                counts.len(),
                d.total(),
                min,
                max,
                sigma2.value,
                if sigma2.degenerate { " (no replication)" } else { "" }
            );
            Ok(())
        }
        Command::Analyze { data, opts, bet } => {
            let cfg = opts.config(bet);
            cfg.validate()?;
            let d = load_data(&data)?;
            let report = analyze(&d, &cfg)?;
            emit(&render(&report, opts.format)?, opts.out.as_deref())
        }
        Command::Bet { data, opts } => {
            let cfg = opts.config(true);
            cfg.validate()?;
            let d = load_data(&data)?;
            let report = analyze(&d, &cfg)?;
            let betting = report.betting.expect("betting requested");
            let value = serde_json::json!({
                "method": report.selection.method,
                "selected_triads": report.selection.triads,
                "accepted": report.selection.accepted,
                "betting": betting,
            });
            emit(&render(&value, opts.format)?, opts.out.as_deref())
        }
        Command::Simulate {
            config,
            out,
            seed,
            replications,
        } => {
            let mut cfg = StudyConfig::load(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(r) = replications {
                cfg.replications = r;
                cfg.validate()?;
            }
            let results = cfg.run()?;
            for path in write_study_outputs(&out, &results)? {
                eprintln!("wrote {}", path.display());
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
