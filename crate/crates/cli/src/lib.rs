//! The `carleson` command-line tool.
//!
//! Exit codes: 0 when every check passes, 1 for usage or input errors, 2
//! when a check fails. On exit 2 the first failing instance is written as a
//! JSON counterexample file.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use carleson_core::bitree::{GapOptimizer, SetStrategy};
use carleson_core::harness::{self, Counterexample, HarnessRun};
use carleson_core::io::{parse_measure_file, OutputFormat, ParsedMeasure, Report, RunConfig};
use carleson_core::sampling::SampleMode;
use carleson_core::{BiMeasure, TreeMeasure};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_FAILED_CHECK: i32 = 2;

#[derive(Parser, Debug)]
#[command(name = "carleson", version, about = "Carleson embedding checks on dyadic trees and bi-trees")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Test constant vs embedding constant on random tree measures.
    TreeTest {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        depth: Option<u32>,
    },
    /// Per-node ratios and constants for one tree measure.
    TreeEmbed {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        depth: Option<u32>,
        #[command(flatten)]
        input: Input,
    },
    /// Sample admissible witnesses for one of the Bellman inequalities.
    BellmanSample {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "mi18", value_parser = parse_mode)]
        mode: SampleMode,
    },
    /// Stopping-time decomposition and the maximal inequality.
    MaximalVerify {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        depth: Option<u32>,
        /// Experimental: draw test functions of both signs and report without failing.
        #[arg(long)]
        signed: bool,
        #[command(flatten)]
        input: Input,
    },
    /// One-box constant and the |Q|^3 embedding on bi-tree measures.
    BitreeOnebox {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_parser = parse_depths)]
        depths: Option<(u32, u32)>,
        #[command(flatten)]
        input: Input,
    },
    /// Set test constant against the one-box and embedding constants.
    BitreeSettest {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_parser = parse_depths)]
        depths: Option<(u32, u32)>,
        /// exhaustive, unions:K or random:T
        #[arg(long, default_value = "exhaustive")]
        strategy: String,
        #[command(flatten)]
        input: Input,
    },
    /// Rectangle-by-rectangle Bellman certificate on the bi-tree.
    BitreeCertify {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_parser = parse_depths)]
        depths: Option<(u32, u32)>,
        #[command(flatten)]
        input: Input,
    },
    /// Search for measures with a large embedding / one-box ratio.
    GapProbe {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_parser = parse_depths)]
        depths: Option<(u32, u32)>,
        #[arg(long, value_enum, default_value_t = Optimizer::Anneal)]
        optimizer: Optimizer,
    },
    /// Node-by-node certificate for the tree embedding with weights |I|^2.
    Certify {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        depth: Option<u32>,
        #[command(flatten)]
        input: Input,
    },
}

#[derive(Args, Debug, Clone)]
struct Common {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    /// Power-iteration tolerance.
    #[arg(long, default_value_t = 1e-12)]
    tol: f64,
    /// Report path; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Where a failing instance is written.
    #[arg(long, default_value = "counterexample.json")]
    counterexample: PathBuf,
}

#[derive(Args, Debug, Clone)]
struct Input {
    /// Measure file (JSON).
    #[arg(long = "in")]
    path: Option<PathBuf>,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Format {
    Json,
    Csv,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Optimizer {
    Random,
    Anneal,
}

fn parse_mode(s: &str) -> Result<SampleMode, String> {
    SampleMode::from_str(s).map_err(|e| e.to_string())
}

fn parse_depths(s: &str) -> Result<(u32, u32), String> {
    let (n, m) = s
        .split_once(',')
        .ok_or_else(|| format!("expected N,M but got {s:?}"))?;
    let n = n.trim().parse().map_err(|e| format!("bad first depth: {e}"))?;
    let m = m.trim().parse().map_err(|e| format!("bad second depth: {e}"))?;
    Ok((n, m))
}

fn parse_strategy(s: &str, seed: u64) -> Result<SetStrategy, String> {
    let (name, arg) = match s.split_once(':') {
        Some((name, arg)) => (name, Some(arg)),
        None => (s, None),
    };
    let count = |default: usize| -> Result<usize, String> {
        arg.map_or(Ok(default), |a| a.parse().map_err(|e| format!("bad count in {s:?}: {e}")))
    };
    match name {
        "exhaustive" if arg.is_none() => Ok(SetStrategy::Exhaustive),
        "unions" => Ok(SetStrategy::RectUnions { k: count(2)? }),
        "random" => Ok(SetStrategy::RandomSubsets {
            trials: count(1000)?,
            seed,
        }),
        _ => Err(format!("unknown strategy {s:?}; use exhaustive, unions:K or random:T")),
    }
}

/// Any error that maps to exit code 1.
#[derive(Debug)]
struct UsageError(String);

impl<E: std::fmt::Display> From<E> for UsageError {
    fn from(e: E) -> Self {
        UsageError(e.to_string())
    }
}

fn config(common: &Common, depth: Option<u32>, depths: Option<(u32, u32)>) -> Result<RunConfig, UsageError> {
    let cfg = RunConfig {
        seed: common.seed,
        trials: common.trials,
        depth,
        depths,
        tol: common.tol,
        format: match common.format {
            Format::Json => OutputFormat::Json,
            Format::Csv => OutputFormat::Csv,
        },
        out: common.out.clone(),
    };
    cfg.validate()?;
    Ok(cfg)
}

fn read_measure(input: &Input) -> Result<Option<ParsedMeasure>, UsageError> {
    match &input.path {
        None => Ok(None),
        Some(path) => {
            let bytes = std::fs::read(path).map_err(|e| UsageError(format!("{}: {e}", path.display())))?;
            let parsed = parse_measure_file(&bytes).map_err(|e| UsageError(format!("{}: {e}", path.display())))?;
            Ok(Some(parsed))
        }
    }
}

fn tree_input(input: &Input) -> Result<Option<TreeMeasure>, UsageError> {
    match read_measure(input)? {
        None => Ok(None),
        Some(ParsedMeasure::Tree(mu)) => Ok(Some(mu)),
        Some(other) => Err(UsageError(format!("expected a tree measure file, got kind {}", other.kind()))),
    }
}

fn bitree_input(input: &Input) -> Result<Option<BiMeasure>, UsageError> {
    match read_measure(input)? {
        None => Ok(None),
        Some(ParsedMeasure::BiTree(mu)) => Ok(Some(mu)),
        Some(other) => Err(UsageError(format!("expected a bitree measure file, got kind {}", other.kind()))),
    }
}

fn render<S: Serialize, R: Serialize>(report: &Report<S, R>) -> Result<Vec<u8>, UsageError> {
    match report.config.format {
        OutputFormat::Json => Ok(report.to_json()?.into_bytes()),
        OutputFormat::Csv => {
            let mut bytes = report.csv_preamble()?.into_bytes();
            let mut writer = csv::Writer::from_writer(&mut bytes);
            for row in &report.rows {
                writer.serialize(row)?;
            }
            writer.flush()?;
            drop(writer);
            Ok(bytes)
        }
    }
}

fn write_counterexample(path: &Path, command: &str, cx: &Counterexample) -> Result<(), UsageError> {
    let body = serde_json::json!({
        "version": carleson_core::io::FORMAT_VERSION,
        "command": command,
        "trial": cx.trial,
        "reason": cx.reason,
        "instance": cx.data,
    });
    let mut text = serde_json::to_string_pretty(&body)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| UsageError(format!("{}: {e}", path.display())))?;
    Ok(())
}

fn finish<S: Serialize, R: Serialize>(
    command: &str,
    cfg: &RunConfig,
    counterexample_path: &Path,
    run: HarnessRun<S, R>,
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> Result<i32, UsageError> {
    let HarnessRun {
        summary,
        rows,
        counterexample,
    } = run;
    let report = Report::new(command, cfg, summary, rows);
    let bytes = render(&report)?;
    match &cfg.out {
        Some(path) => std::fs::write(path, &bytes).map_err(|e| UsageError(format!("{}: {e}", path.display())))?,
        None => stdout.write_all(&bytes)?,
    }
    match counterexample {
        None => {
            writeln!(stderr, "{command}: ok ({} rows)", report.rows.len())?;
            Ok(EXIT_OK)
        }
        Some(cx) => {
            write_counterexample(counterexample_path, command, &cx)?;
            writeln!(
                stderr,
                "{command}: check failed at trial {}: {}; instance written to {}",
                cx.trial,
                cx.reason,
                counterexample_path.display()
            )?;
            Ok(EXIT_FAILED_CHECK)
        }
    }
}

fn dispatch(command: Command, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<i32, UsageError> {
    match command {
        Command::TreeTest { common, depth } => {
            let cfg = config(&common, depth, None)?;
            let run = harness::tree_test(&cfg)?;
            finish("tree-test", &cfg, &common.counterexample, run, stdout, stderr)
        }
        Command::TreeEmbed { common, depth, input } => {
            let cfg = config(&common, depth, None)?;
            let run = harness::tree_embed(&cfg, tree_input(&input)?.as_ref())?;
            finish("tree-embed", &cfg, &common.counterexample, run, stdout, stderr)
        }
        Command::BellmanSample { common, mode } => {
            let cfg = config(&common, None, None)?;
            let run = harness::bellman_sample(&cfg, mode)?;
            finish("bellman-sample", &cfg, &common.counterexample, run, stdout, stderr)
        }
        Command::MaximalVerify { common, depth, signed, input } => {
            let cfg = config(&common, depth, None)?;
            let run = harness::maximal_verify(&cfg, tree_input(&input)?.as_ref(), signed)?;
            finish("maximal-verify", &cfg, &common.counterexample, run, stdout, stderr)
        }
        Command::BitreeOnebox { common, depths, input } => {
            let cfg = config(&common, None, depths)?;
            let run = harness::bitree_onebox(&cfg, bitree_input(&input)?.as_ref())?;
            finish("bitree-onebox", &cfg, &common.counterexample, run, stdout, stderr)
        }
        Command::BitreeSettest {
            common,
            depths,
            strategy,
            input,
        } => {
            let cfg = config(&common, None, depths)?;
            let strategy = parse_strategy(&strategy, common.seed).map_err(UsageError)?;
            let run = harness::bitree_settest(&cfg, strategy, bitree_input(&input)?.as_ref())?;
            finish("bitree-settest", &cfg, &common.counterexample, run, stdout, stderr)
        }
        Command::BitreeCertify { common, depths, input } => {
            let cfg = config(&common, None, depths)?;
            let run = harness::bitree_certify(&cfg, bitree_input(&input)?.as_ref())?;
            finish("bitree-certify", &cfg, &common.counterexample, run, stdout, stderr)
        }
        Command::GapProbe {
            common,
            depths,
            optimizer,
        } => {
            let cfg = config(&common, None, depths)?;
            let optimizer = match optimizer {
                Optimizer::Random => GapOptimizer::Random,
                Optimizer::Anneal => GapOptimizer::Anneal,
            };
            let run = harness::gap_search(&cfg, optimizer)?;
            finish("gap-probe", &cfg, &common.counterexample, run, stdout, stderr)
        }
        Command::Certify { common, depth, input } => {
            let cfg = config(&common, depth, None)?;
            let run = harness::certify_tree(&cfg, tree_input(&input)?.as_ref())?;
            finish("certify", &cfg, &common.counterexample, run, stdout, stderr)
        }
    }
}

/// Parses `args` (including the program name) and runs one command.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let rendered = e.render().to_string();
            let _ = if e.use_stderr() {
                stderr.write_all(rendered.as_bytes())
            } else {
                stdout.write_all(rendered.as_bytes())
            };
            return code;
        }
    };
    match dispatch(cli.command, stdout, stderr) {
        Ok(code) => code,
        Err(UsageError(message)) => {
            let _ = writeln!(stderr, "error: {message}");
            EXIT_USAGE
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn depth_pairs() {
        assert_eq!(parse_depths("3,4"), Ok((3, 4)));
        assert_eq!(parse_depths(" 2 , 0 "), Ok((2, 0)));
        for bad in ["3", "3,", "a,1", "1,2,3", "-1,2"] {
            assert!(parse_depths(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn strategies() {
        assert_eq!(parse_strategy("exhaustive", 0), Ok(SetStrategy::Exhaustive));
        assert_eq!(parse_strategy("unions", 0), Ok(SetStrategy::RectUnions { k: 2 }));
        assert_eq!(parse_strategy("unions:3", 0), Ok(SetStrategy::RectUnions { k: 3 }));
        assert_eq!(
            parse_strategy("random:50", 9),
            Ok(SetStrategy::RandomSubsets { trials: 50, seed: 9 })
        );
        for bad in ["exhaustive:2", "unions:x", "sometimes", ""] {
            assert!(parse_strategy(bad, 0).is_err(), "{bad}");
        }
    }
}
