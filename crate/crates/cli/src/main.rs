//! `palps`: parse, explore, check, simulate and export population models.
//!
//! Exit codes: 0 success, 1 model or usage error, 2 property violated or
//! undecided, 3 internal invariant breach.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use palps_core::ast::{check_wellformed, lint};
use palps_core::parser::{parse_formula, parse_formula_file, parse_model_file, pretty};
use palps_core::pctl::{check, CheckOptions, CheckResult, PathFormula, Quantifier, StateFormula};
use palps_core::semantics::ExploreOptions;
use palps_core::simulator::{estimate, simulate, write_csv, write_jsonl, Scheduler, SimOptions};
use palps_core::statespace::{build, export, BuildOptions, BuildReport};
use palps_core::{load_model, Error, Model};

#[derive(Parser)]
#[command(
    name = "palps",
    version,
    about = "Process algebra with locations for population systems"
)]
struct Cli {
    /// Output format.
    #[arg(long, value_enum, default_value_t = Format::Text, global = true)]
    format: Format,
    /// Restrict replication and predation channels at the top level.
    #[arg(long, value_enum, default_value_t = Close::Auto, global = true)]
    close_channels: Close,
    /// Keep every channel the model leaves open (same as `--close-channels off`).
    #[arg(long, global = true)]
    open_channels: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Close {
    Auto,
    Off,
}

#[derive(Clone, Copy, ValueEnum)]
enum QuantifierArg {
    Min,
    Max,
}

#[derive(Clone, Copy, ValueEnum)]
enum SchedulerArg {
    Uniform,
    First,
}

#[derive(Args, Clone)]
struct ExploreArgs {
    #[arg(long)]
    max_states: Option<usize>,
    /// Bound on the number of steps from the initial state.
    #[arg(long)]
    max_depth: Option<usize>,
    /// Bound on the number of ticks from the initial state.
    #[arg(long)]
    max_ticks: Option<u64>,
    /// Bound on the individuals at any one location.
    #[arg(long)]
    max_pop: Option<u64>,
    #[arg(long, default_value_t = 1)]
    threads: usize,
}

impl ExploreArgs {
    fn options(&self) -> BuildOptions {
        BuildOptions {
            explore: ExploreOptions {
                max_states: self.max_states,
                max_depth: self.max_depth,
                max_ticks: self.max_ticks,
                max_population_per_location: self.max_pop,
            },
            threads: self.threads,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Parse a model and report diagnostics.
    Parse {
        model: PathBuf,
        /// Print the model in canonical form.
        #[arg(long)]
        print: bool,
    },
    /// Build the state space and report its size.
    Explore {
        model: PathBuf,
        #[command(flatten)]
        explore: ExploreArgs,
    },
    /// Check the formulas of a property file, one per line.
    Check {
        model: PathBuf,
        properties: PathBuf,
        /// Use one scheduler quantifier for every bound.
        #[arg(long, value_enum)]
        quantifier: Option<QuantifierArg>,
        #[command(flatten)]
        explore: ExploreArgs,
    },
    /// Sample runs; estimate probabilities or write traces.
    Simulate {
        model: PathBuf,
        #[arg(long, default_value_t = 1000)]
        samples: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        max_ticks: u64,
        #[arg(long)]
        max_pop: Option<u64>,
        #[arg(long, default_value_t = 1)]
        threads: usize,
        #[arg(long, value_enum, default_value_t = SchedulerArg::Uniform)]
        scheduler: SchedulerArg,
        /// Probability formula to estimate; may be repeated.
        #[arg(long)]
        formula: Vec<String>,
        /// Property file whose formulas are estimated.
        #[arg(long)]
        properties: Option<PathBuf>,
        #[arg(long, default_value_t = 0.99)]
        confidence: f64,
        /// Write per-tick counts as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Write one JSON object per trace.
        #[arg(long)]
        jsonl: Option<PathBuf>,
    },
    /// Write the state space as `.sta`, `.tra` and `.lab` files.
    Export {
        model: PathBuf,
        /// Output path without extension.
        output: PathBuf,
        /// Property file whose atoms label the states.
        #[arg(long)]
        properties: Option<PathBuf>,
        #[command(flatten)]
        explore: ExploreArgs,
    },
}

/// Things that end a command with a nonzero exit code.
enum Failure {
    Model(String),
    Violated,
    Internal(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_internal() {
            Failure::Internal(e.to_string())
        } else {
            Failure::Model(e.to_string())
        }
    }
}

macro_rules! failure_from {
    ($($t:ty),*) => {$(
        impl From<$t> for Failure {
            fn from(e: $t) -> Self {
                Error::from(e).into()
            }
        }
    )*};
}
failure_from!(
    std::io::Error,
    palps_core::ParseError,
    palps_core::statespace::BuildError,
    palps_core::pctl::CheckError,
    palps_core::simulator::SimError
);

struct App {
    format: Format,
    close: bool,
}

impl App {
    fn emit(&self, text: String, value: Value) {
        match self.format {
            Format::Text => print!("{text}"),
            Format::Json => println!("{value}"),
        }
    }

    fn model(&self, path: &Path) -> Result<Model, Failure> {
        Ok(load_model(path, self.close)?)
    }

    fn formulas(&self, path: &Path, model: &Model) -> Result<Vec<(String, StateFormula)>, Failure> {
        let text =
            std::fs::read_to_string(path).map_err(|source| Error::Read { path: path.to_owned(), source })?;
        Ok(parse_formula_file(&text, model)?)
    }

    fn parse(&self, path: &Path, print: bool) -> Result<(), Failure> {
        let mut model = match parse_model_file(path) {
            Ok(m) => m,
            Err(Error::Parse(e)) => {
                let value = json!({ "ok": false, "diagnostics": [e.to_string()] });
                self.emit(format!("{e}\n"), value);
                return Err(Failure::Model(String::new()));
            }
            Err(e) => return Err(e.into()),
        };
        let errors = check_wellformed(&model);
        let warnings = lint(&model);
        let all: Vec<String> = errors
            .iter()
            .chain(&warnings)
            .map(|d| d.to_string())
            .collect();
        if self.close {
            model.close_channels();
        }
        let mut text: String = all.iter().map(|d| format!("{d}\n")).collect();
        if errors.is_empty() {
            text.push_str(&format!(
                "ok: {} species, {} process definitions, {} locations\n",
                model.species.len(),
                model.constants.len(),
                model.habitat.locations().len()
            ));
            if print {
                text.push_str(&pretty(&model));
                text.push('\n');
            }
        }
        let mut value = json!({ "ok": errors.is_empty(), "diagnostics": all });
        if print && errors.is_empty() {
            value["model"] = json!(pretty(&model));
        }
        self.emit(text, value);
        if errors.is_empty() {
            Ok(())
        } else {
            Err(Failure::Model(String::new()))
        }
    }

    fn report(&self, r: &BuildReport) {
        let mut text = format!(
            "states: {}\ntransitions: {}\ntruncated: {}\n",
            r.states, r.transitions, r.truncated
        );
        if let Some(why) = &r.truncation_reason {
            text.push_str(&format!("truncation: {why}\n"));
        }
        let value = json!({
            "states": r.states,
            "transitions": r.transitions,
            "truncated": r.truncated,
            "truncation_reason": r.truncation_reason,
        });
        self.emit(text, value);
    }

    fn explore(&self, path: &Path, args: &ExploreArgs) -> Result<(), Failure> {
        let model = self.model(path)?;
        let (_, report) = build(&model, &[], &args.options())?;
        self.report(&report);
        Ok(())
    }

    fn check(
        &self,
        path: &Path,
        properties: &Path,
        quantifier: Option<QuantifierArg>,
        args: &ExploreArgs,
    ) -> Result<(), Failure> {
        let model = self.model(path)?;
        let formulas = self.formulas(properties, &model)?;
        let atoms: Vec<_> = formulas.iter().flat_map(|(_, f)| f.atoms()).collect();
        let (mdp, report) = build(&model, &atoms, &args.options())?;
        let opts = CheckOptions {
            quantifier: quantifier.map(|q| match q {
                QuantifierArg::Min => Quantifier::Min,
                QuantifierArg::Max => Quantifier::Max,
            }),
            ..Default::default()
        };
        let mut all_hold = true;
        let mut text = String::new();
        let mut results = Vec::new();
        if report.truncated {
            text.push_str(&format!(
                "warning: state space truncated ({}); probabilities are bounds\n",
                report
                    .truncation_reason
                    .as_deref()
                    .unwrap_or("bound reached")
            ));
        }
        for (line, f) in &formulas {
            let r = check(&mdp, f, &opts)?;
            all_hold &= r.verdict && !r.approximate;
            text.push_str(&verdict_line(line, &r));
            results.push(json!({
                "formula": line,
                "verdict": r.verdict,
                "approximate": r.approximate,
                "pmin": r.pmin(),
                "pmax": r.pmax(),
            }));
        }
        let value = json!({
            "states": report.states,
            "truncated": report.truncated,
            "results": results,
        });
        self.emit(text, value);
        if all_hold {
            Ok(())
        } else {
            Err(Failure::Violated)
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn simulate(
        &self,
        path: &Path,
        opts: &SimOptions,
        samples: u64,
        formulas: &[String],
        properties: Option<&Path>,
        confidence: f64,
        csv: Option<&Path>,
        jsonl: Option<&Path>,
    ) -> Result<(), Failure> {
        let model = self.model(path)?;
        let mut queries: Vec<(String, StateFormula)> = Vec::new();
        for f in formulas {
            queries.push((f.clone(), parse_formula(f, &model)?));
        }
        if let Some(p) = properties {
            queries.extend(self.formulas(p, &model)?);
        }
        let mut text = String::new();
        let mut estimates = Vec::new();
        let mut depends_on_scheduler = false;
        for (line, f) in &queries {
            let Some(path_formula) = outer_path(f) else {
                return Err(Failure::Model(format!(
                    "{line}: only probability formulas can be estimated"
                )));
            };
            let e = estimate(&model, path_formula, samples, confidence, opts)?;
            depends_on_scheduler |= e.scheduler_choices > 0;
            text.push_str(&format!(
                "{line}: p = {:.6}, {}% interval [{:.6}, {:.6}], n = {}, undecided = {}\n",
                e.p_hat,
                confidence * 100.0,
                e.ci_low,
                e.ci_high,
                e.samples,
                e.undecided
            ));
            let mut v = serde_json::to_value(&e).unwrap_or(Value::Null);
            v["formula"] = json!(line);
            estimates.push(v);
        }
        let mut value = json!({ "estimates": estimates });
        if queries.is_empty() || csv.is_some() || jsonl.is_some() {
            let traces = simulate(&model, opts, samples)?;
            if let Some(p) = csv {
                let file = std::fs::File::create(p)?;
                write_csv(&model, &traces, std::io::BufWriter::new(file))
                    .map_err(|e| Failure::Model(format!("{}: {e}", p.display())))?;
            }
            if let Some(p) = jsonl {
                let file = std::fs::File::create(p)?;
                write_jsonl(&traces, std::io::BufWriter::new(file))?;
            }
            let mut ends = std::collections::BTreeMap::new();
            for t in &traces {
                *ends.entry(t.end.as_str()).or_insert(0u64) += 1;
                depends_on_scheduler |= t.choices > 0;
            }
            for (end, n) in &ends {
                text.push_str(&format!("{end}: {n}\n"));
            }
            value["ends"] = json!(ends);
        }
        if depends_on_scheduler {
            eprintln!(
                "warning: runs resolved nondeterministic choices with one scheduler; \
                 results are neither the minimum nor the maximum over schedulers"
            );
        }
        self.emit(text, value);
        Ok(())
    }

    fn export(
        &self,
        path: &Path,
        output: &Path,
        properties: Option<&Path>,
        args: &ExploreArgs,
    ) -> Result<(), Failure> {
        let model = self.model(path)?;
        let atoms = match properties {
            Some(p) => self
                .formulas(p, &model)?
                .iter()
                .flat_map(|(_, f)| f.atoms())
                .collect(),
            None => Vec::new(),
        };
        let (mdp, report) = build(&model, &atoms, &args.options())?;
        let files = export(&mdp, output)?;
        self.report(&report);
        if self.format == Format::Text {
            for f in &files {
                println!("wrote {}", f.display());
            }
        }
        Ok(())
    }
}

fn verdict_line(line: &str, r: &CheckResult) -> String {
    let mut s = format!("{line}: {}", r.verdict);
    if let (Some(lo), Some(hi)) = (r.pmin(), r.pmax()) {
        s.push_str(&format!(" pmin={lo:.12} pmax={hi:.12}"));
    }
    if r.approximate {
        s.push_str(" (approximate)");
    }
    s.push('\n');
    s
}

fn outer_path(f: &StateFormula) -> Option<&PathFormula> {
    match f {
        StateFormula::Prob { path, .. } => Some(path),
        _ => None,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let app = App {
        format: cli.format,
        close: cli.close_channels == Close::Auto && !cli.open_channels,
    };
    let result = match &cli.command {
        Command::Parse { model, print } => app.parse(model, *print),
        Command::Explore { model, explore } => app.explore(model, explore),
        Command::Check {
            model,
            properties,
            quantifier,
            explore,
        } => app.check(model, properties, *quantifier, explore),
        Command::Simulate {
            model,
            samples,
            seed,
            max_ticks,
            max_pop,
            threads,
            scheduler,
            formula,
            properties,
            confidence,
            csv,
            jsonl,
        } => {
            let opts = SimOptions {
                seed: *seed,
                scheduler: match scheduler {
                    SchedulerArg::Uniform => Scheduler::UniformRandom,
                    SchedulerArg::First => Scheduler::FirstEnabled,
                },
                max_ticks: *max_ticks,
                max_population_per_location: *max_pop,
                threads: *threads,
                ..Default::default()
            };
            app.simulate(
                model,
                &opts,
                *samples,
                formula,
                properties.as_deref(),
                *confidence,
                csv.as_deref(),
                jsonl.as_deref(),
            )
        }
        Command::Export {
            model,
            output,
            properties,
            explore,
        } => app.export(model, output, properties.as_deref(), explore),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Violated) => ExitCode::from(2),
        Err(Failure::Model(msg)) => {
            if !msg.is_empty() {
                eprintln!("error: {msg}");
            }
            ExitCode::from(1)
        }
        Err(Failure::Internal(msg)) => {
            eprintln!("internal error: {msg}");
            ExitCode::from(3)
        }
    }
}
