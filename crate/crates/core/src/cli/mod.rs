//! Command-line front end: one subcommand per pipeline step plus `run`,
//! which executes a whole experiment from a TOML config.

pub mod config;
pub mod run;

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};

use crate::analysis::{ks_feature_screen, shap_summary, tree_shap, R2Kind};
use crate::dataset::{
    content_split, load_sessions, random_split, read_feature_table, sessions_to_dataset, write_feature_table,
    write_sessions, Dataset, Projection, DEFAULT_CONTENT_THRESHOLD, SESSION_COLUMNS,
};
use crate::error::{Error, Result};
use crate::learners::{fit, Algorithm, RegressorSpec};
use crate::par::Execution;
use crate::stacking::{
    cross_evaluate_with, document_to_model, export_model, import_model, weight_scan_with, ModelDocument,
    StackedModel, DEFAULT_GRID_STEP,
};
use crate::synth::{generate_sessions, SynthParams};

pub use config::ExperimentConfig;
pub use run::{render_report, run_experiment, write_file_atomic, write_report_dir, RunReport};

#[derive(Debug, Parser)]
#[command(name = "qoe", version, about = "QoE model transfer and stacking experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FeatureSet {
    /// Generic features only (TI and SI dropped).
    Generic,
    All,
}

impl From<FeatureSet> for Projection {
    fn from(f: FeatureSet) -> Self {
        match f {
            FeatureSet::Generic => Projection::GenericOnly,
            FeatureSet::All => Projection::All,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SplitKind {
    Content,
    Random,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum R2Choice {
    Pearson,
    Determination,
}

impl From<R2Choice> for R2Kind {
    fn from(c: R2Choice) -> Self {
        match c {
            R2Choice::Pearson => R2Kind::Pearson,
            R2Choice::Determination => R2Kind::Determination,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Convert a session CSV into the fixed-order feature table.
    Ingest {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Generate synthetic sessions with low and high TI/SI content clusters.
    Synth {
        #[arg(long)]
        output: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 450)]
        n_sessions: usize,
        /// Low-complexity sessions; defaults to the 353/450 share of `n_sessions`.
        #[arg(long)]
        n_low: Option<usize>,
        #[arg(long, default_value_t = 20)]
        n_contents: usize,
        #[arg(long, default_value_t = 4.0)]
        noise_sd: f64,
    },
    /// Split a table into G0 and G1.
    Split {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum, default_value = "content")]
        mode: SplitKind,
        #[arg(long, default_value_t = DEFAULT_CONTENT_THRESHOLD)]
        ti_threshold: f64,
        #[arg(long, default_value_t = DEFAULT_CONTENT_THRESHOLD)]
        si_threshold: f64,
        /// G0 size for the random split.
        #[arg(long)]
        g0_size: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        g0: PathBuf,
        #[arg(long)]
        g1: PathBuf,
    },
    /// Train a regressor and write its model document.
    Train {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        algorithm: String,
        #[arg(long)]
        seed: u64,
        /// Hyperparameter override, `name=value`; repeatable.
        #[arg(long = "param")]
        params: Vec<String>,
        #[arg(long, value_enum, default_value = "all")]
        features: FeatureSet,
        /// Mark the document as a transferable base model.
        #[arg(long)]
        as_base: bool,
        #[arg(long)]
        output: PathBuf,
    },
    /// Re-export a model document, optionally as a base model.
    Export {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        as_base: bool,
        #[arg(long)]
        provenance: Option<String>,
        #[arg(long)]
        output: PathBuf,
    },
    /// Bind a model document to a local table and write its predictions.
    Import {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Predict with a stacked base/local pair at a fixed base weight.
    Stack {
        #[arg(long)]
        base: PathBuf,
        #[arg(long)]
        local: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        w0: f64,
        #[arg(long)]
        output: PathBuf,
    },
    /// Scan the base weight and write a gnuplot-ready curve.
    Scan {
        #[arg(long)]
        base: PathBuf,
        #[arg(long)]
        local: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = DEFAULT_GRID_STEP)]
        step: f64,
        #[arg(long, value_enum, default_value = "pearson")]
        r2: R2Choice,
        #[arg(long)]
        output: PathBuf,
    },
    /// Evaluate a model on named test tables (`NAME=PATH`).
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long = "test", required = true)]
        tests: Vec<String>,
        /// Name of the test set drawn from the training group.
        #[arg(long, default_value = "G0")]
        train_group: String,
        #[arg(long, value_enum, default_value = "pearson")]
        r2: R2Choice,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// TreeSHAP attributions of a GBT model.
    Shap {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
        /// Per-row attributions: `row_id,feature,feature_value,phi`.
        #[arg(long)]
        plot: PathBuf,
        #[arg(long)]
        summary: Option<PathBuf>,
    },
    /// Two-sample KS screen of every feature between two tables.
    Ks {
        #[arg(long)]
        g0: PathBuf,
        #[arg(long)]
        g1: PathBuf,
        #[arg(long, default_value_t = 0.01)]
        alpha: f64,
        #[arg(long)]
        output: PathBuf,
    },
    /// Run a full experiment. Any scalar config field can be overridden
    /// with `--<dotted.path> <value>` or `--set <dotted.path>=<value>`.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long = "set")]
        set: Vec<String>,
        /// Evaluate repetitions on one thread.
        #[arg(long)]
        sequential: bool,
        #[arg(trailing_var_arg = true, allow_hyphen_values = true, hide = true)]
        overrides: Vec<String>,
    },
}

/// Overrides and flags collected from the trailing arguments of `qoe run`.
#[derive(Debug, Default, PartialEq)]
pub struct TrailingFlags {
    pub overrides: Vec<String>,
    pub sequential: bool,
}

/// Turns `--a.b value` / `--a.b=value` pairs into `a.b=value`. `--set` and
/// `--sequential` may also appear here once clap has stopped parsing.
pub fn parse_dotted_flags(args: &[String]) -> Result<TrailingFlags> {
    let mut flags = TrailingFlags::default();
    let out = &mut flags.overrides;
    let mut it = args.iter();
    while let Some(a) = it.next() {
        let key = a
            .strip_prefix("--")
            .ok_or_else(|| Error::Config(format!("unexpected argument `{a}`")))?;
        if key == "sequential" {
            flags.sequential = true;
        } else if let Some(assignment) = key.strip_prefix("set=") {
            out.push(assignment.to_string());
        } else if key == "set" {
            let v = it.next().ok_or_else(|| Error::Config("flag `--set` needs a value".into()))?;
            out.push(v.clone());
        } else if key.contains('=') {
            out.push(key.to_string());
        } else {
            let v = it
                .next()
                .ok_or_else(|| Error::Config(format!("flag `{a}` needs a value")))?;
            out.push(format!("{key}={v}"));
        }
    }
    Ok(flags)
}

/// Loads either a session CSV (recognised by its header) or a feature
/// table.
pub fn load_table(path: &Path) -> Result<Dataset> {
    let mut text = String::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_string(&mut text))
        .map_err(|e| Error::io(path, e))?;
    let first = text.lines().next().unwrap_or("");
    let provenance = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    if first.split(',').map(str::trim).eq(SESSION_COLUMNS.iter().copied()) {
        sessions_to_dataset(&crate::dataset::read_sessions(text.as_bytes())?, provenance)
    } else {
        read_feature_table(text.as_bytes(), provenance)
    }
}

fn write_table(path: &Path, data: &Dataset) -> Result<()> {
    let mut buf = Vec::new();
    write_feature_table(&mut buf, data)?;
    write_file_atomic(path, &buf)
}

fn read_doc(path: &Path) -> Result<ModelDocument> {
    ModelDocument::read(path)
}

fn predictions_csv(data: &Dataset, pred: &[f64]) -> String {
    let mut s = String::from("row_id,prediction,mos\n");
    for (i, (p, r)) in pred.iter().zip(data.rows()).enumerate() {
        let _ = writeln!(s, "{i},{p},{}", r.label);
    }
    s
}

fn parse_params(raw: &[String]) -> Result<Vec<(String, f64)>> {
    raw.iter()
        .map(|p| {
            let (k, v) = p
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("parameter `{p}` is not name=value")))?;
            let v: f64 = v
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("parameter `{k}` value `{v}` is not a number")))?;
            Ok((k.trim().to_string(), v))
        })
        .collect()
}

pub fn cmd_ingest(input: &Path, output: &Path) -> Result<usize> {
    let sessions = load_sessions(input)?;
    let data = sessions_to_dataset(&sessions, input.display().to_string())?;
    write_table(output, &data)?;
    Ok(data.len())
}

pub fn cmd_synth(params: &SynthParams, output: &Path) -> Result<usize> {
    let sessions = generate_sessions(params)?;
    let mut buf = Vec::new();
    write_sessions(&mut buf, &sessions)?;
    write_file_atomic(output, &buf)?;
    Ok(sessions.len())
}

/// Loads the config, runs it and writes the report directory.
pub fn cmd_run(config_path: &Path, overrides: &[String], exec: Execution) -> Result<RunReport> {
    let cfg = ExperimentConfig::load(config_path, overrides)?;
    let data = load_table(&cfg.dataset).map_err(|e| e.in_stage("load"))?;
    let report = run_experiment(&cfg, &data, exec)?;
    let files = render_report(&report)?;
    write_report_dir(&cfg.output_dir, &files).map_err(|e| e.in_stage("write report"))?;
    Ok(report)
}

fn execute(cmd: Command) -> Result<()> {
    match cmd {
        Command::Ingest { input, output } => {
            let n = cmd_ingest(&input, &output)?;
            eprintln!("wrote {n} rows to {}", output.display());
        }
        Command::Synth {
            output,
            seed,
            n_sessions,
            n_low,
            n_contents,
            noise_sd,
        } => {
            let params = SynthParams {
                n_low: n_low.unwrap_or(SynthParams::with_ratio(n_sessions, 353, 97, seed).n_low),
                n_sessions,
                n_contents,
                noise_sd,
                seed,
            };
            let n = cmd_synth(&params, &output)?;
            eprintln!("wrote {n} sessions to {}", output.display());
        }
        Command::Split {
            input,
            mode,
            ti_threshold,
            si_threshold,
            g0_size,
            seed,
            g0,
            g1,
        } => {
            let data = load_table(&input)?;
            let (a, b) = match mode {
                SplitKind::Content => content_split(&data, ti_threshold, si_threshold)?,
                SplitKind::Random => {
                    let size = match g0_size {
                        Some(s) => s,
                        None => content_split(&data, ti_threshold, si_threshold)?.0.len(),
                    };
                    random_split(&data, size, seed)?
                }
            };
            write_table(&g0, &a)?;
            write_table(&g1, &b)?;
            eprintln!("G0: {} rows, G1: {} rows", a.len(), b.len());
        }
        Command::Train {
            input,
            algorithm,
            seed,
            params,
            features,
            as_base,
            output,
        } => {
            let alg: Algorithm = algorithm
                .parse()
                .map_err(|_| Error::Config(format!("unknown algorithm `{algorithm}`")))?;
            let spec = RegressorSpec::new(alg, parse_params(&params)?, seed)?;
            let data = load_table(&input)?.project(features.into());
            let model = fit(&spec, &data)?;
            let doc = export_model(&model, as_base, data.provenance())?;
            write_file_atomic(&output, doc.to_json()?.as_bytes())?;
            eprintln!("trained {} on {} rows", alg, data.len());
        }
        Command::Export {
            model,
            as_base,
            provenance,
            output,
        } => {
            let doc = read_doc(&model)?;
            let m = document_to_model(&doc)?;
            let out = export_model(&m, as_base, provenance.unwrap_or(doc.provenance))?;
            write_file_atomic(&output, out.to_json()?.as_bytes())?;
        }
        Command::Import { model, input, output } => {
            let data = load_table(&input)?;
            let imported = import_model(&read_doc(&model)?, data.schema())?;
            let pred = crate::learners::Predictor::predict(&imported, &data)?;
            write_file_atomic(&output, predictions_csv(&data, &pred).as_bytes())?;
        }
        Command::Stack {
            base,
            local,
            input,
            w0,
            output,
        } => {
            let data = load_table(&input)?;
            let b = import_model(&read_doc(&base)?, data.schema())?;
            let l = import_model(&read_doc(&local)?, data.schema())?;
            let pred = StackedModel::new(&b, &l, w0)?.predict(&data)?;
            write_file_atomic(&output, predictions_csv(&data, &pred).as_bytes())?;
        }
        Command::Scan {
            base,
            local,
            input,
            step,
            r2,
            output,
        } => {
            let data = load_table(&input)?;
            let b = import_model(&read_doc(&base)?, data.schema())?;
            let l = import_model(&read_doc(&local)?, data.schema())?;
            let scan = weight_scan_with(&b, &l, &data, step, r2.into(), Execution::default())?;
            let mut s = String::from("# w0 r2 mae\n");
            for p in &scan.points {
                let _ = writeln!(s, "{:.4} {:.6} {:.6}", p.w0, p.r2, p.mae);
            }
            write_file_atomic(&output, s.as_bytes())?;
            eprintln!("best w0 = {:.2} (R2 {:.4})", scan.best.w0, scan.best.r2);
        }
        Command::Evaluate {
            model,
            tests,
            train_group,
            r2,
            output,
        } => {
            let mut sets = Vec::new();
            for t in &tests {
                let (name, path) = t
                    .split_once('=')
                    .ok_or_else(|| Error::Config(format!("test set `{t}` is not NAME=PATH")))?;
                sets.push((name.to_string(), load_table(Path::new(path))?));
            }
            let doc = read_doc(&model)?;
            let imported = import_model(&doc, sets[0].1.schema())?;
            let named: Vec<(&str, &Dataset)> = sets.iter().map(|(n, d)| (n.as_str(), d)).collect();
            let cells = cross_evaluate_with(&imported, &train_group, &named, r2.into());
            let mut s = String::from("train_group,test_group,r2,mae,delta_r2,error\n");
            let f = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_else(|| "n/a".into());
            for c in &cells {
                let err = c.error.as_deref().unwrap_or("").replace([',', '\n'], ";");
                let _ = writeln!(s, "{},{},{},{},{},{err}", c.train_group, c.test_group, f(c.r2), f(c.mae), f(c.delta_r2));
            }
            match output {
                Some(p) => write_file_atomic(&p, s.as_bytes())?,
                None => print!("{s}"),
            }
        }
        Command::Shap {
            model,
            input,
            plot,
            summary,
        } => {
            let data = load_table(&input)?;
            let m = document_to_model(&read_doc(&model)?)?;
            let rows = data.select(&m.schema)?;
            let report = tree_shap(&m, &rows)?;
            write_file_atomic(&plot, run::shap_plot_csv(&report).as_bytes())?;
            let table = run::shap_summary_csv(&shap_summary(&report)?);
            match summary {
                Some(p) => write_file_atomic(&p, table.as_bytes())?,
                None => print!("{table}"),
            }
        }
        Command::Ks { g0, g1, alpha, output } => {
            let a = load_table(&g0)?;
            let b = load_table(&g1)?;
            let screen = ks_feature_screen(&a, &b, alpha)?;
            let mut s = String::from("feature,statistic,p_value,n1,n2,specific_candidate\n");
            for k in &screen {
                let _ = writeln!(
                    s,
                    "{},{:.6},{:e},{},{},{}",
                    k.feature, k.result.statistic, k.result.p_value, k.result.n1, k.result.n2, k.specific_candidate
                );
            }
            write_file_atomic(&output, s.as_bytes())?;
        }
        Command::Run {
            config,
            mut set,
            sequential,
            overrides,
        } => {
            let trailing = parse_dotted_flags(&overrides)?;
            set.extend(trailing.overrides);
            let exec = if sequential || trailing.sequential { Execution::Sequential } else { Execution::default() };
            let started = Instant::now();
            let report = cmd_run(&config, &set, exec)?;
            eprintln!(
                "wrote {} in {:.1}s",
                report.config.output_dir.display(),
                started.elapsed().as_secs_f64()
            );
        }
    }
    Ok(())
}

fn describe(e: &Error) -> String {
    let mut s = format!("error: {e}");
    let mut src = std::error::Error::source(e);
    while let Some(inner) = src {
        if !s.contains(&inner.to_string()) {
            let _ = write!(s, "\n  caused by: {inner}");
        }
        src = inner.source();
    }
    s
}

/// Parses `args` (including the program name), runs the command and
/// returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", describe(&e));
            e.exit_code()
        }
    }
}
