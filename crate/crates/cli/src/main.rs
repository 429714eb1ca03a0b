use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use afsearch::data::DataFormat;
use afsearch::gradcheck;
use afsearch::harness::{self, ExperimentConfig, SYNTHETIC_SEPARABLE};
use afsearch::nn::TrainConfig;
use afsearch::selftest;
use afsearch::stats;
use afsearch::{registry, Architecture, Arity, Error, Method};
use clap::{Args, Parser, Subcommand};

/// Exit codes.
const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_CHECK_FAILED: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "afsearch", version, about = "Per-layer activation-function search for dense classifiers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Print the 48-entry activation registry.
    ListAfs,
    /// Finite-difference check of every activation, the network backward pass and special functions.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train one architecture on one split and print train/test accuracy.
    Train {
        #[command(flatten)]
        data: DataArgs,
        /// Comma-separated names, or `standard:N`.
        #[arg(long)]
        arch: Architecture,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        max_epochs: Option<usize>,
    },
    /// Run one architecture search on one split.
    Search {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        method: Method,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, default_value_t = 5)]
        layers: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        max_epochs: Option<usize>,
    },
    /// Run the full per-dataset protocol from a TOML config.
    Experiment {
        #[arg(long)]
        config: PathBuf,
        /// Replicates run concurrently; the log does not depend on this.
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Summary, frequency and topmost-activation reports from a replicate log.
    Analyze {
        #[arg(long)]
        log: PathBuf,
        /// Directory for table1.csv, table2.csv and table3.csv.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = stats::DEFAULT_ROUNDS)]
        rounds: usize,
        #[arg(long, default_value_t = 10)]
        top_k: usize,
    },
    /// Sampler benchmarks: CMA-ES on the sphere, TPE against random on a planted target.
    Selftest {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args, Debug)]
struct DataArgs {
    /// CSV/ARFF file or `synthetic:letters` / `synthetic:separable`.
    #[arg(long)]
    data: Option<String>,
    #[arg(long)]
    format: Option<DataFormat>,
    #[arg(long)]
    label_col: Option<String>,
}

impl DataArgs {
    fn load(&self) -> afsearch::Result<afsearch::Dataset> {
        let name = self.data.as_deref().unwrap_or(SYNTHETIC_SEPARABLE);
        harness::load_named_dataset(name, self.format, self.label_col.as_deref())
    }
}

fn train_config(max_epochs: Option<usize>) -> TrainConfig {
    let d = TrainConfig::default();
    TrainConfig { max_epochs: max_epochs.unwrap_or(d.max_epochs), ..d }
}

enum Failure {
    Lib(Error),
    /// A check ran to completion and failed; the report is still printed.
    Check { report: String, message: String },
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::UnknownActivation { .. } | Error::Config(_) => EXIT_USAGE,
        _ => EXIT_DATA,
    }
}

fn list_afs() -> String {
    let mut out = format!("{:>5}  {:<18} {:<12} {:<10} {}\n", "index", "name", "arity", "stochastic", "params");
    for kind in registry() {
        let arity = match kind.arity() {
            Arity::Elementwise => "elementwise",
            Arity::Vectorwise => "vectorwise",
        };
        out += &format!(
            "{:>5}  {:<18} {:<12} {:<10} {}\n",
            kind.index(),
            kind.name(),
            arity,
            kind.is_stochastic(),
            kind.n_trainable_params()
        );
    }
    out
}

fn run_gradcheck(seed: u64) -> Result<String, Failure> {
    let mut out = String::new();
    let reports = gradcheck::check_all_activations(seed)?;
    let _ = writeln!(out, "{:<18} {:>7} {:>12} {:>10} {}", "activation", "points", "max_abs_err", "err/tol", "result");
    for r in &reports {
        let result = match (r.passed, r.exact_zero) {
            (true, true) => "ok (zero)",
            (true, false) => "ok",
            (false, _) => "FAIL",
        };
        let _ = writeln!(
        out,
            "{:<18} {:>7} {:>12.3e} {:>10.3e} {}",
            r.kind.name(),
            r.n_points,
            r.max_abs_error,
            r.worst_ratio,
            result
        );
    }
    let prelu = gradcheck::check_prelu_slope(seed)?;
    let _ = writeln!(out, "PReLU slope: max_abs_err {:.3e} {}", prelu.max_abs_error, if prelu.passed { "ok" } else { "FAIL" });
    let mut network_ok = true;
    for arch in ["Tanh,PReLU,Softplus,Softmax", "GELU,RReLU,GumbelSoftmax,LogSoftmax", "ReLU,ReLU,ReLU,Softmax"] {
        let r = gradcheck::check_network(&arch.parse()?, seed)?;
        network_ok &= r.passed;
        let _ = writeln!(
        out,
            "network {arch}: {} params, {:.1}% within 1e-4, max rel err {:.3e} {}",
            r.n_parameters,
            100.0 * r.fraction_within_1e4,
            r.max_relative_error,
            if r.passed { "ok" } else { "FAIL" }
        );
    }
    let s = gradcheck::special_identities();
    let _ = writeln!(out, "erf(1) = {:.12}", s.erf_one);
    let _ = writeln!(out, "digamma(1) = {:.12}", s.digamma_one);
    let _ = writeln!(out, "max |erf + erfc - 1| on [-3, 3] = {:.3e}", s.erf_erfc_residual);
    let _ = writeln!(out, "max |erf(-x) + erf(x)| = {:.3e}", s.erf_odd_residual);
    let _ = writeln!(out, "max |digamma(x+1) - digamma(x) - 1/x| = {:.3e}", s.digamma_recurrence_residual);
    let failed = reports.iter().filter(|r| !r.passed).count();
    if failed > 0 || !prelu.passed || !network_ok {
        return Err(Failure::Check { report: out, message: format!("{failed} activation checks failed") });
    }
    Ok(out)
}

fn run_train(data: &DataArgs, arch: &Architecture, seed: u64, max_epochs: Option<usize>) -> Result<String, Failure> {
    let mut out = String::new();
    let ds = data.load()?;
    let split = afsearch::data::train_test_split(&ds, &mut afsearch::seed::rng_from_seed(seed))?;
    let scaled = harness::ScaledSplit::new(&ds, &split)?;
    let s = harness::evaluate_architecture(arch, &scaled, seed, &train_config(max_epochs))?;
    let _ = writeln!(out, "dataset: {} ({} samples, {} features, {} classes)", ds.name, ds.n_samples(), ds.n_features(), ds.n_classes());
    let _ = writeln!(out, "architecture: {arch}");
    let _ = writeln!(out, "train_accuracy: {}", s.train_accuracy);
    let _ = writeln!(out, "test_accuracy: {}", s.test_accuracy);
    let _ = writeln!(out, "failed: {}", s.failed);
    Ok(out)
}

fn run_search(data: &DataArgs, method: Method, trials: usize, layers: usize, seed: u64, max_epochs: Option<usize>) -> Result<String, Failure> {
    let mut out = String::new();
    if trials == 0 {
        return Err(Error::Config("--trials must be at least 1".into()).into());
    }
    let ds = data.load()?;
    let started = Instant::now();
    let (outcome, history) = harness::search_once(&ds, layers, method, trials, seed, &train_config(max_epochs))?;
    eprintln!("search finished in {:.1}s", started.elapsed().as_secs_f64());
    let _ = writeln!(out, "dataset: {}", ds.name);
    let _ = writeln!(out, "method: {}", method.name());
    let _ = writeln!(out, "trials: {}", history.len());
    let _ = writeln!(out, "failed_trials: {}", history.iter().filter(|t| t.failed).count());
    let _ = writeln!(out, "best_architecture: {}", outcome.architecture);
    let _ = writeln!(out, "best_train_accuracy: {}", outcome.objective);
    let _ = writeln!(out, "test_accuracy: {}", outcome.score);
    Ok(out)
}

fn run_experiment(config: &PathBuf, jobs: Option<usize>) -> Result<String, Failure> {
    let mut out = String::new();
    let mut cfg = ExperimentConfig::from_file(config)?;
    if let Some(j) = jobs {
        cfg.jobs = j;
        cfg.validate()?;
    }
    let started = Instant::now();
    let run = harness::run_experiment(&cfg)?;
    eprintln!(
        "{} replicates in {:.1}s; log {}; summary {}",
        run.records.len(),
        started.elapsed().as_secs_f64(),
        cfg.output.display(),
        cfg.summary_path().display()
    );
    let _ = write!(out, "{}", stats::table1_csv(&run.summary));
    Ok(out)
}

fn run_analyze(log: &PathBuf, out_dir: Option<&PathBuf>, seed: u64, rounds: usize, top_k: usize) -> Result<String, Failure> {
    let mut out = String::new();
    let records = harness::read_log(log)?;
    if records.is_empty() {
        return Err(Error::Data { path: log.clone(), message: "log has no records".into() }.into());
    }
    let reports = stats::build_reports(&records, rounds, seed, top_k)?;
    if let Some(dir) = out_dir {
        reports.write_to(dir)?;
        eprintln!("reports written to {}", dir.display());
    }
    let _ = writeln!(out, "# table1");
    let _ = write!(out, "{}", reports.table1);
    let _ = writeln!(out, "# table2");
    let _ = write!(out, "{}", reports.table2);
    let _ = writeln!(out, "# table3");
    let _ = write!(out, "{}", reports.table3);
    Ok(out)
}

fn run_selftest(seed: u64) -> Result<String, Failure> {
    let mut out = String::new();
    let r = selftest::run_selftest(seed)?;
    let reached = r.sphere.iter().filter(|s| s.reached).count();
    for s in &r.sphere {
        let _ = writeln!(out, "sphere seed {}: best {:.3e} after {} evaluations", s.seed, s.best, s.evaluations);
    }
    let _ = writeln!(out, "sphere: {reached}/10 reached 1e-10 -> {}", if r.sphere_passed { "pass" } else { "FAIL" });
    let _ = writeln!(
        out,
        "planted: tpe >= random on {}/30 pairs, median gap {} -> {}",
        r.tpe_wins_or_ties,
        r.median_gap,
        if r.planted_passed { "pass" } else { "FAIL" }
    );
    if !r.passed() {
        return Err(Failure::Check { report: out, message: "selftest failed".into() });
    }
    Ok(out)
}

/// Parses `args`, runs the command and writes its report to stdout; returns the exit code.
fn run<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { 0 };
        }
    };
    let result = match &cli.command {
        Command::ListAfs => Ok(list_afs()),
        Command::Gradcheck { seed } => run_gradcheck(*seed),
        Command::Train { data, arch, seed, max_epochs } => run_train(data, arch, *seed, *max_epochs),
        Command::Search { data, method, trials, layers, seed, max_epochs } => {
            run_search(data, *method, *trials, *layers, *seed, *max_epochs)
        }
        Command::Experiment { config, jobs } => run_experiment(config, *jobs),
        Command::Analyze { log, out, seed, rounds, top_k } => run_analyze(log, out.as_ref(), *seed, *rounds, *top_k),
        Command::Selftest { seed } => run_selftest(*seed),
    };
    // A closed pipe (`| head`) is not an error worth reporting.
    let mut stdout = std::io::stdout();
    match result {
        Ok(report) => {
            let _ = stdout.write_all(report.as_bytes());
            0
        }
        Err(Failure::Lib(e)) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
        Err(Failure::Check { report, message }) => {
            let _ = stdout.write_all(report.as_bytes());
            eprintln!("error: {message}");
            EXIT_CHECK_FAILED
        }
    }
}

fn main() -> ExitCode {
    ExitCode::from(run(std::env::args_os()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn data(name: &str) -> DataArgs {
        DataArgs { data: Some(name.into()), format: None, label_col: None }
    }

    #[test]
    fn list_afs_prints_the_registry() {
        let table = list_afs();
        let rows: Vec<&str> = table.lines().skip(1).collect();
        assert_eq!(rows.len(), 48);
        assert!(rows[0].contains("ELU"));
        assert!(rows[47].contains("CLogLogM"));
        assert!(rows.iter().any(|l| l.contains("PReLU") && l.trim_end().ends_with('1')));
    }

    #[test]
    fn search_is_deterministic() {
        let args = |seed| run_search(&data(SYNTHETIC_SEPARABLE), Method::Tpe, 5, 3, seed, Some(30));
        let a = args(3).ok().unwrap();
        assert_eq!(a, args(3).ok().unwrap());
        assert!(a.contains("trials: 5"));
    }

    #[test]
    fn train_reports_accuracies() {
        let arch: Architecture = "Tanh,Tanh,Softmax".parse().unwrap();
        let text = run_train(&data(SYNTHETIC_SEPARABLE), &arch, 0, Some(50)).ok().unwrap();
        assert!(text.contains("architecture: Tanh,Tanh,Softmax"));
        assert!(text.contains("test_accuracy: "));
    }

    #[test]
    fn exit_codes() {
        assert_eq!(run(["afsearch", "--no-such-flag"]), EXIT_USAGE);
        assert_eq!(run(["afsearch", "train", "--arch", "Nope,ReLU"]), EXIT_USAGE);
        assert_eq!(run(["afsearch", "search", "--method", "tpe", "--trials", "0"]), EXIT_USAGE);
        assert_eq!(run(["afsearch", "search", "--method", "random", "--data", "synthetic:bogus"]), EXIT_USAGE);
        assert_eq!(run(["afsearch", "train", "--arch", "standard:3", "--data", "/no/such/file.csv"]), EXIT_DATA);
        assert_eq!(run(["afsearch", "analyze", "--log", "/no/such/log.jsonl"]), EXIT_DATA);
        assert_eq!(run(["afsearch", "list-afs"]), 0);
    }

    #[test]
    fn experiment_rejects_unknown_config_keys() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("bad.toml");
        std::fs::write(&cfg, "dataset = \"synthetic:separable\"\nn_layers = 3\noutput = \"x.jsonl\"\nbogus = 1\n").unwrap();
        assert_eq!(run([OsString::from("afsearch"), "experiment".into(), "--config".into(), cfg.into()]), EXIT_USAGE);
    }

    #[test]
    fn experiment_writes_log_and_summary() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("run.toml");
        std::fs::write(
            &cfg,
            "dataset = \"synthetic:separable\"\nn_layers = 3\nn_replicates = 2\nn_trials = 3\nmax_epochs = 20\noutput = \"run.jsonl\"\n",
        )
        .unwrap();
        let table = run_experiment(&cfg, Some(1)).ok().unwrap();
        assert!(table.starts_with("dataset,lay,standard,random,tpe,cmaes,top,p-markers\n"));
        assert!(dir.path().join("run.summary.csv").exists());
        let log = std::fs::read_to_string(dir.path().join("run.jsonl")).unwrap();
        assert_eq!(log.lines().count(), 2);
    }
}
