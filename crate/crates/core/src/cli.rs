//! Command-line surface of the `latent-score` binary.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::em::{fit, EmConfig, EmMode};
use crate::error::{Error, Result};
use crate::experiment::{self, ExperimentConfig, Measure};
use crate::model::{ModelSpec, PriorSet};
use crate::model_file::{read_model, write_model, FitSummary, ModelFile};
use crate::numerics::SeededStream;
use crate::scoring::{score_all, ScoreOptions, ScoreReport, ORACLE_CAP};
use crate::synth::{generate_model, read_dataset, sample_dataset, strip_hidden, write_dataset};

pub const THREADS_ENV: &str = "LATENT_SCORE_THREADS";

#[derive(Debug, Parser)]
#[command(name = "latent-score", version, about = "Fit latent-class models and compare marginal-likelihood scores")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw a random model and sample a dataset from it.
    Generate(GenerateArgs),
    /// Fit a model with hidden arity `c` to a dataset.
    Train(TrainArgs),
    /// Score a trained model on a dataset; prints one CSV report row.
    Score(ScoreArgs),
    /// Run a model-selection sweep over the hidden arity.
    Sweep(SweepArgs),
    /// Re-render the CSV reports of a stored sweep.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Number of observed binary variables.
    #[arg(long)]
    pub n: Option<usize>,
    /// Comma-separated observed arities, instead of `--n`.
    #[arg(long, value_delimiter = ',', conflicts_with = "n")]
    pub arities: Option<Vec<usize>>,
    /// Hidden arity.
    #[arg(long)]
    pub c: usize,
    #[arg(long)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub model_out: PathBuf,
    #[arg(long)]
    pub data_out: PathBuf,
    /// Keep the hidden column in the dataset file.
    #[arg(long)]
    pub with_hidden: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    Map,
    Ml,
}

impl From<ModeArg> for EmMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Map => EmMode::Map,
            ModeArg::Ml => EmMode::Ml,
        }
    }
}

#[derive(Debug, Args)]
pub struct EmArgs {
    #[arg(long, value_enum, default_value = "map")]
    pub mode: ModeArg,
    #[arg(long, default_value_t = 1e-5)]
    pub rel_tol: f64,
    #[arg(long, default_value_t = 200)]
    pub max_iters: usize,
    #[arg(long, default_value_t = 64)]
    pub tournament_start: usize,
}

impl EmArgs {
    fn config(&self) -> EmConfig {
        EmConfig {
            mode: self.mode.into(),
            rel_tol: self.rel_tol,
            max_iters_after_init: self.max_iters,
            tournament_start: self.tournament_start,
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Hidden arity of the test model.
    #[arg(long)]
    pub c: usize,
    /// Dirichlet hyperparameters are `1 + epsilon`.
    #[arg(long, default_value_t = 0.01)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub em: EmArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, default_value_t = 0.01)]
    pub epsilon: f64,
    /// Also compute the exact marginal likelihood by enumeration.
    #[arg(long)]
    pub oracle: bool,
    #[arg(long, default_value_t = ORACLE_CAP)]
    pub oracle_cap: u64,
    #[arg(long)]
    pub no_laplace: bool,
    /// Write the CSV here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// JSON config (the `run.json` schema); flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub c_true: Option<usize>,
    #[arg(long)]
    pub samples: Option<usize>,
    /// Inclusive range `lo:hi`.
    #[arg(long, value_parser = parse_range)]
    pub test_c: Option<(usize, usize)>,
    #[arg(long)]
    pub replicates: Option<usize>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Comma-separated subset of laplace,bic,draper,mled,cs,oracle.
    #[arg(long, value_delimiter = ',', value_parser = parse_measure)]
    pub measures: Option<Vec<Measure>>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    #[arg(long)]
    pub rel_tol: Option<f64>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub tournament_start: Option<usize>,
    #[arg(long)]
    pub oracle_cap: Option<u64>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Directory holding `sweep.json`.
    #[arg(long)]
    pub from: PathBuf,
    /// Defaults to `--from`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn parse_range(s: &str) -> std::result::Result<(usize, usize), String> {
    let (lo, hi) = s.split_once(':').unwrap_or((s, s));
    let lo = lo.trim().parse::<usize>().map_err(|e| format!("bad range start: {e}"))?;
    let hi = hi.trim().parse::<usize>().map_err(|e| format!("bad range end: {e}"))?;
    if lo > hi {
        return Err(format!("empty range {lo}:{hi}"));
    }
    Ok((lo, hi))
}

fn parse_measure(s: &str) -> std::result::Result<Measure, String> {
    s.trim().parse().map_err(|e: Error| e.to_string())
}

/// Default measure list for sweeps built from flags alone.
pub const DEFAULT_MEASURES: [Measure; 5] = [Measure::Laplace, Measure::Bic, Measure::Draper, Measure::Mled, Measure::Cs];

impl SweepArgs {
    pub fn resolve(&self) -> Result<ExperimentConfig> {
        let mut value = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
                serde_json::from_str::<serde_json::Value>(&text).map_err(|e| Error::Parse {
                    path: path.clone(),
                    line: e.line() as u64,
                    message: e.to_string(),
                })?
            }
            None => serde_json::json!({
                "replicates": 5,
                "epsilon": 0.01,
                "master_seed": 0,
                "measures": DEFAULT_MEASURES,
            }),
        };
        let obj = value
            .as_object_mut()
            .ok_or_else(|| Error::Config("config file must hold a JSON object".into()))?;
        let mut set = |key: &str, v: Option<serde_json::Value>| {
            if let Some(v) = v {
                obj.insert(key.to_string(), v);
            }
        };
        use serde_json::json;
        set("n_observed", self.n.map(|v| json!(v)));
        set("c_true", self.c_true.map(|v| json!(v)));
        set("n_samples", self.samples.map(|v| json!(v)));
        set("test_c_range", self.test_c.map(|v| json!(v)));
        set("replicates", self.replicates.map(|v| json!(v)));
        set("epsilon", self.epsilon.map(|v| json!(v)));
        set("master_seed", self.seed.map(|v| json!(v)));
        set("measures", self.measures.as_ref().map(|v| json!(v)));
        set("output_dir", self.out.as_ref().map(|v| json!(v)));
        set("oracle_cap", self.oracle_cap.map(|v| json!(v)));
        let em_overrides = [
            ("mode", self.mode.map(|m| json!(EmMode::from(m)))),
            ("rel_tol", self.rel_tol.map(|v| json!(v))),
            ("max_iters_after_init", self.max_iters.map(|v| json!(v))),
            ("tournament_start", self.tournament_start.map(|v| json!(v))),
        ];
        if em_overrides.iter().any(|(_, v)| v.is_some()) {
            let em = obj
                .entry("em")
                .or_insert_with(|| serde_json::to_value(EmConfig::default()).expect("EmConfig serializes"));
            let em = em
                .as_object_mut()
                .ok_or_else(|| Error::Config("\"em\" must be an object".into()))?;
            for (k, v) in em_overrides {
                if let Some(v) = v {
                    em.insert(k.to_string(), v);
                }
            }
        }
        let config: ExperimentConfig =
            serde_json::from_value(value).map_err(|e| Error::Config(format!("sweep config: {e}")))?;
        config.validate()?;
        Ok(config)
    }
}

/// Builds the global thread pool from `LATENT_SCORE_THREADS` (0 or unset
/// means one thread per core).
pub fn init_threads() -> Result<()> {
    let threads = match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .map_err(|_| Error::Config(format!("{THREADS_ENV} must be a non-negative integer, got {v:?}")))?,
        Err(_) => 0,
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate(a) => generate(a),
        Command::Train(a) => train(a),
        Command::Score(a) => score(a),
        Command::Sweep(a) => {
            let config = a.resolve()?;
            let result = experiment::run_and_emit(&config)?;
            let invalid = result.cells.iter().filter(|c| c.error.is_some()).count();
            eprintln!(
                "wrote {} cells to {}{}",
                result.cells.len(),
                config.output_dir.display(),
                if invalid > 0 { format!(" ({invalid} failed)") } else { String::new() }
            );
            Ok(())
        }
        Command::Report(a) => {
            let result = experiment::read_sweep(&a.from)?;
            experiment::emit_reports(&result, a.out.as_ref().unwrap_or(&a.from))
        }
    }
}

fn generate(a: GenerateArgs) -> Result<()> {
    let arities = match (a.arities, a.n) {
        (Some(v), _) => v,
        (None, Some(n)) => vec![2; n],
        (None, None) => return Err(Error::Config("one of --n or --arities is required".into())),
    };
    let spec = ModelSpec::new(a.c, arities)?;
    let root = SeededStream::new(a.seed, 0);
    let model = generate_model(&spec, &mut root.child(0))?;
    let data = sample_dataset(&model, a.samples, &mut root.child(1))?;
    let data = if a.with_hidden { data } else { strip_hidden(&data)? };
    write_model(&a.model_out, &ModelFile::from_params(&model, None))?;
    write_dataset(&data, &a.data_out)
}

fn train(a: TrainArgs) -> Result<()> {
    let data = read_dataset(&a.data, None)?;
    let data = if data.is_complete() { strip_hidden(&data)? } else { data };
    let spec = data.spec().with_hidden_arity(a.c)?;
    let prior = PriorSet::near_uniform(&spec, a.epsilon)?;
    let config = a.em.config();
    config.validate()?;
    let em = fit(&data, &spec, &prior, &config, &SeededStream::new(a.seed, 0))?;
    let summary = FitSummary::from_em(&em, config.mode);
    write_model(&a.out, &ModelFile::from_params(&em.params, Some(summary)))
}

fn score(a: ScoreArgs) -> Result<()> {
    let model = read_model(&a.model)?.to_params()?;
    let spec = model.spec().clone();
    let expected = ModelSpec::new(1, spec.observed_arities.clone())?;
    let data = read_dataset(&a.data, Some(&expected)).or_else(|_| read_dataset(&a.data, None))?;
    if data.spec().observed_arities != spec.observed_arities {
        return Err(Error::Contract(format!(
            "dataset arities {:?} do not match model arities {:?}",
            data.spec().observed_arities,
            spec.observed_arities
        )));
    }
    let data = if data.is_complete() { strip_hidden(&data)? } else { data };
    let prior = PriorSet::near_uniform(&spec, a.epsilon)?;
    let opts = ScoreOptions {
        laplace: !a.no_laplace,
        oracle_cap: None,
    };
    let mut report = score_all(&model, &data, &prior, opts)?;
    if a.oracle {
        report.oracle = Some(crate::scoring::Outcome::Value(crate::scoring::oracle_exact(
            &data,
            &spec,
            &prior,
            a.oracle_cap,
        )?));
    }
    let text = format!("{}\n{}\n", ScoreReport::CSV_HEADER, report.csv_row());
    match a.out {
        Some(path) => fs::write(&path, text).map_err(|e| Error::io(&path, e)),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| Error::io("<stdout>", e)),
    }
}

/// Parses `args`, runs the command and returns the process exit code:
/// 0 on success, 2 on usage errors, 1 on any other failure.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    if let Err(e) = init_threads().and_then(|()| run(cli)) {
        eprintln!("latent-score: error: {e}");
        return 1;
    }
    0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn range_parsing() {
        assert_eq!(parse_range("2:8").unwrap(), (2, 8));
        assert_eq!(parse_range("4").unwrap(), (4, 4));
        assert!(parse_range("8:2").is_err());
        assert!(parse_range("a:2").is_err());
    }

    #[test]
    fn flags_override_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        fs::write(
            &path,
            r#"{"n_observed": 8, "c_true": 4, "n_samples": 400, "test_c_range": [2, 8],
                "replicates": 5, "master_seed": 1, "measures": ["bic"], "output_dir": "a",
                "em": {"mode": "map", "rel_tol": 1e-5, "max_iters_after_init": 200, "tournament_start": 64}}"#,
        )
        .unwrap();
        let cli = Cli::try_parse_from([
            "latent-score",
            "sweep",
            "--config",
            path.to_str().unwrap(),
            "--samples",
            "50",
            "--measures",
            "laplace,cs",
            "--tournament-start",
            "8",
        ])
        .unwrap();
        let Command::Sweep(args) = cli.command else { panic!() };
        let c = args.resolve().unwrap();
        assert_eq!(c.n_samples, 50);
        assert_eq!(c.n_observed, 8);
        assert_eq!(c.measures, vec![Measure::Laplace, Measure::Cs]);
        assert_eq!(c.em.tournament_start, 8);
        assert_eq!(c.em.rel_tol, 1e-5);
    }

    #[test]
    fn flags_alone_need_required_fields() {
        let cli = Cli::try_parse_from(["latent-score", "sweep", "--n", "8"]).unwrap();
        let Command::Sweep(args) = cli.command else { panic!() };
        assert!(matches!(args.resolve(), Err(Error::Config(_))));
    }
}
