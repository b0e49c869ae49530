use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};

use vfsl_core::baselines::{fit_blm, fit_centroids_labeled, fit_flm, DEFAULT_SMOOTHING};
use vfsl_core::harness::{
    emit_report, evaluate, generate_synthetic, EvalData, Method, ReportFormat, SyntheticSpec,
    TaskSpec,
};
use vfsl_core::interpret::{
    explain_with_names, render_explanations, ExplanationFormat, DEFAULT_TOP_K,
};
use vfsl_core::matrixio::{read_csv, read_labels, read_vfeb, write_csv, write_labels, write_vfeb};
use vfsl_core::persist::{file_digest, load_model, save_model, SavedModel};
use vfsl_core::sim_mapper::{self, SolverConfig, DEFAULT_LAMBDA};
use vfsl_core::{
    l2_normalize, predict, similarity_matrix, EmbeddingMatrix, Error, Result, ScoreMatrix,
    SimilarityMatrix,
};

/// Vocabulary-free few-shot classification from similarity scores against
/// generic prompts.
///
/// Set VFSL_THREADS to cap worker threads (0 = all cores).
#[derive(Parser, Debug)]
#[command(name = "vfsl", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Convert between CSV and VFEB, chosen by file extension.
    Convert(ConvertArgs),
    /// Scale every row of a VFEB file to unit norm.
    Normalize(NormalizeArgs),
    /// Compute the image-by-prompt similarity matrix.
    Sim(SimArgs),
    /// Fit a model on labeled similarities (or features for centroids).
    Fit(FitArgs),
    /// Predict labels with a fitted model.
    Predict(PredictArgs),
    /// Run the seeded few-shot evaluation protocol.
    Eval(EvalArgs),
    /// Rank the prompts of a fitted SiM model per class.
    Interpret(InterpretArgs),
    /// Write a synthetic clustered task (features, prompts, labels).
    Synth(SynthArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum MethodArg {
    Sim,
    Centroids,
    Flm,
    Blm,
    All,
}

impl MethodArg {
    fn methods(self) -> Vec<Method> {
        match self {
            MethodArg::Sim => vec![Method::Sim],
            MethodArg::Centroids => vec![Method::Centroids],
            MethodArg::Flm => vec![Method::OneToOne],
            MethodArg::Blm => vec![Method::Blm],
            MethodArg::All => Method::ALL.to_vec(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum FitMethod {
    Sim,
    Centroids,
    Flm,
    Blm,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum ReportArg {
    Csv,
    Json,
    Markdown,
}

impl From<ReportArg> for ReportFormat {
    fn from(f: ReportArg) -> Self {
        match f {
            ReportArg::Csv => ReportFormat::Csv,
            ReportArg::Json => ReportFormat::Json,
            ReportArg::Markdown => ReportFormat::Markdown,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum ExplainArg {
    Json,
    Markdown,
}

#[derive(Args, Debug)]
struct ConvertArgs {
    input: PathBuf,
    output: PathBuf,
    /// Treat the first CSV line as data rather than a header.
    #[arg(long)]
    no_header: bool,
    /// Mark CSV input as unit-normalized (rows are checked).
    #[arg(long)]
    normalized: bool,
}

#[derive(Args, Debug)]
struct NormalizeArgs {
    input: PathBuf,
    output: PathBuf,
}

#[derive(Args, Debug)]
struct SimArgs {
    #[arg(long)]
    images: PathBuf,
    #[arg(long)]
    prompts: PathBuf,
    #[arg(long, short, default_value = "sims.vfeb")]
    output: PathBuf,
}

/// Similarities either precomputed or built from features and prompts.
#[derive(Args, Debug)]
struct SimSource {
    /// Precomputed similarity matrix (VFEB).
    #[arg(long)]
    sims: Option<PathBuf>,
    /// Normalized image features (VFEB).
    #[arg(long)]
    features: Option<PathBuf>,
    /// Normalized prompt embeddings (VFEB); supplies prompt names and the
    /// prompt-bank digest.
    #[arg(long)]
    prompts: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct FitArgs {
    #[arg(long, value_enum, default_value_t = FitMethod::Sim)]
    method: FitMethod,
    #[command(flatten)]
    source: SimSource,
    /// Labels file, one class index per line.
    #[arg(long)]
    labels: PathBuf,
    /// Ridge weight for SiM.
    #[arg(long, default_value_t = DEFAULT_LAMBDA)]
    lambda: f64,
    /// Additive smoothing for BLM.
    #[arg(long, default_value_t = DEFAULT_SMOOTHING)]
    smoothing: f64,
    /// Output stem; writes <stem>.vfeb and <stem>.json.
    #[arg(long, short, default_value = "model")]
    output: PathBuf,
}

#[derive(Args, Debug)]
struct PredictArgs {
    /// Model stem written by `fit`.
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    source: SimSource,
    /// Predicted labels file; stdout when absent.
    #[arg(long, short)]
    output: Option<PathBuf>,
    /// Also write the class scores (VFEB).
    #[arg(long)]
    scores: Option<PathBuf>,
    /// Ground-truth labels; prints top-1 accuracy to stderr.
    #[arg(long)]
    truth: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    features: PathBuf,
    #[arg(long)]
    labels: PathBuf,
    #[arg(long)]
    prompts: PathBuf,
    /// Separate test features; otherwise non-shot items are held out.
    #[arg(long, requires = "test_labels")]
    test_features: Option<PathBuf>,
    #[arg(long, requires = "test_features")]
    test_labels: Option<PathBuf>,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "sim")]
    method: Vec<MethodArg>,
    /// Shots per class, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "16")]
    shots: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "1,2,3")]
    seeds: Vec<u64>,
    #[arg(long, default_value_t = DEFAULT_LAMBDA)]
    lambda: f64,
    #[arg(long, default_value_t = DEFAULT_SMOOTHING)]
    smoothing: f64,
    #[arg(long, value_enum, default_value_t = ReportArg::Csv)]
    format: ReportArg,
    /// Dataset name in the report; defaults to the features file stem.
    #[arg(long)]
    dataset: Option<String>,
    /// Report file; stdout when absent.
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct InterpretArgs {
    /// SiM model stem written by `fit`.
    #[arg(long)]
    model: PathBuf,
    #[arg(long, default_value_t = DEFAULT_TOP_K)]
    top_k: usize,
    #[arg(long, value_enum, default_value_t = ExplainArg::Markdown)]
    format: ExplainArg,
    /// Optional class names, one per line.
    #[arg(long)]
    class_names: Option<PathBuf>,
    /// Report file; stdout when absent.
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long, default_value_t = 5)]
    classes: usize,
    #[arg(long, default_value_t = 64)]
    dim: usize,
    #[arg(long, default_value_t = 50)]
    prompts: usize,
    /// Training items per class.
    #[arg(long, default_value_t = 16)]
    shots: usize,
    #[arg(long, default_value_t = 50)]
    test_per_class: usize,
    /// Angular spread of each class around its mean (radians).
    #[arg(long, default_value_t = 0.05)]
    spread: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Directory for features.vfeb, prompts.vfeb and labels.txt.
    #[arg(long, short, default_value = ".")]
    out_dir: PathBuf,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    if let Some(threads) = threads_from_env() {
        vfsl_core::exec::init_threads(threads);
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let message = e.to_string().replace('\n', " ");
            eprintln!("error[{}]: {message}", e.code());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn threads_from_env() -> Option<usize> {
    let raw = std::env::var("VFSL_THREADS").ok()?;
    match raw.trim().parse() {
        Ok(n) => Some(n),
        Err(_) => {
            warn!("ignoring VFSL_THREADS={raw:?}: not a number");
            None
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Convert(a) => convert(a),
        Command::Normalize(a) => write_vfeb(&l2_normalize(&read_vfeb(&a.input)?)?, &a.output),
        Command::Sim(a) => sim(a),
        Command::Fit(a) => fit(a),
        Command::Predict(a) => predict_cmd(a),
        Command::Eval(a) => eval(a),
        Command::Interpret(a) => interpret(a),
        Command::Synth(a) => synth(a),
    }
}

fn is_csv(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

fn convert(a: ConvertArgs) -> Result<()> {
    let matrix = if is_csv(&a.input) {
        let m = read_csv(&a.input, !a.no_header)?;
        let (matrix, names, _) = m.into_parts();
        EmbeddingMatrix::new(matrix, names, a.normalized)?
    } else {
        read_vfeb(&a.input)?
    };
    if is_csv(&a.output) {
        write_csv(&matrix, &a.output)
    } else {
        write_vfeb(&matrix, &a.output)
    }
}

fn sim(a: SimArgs) -> Result<()> {
    let images = read_vfeb(&a.images)?;
    let prompts = read_vfeb(&a.prompts)?;
    let s = similarity_matrix(&images, &prompts)?;
    info!("{} x {} similarities", s.num_images(), s.num_prompts());
    write_vfeb(&s.to_embedding(), &a.output)
}

struct LoadedSims {
    sims: SimilarityMatrix,
    digest: Option<String>,
}

impl SimSource {
    fn load_sims(&self) -> Result<LoadedSims> {
        let prompts = match &self.prompts {
            Some(p) => Some((read_vfeb(p)?, file_digest(p)?)),
            None => None,
        };
        let sims = match (&self.sims, &self.features, &prompts) {
            (Some(path), _, _) => {
                let s = SimilarityMatrix::from_embedding(read_vfeb(path)?)?;
                match &prompts {
                    Some((p, _)) if p.rows() != s.num_prompts() => {
                        return Err(Error::DimensionMismatch(format!(
                            "{} prompts for {} similarity columns",
                            p.rows(),
                            s.num_prompts()
                        )))
                    }
                    Some((p, _)) => s.with_prompt_names(p.names().map(<[String]>::to_vec))?,
                    None => s,
                }
            }
            (None, Some(features), Some((p, _))) => similarity_matrix(&read_vfeb(features)?, p)?,
            _ => {
                return Err(Error::InvalidConfig(
                    "provide --sims, or --features together with --prompts".into(),
                ))
            }
        };
        Ok(LoadedSims {
            sims,
            digest: prompts.map(|(_, d)| d),
        })
    }

    fn load_features(&self) -> Result<EmbeddingMatrix> {
        match &self.features {
            Some(path) => read_vfeb(path),
            None => Err(Error::InvalidConfig("centroids need --features".into())),
        }
    }
}

fn fit(a: FitArgs) -> Result<()> {
    let labels = read_labels(&a.labels)?;
    let (model, digest) = match a.method {
        FitMethod::Centroids => {
            let features = a.source.load_features()?;
            (
                SavedModel::Centroids(fit_centroids_labeled(&features, &labels)?),
                None,
            )
        }
        method => {
            let LoadedSims { sims, digest } = a.source.load_sims()?;
            let model = match method {
                FitMethod::Sim => SavedModel::Mapping(sim_mapper::fit(
                    &sims,
                    &labels,
                    &SolverConfig::with_lambda(a.lambda),
                )?),
                FitMethod::Flm => SavedModel::Assignment(fit_flm(&sims, &labels)?),
                _ => SavedModel::Assignment(fit_blm(&sims, &labels, a.smoothing)?),
            };
            (model, digest)
        }
    };
    if let SavedModel::Mapping(m) = &model {
        if m.jitter_applied() > 0.0 {
            warn!(
                "normal matrix was singular; added jitter {:e}",
                m.jitter_applied()
            );
        }
    }
    let meta = save_model(&model, &a.output, digest)?;
    info!("wrote {} model, {} x {}", meta.method, meta.rows, meta.cols);
    Ok(())
}

fn predict_cmd(a: PredictArgs) -> Result<()> {
    let (model, meta) = load_model(&a.model)?;
    let scores: ScoreMatrix = match &model {
        SavedModel::Centroids(c) => c.score(&a.source.load_features()?)?,
        other => {
            let LoadedSims { sims, digest } = a.source.load_sims()?;
            if let (Some(expected), Some(found)) = (&meta.prompt_bank_digest, &digest) {
                if expected != found {
                    warn!("prompt bank differs from the one the model was fitted with");
                }
            }
            match other {
                SavedModel::Mapping(m) => sim_mapper::score(m, &sims)?,
                SavedModel::Assignment(m) => m.score(&sims)?,
                SavedModel::Centroids(_) => unreachable!(),
            }
        }
    };
    let predicted = predict(&scores);
    if let Some(path) = &a.scores {
        write_vfeb(
            &EmbeddingMatrix::from_matrix(scores.matrix().to_f32())?,
            path,
        )?;
    }
    if let Some(path) = &a.truth {
        let truth = read_labels(path)?;
        eprintln!("accuracy: {:.4}", truth.accuracy(&predicted)?);
    }
    match &a.output {
        Some(path) => write_labels(&predicted, path),
        None => {
            let mut text = String::with_capacity(predicted.len() * 3);
            for l in predicted.as_slice() {
                text.push_str(&l.to_string());
                text.push('\n');
            }
            write_stdout(&text)
        }
    }
}

fn eval(a: EvalArgs) -> Result<()> {
    let features = read_vfeb(&a.features)?;
    let labels = read_labels(&a.labels)?;
    let prompts = read_vfeb(&a.prompts)?;
    let dataset = a.dataset.clone().unwrap_or_else(|| {
        a.features
            .file_stem()
            .map_or_else(|| "dataset".into(), |s| s.to_string_lossy().into_owned())
    });
    let mut data = EvalData::new(dataset, features, labels, prompts)?;
    if let (Some(f), Some(l)) = (&a.test_features, &a.test_labels) {
        data = data.with_test(read_vfeb(f)?, read_labels(l)?)?;
    }
    let mut methods: Vec<Method> = a.method.iter().flat_map(|m| m.methods()).collect();
    methods.dedup();
    let mut reports = Vec::new();
    for &shots in &a.shots {
        for &method in &methods {
            let mut task = TaskSpec::new(method, shots, a.seeds.clone());
            task.lambda = Some(a.lambda);
            task.smoothing = Some(a.smoothing);
            let report = evaluate(&task, &data)?;
            info!("{method} {shots}-shot: {:.4}", report.mean);
            reports.push(report);
        }
    }
    let text = emit_report(&reports, a.format.into())?;
    write_output(a.output.as_deref(), &text)
}

fn interpret(a: InterpretArgs) -> Result<()> {
    let model = match load_model(&a.model)?.0 {
        SavedModel::Mapping(m) => m,
        other => {
            return Err(Error::InvalidModel(format!(
                "interpret needs a sim model, got {}",
                other.method()
            )))
        }
    };
    let class_names = match &a.class_names {
        Some(path) => Some(read_lines(path)?),
        None => None,
    };
    let explanations = explain_with_names(&model, a.top_k, class_names.as_deref())?;
    let format = match a.format {
        ExplainArg::Json => ExplanationFormat::Json,
        ExplainArg::Markdown => ExplanationFormat::Markdown,
    };
    write_output(
        a.output.as_deref(),
        &render_explanations(&explanations, format)?,
    )
}

fn synth(a: SynthArgs) -> Result<()> {
    let spec = SyntheticSpec {
        num_classes: a.classes,
        dim: a.dim,
        prompts: a.prompts,
        shots: a.shots,
        test_per_class: a.test_per_class,
        cluster_spread: a.spread,
        seed: a.seed,
    };
    let data = generate_synthetic(&spec)?;
    fs::create_dir_all(&a.out_dir).map_err(|e| io_error(&a.out_dir, e))?;
    write_vfeb(&data.features, a.out_dir.join("features.vfeb"))?;
    write_vfeb(&data.prompts, a.out_dir.join("prompts.vfeb"))?;
    write_labels(&data.labels, a.out_dir.join("labels.txt"))
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    Ok(text.lines().map(|l| l.trim_end().to_owned()).collect())
}

fn write_output(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| io_error(p, e)),
        None => write_stdout(text),
    }
}

fn write_stdout(text: &str) -> Result<()> {
    let mut out = std::io::stdout().lock();
    out.write_all(text.as_bytes())
        .and_then(|()| out.flush())
        .map_err(|e| io_error(Path::new("<stdout>"), e))
}

fn io_error(path: &Path, source: std::io::Error) -> Error {
    Error::IoFailure {
        path: path.to_path_buf(),
        source,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_valid() {
        Cli::command().debug_assert();
    }

    #[test]
    fn defaults_surface_in_help() {
        let help = Cli::command()
            .find_subcommand_mut("fit")
            .unwrap()
            .render_long_help()
            .to_string();
        assert!(help.contains("[default: 1]"), "{help}");
        let help = Cli::command()
            .find_subcommand_mut("interpret")
            .unwrap()
            .render_long_help()
            .to_string();
        assert!(help.contains("[default: 4]"), "{help}");
    }
}
