use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::parser::ValueSource;
use clap::{ArgMatches, Args, CommandFactory, FromArgMatches, Parser, Subcommand};
use tempfile::NamedTempFile;

use walker_activity::eval::{self, EvalReport, Protocol};
use walker_activity::features::{build_features, Calibration, FeatureMode, LoadRange};
use walker_activity::hmm::PriorMode;
use walker_activity::io;
use walker_activity::persist::{load_model, ModelFile};
use walker_activity::recipe::{predict, ModelFamily, Prediction, Recipe, TransitionChoice};
use walker_activity::simgen::{simulate_course, Course, CourseScript, EmissionTable};
use walker_activity::types::{ChannelLayout, LabelSet};

/// Behaviour recognition for instrumented walkers.
///
/// Exit status: 0 success, 2 usage error, 3 data error, 4 numerical failure.
#[derive(Parser)]
#[command(name = "walker-activity", version)]
struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Raw sensor CSV to feature CSV.
    Featurize(FeaturizeArgs),
    /// Fit a model on feature CSVs and write it as JSON.
    Train(TrainArgs),
    /// Label a feature CSV with a trained model.
    Predict(PredictArgs),
    /// Compare predicted and true labels.
    Evaluate(EvaluateArgs),
    /// Generate labeled raw recordings from course scripts.
    Simulate(SimulateArgs),
    /// Leave-one-participant-out cross-validation on a dataset directory.
    Crossval(CrossvalArgs),
}

#[derive(Args)]
struct FeaturizeArgs {
    /// Raw recording (`t,accel_x,...,encoder[,label]`).
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    #[arg(long, value_enum, default_value_t = FeatureMode::Cop)]
    mode: FeatureMode,
    /// Encoder counts per meter.
    #[arg(long, default_value_t = 1.0)]
    ticks_per_meter: f64,
    /// Recordings whose load range normalizes the NL features; by default the
    /// input's own range.
    #[arg(long, num_args = 1..)]
    load_range_from: Vec<PathBuf>,
}

/// Model settings shared by `train` and `crossval`. Flags override the
/// config file, which overrides the defaults.
#[derive(Args)]
struct RecipeArgs {
    /// JSON file with any subset of the settings below.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    #[arg(long = "model", value_enum, default_value_t = ModelFamily::HmmMl)]
    family: ModelFamily,
    #[arg(long, value_enum, default_value_t = FeatureMode::Cop)]
    mode: FeatureMode,
    /// Encoder counts per meter.
    #[arg(long, default_value_t = 1.0)]
    ticks_per_meter: f64,
    /// Equal-frequency bins per feature (HMMs).
    #[arg(long, default_value_t = 20)]
    bins: usize,
    /// Transition estimate of the supervised HMM.
    #[arg(long, value_enum, default_value_t = TransitionChoice::Persistence)]
    transitions: TransitionChoice,
    /// Behaviour persistence for `--transitions persistence`.
    #[arg(long, default_value_t = 4000.0)]
    tau: f64,
    /// Initial-state distribution of the supervised HMM.
    #[arg(long, value_enum, default_value_t = PriorMode::Uniform)]
    prior: PriorMode,
    /// Pseudocount added to supervised counts.
    #[arg(long, default_value_t = 1.0)]
    epsilon: f64,
    /// Latent states for hmm-em and hmm-gibbs [default: number of labels].
    #[arg(long)]
    states: Option<usize>,
    /// EM random restarts.
    #[arg(long, default_value_t = 20)]
    restarts: usize,
    /// EM iteration cap per restart.
    #[arg(long, default_value_t = 300)]
    em_max_iters: usize,
    /// EM relative convergence tolerance.
    #[arg(long, default_value_t = 1e-8)]
    em_tol: f64,
    /// Gibbs sweeps, burn-in included.
    #[arg(long, default_value_t = 200)]
    sweeps: usize,
    #[arg(long, default_value_t = 100)]
    burn_in: usize,
    /// CRF prior variance.
    #[arg(long, default_value_t = 1.0)]
    sigma2: f64,
    /// CRF conjugate-gradient iterations.
    #[arg(long, default_value_t = 100)]
    cg_iters: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct TrainArgs {
    /// Feature CSVs; labeled unless the model is hmm-em or hmm-gibbs.
    #[arg(long, num_args = 1.., required = true)]
    input: Vec<PathBuf>,
    #[arg(long)]
    output: PathBuf,
    /// Behaviour set: exp1, exp2, full, or a comma list of codes.
    #[arg(long, default_value = "full")]
    labels: LabelSet,
    /// Optional CSV of training diagnostics (EM, Gibbs or CG trace).
    #[arg(long)]
    diagnostics: Option<PathBuf>,
    #[command(flatten)]
    recipe: RecipeArgs,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    /// Feature CSV.
    #[arg(long)]
    input: PathBuf,
    /// Label CSV (`t,label`).
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Predicted label CSVs (any CSV with a `label` column).
    #[arg(long, num_args = 1.., required = true)]
    predicted: Vec<PathBuf>,
    /// Ground-truth CSVs, one per prediction, in the same order.
    #[arg(long, num_args = 1.., required = true)]
    actual: Vec<PathBuf>,
    #[arg(long, default_value = "full")]
    labels: LabelSet,
    /// Window for the metrics JSON and confusion matrix.
    #[arg(long, default_value_t = 25)]
    window: usize,
    /// Windows of the sweep table.
    #[arg(long, value_delimiter = ',', default_value = "0,5,10,15,20,25,30,35,40,45,50")]
    window_grid: Vec<usize>,
    /// Receives metrics.json, confusion.csv and window_sweep.csv.
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    /// Course script JSON; writes one recording to `--output`.
    #[arg(long, conflicts_with_all = ["course", "out_dir"], requires = "output")]
    script: Option<PathBuf>,
    #[arg(long)]
    output: Option<PathBuf>,
    /// Participant id written for `--script` [default: output file stem].
    #[arg(long)]
    participant: Option<String>,
    /// Built-in course; writes `<out-dir>/pNN/runK.csv`.
    #[arg(long, value_enum, requires = "out_dir")]
    course: Option<Course>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long, default_value_t = 6)]
    participants: u64,
    #[arg(long, default_value_t = 1)]
    runs: u64,
    /// Noise scale for built-in courses.
    #[arg(long, default_value_t = 1.0)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Emission table JSON [default: the bundled table].
    #[arg(long)]
    table: Option<PathBuf>,
}

#[derive(Args)]
struct CrossvalArgs {
    /// Dataset directory: one subdirectory of runs per participant.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value = "full")]
    labels: LabelSet,
    #[arg(long, value_enum, default_value_t = Protocol::Exp2)]
    protocol: Protocol,
    /// Window for the pooled confusion matrix.
    #[arg(long, default_value_t = 25)]
    window: usize,
    #[arg(long, value_delimiter = ',', default_value = "0,5,10,15,20,25,30,35,40,45,50")]
    window_grid: Vec<usize>,
    /// Receives per-fold and pooled reports.
    #[arg(long)]
    out_dir: PathBuf,
    #[command(flatten)]
    recipe: RecipeArgs,
}

/// Misuse detected after parsing; exits with status 2.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

impl RecipeArgs {
    fn resolve(&self, m: &ArgMatches) -> anyhow::Result<Recipe> {
        let mut r = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?
            }
            None => Recipe::default(),
        };
        let given = |id: &str| m.value_source(id) == Some(ValueSource::CommandLine);
        macro_rules! set {
            ($($id:literal => $field:ident = $value:expr),* $(,)?) => {
                $(if given($id) { r.$field = $value; })*
            };
        }
        set! {
            "family" => family = self.family,
            "mode" => feature_mode = self.mode,
            "ticks_per_meter" => ticks_per_meter = self.ticks_per_meter,
            "bins" => bins = self.bins,
            "transitions" => transitions = self.transitions,
            "tau" => tau = self.tau,
            "prior" => prior = self.prior,
            "epsilon" => epsilon = self.epsilon,
            "states" => num_states = self.states,
            "restarts" => restarts = self.restarts,
            "em_max_iters" => em_max_iters = self.em_max_iters,
            "em_tol" => em_tol = self.em_tol,
            "sweeps" => sweeps = self.sweeps,
            "burn_in" => burn_in = self.burn_in,
            "sigma2" => sigma2 = self.sigma2,
            "cg_iters" => cg_iters = self.cg_iters,
            "seed" => seed = self.seed,
        }
        r.validate().map_err(|e| usage(e.to_string()))?;
        Ok(r)
    }
}

/// Writes through a temporary file in the target directory, then renames.
fn write_atomic(path: &Path, f: impl FnOnce(&mut dyn Write) -> anyhow::Result<()>) -> anyhow::Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut tmp = NamedTempFile::new_in(dir)?;
    {
        let mut w = BufWriter::new(tmp.as_file_mut());
        f(&mut w)?;
        w.flush()?;
    }
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        tmp.as_file().set_permissions(std::fs::Permissions::from_mode(0o644))?;
    }
    tmp.persist(path).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn write_text(path: &Path, text: &str) -> anyhow::Result<()> {
    write_atomic(path, |w| Ok(w.write_all(text.as_bytes())?))
}

fn featurize(args: &FeaturizeArgs) -> anyhow::Result<()> {
    let layout = ChannelLayout::canonical();
    let full = LabelSet::full();
    let raw = io::load_csv(&args.input, &layout, Some(&full))?;
    let load_range = if args.load_range_from.is_empty() {
        None
    } else {
        let refs = args
            .load_range_from
            .iter()
            .map(|p| io::load_csv(p, &layout, Some(&full)))
            .collect::<Result<Vec<_>, _>>()?;
        LoadRange::observe(&refs)
    };
    let calib = Calibration {
        ticks_per_meter: args.ticks_per_meter,
        load_range,
    };
    let feats = build_features(&raw, args.mode, &calib)?;
    write_atomic(&args.output, |w| Ok(io::write_feature_csv(w, &feats)?))
}

fn train(args: &TrainArgs, m: &ArgMatches) -> anyhow::Result<()> {
    let mut recipe = args.recipe.resolve(m)?;
    let data = args
        .input
        .iter()
        .map(io::load_feature_csv)
        .collect::<Result<Vec<_>, _>>()?;
    // the feature files decide the mode unless it was asked for explicitly
    let names = &data[0].feature_names;
    let detected = [FeatureMode::Cop, FeatureMode::Nl]
        .into_iter()
        .find(|mode| &mode.feature_names() == names);
    match detected {
        Some(mode) if m.value_source("mode") == Some(ValueSource::CommandLine) && mode != recipe.feature_mode => {
            return Err(walker_activity::Error::Dimension(format!(
                "feature files hold {mode:?} features but --mode {:?} was given",
                recipe.feature_mode
            ))
            .into());
        }
        Some(mode) => recipe.feature_mode = mode,
        None => {
            return Err(walker_activity::Error::Dimension(format!(
                "unrecognized feature columns `{}`",
                names.join(",")
            ))
            .into())
        }
    }
    let trained = recipe.train(&data, &args.labels)?;
    let json = trained.file.to_json()?;
    write_text(&args.output, &json)?;
    if let Some(path) = &args.diagnostics {
        match trained.diagnostics.to_csv() {
            Some(csv) => write_text(path, &csv)?,
            None => log::warn!("{:?} training produces no diagnostics", recipe.family),
        }
    }
    Ok(())
}

fn predict_cmd(args: &PredictArgs) -> anyhow::Result<()> {
    let file = load_model(&args.model)?;
    let seq = io::load_feature_csv(&args.input)?;
    let prediction = predict(&file, &seq)?;
    write_atomic(&args.output, |w| {
        match &prediction {
            Prediction::Behaviours(labels) => io::write_label_csv(w, labels)?,
            Prediction::Latent(states) => {
                let names = match &file {
                    ModelFile::Hmm { model, .. } => model.state_names.clone(),
                    ModelFile::Crf { .. } => unreachable!("CRFs always name behaviours"),
                };
                writeln!(w, "t,state")?;
                for (t, &s) in states.iter().enumerate() {
                    writeln!(w, "{t},{}", names[s])?;
                }
            }
        }
        Ok(())
    })
}

fn print_summary(report: &EvalReport) {
    // "precision" and "recall" follow the original naming: CPT/AT and CPT/PT
    println!(
        "window {}: accuracy {:.2}%  precision (CPT/AT) {:.3}  recall (CPT/PT) {:.3}  [AT {} PT {} CPT {}]",
        report.window,
        100.0 * report.accuracy,
        report.ratios.cpt_over_at,
        report.ratios.cpt_over_pt,
        report.transition_counts.at,
        report.transition_counts.pt,
        report.transition_counts.cpt,
    );
}

fn write_reports(out_dir: &Path, at_window: &EvalReport, sweep: &[EvalReport]) -> anyhow::Result<()> {
    write_text(&out_dir.join("metrics.json"), &serde_json::to_string_pretty(at_window)?)?;
    write_atomic(&out_dir.join("confusion.csv"), |w| Ok(eval::write_confusion_csv(w, at_window)?))?;
    write_atomic(&out_dir.join("window_sweep.csv"), |w| Ok(eval::write_window_sweep_csv(w, sweep)?))
}

fn evaluate(args: &EvaluateArgs) -> anyhow::Result<()> {
    if args.predicted.len() != args.actual.len() {
        return Err(usage(format!(
            "{} --predicted files but {} --actual files",
            args.predicted.len(),
            args.actual.len()
        )));
    }
    let load = |paths: &[PathBuf]| paths.iter().map(io::load_label_csv).collect::<Result<Vec<_>, _>>();
    let predicted = load(&args.predicted)?;
    let actual = load(&args.actual)?;
    let pairs: Vec<_> = actual
        .iter()
        .zip(&predicted)
        .map(|(a, p)| (a.as_slice(), p.as_slice()))
        .collect();
    let report = EvalReport::from_pairs(pairs.iter().copied(), args.window, &args.labels)?;
    let sweep = eval::window_sweep(&pairs, &args.window_grid, &args.labels)?;
    write_reports(&args.out_dir, &report, &sweep)?;
    print_summary(&report);
    Ok(())
}

fn simulate(args: &SimulateArgs) -> anyhow::Result<()> {
    let table = match &args.table {
        Some(p) => EmissionTable::from_json(&std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)?,
        None => EmissionTable::canonical(),
    };
    let layout = ChannelLayout::canonical();
    match (&args.script, args.course) {
        (Some(script_path), None) => {
            let output = args.output.as_ref().expect("clap requires --output with --script");
            let text = std::fs::read_to_string(script_path).with_context(|| format!("reading {}", script_path.display()))?;
            let script: CourseScript = serde_json::from_str(&text)?;
            let pid = args.participant.clone().unwrap_or_else(|| {
                output.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
            });
            let raw = simulate_course(&script, &table, &pid)?;
            write_atomic(output, |w| Ok(io::write_raw_csv(w, &raw, &layout)?))
        }
        (None, Some(course)) => {
            let out_dir = args.out_dir.as_ref().expect("clap requires --out-dir with --course");
            for p in 0..args.participants {
                let pid = format!("p{:02}", p + 1);
                for run in 0..args.runs {
                    let script = CourseScript::for_participant(course, p, run, args.noise, args.seed);
                    let raw = simulate_course(&script, &table, &pid)?;
                    let path = out_dir.join(&pid).join(format!("run{}.csv", run + 1));
                    write_atomic(&path, |w| Ok(io::write_raw_csv(w, &raw, &layout)?))?;
                }
            }
            Ok(())
        }
        _ => Err(usage("give either --script with --output, or --course with --out-dir")),
    }
}

fn crossval(args: &CrossvalArgs, m: &ArgMatches) -> anyhow::Result<()> {
    let recipe = args.recipe.resolve(m)?;
    let mut grid = args.window_grid.clone();
    if !grid.contains(&args.window) {
        grid.push(args.window);
    }
    let dataset = io::load_dataset_dir(&args.input, &ChannelLayout::canonical(), &args.labels)?;
    let report = eval::loocv(&dataset, &recipe, args.protocol, &grid)?;
    let wi = grid.iter().position(|&x| x == args.window).expect("window is in the grid");
    for fold in &report.folds {
        let path = args.out_dir.join("folds").join(format!("{}.json", fold.participant));
        write_text(&path, &serde_json::to_string_pretty(fold)?)?;
        println!(
            "fold {}: accuracy {:.2}% at window {}",
            fold.participant,
            100.0 * fold.reports[wi].accuracy,
            args.window
        );
    }
    write_text(&args.out_dir.join("pooled.json"), &serde_json::to_string_pretty(&report.pooled)?)?;
    write_text(&args.out_dir.join("recipe.json"), &serde_json::to_string_pretty(&recipe)?)?;
    let sweep: Vec<EvalReport> = args
        .window_grid
        .iter()
        .map(|x| report.pooled[grid.iter().position(|g| g == x).expect("grid member")].clone())
        .collect();
    write_atomic(&args.out_dir.join("confusion.csv"), |w| {
        Ok(eval::write_confusion_csv(w, &report.pooled[wi])?)
    })?;
    write_atomic(&args.out_dir.join("window_sweep.csv"), |w| Ok(eval::write_window_sweep_csv(w, &sweep)?))?;
    print_summary(&report.pooled[wi]);
    Ok(())
}

fn run(cli: &Cli, matches: &ArgMatches) -> anyhow::Result<()> {
    let sub = matches.subcommand().map(|(_, m)| m).expect("a subcommand is required");
    match &cli.command {
        Command::Featurize(a) => featurize(a),
        Command::Train(a) => train(a, sub),
        Command::Predict(a) => predict_cmd(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Simulate(a) => simulate(a),
        Command::Crossval(a) => crossval(a, sub),
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<Usage>().is_some() {
        return 2;
    }
    match err.chain().find_map(|e| e.downcast_ref::<walker_activity::Error>()) {
        Some(e) if e.is_numeric() => 4,
        _ => 3,
    }
}

fn main() -> ExitCode {
    let matches = Cli::command().get_matches();
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&cli, &matches) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
