//! Command-line pipeline: `gen-data`, `train`, `attack`, `build-masks`,
//! `defend`, `eval`, and `grid`.
//!
//! Every command is a pure function of its input artifacts, flags, and seed;
//! rerunning a command with identical inputs rewrites identical bytes. Seeds
//! never come from the wall clock. A JSON config file (flat dotted keys, see
//! [`config::ConfigFile`]) supplies defaults; flags override it. On failure
//! the binary prints a single machine-readable JSON error line to stderr and
//! exits nonzero.

pub mod config;

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use thiserror::Error;

use crate::classifier::{self, ClassifierModel, ClassifierError, Label, ModelCodecError, TrainConfig};
use crate::defense::{DefenseError, DefenseOp, RemapMode, DEFAULT_EPSILON, DEFAULT_MAX_ITERATIONS, DEFAULT_TAU};
use crate::eval::{
    self, report::EvalRecord, Application, Baseline, EvalError, Knowledge, MaskSource,
    MetricsReport, ScenarioConfig, Selection,
};
use crate::fusion::FusionMode;
use crate::imaging::{load_mask_png, load_png, save_png, ImagingError};
use crate::masks::{self, MaskError, Overlap, RandomMaskConfig, WindowCount};
use crate::seeding;
use crate::synth::{
    self, build_attacked_corpus, AttackBudget, Corpus, CorpusError, StickerColor, SynthError,
};

use config::{resolve, ConfigFile};

/// Environment variable naming the default output root directory.
pub const OUT_ROOT_ENV: &str = "STICKER_DEFENSE_OUT";

pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_CANVAS: usize = 64;
pub const DEFAULT_CLASSES: usize = 8;
pub const DEFAULT_PER_CLASS: usize = 250;
pub const DEFAULT_TRAIN_FRACTION: f64 = 0.8;
pub const DEFAULT_PI_ATTACK: f64 = 0.5;
pub const DEFAULT_SELECTION_K: usize = 3;
pub const DEFAULT_WINDOW_SIZE: usize = 8;
pub const DEFAULT_RATIO: f64 = 0.625;
pub const DEFAULT_NUM_MASKS: usize = 100;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error{}: {reason}", path_suffix(.path))]
    Config {
        path: Option<PathBuf>,
        reason: String,
    },
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{what} not found at {path}; {hint}")]
    MissingArtifact {
        what: &'static str,
        path: PathBuf,
        hint: &'static str,
    },
    #[error("invalid value for {flag}: {reason}")]
    BadFlag { flag: String, reason: String },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error(transparent)]
    Model(#[from] ModelCodecError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Mask(#[from] MaskError),
    #[error(transparent)]
    Defense(#[from] DefenseError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Imaging(#[from] ImagingError),
}

fn path_suffix(path: &Option<PathBuf>) -> String {
    path.as_ref()
        .map(|p| format!(" in {}", p.display()))
        .unwrap_or_default()
}

impl CliError {
    /// Stable error category for the machine-readable stderr line.
    pub fn category(&self) -> &'static str {
        match self {
            CliError::Config { .. } => "config",
            CliError::Io { .. } => "io",
            CliError::MissingArtifact { .. } => "missing-artifact",
            CliError::BadFlag { .. } => "usage",
            CliError::Corpus(_) => "corpus",
            CliError::Classifier(_) => "classifier",
            CliError::Model(_) => "model",
            CliError::Synth(_) => "synth",
            CliError::Mask(_) => "mask-store",
            CliError::Defense(_) => "defense",
            CliError::Eval(_) => "eval",
            CliError::Imaging(_) => "imaging",
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "sticker-defense",
    about = "Defenses against multi-sticker physical attacks on image classifiers",
    version
)]
pub struct Cli {
    /// JSON config file with flat dotted keys mirroring flags.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker-thread cap. Results are identical for any worker count.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the unattacked synthetic sign corpus.
    GenData(GenDataArgs),
    /// Train the classifier on a corpus's train split.
    Train(TrainArgs),
    /// Attack the corpus: one attacked sample per (source, target) pair.
    Attack(AttackArgs),
    /// Precompute the estimated defensive mask store.
    BuildMasks(BuildMasksArgs),
    /// Apply one local defense to one image and mask.
    Defend(DefendArgs),
    /// Evaluate a defense scenario and report CA/T-ASR/U-ASR/DR/CD/PDA.
    Eval(EvalArgs),
    /// Grid-search blind window size and ratio.
    Grid(GridArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScenarioArg {
    NonBlind,
    SemiBlind,
    Blind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DefenseArg {
    RemapW,
    RemapB,
    RemapT,
    Reconstruct,
    /// Baseline: whole-image median filter.
    Median,
    /// Baseline: whole-image JPEG re-compression.
    Jpeg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ApplicationArg {
    Sequential,
    Parallel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FusionArg {
    Mv,
    Sf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SelectionArg {
    Ranked,
    Random,
    Guaranteed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OverlapArg {
    Overlapping,
    NonOverlapping,
}

#[derive(Debug, clap::Args)]
pub struct GenDataArgs {
    /// Output corpus directory [default: $STICKER_DEFENSE_OUT/corpus].
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub canvas: Option<usize>,
    #[arg(long)]
    pub classes: Option<usize>,
    #[arg(long)]
    pub per_class: Option<usize>,
    #[arg(long)]
    pub train_fraction: Option<f64>,
}

#[derive(Debug, clap::Args)]
pub struct TrainArgs {
    /// Corpus directory produced by gen-data.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Output model file [default: $STICKER_DEFENSE_OUT/model.bin].
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub momentum: Option<f64>,
    #[arg(long)]
    pub input_size: Option<usize>,
}

#[derive(Debug, clap::Args)]
pub struct AttackArgs {
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub max_stickers: Option<usize>,
    /// Square sticker sizes in pixels, comma-separated.
    #[arg(long, value_delimiter = ',')]
    pub sizes: Option<Vec<usize>>,
    #[arg(long)]
    pub stride: Option<usize>,
}

#[derive(Debug, clap::Args)]
pub struct BuildMasksArgs {
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Output store directory [default: $STICKER_DEFENSE_OUT/maskstore].
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub canvas: Option<usize>,
    #[arg(long)]
    pub classes: Option<usize>,
    #[arg(long)]
    pub max_stickers: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub sizes: Option<Vec<usize>>,
    #[arg(long)]
    pub stride: Option<usize>,
}

#[derive(Debug, clap::Args)]
pub struct DefendArgs {
    /// Input image PNG.
    #[arg(long)]
    pub image: PathBuf,
    /// Defensive mask PNG (0 = keep, 255 = defend).
    #[arg(long)]
    pub mask: PathBuf,
    /// Output PNG [default: $STICKER_DEFENSE_OUT/defended.png].
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "remap-t")]
    pub defense: DefenseArg,
    /// Luminance threshold for remap-t.
    #[arg(long)]
    pub tau: Option<f64>,
    /// Convergence tolerance for reconstruct.
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Sweep cap for reconstruct.
    #[arg(long)]
    pub max_iterations: Option<usize>,
}

#[derive(Debug, clap::Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Mask store directory (semi-blind only).
    #[arg(long)]
    pub store: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub scenario: ScenarioArg,
    #[arg(long, value_enum, default_value = "remap-t")]
    pub defense: DefenseArg,
    #[arg(long, value_enum)]
    pub application: Option<ApplicationArg>,
    #[arg(long, value_enum)]
    pub fusion: Option<FusionArg>,
    /// Estimated-set selection strategy (semi-blind).
    #[arg(long, value_enum)]
    pub selection: Option<SelectionArg>,
    /// Number of estimated masks to select (semi-blind).
    #[arg(long)]
    pub k: Option<usize>,
    /// Window size in pixels (blind).
    #[arg(long)]
    pub window_size: Option<usize>,
    /// Fraction of grid blocks to defend (blind).
    #[arg(long)]
    pub ratio: Option<f64>,
    /// Explicit window count per mask (blind); overrides --ratio.
    #[arg(long)]
    pub num_windows: Option<usize>,
    #[arg(long, value_enum)]
    pub overlap: Option<OverlapArg>,
    /// Number of random masks per sample (blind).
    #[arg(long)]
    pub num_masks: Option<usize>,
    /// A-priori attack probability.
    #[arg(long)]
    pub pi: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub max_iterations: Option<usize>,
    /// Median-filter kernel (defense = median).
    #[arg(long)]
    pub kernel: Option<usize>,
    /// JPEG quality factor (defense = jpeg).
    #[arg(long)]
    pub quality: Option<u8>,
    /// Permit ground-truth-assisted Guaranteed selection (evaluation only).
    #[arg(long)]
    pub allow_ground_truth: bool,
    /// Report JSON path [default: $STICKER_DEFENSE_OUT/reports/<name>.json].
    #[arg(long)]
    pub out_json: Option<PathBuf>,
    /// Report CSV path [default: $STICKER_DEFENSE_OUT/reports/<name>.csv].
    #[arg(long)]
    pub out_csv: Option<PathBuf>,
}

#[derive(Debug, clap::Args)]
pub struct GridArgs {
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Window sizes, comma-separated.
    #[arg(long, value_delimiter = ',')]
    pub w: Option<Vec<usize>>,
    /// Block ratios, comma-separated.
    #[arg(long, value_delimiter = ',')]
    pub ratio: Option<Vec<f64>>,
    #[arg(long)]
    pub num_masks: Option<usize>,
    #[arg(long, value_enum)]
    pub fusion: Option<FusionArg>,
    #[arg(long, value_enum)]
    pub defense: Option<DefenseArg>,
    #[arg(long)]
    pub pi: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub max_iterations: Option<usize>,
    #[arg(long)]
    pub out_json: Option<PathBuf>,
    #[arg(long)]
    pub out_csv: Option<PathBuf>,
}

/// Binary entry point.
pub fn main() -> std::process::ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => std::process::ExitCode::SUCCESS,
        Err(err) => {
            let payload = serde_json::json!({
                "error": err.category(),
                "message": err.to_string(),
            });
            eprintln!("{payload}");
            std::process::ExitCode::FAILURE
        }
    }
}

/// Runs one parsed invocation.
pub fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(workers) = cli.workers {
        // Ignore the error when a pool already exists (repeat calls in-process).
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build_global();
    }
    let cfg = match &cli.config {
        Some(path) => ConfigFile::load(path)?,
        None => ConfigFile::empty(),
    };
    match cli.command {
        Command::GenData(args) => cmd_gen_data(&args, &cfg),
        Command::Train(args) => cmd_train(&args, &cfg),
        Command::Attack(args) => cmd_attack(&args, &cfg),
        Command::BuildMasks(args) => cmd_build_masks(&args, &cfg),
        Command::Defend(args) => cmd_defend(&args, &cfg),
        Command::Eval(args) => cmd_eval(&args, &cfg),
        Command::Grid(args) => cmd_grid(&args, &cfg),
    }
}

fn out_root() -> PathBuf {
    std::env::var_os(OUT_ROOT_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("."))
}

fn default_path(args_path: &Option<PathBuf>, cfg_key: Option<String>, leaf: &str) -> PathBuf {
    args_path
        .clone()
        .or(cfg_key.map(PathBuf::from))
        .unwrap_or_else(|| out_root().join(leaf))
}

fn load_corpus_checked(dir: &Path) -> Result<Corpus, CliError> {
    if !dir.join("manifest.json").exists() {
        return Err(CliError::MissingArtifact {
            what: "corpus",
            path: dir.to_path_buf(),
            hint: "run `sticker-defense gen-data` first",
        });
    }
    Ok(synth::load_corpus(dir)?)
}

fn load_model_checked(path: &Path) -> Result<ClassifierModel, CliError> {
    if !path.exists() {
        return Err(CliError::MissingArtifact {
            what: "classifier model",
            path: path.to_path_buf(),
            hint: "run `sticker-defense train` first",
        });
    }
    Ok(ClassifierModel::load(path)?)
}

fn load_store_checked(dir: &Path) -> Result<masks::MaskSetStore, CliError> {
    if !dir.join("index.json").exists() {
        return Err(CliError::MissingArtifact {
            what: "mask store",
            path: dir.to_path_buf(),
            hint: "run `sticker-defense build-masks` first",
        });
    }
    Ok(masks::load_store(dir)?)
}

fn budget_from(
    max_stickers: Option<usize>,
    sizes: Option<Vec<usize>>,
    stride: Option<usize>,
    cfg: &ConfigFile,
) -> Result<AttackBudget, CliError> {
    let default = AttackBudget::default();
    Ok(AttackBudget {
        max_stickers: resolve(
            max_stickers,
            cfg.usize("attack.max_stickers")?,
            default.max_stickers,
        ),
        sticker_sizes: sizes
            .or(cfg.usize_list("attack.sizes")?)
            .unwrap_or(default.sticker_sizes),
        colors: vec![StickerColor::Black, StickerColor::White],
        candidate_stride: resolve(
            stride,
            cfg.usize("attack.stride")?,
            default.candidate_stride,
        ),
    })
}

fn cmd_gen_data(args: &GenDataArgs, cfg: &ConfigFile) -> Result<(), CliError> {
    let seed = resolve(args.seed, cfg.u64("seed")?, DEFAULT_SEED);
    let canvas = resolve(args.canvas, cfg.usize("canvas")?, DEFAULT_CANVAS);
    let classes = resolve(args.classes, cfg.usize("classes")?, DEFAULT_CLASSES);
    let per_class = resolve(
        args.per_class,
        cfg.usize("corpus.per_class")?,
        DEFAULT_PER_CLASS,
    );
    let train_fraction = resolve(
        args.train_fraction,
        cfg.f64("corpus.train_fraction")?,
        DEFAULT_TRAIN_FRACTION,
    );
    let out = default_path(&args.out, cfg.string("gen_data.out")?, "corpus");

    let split = synth::generate_dataset(classes, per_class, train_fraction, seed, canvas)?;
    let corpus = Corpus {
        canvas,
        n_classes: classes,
        master_seed: seed,
        attack_budget: None,
        train: split.train,
        test: split.test,
        attacked: vec![],
        attack_successes: vec![],
    };
    synth::save_corpus(&out, &corpus)?;
    println!("corpus written to {}", out.display());
    println!(
        "classes={} per_class={} canvas={} seed={}",
        classes, per_class, canvas, seed
    );
    for class in 0..classes {
        let train = corpus
            .train
            .iter()
            .filter(|s| s.true_label == Label(class))
            .count();
        let test = corpus
            .test
            .iter()
            .filter(|s| s.true_label == Label(class))
            .count();
        println!("class {class}: train={train} test={test} attacked=0");
    }
    Ok(())
}

fn cmd_train(args: &TrainArgs, cfg: &ConfigFile) -> Result<(), CliError> {
    let corpus_dir = default_path(&args.corpus, cfg.string("corpus.dir")?, "corpus");
    let out = default_path(&args.out, cfg.string("train.out")?, "model.bin");
    let corpus = load_corpus_checked(&corpus_dir)?;
    let seed = resolve(
        args.seed,
        cfg.u64("train.seed")?,
        seeding::derive_seed(corpus.master_seed, "train", &[]),
    );
    let defaults = TrainConfig::default();
    let config = TrainConfig {
        n_classes: corpus.n_classes,
        input_size: resolve(args.input_size, cfg.usize("train.input_size")?, defaults.input_size),
        epochs: resolve(args.epochs, cfg.usize("train.epochs")?, defaults.epochs),
        batch_size: resolve(args.batch_size, cfg.usize("train.batch_size")?, defaults.batch_size),
        learning_rate: resolve(
            args.learning_rate,
            cfg.f64("train.learning_rate")?,
            f64::from(defaults.learning_rate),
        ) as f32,
        momentum: resolve(
            args.momentum,
            cfg.f64("train.momentum")?,
            f64::from(defaults.momentum),
        ) as f32,
    };
    let dataset: Vec<_> = corpus
        .train
        .iter()
        .map(|s| (s.image.clone(), s.true_label))
        .collect();
    let model = classifier::train(&dataset, &config, seed)?;
    let accuracy = eval::compute_ca(&model, &corpus.test)?;
    if let Some(parent) = out.parent() {
        std::fs::create_dir_all(parent).map_err(|source| CliError::Io {
            path: parent.to_path_buf(),
            source,
        })?;
    }
    model.save(&out)?;
    println!("model written to {}", out.display());
    println!(
        "train_samples={} epochs={} seed={} clean_test_accuracy={:.4}",
        dataset.len(),
        config.epochs,
        seed,
        accuracy
    );
    Ok(())
}

fn cmd_attack(args: &AttackArgs, cfg: &ConfigFile) -> Result<(), CliError> {
    let corpus_dir = default_path(&args.corpus, cfg.string("corpus.dir")?, "corpus");
    let model_path = default_path(&args.model, cfg.string("train.out")?, "model.bin");
    let mut corpus = load_corpus_checked(&corpus_dir)?;
    let model = load_model_checked(&model_path)?;
    let seed = resolve(args.seed, cfg.u64("attack.seed")?, corpus.master_seed);
    let budget = budget_from(args.max_stickers, args.sizes.clone(), args.stride, cfg)?;

    let outcomes = build_attacked_corpus(&model, corpus.n_classes, corpus.canvas, &budget, seed)?;
    let successes = outcomes.iter().filter(|o| o.success).count();
    println!(
        "attacked {} (source, target) pairs, {} reached their target",
        outcomes.len(),
        successes
    );
    corpus.attack_successes = outcomes.iter().map(|o| o.success).collect();
    corpus.attacked = outcomes.into_iter().map(|o| o.sample).collect();
    corpus.attack_budget = Some(budget);
    synth::save_corpus(&corpus_dir, &corpus)?;
    println!("corpus updated at {}", corpus_dir.display());
    Ok(())
}

fn cmd_build_masks(args: &BuildMasksArgs, cfg: &ConfigFile) -> Result<(), CliError> {
    let model_path = default_path(&args.model, cfg.string("train.out")?, "model.bin");
    let out = default_path(&args.out, cfg.string("masks.out")?, "maskstore");
    let model = load_model_checked(&model_path)?;
    let seed = resolve(args.seed, cfg.u64("masks.seed")?, DEFAULT_SEED);
    let canvas = resolve(args.canvas, cfg.usize("canvas")?, DEFAULT_CANVAS);
    let classes = resolve(args.classes, cfg.usize("classes")?, DEFAULT_CLASSES);
    let budget = budget_from(args.max_stickers, args.sizes.clone(), args.stride, cfg)?;
    let labels: Vec<Label> = (0..classes).map(Label).collect();
    let store = masks::build_mask_set_store(&model, &labels, &labels, &budget, seed, canvas)?;
    masks::save_store(&out, &store)?;
    println!(
        "mask store with {} masks for {} targets written to {}",
        store.len(),
        store.targets().count(),
        out.display()
    );
    Ok(())
}

fn cmd_defend(args: &DefendArgs, cfg: &ConfigFile) -> Result<(), CliError> {
    let out = default_path(&args.out, cfg.string("defend.out")?, "defended.png");
    let image = load_png(&args.image)?;
    let mask = load_mask_png(&args.mask)?;
    let op = defense_op_from(
        args.defense,
        args.tau,
        args.epsilon,
        args.max_iterations,
        cfg,
    )?;
    let defended = op.apply(&image, &mask)?;
    save_png(&defended, &out)?;
    println!("defended image written to {}", out.display());
    Ok(())
}

fn defense_op_from(
    arg: DefenseArg,
    tau: Option<f64>,
    epsilon: Option<f64>,
    max_iterations: Option<usize>,
    cfg: &ConfigFile,
) -> Result<DefenseOp, CliError> {
    let tau = resolve(tau, cfg.f64("defense.tau")?, f64::from(DEFAULT_TAU)) as f32;
    let epsilon = resolve(
        epsilon,
        cfg.f64("defense.epsilon")?,
        f64::from(DEFAULT_EPSILON),
    ) as f32;
    let max_iterations = resolve(
        max_iterations,
        cfg.usize("defense.max_iterations")?,
        DEFAULT_MAX_ITERATIONS,
    );
    let op = match arg {
        DefenseArg::RemapW => DefenseOp::Remap(RemapMode::White),
        DefenseArg::RemapB => DefenseOp::Remap(RemapMode::Black),
        DefenseArg::RemapT => DefenseOp::Remap(RemapMode::Threshold { tau }),
        DefenseArg::Reconstruct => DefenseOp::Reconstruct {
            epsilon,
            max_iterations,
        },
        DefenseArg::Median | DefenseArg::Jpeg => {
            return Err(CliError::BadFlag {
                flag: "--defense".into(),
                reason: "median/jpeg are whole-image baselines, valid only for eval".into(),
            })
        }
    };
    op.validate()?;
    Ok(op)
}

fn cmd_eval(args: &EvalArgs, cfg: &ConfigFile) -> Result<(), CliError> {
    let corpus_dir = default_path(&args.corpus, cfg.string("corpus.dir")?, "corpus");
    let model_path = default_path(&args.model, cfg.string("train.out")?, "model.bin");
    let corpus = load_corpus_checked(&corpus_dir)?;
    let model = load_model_checked(&model_path)?;
    let pi = resolve(args.pi, cfg.f64("eval.pi")?, DEFAULT_PI_ATTACK);
    let seed = resolve(args.seed, cfg.u64("eval.seed")?, DEFAULT_SEED);

    // Whole-image baselines run outside the scenario machinery.
    if matches!(args.defense, DefenseArg::Median | DefenseArg::Jpeg) {
        let baseline = match args.defense {
            DefenseArg::Median => Baseline::MedianFilter {
                kernel: resolve(args.kernel, cfg.usize("eval.kernel")?, 7),
            },
            _ => Baseline::Jpeg {
                quality: resolve(args.quality, cfg.u64("eval.quality")?.map(|q| q as u8), 10),
            },
        };
        let report = eval::run_baseline(&model, &corpus, baseline, pi)?;
        let name = match baseline {
            Baseline::MedianFilter { kernel } => format!("baseline-median{kernel}"),
            Baseline::Jpeg { quality } => format!("baseline-jpeg{quality}"),
        };
        print_report(&name, &report);
        write_report_files(args, cfg, &name, None, &report)?;
        return Ok(());
    }

    let defense = defense_op_from(
        args.defense,
        args.tau,
        args.epsilon,
        args.max_iterations,
        cfg,
    )?;
    let fusion = match args.fusion.or(match cfg.string("eval.fusion")?.as_deref() {
        Some("mv") => Some(FusionArg::Mv),
        Some("sf") => Some(FusionArg::Sf),
        _ => None,
    }) {
        Some(FusionArg::Mv) => FusionMode::MajorityVote,
        Some(FusionArg::Sf) | None => FusionMode::SoftmaxFusion,
    };
    let application = match args.application {
        Some(ApplicationArg::Sequential) => Application::Sequential,
        Some(ApplicationArg::Parallel) => Application::Parallel(fusion),
        // Scenario-appropriate defaults: oracle and estimated sets compose
        // sequentially, blind random windows fuse in parallel.
        None => match args.scenario {
            ScenarioArg::Blind => Application::Parallel(fusion),
            _ => Application::Sequential,
        },
    };
    let (knowledge, mask_source) = match args.scenario {
        ScenarioArg::NonBlind => (Knowledge::NonBlind, MaskSource::Oracle),
        ScenarioArg::SemiBlind => {
            let selection = match args.selection {
                Some(SelectionArg::Random) => Selection::Random,
                Some(SelectionArg::Guaranteed) => Selection::Guaranteed,
                Some(SelectionArg::Ranked) | None => Selection::Ranked,
            };
            (
                Knowledge::SemiBlind,
                MaskSource::EstimatedSet {
                    selection,
                    k: resolve(args.k, cfg.usize("eval.k")?, DEFAULT_SELECTION_K),
                },
            )
        }
        ScenarioArg::Blind => {
            let count = match args.num_windows {
                Some(m) => WindowCount::Count(m),
                None => WindowCount::Ratio(resolve(
                    args.ratio,
                    cfg.f64("eval.ratio")?,
                    DEFAULT_RATIO,
                )),
            };
            let overlap = match args.overlap {
                Some(OverlapArg::Overlapping) => Overlap::Overlapping,
                _ => Overlap::NonOverlapping,
            };
            (
                Knowledge::Blind,
                MaskSource::RandomWindows(RandomMaskConfig {
                    window_size: resolve(
                        args.window_size,
                        cfg.usize("eval.window_size")?,
                        DEFAULT_WINDOW_SIZE,
                    ),
                    count,
                    overlap,
                    k: resolve(args.num_masks, cfg.usize("eval.num_masks")?, DEFAULT_NUM_MASKS),
                    seed,
                }),
            )
        }
    };
    let config = ScenarioConfig {
        knowledge,
        defense,
        application,
        mask_source,
        pi_attack: pi,
        seed,
        allow_ground_truth: args.allow_ground_truth
            || cfg.boolean("eval.allow_ground_truth")?.unwrap_or(false),
    };
    let store = match args.scenario {
        ScenarioArg::SemiBlind => {
            let dir = default_path(&args.store, cfg.string("masks.out")?, "maskstore");
            Some(load_store_checked(&dir)?)
        }
        _ => None,
    };
    let report = eval::run_scenario(&model, &corpus, store.as_ref(), &config)?;
    let name = scenario_name(args, &config);
    print_report(&name, &report);
    write_report_files(args, cfg, &name, Some(&config), &report)?;
    Ok(())
}

fn scenario_name(args: &EvalArgs, config: &ScenarioConfig) -> String {
    let scenario = match args.scenario {
        ScenarioArg::NonBlind => "non-blind",
        ScenarioArg::SemiBlind => "semi-blind",
        ScenarioArg::Blind => "blind",
    };
    let defense = match config.defense {
        DefenseOp::Remap(RemapMode::White) => "remap-w".to_string(),
        DefenseOp::Remap(RemapMode::Black) => "remap-b".to_string(),
        DefenseOp::Remap(RemapMode::Threshold { .. }) => "remap-t".to_string(),
        DefenseOp::Reconstruct { .. } => "reconstruct".to_string(),
    };
    let application = match config.application {
        Application::Sequential => "seq".to_string(),
        Application::Parallel(FusionMode::MajorityVote) => "par-mv".to_string(),
        Application::Parallel(FusionMode::SoftmaxFusion) => "par-sf".to_string(),
        Application::Parallel(FusionMode::Single) => "par-single".to_string(),
    };
    format!("{scenario}-{defense}-{application}")
}

fn print_report(name: &str, report: &MetricsReport) {
    println!("report: {name}");
    println!("  fingerprint: {}", report.config_fingerprint);
    let c = &report.counts;
    println!(
        "  CA     {:.4}  ({}/{})",
        report.ca, c.unattacked_correct_pre, c.unattacked_total
    );
    println!(
        "  T-ASR  {:.4}  ({}/{})",
        report.t_asr, c.attacked_target_hit_pre, c.attacked_total
    );
    println!(
        "  U-ASR  {:.4}  ({}/{})",
        report.u_asr, c.attacked_misclassified_pre, c.attacked_total
    );
    match report.dr {
        Some(dr) => println!(
            "  DR     {:.4}  ({}/{})",
            dr, c.attacked_recovered_post, c.attacked_misclassified_pre
        ),
        None => println!("  DR     undefined (no attacked sample was misclassified pre-defense)"),
    }
    println!(
        "  CD     {:.4}  (post {}/{})",
        report.cd, c.unattacked_correct_post, c.unattacked_total
    );
    println!("  PDA    {:.4}  (pi_attack {})", report.pda, report.pi_attack);
}

fn write_report_files(
    args: &EvalArgs,
    cfg: &ConfigFile,
    name: &str,
    config: Option<&ScenarioConfig>,
    report: &MetricsReport,
) -> Result<(), CliError> {
    let json_path = default_path(
        &args.out_json,
        cfg.string("eval.out_json")?,
        &format!("reports/{name}.json"),
    );
    let csv_path = default_path(
        &args.out_csv,
        cfg.string("eval.out_csv")?,
        &format!("reports/{name}.csv"),
    );
    for path in [&json_path, &csv_path] {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|source| CliError::Io {
                path: parent.to_path_buf(),
                source,
            })?;
        }
    }
    let json = match config {
        Some(config) => EvalRecord {
            config: config.clone(),
            metrics: report.clone(),
        }
        .to_json(),
        None => serde_json::to_string_pretty(report).expect("report serializes"),
    };
    std::fs::write(&json_path, json).map_err(|source| CliError::Io {
        path: json_path.clone(),
        source,
    })?;
    let csv = eval::report::reports_to_csv(&[(name.to_string(), report)]);
    std::fs::write(&csv_path, csv).map_err(|source| CliError::Io {
        path: csv_path.clone(),
        source,
    })?;
    println!("  json: {}", json_path.display());
    println!("  csv:  {}", csv_path.display());
    Ok(())
}

fn cmd_grid(args: &GridArgs, cfg: &ConfigFile) -> Result<(), CliError> {
    let corpus_dir = default_path(&args.corpus, cfg.string("corpus.dir")?, "corpus");
    let model_path = default_path(&args.model, cfg.string("train.out")?, "model.bin");
    let corpus = load_corpus_checked(&corpus_dir)?;
    let model = load_model_checked(&model_path)?;
    let window_sizes = args
        .w
        .clone()
        .or(cfg.usize_list("grid.w")?)
        .unwrap_or_else(|| vec![2, 4, 8, 16]);
    let ratios = args
        .ratio
        .clone()
        .unwrap_or_else(|| vec![0.25, 0.5, 0.625, 0.75]);
    let k = resolve(args.num_masks, cfg.usize("grid.num_masks")?, DEFAULT_NUM_MASKS);
    let fusion = match args.fusion {
        Some(FusionArg::Mv) => FusionMode::MajorityVote,
        Some(FusionArg::Sf) | None => FusionMode::SoftmaxFusion,
    };
    let defense = defense_op_from(
        args.defense.unwrap_or(DefenseArg::Reconstruct),
        args.tau,
        args.epsilon,
        args.max_iterations,
        cfg,
    )?;
    let pi = resolve(args.pi, cfg.f64("eval.pi")?, DEFAULT_PI_ATTACK);
    let seed = resolve(args.seed, cfg.u64("eval.seed")?, DEFAULT_SEED);

    let result = eval::grid_search(
        &model,
        &corpus,
        &window_sizes,
        &ratios,
        k,
        fusion,
        defense,
        pi,
        seed,
    )?;
    let best = &result.cells[result.best];
    println!(
        "grid: {} cells; best w={} ratio={} (PDA {:.4}{})",
        result.cells.len(),
        best.window_size,
        best.ratio,
        best.report.pda,
        if best.floored { ", floored" } else { "" }
    );
    for cell in &result.cells {
        println!(
            "  w={:<3} ratio={:<5} m={:<4} floored={} DR={} CD={:.4} PDA={:.4}",
            cell.window_size,
            cell.ratio,
            cell.m,
            cell.floored,
            cell.report
                .dr
                .map_or_else(|| "undef ".to_string(), |d| format!("{d:.4}")),
            cell.report.cd,
            cell.report.pda
        );
    }

    let json_path = default_path(&args.out_json, cfg.string("grid.out_json")?, "reports/grid.json");
    let csv_path = default_path(&args.out_csv, cfg.string("grid.out_csv")?, "reports/grid.csv");
    for path in [&json_path, &csv_path] {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|source| CliError::Io {
                path: parent.to_path_buf(),
                source,
            })?;
        }
    }
    std::fs::write(
        &json_path,
        serde_json::to_string_pretty(&result).expect("grid serializes"),
    )
    .map_err(|source| CliError::Io {
        path: json_path.clone(),
        source,
    })?;
    std::fs::write(
        &csv_path,
        eval::report::grid_to_csv(&result, &window_sizes, &ratios),
    )
    .map_err(|source| CliError::Io {
        path: csv_path.clone(),
        source,
    })?;
    println!("grid json: {}", json_path.display());
    println!("grid csv:  {}", csv_path.display());
    Ok(())
}
