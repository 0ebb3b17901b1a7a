//! Command-line front end for `isp-core`.
//!
//! Every subcommand reads and writes the binary formats of the core crate;
//! [`run`] returns the process exit code.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use isp_core::cluster::{generate_pseudo_labels_with, CascadeParams, DEFAULT_RESTARTS};
use isp_core::eval::cmc_map;
use isp_core::matching::{load_ispd, ItemMeta};
use isp_core::parsing::{load_classifier, load_descriptors, save_classifier, save_descriptors, TrainOptions};
use isp_core::pipeline::query_gallery_split;
use isp_core::{
    distance_matrix, generate, load_feature_set, load_label_set, parsing_iou, pool_descriptor, run_pipeline,
    save_feature_set, save_label_set, train_classifier, ErrorCategory, IspError, MetricReport, PartClassifier,
    RunConfig, SyntheticSpec,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_DIVERGENCE: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "isp", version, about = "Self-supervised part parsing and aligned matching on feature maps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic feature set and its ground-truth labels.
    Gen(GenArgs),
    /// Cascaded clustering of a feature set into pseudo-labels.
    Cluster(ClusterArgs),
    /// Train the part classifier on a feature set and labels.
    Train(TrainArgs),
    /// Pool part, foreground and global descriptors with a trained classifier.
    Pool(PoolArgs),
    /// Aligned distances between query and gallery descriptors.
    Match(MatchArgs),
    /// Retrieval metrics and/or parsing IoU as key=value lines.
    Eval(EvalArgs),
    /// Full cluster/train loop followed by pooling and retrieval evaluation.
    Pipeline(PipelineArgs),
}

#[derive(Debug, Args)]
struct GenArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    n_id: Option<usize>,
    #[arg(long)]
    imgs_per_id: Option<usize>,
    #[arg(long)]
    c: Option<usize>,
    #[arg(long)]
    h: Option<usize>,
    #[arg(long)]
    w: Option<usize>,
    #[arg(long)]
    parts: Option<usize>,
    #[arg(long)]
    occlusion_prob: Option<f64>,
    #[arg(long)]
    noise_sigma: Option<f64>,
    #[arg(long)]
    fg_gain: Option<f64>,
    #[arg(long)]
    bg_level: Option<f64>,
    #[arg(long)]
    identity_spread: Option<f64>,
    #[arg(long)]
    cameras: Option<usize>,
    /// Feature set output (ISPF).
    #[arg(long)]
    out: PathBuf,
    /// Ground-truth label output (ISPL).
    #[arg(long)]
    truth: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ClusterArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, default_value_t = 6)]
    k: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_RESTARTS)]
    restarts: usize,
    #[arg(long)]
    out: PathBuf,
}

/// Run configuration: a `key=value` file plus per-key overrides.
#[derive(Debug, Args)]
struct ConfigArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    k: Option<String>,
    #[arg(long)]
    alpha: Option<String>,
    #[arg(long)]
    reassign_interval: Option<String>,
    #[arg(long)]
    total_epochs: Option<String>,
    #[arg(long)]
    warmup_epochs: Option<String>,
    #[arg(long)]
    base_lr: Option<String>,
    #[arg(long)]
    warmup_start_lr: Option<String>,
    #[arg(long)]
    lr_decay_factor: Option<String>,
    /// Comma-separated epochs; pass an empty string for no decay.
    #[arg(long)]
    lr_decay_epochs: Option<String>,
    #[arg(long)]
    batch_size: Option<String>,
    #[arg(long)]
    margin: Option<String>,
    #[arg(long)]
    epsilon: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    cluster_restarts: Option<String>,
    #[arg(long)]
    warm_start: Option<String>,
    #[arg(long)]
    early_stop: Option<String>,
    #[arg(long)]
    loss_reduction: Option<String>,
}

impl ConfigArgs {
    fn resolve(&self) -> isp_core::Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        let overrides = [
            ("k", &self.k),
            ("alpha", &self.alpha),
            ("reassign_interval", &self.reassign_interval),
            ("total_epochs", &self.total_epochs),
            ("warmup_epochs", &self.warmup_epochs),
            ("base_lr", &self.base_lr),
            ("warmup_start_lr", &self.warmup_start_lr),
            ("lr_decay_factor", &self.lr_decay_factor),
            ("lr_decay_epochs", &self.lr_decay_epochs),
            ("batch_size", &self.batch_size),
            ("margin", &self.margin),
            ("epsilon", &self.epsilon),
            ("seed", &self.seed),
            ("cluster_restarts", &self.cluster_restarts),
            ("warm_start", &self.warm_start),
            ("early_stop", &self.early_stop),
            ("loss_reduction", &self.loss_reduction),
        ];
        for (key, value) in overrides {
            if let Some(v) = value {
                cfg.set(key, v)?;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long = "in")]
    input: PathBuf,
    /// Pseudo-labels (ISPL); K is taken from this file.
    #[arg(long)]
    labels: PathBuf,
    /// Classifier output (ISPW).
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Debug, Args)]
struct PoolArgs {
    #[arg(long = "in")]
    input: PathBuf,
    /// Trained classifier (ISPW).
    #[arg(long)]
    weights: PathBuf,
    /// Descriptor output (ISPE).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct MatchArgs {
    #[arg(long)]
    query: PathBuf,
    #[arg(long)]
    gallery: PathBuf,
    /// Binary distance matrix output (ISPD).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Tab-separated distance matrix output.
    #[arg(long)]
    tsv: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Distance matrix (ISPD); needs --query and --gallery for identities.
    #[arg(long)]
    dist: Option<PathBuf>,
    /// Query descriptors (ISPE).
    #[arg(long)]
    query: Option<PathBuf>,
    /// Gallery descriptors (ISPE).
    #[arg(long)]
    gallery: Option<PathBuf>,
    /// Predicted labels (ISPL).
    #[arg(long)]
    pred: Option<PathBuf>,
    /// Ground-truth labels (ISPL).
    #[arg(long)]
    truth: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct PipelineArgs {
    #[arg(long = "in")]
    input: PathBuf,
    /// Ground-truth labels (ISPL) for IoU tracking.
    #[arg(long)]
    truth: Option<PathBuf>,
    #[arg(long)]
    out_dir: PathBuf,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Core(IspError),
}

impl From<IspError> for CliError {
    fn from(e: IspError) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(IspError::Io(e))
    }
}

type CliResult<T = ()> = Result<T, CliError>;

fn with_path<T>(path: &Path, r: isp_core::Result<T>) -> CliResult<T> {
    r.map_err(|e| match e {
        IspError::Io(io) => IspError::Io(std::io::Error::new(io.kind(), format!("{}: {io}", path.display()))),
        other => other,
    })
    .map_err(CliError::from)
}

fn cmd_gen(a: &GenArgs) -> CliResult {
    let d = SyntheticSpec::default();
    let spec = SyntheticSpec {
        n_id: a.n_id.unwrap_or(d.n_id),
        imgs_per_id: a.imgs_per_id.unwrap_or(d.imgs_per_id),
        c: a.c.unwrap_or(d.c),
        h: a.h.unwrap_or(d.h),
        w: a.w.unwrap_or(d.w),
        parts: a.parts.unwrap_or(d.parts),
        occlusion_prob: a.occlusion_prob.unwrap_or(d.occlusion_prob),
        noise_sigma: a.noise_sigma.unwrap_or(d.noise_sigma),
        fg_gain: a.fg_gain.unwrap_or(d.fg_gain),
        bg_level: a.bg_level.unwrap_or(d.bg_level),
        identity_spread: a.identity_spread.unwrap_or(d.identity_spread),
        cameras: a.cameras.unwrap_or(d.cameras),
        seed: a.seed,
    };
    let data = generate(&spec)?;
    with_path(&a.out, save_feature_set(&data.features, &a.out))?;
    if let Some(t) = &a.truth {
        with_path(t, save_label_set(&data.truth, t))?;
    }
    Ok(())
}

fn cmd_cluster(a: &ClusterArgs) -> CliResult {
    let set = with_path(&a.input, load_feature_set(&a.input))?;
    let params = CascadeParams { restarts: a.restarts, ..CascadeParams::new(a.k, a.seed) };
    let labels = generate_pseudo_labels_with(&set, &params, None)?;
    for w in &labels.warnings {
        eprintln!("warning: {w}");
    }
    with_path(&a.out, save_label_set(&labels.labels, &a.out))
}

fn cmd_train(a: &TrainArgs) -> CliResult {
    let cfg = a.config.resolve()?;
    let set = with_path(&a.input, load_feature_set(&a.input))?;
    let labels = with_path(&a.labels, load_label_set(&a.labels))?;
    let clf = PartClassifier::zeros(labels.k, set.shape().c)?;
    let opts = TrainOptions { batch_size: cfg.batch_size, reduction: cfg.loss_reduction };
    let out = train_classifier(clf, &set, &labels.maps, &cfg.schedule()?, cfg.total_epochs, cfg.seed, opts)?;
    if let Some(loss) = out.loss_history.last() {
        println!("epochs={} final_loss={loss}", out.loss_history.len());
    }
    with_path(&a.out, save_classifier(&out.classifier, &a.out))
}

fn cmd_pool(a: &PoolArgs) -> CliResult {
    let set = with_path(&a.input, load_feature_set(&a.input))?;
    let clf = with_path(&a.weights, load_classifier(&a.weights))?;
    let descs = set.maps().iter().map(|m| pool_descriptor(&clf, m)).collect::<isp_core::Result<Vec<_>>>()?;
    with_path(&a.out, save_descriptors(&descs, &a.out))
}

fn cmd_match(a: &MatchArgs) -> CliResult {
    if a.out.is_none() && a.tsv.is_none() {
        return Err(CliError::Usage("match needs --out and/or --tsv".into()));
    }
    let q = with_path(&a.query, load_descriptors(&a.query))?;
    let g = with_path(&a.gallery, load_descriptors(&a.gallery))?;
    let dm = distance_matrix(&q, &g)?;
    if let Some(p) = &a.out {
        with_path(p, dm.save_ispd(p))?;
    }
    if let Some(p) = &a.tsv {
        fs::write(p, dm.to_tsv())?;
    }
    Ok(())
}

fn cmd_eval(a: &EvalArgs) -> CliResult {
    let mut report = MetricReport::default();
    match (&a.query, &a.gallery) {
        (Some(qp), Some(gp)) => {
            let q = with_path(qp, load_descriptors(qp))?;
            let g = with_path(gp, load_descriptors(gp))?;
            let dm = match &a.dist {
                Some(d) => {
                    let meta = |v: &[isp_core::Descriptor]| v.iter().map(ItemMeta::from).collect();
                    with_path(d, load_ispd(d, meta(&q), meta(&g)))?
                }
                None => distance_matrix(&q, &g)?,
            };
            report.retrieval = Some(cmc_map(&dm)?);
        }
        (None, None) if a.dist.is_some() => {
            return Err(CliError::Usage("--dist needs --query and --gallery descriptor files for identities".into()))
        }
        (None, None) => {}
        _ => return Err(CliError::Usage("--query and --gallery must be given together".into())),
    }
    match (&a.pred, &a.truth) {
        (Some(pp), Some(tp)) => {
            let pred = with_path(pp, load_label_set(pp))?;
            let truth = with_path(tp, load_label_set(tp))?;
            report.parsing = Some(parsing_iou(&pred.maps, &truth.maps, pred.k.max(truth.k))?);
        }
        (None, None) => {}
        _ => return Err(CliError::Usage("--pred and --truth must be given together".into())),
    }
    if report.retrieval.is_none() && report.parsing.is_none() {
        return Err(CliError::Usage("eval needs --query/--gallery and/or --pred/--truth".into()));
    }
    print!("{}", report.to_key_values());
    Ok(())
}

fn cmd_pipeline(a: &PipelineArgs) -> CliResult {
    let cfg = a.config.resolve()?;
    let set = with_path(&a.input, load_feature_set(&a.input))?;
    let truth = a.truth.as_ref().map(|t| with_path(t, load_label_set(t))).transpose()?;
    let out = run_pipeline(&set, &cfg, truth.as_ref())?;
    for w in &out.warnings {
        eprintln!("warning: {w}");
    }
    fs::create_dir_all(&a.out_dir)?;
    let dir = &a.out_dir;
    fs::write(dir.join("config.txt"), cfg.to_text())?;
    save_label_set(&out.labels, dir.join("labels.ispl"))?;
    save_classifier(&out.classifier, dir.join("classifier.ispw"))?;
    save_descriptors(&out.descriptors, dir.join("descriptors.ispe"))?;
    let (queries, gallery) = query_gallery_split(&out.descriptors);
    if !queries.is_empty() && !gallery.is_empty() {
        save_descriptors(&queries, dir.join("query.ispe"))?;
        save_descriptors(&gallery, dir.join("gallery.ispe"))?;
    }
    if let Some(dm) = &out.distances {
        dm.save_ispd(dir.join("distances.ispd"))?;
    }
    fs::write(dir.join("history.txt"), out.history_text())?;
    let mut report = out.report.to_key_values();
    report.push_str(&format!("clustering_rounds={}\n", out.clustering_rounds()));
    if let Some(fg) = out.prediction_iou.as_ref().and_then(|p| p.foreground) {
        report.push_str(&format!("pred.iou.fg={fg}\n"));
    }
    fs::write(dir.join("report.txt"), &report)?;
    print!("{report}");
    Ok(())
}

fn dispatch(cli: &Cli) -> CliResult {
    match &cli.command {
        Command::Gen(a) => cmd_gen(a),
        Command::Cluster(a) => cmd_cluster(a),
        Command::Train(a) => cmd_train(a),
        Command::Pool(a) => cmd_pool(a),
        Command::Match(a) => cmd_match(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Pipeline(a) => cmd_pipeline(a),
    }
}

/// Parses `argv` (including the program name), runs the subcommand and
/// returns the exit code: 0 success, 1 usage, 2 validation, 3 I/O, 4 divergence.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match dispatch(&cli) {
        Ok(()) => EXIT_OK,
        Err(CliError::Usage(msg)) => {
            eprintln!("usage error: {msg}");
            EXIT_USAGE
        }
        Err(CliError::Core(e)) => {
            eprintln!("error: {e}");
            match e.category() {
                ErrorCategory::Validation => EXIT_VALIDATION,
                ErrorCategory::Io => EXIT_IO,
                ErrorCategory::Numerical => EXIT_DIVERGENCE,
            }
        }
    }
}
