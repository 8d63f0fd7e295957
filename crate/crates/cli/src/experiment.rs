//! Experiment settings from an optional TOML file merged with flags.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use ecc_core::coarsen::{CoarsenOptions, DegreeLabels, DEFAULT_Q};
use ecc_core::ecc::Variant;
use ecc_core::netcfg::{parse_widths, NetSpec};
use ecc_core::network::{FilterSpec, NetOptions};
use ecc_core::pointcloud::LabelScheme;
use ecc_core::train::TrainConfig;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Tu,
    Mnist,
    Pointcloud,
}

/// Flags shared by the experiment subcommands. Every flag overrides the
/// matching key of `--experiment`.
#[derive(Args, Clone, Debug, Default)]
pub struct Flags {
    /// TOML experiment file.
    #[arg(long)]
    pub experiment: Option<PathBuf>,
    /// Dataset directory, or a name looked up under ./data.
    #[arg(long)]
    pub dataset: Option<String>,
    #[arg(long, value_enum)]
    pub kind: Option<Kind>,
    /// Network configuration string, e.g. "C(16)-MP-GAP-FC(2)".
    #[arg(long)]
    pub config: Option<String>,
    /// Hidden widths of the filter networks ("FC(16)-FC(32)" or "16-32"),
    /// or "linear" for a single bias-free layer.
    #[arg(long)]
    pub filter_net: Option<String>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub folds: Option<usize>,
    #[arg(long)]
    pub variant: Option<String>,
    /// none, inv_sqrt, inv, sqrt or raw.
    #[arg(long)]
    pub degree_labels: Option<String>,
    #[arg(long)]
    pub label_scheme: Option<String>,
    /// Sparsification multiplier; 0 disables sparsification.
    #[arg(long)]
    pub sparsify_q: Option<f64>,
    /// Randomized pyramids per graph.
    #[arg(long)]
    pub expand: Option<usize>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Drop black pixels (MNIST).
    #[arg(long)]
    pub sparse: bool,
    /// Replace every edge label by a constant.
    #[arg(long)]
    pub uniform_labels: bool,
}

/// Keys accepted in an experiment file; all optional.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentFile {
    pub dataset: Option<String>,
    pub kind: Option<Kind>,
    pub config: Option<String>,
    pub filter_net: Option<String>,
    pub variant: Option<String>,
    pub degree_labels: Option<String>,
    pub label_scheme: Option<String>,
    pub sparsify_q: Option<f64>,
    pub expand: Option<usize>,
    pub sparse: Option<bool>,
    pub uniform_labels: Option<bool>,
    pub folds: Option<usize>,
    pub out: Option<PathBuf>,
    /// Resolution and radius of the input graph for point clouds.
    pub input_grid: Option<(f64, f64)>,
    /// Number of coarsening levels for graph datasets (defaults to the
    /// number of poolings in the configuration).
    pub levels: Option<usize>,
    #[serde(default)]
    pub train: TrainSection,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub epochs: Option<usize>,
    pub batch: Option<usize>,
    pub lr: Option<f64>,
    pub decay_epochs: Option<Vec<usize>>,
    pub decay_factor: Option<f64>,
    pub momentum: Option<f64>,
    pub weight_decay: Option<f64>,
    pub seed: Option<u64>,
    pub test_time_runs: Option<usize>,
    pub conv_dropout: Option<f64>,
    pub eval_every: Option<usize>,
}

impl ExperimentFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }
}

/// Fully resolved settings of one run.
#[derive(Clone, Debug, Serialize)]
pub struct Experiment {
    pub dataset: PathBuf,
    pub kind: Kind,
    pub config: String,
    pub filter_hidden: Vec<usize>,
    pub filter_bias: bool,
    pub variant: String,
    pub degree_labels: String,
    pub label_scheme: String,
    pub sparsify_q: Option<f64>,
    pub expand: usize,
    pub sparse: bool,
    pub uniform_labels: bool,
    pub folds: usize,
    pub out: PathBuf,
    pub input_grid: (f64, f64),
    pub levels: usize,
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    pub decay_epochs: Vec<usize>,
    pub decay_factor: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub seed: u64,
    pub test_time_runs: usize,
    pub conv_dropout: f64,
    pub eval_every: usize,
}

impl Experiment {
    pub fn resolve(flags: &Flags) -> Result<Self> {
        let file = match &flags.experiment {
            Some(p) => ExperimentFile::load(p)?,
            None => ExperimentFile::default(),
        };
        let name = flags
            .dataset
            .clone()
            .or(file.dataset.clone())
            .context("no dataset given (--dataset)")?;
        let dataset = resolve_dataset(&name)?;
        let kind = match flags.kind.or(file.kind) {
            Some(k) => k,
            None => detect_kind(&dataset)?,
        };
        let config = flags
            .config
            .clone()
            .or(file.config.clone())
            .context("no network configuration given (--config)")?;
        let spec = NetSpec::parse(&config)?;
        let filter = flags.filter_net.clone().or(file.filter_net.clone());
        let (filter_hidden, filter_bias) = match filter.as_deref().map(str::trim) {
            Some("linear") => (Vec::new(), false),
            Some(s) => (parse_widths(s)?, true),
            None if kind == Kind::Tu => (FilterSpec::categorical().hidden, true),
            None => (FilterSpec::continuous().hidden, true),
        };
        let t = &file.train;
        let epochs = flags.epochs.or(t.epochs).unwrap_or(20);
        let variant = flags.variant.clone().or(file.variant.clone()).unwrap_or_else(|| "plain".into());
        let degree_labels = flags
            .degree_labels
            .clone()
            .or(file.degree_labels.clone())
            .unwrap_or_else(|| "none".into());
        let label_scheme = flags
            .label_scheme
            .clone()
            .or(file.label_scheme.clone())
            .unwrap_or_else(|| "full6d".into());
        let q = flags.sparsify_q.or(file.sparsify_q).unwrap_or(DEFAULT_Q);
        let exp = Experiment {
            dataset,
            kind,
            filter_hidden,
            filter_bias,
            variant,
            degree_labels,
            label_scheme,
            sparsify_q: (q > 0.0).then_some(q),
            expand: flags.expand.or(file.expand).unwrap_or(if kind == Kind::Tu { 5 } else { 1 }),
            sparse: flags.sparse || file.sparse.unwrap_or(false),
            uniform_labels: flags.uniform_labels || file.uniform_labels.unwrap_or(false),
            folds: flags.folds.or(file.folds).unwrap_or(10),
            out: flags.out.clone().or(file.out.clone()).unwrap_or_else(|| PathBuf::from("out")),
            input_grid: file.input_grid.unwrap_or((1.0, 2.9)),
            levels: file.levels.unwrap_or(spec.num_pools()),
            epochs,
            batch: flags.batch.or(t.batch).unwrap_or(32),
            lr: flags.lr.or(t.lr).unwrap_or(0.1),
            decay_epochs: t.decay_epochs.clone().unwrap_or_default(),
            decay_factor: t.decay_factor.unwrap_or(0.1),
            momentum: t.momentum.unwrap_or(0.0),
            weight_decay: t.weight_decay.unwrap_or(0.0),
            seed: flags.seed.or(t.seed).unwrap_or(0),
            test_time_runs: t.test_time_runs.unwrap_or(1),
            conv_dropout: t.conv_dropout.unwrap_or(0.0),
            eval_every: t.eval_every.unwrap_or(0),
            config,
        };
        exp.train_config().validate()?;
        exp.net_options()?;
        exp.scheme()?;
        exp.degree()?;
        Ok(exp)
    }

    pub fn spec(&self) -> Result<NetSpec> {
        Ok(NetSpec::parse(&self.config)?)
    }

    pub fn scheme(&self) -> Result<LabelScheme> {
        Ok(self.label_scheme.parse()?)
    }

    pub fn degree(&self) -> Result<DegreeLabels> {
        Ok(self.degree_labels.parse()?)
    }

    pub fn net_options(&self) -> Result<NetOptions> {
        let variant: Variant = self.variant.parse()?;
        Ok(NetOptions {
            variant,
            filter: FilterSpec {
                hidden: self.filter_hidden.clone(),
                bias: self.filter_bias,
            },
            conv_dropout: self.conv_dropout,
        })
    }

    pub fn coarsen_options(&self) -> Result<CoarsenOptions> {
        Ok(CoarsenOptions {
            levels: self.levels,
            q: self.sparsify_q,
            degree_labels: self.degree()?,
        })
    }

    /// `(resolution, radius)` of every point-cloud pyramid level.
    pub fn grid_levels(&self) -> Result<Vec<(f64, f64)>> {
        let mut levels = vec![self.input_grid];
        levels.extend(self.spec()?.grid_levels());
        Ok(levels)
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch,
            base_lr: self.lr,
            lr_decay_epochs: self.decay_epochs.clone(),
            lr_decay_factor: self.decay_factor,
            momentum: self.momentum,
            weight_decay: self.weight_decay,
            seed: self.seed,
            test_time_runs: self.test_time_runs,
            eval_every: self.eval_every,
            ..TrainConfig::default()
        }
    }
}

/// An existing path is used as is; otherwise `name` is matched
/// case-insensitively against the entries of `./data`.
pub fn resolve_dataset(name: &str) -> Result<PathBuf> {
    let direct = PathBuf::from(name);
    if direct.exists() {
        return Ok(direct);
    }
    let root = Path::new("data");
    if let Ok(entries) = fs::read_dir(root) {
        for e in entries.flatten() {
            if e.file_name().to_string_lossy().eq_ignore_ascii_case(name) {
                return Ok(e.path());
            }
        }
    }
    bail!("dataset {name:?} is neither a path nor an entry of ./data")
}

fn detect_kind(dir: &Path) -> Result<Kind> {
    let names: Vec<String> = fs::read_dir(dir)
        .with_context(|| format!("listing {}", dir.display()))?
        .flatten()
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .collect();
    if names.iter().any(|n| n.ends_with("_A.txt")) {
        Ok(Kind::Tu)
    } else if names.iter().any(|n| n.ends_with("idx3-ubyte")) {
        Ok(Kind::Mnist)
    } else {
        Ok(Kind::Pointcloud)
    }
}
