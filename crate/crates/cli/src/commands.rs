use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use ecc_core::datasets::{load_cloud_directory, load_mnist, load_tu};
use ecc_core::ecc::grid::equivalence_suite;
use ecc_core::ecc::{EccParams, LabelRows, Variant};
use ecc_core::gradcheck::check_gradients;
use ecc_core::graph::LabeledGraph;
use ecc_core::netcfg::NetSpec;
use ecc_core::network::{NetOptions, Network};
use ecc_core::pointcloud::{LabelScheme, PointCloud};
use ecc_core::prepare::{cloud_samples, tu_samples};
use ecc_core::tensor::Tensor;
use ecc_core::train::{
    cross_validate, evaluate, robustness_csv, robustness_eval, test_time_accuracy, train, Averaging, Expanded,
    FoldPlan, Perturbation, Sample,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::experiment::{Experiment, Kind};

/// Train and test splits of the configured dataset.
pub struct Splits {
    pub train: Vec<Sample>,
    pub test: Vec<Sample>,
    pub input_width: usize,
}

pub fn load_splits(exp: &Experiment) -> Result<Splits> {
    match exp.kind {
        Kind::Tu => {
            let samples = load_tu_samples(exp)?;
            let labels: Vec<usize> = samples.iter().map(|s| s.label).collect();
            let plan = FoldPlan::stratified(&labels, exp.folds, &mut ChaCha8Rng::seed_from_u64(exp.seed))?;
            let input_width = samples[0].primary().level(0).signal_width();
            Ok(Splits {
                train: plan.train_indices(0).iter().map(|&i| samples[i].clone()).collect(),
                test: plan.folds[0].iter().map(|&i| samples[i].clone()).collect(),
                input_width,
            })
        }
        Kind::Mnist | Kind::Pointcloud => {
            let (train_clouds, test_clouds) = load_clouds(exp)?;
            let levels = exp.grid_levels()?;
            let scheme = exp.scheme()?;
            let mut train = cloud_samples(&train_clouds, &levels, scheme)?;
            let mut test = cloud_samples(&test_clouds, &levels, scheme)?;
            if exp.uniform_labels {
                for s in train.iter_mut().chain(&mut test) {
                    s.variants[0] = s.variants[0].with_uniform_labels()?;
                }
            }
            Ok(Splits {
                input_width: train_clouds[0].0.signal_width(),
                train,
                test,
            })
        }
    }
}

fn load_tu_samples(exp: &Experiment) -> Result<Vec<Sample>> {
    let ds = load_tu(&exp.dataset)?;
    log::info!(
        "{}: {} graphs, {} classes, mean |V| {:.2}, mean |E| {:.2}",
        ds.name,
        ds.len(),
        ds.num_classes(),
        ds.mean_vertices(),
        ds.mean_edges()
    );
    Ok(tu_samples(&ds, &exp.coarsen_options()?, exp.expand, exp.uniform_labels, exp.seed)?)
}

type Clouds = Vec<(PointCloud, usize)>;

/// MNIST reads the standard IDX file names; point-cloud directories use
/// `train/` and `test/` subfolders when present, else everything is training data.
fn load_clouds(exp: &Experiment) -> Result<(Clouds, Clouds)> {
    let d = &exp.dataset;
    if exp.kind == Kind::Mnist {
        let train = load_mnist(&d.join("train-images-idx3-ubyte"), &d.join("train-labels-idx1-ubyte"), exp.sparse)?;
        let test = load_mnist(&d.join("t10k-images-idx3-ubyte"), &d.join("t10k-labels-idx1-ubyte"), exp.sparse)?;
        return Ok((train, test));
    }
    if d.join("train").is_dir() {
        let (train, _) = load_cloud_directory(&d.join("train"))?;
        let test = if d.join("test").is_dir() {
            load_cloud_directory(&d.join("test"))?.0
        } else {
            Vec::new()
        };
        Ok((train, test))
    } else {
        Ok((load_cloud_directory(d)?.0, Vec::new()))
    }
}

pub fn build_network(exp: &Experiment, input_width: usize, sample: &Sample) -> Result<Network> {
    let mut rng = ChaCha8Rng::seed_from_u64(exp.seed);
    Ok(Network::build(
        &exp.spec()?,
        &exp.net_options()?,
        input_width,
        &sample.primary().label_widths(),
        &mut rng,
    )?)
}

/// Records the command, seed, configuration hash and versions.
pub fn write_manifest(exp: &Experiment, command: &str) -> Result<()> {
    fs::create_dir_all(&exp.out).with_context(|| format!("creating {}", exp.out.display()))?;
    let canonical = serde_json::to_string(exp)?;
    let hash = Sha256::digest(canonical.as_bytes());
    let hex: String = hash.iter().map(|b| format!("{b:02x}")).collect();
    let manifest = json!({
        "command": command,
        "seed": exp.seed,
        "config_hash": hex,
        "experiment": exp,
        "versions": {
            "ecc-cli": env!("CARGO_PKG_VERSION"),
            "ecc-core": ecc_core::VERSION,
        },
        "threads": ecc_core::prepare::worker_threads(),
    });
    fs::write(exp.out.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    Ok(())
}

pub fn run_train(exp: &Experiment) -> Result<()> {
    write_manifest(exp, "train")?;
    let splits = load_splits(exp)?;
    let mut net = build_network(exp, splits.input_width, &splits.train[0])?;
    println!("parameters: {}", net.num_parameters());
    let test = (!splits.test.is_empty()).then_some(splits.test.as_slice());
    let log = train(&mut net, &Expanded::new(&splits.train), test, &exp.train_config())?;
    fs::write(exp.out.join("metrics.csv"), log.to_csv())?;
    let mut out = BufWriter::new(File::create(exp.out.join("model.eccp"))?);
    net.save(&mut out)?;
    out.flush()?;
    if let Some(m) = log.last() {
        println!("final train loss {:.5}, train accuracy {:.4}", m.train_loss, m.train_acc);
        if let Some(a) = m.test_acc {
            println!("test accuracy {a:.4}");
        }
    }
    println!("wrote {}", exp.out.display());
    Ok(())
}

fn load_checkpoint(exp: &Experiment, path: &Path, input_width: usize, sample: &Sample) -> Result<Network> {
    let mut net = build_network(exp, input_width, sample)?;
    let mut input = BufReader::new(File::open(path).with_context(|| format!("opening {}", path.display()))?);
    net.load(&mut input)
        .with_context(|| format!("loading {} into {}", path.display(), exp.config))?;
    Ok(net)
}

pub fn run_eval(exp: &Experiment, checkpoint: &Path) -> Result<()> {
    write_manifest(exp, "eval")?;
    let splits = load_splits(exp)?;
    if splits.test.is_empty() {
        bail!("dataset has no test split");
    }
    let net = load_checkpoint(exp, checkpoint, splits.input_width, &splits.test[0])?;
    let eval = evaluate(&net, &splits.test, exp.batch)?;
    println!("test accuracy {:.4} on {} samples", eval.accuracy, splits.test.len());
    if exp.test_time_runs > 1 {
        for mode in [Averaging::Scores, Averaging::Votes] {
            let a = test_time_accuracy(&net, &splits.test, exp.test_time_runs, mode)?;
            println!("{mode:?}-averaged accuracy over {} runs {a:.4}", exp.test_time_runs);
        }
    }
    Ok(())
}

pub fn run_cv(exp: &Experiment) -> Result<()> {
    write_manifest(exp, "cv")?;
    let samples = match exp.kind {
        Kind::Tu => load_tu_samples(exp)?,
        _ => {
            let s = load_splits(exp)?;
            s.train.into_iter().chain(s.test).collect()
        }
    };
    let input_width = samples[0].primary().level(0).signal_width();
    let spec = exp.spec()?;
    let opts = exp.net_options()?;
    let widths = samples[0].primary().label_widths();
    let report = cross_validate(&samples, exp.folds, &exp.train_config(), |f| {
        let mut rng = ChaCha8Rng::seed_from_u64(exp.seed.wrapping_add(1000 + f as u64));
        Network::build(&spec, &opts, input_width, &widths, &mut rng)
    })?;
    let mut csv = String::from("fold,accuracy,averaged_accuracy\n");
    for (f, r) in report.folds.iter().enumerate() {
        println!("fold {f}: accuracy {:.4}, averaged {:.4}", r.accuracy, r.averaged_accuracy);
        csv.push_str(&format!("{f},{},{}\n", r.accuracy, r.averaged_accuracy));
    }
    fs::write(exp.out.join("cv.csv"), csv)?;
    println!(
        "mean accuracy {:.2} +- {:.2} ({} folds)",
        100.0 * report.mean(),
        100.0 * report.std(),
        exp.folds
    );
    if exp.test_time_runs > 1 {
        println!("score-averaged mean accuracy {:.2}", 100.0 * report.averaged_mean());
    }
    Ok(())
}

pub fn run_robustness(exp: &Experiment, checkpoint: &Path, deletes: &[f64], noises: &[f64]) -> Result<()> {
    if exp.kind == Kind::Tu {
        bail!("robustness evaluation needs a point-cloud dataset");
    }
    write_manifest(exp, "robustness")?;
    let (train_clouds, test_clouds) = load_clouds(exp)?;
    let clouds = if test_clouds.is_empty() { train_clouds } else { test_clouds };
    let levels = exp.grid_levels()?;
    let scheme = exp.scheme()?;
    let probe = cloud_samples(&clouds[..1], &levels, scheme)?;
    let net = load_checkpoint(exp, checkpoint, clouds[0].0.signal_width(), &probe[0])?;
    let mut grid: Vec<Perturbation> = deletes.iter().map(|&p| Perturbation::Delete(p)).collect();
    grid.extend(noises.iter().map(|&s| Perturbation::Noise(s)));
    let mut rng = ChaCha8Rng::seed_from_u64(exp.seed);
    let curve = robustness_eval(&net, &clouds, &levels, scheme, &grid, exp.batch, &mut rng)?;
    for (p, a) in &curve {
        println!("{} {}: accuracy {a:.4}", p.kind(), p.amount());
    }
    fs::write(exp.out.join("robustness.csv"), robustness_csv(&curve))?;
    Ok(())
}

pub enum OracleSuite {
    Grid,
    Gradients,
}

/// Returns whether the suite passed.
pub fn run_oracle(suite: OracleSuite, seed: u64) -> Result<bool> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match suite {
        OracleSuite::Grid => {
            let r = equivalence_suite(25, &mut rng)?;
            let ok = r.max_error <= 1e-10;
            println!(
                "grid equivalence: {} cases, max abs error {:.3e} ({})",
                r.cases,
                r.max_error,
                if ok { "ok" } else { "FAILED" }
            );
            Ok(ok)
        }
        OracleSuite::Gradients => {
            let mut worst = 0.0f64;
            for variant in [Variant::Plain, Variant::Resnet, Variant::Z] {
                let (g, x) = random_graph(&mut rng)?;
                let p = EccParams::new(2, 3, 4, &[5], variant, &mut rng)?;
                // Random biases keep ReLU inputs away from zero, where the
                // numeric derivative is undefined.
                let mut params: Vec<Tensor> = p
                    .tensors()
                    .into_iter()
                    .map(|t| Tensor::new(t.shape(), (0..t.len()).map(|_| rng.random_range(-1.0..1.0)).collect()))
                    .collect::<std::result::Result<_, _>>()?;
                params.push(x);
                let r = check_gradients(&params, 1e-6, |tape, vars| {
                    let n = vars.len();
                    let ev = p.vars_from(&vars[..n - 1])?;
                    let y = p.forward(tape, &ev, &g, vars[n - 1], LabelRows::PerEdge)?;
                    let sq = tape.mul(y, y)?;
                    tape.sum(sq)
                })?;
                println!("ecc {variant:?}: max relative error {:.3e}", r.max_rel_error);
                worst = worst.max(r.max_rel_error);
            }
            Ok(worst < 1e-4)
        }
    }
}

fn random_graph<R: Rng>(rng: &mut R) -> Result<(LabeledGraph, Tensor)> {
    let n = 6;
    let mut edges = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if i != j && rng.random_bool(0.4) {
                edges.push((j, i));
            }
        }
    }
    let labels = Tensor::new(&[edges.len(), 2], (0..edges.len() * 2).map(|_| rng.random_range(-1.0..1.0)).collect())?;
    let x = Tensor::new(&[n, 3], (0..n * 3).map(|_| rng.random_range(-1.0..1.0)).collect())?;
    let g = LabeledGraph::new(n, &edges, labels, x.clone())?.finalize(&[0.0, 0.0])?;
    Ok((g, x))
}

pub struct FilterDump {
    pub config: String,
    pub scheme: LabelScheme,
    pub input_width: usize,
    pub hidden: Vec<usize>,
    pub checkpoint: Option<PathBuf>,
    pub layer: usize,
    pub step: f64,
    pub extent: f64,
    pub seed: u64,
    pub out: PathBuf,
}

/// Samples the filter network of one convolution over planar offsets
/// `(dx, dy, 0)` with `|dx|, |dy| <= extent` and writes one CSV plus one
/// PGM image per generated weight.
pub fn run_filters_dump(d: &FilterDump) -> Result<usize> {
    if !(d.step > 0.0 && d.extent >= 0.0) {
        bail!("step must be positive and extent non-negative");
    }
    let spec = NetSpec::parse(&d.config)?;
    let opts = NetOptions {
        filter: ecc_core::network::FilterSpec {
            hidden: d.hidden.clone(),
            bias: true,
        },
        ..NetOptions::default()
    };
    let widths = vec![d.scheme.width(); spec.num_pools() + 1];
    let mut net = Network::build(&spec, &opts, d.input_width, &widths, &mut ChaCha8Rng::seed_from_u64(d.seed))?;
    match &d.checkpoint {
        Some(path) => net.load(&mut BufReader::new(File::open(path).with_context(|| format!("opening {}", path.display()))?))?,
        None => log::warn!("no checkpoint given; dumping freshly initialized filters"),
    }
    let conv = net.conv(d.layer).with_context(|| format!("network has no convolution {}", d.layer))?;
    let steps = (d.extent / d.step).round() as i64;
    let coords: Vec<f64> = (-steps..=steps).map(|k| k as f64 * d.step).collect();
    let side = coords.len();
    let mut labels = Vec::with_capacity(side * side * d.scheme.width());
    for &dy in &coords {
        for &dx in &coords {
            if dx == 0.0 && dy == 0.0 {
                labels.extend(std::iter::repeat_n(0.0, d.scheme.width()));
            } else {
                d.scheme.label([dx, dy, 0.0], &mut labels);
            }
        }
    }
    let labels = Tensor::new(&[side * side, d.scheme.width()], labels)?;
    let weights = conv.filter_net.evaluate(&labels)?;
    let k = weights.cols();
    fs::create_dir_all(&d.out)?;
    let mut csv = String::from("dx,dy");
    for c in 0..k {
        csv.push_str(&format!(",w{c}"));
    }
    csv.push('\n');
    for (r, row) in (0..side * side).map(|r| (r, weights.row(r))) {
        csv.push_str(&format!("{},{}", coords[r % side], coords[r / side]));
        for v in row {
            csv.push_str(&format!(",{v}"));
        }
        csv.push('\n');
    }
    fs::write(d.out.join("filters.csv"), csv)?;
    for c in 0..k {
        let column: Vec<f64> = (0..side * side).map(|r| weights.row(r)[c]).collect();
        let (lo, hi) = column.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        let span = if hi > lo { hi - lo } else { 1.0 };
        let mut pgm = format!("P2\n{side} {side}\n255\n");
        // Rows top to bottom for increasing dy.
        for y in 0..side {
            let line: Vec<String> = (0..side)
                .map(|x| (((column[y * side + x] - lo) / span) * 255.0).round().to_string())
                .collect();
            pgm.push_str(&line.join(" "));
            pgm.push('\n');
        }
        fs::write(d.out.join(format!("filter_{c:03}.pgm")), pgm)?;
    }
    Ok(k)
}
