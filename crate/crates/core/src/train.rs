//! Training loop, batching, cross-validation and evaluation harnesses.

use std::borrow::Cow;
use std::fmt::Write as _;
use std::ops::Range;

use log::{info, warn};
use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{EccError, Result};
use crate::graph::{GraphPyramid, LabeledGraph, PoolingMap};
use crate::layers::{argmax, softmax};
use crate::network::{BatchInput, Network};
use crate::pointcloud::{self, Augment, LabelScheme, PointCloud};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub base_lr: f64,
    /// Epochs (0-based) from which the learning rate is multiplied once more
    /// by `lr_decay_factor`.
    pub lr_decay_epochs: Vec<usize>,
    pub lr_decay_factor: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub seed: u64,
    /// Training-time point-cloud augmentation; ignored by graph datasets.
    pub augment: Augment,
    /// Pyramids averaged per test graph; 1 disables averaging.
    pub test_time_runs: usize,
    /// Evaluate the test set every this many epochs (0: after the last only).
    pub eval_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 10,
            batch_size: 32,
            base_lr: 0.1,
            lr_decay_epochs: Vec::new(),
            lr_decay_factor: 0.1,
            momentum: 0.0,
            weight_decay: 0.0,
            seed: 0,
            augment: Augment::NONE,
            test_time_runs: 1,
            eval_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(EccError::Configuration(m));
        if self.batch_size == 0 {
            return bad("batch size must be positive".into());
        }
        if !(self.base_lr.is_finite() && self.base_lr >= 0.0) {
            return bad(format!("learning rate must be finite and non-negative, got {}", self.base_lr));
        }
        if !(self.lr_decay_factor.is_finite() && self.lr_decay_factor > 0.0) {
            return bad(format!("decay factor must be positive, got {}", self.lr_decay_factor));
        }
        if !(0.0..1.0).contains(&self.momentum) || !(self.weight_decay >= 0.0) {
            return bad("momentum must be in [0, 1) and weight decay non-negative".into());
        }
        if self.lr_decay_epochs.windows(2).any(|w| w[0] >= w[1]) {
            return bad(format!("decay epochs must be strictly increasing: {:?}", self.lr_decay_epochs));
        }
        if let Some(&last) = self.lr_decay_epochs.last() {
            if last >= self.epochs {
                return bad(format!("decay epoch {last} is not below the epoch count {}", self.epochs));
            }
        }
        if self.test_time_runs == 0 {
            return bad("test-time runs must be at least 1".into());
        }
        Ok(())
    }

    /// Learning rate in effect during `epoch`.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        let drops = self.lr_decay_epochs.iter().filter(|&&d| d <= epoch).count();
        self.base_lr * self.lr_decay_factor.powi(drops as i32)
    }
}

/// A labelled example with one or more alternative pyramids (randomized
/// sparsifications of the same graph, or a single deterministic one).
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub variants: Vec<GraphPyramid>,
    pub label: usize,
}

impl Sample {
    pub fn new(pyramid: GraphPyramid, label: usize) -> Self {
        Sample {
            variants: vec![pyramid],
            label,
        }
    }

    pub fn primary(&self) -> &GraphPyramid {
        &self.variants[0]
    }
}

/// Items the training loop iterates over once per epoch.
pub trait TrainSource {
    fn num_items(&self) -> usize;
    fn label(&self, item: usize) -> usize;
    /// Pyramid for `item`, possibly freshly randomized.
    fn pyramid(&self, item: usize, augment: &Augment, rng: &mut dyn RngCore) -> Result<Cow<'_, GraphPyramid>>;
}

/// Every variant of every sample is a separate training item, which
/// realizes dataset expansion by pre-generated sparsifications.
pub struct Expanded<'a> {
    samples: &'a [Sample],
    index: Vec<(usize, usize)>,
}

impl<'a> Expanded<'a> {
    pub fn new(samples: &'a [Sample]) -> Self {
        let index = samples
            .iter()
            .enumerate()
            .flat_map(|(s, x)| (0..x.variants.len()).map(move |v| (s, v)))
            .collect();
        Expanded { samples, index }
    }
}

impl TrainSource for Expanded<'_> {
    fn num_items(&self) -> usize {
        self.index.len()
    }

    fn label(&self, item: usize) -> usize {
        self.samples[self.index[item].0].label
    }

    fn pyramid(&self, item: usize, _: &Augment, _: &mut dyn RngCore) -> Result<Cow<'_, GraphPyramid>> {
        let (s, v) = self.index[item];
        Ok(Cow::Borrowed(&self.samples[s].variants[v]))
    }
}

/// Point clouds whose pyramids are rebuilt from an augmented copy each time
/// they are drawn.
pub struct AugmentedClouds<'a> {
    pub clouds: &'a [(PointCloud, usize)],
    pub levels: Vec<(f64, f64)>,
    pub scheme: LabelScheme,
}

impl TrainSource for AugmentedClouds<'_> {
    fn num_items(&self) -> usize {
        self.clouds.len()
    }

    fn label(&self, item: usize) -> usize {
        self.clouds[item].1
    }

    fn pyramid(&self, item: usize, augment: &Augment, rng: &mut dyn RngCore) -> Result<Cow<'_, GraphPyramid>> {
        let pc = pointcloud::augment(&self.clouds[item].0, augment, rng)?;
        Ok(Cow::Owned(pointcloud::build_pyramid(&pc, &self.levels, self.scheme)?.0))
    }
}

/// Merges pyramids of equal depth into one disjoint-union pyramid whose
/// pooling maps carry the coarse offsets of each member.
pub fn batch(pyramids: &[&GraphPyramid]) -> Result<BatchInput> {
    let first = pyramids
        .first()
        .ok_or_else(|| EccError::Batching("empty batch".into()))?;
    let depth = first.depth();
    if let Some(p) = pyramids.iter().find(|p| p.depth() != depth) {
        return Err(EccError::Batching(format!("pyramid depths {} and {} differ", depth, p.depth())));
    }
    let mut levels = Vec::with_capacity(depth + 1);
    let mut segments = Vec::with_capacity(depth + 1);
    for h in 0..=depth {
        let parts: Vec<&LabeledGraph> = pyramids.iter().map(|p| p.level(h)).collect();
        segments.push(ranges(parts.iter().map(|g| g.num_vertices())));
        levels.push(if parts.len() == 1 {
            parts[0].clone()
        } else {
            LabeledGraph::disjoint_union(&parts)?
        });
    }
    let mut maps = Vec::with_capacity(depth);
    for h in 0..depth {
        let mut assign = Vec::with_capacity(levels[h].num_vertices());
        for (p, seg) in pyramids.iter().zip(&segments[h + 1]) {
            assign.extend(p.maps()[h].assignment().iter().map(|a| a + seg.start));
        }
        maps.push(PoolingMap::new(assign, levels[h + 1].num_vertices())?);
    }
    Ok(BatchInput {
        pyramid: GraphPyramid::new(levels, maps)?,
        segments,
    })
}

fn ranges(sizes: impl Iterator<Item = usize>) -> Vec<Range<usize>> {
    let mut start = 0;
    sizes
        .map(|n| {
            start += n;
            start - n..start
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub train_acc: f64,
    pub test_acc: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainLog {
    pub epochs: Vec<EpochMetrics>,
}

impl TrainLog {
    /// CSV with columns `epoch,lr,train_loss,train_acc,test_acc`; missing test
    /// accuracies are left empty.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,lr,train_loss,train_acc,test_acc\n");
        for m in &self.epochs {
            let test = m.test_acc.map(|a| a.to_string()).unwrap_or_default();
            let _ = writeln!(out, "{},{},{},{},{}", m.epoch, m.lr, m.train_loss, m.train_acc, test);
        }
        out
    }

    pub fn last(&self) -> Option<&EpochMetrics> {
        self.epochs.last()
    }
}

/// SGD with optional momentum and weight decay. On a non-finite loss the
/// parameters of the last completed epoch are restored and a divergence
/// error is returned.
pub fn train(net: &mut Network, data: &dyn TrainSource, test: Option<&[Sample]>, cfg: &TrainConfig) -> Result<TrainLog> {
    cfg.validate()?;
    let n = data.num_items();
    if n == 0 {
        return Err(EccError::Configuration("training set is empty".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut velocity: Vec<Tensor> = net.params().iter().map(|p| Tensor::zeros(p.shape())).collect();
    let mut order: Vec<usize> = (0..n).collect();
    let mut log = TrainLog::default();
    for epoch in 0..cfg.epochs {
        let lr = cfg.lr_at(epoch);
        let snapshot = net.clone();
        order.shuffle(&mut rng);
        let (mut loss_sum, mut correct) = (0.0, 0usize);
        for chunk in order.chunks(cfg.batch_size) {
            let pyramids = chunk
                .iter()
                .map(|&k| data.pyramid(k, &cfg.augment, &mut rng))
                .collect::<Result<Vec<_>>>()?;
            let refs: Vec<&GraphPyramid> = pyramids.iter().map(|p| p.as_ref()).collect();
            let input = batch(&refs)?;
            let targets: Vec<usize> = chunk.iter().map(|&k| data.label(k)).collect();
            let (loss, grads, stats, logits) = net.loss_and_gradients(&input, &targets, &mut rng)?;
            if !loss.is_finite() {
                *net = snapshot;
                warn!("loss {loss} at epoch {epoch}; restored the last good parameters");
                return Err(EccError::Divergence { epoch, loss });
            }
            loss_sum += loss * chunk.len() as f64;
            correct += (0..chunk.len())
                .filter(|&r| argmax(logits.row(r)) == targets[r])
                .count();
            net.apply_bn_stats(&stats);
            for ((p, g), v) in net.params_mut().into_iter().zip(&grads).zip(&mut velocity) {
                let (p, v) = (p.data_mut(), v.data_mut());
                for ((w, &d), u) in p.iter_mut().zip(g.data()).zip(v.iter_mut()) {
                    let step = d + cfg.weight_decay * *w;
                    *u = cfg.momentum * *u + step;
                    *w -= lr * *u;
                }
            }
        }
        let due = epoch + 1 == cfg.epochs || (cfg.eval_every > 0 && (epoch + 1) % cfg.eval_every == 0);
        let test_acc = match test {
            Some(t) if due && !t.is_empty() => Some(evaluate(net, t, cfg.batch_size)?.accuracy),
            _ => None,
        };
        let m = EpochMetrics {
            epoch,
            lr,
            train_loss: loss_sum / n as f64,
            train_acc: correct as f64 / n as f64,
            test_acc,
        };
        info!(
            "epoch {epoch} lr {lr} loss {:.5} train acc {:.4} test acc {:?}",
            m.train_loss, m.train_acc, m.test_acc
        );
        log.epochs.push(m);
    }
    Ok(log)
}

/// Eval-mode predictions on the primary pyramid of every sample.
#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub accuracy: f64,
    pub predictions: Vec<usize>,
    /// Softmax scores, `[samples x classes]`.
    pub scores: Tensor,
}

pub fn evaluate(net: &Network, samples: &[Sample], batch_size: usize) -> Result<Evaluation> {
    let scores = predict_scores(net, &samples.iter().map(Sample::primary).collect::<Vec<_>>(), batch_size)?;
    let predictions: Vec<usize> = (0..samples.len()).map(|r| argmax(scores.row(r))).collect();
    Ok(Evaluation {
        accuracy: accuracy(&predictions, samples.iter().map(|s| s.label)),
        predictions,
        scores,
    })
}

/// Softmax scores `[pyramids x classes]` in eval mode.
pub fn predict_scores(net: &Network, pyramids: &[&GraphPyramid], batch_size: usize) -> Result<Tensor> {
    let c = net.num_outputs();
    let mut data = Vec::with_capacity(pyramids.len() * c);
    for chunk in pyramids.chunks(batch_size.max(1)) {
        let logits = net.predict(&batch(chunk)?)?;
        data.extend_from_slice(softmax(&logits).data());
    }
    Tensor::new(&[pyramids.len(), c], data)
}

fn accuracy(pred: &[usize], labels: impl Iterator<Item = usize>) -> f64 {
    let hits = pred.iter().zip(labels).filter(|(p, l)| **p == *l).count();
    hits as f64 / pred.len().max(1) as f64
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Averaging {
    /// Majority class over runs, ties to the lowest class index.
    Votes,
    /// Argmax of the mean softmax score.
    Scores,
}

/// Combines per-run softmax rows `[runs x classes]` into one class.
pub fn combine_runs(scores: &Tensor, mode: Averaging) -> usize {
    let c = scores.cols();
    let mut acc = vec![0.0; c];
    for r in 0..scores.rows() {
        match mode {
            Averaging::Votes => acc[argmax(scores.row(r))] += 1.0,
            Averaging::Scores => acc.iter_mut().zip(scores.row(r)).for_each(|(a, s)| *a += s),
        }
    }
    argmax(&acc)
}

/// Prediction averaged over the given pyramids of one graph.
pub fn test_time_average(net: &Network, runs: &[GraphPyramid], mode: Averaging) -> Result<usize> {
    if runs.is_empty() {
        return Err(EccError::contract("test-time averaging needs at least one run"));
    }
    let refs: Vec<&GraphPyramid> = runs.iter().collect();
    Ok(combine_runs(&predict_scores(net, &refs, refs.len())?, mode))
}

/// Accuracy of test-time averaging over the first `runs` variants of each sample.
pub fn test_time_accuracy(net: &Network, samples: &[Sample], runs: usize, mode: Averaging) -> Result<f64> {
    let mut pred = Vec::with_capacity(samples.len());
    for s in samples {
        pred.push(test_time_average(net, &s.variants[..runs.min(s.variants.len())], mode)?);
    }
    Ok(accuracy(&pred, samples.iter().map(|s| s.label)))
}

/// Stratified partition of dataset indices into `k` folds.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FoldPlan {
    pub folds: Vec<Vec<usize>>,
}

impl FoldPlan {
    /// Indices of each class are shuffled and dealt round-robin across folds,
    /// continuing where the previous class stopped, so fold sizes differ by
    /// at most one and every class is spread within one sample of its share.
    pub fn stratified<R: Rng + ?Sized>(labels: &[usize], k: usize, rng: &mut R) -> Result<Self> {
        if k < 2 || k > labels.len() {
            return Err(EccError::Stratification(format!(
                "need 2 <= k <= {} folds, got {k}",
                labels.len()
            )));
        }
        let classes = labels.iter().max().map_or(0, |m| m + 1);
        let mut folds = vec![Vec::new(); k];
        let mut t = 0;
        for c in 0..classes {
            let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
            match members.len() {
                0 => continue,
                1 => {
                    return Err(EccError::Stratification(format!(
                        "class {c} has a single sample and would be absent from one training fold"
                    )))
                }
                _ => {}
            }
            members.shuffle(rng);
            for i in members {
                folds[t % k].push(i);
                t += 1;
            }
        }
        for f in &mut folds {
            f.sort_unstable();
        }
        Ok(FoldPlan { folds })
    }

    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .folds
            .iter()
            .enumerate()
            .filter(|(f, _)| *f != fold)
            .flat_map(|(_, v)| v.iter().copied())
            .collect();
        out.sort_unstable();
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FoldResult {
    pub accuracy: f64,
    /// Score-averaged accuracy over `test_time_runs` pyramids.
    pub averaged_accuracy: f64,
    pub log: TrainLog,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CvReport {
    pub folds: Vec<FoldResult>,
}

impl CvReport {
    pub fn mean(&self) -> f64 {
        mean(self.folds.iter().map(|f| f.accuracy))
    }

    pub fn std(&self) -> f64 {
        std(self.folds.iter().map(|f| f.accuracy))
    }

    pub fn averaged_mean(&self) -> f64 {
        mean(self.folds.iter().map(|f| f.averaged_accuracy))
    }
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = v.collect();
    v.iter().sum::<f64>() / v.len().max(1) as f64
}

fn std(v: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = mean(v.clone());
    mean(v.map(|x| (x - m) * (x - m))).sqrt()
}

/// k-fold cross-validation. `build(fold)` returns a freshly initialized
/// network; training of fold `f` is seeded with `cfg.seed + f`.
pub fn cross_validate<F>(samples: &[Sample], k: usize, cfg: &TrainConfig, mut build: F) -> Result<CvReport>
where
    F: FnMut(usize) -> Result<Network>,
{
    cfg.validate()?;
    let labels: Vec<usize> = samples.iter().map(|s| s.label).collect();
    let plan = FoldPlan::stratified(&labels, k, &mut ChaCha8Rng::seed_from_u64(cfg.seed))?;
    let mut folds = Vec::with_capacity(k);
    for f in 0..k {
        let train_set: Vec<Sample> = plan.train_indices(f).into_iter().map(|i| samples[i].clone()).collect();
        let test_set: Vec<Sample> = plan.folds[f].iter().map(|&i| samples[i].clone()).collect();
        let mut net = build(f)?;
        let fold_cfg = TrainConfig {
            seed: cfg.seed.wrapping_add(f as u64),
            ..cfg.clone()
        };
        let log = train(&mut net, &Expanded::new(&train_set), None, &fold_cfg)?;
        let accuracy = evaluate(&net, &test_set, cfg.batch_size)?.accuracy;
        let averaged_accuracy = if cfg.test_time_runs > 1 {
            test_time_accuracy(&net, &test_set, cfg.test_time_runs, Averaging::Scores)?
        } else {
            accuracy
        };
        info!("fold {f}: accuracy {accuracy:.4}, averaged {averaged_accuracy:.4}");
        folds.push(FoldResult {
            accuracy,
            averaged_accuracy,
            log,
        });
    }
    Ok(CvReport { folds })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Perturbation {
    /// Each point removed independently with this probability.
    Delete(f64),
    /// Gaussian noise of this standard deviation added to every coordinate.
    Noise(f64),
}

impl Perturbation {
    fn augment(self) -> Augment {
        match self {
            Perturbation::Delete(p) => Augment {
                delete: (p > 0.0).then_some(p),
                ..Augment::NONE
            },
            Perturbation::Noise(s) => Augment {
                noise: (s > 0.0).then_some(s),
                ..Augment::NONE
            },
        }
    }

    pub fn kind(self) -> &'static str {
        match self {
            Perturbation::Delete(_) => "delete",
            Perturbation::Noise(_) => "noise",
        }
    }

    pub fn amount(self) -> f64 {
        match self {
            Perturbation::Delete(p) | Perturbation::Noise(p) => p,
        }
    }
}

/// Accuracy on perturbed copies of `clouds`, one entry per perturbation.
/// Pyramids are rebuilt for every copy.
pub fn robustness_eval<R: Rng + ?Sized>(
    net: &Network,
    clouds: &[(PointCloud, usize)],
    levels: &[(f64, f64)],
    scheme: LabelScheme,
    perturbations: &[Perturbation],
    batch_size: usize,
    rng: &mut R,
) -> Result<Vec<(Perturbation, f64)>> {
    if perturbations.is_empty() {
        return Err(EccError::Configuration("perturbation grid is empty".into()));
    }
    let mut out = Vec::with_capacity(perturbations.len());
    for &p in perturbations {
        let ops = p.augment();
        let mut samples = Vec::with_capacity(clouds.len());
        for (pc, label) in clouds {
            let copy = pointcloud::augment(pc, &ops, rng)?;
            samples.push(Sample::new(pointcloud::build_pyramid(&copy, levels, scheme)?.0, *label));
        }
        out.push((p, evaluate(net, &samples, batch_size)?.accuracy));
    }
    Ok(out)
}

/// CSV `perturbation,amount,accuracy`.
pub fn robustness_csv(curve: &[(Perturbation, f64)]) -> String {
    let mut out = String::from("perturbation,amount,accuracy\n");
    for (p, a) in curve {
        let _ = writeln!(out, "{},{},{}", p.kind(), p.amount(), a);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netcfg::NetSpec;
    use crate::network::NetOptions;

    fn path_pyramid(n: usize, label: f64) -> GraphPyramid {
        let edges: Vec<(usize, usize)> = (0..n - 1).flat_map(|i| [(i, i + 1), (i + 1, i)]).collect();
        let g = LabeledGraph::new(n, &edges, Tensor::full(&[edges.len(), 1], label), Tensor::full(&[n, 1], 1.0))
            .unwrap()
            .finalize(&[0.0])
            .unwrap();
        GraphPyramid::single(g)
    }

    #[test]
    fn lr_schedule_steps() {
        let cfg = TrainConfig {
            epochs: 250,
            base_lr: 0.1,
            lr_decay_epochs: vec![200, 245],
            ..TrainConfig::default()
        };
        cfg.validate().unwrap();
        assert_eq!(cfg.lr_at(199), 0.1);
        assert!((cfg.lr_at(200) - 0.01).abs() < 1e-15);
        assert!((cfg.lr_at(249) - 0.001).abs() < 1e-15);
        let bad = TrainConfig {
            lr_decay_epochs: vec![5, 5],
            ..cfg.clone()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn batch_offsets() {
        let (a, b) = (path_pyramid(3, 1.0), path_pyramid(5, 1.0));
        let input = batch(&[&a, &b]).unwrap();
        let g = input.pyramid.level(0);
        assert_eq!(g.num_vertices(), 8);
        assert_eq!(input.segments[0], vec![0..3, 3..8]);
        let e = g.edge_range(3).start;
        assert!(g.sources()[g.edge_range(3)].iter().all(|&s| s >= 3));
        assert_eq!(g.targets()[e], 3);
        let one = batch(&[&a]).unwrap();
        assert_eq!(one.pyramid, a);
    }

    #[test]
    fn depth_mismatch_is_batching_error() {
        let a = path_pyramid(2, 1.0);
        let g = a.level(0).clone();
        let deep = GraphPyramid::new(vec![g.clone(), g], vec![PoolingMap::identity(2)]).unwrap();
        assert!(matches!(batch(&[&a, &deep]), Err(EccError::Batching(_))));
    }

    #[test]
    fn folds_are_stratified() {
        let labels: Vec<usize> = (0..23).map(|i| usize::from(i % 3 == 0)).collect();
        let plan = FoldPlan::stratified(&labels, 5, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let mut all: Vec<usize> = plan.folds.concat();
        all.sort_unstable();
        assert_eq!(all, (0..23).collect::<Vec<_>>());
        let sizes: Vec<usize> = plan.folds.iter().map(Vec::len).collect();
        assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        let ones = labels.iter().filter(|&&l| l == 1).count() as f64;
        for f in &plan.folds {
            let share = ones * f.len() as f64 / 23.0;
            let got = f.iter().filter(|&&i| labels[i] == 1).count() as f64;
            assert!((got - share).abs() <= 1.0 + 1e-9);
        }
        assert!(FoldPlan::stratified(&[0, 0, 1], 2, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
    }

    #[test]
    fn votes_and_scores() {
        let s = Tensor::from_rows(&[vec![0.6, 0.4], vec![0.45, 0.55], vec![0.45, 0.55]]).unwrap();
        assert_eq!(combine_runs(&s, Averaging::Votes), 1);
        assert_eq!(combine_runs(&s, Averaging::Scores), 0);
        let tie = Tensor::from_rows(&[vec![0.6, 0.4], vec![0.4, 0.6]]).unwrap();
        assert_eq!(combine_runs(&tie, Averaging::Votes), 0);
    }

    #[test]
    fn zero_lr_leaves_parameters() {
        let spec = NetSpec::parse("C(4)-GAP-FC(2)").unwrap();
        let mut net = Network::build(&spec, &NetOptions::default(), 1, &[1], &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let before = net.params().into_iter().cloned().collect::<Vec<_>>();
        let samples = vec![Sample::new(path_pyramid(4, 0.5), 0), Sample::new(path_pyramid(3, -0.5), 1)];
        let cfg = TrainConfig {
            epochs: 1,
            base_lr: 0.0,
            ..TrainConfig::default()
        };
        train(&mut net, &Expanded::new(&samples), None, &cfg).unwrap();
        let after = net.params().into_iter().cloned().collect::<Vec<_>>();
        assert_eq!(before, after);
    }
}
