//! Networks assembled from a [`NetSpec`] and run on batched pyramids.

use std::io::{Read, Write};
use std::ops::Range;

use rand::Rng;

use crate::ecc::{EccParams, FilterNet, Init, LabelRows, Variant, FACTOR_HIDDEN};
use crate::error::{EccError, Result};
use crate::graph::GraphPyramid;
use crate::init::glorot_uniform;
use crate::layers::{self, BatchNormState, BatchStats, GlobalPool, Linear, Mode};
use crate::netcfg::{LayerSpec, NetSpec};
use crate::tensor::{Gradients, Tape, Tensor, Var};

/// Shape of the filter-generating networks.
#[derive(Clone, Debug, PartialEq)]
pub struct FilterSpec {
    pub hidden: Vec<usize>,
    pub bias: bool,
}

impl FilterSpec {
    pub fn continuous() -> Self {
        FilterSpec {
            hidden: crate::ecc::CONTINUOUS_HIDDEN.to_vec(),
            bias: true,
        }
    }

    pub fn categorical() -> Self {
        FilterSpec {
            hidden: crate::ecc::CATEGORICAL_HIDDEN.to_vec(),
            bias: true,
        }
    }

    /// Single bias-free layer, the configuration used without edge labels.
    pub fn single_layer() -> Self {
        FilterSpec {
            hidden: Vec::new(),
            bias: false,
        }
    }
}

/// Builder options not carried by the configuration string.
#[derive(Clone, Debug, PartialEq)]
pub struct NetOptions {
    pub variant: Variant,
    pub filter: FilterSpec,
    /// Dropout after every convolution block (train mode only).
    pub conv_dropout: f64,
}

impl Default for NetOptions {
    fn default() -> Self {
        NetOptions {
            variant: Variant::Plain,
            filter: FilterSpec::continuous(),
            conv_dropout: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Layer {
    /// Convolution, batch normalization and ReLU on one pyramid level.
    Conv { level: usize, ecc: EccParams, bn: BatchNormState },
    /// Max pooling from `level` onto `level + 1`.
    Pool { level: usize },
    Global(GlobalPool),
    Dense { linear: Linear, relu: bool },
    Dropout(f64),
}

/// A batch of pyramids merged into one disjoint union per level.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchInput {
    pub pyramid: GraphPyramid,
    /// Vertex ranges of every member graph, per level.
    pub segments: Vec<Vec<Range<usize>>>,
}

impl BatchInput {
    pub fn len(&self) -> usize {
        self.segments[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments[0].is_empty()
    }
}

/// Result of a forward pass.
pub struct ForwardOutput {
    /// `[batch x classes]`.
    pub logits: Var,
    /// Batch statistics of every convolution's normalization, in layer order.
    pub bn_stats: Vec<BatchStats>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    layers: Vec<Layer>,
    spec: NetSpec,
    input_width: usize,
    label_widths: Vec<usize>,
}

impl Network {
    /// Instantiates independent parameters for every layer. `label_widths[h]`
    /// is the edge-label width of pyramid level `h`; the pyramid must have a
    /// level for every pooling of the spec.
    pub fn build<R: Rng + ?Sized>(
        spec: &NetSpec,
        opts: &NetOptions,
        input_width: usize,
        label_widths: &[usize],
        rng: &mut R,
    ) -> Result<Self> {
        spec.validate()?;
        if label_widths.len() < spec.num_pools() + 1 {
            return Err(EccError::Configuration(format!(
                "network pools {} times but the pyramid has only {} levels",
                spec.num_pools(),
                label_widths.len()
            )));
        }
        if !(0.0..1.0).contains(&opts.conv_dropout) {
            return Err(EccError::Configuration(format!("conv dropout must be in [0, 1), got {}", opts.conv_dropout)));
        }
        let last_fc = spec.layers.iter().rposition(|l| matches!(l, LayerSpec::FullyConnected(_)));
        let mut layers = Vec::new();
        let mut width = input_width;
        let mut level = 0;
        let mut pooled_globally = false;
        for (k, layer) in spec.layers.iter().enumerate() {
            match *layer {
                LayerSpec::Conv(c) => {
                    let s = label_widths[level];
                    let net = FilterNet::new(s, &opts.filter.hidden, c * width, opts.filter.bias, Init::Orthogonal, rng)?;
                    let factor = match opts.variant {
                        Variant::Z => Some(FilterNet::new(1, &FACTOR_HIDDEN, 1, true, Init::Glorot, rng)?),
                        _ => None,
                    };
                    let projection =
                        (opts.variant == Variant::Resnet && width != c).then(|| glorot_uniform(width, c, rng));
                    let ecc = EccParams::from_parts(net, Tensor::zeros(&[c]), opts.variant, factor, projection, width, c)?;
                    layers.push(Layer::Conv {
                        level,
                        ecc,
                        bn: BatchNormState::new(c),
                    });
                    if opts.conv_dropout > 0.0 {
                        layers.push(Layer::Dropout(opts.conv_dropout));
                    }
                    width = c;
                }
                LayerSpec::MaxPoolGrid { .. } | LayerSpec::MaxPoolLevel => {
                    layers.push(Layer::Pool { level });
                    level += 1;
                }
                LayerSpec::GlobalAvgPool | LayerSpec::GlobalMaxPool => {
                    let kind = if *layer == LayerSpec::GlobalAvgPool {
                        GlobalPool::Average
                    } else {
                        GlobalPool::Max
                    };
                    layers.push(Layer::Global(kind));
                    pooled_globally = true;
                }
                LayerSpec::FullyConnected(c) => {
                    if !pooled_globally {
                        // Without an explicit global pooling the first dense
                        // layer averages the remaining vertices of each graph.
                        layers.push(Layer::Global(GlobalPool::Average));
                        pooled_globally = true;
                    }
                    layers.push(Layer::Dense {
                        linear: Linear::new(width, c, rng),
                        relu: Some(k) != last_fc,
                    });
                    width = c;
                }
                LayerSpec::Dropout(p) => layers.push(Layer::Dropout(p)),
            }
        }
        if !pooled_globally {
            layers.push(Layer::Global(GlobalPool::Average));
        }
        Ok(Network {
            layers,
            spec: spec.clone(),
            input_width,
            label_widths: label_widths.to_vec(),
        })
    }

    pub fn spec(&self) -> &NetSpec {
        &self.spec
    }

    pub fn input_width(&self) -> usize {
        self.input_width
    }

    pub fn label_widths(&self) -> &[usize] {
        &self.label_widths
    }

    pub fn num_outputs(&self) -> usize {
        self.layers
            .iter()
            .rev()
            .find_map(|l| match l {
                Layer::Dense { linear, .. } => Some(linear.d_out()),
                Layer::Conv { ecc, .. } => Some(ecc.d_out()),
                _ => None,
            })
            .unwrap_or(self.input_width)
    }

    /// Trainable tensors in a fixed order.
    pub fn params(&self) -> Vec<&Tensor> {
        let mut out = Vec::new();
        for layer in &self.layers {
            match layer {
                Layer::Conv { ecc, bn, .. } => {
                    out.extend(ecc.tensors());
                    out.push(&bn.gamma);
                    out.push(&bn.beta);
                }
                Layer::Dense { linear, .. } => {
                    out.push(&linear.weight);
                    out.push(&linear.bias);
                }
                _ => {}
            }
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::new();
        for layer in &mut self.layers {
            match layer {
                Layer::Conv { ecc, bn, .. } => {
                    out.extend(ecc.tensors_mut());
                    out.push(&mut bn.gamma);
                    out.push(&mut bn.beta);
                }
                Layer::Dense { linear, .. } => {
                    out.push(&mut linear.weight);
                    out.push(&mut linear.bias);
                }
                _ => {}
            }
        }
        out
    }

    pub fn param_names(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (k, layer) in self.layers.iter().enumerate() {
            match layer {
                Layer::Conv { ecc, .. } => {
                    out.extend(ecc.names(&format!("l{k}.conv")));
                    out.push(format!("l{k}.bn.gamma"));
                    out.push(format!("l{k}.bn.beta"));
                }
                Layer::Dense { .. } => {
                    out.push(format!("l{k}.fc.weight"));
                    out.push(format!("l{k}.fc.bias"));
                }
                _ => {}
            }
        }
        out
    }

    /// Running statistics of every normalization, with names.
    fn buffers(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        for (k, layer) in self.layers.iter().enumerate() {
            if let Layer::Conv { bn, .. } = layer {
                out.push((format!("l{k}.bn.running_mean"), &bn.running_mean));
                out.push((format!("l{k}.bn.running_var"), &bn.running_var));
            }
        }
        out
    }

    fn buffers_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::new();
        for layer in &mut self.layers {
            if let Layer::Conv { bn, .. } = layer {
                out.push(&mut bn.running_mean);
                out.push(&mut bn.running_var);
            }
        }
        out
    }

    pub fn num_parameters(&self) -> usize {
        self.params().iter().map(|t| t.len()).sum()
    }

    /// Registers every parameter on `tape` (trainable when `trainable`).
    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> Vec<Var> {
        self.params()
            .into_iter()
            .map(|t| if trainable { tape.param(t.clone()) } else { tape.leaf(t.clone()) })
            .collect()
    }

    pub fn forward<R: Rng + ?Sized>(
        &self,
        tape: &mut Tape,
        vars: &[Var],
        batch: &BatchInput,
        mode: Mode,
        rng: &mut R,
    ) -> Result<ForwardOutput> {
        let levels = batch.pyramid.levels();
        if levels.len() < self.label_widths.len().min(self.spec.num_pools() + 1) {
            return Err(EccError::Configuration("batch pyramid is shallower than the network".into()));
        }
        let g0 = &levels[0];
        if g0.signal_width() != self.input_width {
            return Err(EccError::dim("network input", &[g0.signal_width()], &[self.input_width]));
        }
        let mut x = tape.leaf(g0.vertex_signal().clone());
        let mut cursor = 0;
        let mut level = 0;
        let mut pooled = false;
        let mut bn_stats = Vec::new();
        for layer in &self.layers {
            match layer {
                Layer::Conv { level: h, ecc, bn } => {
                    let n_ecc = ecc.tensors().len();
                    let ev = ecc.vars_from(&vars[cursor..cursor + n_ecc])?;
                    let (gamma, beta) = (vars[cursor + n_ecc], vars[cursor + n_ecc + 1]);
                    cursor += n_ecc + 2;
                    let g = &levels[*h];
                    let rows = match g.distinct_labels() {
                        Some(d) => LabelRows::Distinct(d),
                        None => LabelRows::PerEdge,
                    };
                    let y = ecc.forward(tape, &ev, g, x, rows)?;
                    let (y, stats) = bn.forward(tape, gamma, beta, y, mode)?;
                    bn_stats.extend(stats);
                    x = tape.relu(y)?;
                }
                Layer::Pool { level: h } => {
                    x = layers::max_pool(tape, x, &batch.pyramid.maps()[*h])?;
                    level = h + 1;
                }
                Layer::Global(kind) => {
                    x = layers::global_pool(tape, x, &batch.segments[level], *kind)?;
                    pooled = true;
                }
                Layer::Dense { linear, relu } => {
                    let (w, b) = (vars[cursor], vars[cursor + 1]);
                    cursor += 2;
                    x = linear.forward(tape, w, b, x)?;
                    if *relu {
                        x = tape.relu(x)?;
                    }
                }
                Layer::Dropout(p) => x = layers::dropout(tape, x, *p, mode, rng)?,
            }
        }
        debug_assert!(pooled && cursor == vars.len());
        Ok(ForwardOutput { logits: x, bn_stats })
    }

    /// Folds train-mode batch statistics into the running estimates.
    pub fn apply_bn_stats(&mut self, stats: &[BatchStats]) {
        let mut it = stats.iter();
        for layer in &mut self.layers {
            if let Layer::Conv { bn, .. } = layer {
                if let Some(s) = it.next() {
                    bn.update(s);
                }
            }
        }
    }

    /// Eval-mode logits `[batch x classes]`.
    pub fn predict(&self, batch: &BatchInput) -> Result<Tensor> {
        let mut tape = Tape::new();
        let vars = self.bind(&mut tape, false);
        // Eval mode draws nothing.
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0);
        let out = self.forward(&mut tape, &vars, batch, Mode::Eval, &mut rng)?;
        Ok(tape.value(out.logits).clone())
    }

    /// One train-mode pass: loss value, gradients in [`Network::params`]
    /// order and the batch statistics.
    pub fn loss_and_gradients<R: Rng + ?Sized>(
        &self,
        batch: &BatchInput,
        targets: &[usize],
        rng: &mut R,
    ) -> Result<(f64, Vec<Tensor>, Vec<BatchStats>, Tensor)> {
        let mut tape = Tape::new();
        let vars = self.bind(&mut tape, true);
        let out = self.forward(&mut tape, &vars, batch, Mode::Train, rng)?;
        let loss = layers::softmax_cross_entropy(&mut tape, out.logits, targets)?;
        let grads: Gradients = tape.backward(loss)?;
        let params = self.params();
        let g = vars
            .iter()
            .zip(params)
            .map(|(v, p)| grads.get(*v).cloned().unwrap_or_else(|| Tensor::zeros(p.shape())))
            .collect();
        Ok((tape.value(loss).item(), g, out.bn_stats, tape.value(out.logits).clone()))
    }

    /// Weights of the filter network of the `index`-th convolution.
    pub fn conv(&self, index: usize) -> Option<&EccParams> {
        self.layers
            .iter()
            .filter_map(|l| match l {
                Layer::Conv { ecc, .. } => Some(ecc),
                _ => None,
            })
            .nth(index)
    }

    /// Writes every parameter and normalization buffer.
    ///
    /// Layout (little-endian): `b"ECCP"`, version `u32` (= 1), entry count
    /// `u64`, then per entry: name length `u64`, UTF-8 name, rank `u64`,
    /// dims `u64 x rank`, values `f64 x product(dims)`.
    pub fn save<W: Write>(&self, out: &mut W) -> Result<()> {
        let mut entries: Vec<(String, &Tensor)> = self.param_names().into_iter().zip(self.params()).collect();
        entries.extend(self.buffers());
        out.write_all(CHECKPOINT_MAGIC)?;
        out.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        out.write_all(&(entries.len() as u64).to_le_bytes())?;
        for (name, t) in entries {
            out.write_all(&(name.len() as u64).to_le_bytes())?;
            out.write_all(name.as_bytes())?;
            out.write_all(&(t.shape().len() as u64).to_le_bytes())?;
            for &d in t.shape() {
                out.write_all(&(d as u64).to_le_bytes())?;
            }
            for v in t.data() {
                out.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    /// Loads a checkpoint written by [`Network::save`] into a network of the
    /// same architecture; names and shapes must match.
    pub fn load<R: Read>(&mut self, input: &mut R) -> Result<()> {
        let mut magic = [0u8; 4];
        input.read_exact(&mut magic)?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(EccError::Format("not a checkpoint".into()));
        }
        let version = u32::from_le_bytes(read_array(input)?);
        if version != CHECKPOINT_VERSION {
            return Err(EccError::Format(format!("unsupported checkpoint version {version}")));
        }
        let mut names = self.param_names();
        names.extend(self.buffers().into_iter().map(|(n, _)| n));
        let count = read_u64(input)?;
        if count != names.len() {
            return Err(EccError::Format(format!("checkpoint has {count} entries, network has {}", names.len())));
        }
        let mut loaded = Vec::with_capacity(count);
        for expected in &names {
            let len = read_u64(input)?;
            if len > 4096 {
                return Err(EccError::Format("implausible name length".into()));
            }
            let mut name = vec![0u8; len];
            input.read_exact(&mut name)?;
            let name = String::from_utf8(name).map_err(|_| EccError::Format("name is not UTF-8".into()))?;
            if &name != expected {
                return Err(EccError::Format(format!("expected entry {expected}, found {name}")));
            }
            let rank = read_u64(input)?;
            if rank > 8 {
                return Err(EccError::Format("implausible tensor rank".into()));
            }
            let shape = (0..rank).map(|_| read_u64(input)).collect::<Result<Vec<_>>>()?;
            let len: usize = shape.iter().product();
            let data = (0..len)
                .map(|_| read_array(input).map(f64::from_le_bytes))
                .collect::<Result<Vec<_>>>()?;
            loaded.push(Tensor::new(&shape, data)?);
        }
        let n_params = self.params().len();
        let mut targets = self.params_mut();
        let mut rest = Vec::new();
        for (k, t) in loaded.into_iter().enumerate() {
            if k < n_params {
                if targets[k].shape() != t.shape() {
                    return Err(EccError::dim("checkpoint entry", targets[k].shape(), t.shape()));
                }
                *targets[k] = t;
            } else {
                rest.push(t);
            }
        }
        drop(targets);
        for (slot, t) in self.buffers_mut().into_iter().zip(rest) {
            if slot.shape() != t.shape() {
                return Err(EccError::dim("checkpoint buffer", slot.shape(), t.shape()));
            }
            *slot = t;
        }
        Ok(())
    }
}

const CHECKPOINT_MAGIC: &[u8; 4] = b"ECCP";
const CHECKPOINT_VERSION: u32 = 1;

fn read_array<R: Read, const N: usize>(input: &mut R) -> Result<[u8; N]> {
    let mut b = [0u8; N];
    input.read_exact(&mut b)?;
    Ok(b)
}

fn read_u64<R: Read>(input: &mut R) -> Result<usize> {
    usize::try_from(u64::from_le_bytes(read_array(input)?)).map_err(|_| EccError::Format("count overflows".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{LabeledGraph, PoolingMap};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn two_level_input() -> BatchInput {
        let edges = [(0, 1), (1, 0), (1, 2), (2, 1), (2, 3), (3, 2)];
        let labels = Tensor::new(&[6, 1], vec![0.1, 0.1, 0.5, 0.5, 0.9, 0.9]).unwrap();
        let x = Tensor::new(&[4, 2], vec![1.0, 0.0, 0.0, 1.0, 1.0, 1.0, -1.0, 0.5]).unwrap();
        let g0 = LabeledGraph::new(4, &edges, labels, x).unwrap().finalize(&[0.0]).unwrap();
        let g1 = LabeledGraph::new(2, &[(0, 1), (1, 0)], Tensor::full(&[2, 1], 0.3), Tensor::zeros(&[2, 1]))
            .unwrap()
            .finalize(&[0.0])
            .unwrap();
        let p = GraphPyramid::new(vec![g0, g1], vec![PoolingMap::new(vec![0, 0, 1, 1], 2).unwrap()]).unwrap();
        BatchInput {
            pyramid: p,
            segments: vec![vec![0..4], vec![0..2]],
        }
    }

    #[test]
    fn one_pool_binds_second_level() {
        let spec = NetSpec::parse("C(3)-MP-C(4)-GAP-FC(2)").unwrap();
        let mut r = ChaCha8Rng::seed_from_u64(1);
        let net = Network::build(&spec, &NetOptions::default(), 2, &[1, 1], &mut r).unwrap();
        let out = net.predict(&two_level_input()).unwrap();
        assert_eq!(out.shape(), &[1, 2]);
        assert!(Network::build(&spec, &NetOptions::default(), 2, &[1], &mut r).is_err());
    }

    #[test]
    fn same_seed_same_parameters() {
        let spec = NetSpec::parse("C(3)-MP-C(4)-GAP-FC(2)").unwrap();
        let a = Network::build(&spec, &NetOptions::default(), 2, &[1, 1], &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let b = Network::build(&spec, &NetOptions::default(), 2, &[1, 1], &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn implicit_global_pool_before_fc() {
        let spec = NetSpec::parse("C(3)-MP-C(4)-D(0.5)-FC(2)").unwrap();
        let net = Network::build(&spec, &NetOptions::default(), 2, &[1, 1], &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(net.predict(&two_level_input()).unwrap().shape(), &[1, 2]);
    }

    #[test]
    fn checkpoint_round_trip() {
        let spec = NetSpec::parse("C(3)-MP-C(4)-GAP-FC(8)-FC(2)").unwrap();
        let opts = NetOptions {
            variant: Variant::Resnet,
            ..NetOptions::default()
        };
        let mut net = Network::build(&spec, &opts, 2, &[1, 1], &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let (_, _, stats, _) = net
            .loss_and_gradients(&two_level_input(), &[1], &mut ChaCha8Rng::seed_from_u64(0))
            .unwrap();
        net.apply_bn_stats(&stats);
        let mut buf = Vec::new();
        net.save(&mut buf).unwrap();
        let mut other = Network::build(&spec, &opts, 2, &[1, 1], &mut ChaCha8Rng::seed_from_u64(99)).unwrap();
        assert_ne!(other, net);
        other.load(&mut buf.as_slice()).unwrap();
        assert_eq!(other, net);
        buf[0] = b'X';
        assert!(other.load(&mut buf.as_slice()).is_err());
    }
}
