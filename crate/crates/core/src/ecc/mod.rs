//! Edge-conditioned convolution.
//!
//! For every vertex `i` with neighborhood `N(i)` (self-loop included)
//!
//! ```text
//! X'(i) = 1/|N(i)| * sum_{j in N(i)} Theta(L(j,i)) X(j) + b
//! ```
//!
//! where `Theta` is produced by a [`FilterNet`] from the edge label. The
//! residual variant adds `X(i)` (or a learned projection of it when the
//! widths differ); the `Z` variant replaces `1/|N(i)|` by `Z(|N(i)|)/|N(i)|`
//! with a small learned scalar network `Z`.

pub mod grid;

use std::sync::Arc;

use rand::Rng;

use crate::error::{EccError, Result};
use crate::graph::{DistinctLabels, LabeledGraph};
use crate::init::{glorot_uniform, orthogonal};
use crate::tensor::{EdgePlan, Tape, Tensor, Var};

/// Hidden widths of the filter network for continuous labels.
pub const CONTINUOUS_HIDDEN: [usize; 2] = [16, 32];
/// Hidden widths of the filter network for categorical labels.
pub const CATEGORICAL_HIDDEN: [usize; 1] = [64];
/// Hidden widths of the factor network of the `Z` variant.
pub const FACTOR_HIDDEN: [usize; 1] = [32];

/// Multi-layer perceptron with ReLU between layers and a linear output.
#[derive(Clone, Debug, PartialEq)]
pub struct FilterNet {
    weights: Vec<Tensor>,
    biases: Option<Vec<Tensor>>,
}

/// Initialization scheme for the weight matrices of a [`FilterNet`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Init {
    Orthogonal,
    Glorot,
}

impl FilterNet {
    /// Layer widths are `input, hidden..., output`. Biases start at zero.
    pub fn new<R: Rng + ?Sized>(
        input: usize,
        hidden: &[usize],
        output: usize,
        bias: bool,
        init: Init,
        rng: &mut R,
    ) -> Result<Self> {
        let mut widths = vec![input];
        widths.extend_from_slice(hidden);
        widths.push(output);
        if widths.iter().any(|&w| w == 0) {
            return Err(EccError::Configuration(format!("filter network widths must be positive, got {widths:?}")));
        }
        let weights: Vec<Tensor> = widths
            .windows(2)
            .map(|w| match init {
                Init::Orthogonal => orthogonal(w[0], w[1], rng),
                Init::Glorot => glorot_uniform(w[0], w[1], rng),
            })
            .collect();
        let biases = bias.then(|| widths[1..].iter().map(|&w| Tensor::zeros(&[w])).collect());
        Ok(FilterNet { weights, biases })
    }

    /// Builds a net from explicit `[in x out]` weight matrices.
    pub fn from_weights(weights: Vec<Tensor>, biases: Option<Vec<Tensor>>) -> Result<Self> {
        if weights.is_empty() {
            return Err(EccError::Configuration("filter network needs at least one layer".into()));
        }
        for pair in weights.windows(2) {
            if pair[0].shape().len() != 2 || pair[1].shape().len() != 2 || pair[0].shape()[1] != pair[1].shape()[0] {
                return Err(EccError::dim("filter network layers", pair[0].shape(), pair[1].shape()));
            }
        }
        if let Some(b) = &biases {
            if b.len() != weights.len() || b.iter().zip(&weights).any(|(b, w)| b.len() != w.shape()[1]) {
                return Err(EccError::Configuration("filter network biases do not match layer widths".into()));
            }
        }
        Ok(FilterNet { weights, biases })
    }

    pub fn input_width(&self) -> usize {
        self.weights[0].shape()[0]
    }

    pub fn output_width(&self) -> usize {
        self.weights[self.weights.len() - 1].shape()[1]
    }

    pub fn num_layers(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[Tensor] {
        &self.weights
    }

    pub fn has_bias(&self) -> bool {
        self.biases.is_some()
    }

    /// Parameters in the order `w0, b0, w1, b1, ...` (biases omitted if absent).
    pub fn tensors(&self) -> Vec<&Tensor> {
        let mut out = Vec::new();
        for (l, w) in self.weights.iter().enumerate() {
            out.push(w);
            if let Some(b) = &self.biases {
                out.push(&b[l]);
            }
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::new();
        match &mut self.biases {
            Some(biases) => {
                for (w, b) in self.weights.iter_mut().zip(biases.iter_mut()) {
                    out.push(w);
                    out.push(b);
                }
            }
            None => out.extend(self.weights.iter_mut()),
        }
        out
    }

    pub fn names(&self, prefix: &str) -> Vec<String> {
        let mut out = Vec::new();
        for l in 0..self.weights.len() {
            out.push(format!("{prefix}.w{l}"));
            if self.biases.is_some() {
                out.push(format!("{prefix}.b{l}"));
            }
        }
        out
    }

    /// Applies the net to `input[r x input_width]` with parameters bound as
    /// `vars` (in [`FilterNet::tensors`] order).
    pub fn forward(&self, tape: &mut Tape, vars: &[Var], input: Var) -> Result<Var> {
        let step = if self.biases.is_some() { 2 } else { 1 };
        if vars.len() != step * self.weights.len() {
            return Err(EccError::contract("filter network bound with the wrong number of parameters"));
        }
        let mut h = input;
        for l in 0..self.weights.len() {
            h = tape.matmul(h, vars[step * l])?;
            if step == 2 {
                h = tape.add_bias(h, vars[2 * l + 1])?;
            }
            if l + 1 < self.weights.len() {
                h = tape.relu(h)?;
            }
        }
        Ok(h)
    }

    /// Evaluates the net outside of any training pass.
    pub fn evaluate(&self, input: &Tensor) -> Result<Tensor> {
        if input.shape().len() != 2 || input.cols() != self.input_width() {
            return Err(EccError::dim("filter network input", input.shape(), &[self.input_width()]));
        }
        let mut tape = Tape::new();
        let vars: Vec<Var> = self.tensors().into_iter().map(|t| tape.leaf(t.clone())).collect();
        let x = tape.leaf(input.clone());
        let y = self.forward(&mut tape, &vars, x)?;
        Ok(tape.value(y).clone())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Variant {
    #[default]
    Plain,
    Resnet,
    Z,
}

impl std::str::FromStr for Variant {
    type Err = EccError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "plain" => Ok(Variant::Plain),
            "resnet" => Ok(Variant::Resnet),
            "z" => Ok(Variant::Z),
            other => Err(EccError::Configuration(format!("unknown variant {other:?}, expected plain, resnet or z"))),
        }
    }
}

/// Parameters of one edge-conditioned convolution layer.
#[derive(Clone, Debug, PartialEq)]
pub struct EccParams {
    pub filter_net: FilterNet,
    pub bias: Tensor,
    pub variant: Variant,
    pub factor_net: Option<FilterNet>,
    /// `[d_in x d_out]` skip projection, applied as `X * P`.
    pub projection: Option<Tensor>,
    /// Divide the aggregate by `|N(i)|` (plain and residual variants).
    pub normalize: bool,
    d_in: usize,
    d_out: usize,
}

/// Tape handles of an [`EccParams`] bound for one pass.
#[derive(Clone, Debug)]
pub struct EccVars {
    pub filter: Vec<Var>,
    pub bias: Var,
    pub factor: Vec<Var>,
    pub projection: Option<Var>,
}

/// Which label rows the filter network is evaluated on.
#[derive(Clone, Copy, Debug)]
pub enum LabelRows<'a> {
    /// One evaluation per edge.
    PerEdge,
    /// One evaluation per distinct label.
    Distinct(&'a DistinctLabels),
}

impl EccParams {
    /// Fresh layer for labels of width `s`, orthogonally initialized filter
    /// network with the given hidden widths, zero bias.
    pub fn new<R: Rng + ?Sized>(
        s: usize,
        d_in: usize,
        d_out: usize,
        hidden: &[usize],
        variant: Variant,
        rng: &mut R,
    ) -> Result<Self> {
        let filter_net = FilterNet::new(s, hidden, d_out * d_in, true, Init::Orthogonal, rng)?;
        let factor_net = match variant {
            Variant::Z => Some(FilterNet::new(1, &FACTOR_HIDDEN, 1, true, Init::Glorot, rng)?),
            _ => None,
        };
        let projection = (variant == Variant::Resnet && d_in != d_out).then(|| glorot_uniform(d_in, d_out, rng));
        Self::from_parts(filter_net, Tensor::zeros(&[d_out]), variant, factor_net, projection, d_in, d_out)
    }

    pub fn from_parts(
        filter_net: FilterNet,
        bias: Tensor,
        variant: Variant,
        factor_net: Option<FilterNet>,
        projection: Option<Tensor>,
        d_in: usize,
        d_out: usize,
    ) -> Result<Self> {
        if filter_net.output_width() != d_in * d_out {
            return Err(EccError::dim("filter network output", &[filter_net.output_width()], &[d_out, d_in]));
        }
        if bias.len() != d_out {
            return Err(EccError::dim("ecc bias", bias.shape(), &[d_out]));
        }
        if factor_net.is_some() != (variant == Variant::Z) {
            return Err(EccError::Configuration("factor network must be present exactly for the Z variant".into()));
        }
        if let Some(z) = &factor_net {
            if z.input_width() != 1 || z.output_width() != 1 {
                return Err(EccError::Configuration("factor network must map a scalar to a scalar".into()));
            }
        }
        let needs_projection = variant == Variant::Resnet && d_in != d_out;
        match &projection {
            Some(p) if !needs_projection || p.shape() != [d_in, d_out] => {
                return Err(EccError::dim("ecc projection", p.shape(), &[d_in, d_out]));
            }
            None if needs_projection => {
                return Err(EccError::Configuration("residual layer with d_in != d_out needs a projection".into()));
            }
            _ => {}
        }
        Ok(EccParams {
            filter_net,
            bias,
            variant,
            factor_net,
            projection,
            normalize: true,
            d_in,
            d_out,
        })
    }

    pub fn d_in(&self) -> usize {
        self.d_in
    }

    pub fn d_out(&self) -> usize {
        self.d_out
    }

    pub fn label_width(&self) -> usize {
        self.filter_net.input_width()
    }

    /// Order: filter net, bias, factor net, projection.
    pub fn tensors(&self) -> Vec<&Tensor> {
        let mut out = self.filter_net.tensors();
        out.push(&self.bias);
        if let Some(z) = &self.factor_net {
            out.extend(z.tensors());
        }
        if let Some(p) = &self.projection {
            out.push(p);
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = self.filter_net.tensors_mut();
        out.push(&mut self.bias);
        if let Some(z) = &mut self.factor_net {
            out.extend(z.tensors_mut());
        }
        if let Some(p) = &mut self.projection {
            out.push(p);
        }
        out
    }

    pub fn names(&self, prefix: &str) -> Vec<String> {
        let mut out = self.filter_net.names(&format!("{prefix}.filter"));
        out.push(format!("{prefix}.bias"));
        if let Some(z) = &self.factor_net {
            out.extend(z.names(&format!("{prefix}.factor")));
        }
        if self.projection.is_some() {
            out.push(format!("{prefix}.projection"));
        }
        out
    }

    /// Splits a flat list of bound parameters (in [`EccParams::tensors`] order).
    pub fn vars_from(&self, vars: &[Var]) -> Result<EccVars> {
        let nf = self.filter_net.tensors().len();
        let nz = self.factor_net.as_ref().map_or(0, |z| z.tensors().len());
        let np = usize::from(self.projection.is_some());
        if vars.len() != nf + 1 + nz + np {
            return Err(EccError::contract("ecc layer bound with the wrong number of parameters"));
        }
        Ok(EccVars {
            filter: vars[..nf].to_vec(),
            bias: vars[nf],
            factor: vars[nf + 1..nf + 1 + nz].to_vec(),
            projection: (np == 1).then(|| vars[nf + 1 + nz]),
        })
    }

    /// Registers all tensors as trainable leaves.
    pub fn bind(&self, tape: &mut Tape) -> EccVars {
        let vars: Vec<Var> = self.tensors().into_iter().map(|t| tape.param(t.clone())).collect();
        self.vars_from(&vars).expect("own tensors")
    }

    /// Convolution on a tape. `x` is `[n x d_in]`.
    pub fn forward(&self, tape: &mut Tape, vars: &EccVars, g: &LabeledGraph, x: Var, rows: LabelRows<'_>) -> Result<Var> {
        if !g.is_finalized() {
            return Err(EccError::contract("convolution on a graph that is not finalized"));
        }
        let n = g.num_vertices();
        if tape.shape(x).len() != 2 || tape.shape(x)[0] != n || tape.value(x).cols() != self.d_in {
            return Err(EccError::dim("ecc input", tape.shape(x), &[n, self.d_in]));
        }
        if g.label_width() != self.label_width() {
            return Err(EccError::dim("edge labels", &[g.label_width()], &[self.label_width()]));
        }
        let (labels, theta_row) = match rows {
            LabelRows::PerEdge => (g.edge_labels().clone(), (0..g.num_edges()).collect()),
            LabelRows::Distinct(d) => (d.rows.clone(), d.edge_to_row.clone()),
        };
        let labels = tape.leaf(labels);
        let theta = self.filter_net.forward(tape, &vars.filter, labels)?;
        let inv_size: Vec<f64> = (0..n).map(|i| 1.0 / g.neighborhood_size(i) as f64).collect();
        let dst_scale = match (self.variant, self.normalize) {
            (Variant::Z, _) | (_, false) => vec![1.0; n],
            _ => inv_size.clone(),
        };
        let plan = Arc::new(EdgePlan {
            n_out: n,
            n_in: n,
            src: g.sources().to_vec(),
            dst: g.targets().to_vec(),
            theta_row,
            dst_scale,
        });
        let mut y = tape.edge_conv(theta, x, plan, self.d_out)?;
        if let Some(z) = &self.factor_net {
            let sizes = Tensor::new(&[n, 1], (0..n).map(|i| g.neighborhood_size(i) as f64).collect())?;
            let sizes = tape.leaf(sizes);
            let mut factor = z.forward(tape, &vars.factor, sizes)?;
            if self.normalize {
                let inv = tape.leaf(Tensor::vector(inv_size));
                factor = tape.row_scale(factor, inv)?;
            }
            y = tape.row_scale(y, factor)?;
        }
        y = tape.add_bias(y, vars.bias)?;
        if self.variant == Variant::Resnet {
            let skip = match vars.projection {
                Some(p) => tape.matmul(x, p)?,
                None => x,
            };
            y = tape.add(y, skip)?;
        }
        Ok(y)
    }
}

/// Per-edge weight matrices `[m x d_out x d_in]` for the label rows `labels[m x s]`.
pub fn generate_weights(p: &EccParams, labels: &Tensor) -> Result<Tensor> {
    let theta = p.filter_net.evaluate(labels)?;
    theta.reshape(&[labels.rows(), p.d_out, p.d_in])
}

/// Convolution evaluating the filter network once per edge.
pub fn ecc_forward(g: &LabeledGraph, x: &Tensor, p: &EccParams) -> Result<Tensor> {
    run(g, x, p, LabelRows::PerEdge)
}

/// Convolution evaluating the filter network once per row of `distinct`.
///
/// Every edge label must equal its mapped row exactly.
pub fn ecc_forward_cached(
    g: &LabeledGraph,
    x: &Tensor,
    p: &EccParams,
    distinct: &Tensor,
    edge_to_label: &[usize],
) -> Result<Tensor> {
    let m = g.num_edges();
    if edge_to_label.len() != m {
        return Err(EccError::Consistency(format!(
            "label map has {} entries for {m} edges",
            edge_to_label.len()
        )));
    }
    if distinct.shape().len() != 2 || distinct.cols() != g.label_width() {
        return Err(EccError::dim("distinct labels", distinct.shape(), &[g.label_width()]));
    }
    for (e, &r) in edge_to_label.iter().enumerate() {
        if r >= distinct.rows() {
            return Err(EccError::Index {
                what: "distinct label",
                index: r,
                len: distinct.rows(),
            });
        }
        if g.edge_labels().row(e) != distinct.row(r) {
            return Err(EccError::Consistency(format!("edge {e} label differs from distinct row {r}")));
        }
    }
    let cache = DistinctLabels {
        rows: distinct.clone(),
        edge_to_row: edge_to_label.to_vec(),
    };
    run(g, x, p, LabelRows::Distinct(&cache))
}

fn run(g: &LabeledGraph, x: &Tensor, p: &EccParams, rows: LabelRows<'_>) -> Result<Tensor> {
    let mut tape = Tape::new();
    let vars: Vec<Var> = p.tensors().into_iter().map(|t| tape.leaf(t.clone())).collect();
    let vars = p.vars_from(&vars)?;
    let xv = tape.leaf(x.clone());
    let y = p.forward(&mut tape, &vars, g, xv, rows)?;
    Ok(tape.value(y).clone())
}
