//! Regular grids as graphs, and direct correlation as a reference.
//!
//! A grid vertex receives an edge from every vertex inside a centered window.
//! The edge label is the one-hot encoding of the window offset, so a
//! single-layer bias-free filter network turns into a lookup table of kernel
//! taps and the convolution reduces to ordinary correlation.

use rand::Rng;

use crate::ecc::{ecc_forward, EccParams, FilterNet, Variant};
use crate::error::{EccError, Result};
use crate::graph::LabeledGraph;
use crate::tensor::Tensor;

fn check_window(w: usize) -> Result<usize> {
    if w == 0 || w % 2 == 0 {
        return Err(EccError::contract(format!("window size must be odd, got {w}")));
    }
    Ok(w / 2)
}

/// 1D chain with one one-hot offset label per edge. `signal` is `[n x d]`.
pub fn chain_graph(signal: &Tensor, window: usize) -> Result<LabeledGraph> {
    image_graph(signal, 1, signal.rows(), 1, window)
}

/// `height x width` grid in row-major vertex order with a `kh x kw` window.
/// `signal` is `[height*width x d]`.
pub fn image_graph(signal: &Tensor, height: usize, width: usize, kh: usize, kw: usize) -> Result<LabeledGraph> {
    let (hy, hx) = (check_window(kh)?, check_window(kw)?);
    let n = height * width;
    let s = kh * kw;
    let mut edges = Vec::new();
    let mut labels = Vec::new();
    for y in 0..height {
        for x in 0..width {
            let i = y * width + x;
            for dy in 0..kh {
                for dx in 0..kw {
                    let (sy, sx) = ((y + dy).wrapping_sub(hy), (x + dx).wrapping_sub(hx));
                    if sy >= height || sx >= width {
                        continue;
                    }
                    edges.push((sy * width + sx, i));
                    let mut one_hot = vec![0.0; s];
                    one_hot[dy * kw + dx] = 1.0;
                    labels.extend(one_hot);
                }
            }
        }
    }
    let m = edges.len();
    let mut center = vec![0.0; s];
    center[hy * kw + hx] = 1.0;
    LabeledGraph::new(n, &edges, Tensor::new(&[m, s], labels)?, signal.clone())?.finalize(&center)
}

/// Single-channel layer whose single-layer bias-free filter network maps
/// the one-hot offset `t` to `kernel[t]` (kernel flattened row-major).
pub fn kernel_layer(kernel: &[f64], normalize: bool) -> Result<EccParams> {
    let w = Tensor::new(&[kernel.len(), 1], kernel.to_vec())?;
    let net = FilterNet::from_weights(vec![w], None)?;
    let mut p = EccParams::from_parts(net, Tensor::zeros(&[1]), Variant::Plain, None, None, 1, 1)?;
    p.normalize = normalize;
    Ok(p)
}

/// Zero-padded correlation of a 1D signal with a centered odd kernel.
pub fn grid_oracle_1d(signal: &[f64], kernel: &[f64]) -> Result<Vec<f64>> {
    let img = Tensor::new(&[1, signal.len()], signal.to_vec())?;
    let k = Tensor::new(&[1, kernel.len()], kernel.to_vec())?;
    Ok(grid_oracle_2d(&img, &k)?.into_data())
}

/// Zero-padded correlation of an image `[h x w]` with a centered odd
/// kernel `[kh x kw]`.
pub fn grid_oracle_2d(image: &Tensor, kernel: &Tensor) -> Result<Tensor> {
    if image.shape().len() != 2 || kernel.shape().len() != 2 {
        return Err(EccError::contract("grid oracle expects matrices"));
    }
    let (h, w) = (image.shape()[0], image.shape()[1]);
    let (kh, kw) = (kernel.shape()[0], kernel.shape()[1]);
    let (hy, hx) = (check_window(kh)?, check_window(kw)?);
    let mut out = Tensor::zeros(&[h, w]);
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for dy in 0..kh {
                for dx in 0..kw {
                    let (sy, sx) = ((y + dy).wrapping_sub(hy), (x + dx).wrapping_sub(hx));
                    if sy < h && sx < w {
                        acc += kernel.get(&[dy, dx]) * image.get(&[sy, sx]);
                    }
                }
            }
            out.data_mut()[y * w + x] = acc;
        }
    }
    Ok(out)
}

/// Outcome of [`equivalence_suite`].
#[derive(Clone, Debug, PartialEq)]
pub struct SuiteReport {
    pub cases: usize,
    /// Largest absolute difference on interior vertices.
    pub max_error: f64,
}

/// Random signal/kernel pairs cycling through 1D chains with windows 3 and
/// 5 and 9x9 images with 3x3 windows; ECC with one-hot offset labels versus
/// direct correlation on vertices whose window lies inside the grid.
pub fn equivalence_suite<R: Rng + ?Sized>(cases: usize, rng: &mut R) -> Result<SuiteReport> {
    let mut max_error = 0.0f64;
    for c in 0..cases {
        let (h, w, kh, kw) = match c % 3 {
            0 => (1, rng.random_range(8..32), 1, 3),
            1 => (1, rng.random_range(8..32), 1, 5),
            _ => (9, 9, 3, 3),
        };
        let image = Tensor::new(&[h, w], (0..h * w).map(|_| rng.random_range(-1.0..1.0)).collect())?;
        let kernel = Tensor::new(&[kh, kw], (0..kh * kw).map(|_| rng.random_range(-1.0..1.0)).collect())?;
        let g = image_graph(&image.clone().reshape(&[h * w, 1])?, h, w, kh, kw)?;
        let y = ecc_forward(&g, g.vertex_signal(), &kernel_layer(kernel.data(), false)?)?;
        let expect = grid_oracle_2d(&image, &kernel)?;
        let (hy, hx) = (kh / 2, kw / 2);
        for y0 in hy..h - hy {
            for x0 in hx..w - hx {
                let k = y0 * w + x0;
                max_error = max_error.max((y.data()[k] - expect.data()[k]).abs());
            }
        }
    }
    Ok(SuiteReport { cases, max_error })
}
