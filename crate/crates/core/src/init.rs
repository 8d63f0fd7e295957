//! Parameter initializers.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};

use crate::tensor::Tensor;

/// `[fan_in x fan_out]` matrix uniform in `±sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_uniform<R: Rng + ?Sized>(fan_in: usize, fan_out: usize, rng: &mut R) -> Tensor {
    let bound = (6.0 / (fan_in + fan_out).max(1) as f64).sqrt();
    let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
    let data = (0..fan_in * fan_out).map(|_| dist.sample(rng)).collect();
    Tensor::new(&[fan_in, fan_out], data).expect("sized")
}

/// `[rows x cols]` matrix with orthonormal columns (if `rows >= cols`) or
/// orthonormal rows (otherwise), from the QR factorization of a Gaussian
/// matrix with the signs fixed so that `R` has a positive diagonal.
pub fn orthogonal<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Tensor {
    let (tall, short) = (rows.max(cols), rows.min(cols));
    let mut q: Vec<Vec<f64>> = Vec::with_capacity(short);
    while q.len() < short {
        let mut v: Vec<f64> = (0..tall).map(|_| StandardNormal.sample(rng)).collect();
        // Modified Gram-Schmidt, run twice for numerical orthogonality.
        for _ in 0..2 {
            for u in &q {
                let r: f64 = u.iter().zip(&v).map(|(a, b)| a * b).sum();
                v.iter_mut().zip(u).for_each(|(x, a)| *x -= r * a);
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        // Dividing by the positive norm is exactly the positive-diagonal-R
        // convention; a degenerate draw is simply redrawn.
        if norm > 1e-10 {
            q.push(v.into_iter().map(|x| x / norm).collect());
        }
    }
    let mut data = vec![0.0; rows * cols];
    for (c, col) in q.iter().enumerate() {
        for (r, &value) in col.iter().enumerate() {
            if rows >= cols {
                data[r * cols + c] = value;
            } else {
                data[c * cols + r] = value;
            }
        }
    }
    Tensor::new(&[rows, cols], data).expect("sized")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn gram(t: &Tensor, by_cols: bool) -> Tensor {
        if by_cols {
            t.transpose().unwrap().matmul(t).unwrap()
        } else {
            t.matmul(&t.transpose().unwrap()).unwrap()
        }
    }

    #[test]
    fn orthogonal_tall_and_wide() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let tall = orthogonal(40, 6, &mut rng);
        assert!(gram(&tall, true).max_abs_diff(&Tensor::eye(6)) < 1e-12);
        let wide = orthogonal(5, 64, &mut rng);
        assert!(gram(&wide, false).max_abs_diff(&Tensor::eye(5)) < 1e-12);
    }

    #[test]
    fn glorot_within_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let w = glorot_uniform(10, 20, &mut rng);
        let bound = (6.0f64 / 30.0).sqrt();
        assert!(w.data().iter().all(|v| v.abs() <= bound));
    }
}
