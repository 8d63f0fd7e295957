//! Central finite-difference checks of tape gradients.

use crate::error::{EccError, Result};
use crate::tensor::{Tape, Tensor, Var};

/// Worst disagreement between analytic and numeric gradients.
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheck {
    /// `|a - n| / max(|a|, |n|, floor)` maximized over all checked entries.
    pub max_rel_error: f64,
    /// `(parameter, flat entry)` of the maximum.
    pub worst: Option<(usize, usize)>,
    pub checked: usize,
}

/// Denominator floor of the relative error.
pub const REL_FLOOR: f64 = 1e-4;

/// Compares the gradient of the scalar `f` with respect to every entry of
/// `params` against `(f(p + h) - f(p - h)) / 2h`.
pub fn check_gradients<F>(params: &[Tensor], h: f64, f: F) -> Result<GradCheck>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let eval = |ps: &[Tensor]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = ps.iter().map(|p| tape.leaf(p.clone())).collect();
        let out = f(&mut tape, &vars)?;
        Ok(tape.value(out).item())
    };
    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|p| tape.param(p.clone())).collect();
    let out = f(&mut tape, &vars)?;
    if !tape.value(out).is_scalar() {
        return Err(EccError::contract("gradient check needs a scalar function"));
    }
    let grads = tape.backward(out)?;
    let mut report = GradCheck {
        max_rel_error: 0.0,
        worst: None,
        checked: 0,
    };
    let mut work: Vec<Tensor> = params.to_vec();
    for (k, v) in vars.iter().enumerate() {
        let analytic = grads.get(*v).cloned().unwrap_or_else(|| Tensor::zeros(params[k].shape()));
        for e in 0..params[k].len() {
            let x = params[k].data()[e];
            work[k].data_mut()[e] = x + h;
            let up = eval(&work)?;
            work[k].data_mut()[e] = x - h;
            let down = eval(&work)?;
            work[k].data_mut()[e] = x;
            let n = (up - down) / (2.0 * h);
            let a = analytic.data()[e];
            let rel = (a - n).abs() / a.abs().max(n.abs()).max(REL_FLOOR);
            if rel > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = rel.max(report.max_rel_error);
                report.worst = Some((k, e));
            }
            report.checked += 1;
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_form() {
        let a = Tensor::from_rows(&[vec![1.0, 2.0], vec![-0.5, 3.0]]).unwrap();
        let x = Tensor::new(&[2, 1], vec![0.3, -0.7]).unwrap();
        let r = check_gradients(&[a, x], 1e-6, |t, v| {
            let y = t.matmul(v[0], v[1])?;
            let sq = t.mul(y, y)?;
            t.sum(sq)
        })
        .unwrap();
        assert_eq!(r.checked, 6);
        assert!(r.max_rel_error < 1e-7, "{r:?}");
    }
}
