use super::{Precision, Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Gradients smaller than this are compared in absolute rather than relative terms.
pub const DENOM_FLOOR: f64 = 1e-5;

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub analytic: Vec<Tensor>,
    pub numeric: Vec<Tensor>,
    /// `max |a - n| / max(|a|, |n|, DENOM_FLOOR)` over all coordinates.
    pub max_rel_err: f64,
    pub finite: bool,
    pub passed: bool,
}

/// Compare tape gradients of a scalar function against central differences.
///
/// `f` builds the function on a fresh 64-bit tape from one variable per
/// entry of `point`. It is evaluated `2 * numel + 1` times.
pub fn grad_check<F>(f: F, point: &[Tensor], h: f64, tolerance: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    if h <= 0.0 || !h.is_finite() {
        return Err(Error::invalid(format!("grad_check: step must be positive, got {h}")));
    }
    let mut tape = Tape::with_precision(Precision::F64);
    let vars: Vec<Var> = point.iter().map(|t| tape.leaf(t.clone())).collect();
    let out = f(&mut tape, &vars)?;
    let base = tape.value(out).clone();
    tape.backward(out)?;
    let analytic: Vec<Tensor> = vars
        .iter()
        .map(|&v| tape.grad(v).unwrap_or_else(|| Tensor::zeros(tape.shape(v))))
        .collect();

    let eval = |inputs: &[Tensor]| -> Result<f64> {
        let mut t = Tape::with_precision(Precision::F64);
        let vs: Vec<Var> = inputs.iter().map(|x| t.constant(x.clone())).collect();
        let o = f(&mut t, &vs)?;
        Ok(t.value(o).item())
    };

    let mut numeric = Vec::with_capacity(point.len());
    let mut work: Vec<Tensor> = point.to_vec();
    for i in 0..point.len() {
        let mut g = vec![0.0; point[i].numel()];
        for (j, gj) in g.iter_mut().enumerate() {
            let orig = point[i].data()[j];
            work[i].data_mut()[j] = orig + h;
            let fp = eval(&work)?;
            work[i].data_mut()[j] = orig - h;
            let fm = eval(&work)?;
            work[i].data_mut()[j] = orig;
            *gj = (fp - fm) / (2.0 * h);
        }
        numeric.push(Tensor::new(point[i].shape(), g)?);
    }

    let finite = base.is_finite()
        && point.iter().all(Tensor::is_finite)
        && analytic.iter().all(Tensor::is_finite)
        && numeric.iter().all(Tensor::is_finite);
    let max_rel_err = analytic
        .iter()
        .zip(&numeric)
        .flat_map(|(a, n)| a.data().iter().zip(n.data()))
        .map(|(&a, &n)| (a - n).abs() / a.abs().max(n.abs()).max(DENOM_FLOOR))
        .fold(0.0, f64::max);
    let max_rel_err = if finite { max_rel_err } else { f64::INFINITY };
    Ok(GradCheckReport {
        analytic,
        numeric,
        max_rel_err,
        finite,
        passed: finite && max_rel_err <= tolerance,
    })
}
