use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::{kernels, Precision, Tape, Tensor, Var};

/// Standard Gumbel noise of the given shape.
pub fn gumbel_noise(rng: &mut Rng, rows: usize, cols: usize) -> Tensor {
    Tensor::matrix(rows, cols, (0..rows * cols).map(|_| rng.gumbel()).collect())
}

/// Row-wise one-hot of `argmax(x)`, ties to the lowest index.
pub fn one_hot_argmax(x: &Tensor) -> Tensor {
    let (m, n) = x.dims2();
    let mut out = vec![0.0; m * n];
    for r in 0..m {
        out[r * n + kernels::argmax(x.row_slice(r))] = 1.0;
    }
    Tensor::matrix(m, n, out)
}

/// `softmax((logits + g) / tau)` row-wise. With `straight_through` the
/// forward value is the hard one-hot of `argmax(logits + g)` while gradients
/// follow the relaxed sample. Also returns the hard one-hot.
pub fn gumbel_softmax_sample(
    tape: &mut Tape,
    logits: Var,
    noise: &Tensor,
    tau: f64,
    straight_through: bool,
) -> Result<(Var, Tensor)> {
    if !(tau > 0.0) {
        return Err(Error::invalid(format!(
            "Gumbel temperature must be positive, got {tau}"
        )));
    }
    let g = tape.constant(noise.clone());
    let perturbed = tape.add(logits, g)?;
    let hard = one_hot_argmax(tape.value(perturbed));
    let scaled = tape.scale(perturbed, 1.0 / tau);
    let relaxed = tape.softmax(scaled);
    let y = if straight_through {
        tape.straight_through(relaxed, hard.clone())?
    } else {
        relaxed
    };
    Ok((y, hard))
}

fn check_layout(tape: &Tape, probs: Var, m: usize, k: usize) -> Result<usize> {
    let (rows, cols) = tape.value(probs).dims2();
    if cols != k || m == 0 || rows == 0 || rows % m != 0 {
        return Err(Error::shape("posterior layout", tape.shape(probs), &[m, k]));
    }
    Ok(rows / m)
}

/// Batch-average posterior `q(z)` as `[m, k]`, from posteriors laid out as
/// `[batch * m, k]` (row `b * m + i` is variable `i` of example `b`).
pub fn aggregate_posterior(tape: &mut Tape, probs: Var, m: usize, k: usize) -> Result<Var> {
    let b = check_layout(tape, probs, m, k)?;
    let wide = tape.reshape(probs, &[b, m * k])?;
    let s = tape.sum_rows(wide);
    let s = tape.scale(s, 1.0 / b as f64);
    tape.reshape(s, &[m, k])
}

/// `sum_i KL(q(z_i) || uniform)` with `q` the batch-average posterior.
pub fn aggregate_posterior_kl(tape: &mut Tape, probs: Var, m: usize, k: usize) -> Result<Var> {
    let q = aggregate_posterior(tape, probs, m, k)?;
    let prior = tape.constant(Tensor::filled(&[m, k], 1.0 / k as f64));
    tape.categorical_kl(q, prior)
}

/// Batch mean of `sum_i KL(q(z_i|x) || q(z_i))`.
pub fn mutual_information(tape: &mut Tape, probs: Var, m: usize, k: usize) -> Result<Var> {
    let b = check_layout(tape, probs, m, k)?;
    let q = aggregate_posterior(tape, probs, m, k)?;
    let ids: Vec<usize> = (0..b * m).map(|r| r % m).collect();
    let tiled = tape.gather(q, &ids)?;
    let kl = tape.categorical_kl(probs, tiled)?;
    Ok(tape.scale(kl, 1.0 / b as f64))
}

/// `sum 0.5 (mu^2 + exp(logvar) - 1 - logvar)` over every entry.
pub fn gaussian_kl(tape: &mut Tape, mu: Var, logvar: Var) -> Result<Var> {
    let mu2 = tape.mul(mu, mu)?;
    let var = tape.exp(logvar);
    let a = tape.add(mu2, var)?;
    let a = tape.sub(a, logvar)?;
    let a = tape.add_scalar(a, -1.0);
    let s = tape.sum(a);
    Ok(tape.scale(s, 0.5))
}

/// Value-only diagnostics for a posterior table laid out as in
/// [`aggregate_posterior`]: `(aggregate KL, mutual information)`.
pub fn posterior_diagnostics(probs: &Tensor, m: usize, k: usize) -> Result<(f64, f64)> {
    let mut tape = Tape::with_precision(Precision::F64);
    let p = tape.constant(probs.clone());
    let kl = aggregate_posterior_kl(&mut tape, p, m, k)?;
    let mi = mutual_information(&mut tape, p, m, k)?;
    Ok((tape.value(kl).item(), tape.value(mi).item()))
}
