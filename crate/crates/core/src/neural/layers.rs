use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::{Binding, ParamId, ParamSet, Tape, Tensor, Var};

/// Init range for recurrent weights.
pub const RECURRENT_INIT: f64 = 0.08;
pub const EMBED_INIT: f64 = 1.0;

/// Affine map `x W + b`.
#[derive(Clone, Debug)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
    pub input: usize,
    pub output: usize,
}

impl Linear {
    pub fn new(params: &mut ParamSet, name: &str, input: usize, output: usize, rng: &mut Rng) -> Self {
        let w = params.add_scaled_normal(format!("{name}.w"), &[input, output], rng);
        let b = params.add_zeros(format!("{name}.b"), &[1, output]);
        Self { w, b, input, output }
    }

    /// Like [`Linear::new`] but with the first `zero_rows` input rows of the
    /// weight set to zero. The remaining rows consume exactly the random draws
    /// a `Linear` of input width `input - zero_rows` would.
    pub fn with_zero_prefix(
        params: &mut ParamSet,
        name: &str,
        input: usize,
        output: usize,
        zero_rows: usize,
        rng: &mut Rng,
    ) -> Self {
        assert!(zero_rows < input);
        let live = input - zero_rows;
        let std = 1.0 / (live as f64).sqrt();
        let mut data = vec![0.0; zero_rows * output];
        data.extend((0..live * output).map(|_| rng.normal() * std));
        let w = params.add(format!("{name}.w"), Tensor::matrix(input, output, data));
        let b = params.add_zeros(format!("{name}.b"), &[1, output]);
        Self { w, b, input, output }
    }

    pub fn forward(&self, tape: &mut Tape, p: &Binding, x: Var) -> Result<Var> {
        let y = tape.matmul(x, p[self.w])?;
        tape.add(y, p[self.b])
    }
}

#[derive(Clone, Debug)]
pub struct Embedding {
    pub table: ParamId,
    pub vocab: usize,
    pub dim: usize,
}

impl Embedding {
    pub fn new(params: &mut ParamSet, name: &str, vocab: usize, dim: usize, rng: &mut Rng) -> Self {
        let table = params.add_uniform(format!("{name}.table"), &[vocab, dim], EMBED_INIT, rng);
        Self { table, vocab, dim }
    }

    /// `[ids.len(), dim]` rows of the table.
    pub fn lookup(&self, tape: &mut Tape, p: &Binding, ids: &[usize]) -> Result<Var> {
        if let Some(&bad) = ids.iter().find(|&&i| i >= self.vocab) {
            return Err(Error::Index {
                what: "vocabulary",
                index: bad,
                size: self.vocab,
            });
        }
        tape.gather(p[self.table], ids)
    }
}

#[derive(Clone, Debug)]
pub struct LstmCell {
    pub w_x: ParamId,
    pub w_h: ParamId,
    pub b: ParamId,
    pub input: usize,
    pub hidden: usize,
}

impl LstmCell {
    pub fn new(params: &mut ParamSet, name: &str, input: usize, hidden: usize, rng: &mut Rng) -> Self {
        let w_x = params.add_uniform(format!("{name}.w_x"), &[input, 4 * hidden], RECURRENT_INIT, rng);
        let w_h = params.add_uniform(format!("{name}.w_h"), &[hidden, 4 * hidden], RECURRENT_INIT, rng);
        let b = params.add_uniform(format!("{name}.b"), &[1, 4 * hidden], RECURRENT_INIT, rng);
        Self {
            w_x,
            w_h,
            b,
            input,
            hidden,
        }
    }

    /// One step; gate order is input, forget, candidate, output.
    pub fn step(&self, tape: &mut Tape, p: &Binding, x: Var, h: Var, c: Var) -> Result<(Var, Var)> {
        let hs = self.hidden;
        let gx = tape.matmul(x, p[self.w_x])?;
        let gh = tape.matmul(h, p[self.w_h])?;
        let g = tape.add(gx, gh)?;
        let g = tape.add(g, p[self.b])?;
        let i = tape.slice_cols(g, 0, hs)?;
        let f = tape.slice_cols(g, hs, hs)?;
        let cand = tape.slice_cols(g, 2 * hs, hs)?;
        let o = tape.slice_cols(g, 3 * hs, hs)?;
        let (i, f, cand, o) = (tape.sigmoid(i), tape.sigmoid(f), tape.tanh(cand), tape.sigmoid(o));
        let fc = tape.mul(f, c)?;
        let ig = tape.mul(i, cand)?;
        let c_new = tape.add(fc, ig)?;
        let tc = tape.tanh(c_new);
        let h_new = tape.mul(o, tc)?;
        Ok((h_new, c_new))
    }
}

#[derive(Clone, Debug)]
pub struct GruCell {
    pub w_x: ParamId,
    pub w_h: ParamId,
    pub b_x: ParamId,
    pub b_h: ParamId,
    pub input: usize,
    pub hidden: usize,
}

impl GruCell {
    pub fn new(params: &mut ParamSet, name: &str, input: usize, hidden: usize, rng: &mut Rng) -> Self {
        let w_x = params.add_uniform(format!("{name}.w_x"), &[input, 3 * hidden], RECURRENT_INIT, rng);
        let w_h = params.add_uniform(format!("{name}.w_h"), &[hidden, 3 * hidden], RECURRENT_INIT, rng);
        let b_x = params.add_uniform(format!("{name}.b_x"), &[1, 3 * hidden], RECURRENT_INIT, rng);
        let b_h = params.add_uniform(format!("{name}.b_h"), &[1, 3 * hidden], RECURRENT_INIT, rng);
        Self {
            w_x,
            w_h,
            b_x,
            b_h,
            input,
            hidden,
        }
    }

    /// `h' = (1 - z) * n + z * h` with reset gate applied to the recurrent candidate term.
    pub fn step(&self, tape: &mut Tape, p: &Binding, x: Var, h: Var) -> Result<Var> {
        let hs = self.hidden;
        let xs = tape.matmul(x, p[self.w_x])?;
        let xs = tape.add(xs, p[self.b_x])?;
        let hh = tape.matmul(h, p[self.w_h])?;
        let hh = tape.add(hh, p[self.b_h])?;
        let (xr, xz, xn) = (
            tape.slice_cols(xs, 0, hs)?,
            tape.slice_cols(xs, hs, hs)?,
            tape.slice_cols(xs, 2 * hs, hs)?,
        );
        let (hr, hz, hn) = (
            tape.slice_cols(hh, 0, hs)?,
            tape.slice_cols(hh, hs, hs)?,
            tape.slice_cols(hh, 2 * hs, hs)?,
        );
        let r = tape.add(xr, hr)?;
        let r = tape.sigmoid(r);
        let z = tape.add(xz, hz)?;
        let z = tape.sigmoid(z);
        let rn = tape.mul(r, hn)?;
        let n = tape.add(xn, rn)?;
        let n = tape.tanh(n);
        let d = tape.sub(h, n)?;
        let zd = tape.mul(z, d)?;
        tape.add(n, zd)
    }
}

/// `old + mask * (new - old)`; rows with mask 0 keep their previous state.
pub fn masked_update(tape: &mut Tape, old: Var, new: Var, mask: Option<&Tensor>) -> Result<Var> {
    match mask {
        None => Ok(new),
        Some(m) => {
            let mv = tape.constant(m.clone());
            let d = tape.sub(new, old)?;
            let md = tape.mul(d, mv)?;
            tape.add(old, md)
        }
    }
}
