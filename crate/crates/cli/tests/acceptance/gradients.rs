//! Finite-difference checks of every tape op and every training objective.

use fsdg_core::corpus::{
    build_vocabulary, candidate_pairs, description_examples, generate_synthetic_corpus, utterance_triples,
};
use fsdg_core::fsdg::{FsdgConfig, FsdgModel, FsdgVariant};
use fsdg_core::latent::{LaedConfig, LatentConfig, LatentModel, LatentVariant};
use fsdg_core::rng::Rng;
use fsdg_core::tensor::{grad_check, Binding, OpKind, Tape, Tensor, Var};
use fsdg_core::Result;

use crate::{outcome, spec, Outcome};

pub const STEP: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-4;
const BUDGET_SECS: f64 = 120.0;

/// Forces a compile error when an op kind is added without a check below.
fn kind_name(k: &OpKind) -> &'static str {
    match k {
        OpKind::MatMul => "matmul",
        OpKind::Add => "add",
        OpKind::Sub => "sub",
        OpKind::Mul => "mul",
        OpKind::Scale(_) => "scale",
        OpKind::AddScalar(_) => "add_scalar",
        OpKind::Sigmoid => "sigmoid",
        OpKind::Tanh => "tanh",
        OpKind::Exp => "exp",
        OpKind::Log => "log",
        OpKind::Softmax => "softmax",
        OpKind::LogSoftmax => "log_softmax",
        OpKind::Gather(_) => "gather",
        OpKind::ConcatCols => "concat_cols",
        OpKind::ConcatRows => "concat_rows",
        OpKind::SliceCols { .. } => "slice_cols",
        OpKind::Reshape(_) => "reshape",
        OpKind::Sum => "sum",
        OpKind::Mean => "mean",
        OpKind::SumRows => "sum_rows",
        OpKind::SumCols => "sum_cols",
        OpKind::CrossEntropy { .. } => "cross_entropy",
        OpKind::CategoricalKl => "categorical_kl",
        OpKind::Clamp { .. } => "clamp",
        OpKind::StraightThrough(_) => "straight_through",
        OpKind::L2NormRows => "l2_norm_rows",
    }
}

const ALL_KINDS: usize = 26;

fn uniform(rng: &mut Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.uniform_range(lo, hi)).collect()).unwrap()
}

/// Values in (-1, 1) kept clear of the clamp bounds.
fn off_bounds(rng: &mut Rng, shape: &[usize], bound: f64) -> Tensor {
    let n = shape.iter().product();
    let mut v = Vec::with_capacity(n);
    while v.len() < n {
        let x = rng.uniform_range(-1.0, 1.0);
        if (x.abs() - bound).abs() > 0.01 {
            v.push(x);
        }
    }
    Tensor::new(shape, v).unwrap()
}

/// Scalar readout `sum(w * y)` with fixed, non-uniform weights, so every
/// output coordinate reaches the gradient.
fn readout(tape: &mut Tape, y: Var) -> Result<Var> {
    let shape = tape.shape(y).to_vec();
    let n: usize = shape.iter().product();
    let w = Tensor::new(&shape, (0..n).map(|i| (1.3 * i as f64 + 0.7).sin()).collect())?;
    let w = tape.constant(w);
    let p = tape.mul(y, w)?;
    Ok(tape.sum(p))
}

struct Case {
    kind: OpKind,
    label: &'static str,
    inputs: Vec<Tensor>,
}

fn op_cases(rng: &mut Rng) -> Vec<Case> {
    let mut c = Vec::new();
    let mut push = |kind: OpKind, label: &'static str, inputs: Vec<Tensor>| c.push(Case { kind, label, inputs });
    push(
        OpKind::MatMul,
        "",
        vec![uniform(rng, &[3, 4], -1.0, 1.0), uniform(rng, &[4, 2], -1.0, 1.0)],
    );
    for kind in [OpKind::Add, OpKind::Sub, OpKind::Mul] {
        push(
            kind.clone(),
            "same",
            vec![uniform(rng, &[3, 4], -1.0, 1.0), uniform(rng, &[3, 4], -1.0, 1.0)],
        );
        push(
            kind.clone(),
            "row",
            vec![uniform(rng, &[3, 4], -1.0, 1.0), uniform(rng, &[1, 4], -1.0, 1.0)],
        );
        push(
            kind.clone(),
            "col",
            vec![uniform(rng, &[3, 4], -1.0, 1.0), uniform(rng, &[3, 1], -1.0, 1.0)],
        );
        push(
            kind,
            "scalar",
            vec![uniform(rng, &[3, 4], -1.0, 1.0), uniform(rng, &[1, 1], -1.0, 1.0)],
        );
    }
    push(OpKind::Scale(-1.7), "", vec![uniform(rng, &[3, 4], -2.0, 2.0)]);
    push(OpKind::AddScalar(0.3), "", vec![uniform(rng, &[3, 4], -2.0, 2.0)]);
    push(OpKind::Sigmoid, "", vec![uniform(rng, &[3, 4], -3.0, 3.0)]);
    push(OpKind::Tanh, "", vec![uniform(rng, &[3, 4], -2.0, 2.0)]);
    push(OpKind::Exp, "", vec![uniform(rng, &[3, 4], -2.0, 2.0)]);
    push(OpKind::Log, "", vec![uniform(rng, &[3, 4], 0.3, 3.0)]);
    push(OpKind::Softmax, "", vec![uniform(rng, &[3, 5], -2.0, 2.0)]);
    push(OpKind::LogSoftmax, "", vec![uniform(rng, &[3, 5], -2.0, 2.0)]);
    push(
        OpKind::Gather(vec![2, 0, 2, 1]),
        "",
        vec![uniform(rng, &[3, 4], -1.0, 1.0)],
    );
    push(
        OpKind::ConcatCols,
        "",
        vec![uniform(rng, &[3, 2], -1.0, 1.0), uniform(rng, &[3, 3], -1.0, 1.0)],
    );
    push(
        OpKind::ConcatRows,
        "",
        vec![uniform(rng, &[2, 4], -1.0, 1.0), uniform(rng, &[1, 4], -1.0, 1.0)],
    );
    push(
        OpKind::SliceCols { start: 1, len: 2 },
        "",
        vec![uniform(rng, &[3, 4], -1.0, 1.0)],
    );
    push(OpKind::Reshape(vec![4, 3]), "", vec![uniform(rng, &[3, 4], -1.0, 1.0)]);
    push(OpKind::Sum, "", vec![uniform(rng, &[3, 4], -1.0, 1.0)]);
    push(OpKind::Mean, "", vec![uniform(rng, &[3, 4], -1.0, 1.0)]);
    push(OpKind::SumRows, "", vec![uniform(rng, &[3, 4], -1.0, 1.0)]);
    push(OpKind::SumCols, "", vec![uniform(rng, &[3, 4], -1.0, 1.0)]);
    push(
        OpKind::CrossEntropy {
            targets: vec![1, 0, 3],
            weights: vec![1.0, 0.5, 2.0],
        },
        "",
        vec![uniform(rng, &[3, 4], -2.0, 2.0)],
    );
    push(
        OpKind::CategoricalKl,
        "",
        vec![uniform(rng, &[2, 3], 0.1, 1.0), uniform(rng, &[2, 3], 0.1, 1.0)],
    );
    push(
        OpKind::Clamp { lo: -0.5, hi: 0.5 },
        "",
        vec![off_bounds(rng, &[3, 4], 0.5)],
    );
    push(
        OpKind::StraightThrough(Tensor::scalar(0.0)),
        "",
        vec![uniform(rng, &[3, 4], -1.0, 1.0)],
    );
    push(OpKind::L2NormRows, "", vec![uniform(rng, &[3, 4], -1.0, 1.0)]);
    c
}

fn check_op(case: &Case) -> Result<f64> {
    let kind = case.kind.clone();
    let report = grad_check(
        |tape, vars| {
            let y = match &kind {
                // The forward value is replaced by a hard one; handing it the
                // relaxed value itself makes the surrogate path checkable.
                OpKind::StraightThrough(_) => {
                    let hard = tape.value(vars[0]).clone();
                    tape.apply(OpKind::StraightThrough(hard), vars)?
                }
                k => tape.apply(k.clone(), vars)?,
            };
            readout(tape, y)
        },
        &case.inputs,
        STEP,
        TOLERANCE,
    )?;
    Ok(if report.finite {
        report.max_rel_err
    } else {
        f64::INFINITY
    })
}

fn tiny_latent(variant: LatentVariant, vocab: fsdg_core::corpus::Vocabulary, seed: u64) -> LatentModel {
    let cfg = LaedConfig {
        variant,
        latent: LatentConfig {
            m: 2,
            k: 3,
            straight_through: false,
            code_dim: 4,
            gaussian_dim: 3,
            ..LatentConfig::default()
        },
        embed_dim: 4,
        utt_hidden: 6,
        dec_hidden: 6,
        ctx_hidden: 5,
    };
    LatentModel::new(cfg, vocab, &mut Rng::seed(seed)).unwrap()
}

fn check_fn<F>(f: F, point: &[Tensor]) -> Result<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let r = grad_check(f, point, STEP, TOLERANCE)?;
    Ok(if r.finite { r.max_rel_err } else { f64::INFINITY })
}

/// (objective, worst relative error, parameter count)
fn composite_losses() -> Result<Vec<(String, f64, usize)>> {
    let corpus = generate_synthetic_corpus(
        &spec(include_str!("../../../../fixtures/toy_spec.json")),
        &mut Rng::seed(4),
    )?;
    let mut out = Vec::new();

    let triples = utterance_triples(&corpus.transfer);
    let vocab = build_vocabulary(&[&corpus.transfer], 1)?;
    for variant in [LatentVariant::DiVae, LatentVariant::DiVst, LatentVariant::Vae] {
        let model = tiny_latent(variant, vocab.clone(), 3);
        let batch = model.batch_from_triples(&triples[..3]);
        let noise = model.sample_noise(3, &mut Rng::seed(5));
        let err = check_fn(
            |tape, vars| {
                let p = Binding::from_vars(vars.to_vec(), true);
                Ok(model.loss(tape, &p, &batch, &noise, 0.8)?.total)
            },
            model.params.values(),
        )?;
        out.push((format!("{variant:?} objective"), err, model.params.len()));
    }

    let target = &corpus.targets[0].train;
    let source = &corpus.source;
    let gen_vocab = build_vocabulary(&[source, target], 1)?;
    let pairs = candidate_pairs(target);
    let latent_vocab = build_vocabulary(&[&corpus.transfer], 1)?;
    for variant in [FsdgVariant::Fsdg, FsdgVariant::FsdgVae, FsdgVariant::FsdgLaed] {
        let aux: Vec<LatentModel> = variant
            .auxiliary()
            .iter()
            .enumerate()
            .map(|(i, &v)| tiny_latent(v, latent_vocab.clone(), 20 + i as u64))
            .collect();
        let cfg = FsdgConfig {
            variant,
            embed_dim: 4,
            utt_hidden: 6,
            ctx_hidden: 7,
            dec_hidden: 5,
            lambda: 0.7,
            fine_tune_latent: true,
        };
        let model = FsdgModel::new(cfg, gen_vocab.clone(), aux, &mut Rng::seed(6))?;
        let enc = model.encode_examples(&pairs[..3])?;
        let refs: Vec<_> = enc.iter().collect();
        let sizes: Vec<usize> = std::iter::once(model.params.len())
            .chain(model.aux.iter().map(|m| m.params.len()))
            .collect();
        let mut point: Vec<Tensor> = model.params.values().to_vec();
        for m in &model.aux {
            point.extend_from_slice(m.params.values());
        }
        let err = check_fn(
            |tape, vars| {
                let mut rest = vars;
                let mut bindings = Vec::new();
                for &n in &sizes {
                    let (head, tail) = rest.split_at(n);
                    bindings.push(Binding::from_vars(head.to_vec(), true));
                    rest = tail;
                }
                let p = bindings.remove(0);
                Ok(model.dialogue_loss(tape, &p, &bindings, &refs)?.total)
            },
            &point,
        )?;
        out.push((format!("{} dialogue loss", variant.name()), err, point.len()));

        if variant == FsdgVariant::Fsdg {
            let (descs, _) = description_examples(source);
            let denc = model.encode_descriptions(&descs[..3])?;
            let drefs: Vec<_> = denc.iter().collect();
            let err = check_fn(
                |tape, vars| {
                    let p = Binding::from_vars(vars.to_vec(), true);
                    Ok(model.domain_description_loss(tape, &p, &drefs)?.total)
                },
                model.params.values(),
            )?;
            out.push(("domain-description loss".into(), err, model.params.len()));
        }
    }
    Ok(out)
}

pub fn criterion() -> Outcome {
    let t = std::time::Instant::now();
    let mut rng = Rng::seed(17);
    let cases = op_cases(&mut rng);
    let mut kinds = std::collections::BTreeSet::new();
    let mut worst_op = ("", 0.0f64);
    let mut failures = Vec::new();
    for case in &cases {
        let name = kind_name(&case.kind);
        kinds.insert(name);
        match check_op(case) {
            Ok(e) => {
                if e > worst_op.1 {
                    worst_op = (name, e);
                }
                if !(e <= TOLERANCE) {
                    failures.push(format!("{name}/{} {e:.1e}", case.label));
                }
            }
            Err(e) => failures.push(format!("{name}: {e}")),
        }
    }
    let losses = match composite_losses() {
        Ok(l) => l,
        Err(e) => return outcome(false, format!("composite setup failed: {e}")),
    };
    let mut worst_loss = (String::new(), 0.0f64);
    for (name, e, _) in &losses {
        if *e > worst_loss.1 {
            worst_loss = (name.clone(), *e);
        }
        if !(*e <= TOLERANCE) {
            failures.push(format!("{name} {e:.1e}"));
        }
    }
    let secs = t.elapsed().as_secs_f64();
    let params: Vec<String> = losses.iter().map(|(n, _, p)| format!("{n} ({p} tensors)")).collect();
    let pass = failures.is_empty() && kinds.len() == ALL_KINDS && secs < BUDGET_SECS;
    outcome(
        pass,
        format!(
            "{} op kinds over {} cases, worst {} {:.1e}; objectives: {}; worst {} {:.1e}; tolerance {TOLERANCE:.0e}, {secs:.0}s{}",
            kinds.len(),
            cases.len(),
            worst_op.0,
            worst_op.1,
            params.join(", "),
            worst_loss.0,
            worst_loss.1,
            if failures.is_empty() { String::new() } else { format!("; failed: {}", failures.join(", ")) }
        ),
    )
}
