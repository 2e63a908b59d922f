//! Central finite-difference verification of the reverse-mode kernel.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::tensor::{AttnMask, KernelError, Tape, Tensor, Var};

/// Compares reverse-mode gradients against central differences for every
/// element of every parameter. Returns the maximum relative error, with
/// `rel = |a - n| / max(|a|, |n|, 1)`.
pub fn max_rel_error<F>(build: F, params: &[Tensor], eps: f64) -> Result<f64, KernelError>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var, KernelError>,
{
    let eval = |inputs: &[Tensor]| -> Result<f64, KernelError> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
        let loss = build(&mut tape, &vars)?;
        Ok(tape.value(loss).item())
    };

    // analytic gradients
    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|t| tape.leaf(t.clone())).collect();
    let loss = build(&mut tape, &vars)?;
    tape.backward(loss)?;
    let analytic: Vec<Vec<f64>> = vars.iter().map(|v| tape.grad(*v).data.clone()).collect();

    let mut worst = 0.0f64;
    let mut work: Vec<Tensor> = params.to_vec();
    for (pi, param) in params.iter().enumerate() {
        for ei in 0..param.numel() {
            work[pi].data[ei] = param.data[ei] + eps;
            let plus = eval(&work)?;
            work[pi].data[ei] = param.data[ei] - eps;
            let minus = eval(&work)?;
            work[pi].data[ei] = param.data[ei];
            let numeric = (plus - minus) / (2.0 * eps);
            let a = analytic[pi][ei];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1.0);
            worst = worst.max(rel);
        }
    }
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub max_rel_error: f64,
    pub threshold: f64,
}

impl CheckResult {
    pub fn passed(&self) -> bool {
        self.max_rel_error <= self.threshold
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Gradient checks for every differentiable op and for composed blocks, at
/// the tolerances the kernel is required to meet.
pub fn run_standard_suite(eps: f64) -> Result<Vec<CheckResult>, KernelError> {
    let mut out = Vec::new();

    // pure linear layer: exact up to roundoff
    {
        let mut r = rng(1);
        let x = Tensor::uniform(4, 6, 1.0, &mut r);
        let w = Tensor::uniform(6, 3, 1.0, &mut r);
        let b = Tensor::uniform(1, 3, 1.0, &mut r);
        let err = max_rel_error(
            |tape, vars| {
                let y = tape.matmul(vars[0], vars[1])?;
                let y = tape.add_row(y, vars[2])?;
                tape.cross_entropy(y, &[Some(0), Some(2), Some(1), Some(0)])
            },
            &[x, w, b],
            eps,
        )?;
        out.push(CheckResult { name: "linear", max_rel_error: err, threshold: 1e-6 });
    }

    // fused softmax + NLL
    {
        let mut r = rng(2);
        let x = Tensor::uniform(5, 7, 2.0, &mut r);
        let err = max_rel_error(
            |tape, vars| tape.cross_entropy(vars[0], &[Some(3), None, Some(0), Some(6), Some(2)]),
            &[x],
            eps,
        )?;
        out.push(CheckResult { name: "softmax-nll", max_rel_error: err, threshold: 1e-5 });
    }

    // standalone softmax feeding a loss
    {
        let mut r = rng(3);
        let x = Tensor::uniform(3, 5, 1.5, &mut r);
        let w = Tensor::uniform(5, 4, 1.0, &mut r);
        let err = max_rel_error(
            |tape, vars| {
                let p = tape.softmax_rows(vars[0]);
                let y = tape.matmul(p, vars[1])?;
                tape.cross_entropy(y, &[Some(0), Some(3), Some(1)])
            },
            &[x, w],
            eps,
        )?;
        out.push(CheckResult { name: "softmax", max_rel_error: err, threshold: 1e-4 });
    }

    // embedding sum (token + counter tables)
    {
        let mut r = rng(4);
        let table_a = Tensor::uniform(10, 6, 1.0, &mut r);
        let table_b = Tensor::uniform(4, 6, 1.0, &mut r);
        let w = Tensor::uniform(6, 5, 1.0, &mut r);
        let err = max_rel_error(
            |tape, vars| {
                let a = tape.embedding(vars[0], &[1, 7, 7, 0])?;
                let b = tape.embedding(vars[1], &[0, 1, 2, 3])?;
                let x = tape.add(a, b)?;
                let y = tape.matmul(x, vars[2])?;
                tape.cross_entropy(y, &[Some(0), Some(1), Some(4), Some(2)])
            },
            &[table_a, table_b, w],
            eps,
        )?;
        out.push(CheckResult { name: "embedding-sum", max_rel_error: err, threshold: 1e-4 });
    }

    // layer norm with affine parameters
    {
        let mut r = rng(5);
        let x = Tensor::uniform(4, 8, 1.0, &mut r);
        let g = Tensor::uniform(1, 8, 1.0, &mut r);
        let b = Tensor::uniform(1, 8, 0.5, &mut r);
        let w = Tensor::uniform(8, 3, 1.0, &mut r);
        let err = max_rel_error(
            |tape, vars| {
                let y = tape.layer_norm(vars[0], vars[1], vars[2])?;
                let y = tape.matmul(y, vars[3])?;
                tape.cross_entropy(y, &[Some(0), Some(1), Some(2), Some(0)])
            },
            &[x, g, b, w],
            eps,
        )?;
        out.push(CheckResult { name: "layer-norm", max_rel_error: err, threshold: 1e-4 });
    }

    // relu feed-forward; inputs keep a margin from the kink
    {
        let mut r = rng(6);
        let x = Tensor::uniform(3, 4, 1.0, &mut r);
        let w1 = Tensor::uniform(4, 8, 1.0, &mut r);
        let w2 = Tensor::uniform(8, 3, 1.0, &mut r);
        let err = max_rel_error(
            |tape, vars| {
                let h = tape.matmul(vars[0], vars[1])?;
                let h = tape.relu(h);
                let y = tape.matmul(h, vars[2])?;
                tape.cross_entropy(y, &[Some(0), Some(2), Some(1)])
            },
            &[x, w1, w2],
            eps,
        )?;
        out.push(CheckResult { name: "relu-ffn", max_rel_error: err, threshold: 1e-4 });
    }

    // multi-head attention, causal and padding masks
    for (name, mask) in [
        ("attention-causal", AttnMask::Causal),
        ("attention-padding", AttnMask::KeyPadding(vec![false, true, false, false, true])),
        ("attention-open", AttnMask::None),
    ] {
        let mut r = rng(7);
        let q = Tensor::uniform(5, 8, 1.0, &mut r);
        let k = Tensor::uniform(5, 8, 1.0, &mut r);
        let v = Tensor::uniform(5, 8, 1.0, &mut r);
        let w = Tensor::uniform(8, 4, 1.0, &mut r);
        let mask = mask.clone();
        let err = max_rel_error(
            move |tape, vars| {
                let a = tape.attention(vars[0], vars[1], vars[2], 2, &mask)?;
                let y = tape.matmul(a, vars[3])?;
                tape.cross_entropy(y, &[Some(0), Some(1), Some(2), Some(3), Some(0)])
            },
            &[q, k, v, w],
            eps,
        )?;
        out.push(CheckResult { name, max_rel_error: err, threshold: 1e-4 });
    }

    // dropout with a deterministic mask
    {
        let mut r = rng(8);
        let x = Tensor::uniform(4, 6, 1.0, &mut r);
        let w = Tensor::uniform(6, 3, 1.0, &mut r);
        let err = max_rel_error(
            |tape, vars| {
                let mut drop_rng = rng(99);
                let d = tape.dropout(vars[0], 0.25, &mut drop_rng);
                let y = tape.matmul(d, vars[1])?;
                tape.cross_entropy(y, &[Some(0), Some(1), Some(2), Some(0)])
            },
            &[x, w],
            eps,
        )?;
        out.push(CheckResult { name: "dropout", max_rel_error: err, threshold: 1e-6 });
    }

    // one full transformer block
    out.push(encoder_block_check("encoder-block", 1, eps)?);
    // two stacked blocks
    out.push(encoder_block_check("two-layer-block", 2, eps)?);

    Ok(out)
}

fn encoder_block_check(
    name: &'static str,
    layers: usize,
    eps: f64,
) -> Result<CheckResult, KernelError> {
    let d = 8;
    let t = 5;
    let mut r = rng(40 + layers as u64);
    let mut params = vec![Tensor::uniform(t, d, 1.0, &mut r)];
    for _ in 0..layers {
        for _ in 0..4 {
            params.push(Tensor::uniform(d, d, 0.5, &mut r)); // wq wk wv wo
        }
        params.push(Tensor::from_vec(1, d, vec![1.0; d])); // ln1.g
        params.push(Tensor::uniform(1, d, 0.1, &mut r)); // ln1.b
        params.push(Tensor::uniform(d, 2 * d, 0.5, &mut r)); // ffn.w1
        params.push(Tensor::uniform(1, 2 * d, 0.1, &mut r)); // ffn.b1
        params.push(Tensor::uniform(2 * d, d, 0.5, &mut r)); // ffn.w2
        params.push(Tensor::uniform(1, d, 0.1, &mut r)); // ffn.b2
        params.push(Tensor::from_vec(1, d, vec![1.0; d])); // ln2.g
        params.push(Tensor::uniform(1, d, 0.1, &mut r)); // ln2.b
    }
    params.push(Tensor::uniform(d, 4, 1.0, &mut r)); // readout

    let err = max_rel_error(
        move |tape, vars| {
            let mut x = vars[0];
            let per_layer = 12;
            for l in 0..layers {
                let base = 1 + l * per_layer;
                let q = tape.matmul(x, vars[base])?;
                let k = tape.matmul(x, vars[base + 1])?;
                let v = tape.matmul(x, vars[base + 2])?;
                let a = tape.attention(q, k, v, 2, &AttnMask::Causal)?;
                let o = tape.matmul(a, vars[base + 3])?;
                let res = tape.add(x, o)?;
                x = tape.layer_norm(res, vars[base + 4], vars[base + 5])?;
                let h = tape.matmul(x, vars[base + 6])?;
                let h = tape.add_row(h, vars[base + 7])?;
                let h = tape.relu(h);
                let f = tape.matmul(h, vars[base + 8])?;
                let f = tape.add_row(f, vars[base + 9])?;
                let res = tape.add(x, f)?;
                x = tape.layer_norm(res, vars[base + 10], vars[base + 11])?;
            }
            let y = tape.matmul(x, *vars.last().unwrap())?;
            tape.cross_entropy(y, &[Some(0), Some(1), Some(2), Some(3), Some(1)])
        },
        &params,
        eps,
    )?;
    Ok(CheckResult { name, max_rel_error: err, threshold: 1e-4 })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_suite_passes_at_tolerance() {
        for check in run_standard_suite(1e-5).unwrap() {
            assert!(
                check.passed(),
                "{}: {} > {}",
                check.name,
                check.max_rel_error,
                check.threshold
            );
        }
    }
}
