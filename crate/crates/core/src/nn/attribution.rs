//! Integrated gradients over an input sequence.

use super::{Network, NetworkGrads};
use crate::error::{Error, Result};

/// Midpoint-rule path integral of a gradient field from `baseline` to
/// `input`: `attr_i = (x_i - x0_i) * mean_k grad_i(x0 + a_k (x - x0))`.
///
/// For a constant gradient field (a linear function) the result is exact
/// for any step count.
pub fn path_integral(
    mut eval_grad: impl FnMut(&[f64]) -> Vec<f64>,
    input: &[f64],
    baseline: &[f64],
    steps: usize,
) -> Result<Vec<f64>> {
    if steps < 2 {
        return Err(Error::Parameter(format!("path integral needs steps >= 2, got {steps}")));
    }
    if input.len() != baseline.len() {
        return Err(Error::Shape("baseline length differs from input".into()));
    }
    let mut mean_grad = vec![0.0; input.len()];
    let mut point = vec![0.0; input.len()];
    for k in 0..steps {
        let alpha = (k as f64 + 0.5) / steps as f64;
        for ((p, &x), &x0) in point.iter_mut().zip(input).zip(baseline) {
            *p = x0 + alpha * (x - x0);
        }
        let grad = eval_grad(&point);
        for (m, g) in mean_grad.iter_mut().zip(grad) {
            *m += g;
        }
    }
    Ok(mean_grad
        .iter()
        .zip(input)
        .zip(baseline)
        .map(|((&g, &x), &x0)| (x - x0) * g / steps as f64)
        .collect())
}

/// Attribution of the final output to every input sample of a window
/// sequence. `input[t][branch]` is the window fed to each branch at step
/// `t`; `baseline` has the same shape.
pub struct Attribution {
    /// Same shape as the input sequence.
    pub attributions: Vec<Vec<Vec<f64>>>,
    pub output: f64,
    pub baseline_output: f64,
}

/// Shape-preserving flatten helpers for window sequences.
fn flatten(seq: &[Vec<Vec<f64>>]) -> Vec<f64> {
    seq.iter().flatten().flatten().copied().collect()
}

fn unflatten(like: &[Vec<Vec<f64>>], flat: &[f64]) -> Vec<Vec<Vec<f64>>> {
    let mut it = flat.iter().copied();
    like.iter()
        .map(|step| {
            step.iter().map(|w| (0..w.len()).map(|_| it.next().unwrap()).collect()).collect()
        })
        .collect()
}

/// Integrated gradients of the network's final-step output with respect
/// to every sample of the input sequence. Attributions sum approximately
/// to `y(input) - y(baseline)` (completeness).
pub fn integrated_gradients(
    net: &Network,
    input: &[Vec<Vec<f64>>],
    baseline: &[Vec<Vec<f64>>],
    steps: usize,
) -> Result<Attribution> {
    if input.len() != baseline.len()
        || input
            .iter()
            .zip(baseline)
            .any(|(a, b)| a.len() != b.len() || a.iter().zip(b).any(|(x, y)| x.len() != y.len()))
    {
        return Err(Error::Shape("baseline shape differs from input shape".into()));
    }
    let eval = |seq: &[Vec<Vec<f64>>]| -> Result<f64> {
        let mut hidden = net.zero_hidden();
        let mut y = 0.0;
        for step in seq {
            let windows: Vec<&[f64]> = step.iter().map(|w| w.as_slice()).collect();
            let (yy, h) = net.forward_window(&windows, &hidden)?;
            hidden = h;
            y = yy;
        }
        Ok(y)
    };
    let output = eval(input)?;
    let baseline_output = eval(baseline)?;

    // d y(final) / d (all window samples), at an arbitrary point.
    let mut failure: Option<crate::error::Error> = None;
    let grad_at = |flat: &[f64], failure: &mut Option<crate::error::Error>| -> Vec<f64> {
        let seq = unflatten(input, flat);
        let run = || -> Result<Vec<f64>> {
            let mut hidden = net.zero_hidden();
            let mut tapes = Vec::with_capacity(seq.len());
            for step in &seq {
                let windows: Vec<&[f64]> = step.iter().map(|w| w.as_slice()).collect();
                let (_, h, tape) = net.forward_traced(&windows, &hidden, None)?;
                hidden = h;
                tapes.push(tape);
            }
            let mut grads = NetworkGrads::zeros_like(net);
            let mut d_hidden = net.zero_hidden();
            let mut d_seq: Vec<Vec<Vec<f64>>> =
                seq.iter().map(|s| s.iter().map(|w| vec![0.0; w.len()]).collect()).collect();
            for (t, tape) in tapes.iter().enumerate().rev() {
                let d_pre =
                    if t == seq.len() - 1 { net.d_pre_from_d_output(tape, 1.0) } else { 0.0 };
                d_hidden =
                    net.backward_step(d_pre, tape, &d_hidden, &mut grads, Some(&mut d_seq[t]));
            }
            Ok(flatten(&d_seq))
        };
        match run() {
            Ok(g) => g,
            Err(e) => {
                *failure = Some(e);
                vec![0.0; flat.len()]
            }
        }
    };

    let flat_attr = path_integral(
        |p| grad_at(p, &mut failure),
        &flatten(input),
        &flatten(baseline),
        steps,
    )?;
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(Attribution { attributions: unflatten(input, &flat_attr), output, baseline_output })
}
