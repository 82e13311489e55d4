//! Central finite-difference gradient checker.
//!
//! Only forward values are used on the numeric side, so the check stays
//! independent of every backward rule it validates.

use crate::{Result, Tape, Tensor, Var};

/// Relative error `‖analytic − numeric‖ / max(‖analytic‖, ‖numeric‖, floor)`
/// for each input tensor.
pub fn relative_errors<F>(inputs: &[Tensor], f: F, h: f64) -> Result<Vec<f64>>
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>>,
{
    let analytic: Vec<Vec<f64>> = {
        let tape = Tape::new();
        let vars: Vec<Var<'_>> = inputs.iter().map(|t| tape.param(t)).collect();
        let loss = f(&tape, &vars)?;
        let grads = tape.backward(loss)?;
        vars.iter()
            .zip(inputs)
            .map(|(v, t)| grads.get(*v).map_or_else(|| vec![0.0; t.numel()], <[f64]>::to_vec))
            .collect()
    };

    let eval = |probe: &[Tensor]| -> Result<f64> {
        let tape = Tape::new();
        let vars: Vec<Var<'_>> = probe.iter().map(|t| tape.constant(t)).collect();
        Ok(f(&tape, &vars)?.item())
    };

    let mut errors = Vec::with_capacity(inputs.len());
    let mut probe: Vec<Tensor> = inputs.to_vec();
    for (i, input) in inputs.iter().enumerate() {
        let mut numeric = vec![0.0; input.numel()];
        for (j, slot) in numeric.iter_mut().enumerate() {
            let x = input.data()[j];
            probe[i].data_mut()[j] = x + h;
            let up = eval(&probe)?;
            probe[i].data_mut()[j] = x - h;
            let down = eval(&probe)?;
            probe[i].data_mut()[j] = x;
            *slot = (up - down) / (2.0 * h);
        }
        let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let diff: Vec<f64> = analytic[i].iter().zip(&numeric).map(|(a, n)| a - n).collect();
        let scale = norm(&analytic[i]).max(norm(&numeric)).max(1e-8);
        errors.push(norm(&diff) / scale);
    }
    Ok(errors)
}
