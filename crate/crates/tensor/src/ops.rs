use crate::error::{Result, TensorError};
use crate::tape::{Op, Var};

fn same_shape(op: &'static str, a: &Var<'_>, b: &Var<'_>) -> Result<Vec<usize>> {
    if !a.same_tape(b) {
        return Err(TensorError::invalid(op, "operands live on different tapes"));
    }
    let (sa, sb) = (a.shape(), b.shape());
    if sa != sb {
        let axes: Vec<usize> = (0..sa.len().max(sb.len()))
            .filter(|&i| sa.get(i) != sb.get(i))
            .collect();
        return Err(TensorError::dim(
            op,
            format!("shapes {sa:?} and {sb:?} differ on axes {axes:?}"),
        ));
    }
    Ok(sa)
}

pub fn relu(x: Var<'_>) -> Var<'_> {
    let v: Vec<f64> = x.value().iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect();
    x.tape()
        .push(x.shape(), v, Op::Relu { input: x.id() }, x.requires_grad())
}

pub(crate) fn relu_backward(x: &[f64], g: &[f64]) -> Vec<f64> {
    x.iter().zip(g).map(|(&x, &g)| if x > 0.0 { g } else { 0.0 }).collect()
}

/// Logistic function, evaluated in a form that does not overflow for
/// large-magnitude inputs.
pub fn sigmoid(x: Var<'_>) -> Var<'_> {
    let v: Vec<f64> = x.value().iter().map(|&v| logistic(v)).collect();
    x.tape()
        .push(x.shape(), v, Op::Sigmoid { input: x.id() }, x.requires_grad())
}

fn logistic(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn sigmoid_backward(y: &[f64], g: &[f64]) -> Vec<f64> {
    y.iter().zip(g).map(|(&y, &g)| g * y * (1.0 - y)).collect()
}

pub fn add<'t>(a: Var<'t>, b: Var<'t>) -> Result<Var<'t>> {
    let shape = same_shape("add", &a, &b)?;
    let (av, bv) = (a.value(), b.value());
    let v = av.iter().zip(bv.iter()).map(|(x, y)| x + y).collect();
    Ok(a.tape().push(
        shape,
        v,
        Op::Add { a: a.id(), b: b.id() },
        a.requires_grad() || b.requires_grad(),
    ))
}

pub fn scale(x: Var<'_>, factor: f64) -> Var<'_> {
    let v = x.value().iter().map(|v| v * factor).collect();
    x.tape().push(
        x.shape(),
        v,
        Op::Scale {
            input: x.id(),
            factor,
        },
        x.requires_grad(),
    )
}

/// Mean of squared differences, as a `[1]` scalar.
pub fn mse_loss<'t>(a: Var<'t>, b: Var<'t>) -> Result<Var<'t>> {
    same_shape("mse_loss", &a, &b)?;
    let (av, bv) = (a.value(), b.value());
    let sum: f64 = av.iter().zip(bv.iter()).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok(a.tape().push(
        vec![1],
        vec![sum / av.len() as f64],
        Op::Mse { a: a.id(), b: b.id() },
        a.requires_grad() || b.requires_grad(),
    ))
}

pub(crate) fn mse_backward(a: &[f64], b: &[f64], g: f64) -> (Vec<f64>, Vec<f64>) {
    let k = 2.0 * g / a.len() as f64;
    let da: Vec<f64> = a.iter().zip(b).map(|(x, y)| k * (x - y)).collect();
    let db = da.iter().map(|v| -v).collect();
    (da, db)
}

/// `Σ |x_i|` as a `[1]` scalar. The subgradient at 0 is taken as 0.
pub fn sum_abs(x: Var<'_>) -> Var<'_> {
    let s = x.value().iter().map(|v| v.abs()).sum();
    x.tape()
        .push(vec![1], vec![s], Op::SumAbs { input: x.id() }, x.requires_grad())
}

pub(crate) fn sum_abs_backward(x: &[f64], g: f64) -> Vec<f64> {
    x.iter().map(|&v| g * sign(v)).collect()
}

pub(crate) fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

pub fn reshape(x: Var<'_>, shape: Vec<usize>) -> Result<Var<'_>> {
    crate::tensor::check_shape(&shape, x.value().len())?;
    Ok(x.tape().push(
        shape,
        x.value().as_ref().clone(),
        Op::Reshape { input: x.id() },
        x.requires_grad(),
    ))
}
