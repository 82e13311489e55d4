use std::cell::RefCell;
use std::rc::Rc;

use crate::batch_norm;
use crate::conv::{self, ConvGeometry};
use crate::error::{Result, TensorError};
use crate::ops;
use crate::tensor::Tensor;

/// Recording of one forward pass. Nodes are appended in evaluation order, so
/// reverse index order is a valid topological order for backpropagation.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

pub(crate) struct Node {
    pub shape: Vec<usize>,
    pub value: Rc<Vec<f64>>,
    pub op: Op,
    pub requires_grad: bool,
}

pub(crate) enum Op {
    Leaf,
    Conv2d {
        input: usize,
        kernel: usize,
        geom: ConvGeometry,
    },
    /// `geom` describes the forward convolution this op is the adjoint of.
    ConvTranspose2d {
        input: usize,
        kernel: usize,
        geom: ConvGeometry,
    },
    BatchNorm(batch_norm::BnRecord),
    Relu {
        input: usize,
    },
    Sigmoid {
        input: usize,
    },
    Add {
        a: usize,
        b: usize,
    },
    Scale {
        input: usize,
        factor: f64,
    },
    Mse {
        a: usize,
        b: usize,
    },
    SumAbs {
        input: usize,
    },
    Reshape {
        input: usize,
    },
}

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: usize,
}

impl<'t> Var<'t> {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn shape(&self) -> Vec<usize> {
        self.tape.nodes.borrow()[self.id].shape.clone()
    }

    pub fn value(&self) -> Rc<Vec<f64>> {
        Rc::clone(&self.tape.nodes.borrow()[self.id].value)
    }

    pub fn requires_grad(&self) -> bool {
        self.tape.nodes.borrow()[self.id].requires_grad
    }

    /// First element; intended for scalar losses.
    pub fn item(&self) -> f64 {
        self.tape.nodes.borrow()[self.id].value[0]
    }

    pub fn to_tensor(&self) -> Tensor {
        let nodes = self.tape.nodes.borrow();
        let node = &nodes[self.id];
        Tensor::new(node.shape.clone(), node.value.as_ref().clone()).unwrap()
    }

    pub(crate) fn same_tape(&self, other: &Var<'_>) -> bool {
        std::ptr::eq(self.tape, other.tape)
    }
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Var(#{}, {:?})", self.id, self.shape())
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Records `t` as an input; it receives a gradient iff `t.requires_grad()`.
    pub fn leaf(&self, t: &Tensor) -> Var<'_> {
        self.push(t.shape().to_vec(), t.data().to_vec(), Op::Leaf, t.requires_grad())
    }

    pub fn constant(&self, t: &Tensor) -> Var<'_> {
        self.push(t.shape().to_vec(), t.data().to_vec(), Op::Leaf, false)
    }

    pub fn param(&self, t: &Tensor) -> Var<'_> {
        self.push(t.shape().to_vec(), t.data().to_vec(), Op::Leaf, true)
    }

    pub(crate) fn push(
        &self,
        shape: Vec<usize>,
        value: Vec<f64>,
        op: Op,
        requires_grad: bool,
    ) -> Var<'_> {
        debug_assert_eq!(shape.iter().product::<usize>(), value.len());
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            shape,
            value: Rc::new(value),
            op,
            requires_grad,
        });
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var<'_>) -> Result<Gradients> {
        if !std::ptr::eq(self, loss.tape) {
            return Err(TensorError::invalid("backward", "loss belongs to another tape"));
        }
        let nodes = self.nodes.borrow();
        if nodes[loss.id].value.len() != 1 {
            return Err(TensorError::dim(
                "backward",
                format!("loss must be scalar, got shape {:?}", nodes[loss.id].shape),
            ));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; nodes.len()];
        grads[loss.id] = Some(vec![1.0]);

        for id in (0..=loss.id).rev() {
            let node = &nodes[id];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[id].take() else { continue };
            let contributions = backward_node(&nodes, node, &g);
            grads[id] = Some(g);
            for (target, delta) in contributions {
                if !nodes[target].requires_grad {
                    continue;
                }
                match &mut grads[target] {
                    Some(acc) => acc.iter_mut().zip(&delta).for_each(|(a, d)| *a += d),
                    slot @ None => *slot = Some(delta),
                }
            }
        }
        Ok(Gradients { grads })
    }
}

fn backward_node(nodes: &[Node], node: &Node, g: &[f64]) -> Vec<(usize, Vec<f64>)> {
    let val = |id: usize| nodes[id].value.as_slice();
    let wants = |id: usize| nodes[id].requires_grad;
    match &node.op {
        Op::Leaf => Vec::new(),
        Op::Conv2d {
            input,
            kernel,
            geom,
        } => {
            let mut out = Vec::new();
            if wants(*input) {
                out.push((*input, conv::backward_input(g, val(*kernel), geom)));
            }
            if wants(*kernel) {
                out.push((*kernel, conv::backward_kernel(val(*input), g, geom)));
            }
            out
        }
        Op::ConvTranspose2d {
            input,
            kernel,
            geom,
        } => {
            // Forward was the input-gradient of `geom`; its adjoint is `geom` itself.
            let mut out = Vec::new();
            if wants(*input) {
                out.push((*input, conv::forward(g, val(*kernel), geom)));
            }
            if wants(*kernel) {
                out.push((*kernel, conv::backward_kernel(g, val(*input), geom)));
            }
            out
        }
        Op::BatchNorm(rec) => batch_norm::backward(rec, g, &wants, val(rec.eta)),
        Op::Relu { input } => vec![(*input, ops::relu_backward(val(*input), g))],
        Op::Sigmoid { input } => vec![(*input, ops::sigmoid_backward(&node.value, g))],
        Op::Add { a, b } => vec![(*a, g.to_vec()), (*b, g.to_vec())],
        Op::Scale { input, factor } => vec![(*input, g.iter().map(|v| v * factor).collect())],
        Op::Mse { a, b } => {
            let (da, db) = ops::mse_backward(val(*a), val(*b), g[0]);
            vec![(*a, da), (*b, db)]
        }
        Op::SumAbs { input } => vec![(*input, ops::sum_abs_backward(val(*input), g[0]))],
        Op::Reshape { input } => vec![(*input, g.to_vec())],
    }
}

/// Result of [`Tape::backward`], indexed by [`Var`].
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    pub fn get(&self, var: Var<'_>) -> Option<&[f64]> {
        self.grads.get(var.id).and_then(|g| g.as_deref())
    }

    pub fn take(&mut self, var: Var<'_>) -> Option<Vec<f64>> {
        self.grads.get_mut(var.id).and_then(Option::take)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ops::{add, mse_loss, scale};

    #[test]
    fn gradient_accumulates_over_fanout() {
        let tape = Tape::new();
        let x = tape.param(&Tensor::new(vec![2], vec![1.0, -2.0]).unwrap());
        let y = add(x, x).unwrap();
        let target = tape.constant(&Tensor::zeros(vec![2]));
        let loss = mse_loss(y, target).unwrap();
        let g = tape.backward(loss).unwrap();
        // loss = mean((2x)^2) => d/dx = 4x
        assert_eq!(g.get(x).unwrap(), &[4.0, -8.0]);
    }

    #[test]
    fn constants_receive_no_gradient() {
        let tape = Tape::new();
        let c = tape.constant(&Tensor::new(vec![1], vec![3.0]).unwrap());
        let p = tape.param(&Tensor::new(vec![1], vec![2.0]).unwrap());
        let s = add(scale(c, 2.0), p).unwrap();
        let loss = mse_loss(s, tape.constant(&Tensor::zeros(vec![1]))).unwrap();
        let g = tape.backward(loss).unwrap();
        assert!(g.get(c).is_none());
        assert_eq!(g.get(p).unwrap(), &[16.0]);
    }

    #[test]
    fn backward_requires_scalar() {
        let tape = Tape::new();
        let x = tape.param(&Tensor::zeros(vec![3]));
        assert!(tape.backward(x).is_err());
    }
}
