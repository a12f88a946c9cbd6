use super::Tensor;
use crate::error::{Error, Result};
use std::cell::RefCell;
use std::rc::Rc;

/// Local vector-Jacobian product of one recorded operation.
///
/// Returns one entry per input; `None` means "no gradient for this input".
pub trait Backward {
    fn backward(&self, inputs: &[&Tensor], output: &Tensor, grad: &[f32]) -> Vec<Option<Vec<f32>>>;
}

impl<F> Backward for F
where
    F: Fn(&[&Tensor], &Tensor, &[f32]) -> Vec<Option<Vec<f32>>>,
{
    fn backward(&self, inputs: &[&Tensor], output: &Tensor, grad: &[f32]) -> Vec<Option<Vec<f32>>> {
        self(inputs, output, grad)
    }
}

struct Node {
    value: Rc<Tensor>,
    inputs: Vec<usize>,
    backward: Option<Box<dyn Backward>>,
    tracked: bool,
}

/// Append-only record of a forward computation.
///
/// Nodes are pushed in evaluation order, so the node list is always a
/// topological order and the backward sweep is a single reverse pass.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    pub(crate) tape: &'t Tape,
    pub(crate) id: usize,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Var#{}{:?}", self.id, self.shape())
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, value: Tensor, inputs: Vec<usize>, backward: Option<Box<dyn Backward>>, tracked: bool) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value: Rc::new(value),
            inputs,
            backward,
            tracked,
        });
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    /// Records a leaf; it is differentiated iff `t.requires_grad()`.
    pub fn leaf(&self, t: Tensor) -> Var<'_> {
        let tracked = t.requires_grad();
        self.push(t, Vec::new(), None, tracked)
    }

    /// Records a leaf that always receives a gradient.
    pub fn param(&self, t: &Tensor) -> Var<'_> {
        let mut t = t.clone();
        t.grad = None;
        t.set_requires_grad(true);
        self.push(t, Vec::new(), None, true)
    }

    /// Records a leaf that never receives a gradient.
    pub fn constant(&self, t: Tensor) -> Var<'_> {
        self.push(t, Vec::new(), None, false)
    }

    pub fn scalar(&self, v: f32) -> Var<'_> {
        self.constant(Tensor::scalar(v))
    }

    /// Records the result of an arbitrary operation with its backward rule.
    ///
    /// The rule is dropped when no input is tracked.
    pub fn record(&self, inputs: &[Var<'_>], output: Tensor, backward: impl Backward + 'static) -> Var<'_> {
        let ids: Vec<usize> = inputs.iter().map(|v| v.id).collect();
        let tracked = {
            let nodes = self.nodes.borrow();
            ids.iter().any(|&i| nodes[i].tracked)
        };
        let bw: Option<Box<dyn Backward>> = if tracked { Some(Box::new(backward)) } else { None };
        self.push(output, ids, bw, tracked)
    }

    pub(crate) fn value(&self, id: usize) -> Rc<Tensor> {
        self.nodes.borrow()[id].value.clone()
    }

    pub(crate) fn is_tracked(&self, id: usize) -> bool {
        self.nodes.borrow()[id].tracked
    }

    /// Reverse sweep from a one-element output.
    pub fn backward(&self, output: Var<'_>) -> Result<Gradients> {
        let nodes = self.nodes.borrow();
        let root = &nodes[output.id];
        if root.value.numel() != 1 {
            return Err(Error::dim(format!(
                "backward needs a scalar output, got shape {:?}",
                root.value.shape()
            )));
        }
        let mut grads: Vec<Option<Vec<f32>>> = vec![None; output.id + 1];
        grads[output.id] = Some(vec![1.0]);
        for id in (0..=output.id).rev() {
            let node = &nodes[id];
            let Some(bw) = &node.backward else { continue };
            let Some(g) = grads[id].take() else { continue };
            let inputs: Vec<&Tensor> = node.inputs.iter().map(|&i| nodes[i].value.as_ref()).collect();
            let local = bw.backward(&inputs, &node.value, &g);
            debug_assert_eq!(local.len(), node.inputs.len());
            for (&inp, gi) in node.inputs.iter().zip(local) {
                let Some(gi) = gi else { continue };
                if !nodes[inp].tracked {
                    continue;
                }
                match &mut grads[inp] {
                    Some(acc) => acc.iter_mut().zip(&gi).for_each(|(a, b)| *a += b),
                    slot @ None => *slot = Some(gi),
                }
            }
            grads[id] = Some(g);
        }
        Ok(Gradients { grads })
    }
}

/// Gradients of one backward sweep.
pub struct Gradients {
    grads: Vec<Option<Vec<f32>>>,
}

impl Gradients {
    pub fn get(&self, v: Var<'_>) -> Option<&[f32]> {
        self.grads.get(v.id).and_then(|g| g.as_deref())
    }

    /// Gradient as a tensor shaped like `v`; zeros when `v` was unreachable.
    pub fn wrt(&self, v: Var<'_>) -> Tensor {
        let shape = v.shape();
        match self.get(v) {
            Some(g) => Tensor::from_parts(shape, g.to_vec()),
            None => Tensor::zeros(&shape),
        }
    }
}

impl<'t> Var<'t> {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn value(&self) -> Rc<Tensor> {
        self.tape.value(self.id)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.value().shape().to_vec()
    }

    pub fn numel(&self) -> usize {
        self.value().numel()
    }

    pub fn item(&self) -> f32 {
        self.value().item()
    }

    pub fn is_tracked(&self) -> bool {
        self.tape.is_tracked(self.id)
    }

    /// Copy of the value cut off from the tape.
    pub fn detach(&self) -> Var<'t> {
        self.tape.constant(self.value().as_ref().clone())
    }
}
