use std::cell::RefCell;
use std::collections::HashMap;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::param::{ParamId, ParamStore};
use crate::tensor::{Scalar, Tensor};

pub type NodeId = usize;

/// Backward rule of a recorded primitive.
///
/// `inputs` and `output` are the forward values; `grad` is the gradient of
/// the loss with respect to `output`. The returned vector has one entry per
/// input; entries whose `needs` flag is false may be `None`.
pub trait Op<S: Scalar> {
    fn name(&self) -> &'static str;

    fn backward(
        &self,
        inputs: &[&Tensor<S>],
        output: &Tensor<S>,
        grad: &Tensor<S>,
        needs: &[bool],
    ) -> Vec<Option<Tensor<S>>>;
}

struct Node<S: Scalar> {
    value: Arc<Tensor<S>>,
    inputs: Vec<NodeId>,
    op: Option<Box<dyn Op<S>>>,
    requires_grad: bool,
    param: Option<ParamId>,
}

/// Append-only record of executed primitives. Confined to one thread.
pub struct Tape<S: Scalar> {
    nodes: RefCell<Vec<Node<S>>>,
}

/// Handle to a value recorded on a tape.
pub struct Var<'t, S: Scalar> {
    tape: &'t Tape<S>,
    id: NodeId,
}

impl<S: Scalar> Clone for Var<'_, S> {
    fn clone(&self) -> Self {
        *self
    }
}

impl<S: Scalar> Copy for Var<'_, S> {}

impl<S: Scalar> std::fmt::Debug for Var<'_, S> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Var#{}{:?}", self.id, self.shape())
    }
}

impl<S: Scalar> Default for Tape<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Scalar> Tape<S> {
    pub fn new() -> Self {
        Tape { nodes: RefCell::new(Vec::new()) }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Drops every node and the intermediates saved with it.
    pub fn clear(&mut self) {
        self.nodes.get_mut().clear();
    }

    fn push_node(&self, node: Node<S>) -> Var<'_, S> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(node);
        Var { tape: self, id: nodes.len() - 1 }
    }

    /// Input that never receives a gradient.
    pub fn constant(&self, value: Tensor<S>) -> Var<'_, S> {
        self.push_node(Node {
            value: Arc::new(value),
            inputs: vec![],
            op: None,
            requires_grad: false,
            param: None,
        })
    }

    /// Input whose gradient is reported in [`Gradients`].
    pub fn leaf(&self, value: Tensor<S>) -> Var<'_, S> {
        self.push_node(Node {
            value: Arc::new(value),
            inputs: vec![],
            op: None,
            requires_grad: true,
            param: None,
        })
    }

    /// Binds a parameter; its gradient is accumulated into the store on backward.
    pub fn param(&self, store: &ParamStore<S>, id: ParamId) -> Var<'_, S> {
        self.push_node(Node {
            value: store.value_arc(id),
            inputs: vec![],
            op: None,
            requires_grad: true,
            param: Some(id),
        })
    }

    /// Records a primitive. Rejects non-finite outputs.
    pub fn record<'t>(
        &'t self,
        inputs: &[Var<'t, S>],
        output: Tensor<S>,
        op: impl Op<S> + 'static,
    ) -> Result<Var<'t, S>> {
        if !output.is_finite() {
            return Err(Error::NonFinite(format!("output of {}", op.name())));
        }
        let requires_grad = {
            let nodes = self.nodes.borrow();
            inputs.iter().any(|v| {
                debug_assert!(std::ptr::eq(v.tape, self), "variable from another tape");
                nodes[v.id].requires_grad
            })
        };
        Ok(self.push_node(Node {
            value: Arc::new(output),
            inputs: inputs.iter().map(|v| v.id).collect(),
            op: if requires_grad { Some(Box::new(op)) } else { None },
            requires_grad,
            param: None,
        }))
    }

    fn value(&self, id: NodeId) -> Arc<Tensor<S>> {
        Arc::clone(&self.nodes.borrow()[id].value)
    }

    /// Names of recorded primitives in execution order; leaves are `None`.
    pub fn op_names(&self) -> Vec<Option<&'static str>> {
        self.nodes.borrow().iter().map(|n| n.op.as_ref().map(|o| o.name())).collect()
    }

    /// Reverse pass from a scalar loss. Parameter gradients are added into
    /// `store`; gradients of [`Tape::leaf`] inputs are returned.
    pub fn backward(&self, loss: Var<'_, S>, store: &mut ParamStore<S>) -> Result<Gradients<S>> {
        let (grads, params) = self.reverse(loss)?;
        for (pid, g) in params {
            store.accumulate_grad(pid, &g)?;
        }
        Ok(grads)
    }

    /// Reverse pass without a parameter store; parameter gradients are dropped.
    pub fn backward_leaves(&self, loss: Var<'_, S>) -> Result<Gradients<S>> {
        Ok(self.reverse(loss)?.0)
    }

    #[allow(clippy::type_complexity)]
    fn reverse(&self, loss: Var<'_, S>) -> Result<(Gradients<S>, Vec<(ParamId, Tensor<S>)>)> {
        let nodes = self.nodes.borrow();
        if nodes.is_empty() {
            return Err(Error::Usage("backward on an empty tape".into()));
        }
        let root = &nodes[loss.id];
        if root.value.numel() != 1 {
            return Err(Error::Usage(format!(
                "backward needs a scalar loss, got shape {:?}",
                root.value.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor<S>>> = (0..=loss.id).map(|_| None).collect();
        grads[loss.id] = Some(Tensor::full(root.value.shape().to_vec(), S::one()));
        let mut leaves = HashMap::new();
        let mut params = Vec::new();

        for id in (0..=loss.id).rev() {
            let Some(grad) = grads[id].take() else { continue };
            let node = &nodes[id];
            if !node.requires_grad {
                continue;
            }
            match &node.op {
                None => {
                    if let Some(pid) = node.param {
                        params.push((pid, grad));
                    } else {
                        leaves.insert(id, grad);
                    }
                }
                Some(op) => {
                    let inputs: Vec<&Tensor<S>> =
                        node.inputs.iter().map(|&i| nodes[i].value.as_ref()).collect();
                    let needs: Vec<bool> =
                        node.inputs.iter().map(|&i| nodes[i].requires_grad).collect();
                    let input_grads = op.backward(&inputs, &node.value, &grad, &needs);
                    debug_assert_eq!(input_grads.len(), node.inputs.len(), "{}", op.name());
                    for ((&input, g), need) in node.inputs.iter().zip(input_grads).zip(needs) {
                        let (Some(g), true) = (g, need) else { continue };
                        debug_assert_eq!(g.shape(), nodes[input].value.shape(), "{}", op.name());
                        match &mut grads[input] {
                            Some(acc) => acc.add_assign(&g),
                            slot => *slot = Some(g),
                        }
                    }
                }
            }
        }
        Ok((Gradients { grads: leaves }, params))
    }
}

/// Gradients of leaf inputs after a reverse pass.
#[derive(Debug)]
pub struct Gradients<S> {
    grads: HashMap<NodeId, Tensor<S>>,
}

impl<S: Scalar> Gradients<S> {
    pub fn get(&self, var: Var<'_, S>) -> Option<&Tensor<S>> {
        self.grads.get(&var.id)
    }

    /// Gradient of `var`, or zeros when the loss does not depend on it.
    pub fn get_or_zeros(&self, var: Var<'_, S>) -> Tensor<S> {
        self.get(var).cloned().unwrap_or_else(|| Tensor::zeros(var.shape()))
    }
}

impl<'t, S: Scalar> Var<'t, S> {
    pub fn id(&self) -> NodeId {
        self.id
    }

    pub fn tape(&self) -> &'t Tape<S> {
        self.tape
    }

    pub fn value(&self) -> Arc<Tensor<S>> {
        self.tape.value(self.id)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.tape.nodes.borrow()[self.id].value.shape().to_vec()
    }

    pub fn requires_grad(&self) -> bool {
        self.tape.nodes.borrow()[self.id].requires_grad
    }
}
