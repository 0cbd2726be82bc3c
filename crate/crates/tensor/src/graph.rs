//! Tape-based reverse-mode differentiation.
//!
//! A [`Graph`] records every operation applied to [`Var`]s that (transitively)
//! depend on a tracked leaf. Each recorded node keeps a closure mapping the
//! gradient of its output to gradients of its inputs. Values are held by the
//! `Var`s and by the closures that need them, never by the tape itself, so an
//! untracked forward pass frees intermediates as soon as they go out of scope.

use std::cell::{Cell, RefCell};
use std::collections::HashMap;
use std::sync::Arc;

use crate::float::Float;
use crate::params::{ParamId, ParamStore};
use crate::tensor::Tensor;

/// Maps the output gradient to input gradients; the flag slice says which
/// inputs are tracked and therefore need one.
pub(crate) type BackwardFn<F> = Box<dyn Fn(&Tensor<F>, &[bool]) -> Vec<Option<Tensor<F>>>>;

struct Node<F> {
    parents: Vec<usize>,
    needs: Vec<bool>,
    backward: Option<BackwardFn<F>>,
}

pub struct Graph<F: Float> {
    nodes: RefCell<Vec<Node<F>>>,
    grad_enabled: bool,
    params: RefCell<HashMap<ParamId, (usize, Arc<Tensor<F>>)>>,
    // address of the one store this graph reads parameters from
    store: Cell<Option<usize>>,
}

/// A value living on a [`Graph`].
#[derive(Clone)]
pub struct Var<'g, F: Float> {
    pub(crate) graph: &'g Graph<F>,
    pub(crate) id: usize,
    pub(crate) value: Arc<Tensor<F>>,
    pub(crate) tracked: bool,
}

impl<F: Float> Default for Graph<F> {
    fn default() -> Self {
        Self::new()
    }
}

impl<F: Float> Graph<F> {
    /// Graph that records operations for differentiation.
    pub fn new() -> Self {
        Self { nodes: RefCell::new(Vec::new()), grad_enabled: true, params: RefCell::default(), store: Cell::new(None) }
    }

    /// Graph for inference: nothing is tracked and no backward closures are kept.
    pub fn no_grad() -> Self {
        Self { grad_enabled: false, ..Self::new() }
    }

    pub fn grad_enabled(&self) -> bool {
        self.grad_enabled
    }

    fn push(&self, parents: Vec<usize>, needs: Vec<bool>, backward: Option<BackwardFn<F>>) -> usize {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { parents, needs, backward });
        nodes.len() - 1
    }

    /// Untracked input.
    pub fn constant(&self, t: Tensor<F>) -> Var<'_, F> {
        self.constant_arc(Arc::new(t))
    }

    pub fn constant_arc(&self, t: Arc<Tensor<F>>) -> Var<'_, F> {
        let id = self.push(Vec::new(), Vec::new(), None);
        Var { graph: self, id, value: t, tracked: false }
    }

    /// Tracked leaf whose gradient can be read back after [`Graph::backward`].
    pub fn leaf(&self, t: Tensor<F>) -> Var<'_, F> {
        let id = self.push(Vec::new(), Vec::new(), None);
        Var { graph: self, id, value: Arc::new(t), tracked: self.grad_enabled }
    }

    /// Leaf bound to a parameter of `store`. Repeated calls return the same node.
    ///
    /// Panics if parameters from two different stores are mixed on one graph.
    pub fn param(&self, store: &ParamStore<F>, pid: ParamId) -> Var<'_, F> {
        let addr = store as *const ParamStore<F> as usize;
        match self.store.get() {
            None => self.store.set(Some(addr)),
            Some(a) => assert_eq!(a, addr, "one graph cannot read parameters from two stores"),
        }
        if let Some((id, value)) = self.params.borrow().get(&pid) {
            return Var { graph: self, id: *id, value: value.clone(), tracked: self.grad_enabled };
        }
        let value = store.value_arc(pid);
        let id = self.push(Vec::new(), Vec::new(), None);
        self.params.borrow_mut().insert(pid, (id, value.clone()));
        Var { graph: self, id, value, tracked: self.grad_enabled }
    }

    /// Records the result of an operation. `backward` is dropped unless some
    /// input is tracked.
    pub(crate) fn record(
        &self,
        value: Tensor<F>,
        inputs: &[&Var<'_, F>],
        backward: impl Fn(&Tensor<F>, &[bool]) -> Vec<Option<Tensor<F>>> + 'static,
    ) -> Var<'_, F> {
        let tracked = self.grad_enabled && inputs.iter().any(|v| v.tracked);
        let id = if tracked {
            self.push(
                inputs.iter().map(|v| v.id).collect(),
                inputs.iter().map(|v| v.tracked).collect(),
                Some(Box::new(backward)),
            )
        } else {
            self.push(Vec::new(), Vec::new(), None)
        };
        Var { graph: self, id, value: Arc::new(value), tracked }
    }

    /// Reverse pass from a scalar output.
    pub fn backward(&self, output: &Var<'_, F>) -> Gradients<F> {
        assert_eq!(output.value.len(), 1, "backward() needs a scalar output");
        self.backward_with(output, Tensor::full(output.value.shape(), F::one()))
    }

    /// Reverse pass seeded with an explicit output gradient.
    ///
    /// Backward closures are released as they run, so a graph supports one
    /// reverse pass.
    pub fn backward_with(&self, output: &Var<'_, F>, seed: Tensor<F>) -> Gradients<F> {
        assert_eq!(seed.shape(), output.value.shape());
        let mut nodes = self.nodes.borrow_mut();
        let mut grads: Vec<Option<Tensor<F>>> = Vec::new();
        grads.resize_with(nodes.len(), || None);
        let mut leaves = HashMap::new();
        if output.tracked {
            grads[output.id] = Some(seed);
        }
        for id in (0..=output.id).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &mut nodes[id];
            match node.backward.take() {
                Some(bw) => {
                    let parent_grads = bw(&g, &node.needs);
                    debug_assert_eq!(parent_grads.len(), node.parents.len());
                    for ((&pid, &need), pg) in node.parents.iter().zip(&node.needs).zip(parent_grads) {
                        let Some(pg) = pg.filter(|_| need) else { continue };
                        match &mut grads[pid] {
                            Some(acc) => acc.add_assign(&pg),
                            slot @ None => *slot = Some(pg),
                        }
                    }
                }
                None if node.parents.is_empty() => {
                    leaves.insert(id, g);
                }
                None => panic!("graph was already differentiated"),
            }
        }
        let params = self
            .params
            .borrow()
            .iter()
            .map(|(pid, (node, _))| (*node, *pid))
            .collect::<HashMap<_, _>>();
        Gradients { leaves, params }
    }
}

/// Gradients of leaves produced by a reverse pass.
pub struct Gradients<F> {
    leaves: HashMap<usize, Tensor<F>>,
    params: HashMap<usize, ParamId>,
}

impl<F: Float> Gradients<F> {
    pub fn wrt(&self, v: &Var<'_, F>) -> Option<&Tensor<F>> {
        self.leaves.get(&v.id)
    }

    /// Gradients of every parameter that received one.
    pub fn params(&self) -> impl Iterator<Item = (ParamId, &Tensor<F>)> {
        self.leaves.iter().filter_map(|(node, g)| self.params.get(node).map(|p| (*p, g)))
    }

    pub fn into_params(self) -> Vec<(ParamId, Tensor<F>)> {
        let Gradients { leaves, params } = self;
        let mut out: Vec<_> =
            leaves.into_iter().filter_map(|(node, g)| params.get(&node).map(|p| (*p, g))).collect();
        out.sort_by_key(|(p, _)| *p);
        out
    }
}

impl<'g, F: Float> Var<'g, F> {
    pub fn value(&self) -> &Tensor<F> {
        &self.value
    }

    pub fn value_arc(&self) -> Arc<Tensor<F>> {
        self.value.clone()
    }

    pub fn shape(&self) -> &[usize] {
        self.value.shape()
    }

    pub fn graph(&self) -> &'g Graph<F> {
        self.graph
    }

    pub fn is_tracked(&self) -> bool {
        self.tracked
    }

    /// Same value, cut off from the tape.
    pub fn detach(&self) -> Var<'g, F> {
        self.graph.constant_arc(self.value.clone())
    }
}
