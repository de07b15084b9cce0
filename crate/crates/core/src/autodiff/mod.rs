//! Reverse-mode automatic differentiation on f64 ndarray tensors.
//!
//! A `Tape` records one forward computation as a flat list of nodes; each op
//! stores its parents and a backward closure mapping the incoming gradient
//! to parent gradients. Everything is 64-bit so analytic gradients can be
//! validated against central finite differences at tight tolerances.
//!
//! The op set is deliberately small: what the encoders, decoder,
//! discriminators and losses need, nothing else. There is no transposed
//! convolution anywhere in this module.

mod conv;
mod ops;

pub mod check;

use ndarray::{ArrayD, IxDyn};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TensorId(pub(crate) usize);

type BackwardFn =
    Box<dyn Fn(&[&ArrayD<f64>], &ArrayD<f64>, &ArrayD<f64>) -> Vec<ArrayD<f64>>>;

struct OpRecord {
    parents: Vec<usize>,
    backward: BackwardFn,
}

/// One recorded forward computation.
pub struct Tape {
    values: Vec<ArrayD<f64>>,
    records: Vec<Option<OpRecord>>,
    requires: Vec<bool>,
    op_names: Vec<&'static str>,
    grad_enabled: bool,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    /// Tape that records gradients.
    pub fn new() -> Self {
        Tape {
            values: Vec::new(),
            records: Vec::new(),
            requires: Vec::new(),
            op_names: Vec::new(),
            grad_enabled: true,
        }
    }

    /// Tape that only evaluates forward values (inference mode).
    pub fn no_grad() -> Self {
        Tape {
            grad_enabled: false,
            ..Tape::new()
        }
    }

    pub fn grad_enabled(&self) -> bool {
        self.grad_enabled
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Names of every op recorded so far, in execution order. Used by
    /// structural tests (e.g. asserting the decoder's upsampling path).
    pub fn op_log(&self) -> &[&'static str] {
        &self.op_names
    }

    pub fn value(&self, id: TensorId) -> &ArrayD<f64> {
        &self.values[id.0]
    }

    pub fn shape(&self, id: TensorId) -> &[usize] {
        self.values[id.0].shape()
    }

    /// Scalar value of a 0-dim (or single-element) node.
    pub fn scalar(&self, id: TensorId) -> f64 {
        let v = &self.values[id.0];
        debug_assert_eq!(v.len(), 1, "scalar() on non-scalar node");
        *v.iter().next().expect("non-empty")
    }

    fn push(
        &mut self,
        name: &'static str,
        value: ArrayD<f64>,
        parents: Vec<usize>,
        backward: Option<BackwardFn>,
    ) -> TensorId {
        debug_assert!(
            value.iter().all(|v| v.is_finite()),
            "op {name} produced non-finite values"
        );
        let requires =
            self.grad_enabled && parents.iter().any(|&p| self.requires[p]);
        let record = if requires {
            backward.map(|b| OpRecord { parents, backward: b })
        } else {
            None
        };
        self.values.push(value);
        self.records.push(record);
        self.requires.push(requires);
        self.op_names.push(name);
        TensorId(self.values.len() - 1)
    }

    /// Leaf node holding a trainable value.
    pub fn param(&mut self, value: ArrayD<f64>) -> TensorId {
        let requires = self.grad_enabled;
        self.values.push(value);
        self.records.push(None);
        self.requires.push(requires);
        self.op_names.push("param");
        TensorId(self.values.len() - 1)
    }

    /// Leaf node that never receives gradients.
    pub fn constant(&mut self, value: ArrayD<f64>) -> TensorId {
        self.values.push(value);
        self.records.push(None);
        self.requires.push(false);
        self.op_names.push("constant");
        TensorId(self.values.len() - 1)
    }

    /// Copy a node's value into a fresh constant leaf, cutting the graph.
    pub fn detach(&mut self, id: TensorId) -> TensorId {
        let v = self.values[id.0].clone();
        self.constant(v)
    }

    /// Backpropagate from a scalar node; returns gradients for every node
    /// reachable on a differentiable path.
    pub fn backward(&self, root: TensorId) -> Gradients {
        assert_eq!(
            self.values[root.0].len(),
            1,
            "backward() root must be scalar, got shape {:?}",
            self.values[root.0].shape()
        );
        assert!(
            self.requires[root.0],
            "backward() root does not require grad"
        );
        let mut grads: Vec<Option<ArrayD<f64>>> = vec![None; self.values.len()];
        grads[root.0] = Some(ArrayD::ones(self.values[root.0].raw_dim()));
        for i in (0..=root.0).rev() {
            if grads[i].is_none() || !self.requires[i] {
                continue;
            }
            let Some(rec) = &self.records[i] else { continue };
            let g = grads[i].take().expect("checked above");
            let parent_vals: Vec<&ArrayD<f64>> =
                rec.parents.iter().map(|&p| &self.values[p]).collect();
            let pgrads = (rec.backward)(&parent_vals, &self.values[i], &g);
            debug_assert_eq!(pgrads.len(), rec.parents.len());
            for (&p, pg) in rec.parents.iter().zip(pgrads) {
                if !self.requires[p] {
                    continue;
                }
                debug_assert_eq!(
                    pg.shape(),
                    self.values[p].shape(),
                    "gradient shape mismatch into {} node",
                    self.op_names[p]
                );
                match &mut grads[p] {
                    Some(acc) => *acc += &pg,
                    slot => *slot = Some(pg),
                }
            }
            grads[i] = Some(g);
        }
        Gradients { grads }
    }
}

/// Gradients produced by one [`Tape::backward`] pass.
pub struct Gradients {
    grads: Vec<Option<ArrayD<f64>>>,
}

impl Gradients {
    pub fn get(&self, id: TensorId) -> Option<&ArrayD<f64>> {
        self.grads.get(id.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, id: TensorId) -> Option<ArrayD<f64>> {
        self.grads.get_mut(id.0).and_then(|g| g.take())
    }
}

/// Convenience: a 0-dim scalar array.
pub fn scalar_array(v: f64) -> ArrayD<f64> {
    ArrayD::from_elem(IxDyn(&[]), v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::arr1;

    #[test]
    fn chain_of_simple_ops_backprops() {
        // f(x) = mean((2x + 1)^2), df/dx = 4(2x+1)/n
        let mut t = Tape::new();
        let x = t.param(arr1(&[1.0, -2.0, 0.5]).into_dyn());
        let y = t.scale(x, 2.0);
        let y = t.add_scalar(y, 1.0);
        let y = t.square(y);
        let loss = t.mean_all(y);
        let grads = t.backward(loss);
        let gx = grads.get(x).unwrap();
        let expect = [4.0 * 3.0 / 3.0, 4.0 * -3.0 / 3.0, 4.0 * 2.0 / 3.0];
        for (g, e) in gx.iter().zip(expect) {
            assert!((g - e).abs() < 1e-12);
        }
    }

    #[test]
    fn constants_receive_no_gradient() {
        let mut t = Tape::new();
        let x = t.param(arr1(&[1.0, 2.0]).into_dyn());
        let c = t.constant(arr1(&[3.0, 4.0]).into_dyn());
        let y = t.mul(x, c);
        let loss = t.sum_all(y);
        let grads = t.backward(loss);
        assert!(grads.get(c).is_none());
        assert_eq!(grads.get(x).unwrap().as_slice().unwrap(), &[3.0, 4.0]);
    }

    #[test]
    fn gradient_accumulates_across_branches() {
        // f(x) = sum(x*x) + sum(x) -> df/dx = 2x + 1
        let mut t = Tape::new();
        let x = t.param(arr1(&[1.5, -0.5]).into_dyn());
        let a = t.square(x);
        let s1 = t.sum_all(a);
        let s2 = t.sum_all(x);
        let loss = t.add(s1, s2);
        let grads = t.backward(loss);
        let gx = grads.get(x).unwrap();
        assert!((gx[[0]] - 4.0).abs() < 1e-12);
        assert!((gx[[1]] - 0.0).abs() < 1e-12);
    }

    #[test]
    fn no_grad_tape_records_nothing() {
        let mut t = Tape::no_grad();
        let x = t.param(arr1(&[1.0]).into_dyn());
        let y = t.square(x);
        assert!(!t.requires[y.0]);
    }

    #[test]
    fn detach_cuts_the_graph() {
        let mut t = Tape::new();
        let x = t.param(arr1(&[2.0]).into_dyn());
        let y = t.square(x);
        let d = t.detach(y);
        let z = t.square(d);
        let loss = t.sum_all(z);
        assert!(!t.requires[loss.0]);
    }
}
