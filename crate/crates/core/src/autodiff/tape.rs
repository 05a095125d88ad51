//! Reverse-mode gradient tape.
//!
//! Records vector-valued operations (network layers, Ansatz evaluations,
//! dynamics right-hand sides, squared-error reductions) during the forward
//! pass and replays them in reverse to accumulate adjoints into the network
//! parameters. Nodes may carry a forward-mode tangent next to their value;
//! backpropagating through a [`Tape::tangent_of`] node yields
//! forward-over-reverse second-order gradients, which is how losses
//! containing `∂x̂/∂t` are differentiated with respect to the parameters.
//!
//! A tape borrows the network immutably, so concurrent evaluations each own
//! a private tape and parameter updates happen strictly between passes.

use crate::ansatz::{self, AnsatzSpec, BaseFunction};
use crate::autodiff::gelu;
use crate::autodiff::mlp::{Mlp, MlpGradients};
use crate::dynamics::SystemModel;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

#[derive(Debug)]
enum Op {
    Input,
    /// `W[layer]·x + b[layer]`.
    Affine { layer: usize, input: NodeId },
    /// Elementwise GELU; `aux` caches the inner tanh per element.
    Gelu { input: NodeId },
    /// `scale ⊙ x + offset`; only the scale matters for the backward pass.
    Axpy { input: NodeId, scale: Vec<f64> },
    /// Value = tangent of the input node.
    TangentOf { input: NodeId },
    /// Ansatz `g(a, t)`; `partial[k] = ∂g_{state(k)}/∂a_k` cached at forward.
    AnsatzValue { coeffs: NodeId, spec: AnsatzSpec, partial: Vec<f64> },
    /// Ansatz `ġ(a, t)` with its coefficient partials.
    AnsatzSlope { coeffs: NodeId, spec: AnsatzSpec, partial: Vec<f64> },
    /// Dynamics right-hand side at the node state; `jacobian` is ∂f/∂x.
    Dynamics { state: NodeId, jacobian: Vec<f64> },
    /// Scalar `Σ_i (a_i − b_i)²`.
    SumSqDiff { a: NodeId, b: NodeId },
    /// Scalar `Σ_i (x_i − target_i)²`.
    SumSqDiffConst { input: NodeId, target: Vec<f64> },
    /// Scalar `Σ_i x_i`.
    SumEntries { input: NodeId },
    /// Scalar `Σ_k c_k·x_k` over scalar nodes.
    WeightedSum { terms: Vec<(f64, NodeId)> },
}

#[derive(Debug)]
struct Node {
    op: Op,
    value: Vec<f64>,
    tangent: Option<Vec<f64>>,
    aux: Vec<f64>,
}

pub struct Tape<'m> {
    net: &'m Mlp,
    nodes: Vec<Node>,
    consumed: bool,
}

impl<'m> Tape<'m> {
    pub fn new(net: &'m Mlp) -> Self {
        Tape {
            net,
            nodes: Vec::new(),
            consumed: false,
        }
    }

    pub fn net(&self) -> &Mlp {
        self.net
    }

    fn push(&mut self, op: Op, value: Vec<f64>, tangent: Option<Vec<f64>>, aux: Vec<f64>) -> NodeId {
        self.nodes.push(Node {
            op,
            value,
            tangent,
            aux,
        });
        NodeId(self.nodes.len() - 1)
    }

    pub fn value(&self, id: NodeId) -> &[f64] {
        &self.nodes[id.0].value
    }

    pub fn tangent(&self, id: NodeId) -> Option<&[f64]> {
        self.nodes[id.0].tangent.as_deref()
    }

    pub fn scalar(&self, id: NodeId) -> f64 {
        debug_assert_eq!(self.nodes[id.0].value.len(), 1);
        self.nodes[id.0].value[0]
    }

    /// Constant leaf.
    pub fn input(&mut self, values: Vec<f64>) -> NodeId {
        self.push(Op::Input, values, None, Vec::new())
    }

    /// Leaf with a forward-mode tangent seed.
    pub fn input_with_tangent(&mut self, values: Vec<f64>, tangent: Vec<f64>) -> Result<NodeId> {
        if values.len() != tangent.len() {
            return Err(Error::DimensionMismatch {
                context: "input tangent",
                expected: values.len(),
                got: tangent.len(),
            });
        }
        Ok(self.push(Op::Input, values, Some(tangent), Vec::new()))
    }

    fn affine(&mut self, layer: usize, input: NodeId) -> NodeId {
        let x = &self.nodes[input.0];
        let mut value = Vec::new();
        self.net.affine(layer, &x.value, &mut value);
        let tangent = x.tangent.as_ref().map(|t| {
            let rows = value.len();
            let cols = t.len();
            let w = self.net.weights(layer);
            let mut out = Vec::with_capacity(rows);
            for r in 0..rows {
                let row = &w[r * cols..(r + 1) * cols];
                out.push(row.iter().zip(t.iter()).map(|(a, b)| a * b).sum());
            }
            out
        });
        self.push(Op::Affine { layer, input }, value, tangent, Vec::new())
    }

    fn gelu(&mut self, input: NodeId) -> NodeId {
        let x = &self.nodes[input.0];
        let n = x.value.len();
        let mut value = Vec::with_capacity(n);
        let mut aux = Vec::with_capacity(n);
        for &v in &x.value {
            let (y, u) = gelu::gelu_with_cache(v);
            value.push(y);
            aux.push(u);
        }
        let tangent = x.tangent.as_ref().map(|t| {
            x.value
                .iter()
                .zip(aux.iter())
                .zip(t.iter())
                .map(|((&xv, &u), &tv)| gelu::grad_from_cache(xv, u) * tv)
                .collect()
        });
        self.push(Op::Gelu { input }, value, tangent, aux)
    }

    /// Full network forward pass recorded on the tape.
    pub fn mlp_forward(&mut self, input: NodeId) -> Result<NodeId> {
        if self.nodes[input.0].value.len() != self.net.input_dim() {
            return Err(Error::DimensionMismatch {
                context: "mlp input node",
                expected: self.net.input_dim(),
                got: self.nodes[input.0].value.len(),
            });
        }
        let last = self.net.layer_count() - 1;
        let mut cur = input;
        for l in 0..self.net.layer_count() {
            cur = self.affine(l, cur);
            if l != last {
                cur = self.gelu(cur);
            }
        }
        Ok(cur)
    }

    pub fn axpy(&mut self, input: NodeId, scale: Vec<f64>, offset: Vec<f64>) -> NodeId {
        let x = &self.nodes[input.0];
        debug_assert_eq!(x.value.len(), scale.len());
        debug_assert_eq!(x.value.len(), offset.len());
        let value = x
            .value
            .iter()
            .zip(scale.iter())
            .zip(offset.iter())
            .map(|((v, s), o)| v * s + o)
            .collect();
        let tangent = x
            .tangent
            .as_ref()
            .map(|t| t.iter().zip(scale.iter()).map(|(v, s)| v * s).collect());
        self.push(Op::Axpy { input, scale }, value, tangent, Vec::new())
    }

    /// Materialize the tangent of a dual node as a value node.
    pub fn tangent_of(&mut self, input: NodeId) -> Result<NodeId> {
        let t = self.nodes[input.0]
            .tangent
            .clone()
            .ok_or(Error::Misuse {
                context: "tangent_of on a node without a tangent",
            })?;
        Ok(self.push(Op::TangentOf { input }, t, None, Vec::new()))
    }

    /// Ansatz value and slope at `t`, with closed-form coefficient partials
    /// cached for the backward pass. Returns `(g, ġ)` nodes.
    pub fn ansatz(
        &mut self,
        coeffs: NodeId,
        spec: AnsatzSpec,
        phi: &BaseFunction,
        t: f64,
    ) -> Result<(NodeId, NodeId)> {
        let a = &self.nodes[coeffs.0].value;
        let g = ansatz::eval_g(&spec, a, phi, t)?;
        let g_dot = ansatz::eval_g_dot(&spec, a, phi, t)?;
        let partials = ansatz::partials_wrt_coefficients(&spec, a, phi, t)?;
        let value_node = self.push(
            Op::AnsatzValue {
                coeffs,
                spec,
                partial: partials.dg,
            },
            g,
            None,
            Vec::new(),
        );
        let slope_node = self.push(
            Op::AnsatzSlope {
                coeffs,
                spec,
                partial: partials.dg_dot,
            },
            g_dot,
            None,
            Vec::new(),
        );
        Ok((value_node, slope_node))
    }

    /// Dynamics right-hand side evaluated at a recorded state, with the
    /// state Jacobian cached so adjoints flow through the model's own
    /// prediction.
    pub fn dynamics(&mut self, system: &SystemModel, state: NodeId, u: &[f64]) -> Result<NodeId> {
        let x = &self.nodes[state.0].value;
        if x.len() != system.state_dim() {
            return Err(Error::DimensionMismatch {
                context: "dynamics state node",
                expected: system.state_dim(),
                got: x.len(),
            });
        }
        let (value, jacobian) = system.rhs_with_jacobian(x, u);
        if value.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: format!("dynamics rhs at state {x:?}"),
            });
        }
        Ok(self.push(Op::Dynamics { state, jacobian }, value, None, Vec::new()))
    }

    pub fn sum_sq_diff(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let va = &self.nodes[a.0].value;
        let vb = &self.nodes[b.0].value;
        debug_assert_eq!(va.len(), vb.len());
        let s = va
            .iter()
            .zip(vb.iter())
            .map(|(x, y)| (x - y) * (x - y))
            .sum();
        self.push(Op::SumSqDiff { a, b }, vec![s], None, Vec::new())
    }

    pub fn sum_sq_diff_const(&mut self, input: NodeId, target: Vec<f64>) -> NodeId {
        let v = &self.nodes[input.0].value;
        debug_assert_eq!(v.len(), target.len());
        let s = v
            .iter()
            .zip(target.iter())
            .map(|(x, y)| (x - y) * (x - y))
            .sum();
        self.push(Op::SumSqDiffConst { input, target }, vec![s], None, Vec::new())
    }

    pub fn sum_entries(&mut self, input: NodeId) -> NodeId {
        let s = self.nodes[input.0].value.iter().sum();
        self.push(Op::SumEntries { input }, vec![s], None, Vec::new())
    }

    /// `Σ c_k·x_k` over scalar nodes.
    pub fn weighted_sum(&mut self, terms: Vec<(f64, NodeId)>) -> NodeId {
        let s = terms
            .iter()
            .map(|(c, id)| c * self.nodes[id.0].value[0])
            .sum();
        self.push(Op::WeightedSum { terms }, vec![s], None, Vec::new())
    }

    /// Backpropagate from a scalar root and return the parameter gradients.
    /// Adjoints of layers the root does not depend on are zero. A second
    /// call on the same tape is an error.
    pub fn backward(&mut self, root: NodeId) -> Result<MlpGradients> {
        if self.consumed {
            return Err(Error::TapeConsumed);
        }
        let root_len = self.nodes[root.0].value.len();
        if root_len != 1 {
            return Err(Error::NonScalarRoot { len: root_len });
        }
        self.consumed = true;

        let n = self.nodes.len();
        let mut adj: Vec<Vec<f64>> = vec![Vec::new(); n];
        let mut adj_tan: Vec<Vec<f64>> = vec![Vec::new(); n];
        let mut grads = MlpGradients::zeros_like(self.net);

        fn ensure(buf: &mut Vec<f64>, len: usize) {
            if buf.is_empty() {
                buf.resize(len, 0.0);
            }
        }

        ensure(&mut adj[root.0], 1);
        adj[root.0][0] = 1.0;

        for idx in (0..=root.0).rev() {
            let val_adj = std::mem::take(&mut adj[idx]);
            let tan_adj = std::mem::take(&mut adj_tan[idx]);
            if val_adj.is_empty() && tan_adj.is_empty() {
                continue;
            }
            let has_val = !val_adj.is_empty();
            let has_tan = !tan_adj.is_empty();
            match &self.nodes[idx].op {
                Op::Input => {}
                Op::Affine { layer, input } => {
                    let layer = *layer;
                    let input = *input;
                    let in_len = self.nodes[input.0].value.len();
                    if has_val {
                        ensure(&mut adj[input.0], in_len);
                        self.net.affine_transpose_acc(layer, &val_adj, &mut adj[input.0]);
                        let in_val = &self.nodes[input.0].value;
                        let gw = &mut grads.weights[layer];
                        for (r, &ar) in val_adj.iter().enumerate() {
                            if ar != 0.0 {
                                let row = &mut gw[r * in_len..(r + 1) * in_len];
                                for (c, &xv) in in_val.iter().enumerate() {
                                    row[c] += ar * xv;
                                }
                            }
                            grads.biases[layer][r] += ar;
                        }
                    }
                    if has_tan {
                        ensure(&mut adj_tan[input.0], in_len);
                        self.net
                            .affine_transpose_acc(layer, &tan_adj, &mut adj_tan[input.0]);
                        let in_tan = self.nodes[input.0]
                            .tangent
                            .as_ref()
                            .expect("affine tangent requires input tangent");
                        let gw = &mut grads.weights[layer];
                        for (r, &ar) in tan_adj.iter().enumerate() {
                            if ar != 0.0 {
                                let row = &mut gw[r * in_len..(r + 1) * in_len];
                                for (c, &xv) in in_tan.iter().enumerate() {
                                    row[c] += ar * xv;
                                }
                            }
                        }
                    }
                }
                Op::Gelu { input } => {
                    let input = *input;
                    let in_len = self.nodes[input.0].value.len();
                    let x = &self.nodes[input.0].value;
                    let u = &self.nodes[idx].aux;
                    if has_val {
                        ensure(&mut adj[input.0], in_len);
                        for i in 0..in_len {
                            adj[input.0][i] += gelu::grad_from_cache(x[i], u[i]) * val_adj[i];
                        }
                    }
                    if has_tan {
                        let in_tan = self.nodes[input.0]
                            .tangent
                            .as_ref()
                            .expect("gelu tangent requires input tangent")
                            .clone();
                        ensure(&mut adj[input.0], in_len);
                        ensure(&mut adj_tan[input.0], in_len);
                        for i in 0..in_len {
                            let g1 = gelu::grad_from_cache(x[i], u[i]);
                            let g2 = gelu::curvature_from_cache(x[i], u[i]);
                            adj[input.0][i] += g2 * in_tan[i] * tan_adj[i];
                            adj_tan[input.0][i] += g1 * tan_adj[i];
                        }
                    }
                }
                Op::Axpy { input, scale } => {
                    let input = *input;
                    let in_len = self.nodes[input.0].value.len();
                    if has_val {
                        ensure(&mut adj[input.0], in_len);
                        for i in 0..in_len {
                            adj[input.0][i] += scale[i] * val_adj[i];
                        }
                    }
                    if has_tan {
                        ensure(&mut adj_tan[input.0], in_len);
                        for i in 0..in_len {
                            adj_tan[input.0][i] += scale[i] * tan_adj[i];
                        }
                    }
                }
                Op::TangentOf { input } => {
                    let input = *input;
                    if has_val {
                        let in_len = self.nodes[input.0].value.len();
                        ensure(&mut adj_tan[input.0], in_len);
                        for i in 0..in_len {
                            adj_tan[input.0][i] += val_adj[i];
                        }
                    }
                }
                Op::AnsatzValue { coeffs, spec, partial }
                | Op::AnsatzSlope { coeffs, spec, partial } => {
                    if has_val {
                        let coeffs = *coeffs;
                        let len = partial.len();
                        ensure(&mut adj[coeffs.0], len);
                        for k in 0..len {
                            let j = spec.state_of(k);
                            adj[coeffs.0][k] += partial[k] * val_adj[j];
                        }
                    }
                }
                Op::Dynamics { state, jacobian } => {
                    if has_val {
                        let state = *state;
                        let m = val_adj.len();
                        ensure(&mut adj[state.0], m);
                        for r in 0..m {
                            let ar = val_adj[r];
                            if ar != 0.0 {
                                for c in 0..m {
                                    adj[state.0][c] += jacobian[r * m + c] * ar;
                                }
                            }
                        }
                    }
                }
                Op::SumSqDiff { a, b } => {
                    if has_val {
                        let (a, b) = (*a, *b);
                        let s = val_adj[0];
                        let len = self.nodes[a.0].value.len();
                        ensure(&mut adj[a.0], len);
                        ensure(&mut adj[b.0], len);
                        for i in 0..len {
                            let d = 2.0 * (self.nodes[a.0].value[i] - self.nodes[b.0].value[i]) * s;
                            adj[a.0][i] += d;
                            adj[b.0][i] -= d;
                        }
                    }
                }
                Op::SumSqDiffConst { input, target } => {
                    if has_val {
                        let input = *input;
                        let s = val_adj[0];
                        let len = target.len();
                        ensure(&mut adj[input.0], len);
                        for i in 0..len {
                            adj[input.0][i] +=
                                2.0 * (self.nodes[input.0].value[i] - target[i]) * s;
                        }
                    }
                }
                Op::SumEntries { input } => {
                    if has_val {
                        let input = *input;
                        let s = val_adj[0];
                        let len = self.nodes[input.0].value.len();
                        ensure(&mut adj[input.0], len);
                        for i in 0..len {
                            adj[input.0][i] += s;
                        }
                    }
                }
                Op::WeightedSum { terms } => {
                    if has_val {
                        let s = val_adj[0];
                        let terms = terms.clone();
                        for (c, id) in terms {
                            ensure(&mut adj[id.0], 1);
                            adj[id.0][0] += c * s;
                        }
                    }
                }
            }
        }
        Ok(grads)
    }
}
