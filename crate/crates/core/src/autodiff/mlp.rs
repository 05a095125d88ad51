//! Feed-forward network with GELU hidden layers and an affine output layer.
//!
//! Weights are stored row-major per layer, shape `(out, in)`. All arithmetic
//! is f64 and strictly sequential, so identical inputs give bitwise-identical
//! outputs.

use rand::Rng;

use crate::autodiff::dual::Dual;
use crate::autodiff::gelu;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layer_sizes: Vec<usize>,
    /// Row-major `(layer_sizes[l+1] × layer_sizes[l])` per layer.
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
}

impl Mlp {
    /// All-zero parameters.
    pub fn zeros(layer_sizes: &[usize]) -> Result<Self> {
        Self::check_sizes(layer_sizes)?;
        let weights = (0..layer_sizes.len() - 1)
            .map(|l| vec![0.0; layer_sizes[l + 1] * layer_sizes[l]])
            .collect();
        let biases = (0..layer_sizes.len() - 1)
            .map(|l| vec![0.0; layer_sizes[l + 1]])
            .collect();
        Ok(Mlp {
            layer_sizes: layer_sizes.to_vec(),
            weights,
            biases,
        })
    }

    /// Glorot-uniform initialization; biases zero.
    pub fn glorot(layer_sizes: &[usize], rng: &mut impl Rng) -> Result<Self> {
        let mut net = Self::zeros(layer_sizes)?;
        for l in 0..net.layer_count() {
            let (fan_in, fan_out) = (layer_sizes[l], layer_sizes[l + 1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for w in net.weights[l].iter_mut() {
                *w = rng.gen_range(-limit..limit);
            }
        }
        Ok(net)
    }

    /// Rebuild from stored arrays, validating shapes and finiteness.
    pub fn from_parts(
        layer_sizes: Vec<usize>,
        weights: Vec<Vec<f64>>,
        biases: Vec<Vec<f64>>,
    ) -> Result<Self> {
        Self::check_sizes(&layer_sizes)?;
        let layers = layer_sizes.len() - 1;
        if weights.len() != layers {
            return Err(Error::DimensionMismatch {
                context: "mlp weights layer count",
                expected: layers,
                got: weights.len(),
            });
        }
        if biases.len() != layers {
            return Err(Error::DimensionMismatch {
                context: "mlp biases layer count",
                expected: layers,
                got: biases.len(),
            });
        }
        for l in 0..layers {
            let expect_w = layer_sizes[l + 1] * layer_sizes[l];
            if weights[l].len() != expect_w {
                return Err(Error::DimensionMismatch {
                    context: "mlp weight matrix",
                    expected: expect_w,
                    got: weights[l].len(),
                });
            }
            if biases[l].len() != layer_sizes[l + 1] {
                return Err(Error::DimensionMismatch {
                    context: "mlp bias vector",
                    expected: layer_sizes[l + 1],
                    got: biases[l].len(),
                });
            }
            if weights[l].iter().chain(biases[l].iter()).any(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    context: format!("mlp parameters of layer {l}"),
                });
            }
        }
        Ok(Mlp {
            layer_sizes,
            weights,
            biases,
        })
    }

    fn check_sizes(layer_sizes: &[usize]) -> Result<()> {
        if layer_sizes.len() < 2 || layer_sizes.iter().any(|&s| s == 0) {
            return Err(Error::InvalidArgument {
                context: format!("layer sizes must be >= 2 positive entries, got {layer_sizes:?}"),
            });
        }
        Ok(())
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    /// Number of weight layers.
    pub fn layer_count(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn num_params(&self) -> usize {
        self.weights.iter().map(Vec::len).sum::<usize>()
            + self.biases.iter().map(Vec::len).sum::<usize>()
    }

    pub fn weights(&self, layer: usize) -> &[f64] {
        &self.weights[layer]
    }

    pub fn biases(&self, layer: usize) -> &[f64] {
        &self.biases[layer]
    }

    pub fn weights_mut(&mut self, layer: usize) -> &mut [f64] {
        &mut self.weights[layer]
    }

    pub fn biases_mut(&mut self, layer: usize) -> &mut [f64] {
        &mut self.biases[layer]
    }

    fn check_input(&self, input: &[f64]) -> Result<()> {
        if input.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                context: "mlp input",
                expected: self.input_dim(),
                got: input.len(),
            });
        }
        Ok(())
    }

    /// Affine map of layer `l` applied to `x`.
    pub(crate) fn affine(&self, l: usize, x: &[f64], out: &mut Vec<f64>) {
        let (rows, cols) = (self.layer_sizes[l + 1], self.layer_sizes[l]);
        let w = &self.weights[l];
        let b = &self.biases[l];
        out.clear();
        out.reserve(rows);
        for r in 0..rows {
            let row = &w[r * cols..(r + 1) * cols];
            let mut acc = b[r];
            for (wi, xi) in row.iter().zip(x.iter()) {
                acc += wi * xi;
            }
            out.push(acc);
        }
    }

    /// Transposed matvec of layer `l`: `out += Wᵀ·v`.
    pub(crate) fn affine_transpose_acc(&self, l: usize, v: &[f64], out: &mut [f64]) {
        let (rows, cols) = (self.layer_sizes[l + 1], self.layer_sizes[l]);
        let w = &self.weights[l];
        for r in 0..rows {
            let vr = v[r];
            if vr == 0.0 {
                continue;
            }
            let row = &w[r * cols..(r + 1) * cols];
            for c in 0..cols {
                out[c] += row[c] * vr;
            }
        }
    }

    /// Plain forward pass: GELU on hidden layers, identity on the output.
    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.check_input(input)?;
        let mut cur = input.to_vec();
        let mut next = Vec::new();
        let last = self.layer_count() - 1;
        for l in 0..self.layer_count() {
            self.affine(l, &cur, &mut next);
            if l != last {
                for v in next.iter_mut() {
                    *v = gelu::gelu(*v);
                }
            }
            std::mem::swap(&mut cur, &mut next);
        }
        Ok(cur)
    }

    /// Forward pass together with the derivative of every output with
    /// respect to `input[seed_index]`, via dual numbers.
    pub fn forward_with_input_derivative(
        &self,
        input: &[f64],
        seed_index: usize,
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        self.check_input(input)?;
        if seed_index >= input.len() {
            return Err(Error::IndexOutOfRange {
                context: "mlp derivative seed",
                index: seed_index,
                len: input.len(),
            });
        }
        let mut cur: Vec<Dual> = input
            .iter()
            .enumerate()
            .map(|(i, &v)| Dual::new(v, if i == seed_index { 1.0 } else { 0.0 }))
            .collect();
        let last = self.layer_count() - 1;
        for l in 0..self.layer_count() {
            let (rows, cols) = (self.layer_sizes[l + 1], self.layer_sizes[l]);
            let w = &self.weights[l];
            let b = &self.biases[l];
            let mut next = Vec::with_capacity(rows);
            for r in 0..rows {
                let row = &w[r * cols..(r + 1) * cols];
                let mut val = b[r];
                let mut tan = 0.0;
                for (wi, xi) in row.iter().zip(cur.iter()) {
                    val += wi * xi.val;
                    tan += wi * xi.tan;
                }
                let mut z = Dual::new(val, tan);
                if l != last {
                    let (y, u) = gelu::gelu_with_cache(z.val);
                    z = Dual::new(y, gelu::grad_from_cache(z.val, u) * z.tan);
                }
                next.push(z);
            }
            cur = next;
        }
        Ok((
            cur.iter().map(|d| d.val).collect(),
            cur.iter().map(|d| d.tan).collect(),
        ))
    }
}

/// Gradient buffers mirroring an [`Mlp`]'s parameter layout.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGradients {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl MlpGradients {
    pub fn zeros_like(net: &Mlp) -> Self {
        MlpGradients {
            weights: net.weights.iter().map(|w| vec![0.0; w.len()]).collect(),
            biases: net.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
        }
    }

    /// `self += c·other`, layerwise.
    pub fn axpy(&mut self, c: f64, other: &MlpGradients) {
        for (a, b) in self.weights.iter_mut().zip(other.weights.iter()) {
            for (x, y) in a.iter_mut().zip(b.iter()) {
                *x += c * y;
            }
        }
        for (a, b) in self.biases.iter_mut().zip(other.biases.iter()) {
            for (x, y) in a.iter_mut().zip(b.iter()) {
                *x += c * y;
            }
        }
    }

    pub fn scale(&mut self, c: f64) {
        for w in self.weights.iter_mut() {
            for x in w.iter_mut() {
                *x *= c;
            }
        }
        for b in self.biases.iter_mut() {
            for x in b.iter_mut() {
                *x *= c;
            }
        }
    }

    /// Iterate all entries in a fixed order (weights then bias per layer).
    pub fn entries(&self) -> impl Iterator<Item = f64> + '_ {
        self.weights
            .iter()
            .zip(self.biases.iter())
            .flat_map(|(w, b)| w.iter().chain(b.iter()))
            .copied()
    }

    pub fn max_abs(&self) -> f64 {
        self.entries().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn mean_abs(&self) -> f64 {
        let mut sum = 0.0;
        let mut n = 0usize;
        for v in self.entries() {
            sum += v.abs();
            n += 1;
        }
        if n == 0 {
            0.0
        } else {
            sum / n as f64
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_weights_pass_only_bias() {
        let mut net = Mlp::zeros(&[3, 2]).unwrap();
        net.biases_mut(0).copy_from_slice(&[1.0, -2.0]);
        for input in [[0.0, 0.0, 0.0], [1.0, -4.0, 2.5]] {
            assert_eq!(net.forward(&input).unwrap(), vec![1.0, -2.0]);
        }
    }

    #[test]
    fn identity_linear_layer() {
        let mut net = Mlp::zeros(&[2, 2]).unwrap();
        net.weights_mut(0).copy_from_slice(&[1.0, 0.0, 0.0, 1.0]);
        assert_eq!(net.forward(&[0.5, -0.5]).unwrap(), vec![0.5, -0.5]);
    }

    #[test]
    fn matches_hand_evaluated_two_layer_formula() {
        // 1-2-1 net, seed-42 Glorot init, evaluated independently of `forward`.
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let net = Mlp::glorot(&[1, 2, 1], &mut rng).unwrap();
        let x = 1.0;
        let w0 = net.weights(0);
        let w1 = net.weights(1);
        let h0 = gelu::gelu(w0[0] * x);
        let h1 = gelu::gelu(w0[1] * x);
        let expected = w1[0] * h0 + w1[1] * h1;
        let got = net.forward(&[x]).unwrap()[0];
        assert!((got - expected).abs() < 1e-15, "{got} vs {expected}");
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let net = Mlp::zeros(&[3, 2]).unwrap();
        assert!(matches!(
            net.forward(&[1.0, 2.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn input_derivative_of_linear_layer_is_weight_column() {
        let mut net = Mlp::zeros(&[3, 2]).unwrap();
        net.weights_mut(0)
            .copy_from_slice(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let (_, d) = net
            .forward_with_input_derivative(&[0.3, -0.9, 2.0], 1)
            .unwrap();
        assert_eq!(d, vec![2.0, 5.0]);
    }

    #[test]
    fn input_derivative_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let net = Mlp::glorot(&[1, 2, 1], &mut rng).unwrap();
        let x = 0.37;
        let h = 1e-6;
        let fd = (net.forward(&[x + h]).unwrap()[0] - net.forward(&[x - h]).unwrap()[0]) / (2.0 * h);
        let (_, d) = net.forward_with_input_derivative(&[x], 0).unwrap();
        let rel = (d[0] - fd).abs() / d[0].abs().max(1.0);
        assert!(rel < 1e-5, "derivative {} vs fd {}", d[0], fd);
    }

    #[test]
    fn constant_network_has_zero_derivative() {
        let net = Mlp::zeros(&[2, 4, 2]).unwrap();
        let (_, d) = net.forward_with_input_derivative(&[0.1, 0.2], 0).unwrap();
        assert!(d.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn seed_out_of_range_is_an_error() {
        let net = Mlp::zeros(&[2, 2]).unwrap();
        assert!(matches!(
            net.forward_with_input_derivative(&[0.1, 0.2], 2),
            Err(Error::IndexOutOfRange { .. })
        ));
    }
}
