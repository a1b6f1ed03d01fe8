//! Dense feed-forward network: rectifier on hidden layers, identity on the
//! output layer. All parameters live in one flat buffer, laid out per layer
//! as `W` (`out x in`, row-major) followed by `b` (`out`).

use serde::{Deserialize, Serialize};

use super::matrix::{axpy, dot};
use super::{Matrix, NumericsError, Rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    dims: Vec<usize>,
    params: Vec<f64>,
}

/// Activations kept from a batched forward pass for backpropagation.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// `acts[0]` is the input; `acts[l]` is the post-activation output of layer `l`.
    acts: Vec<Matrix>,
}

impl ForwardCache {
    pub fn output(&self) -> &Matrix {
        self.acts.last().expect("cache holds at least the input")
    }
}

pub fn param_count(dims: &[usize]) -> usize {
    dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

impl Mlp {
    pub fn zeros(dims: &[usize]) -> Result<Self, NumericsError> {
        if dims.len() < 2 || dims.iter().any(|&d| d == 0) {
            return Err(NumericsError::InvalidArgument(format!(
                "mlp needs at least two positive layer dims, got {dims:?}"
            )));
        }
        Ok(Self {
            dims: dims.to_vec(),
            params: vec![0.0; param_count(dims)],
        })
    }

    /// He-normal weights, zero biases.
    pub fn random(dims: &[usize], rng: &mut Rng) -> Result<Self, NumericsError> {
        let mut net = Self::zeros(dims)?;
        let n_layers = net.num_layers();
        for l in 0..n_layers {
            let (fan_in, fan_out) = (dims[l], dims[l + 1]);
            let gain = if l + 1 == n_layers { 1.0 } else { 2.0 };
            let sd = (gain / fan_in as f64).sqrt();
            let (w_off, _) = net.layer_offsets(l);
            for k in 0..fan_in * fan_out {
                net.params[w_off + k] = sd * rng.normal();
            }
        }
        Ok(net)
    }

    pub fn from_params(dims: &[usize], params: Vec<f64>) -> Result<Self, NumericsError> {
        let mut net = Self::zeros(dims)?;
        if params.len() != net.params.len() {
            return Err(NumericsError::DimensionMismatch {
                expected: net.params.len(),
                found: params.len(),
            });
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(NumericsError::NonFinite {
                context: "mlp parameters".into(),
            });
        }
        net.params = params;
        Ok(net)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.dims.last().unwrap()
    }

    pub fn num_layers(&self) -> usize {
        self.dims.len() - 1
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// (weight offset, bias offset) of layer `l` in the flat buffer.
    pub fn layer_offsets(&self, l: usize) -> (usize, usize) {
        let mut off = 0;
        for w in self.dims.windows(2).take(l) {
            off += w[0] * w[1] + w[1];
        }
        (off, off + self.dims[l] * self.dims[l + 1])
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>, NumericsError> {
        if input.len() != self.input_dim() {
            return Err(NumericsError::DimensionMismatch {
                expected: self.input_dim(),
                found: input.len(),
            });
        }
        let mut x = input.to_vec();
        for l in 0..self.num_layers() {
            x = self.layer_forward(l, &x);
        }
        Ok(x)
    }

    fn layer_forward(&self, l: usize, x: &[f64]) -> Vec<f64> {
        let (din, dout) = (self.dims[l], self.dims[l + 1]);
        let (w_off, b_off) = self.layer_offsets(l);
        let w = &self.params[w_off..w_off + din * dout];
        let b = &self.params[b_off..b_off + dout];
        let last = l + 1 == self.num_layers();
        (0..dout)
            .map(|o| {
                let z = dot(&w[o * din..(o + 1) * din], x) + b[o];
                if last {
                    z
                } else {
                    z.max(0.0)
                }
            })
            .collect()
    }

    /// Gradient of `<forward(input), output_grad>` with respect to every
    /// parameter, in the flat parameter layout.
    pub fn backward(&self, input: &[f64], output_grad: &[f64]) -> Result<Vec<f64>, NumericsError> {
        if output_grad.len() != self.output_dim() {
            return Err(NumericsError::DimensionMismatch {
                expected: self.output_dim(),
                found: output_grad.len(),
            });
        }
        let x = Matrix::from_vec(1, input.len(), input.to_vec())?;
        let cache = self.forward_train(&x)?;
        let g = Matrix::from_vec(1, output_grad.len(), output_grad.to_vec())?;
        let mut grad = vec![0.0; self.num_params()];
        self.backward_batch(&cache, &g, &mut grad)?;
        Ok(grad)
    }

    /// Batched forward pass; rows of `inputs` are examples.
    pub fn forward_batch(&self, inputs: &Matrix) -> Result<Matrix, NumericsError> {
        self.check_batch_input(inputs)?;
        let mut x = inputs.clone();
        for l in 0..self.num_layers() {
            x = self.layer_forward_batch(l, &x);
        }
        Ok(x)
    }

    pub fn forward_train(&self, inputs: &Matrix) -> Result<ForwardCache, NumericsError> {
        self.check_batch_input(inputs)?;
        let mut acts = Vec::with_capacity(self.num_layers() + 1);
        acts.push(inputs.clone());
        for l in 0..self.num_layers() {
            let next = self.layer_forward_batch(l, &acts[l]);
            acts.push(next);
        }
        Ok(ForwardCache { acts })
    }

    fn check_batch_input(&self, inputs: &Matrix) -> Result<(), NumericsError> {
        if inputs.cols() != self.input_dim() {
            return Err(NumericsError::DimensionMismatch {
                expected: self.input_dim(),
                found: inputs.cols(),
            });
        }
        Ok(())
    }

    fn layer_forward_batch(&self, l: usize, x: &Matrix) -> Matrix {
        let (din, dout) = (self.dims[l], self.dims[l + 1]);
        let (w_off, b_off) = self.layer_offsets(l);
        let w = &self.params[w_off..w_off + din * dout];
        let b = &self.params[b_off..b_off + dout];
        let last = l + 1 == self.num_layers();
        let mut out = Matrix::zeros(x.rows(), dout);
        for i in 0..x.rows() {
            let xi = x.row(i);
            let oi = out.row_mut(i);
            for o in 0..dout {
                let z = dot(&w[o * din..(o + 1) * din], xi) + b[o];
                oi[o] = if last { z } else { z.max(0.0) };
            }
        }
        out
    }

    /// Accumulates (sums over the batch) parameter gradients into `param_grad`
    /// and returns the gradient with respect to the inputs.
    pub fn backward_batch(
        &self,
        cache: &ForwardCache,
        output_grad: &Matrix,
        param_grad: &mut [f64],
    ) -> Result<Matrix, NumericsError> {
        let batch = cache.acts[0].rows();
        if output_grad.rows() != batch || output_grad.cols() != self.output_dim() {
            return Err(NumericsError::DimensionMismatch {
                expected: batch * self.output_dim(),
                found: output_grad.rows() * output_grad.cols(),
            });
        }
        if param_grad.len() != self.num_params() {
            return Err(NumericsError::DimensionMismatch {
                expected: self.num_params(),
                found: param_grad.len(),
            });
        }
        let mut delta = output_grad.clone();
        for l in (0..self.num_layers()).rev() {
            let (din, dout) = (self.dims[l], self.dims[l + 1]);
            let (w_off, b_off) = self.layer_offsets(l);
            let x = &cache.acts[l];
            let w = &self.params[w_off..w_off + din * dout];
            {
                let (gw, gb) = param_grad[w_off..b_off + dout].split_at_mut(din * dout);
                for i in 0..batch {
                    let di = delta.row(i);
                    let xi = x.row(i);
                    for o in 0..dout {
                        let d = di[o];
                        if d == 0.0 {
                            continue;
                        }
                        gb[o] += d;
                        axpy(d, xi, &mut gw[o * din..(o + 1) * din]);
                    }
                }
            }
            let mut dx = Matrix::zeros(batch, din);
            for i in 0..batch {
                let di = delta.row(i).to_vec();
                let dxi = dx.row_mut(i);
                for (o, &d) in di.iter().enumerate() {
                    if d != 0.0 {
                        axpy(d, &w[o * din..(o + 1) * din], dxi);
                    }
                }
            }
            if l > 0 {
                // rectifier derivative: post-activation > 0 iff pre-activation > 0
                let act = &cache.acts[l];
                for (g, &a) in dx.data_mut().iter_mut().zip(act.data()) {
                    if a <= 0.0 {
                        *g = 0.0;
                    }
                }
            }
            delta = dx;
        }
        Ok(delta)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parameter_count_formula() {
        let net = Mlp::zeros(&[3, 5, 2]).unwrap();
        assert_eq!(net.num_params(), 3 * 5 + 5 + 5 * 2 + 2);
        assert!(Mlp::zeros(&[3]).is_err());
        assert!(Mlp::zeros(&[3, 0, 1]).is_err());
    }

    #[test]
    fn zero_net_outputs_zero() {
        let net = Mlp::zeros(&[4, 8, 3]).unwrap();
        assert_eq!(net.forward(&[1.0, -2.0, 3.0, 0.5]).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn single_linear_layer() {
        // W = [[1, 2], [3, -1], [0, 4]], b = [0.5, -1, 2]
        let params = vec![1.0, 2.0, 3.0, -1.0, 0.0, 4.0, 0.5, -1.0, 2.0];
        let net = Mlp::from_params(&[2, 3], params).unwrap();
        let y = net.forward(&[2.0, -1.0]).unwrap();
        assert_eq!(y, vec![0.5, 6.0, -2.0]);
    }

    #[test]
    fn two_layer_hand_forward() {
        // hidden: W1 = [[1, -1], [2, 1]], b1 = [0, -3] ; output W2 = [[1, 2]], b2 = [1]
        // input (1, 2): pre = (-1, 1) -> relu (0, 1) -> 0*1 + 1*2 + 1 = 3
        let params = vec![1.0, -1.0, 2.0, 1.0, 0.0, -3.0, 1.0, 2.0, 1.0];
        let net = Mlp::from_params(&[2, 2, 1], params).unwrap();
        assert_eq!(net.forward(&[1.0, 2.0]).unwrap(), vec![3.0]);
    }

    #[test]
    fn dimension_mismatch() {
        let net = Mlp::zeros(&[2, 1]).unwrap();
        assert!(net.forward(&[1.0]).is_err());
        assert!(net.backward(&[1.0, 2.0], &[1.0, 1.0]).is_err());
    }

    #[test]
    fn zero_output_grad_gives_zero_gradient() {
        let net = Mlp::random(&[3, 4, 2], &mut Rng::new(1, 0)).unwrap();
        let g = net.backward(&[0.3, -0.2, 1.0], &[0.0, 0.0]).unwrap();
        assert!(g.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn linear_layer_weight_gradient_is_outer_product() {
        let net = Mlp::random(&[3, 2], &mut Rng::new(5, 0)).unwrap();
        let x = [0.5, -1.0, 2.0];
        let gy = [1.5, -0.25];
        let g = net.backward(&x, &gy).unwrap();
        for o in 0..2 {
            for i in 0..3 {
                assert!((g[o * 3 + i] - gy[o] * x[i]).abs() < 1e-15);
            }
            assert_eq!(g[6 + o], gy[o]);
        }
    }

    #[test]
    fn batch_forward_matches_single() {
        let mut rng = Rng::new(11, 0);
        let net = Mlp::random(&[3, 6, 6, 2], &mut rng).unwrap();
        let xs = Matrix::from_fn(5, 3, |_, _| rng.normal());
        let yb = net.forward_batch(&xs).unwrap();
        for i in 0..5 {
            let y = net.forward(xs.row(i)).unwrap();
            for o in 0..2 {
                assert!((y[o] - yb.get(i, o)).abs() < 1e-14);
            }
        }
    }
}
