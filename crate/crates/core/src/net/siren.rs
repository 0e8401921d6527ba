use rand::Rng;
use serde::{Deserialize, Serialize};

use super::matrix::{gemm, Matrix, Op};
use super::trig::sine_activation;
use crate::error::{Error, Result};
use crate::seed;

/// Affine layer `y = W x + b` with `W` stored out x in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(input: usize, output: usize) -> Self {
        Self {
            weight: Matrix::zeros(output, input),
            bias: vec![0.0; output],
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.input_dim(), self.output_dim())
    }

    pub fn len(&self) -> usize {
        self.weight.as_slice().len() + self.bias.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Sine-activated coordinate network: every layer but the last computes
/// `sin(omega * (W x + b))`; the last is linear.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SirenNetwork {
    pub layers: Vec<Dense>,
    pub omega_first: f64,
    pub omega_hidden: f64,
}

/// Intermediates of a batched forward pass, kept for the backward pass.
#[derive(Debug, Clone)]
pub struct Forward {
    /// Output of each sine layer.
    activations: Vec<Matrix>,
    /// `omega * cos(omega * z)` for each sine layer.
    slopes: Vec<Matrix>,
    pub output: Matrix,
}

impl SirenNetwork {
    /// Zero-initialized network with layer widths `dims[0] -> dims[1] -> ... -> dims[last]`.
    pub fn new(dims: &[usize], omega_first: f64, omega_hidden: f64) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(Error::Config(format!("invalid layer widths {dims:?}")));
        }
        Ok(Self {
            layers: dims.windows(2).map(|w| Dense::zeros(w[0], w[1])).collect(),
            omega_first,
            omega_hidden,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].output_dim()
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(Dense::len).sum()
    }

    fn omega(&self, layer: usize) -> f64 {
        if layer == 0 {
            self.omega_first
        } else {
            self.omega_hidden
        }
    }

    fn is_sine(&self, layer: usize) -> bool {
        layer + 1 < self.layers.len()
    }

    /// First layer uniform in `+-1/fan_in`, later layers uniform in
    /// `+-sqrt(6/fan_in)/omega_hidden`, biases zero.
    pub fn siren_init(&mut self, seed: u64) {
        let mut rng = seed::rng(seed);
        for (i, layer) in self.layers.iter_mut().enumerate() {
            let fan_in = layer.input_dim() as f64;
            let bound = if i == 0 {
                1.0 / fan_in
            } else {
                (6.0 / fan_in).sqrt() / self.omega_hidden
            };
            for w in layer.weight.as_mut_slice() {
                *w = rng.gen_range(-bound..=bound);
            }
            layer.bias.fill(0.0);
        }
    }

    /// Forward pass over a batch whose rows are feature vectors.
    pub fn forward_batch(&self, x: &Matrix) -> Result<Forward> {
        if x.cols() != self.input_dim() {
            return Err(Error::dims(format!("{} input features", self.input_dim()), x.cols()));
        }
        let batch = x.rows();
        let mut activations = Vec::with_capacity(self.layers.len() - 1);
        let mut slopes = Vec::with_capacity(self.layers.len() - 1);
        let mut output = None;
        for (i, layer) in self.layers.iter().enumerate() {
            let input = if i == 0 { x } else { &activations[i - 1] };
            let mut z = Matrix::zeros(batch, layer.output_dim());
            for r in 0..batch {
                z.row_mut(r).copy_from_slice(&layer.bias);
            }
            gemm(1.0, input, Op::N, &layer.weight, Op::T, 1.0, &mut z);
            if self.is_sine(i) {
                let mut slope = Matrix::zeros(batch, layer.output_dim());
                sine_activation(z.as_mut_slice(), slope.as_mut_slice(), self.omega(i));
                activations.push(z);
                slopes.push(slope);
            } else {
                output = Some(z);
            }
        }
        Ok(Forward {
            activations,
            slopes,
            output: output.expect("network has a final layer"),
        })
    }

    pub fn forward(&self, features: &[f64]) -> Result<Vec<f64>> {
        let x = Matrix::from_vec(1, features.len(), features.to_vec());
        Ok(self.forward_batch(&x)?.output.row(0).to_vec())
    }

    /// Gradients of a scalar loss with respect to every weight and bias,
    /// summed over the batch, given `upstream = dL/d(output)`.
    pub fn backward(&self, x: &Matrix, fwd: &Forward, upstream: &Matrix) -> Result<Vec<Dense>> {
        if upstream.rows() != x.rows() || upstream.cols() != self.output_dim() {
            return Err(Error::dims(
                format!("{}x{} upstream gradient", x.rows(), self.output_dim()),
                format!("{}x{}", upstream.rows(), upstream.cols()),
            ));
        }
        let mut grads: Vec<Dense> = self.layers.iter().map(Dense::zeros_like).collect();
        let mut delta = upstream.clone();
        for i in (0..self.layers.len()).rev() {
            if self.is_sine(i) {
                for (d, s) in delta.as_mut_slice().iter_mut().zip(fwd.slopes[i].as_slice()) {
                    *d *= s;
                }
            }
            let input = if i == 0 { x } else { &fwd.activations[i - 1] };
            gemm(1.0, &delta, Op::T, input, Op::N, 0.0, &mut grads[i].weight);
            let bias = &mut grads[i].bias;
            for r in 0..delta.rows() {
                for (b, d) in bias.iter_mut().zip(delta.row(r)) {
                    *b += d;
                }
            }
            if i > 0 {
                let mut next = Matrix::zeros(delta.rows(), self.layers[i].input_dim());
                gemm(1.0, &delta, Op::N, &self.layers[i].weight, Op::N, 0.0, &mut next);
                delta = next;
            }
        }
        Ok(grads)
    }

    /// Flat view of parameter `idx` (weights of each layer, then its biases).
    pub fn parameter_mut(&mut self, mut idx: usize) -> &mut f64 {
        for layer in &mut self.layers {
            let nw = layer.weight.as_slice().len();
            if idx < nw {
                return &mut layer.weight.as_mut_slice()[idx];
            }
            idx -= nw;
            if idx < layer.bias.len() {
                return &mut layer.bias[idx];
            }
            idx -= layer.bias.len();
        }
        panic!("parameter index out of range");
    }
}

impl Forward {
    pub fn hidden_activations(&self) -> &[Matrix] {
        &self.activations
    }
}

/// Flattens gradients in the same order as [`SirenNetwork::parameter_mut`].
pub fn flatten(grads: &[Dense]) -> Vec<f64> {
    grads
        .iter()
        .flat_map(|g| g.weight.as_slice().iter().chain(&g.bias).copied())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn random_batch(rows: usize, cols: usize, seed: u64) -> Matrix {
        let mut rng = seed::rng(seed);
        Matrix::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0))
    }

    fn half_sq_loss(out: &Matrix, target: &Matrix) -> (f64, Matrix) {
        let mut grad = Matrix::zeros(out.rows(), out.cols());
        let mut loss = 0.0;
        for (i, (o, t)) in out.as_slice().iter().zip(target.as_slice()).enumerate() {
            loss += 0.5 * (o - t) * (o - t);
            grad.as_mut_slice()[i] = o - t;
        }
        (loss, grad)
    }

    /// Max relative error of backward against central differences.
    fn gradient_check(dims: &[usize], omega: f64, seed: u64) -> f64 {
        let mut net = SirenNetwork::new(dims, omega, omega).unwrap();
        net.siren_init(seed);
        let mut rng = seed::rng(seed ^ 0xABCD);
        for layer in &mut net.layers {
            for b in &mut layer.bias {
                *b = rng.gen_range(-0.1..0.1);
            }
        }
        let x = random_batch(5, dims[0], seed + 1);
        let target = random_batch(5, dims[dims.len() - 1], seed + 2);
        let fwd = net.forward_batch(&x).unwrap();
        let (_, up) = half_sq_loss(&fwd.output, &target);
        let analytic = flatten(&net.backward(&x, &fwd, &up).unwrap());
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        for i in 0..net.parameter_count() {
            let orig = *net.parameter_mut(i);
            *net.parameter_mut(i) = orig + h;
            let lp = half_sq_loss(&net.forward_batch(&x).unwrap().output, &target).0;
            *net.parameter_mut(i) = orig - h;
            let lm = half_sq_loss(&net.forward_batch(&x).unwrap().output, &target).0;
            *net.parameter_mut(i) = orig;
            let numeric = (lp - lm) / (2.0 * h);
            let scale = analytic[i].abs().max(numeric.abs()).max(1e-6);
            worst = worst.max((analytic[i] - numeric).abs() / scale);
        }
        worst
    }

    #[test]
    fn toy_network_matches_finite_differences() {
        let err = gradient_check(&[2, 8, 6], 30.0, 7);
        assert!(err < 1e-4, "max relative error {err}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(20))]
        #[test]
        fn random_networks_match_finite_differences(seed in 0u64..10_000, hidden in 3usize..9, depth in 1usize..3) {
            let mut dims = vec![4];
            dims.extend(std::iter::repeat(hidden).take(depth));
            dims.push(6);
            let err = gradient_check(&dims, 30.0, seed);
            prop_assert!(err < 1e-4, "max relative error {}", err);
        }
    }

    #[test]
    fn zero_parameters_give_zero_output() {
        let net = SirenNetwork::new(&[256, 64, 64, 64, 64, 6], 30.0, 30.0).unwrap();
        let x = random_batch(3, 256, 1);
        let fwd = net.forward_batch(&x).unwrap();
        assert!(fwd.output.as_slice().iter().all(|&v| v == 0.0));
        assert_eq!(fwd.output.cols(), 6);
    }

    #[test]
    fn default_shape_and_size() {
        let mut net = SirenNetwork::new(&[256, 64, 64, 64, 64, 6], 30.0, 30.0).unwrap();
        net.siren_init(3);
        assert_eq!(net.layers.len(), 5);
        assert_eq!(net.parameter_count(), 29_318);
        let fwd = net.forward_batch(&random_batch(10, 256, 2)).unwrap();
        for a in fwd.hidden_activations() {
            assert!(a.as_slice().iter().all(|v| v.abs() <= 1.0));
        }
        assert!(net.forward(&[0.0; 255]).is_err());
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let mut net = SirenNetwork::new(&[4, 8, 6], 30.0, 30.0).unwrap();
        net.siren_init(1);
        let x = random_batch(3, 4, 0);
        let fwd = net.forward_batch(&x).unwrap();
        let g = net.backward(&x, &fwd, &Matrix::zeros(3, 6)).unwrap();
        assert!(flatten(&g).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn duplicated_entry_doubles_gradient() {
        let mut net = SirenNetwork::new(&[4, 8, 8, 6], 30.0, 30.0).unwrap();
        net.siren_init(2);
        let one = random_batch(1, 4, 5);
        let mut two = Matrix::zeros(2, 4);
        two.row_mut(0).copy_from_slice(one.row(0));
        two.row_mut(1).copy_from_slice(one.row(0));
        let up1 = random_batch(1, 6, 6);
        let mut up2 = Matrix::zeros(2, 6);
        up2.row_mut(0).copy_from_slice(up1.row(0));
        up2.row_mut(1).copy_from_slice(up1.row(0));
        let g1 = flatten(&net.backward(&one, &net.forward_batch(&one).unwrap(), &up1).unwrap());
        let g2 = flatten(&net.backward(&two, &net.forward_batch(&two).unwrap(), &up2).unwrap());
        for (a, b) in g1.iter().zip(&g2) {
            assert!((2.0 * a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }
    }

    #[test]
    fn init_is_deterministic_with_zero_bias() {
        let mut a = SirenNetwork::new(&[256, 64, 64, 6], 30.0, 30.0).unwrap();
        let mut b = a.clone();
        a.siren_init(42);
        b.siren_init(42);
        assert_eq!(a, b);
        assert!(a.layers.iter().all(|l| l.bias.iter().all(|&v| v == 0.0)));
        let first = a.layers[0].weight.as_slice();
        assert!(first.iter().all(|w| w.abs() <= 1.0 / 256.0));
        let bound = (6.0f64 / 64.0).sqrt() / 30.0;
        assert!(a.layers[1].weight.as_slice().iter().all(|w| w.abs() <= bound));
    }

    fn scaled_preactivation_variance(net: &SirenNetwork, layer: usize, x: &Matrix) -> f64 {
        let mut z = Matrix::zeros(x.rows(), net.layers[layer].output_dim());
        gemm(net.omega(layer), x, Op::N, &net.layers[layer].weight, Op::T, 0.0, &mut z);
        let n = z.as_slice().len() as f64;
        let mean = z.as_slice().iter().sum::<f64>() / n;
        z.as_slice().iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n
    }

    #[test]
    fn hidden_preactivation_variance_near_one() {
        // Oracle: omega * W x with W uniform in +-sqrt(6/n)/omega has variance
        // 2 Var(x); a sine of a wide Gaussian has variance 1/2, so each hidden
        // layer fed with sin(omega g), g standard normal, should give ~1. The
        // first layer sees the standard-normal probes directly: 30^2/(3*256).
        let mut net = SirenNetwork::new(&[256, 64, 64, 64, 64, 6], 30.0, 30.0).unwrap();
        net.siren_init(9);
        let mut rng = seed::rng(10);
        let probes = 1000;
        let x = Matrix::from_fn(probes, 256, |_, _| rng.sample::<f64, _>(StandardNormal));
        let v0 = scaled_preactivation_variance(&net, 0, &x);
        assert!((v0 - 1.0).abs() < 0.2, "first layer: variance {v0}");
        for l in 1..4 {
            let a = Matrix::from_fn(probes, 64, |_, _| (30.0 * rng.sample::<f64, _>(StandardNormal)).sin());
            let v = scaled_preactivation_variance(&net, l, &a);
            assert!((v - 1.0).abs() < 0.2, "layer {l}: variance {v}");
        }
    }

    #[test]
    fn batched_equals_single_evaluation() {
        let mut net = SirenNetwork::new(&[256, 64, 64, 64, 64, 6], 30.0, 30.0).unwrap();
        net.siren_init(4);
        let x = random_batch(288 * 14, 256, 8);
        let batched = net.forward_batch(&x).unwrap().output;
        for r in (0..x.rows()).step_by(37) {
            let single = net.forward(x.row(r)).unwrap();
            for (a, b) in single.iter().zip(batched.row(r)) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
