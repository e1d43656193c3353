use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Activation, NeuralError};
use crate::rng::RngStream;
use crate::tensor::{dot, Matrix, Vector};

/// A dense layer computing `f(b + W·x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LayerRecord", into = "LayerRecord")]
pub struct Layer {
    weights: Matrix,
    bias: Vector,
    activation: Activation,
}

impl Layer {
    pub fn new(weights: Matrix, bias: Vector, activation: Activation) -> Result<Layer, NeuralError> {
        if weights.rows() != bias.dim() {
            return Err(NeuralError::DimensionMismatch {
                expected: weights.rows(),
                got: bias.dim(),
                context: "bias length must equal weight rows",
            });
        }
        Ok(Layer {
            weights,
            bias,
            activation,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.rows()
    }

    pub fn weights(&self) -> &Matrix {
        &self.weights
    }

    pub fn bias(&self) -> &Vector {
        &self.bias
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub(crate) fn params_mut(&mut self) -> (&mut Matrix, &mut Vector) {
        (&mut self.weights, &mut self.bias)
    }

    fn check_input(&self, x: &[f64]) -> Result<(), NeuralError> {
        if x.len() == self.in_dim() {
            Ok(())
        } else {
            Err(NeuralError::DimensionMismatch {
                expected: self.in_dim(),
                got: x.len(),
                context: "layer input",
            })
        }
    }

    /// `b + W·x` without the activation.
    pub fn pre_activation(&self, x: &[f64]) -> Result<Vector, NeuralError> {
        self.check_input(x)?;
        Ok(self.pre_activation_unchecked(x))
    }

    pub(crate) fn pre_activation_unchecked(&self, x: &[f64]) -> Vector {
        Vector::from_vec_unchecked(
            (0..self.out_dim())
                .map(|i| dot(self.weights.row(i), x) + self.bias[i])
                .collect(),
        )
    }

    /// `f(b + W·x)`.
    pub fn forward(&self, x: &[f64]) -> Result<Vector, NeuralError> {
        let mut z = self.pre_activation(x)?;
        let f = self.activation;
        for v in z.as_mut_slice() {
            *v = f.apply(*v);
        }
        Ok(z)
    }

    /// Forward pass for `n` row-major inputs using a pre-transposed weight
    /// matrix. Bit-identical to calling [`forward`](Self::forward) per row.
    pub(crate) fn forward_rows(&self, weights_t: &Matrix, inputs: &[f64], n: usize) -> Vec<f64> {
        let (din, dout) = (self.in_dim(), self.out_dim());
        debug_assert_eq!(inputs.len(), n * din);
        let mut out = vec![0.0; n * dout];
        for (x, o) in inputs.chunks_exact(din).zip(out.chunks_exact_mut(dout)) {
            for (k, &xk) in x.iter().enumerate() {
                for (acc, &w) in o.iter_mut().zip(weights_t.row(k)) {
                    *acc += xk * w;
                }
            }
            for (acc, b) in o.iter_mut().zip(self.bias.iter()) {
                *acc = self.activation.apply(*acc + b);
            }
        }
        out
    }
}

/// Bound rule for Xavier-style uniform initialization with fan-in `N`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum XavierBound {
    /// Uniform on `[-1/√N, 1/√N]`.
    #[default]
    InverseSqrtFanIn,
    /// Uniform on `[-√N, √N]`, the interval as literally printed in some texts.
    SqrtFanIn,
}

impl XavierBound {
    pub fn bound(self, fan_in: usize) -> f64 {
        let n = fan_in as f64;
        match self {
            XavierBound::InverseSqrtFanIn => 1.0 / n.sqrt(),
            XavierBound::SqrtFanIn => n.sqrt(),
        }
    }
}

/// A layer with weights uniform on `[-1/√in_dim, 1/√in_dim]` and zero bias.
pub fn xavier_init(in_dim: usize, out_dim: usize, activation: Activation, rng: &mut RngStream) -> Layer {
    xavier_init_with(in_dim, out_dim, activation, XavierBound::default(), rng)
}

pub fn xavier_init_with(
    in_dim: usize,
    out_dim: usize,
    activation: Activation,
    rule: XavierBound,
    rng: &mut RngStream,
) -> Layer {
    assert!(in_dim >= 1 && out_dim >= 1, "layer dimensions must be positive");
    let b = rule.bound(in_dim);
    let weights: Vec<f64> = (0..in_dim * out_dim).map(|_| rng.gen_range(-b..=b)).collect();
    Layer {
        weights: Matrix::from_vec_unchecked(out_dim, in_dim, weights),
        bias: Vector::zeros(out_dim),
        activation,
    }
}

#[derive(Serialize, Deserialize)]
struct LayerRecord {
    in_dim: usize,
    out_dim: usize,
    activation: Activation,
    /// Row-major, `out_dim × in_dim`.
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl From<Layer> for LayerRecord {
    fn from(l: Layer) -> Self {
        LayerRecord {
            in_dim: l.in_dim(),
            out_dim: l.out_dim(),
            activation: l.activation,
            weights: l.weights.into_vec(),
            bias: l.bias.into_vec(),
        }
    }
}

impl TryFrom<LayerRecord> for Layer {
    type Error = NeuralError;
    fn try_from(r: LayerRecord) -> Result<Self, Self::Error> {
        Layer::new(
            Matrix::new(r.out_dim, r.in_dim, r.weights)?,
            Vector::new(r.bias)?,
            r.activation,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_layer_passes_input_through() {
        let l = Layer::new(Matrix::identity(3), Vector::zeros(3), Activation::Identity).unwrap();
        assert_eq!(l.forward(&[1.0, -2.0, 0.5]).unwrap().as_slice(), &[1.0, -2.0, 0.5]);
    }

    #[test]
    fn zero_tanh_layer_outputs_zero() {
        let l = Layer::new(Matrix::zeros(2, 4), Vector::zeros(2), Activation::Tanh).unwrap();
        assert_eq!(l.forward(&[3.0, -1.0, 9.0, 0.1]).unwrap().as_slice(), &[0.0, 0.0]);
    }

    #[test]
    fn relu_clips_negative_pre_activation() {
        let l = Layer::new(
            Matrix::from_rows(&[[1.0]]).unwrap(),
            Vector::new(vec![-1.0]).unwrap(),
            Activation::Relu,
        )
        .unwrap();
        assert_eq!(l.forward(&[0.5]).unwrap().as_slice(), &[0.0]);
    }

    #[test]
    fn dimension_errors() {
        let l = Layer::new(Matrix::zeros(2, 3), Vector::zeros(2), Activation::Tanh).unwrap();
        assert!(matches!(
            l.forward(&[1.0]),
            Err(NeuralError::DimensionMismatch {
                expected: 3,
                got: 1,
                ..
            })
        ));
        assert!(Layer::new(Matrix::zeros(2, 3), Vector::zeros(3), Activation::Tanh).is_err());
    }

    #[test]
    fn xavier_bounds() {
        let mut rng = RngStream::new(1);
        let l = xavier_init(4, 30, Activation::Tanh, &mut rng);
        assert!(l.weights().as_slice().iter().all(|w| w.abs() <= 0.5));
        assert!(l.bias().iter().all(|&b| b == 0.0));
        let wide = xavier_init_with(4, 30, Activation::Tanh, XavierBound::SqrtFanIn, &mut rng);
        assert!(wide.weights().as_slice().iter().all(|w| w.abs() <= 2.0));
        assert!(wide.weights().max_abs() > 0.5);
    }

    #[test]
    fn xavier_is_deterministic() {
        let a = xavier_init(7, 5, Activation::Tanh, &mut RngStream::new(11));
        let b = xavier_init(7, 5, Activation::Tanh, &mut RngStream::new(11));
        assert_eq!(a, b);
    }

    #[test]
    fn xavier_mean_concentrates() {
        // 100_000 weights uniform on ±0.01: σ of the mean is 0.01/√3/√1e5 ≈ 1.8e-5,
        // far inside the ±0.001 acceptance band.
        let l = xavier_init(10_000, 10, Activation::Tanh, &mut RngStream::new(5));
        let w = l.weights().as_slice();
        let mean = w.iter().sum::<f64>() / w.len() as f64;
        assert!(mean.abs() < 0.001);
        assert!(w.iter().all(|x| x.abs() <= 0.01));
    }

    #[test]
    fn forward_rows_matches_single_forward() {
        let mut rng = RngStream::new(3);
        let l = xavier_init(6, 4, Activation::Tanh, &mut rng);
        let inputs: Vec<f64> = (0..18).map(|i| (i as f64 * 0.7).sin()).collect();
        let batch = l.forward_rows(&l.weights().transpose(), &inputs, 3);
        for r in 0..3 {
            let single = l.forward(&inputs[r * 6..(r + 1) * 6]).unwrap();
            assert_eq!(&batch[r * 4..(r + 1) * 4], single.as_slice());
        }
    }

    #[test]
    fn json_layout() {
        let l = Layer::new(
            Matrix::from_rows(&[[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]]).unwrap(),
            Vector::new(vec![0.1, 0.2, 0.3]).unwrap(),
            Activation::Tanh,
        )
        .unwrap();
        let v = serde_json::to_value(&l).unwrap();
        assert_eq!(v["in_dim"], 2);
        assert_eq!(v["out_dim"], 3);
        assert_eq!(v["activation"], "tanh");
        assert_eq!(v["weights"], serde_json::json!([1.0, 2.0, 3.0, 4.0, 5.0, 6.0]));
        let back: Layer = serde_json::from_value(v).unwrap();
        assert_eq!(back, l);
    }
}
