use serde::{Deserialize, Serialize};

use super::layer::{xavier_init_with, XavierBound};
use super::{Activation, Layer, NeuralError};
use crate::par::{self, Execution};
use crate::rng::RngStream;
use crate::tensor::{Matrix, Vector};

/// Hidden layers followed by a linear head whose logits feed a softmax
/// cross-entropy loss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "NetworkRecord", into = "NetworkRecord")]
pub struct Network {
    layers: Vec<Layer>,
    head: Layer,
}

/// Errors at the pre-activation of every layer for one sample, first layer
/// first. The last entry is the output error `softmax(z) − onehot(label)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BackpropTrace {
    pub errors: Vec<Vector>,
}

impl BackpropTrace {
    /// Error at the first layer.
    pub fn e_in(&self) -> &Vector {
        &self.errors[0]
    }

    /// Error at the output layer.
    pub fn e_out(&self) -> &Vector {
        self.errors.last().expect("trace has at least one layer")
    }
}

/// Relative backpropagated error: `Σ|e_in| / Σ|e_out|`.
pub fn rbe(trace: &BackpropTrace) -> Result<f64, NeuralError> {
    let out = trace.e_out().l1_norm();
    if out.is_nan() || out <= 1e-15 {
        return Err(NeuralError::RbeUndefined);
    }
    Ok(trace.e_in().l1_norm() / out)
}

/// Per-layer loss gradients, in layer order (head last).
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub loss: f64,
    pub weights: Vec<Matrix>,
    pub biases: Vec<Vector>,
}

/// Inputs stored one per row, with their class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledBatch {
    inputs: Matrix,
    labels: Vec<usize>,
}

impl LabeledBatch {
    pub fn new(inputs: Matrix, labels: Vec<usize>) -> Result<Self, NeuralError> {
        if inputs.rows() != labels.len() {
            return Err(NeuralError::DimensionMismatch {
                expected: inputs.rows(),
                got: labels.len(),
                context: "one label per input row",
            });
        }
        Ok(LabeledBatch { inputs, labels })
    }

    pub fn from_samples<V: AsRef<[f64]>>(samples: &[(V, usize)]) -> Result<Self, NeuralError> {
        let rows: Vec<&[f64]> = samples.iter().map(|(v, _)| v.as_ref()).collect();
        let inputs = Matrix::from_rows(&rows)?;
        Self::new(inputs, samples.iter().map(|(_, l)| *l).collect())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn inputs(&self) -> &Matrix {
        &self.inputs
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }
}

fn softmax_in_place(z: &mut [f64]) {
    let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in z.iter_mut() {
        *v /= sum;
    }
}

/// `softmax(z)`.
pub fn softmax(z: &[f64]) -> Vec<f64> {
    let mut p = z.to_vec();
    softmax_in_place(&mut p);
    p
}

/// Index of the largest entry; the lowest index wins ties.
pub fn argmax(z: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in z.iter().enumerate() {
        if *v > z[best] {
            best = i;
        }
    }
    best
}

/// `−log softmax(z)[label]`, computed as `logsumexp(z) − z[label]`.
fn cross_entropy(z: &[f64], label: usize) -> f64 {
    let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    lse - z[label]
}

struct ForwardCache {
    /// `activations[0]` is the input; `activations[l + 1]` the output of layer `l`.
    activations: Vec<Vector>,
    pre: Vec<Vector>,
}

impl Network {
    pub fn new(layers: Vec<Layer>, head: Layer) -> Result<Network, NeuralError> {
        if head.activation() != Activation::Identity {
            return Err(NeuralError::HeadActivation(head.activation()));
        }
        let mut prev = layers.first().map(|l| l.in_dim());
        for l in layers.iter().chain(std::iter::once(&head)) {
            if let Some(p) = prev {
                if p != l.in_dim() {
                    return Err(NeuralError::DimensionMismatch {
                        expected: p,
                        got: l.in_dim(),
                        context: "consecutive layer dims must chain",
                    });
                }
            }
            prev = Some(l.out_dim());
        }
        Ok(Network { layers, head })
    }

    /// A fully Xavier-initialized network with hidden widths `dims[1..]` on
    /// input dimension `dims[0]` and a head of width `classes`.
    pub fn xavier(
        dims: &[usize],
        classes: usize,
        hidden: Activation,
        rule: XavierBound,
        rng: &mut RngStream,
    ) -> Result<Network, NeuralError> {
        if dims.is_empty() {
            return Err(NeuralError::EmptyArchitecture);
        }
        let layers = dims
            .windows(2)
            .map(|w| xavier_init_with(w[0], w[1], hidden, rule, rng))
            .collect();
        let head = xavier_init_with(*dims.last().unwrap(), classes, Activation::Identity, rule, rng);
        Network::new(layers, head)
    }

    pub fn hidden_layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn head(&self) -> &Layer {
        &self.head
    }

    /// Hidden layers then head.
    pub fn all_layers(&self) -> impl Iterator<Item = &Layer> {
        self.layers.iter().chain(std::iter::once(&self.head))
    }

    fn all_layers_mut(&mut self) -> impl Iterator<Item = &mut Layer> {
        self.layers.iter_mut().chain(std::iter::once(&mut self.head))
    }

    pub fn depth(&self) -> usize {
        self.layers.len() + 1
    }

    pub fn in_dim(&self) -> usize {
        self.layers.first().unwrap_or(&self.head).in_dim()
    }

    pub fn classes(&self) -> usize {
        self.head.out_dim()
    }

    /// Head logits for input `x`.
    pub fn forward(&self, x: &[f64]) -> Result<Vector, NeuralError> {
        let mut a = x.to_vec();
        for l in &self.layers {
            a = l.forward(&a)?.into_vec();
        }
        self.head.forward(&a)
    }

    pub fn probabilities(&self, x: &[f64]) -> Result<Vec<f64>, NeuralError> {
        Ok(softmax(&self.forward(x)?))
    }

    pub fn predict(&self, x: &[f64]) -> Result<usize, NeuralError> {
        Ok(argmax(&self.forward(x)?))
    }

    pub fn loss(&self, x: &[f64], label: usize) -> Result<f64, NeuralError> {
        self.check_label(label)?;
        Ok(cross_entropy(&self.forward(x)?, label))
    }

    fn check_label(&self, label: usize) -> Result<(), NeuralError> {
        if label < self.classes() {
            Ok(())
        } else {
            Err(NeuralError::LabelOutOfRange {
                label,
                classes: self.classes(),
            })
        }
    }

    fn forward_cache(&self, x: &[f64]) -> Result<ForwardCache, NeuralError> {
        if x.len() != self.in_dim() {
            return Err(NeuralError::DimensionMismatch {
                expected: self.in_dim(),
                got: x.len(),
                context: "network input",
            });
        }
        let mut activations = Vec::with_capacity(self.depth() + 1);
        let mut pre = Vec::with_capacity(self.depth());
        activations.push(Vector::from_vec_unchecked(x.to_vec()));
        for l in self.all_layers() {
            let z = l.pre_activation_unchecked(activations.last().unwrap());
            let f = l.activation();
            let a = Vector::from_vec_unchecked(z.iter().map(|&v| f.apply(v)).collect());
            pre.push(z);
            activations.push(a);
        }
        Ok(ForwardCache { activations, pre })
    }

    /// Pre-activation errors `δ_l = ∂loss/∂z_l` for every layer, computed
    /// against the current weights.
    fn deltas(&self, cache: &ForwardCache, label: usize) -> Vec<Vector> {
        let depth = self.depth();
        let mut deltas = vec![Vector::default(); depth];
        let mut out = softmax(cache.pre.last().unwrap());
        out[label] -= 1.0;
        deltas[depth - 1] = Vector::from_vec_unchecked(out);
        let layers: Vec<&Layer> = self.all_layers().collect();
        for l in (0..depth - 1).rev() {
            let upper = layers[l + 1];
            let back = upper.weights().tr_mul_vec(&deltas[l + 1]).expect("layer dims chain");
            let f = layers[l].activation();
            let z = &cache.pre[l];
            let a = &cache.activations[l + 1];
            deltas[l] = Vector::from_vec_unchecked(
                back.iter()
                    .zip(z.iter().zip(a.iter()))
                    .map(|(g, (&zi, &ai))| g * f.derivative(zi, ai))
                    .collect(),
            );
        }
        deltas
    }

    /// Backpropagated error at each layer for `(x, label)`; weights untouched.
    pub fn backprop_trace(&self, x: &[f64], label: usize) -> Result<BackpropTrace, NeuralError> {
        self.check_label(label)?;
        let cache = self.forward_cache(x)?;
        Ok(BackpropTrace {
            errors: self.deltas(&cache, label),
        })
    }

    /// Loss and its gradient with respect to every weight and bias.
    pub fn gradients(&self, x: &[f64], label: usize) -> Result<Gradients, NeuralError> {
        self.check_label(label)?;
        let cache = self.forward_cache(x)?;
        let deltas = self.deltas(&cache, label);
        let mut weights = Vec::with_capacity(deltas.len());
        for (l, d) in deltas.iter().enumerate() {
            let input = &cache.activations[l];
            let mut g = Vec::with_capacity(d.dim() * input.dim());
            for &di in d.iter() {
                g.extend(input.iter().map(|&a| di * a));
            }
            weights.push(Matrix::from_vec_unchecked(d.dim(), input.dim(), g));
        }
        Ok(Gradients {
            loss: cross_entropy(cache.pre.last().unwrap(), label),
            weights,
            biases: deltas,
        })
    }

    /// One plain SGD update on `(x, label)`. Returns the pre-update loss and
    /// backprop trace.
    pub(crate) fn sgd_step(&mut self, x: &[f64], label: usize, rate: f64) -> Result<(f64, BackpropTrace), NeuralError> {
        self.check_label(label)?;
        let cache = self.forward_cache(x)?;
        let loss = cross_entropy(cache.pre.last().unwrap(), label);
        let deltas = self.deltas(&cache, label);
        for ((layer, d), input) in self.all_layers_mut().zip(&deltas).zip(&cache.activations) {
            let (w, b) = layer.params_mut();
            for (i, &di) in d.iter().enumerate() {
                let step = rate * di;
                for (wij, &aj) in w.row_mut(i).iter_mut().zip(input.iter()) {
                    *wij -= step * aj;
                }
                b.as_mut_slice()[i] -= step;
            }
        }
        Ok((loss, BackpropTrace { errors: deltas }))
    }
}

/// Fraction of argmax-correct predictions over `batch`.
pub fn evaluate(net: &Network, batch: &LabeledBatch) -> Result<f64, NeuralError> {
    evaluate_with(net, batch, Execution::default())
}

pub fn evaluate_with(net: &Network, batch: &LabeledBatch, exec: Execution) -> Result<f64, NeuralError> {
    if batch.is_empty() {
        return Err(NeuralError::EmptySamples);
    }
    if batch.inputs.cols() != net.in_dim() {
        return Err(NeuralError::DimensionMismatch {
            expected: net.in_dim(),
            got: batch.inputs.cols(),
            context: "evaluation inputs",
        });
    }
    const CHUNK: usize = 256;
    let transposed: Vec<Matrix> = net.all_layers().map(|l| l.weights().transpose()).collect();
    let starts: Vec<usize> = (0..batch.len()).step_by(CHUNK).collect();
    let d = batch.inputs.cols();
    let correct = par::map_collect(exec, &starts, |&start| {
        let n = CHUNK.min(batch.len() - start);
        let mut a = batch.inputs.as_slice()[start * d..(start + n) * d].to_vec();
        for (l, wt) in net.all_layers().zip(&transposed) {
            a = l.forward_rows(wt, &a, n);
        }
        let c = net.classes();
        a.chunks_exact(c)
            .zip(&batch.labels[start..start + n])
            .filter(|(z, &label)| argmax(z) == label)
            .count()
    });
    Ok(correct.iter().sum::<usize>() as f64 / batch.len() as f64)
}

#[derive(Serialize, Deserialize)]
struct NetworkRecord {
    layers: Vec<Layer>,
    head: Layer,
}

impl From<Network> for NetworkRecord {
    fn from(n: Network) -> Self {
        NetworkRecord {
            layers: n.layers,
            head: n.head,
        }
    }
}

impl TryFrom<NetworkRecord> for Network {
    type Error = NeuralError;
    fn try_from(r: NetworkRecord) -> Result<Self, Self::Error> {
        Network::new(r.layers, r.head)
    }
}
