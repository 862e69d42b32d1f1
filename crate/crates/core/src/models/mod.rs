//! Multilayer perceptron with exact backpropagation over a flat parameter
//! vector. Each weight matrix and each bias vector is its own layout entry.

mod train;

pub use train::{client_delta, local_train, LocalTrainOptions, MlpObjective, Objective, ProximalObjective};

use ndarray::linalg::general_mat_mul;
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, ArrayViewMut2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layout::LayerLayout;
use crate::scalar::Scalar;

/// Flat parameter (or update) vector with its layer layout.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector<T> {
    values: Vec<T>,
    layout: LayerLayout,
}

impl<T: Scalar> ParamVector<T> {
    pub fn new(values: Vec<T>, layout: LayerLayout) -> Result<Self> {
        if values.len() != layout.dim() {
            return Err(Error::mismatch("parameter vector", layout.dim(), values.len()));
        }
        Ok(Self { values, layout })
    }

    pub fn zeros(layout: LayerLayout) -> Self {
        Self {
            values: vec![T::zero(); layout.dim()],
            layout,
        }
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    pub fn layout(&self) -> &LayerLayout {
        &self.layout
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn layer(&self, q: usize) -> &[T] {
        self.layout.slice(&self.values, q)
    }

    /// `self - scale * direction`
    pub fn step(&mut self, direction: &[T], scale: T) {
        assert_eq!(direction.len(), self.values.len());
        for (p, &g) in self.values.iter_mut().zip(direction) {
            *p -= scale * g;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
    Tanh,
}

impl Activation {
    fn apply<T: Scalar>(self, x: T) -> T {
        match self {
            Activation::Relu => x.max(T::zero()),
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `a`.
    fn derivative<T: Scalar>(self, z: T, a: T) -> T {
        match self {
            Activation::Relu => {
                if z > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Activation::Tanh => T::one() - a * a,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub output_dim: usize,
    #[serde(default)]
    pub activation: Activation,
}

impl MlpSpec {
    pub fn new(input_dim: usize, hidden_dims: Vec<usize>, output_dim: usize) -> Self {
        Self {
            input_dim,
            hidden_dims,
            output_dim,
            activation: Activation::Relu,
        }
    }

    pub fn with_activation(mut self, activation: Activation) -> Self {
        self.activation = activation;
        self
    }

    /// `(fan_in, fan_out)` of every dense layer.
    pub fn dense_shapes(&self) -> Vec<(usize, usize)> {
        let mut dims = vec![self.input_dim];
        dims.extend(&self.hidden_dims);
        dims.push(self.output_dim);
        dims.windows(2).map(|w| (w[0], w[1])).collect()
    }

    pub fn num_params(&self) -> usize {
        self.dense_shapes().iter().map(|(i, o)| i * o + o).sum()
    }

    fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 || self.hidden_dims.contains(&0) {
            return Err(Error::invalid("all MLP dimensions must be at least 1"));
        }
        Ok(())
    }
}

/// Intermediate values of a forward pass kept for backpropagation.
struct Trace<T> {
    /// Input followed by every hidden activation.
    activations: Vec<Array2<T>>,
    /// Hidden pre-activations.
    pre_activations: Vec<Array2<T>>,
    logits: Array2<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    spec: MlpSpec,
    layout: LayerLayout,
}

impl Mlp {
    pub fn new(spec: MlpSpec) -> Result<Self> {
        spec.validate()?;
        let lengths: Vec<usize> = spec
            .dense_shapes()
            .iter()
            .flat_map(|&(i, o)| [i * o, o])
            .collect();
        let layout = LayerLayout::from_lengths(&lengths)?;
        Ok(Self { spec, layout })
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    /// Weight and bias of every dense layer as separate layers.
    pub fn layout(&self) -> &LayerLayout {
        &self.layout
    }

    /// Glorot-uniform weights, zero biases; a pure function of `seed`.
    pub fn init_params<T: Scalar>(&self, seed: u64) -> ParamVector<T> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut values = Vec::with_capacity(self.layout.dim());
        for (fan_in, fan_out) in self.spec.dense_shapes() {
            let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
            values.extend((0..fan_in * fan_out).map(|_| T::lit(rng.random_range(-a..a))));
            values.extend(std::iter::repeat_n(T::zero(), fan_out));
        }
        ParamVector {
            values,
            layout: self.layout.clone(),
        }
    }

    fn check_params<T: Scalar>(&self, params: &ParamVector<T>) -> Result<()> {
        if params.layout != self.layout {
            return Err(Error::invalid("parameter layout does not match the model"));
        }
        Ok(())
    }

    fn dense<'a, T: Scalar>(&self, params: &'a [T], layer: usize) -> (ArrayView2<'a, T>, ArrayView1<'a, T>) {
        let (fan_in, fan_out) = self.spec.dense_shapes()[layer];
        let w = ArrayView2::from_shape((fan_in, fan_out), self.layout.slice(params, 2 * layer))
            .expect("weight span matches shape");
        let b = ArrayView1::from(self.layout.slice(params, 2 * layer + 1));
        (w, b)
    }

    fn trace<T: Scalar>(&self, params: &[T], batch: ArrayView2<T>, keep: bool) -> Trace<T> {
        let depth = self.spec.dense_shapes().len();
        let act = self.spec.activation;
        let mut activations = Vec::new();
        let mut pre_activations = Vec::new();
        let mut current = batch.to_owned();
        for layer in 0..depth {
            let (w, b) = self.dense(params, layer);
            let mut z = current.dot(&w);
            z += &b;
            if layer + 1 == depth {
                if keep {
                    activations.push(current);
                }
                return Trace {
                    activations,
                    pre_activations,
                    logits: z,
                };
            }
            let a = z.mapv(|x| act.apply(x));
            if keep {
                activations.push(current);
                pre_activations.push(z);
            }
            current = a;
        }
        unreachable!("network has at least one dense layer")
    }

    fn check_batch<T>(&self, batch: &ArrayView2<T>) -> Result<()> {
        if batch.ncols() != self.spec.input_dim {
            return Err(Error::mismatch("batch feature width", self.spec.input_dim, batch.ncols()));
        }
        Ok(())
    }

    /// Logits for every row of `batch`.
    pub fn forward<T: Scalar>(&self, params: &ParamVector<T>, batch: ArrayView2<T>) -> Result<Array2<T>> {
        self.check_params(params)?;
        self.check_batch(&batch)?;
        Ok(self.trace(params.values(), batch, false).logits)
    }

    /// Mean softmax cross-entropy over the batch and its exact gradient.
    pub fn loss_and_grad<T: Scalar>(
        &self,
        params: &ParamVector<T>,
        batch: ArrayView2<T>,
        labels: &[usize],
    ) -> Result<(T, ParamVector<T>)> {
        self.check_params(params)?;
        let mut grad = ParamVector::zeros(self.layout.clone());
        let loss = self.loss_and_grad_into(params.values(), batch, labels, grad.values_mut())?;
        Ok((loss, grad))
    }

    pub(crate) fn loss_and_grad_into<T: Scalar>(
        &self,
        params: &[T],
        batch: ArrayView2<T>,
        labels: &[usize],
        grad: &mut [T],
    ) -> Result<T> {
        self.check_batch(&batch)?;
        let n = batch.nrows();
        if labels.len() != n {
            return Err(Error::mismatch("label count", n, labels.len()));
        }
        if n == 0 {
            return Err(Error::invalid("empty batch"));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= self.spec.output_dim) {
            return Err(Error::invalid(format!(
                "label {bad} outside [0, {})",
                self.spec.output_dim
            )));
        }
        let trace = self.trace(params, batch, true);
        let inv_n = T::one() / T::lit(n as f64);

        // softmax cross-entropy; dz = (p - onehot) / n
        let mut dz = trace.logits;
        let mut loss = T::zero();
        for (mut row, &y) in dz.axis_iter_mut(Axis(0)).zip(labels) {
            let max = row.fold(T::neg_infinity(), |m, &x| m.max(x));
            let shifted_target = row[y] - max;
            let mut total = T::zero();
            for x in row.iter_mut() {
                *x = (*x - max).exp();
                total += *x;
            }
            let log_total = total.ln();
            loss += log_total - shifted_target;
            row.mapv_inplace(|x| x / total * inv_n);
            row[y] -= inv_n;
        }
        loss *= inv_n;

        let shapes = self.spec.dense_shapes();
        let act = self.spec.activation;
        for layer in (0..shapes.len()).rev() {
            let (fan_in, fan_out) = shapes[layer];
            let input = &trace.activations[layer];
            let w_span = self.layout.spans()[2 * layer].range();
            let b_span = self.layout.spans()[2 * layer + 1].range();
            {
                let mut dw = ArrayViewMut2::from_shape((fan_in, fan_out), &mut grad[w_span])
                    .expect("weight span matches shape");
                general_mat_mul(T::one(), &input.t(), &dz, T::zero(), &mut dw);
            }
            let db: Array1<T> = dz.sum_axis(Axis(0));
            grad[b_span].copy_from_slice(db.as_slice().expect("contiguous bias gradient"));
            if layer > 0 {
                let (w, _) = self.dense(params, layer);
                let mut da = dz.dot(&w.t());
                let z = &trace.pre_activations[layer - 1];
                let a = input;
                ndarray::Zip::from(&mut da)
                    .and(z)
                    .and(a)
                    .for_each(|d, &z, &a| *d *= act.derivative(z, a));
                dz = da;
            }
        }
        Ok(loss)
    }

    /// Fraction of rows whose arg-max logit equals the label.
    pub fn accuracy<T: Scalar>(&self, params: &ParamVector<T>, batch: ArrayView2<T>, labels: &[usize]) -> Result<f64> {
        if labels.is_empty() {
            return Err(Error::invalid("accuracy of an empty set"));
        }
        let logits = self.forward(params, batch)?;
        let correct = logits
            .axis_iter(Axis(0))
            .zip(labels)
            .filter(|(row, &y)| argmax(row.iter().copied()) == y)
            .count();
        Ok(correct as f64 / labels.len() as f64)
    }
}

/// Index of the first maximal element.
pub(crate) fn argmax<T: Scalar>(values: impl Iterator<Item = T>) -> usize {
    let mut best = 0;
    let mut best_value = T::neg_infinity();
    for (i, v) in values.enumerate() {
        if v > best_value {
            best = i;
            best_value = v;
        }
    }
    best
}
