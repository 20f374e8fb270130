use serde::{Deserialize, Serialize};

use super::AutodiffError;

/// Hidden-layer activation. The output layer is always affine.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    /// Identity; turns the whole network into an affine map.
    Linear,
    /// Not differentiable at the origin; only order-0 evaluation is allowed.
    Relu,
}

impl Activation {
    pub fn name(self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::Linear => "linear",
            Activation::Relu => "relu",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "tanh" => Some(Activation::Tanh),
            "linear" => Some(Activation::Linear),
            "relu" => Some(Activation::Relu),
            _ => None,
        }
    }

    pub fn is_smooth(self) -> bool {
        !matches!(self, Activation::Relu)
    }

    /// Writes the activation and its first `out.len() - 1` derivatives at `z`.
    #[inline]
    pub(crate) fn derivatives(self, z: f64, out: &mut [f64; 5]) {
        match self {
            Activation::Tanh => {
                let t = z.tanh();
                let d1 = 1.0 - t * t;
                let d2 = -2.0 * t * d1;
                let d3 = -2.0 * (d1 * d1 + t * d2);
                let d4 = -2.0 * (3.0 * d1 * d2 + t * d3);
                *out = [t, d1, d2, d3, d4];
            }
            Activation::Linear => *out = [z, 1.0, 0.0, 0.0, 0.0],
            Activation::Relu => {
                *out = if z > 0.0 { [z, 1.0, 0.0, 0.0, 0.0] } else { [0.0, 0.0, 0.0, 0.0, 0.0] };
            }
        }
    }
}

/// Dense feed-forward network with all trainable values in one flat vector.
///
/// Canonical parameter order is layer-major: for each layer the weight matrix
/// in row-major order (`out x in`), then its bias vector.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    widths: Vec<usize>,
    activation: Activation,
    params: Vec<f64>,
    offsets: Vec<usize>,
}

impl Mlp {
    /// Network with all parameters zero. `widths` = `[inputs, hidden.., outputs]`.
    pub fn zeros(widths: Vec<usize>, activation: Activation) -> Result<Self, AutodiffError> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(AutodiffError::InvalidArchitecture(widths));
        }
        let mut offsets = Vec::with_capacity(widths.len());
        let mut total = 0;
        for l in 0..widths.len() - 1 {
            offsets.push(total);
            total += widths[l + 1] * widths[l] + widths[l + 1];
        }
        offsets.push(total);
        Ok(Self { widths, activation, params: vec![0.0; total], offsets })
    }

    pub fn from_params(
        widths: Vec<usize>,
        activation: Activation,
        params: Vec<f64>,
    ) -> Result<Self, AutodiffError> {
        let mut mlp = Self::zeros(widths, activation)?;
        if params.len() != mlp.params.len() {
            return Err(AutodiffError::ParamCount { expected: mlp.params.len(), got: params.len() });
        }
        mlp.params = params;
        Ok(mlp)
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn n_inputs(&self) -> usize {
        self.widths[0]
    }

    pub fn n_outputs(&self) -> usize {
        *self.widths.last().unwrap()
    }

    pub fn n_layers(&self) -> usize {
        self.widths.len() - 1
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn set_params(&mut self, values: &[f64]) -> Result<(), AutodiffError> {
        if values.len() != self.params.len() {
            return Err(AutodiffError::ParamCount { expected: self.params.len(), got: values.len() });
        }
        self.params.copy_from_slice(values);
        Ok(())
    }

    /// Offset of layer `l`'s weights in the flat parameter vector.
    pub fn weight_offset(&self, l: usize) -> usize {
        self.offsets[l]
    }

    /// Offset of layer `l`'s biases in the flat parameter vector.
    pub fn bias_offset(&self, l: usize) -> usize {
        self.offsets[l] + self.widths[l + 1] * self.widths[l]
    }

    pub fn weights(&self, l: usize) -> &[f64] {
        let o = self.weight_offset(l);
        &self.params[o..o + self.widths[l + 1] * self.widths[l]]
    }

    pub fn biases(&self, l: usize) -> &[f64] {
        let o = self.bias_offset(l);
        &self.params[o..o + self.widths[l + 1]]
    }

    pub fn weights_mut(&mut self, l: usize) -> &mut [f64] {
        let o = self.weight_offset(l);
        let n = self.widths[l + 1] * self.widths[l];
        &mut self.params[o..o + n]
    }

    pub fn biases_mut(&mut self, l: usize) -> &mut [f64] {
        let o = self.bias_offset(l);
        let n = self.widths[l + 1];
        &mut self.params[o..o + n]
    }

    /// Plain forward evaluation of a single input vector.
    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        let mut a = x.to_vec();
        let mut d = [0.0; 5];
        for l in 0..self.n_layers() {
            let (w, b) = (self.weights(l), self.biases(l));
            let n_in = self.widths[l];
            let mut z: Vec<f64> = b
                .iter()
                .enumerate()
                .map(|(i, bi)| bi + w[i * n_in..(i + 1) * n_in].iter().zip(&a).map(|(p, q)| p * q).sum::<f64>())
                .collect();
            if l + 1 < self.n_layers() {
                for v in z.iter_mut() {
                    self.activation.derivatives(*v, &mut d);
                    *v = d[0];
                }
            }
            a = z;
        }
        a
    }
}
