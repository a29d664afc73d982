use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SimRng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MoEDims {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub num_classes: usize,
    pub num_experts: usize,
}

impl MoEDims {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.hidden_dim == 0 || self.num_classes == 0 || self.num_experts == 0 {
            return Err(Error::config(format!("all model dimensions must be > 0: {self:?}")));
        }
        Ok(())
    }

    /// Scalar parameter count of one expert.
    pub fn expert_param_count(&self) -> usize {
        self.input_dim * self.hidden_dim + self.hidden_dim + self.hidden_dim * self.num_classes + self.num_classes
    }
}

/// Fully connected layer, `y = W^T x + b`, with `W` stored row-major as
/// `inputs x outputs`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weight: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    /// Weights uniform in `[-1/sqrt(inputs), 1/sqrt(inputs))`, zero bias.
    fn init(inputs: usize, outputs: usize, rng: &mut SimRng) -> Self {
        let bound = 1.0 / (inputs as f64).sqrt();
        let weight = (0..inputs * outputs).map(|_| rng.uniform_in(-bound, bound)).collect();
        Self {
            inputs,
            outputs,
            weight,
            bias: vec![0.0; outputs],
        }
    }

    pub fn forward_into(&self, x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.bias);
        for (xi, row) in x.iter().zip(self.weight.chunks_exact(self.outputs)) {
            if *xi == 0.0 {
                continue;
            }
            for (o, w) in out.iter_mut().zip(row) {
                *o += xi * w;
            }
        }
    }

    /// Adds the gradient of `dy . (W^T x + b)` into `self`.
    pub fn accumulate(&mut self, x: &[f64], dy: &[f64]) {
        for (xi, row) in x.iter().zip(self.weight.chunks_exact_mut(self.outputs)) {
            for (g, d) in row.iter_mut().zip(dy) {
                *g += xi * d;
            }
        }
        for (g, d) in self.bias.iter_mut().zip(dy) {
            *g += d;
        }
    }

    /// `dx = W dy`.
    pub fn backprop_input(&self, dy: &[f64], dx: &mut [f64]) {
        for (d, row) in dx.iter_mut().zip(self.weight.chunks_exact(self.outputs)) {
            *d = row.iter().zip(dy).map(|(w, g)| w * g).sum();
        }
    }

    pub fn axpy(&mut self, scale: f64, other: &Dense) {
        for (a, b) in self.weight.iter_mut().zip(&other.weight) {
            *a += scale * b;
        }
        for (a, b) in self.bias.iter_mut().zip(&other.bias) {
            *a += scale * b;
        }
    }

    pub fn scale(&mut self, s: f64) {
        self.weight.iter_mut().chain(self.bias.iter_mut()).for_each(|v| *v *= s);
    }

    pub fn values(&self) -> impl Iterator<Item = &f64> {
        self.weight.iter().chain(&self.bias)
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.weight.iter_mut().chain(self.bias.iter_mut())
    }

    pub fn same_shape(&self, other: &Dense) -> bool {
        self.inputs == other.inputs
            && self.outputs == other.outputs
            && self.weight.len() == other.weight.len()
            && self.bias.len() == other.bias.len()
    }
}

/// One expert: `input -> tanh(hidden) -> class logits`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpertParams {
    pub hidden: Dense,
    pub output: Dense,
}

impl ExpertParams {
    pub fn zeros(dims: &MoEDims) -> Self {
        Self {
            hidden: Dense::zeros(dims.input_dim, dims.hidden_dim),
            output: Dense::zeros(dims.hidden_dim, dims.num_classes),
        }
    }

    pub fn axpy(&mut self, scale: f64, other: &ExpertParams) {
        self.hidden.axpy(scale, &other.hidden);
        self.output.axpy(scale, &other.output);
    }

    pub fn values(&self) -> impl Iterator<Item = &f64> {
        self.hidden.values().chain(self.output.values())
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.hidden.values_mut().chain(self.output.values_mut())
    }

    pub fn same_shape(&self, other: &ExpertParams) -> bool {
        self.hidden.same_shape(&other.hidden) && self.output.same_shape(&other.output)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MoEParams {
    pub dims: MoEDims,
    /// `input_dim x num_experts` routing layer.
    pub gate: Dense,
    pub experts: Vec<ExpertParams>,
}

impl MoEParams {
    pub fn zeros(dims: MoEDims) -> Self {
        Self {
            dims,
            gate: Dense::zeros(dims.input_dim, dims.num_experts),
            experts: (0..dims.num_experts).map(|_| ExpertParams::zeros(&dims)).collect(),
        }
    }

    /// Every scalar in checkpoint order: gate weight, gate bias, then per
    /// expert hidden weight, hidden bias, output weight, output bias.
    pub fn values(&self) -> impl Iterator<Item = &f64> {
        self.gate.values().chain(self.experts.iter().flat_map(ExpertParams::values))
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.gate
            .values_mut()
            .chain(self.experts.iter_mut().flat_map(ExpertParams::values_mut))
    }

    pub fn param_count(&self) -> usize {
        self.values().count()
    }

    pub fn is_finite(&self) -> bool {
        self.values().all(|v| v.is_finite())
    }

    pub fn check_shape(&self) -> Result<()> {
        let reference = MoEParams::zeros(self.dims);
        let ok = self.gate.same_shape(&reference.gate)
            && self.experts.len() == reference.experts.len()
            && self.experts.iter().zip(&reference.experts).all(|(a, b)| a.same_shape(b));
        if ok {
            Ok(())
        } else {
            Err(Error::input("parameter shapes do not match dims"))
        }
    }
}

/// Draws fresh parameters; deterministic in `(dims, seed)`.
pub fn init_params(dims: MoEDims, seed: u64) -> Result<MoEParams> {
    dims.validate()?;
    let mut rng = SimRng::derive(seed, &[0x6d6f_6500]);
    let gate = Dense::init(dims.input_dim, dims.num_experts, &mut rng);
    let experts = (0..dims.num_experts)
        .map(|_| ExpertParams {
            hidden: Dense::init(dims.input_dim, dims.hidden_dim, &mut rng),
            output: Dense::init(dims.hidden_dim, dims.num_classes, &mut rng),
        })
        .collect();
    Ok(MoEParams { dims, gate, experts })
}
