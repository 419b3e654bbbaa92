use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Per-channel running statistics and affine parameters of a batch-norm layer.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchNormParams {
    pub mean: Vec<f32>,
    pub var: Vec<f32>,
    pub gamma: Vec<f32>,
    pub beta: Vec<f32>,
}

impl BatchNormParams {
    pub fn identity(channels: usize) -> Self {
        Self {
            mean: vec![0.0; channels],
            var: vec![1.0; channels],
            gamma: vec![1.0; channels],
            beta: vec![0.0; channels],
        }
    }

    pub fn channels(&self) -> usize {
        self.mean.len()
    }
}

pub const BN_EPS: f32 = 1e-5;

/// Inference-mode batch normalization: `gamma * (x - mean) / sqrt(var + eps) + beta`.
pub fn batchnorm_infer(input: &Tensor, params: &BatchNormParams, eps: f32) -> Result<Tensor> {
    let c = input.channels();
    let lens = [
        params.mean.len(),
        params.var.len(),
        params.gamma.len(),
        params.beta.len(),
    ];
    if lens.iter().any(|&l| l != c) {
        return Err(Error::shape(
            "batchnorm_infer",
            format!("parameter lengths {lens:?} for {c} channels"),
        ));
    }
    if let Some(i) = params.var.iter().position(|&v| !(v >= 0.0)) {
        return Err(Error::invalid(format!(
            "batchnorm variance of channel {i} is {} (must be >= 0)",
            params.var[i]
        )));
    }
    let mut out = input.clone();
    for ch in 0..c {
        let scale = params.gamma[ch] / (params.var[ch] + eps).sqrt();
        let shift = params.beta[ch] - params.mean[ch] * scale;
        for v in out.channel_mut(ch) {
            *v = *v * scale + shift;
        }
    }
    Ok(out)
}

pub fn relu(input: &Tensor) -> Tensor {
    input.map(|v| v.max(0.0))
}

pub fn relu_inplace(t: &mut Tensor) {
    t.map_inplace(|v| v.max(0.0));
}

pub fn sigmoid(input: &Tensor) -> Tensor {
    input.map(sigmoid_scalar)
}

#[inline]
pub fn sigmoid_scalar(v: f32) -> f32 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}
