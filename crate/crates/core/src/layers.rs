//! Reusable network building blocks assembled from [`crate::kernels`].

use crate::error::Result;
use crate::kernels::{
    avgpool2, batchnorm_infer, conv2d, relu_inplace, upsample2, BatchNormParams, ConvKernel, UpsampleMode, BN_EPS,
};
use crate::tensor::Tensor;
use crate::weights::{ArchitectureSpec, WeightStore};

/// A stride-1 square convolution with "same" padding.
#[derive(Clone, Debug)]
pub struct Conv {
    pub kernel: ConvKernel,
    pub bias: Vec<f32>,
}

impl Conv {
    pub fn load(store: &WeightStore, prefix: &str, out_ch: usize, in_ch: usize, k: usize) -> Result<Self> {
        let (kernel, bias) = store.conv(prefix, out_ch, in_ch, k)?;
        Ok(Self { kernel, bias })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        conv2d(x, &self.kernel, &self.bias, 1, (self.kernel.kh - 1) / 2)
    }
}

/// MACs of a same-padded stride-1 convolution.
pub fn conv_macs(out_ch: usize, in_ch: usize, k: usize, h: usize, w: usize) -> u64 {
    (out_ch * in_ch * k * k) as u64 * (h * w) as u64
}

/// conv → batch norm → ReLU → 2×2 average pool.
#[derive(Clone, Debug)]
pub struct DownBlock {
    pub conv: Conv,
    pub bn: BatchNormParams,
}

impl DownBlock {
    pub fn spec(arch: &mut ArchitectureSpec, prefix: &str, in_ch: usize, out_ch: usize, k: usize) {
        arch.conv(&format!("{prefix}.conv"), out_ch, in_ch, k);
        arch.batchnorm(&format!("{prefix}.bn"), out_ch);
    }

    pub fn load(store: &WeightStore, prefix: &str, in_ch: usize, out_ch: usize, k: usize) -> Result<Self> {
        Ok(Self {
            conv: Conv::load(store, &format!("{prefix}.conv"), out_ch, in_ch, k)?,
            bn: store.batchnorm(&format!("{prefix}.bn"), out_ch)?,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mut y = batchnorm_infer(&self.conv.forward(x)?, &self.bn, BN_EPS)?;
        relu_inplace(&mut y);
        avgpool2(&y)
    }

    /// MACs for an `h × w` input.
    pub fn macs(in_ch: usize, out_ch: usize, k: usize, h: usize, w: usize) -> u64 {
        conv_macs(out_ch, in_ch, k, h, w)
    }
}

/// 2× bilinear upsample → conv → batch norm → ReLU.
#[derive(Clone, Debug)]
pub struct UpBlock {
    pub conv: Conv,
    pub bn: BatchNormParams,
}

impl UpBlock {
    pub fn spec(arch: &mut ArchitectureSpec, prefix: &str, in_ch: usize, out_ch: usize, k: usize) {
        DownBlock::spec(arch, prefix, in_ch, out_ch, k);
    }

    pub fn load(store: &WeightStore, prefix: &str, in_ch: usize, out_ch: usize, k: usize) -> Result<Self> {
        let DownBlock { conv, bn } = DownBlock::load(store, prefix, in_ch, out_ch, k)?;
        Ok(Self { conv, bn })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let up = upsample2(x, UpsampleMode::Bilinear);
        let mut y = batchnorm_infer(&self.conv.forward(&up)?, &self.bn, BN_EPS)?;
        relu_inplace(&mut y);
        Ok(y)
    }

    /// MACs for an `h × w` input (the convolution runs at `2h × 2w`).
    pub fn macs(in_ch: usize, out_ch: usize, k: usize, h: usize, w: usize) -> u64 {
        conv_macs(out_ch, in_ch, k, 2 * h, 2 * w)
    }
}

/// Pre-activation residual block: `x + conv(relu(bn(x)))`.
#[derive(Clone, Debug)]
pub struct ResBlock {
    pub bn: BatchNormParams,
    pub conv: Conv,
}

impl ResBlock {
    pub fn spec(arch: &mut ArchitectureSpec, prefix: &str, channels: usize, k: usize) {
        arch.batchnorm(&format!("{prefix}.bn"), channels);
        arch.conv(&format!("{prefix}.conv"), channels, channels, k);
    }

    pub fn load(store: &WeightStore, prefix: &str, channels: usize, k: usize) -> Result<Self> {
        Ok(Self {
            bn: store.batchnorm(&format!("{prefix}.bn"), channels)?,
            conv: Conv::load(store, &format!("{prefix}.conv"), channels, channels, k)?,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mut h = batchnorm_infer(x, &self.bn, BN_EPS)?;
        relu_inplace(&mut h);
        let f = self.conv.forward(&h)?;
        x.add(&f)
    }
}
