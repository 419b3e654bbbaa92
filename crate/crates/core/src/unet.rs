//! The hourglass feature extractor shared by keypoint detection and motion
//! estimation.
//!
//! Five encoder blocks each halve the resolution and double the width
//! starting from 64 features; five decoder blocks mirror them, each one's
//! output concatenated with the matching encoder output before the next
//! decoder block. The trunk returns 64 features at the input resolution.
//!
//! Parameters are named `{prefix}.down{i}.{conv,bn}.*` and
//! `{prefix}.up{j}.{conv,bn}.*`, with `up4` the first decoder block to run.

use crate::error::{Error, Result};
use crate::layers::{DownBlock, UpBlock};
use crate::tensor::Tensor;
use crate::weights::{ArchitectureSpec, WeightStore};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct UNetSpec {
    pub in_channels: usize,
    pub base_features: usize,
    pub blocks: usize,
    pub kernel: usize,
}

impl UNetSpec {
    pub fn new(in_channels: usize) -> Self {
        Self {
            in_channels,
            base_features: 64,
            blocks: 5,
            kernel: 3,
        }
    }

    /// Width of encoder block `i`'s output.
    pub fn encoder_channels(&self, i: usize) -> usize {
        self.base_features << i
    }

    /// `(in, out)` channel counts of encoder block `i`.
    pub fn down_channels(&self, i: usize) -> (usize, usize) {
        let inp = if i == 0 {
            self.in_channels
        } else {
            self.encoder_channels(i - 1)
        };
        (inp, self.encoder_channels(i))
    }

    /// `(in, out)` channel counts of decoder block `j`.
    pub fn up_channels(&self, j: usize) -> (usize, usize) {
        let inp = if j == self.blocks - 1 {
            self.encoder_channels(j)
        } else {
            2 * self.encoder_channels(j)
        };
        let out = if j == 0 {
            self.base_features
        } else {
            self.encoder_channels(j - 1)
        };
        (inp, out)
    }

    pub fn out_channels(&self) -> usize {
        self.base_features
    }

    pub fn architecture(&self, prefix: &str) -> ArchitectureSpec {
        let mut arch = ArchitectureSpec::new();
        for i in 0..self.blocks {
            let (inp, out) = self.down_channels(i);
            DownBlock::spec(&mut arch, &format!("{prefix}.down{i}"), inp, out, self.kernel);
        }
        for j in (0..self.blocks).rev() {
            let (inp, out) = self.up_channels(j);
            UpBlock::spec(&mut arch, &format!("{prefix}.up{j}"), inp, out, self.kernel);
        }
        arch
    }

    pub fn macs(&self, h: usize, w: usize) -> u64 {
        let mut total = 0;
        for i in 0..self.blocks {
            let (inp, out) = self.down_channels(i);
            total += DownBlock::macs(inp, out, self.kernel, h >> i, w >> i);
        }
        for j in 0..self.blocks {
            let (inp, out) = self.up_channels(j);
            total += UpBlock::macs(inp, out, self.kernel, h >> (j + 1), w >> (j + 1));
        }
        total
    }
}

#[derive(Clone, Debug)]
pub struct UNetTrunk {
    spec: UNetSpec,
    down: Vec<DownBlock>,
    /// Decoder blocks indexed by depth; `up[blocks - 1]` runs first.
    up: Vec<UpBlock>,
}

impl UNetTrunk {
    pub fn build(store: &WeightStore, prefix: &str, spec: UNetSpec) -> Result<Self> {
        let down = (0..spec.blocks)
            .map(|i| {
                let (inp, out) = spec.down_channels(i);
                DownBlock::load(store, &format!("{prefix}.down{i}"), inp, out, spec.kernel)
            })
            .collect::<Result<Vec<_>>>()?;
        let up = (0..spec.blocks)
            .map(|j| {
                let (inp, out) = spec.up_channels(j);
                UpBlock::load(store, &format!("{prefix}.up{j}"), inp, out, spec.kernel)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { spec, down, up })
    }

    pub fn spec(&self) -> &UNetSpec {
        &self.spec
    }

    pub fn forward(&self, input: &Tensor) -> Result<Tensor> {
        let (c, h, w) = input.dims();
        let m = 1 << self.spec.blocks;
        if c != self.spec.in_channels || h % m != 0 || w % m != 0 || h == 0 || w == 0 {
            return Err(Error::shape(
                "UNetTrunk::forward",
                format!(
                    "expected {} channels with spatial size divisible by {m}, got {:?}",
                    self.spec.in_channels, input
                ),
            ));
        }
        let mut skips = Vec::with_capacity(self.spec.blocks);
        let mut x = input.clone();
        for block in &self.down {
            x = block.forward(&x)?;
            skips.push(x.clone());
        }
        // The deepest encoder output feeds the first decoder block directly.
        skips.pop();
        for j in (0..self.spec.blocks).rev() {
            x = self.up[j].forward(&x)?;
            if j > 0 {
                let skip = skips.pop().expect("one skip per decoder block");
                x = Tensor::concat_channels(&[&x, &skip])?;
            }
        }
        Ok(x)
    }
}
