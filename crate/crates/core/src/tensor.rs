//! Dense channel-major `f32` tensors.

use std::fmt;

use crate::error::{Error, Result};

/// A `channels × height × width` array of `f32`, row-major within each channel.
#[derive(Clone, PartialEq)]
pub struct Tensor {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f32>,
}

/// An RGB image stored as a 3-channel tensor with values in `[0, 1]`.
pub type Frame = Tensor;

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "Tensor({}x{}x{})",
            self.channels, self.height, self.width
        )
    }
}

impl Tensor {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self::filled(channels, height, width, 0.0)
    }

    pub fn filled(channels: usize, height: usize, width: usize, value: f32) -> Self {
        Self {
            channels,
            height,
            width,
            data: vec![value; channels * height * width],
        }
    }

    pub fn from_vec(channels: usize, height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        let expected = channels * height * width;
        if data.len() != expected {
            return Err(Error::shape(
                "Tensor::from_vec",
                format!(
                    "{channels}x{height}x{width} needs {expected} values, got {}",
                    data.len()
                ),
            ));
        }
        Ok(Self {
            channels,
            height,
            width,
            data,
        })
    }

    pub fn from_fn(
        channels: usize,
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize, usize) -> f32,
    ) -> Self {
        let mut data = Vec::with_capacity(channels * height * width);
        for c in 0..channels {
            for y in 0..height {
                for x in 0..width {
                    data.push(f(c, y, x));
                }
            }
        }
        Self {
            channels,
            height,
            width,
            data,
        }
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.channels
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    #[inline]
    pub fn plane_len(&self) -> usize {
        self.height * self.width
    }

    #[inline]
    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn at(&self, c: usize, y: usize, x: usize) -> f32 {
        self.data[(c * self.height + y) * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, c: usize, y: usize, x: usize, value: f32) {
        self.data[(c * self.height + y) * self.width + x] = value;
    }

    #[inline]
    pub fn channel(&self, c: usize) -> &[f32] {
        let n = self.plane_len();
        &self.data[c * n..(c + 1) * n]
    }

    #[inline]
    pub fn channel_mut(&mut self, c: usize) -> &mut [f32] {
        let n = self.plane_len();
        &mut self.data[c * n..(c + 1) * n]
    }

    /// Copies channels `start..end` into a new tensor.
    pub fn slice_channels(&self, start: usize, end: usize) -> Result<Tensor> {
        if start > end || end > self.channels {
            return Err(Error::shape(
                "Tensor::slice_channels",
                format!("range {start}..{end} out of {} channels", self.channels),
            ));
        }
        let n = self.plane_len();
        Tensor::from_vec(
            end - start,
            self.height,
            self.width,
            self.data[start * n..end * n].to_vec(),
        )
    }

    /// Stacks tensors of equal spatial size along the channel axis.
    pub fn concat_channels(parts: &[&Tensor]) -> Result<Tensor> {
        let first = parts
            .first()
            .ok_or_else(|| Error::invalid("concat_channels of zero tensors"))?;
        let (h, w) = (first.height, first.width);
        let mut data = Vec::with_capacity(parts.iter().map(|t| t.data.len()).sum());
        let mut channels = 0;
        for t in parts {
            if t.height != h || t.width != w {
                return Err(Error::shape(
                    "concat_channels",
                    format!("{:?} does not match spatial size {h}x{w}", t),
                ));
            }
            data.extend_from_slice(&t.data);
            channels += t.channels;
        }
        Tensor::from_vec(channels, h, w, data)
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> Tensor {
        Tensor {
            data: self.data.iter().map(|&v| f(v)).collect(),
            ..*self
        }
    }

    pub fn map_inplace(&mut self, f: impl Fn(f32) -> f32) {
        for v in &mut self.data {
            *v = f(*v);
        }
    }

    pub fn zip_with(&self, other: &Tensor, f: impl Fn(f32, f32) -> f32) -> Result<Tensor> {
        self.ensure_same_dims(other, "zip_with")?;
        Ok(Tensor {
            channels: self.channels,
            height: self.height,
            width: self.width,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_with(other, |a, b| a + b)
    }

    /// Multiplies every channel by a single-channel mask of the same spatial size.
    pub fn mul_plane(&self, mask: &Tensor) -> Result<Tensor> {
        if mask.channels != 1 || mask.height != self.height || mask.width != self.width {
            return Err(Error::shape(
                "mul_plane",
                format!("mask {:?} cannot scale {:?}", mask, self),
            ));
        }
        let mut out = self.clone();
        for c in 0..self.channels {
            for (v, m) in out.channel_mut(c).iter_mut().zip(&mask.data) {
                *v *= m;
            }
        }
        Ok(out)
    }

    pub fn clamp(&self, lo: f32, hi: f32) -> Tensor {
        self.map(|v| v.clamp(lo, hi))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Largest absolute elementwise difference; `f32::INFINITY` on a shape mismatch.
    pub fn max_abs_diff(&self, other: &Tensor) -> f32 {
        if self.dims() != other.dims() {
            return f32::INFINITY;
        }
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f32::max)
    }

    pub fn mean(&self) -> f64 {
        if self.data.is_empty() {
            return 0.0;
        }
        self.data.iter().map(|&v| v as f64).sum::<f64>() / self.data.len() as f64
    }

    pub(crate) fn ensure_same_dims(&self, other: &Tensor, op: &'static str) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::shape(op, format!("{:?} vs {:?}", self, other)));
        }
        Ok(())
    }
}
