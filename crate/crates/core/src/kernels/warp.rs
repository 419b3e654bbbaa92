//! Dense sampling fields and bilinear warping.
//!
//! Coordinates live in normalized `[-1, 1]` space with pixel centres at
//! `(2i + 1) / n - 1`, so pixel `i` of an `n`-wide image sits at
//! [`pixel_to_normalized`]`(i, n)` and the outermost centres sit half a texel
//! inside the `±1` border.

use crate::error::{Error, Result};
use crate::kernels::resample::resize_bilinear;
use crate::tensor::Tensor;

#[inline]
pub fn pixel_to_normalized(i: usize, n: usize) -> f32 {
    (2 * i + 1) as f32 / n as f32 - 1.0
}

#[inline]
pub fn normalized_to_pixel(g: f32, n: usize) -> f32 {
    ((g + 1.0) * n as f32 - 1.0) * 0.5
}

/// Per-pixel `(x, y)` sampling coordinates mapping an output grid into a source image.
#[derive(Clone, Debug, PartialEq)]
pub struct WarpField {
    height: usize,
    width: usize,
    coords: Vec<[f32; 2]>,
}

impl WarpField {
    pub fn identity(height: usize, width: usize) -> Self {
        Self::from_fn(height, width, |y, x| {
            [pixel_to_normalized(x, width), pixel_to_normalized(y, height)]
        })
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> [f32; 2]) -> Self {
        let mut coords = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                coords.push(f(y, x));
            }
        }
        Self {
            height,
            width,
            coords,
        }
    }

    pub fn from_coords(height: usize, width: usize, coords: Vec<[f32; 2]>) -> Result<Self> {
        if coords.len() != height * width {
            return Err(Error::shape(
                "WarpField::from_coords",
                format!("{height}x{width} field needs {} coords, got {}", height * width, coords.len()),
            ));
        }
        Ok(Self {
            height,
            width,
            coords,
        })
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
    pub fn get(&self, y: usize, x: usize) -> [f32; 2] {
        self.coords[y * self.width + x]
    }

    pub fn coords(&self) -> &[[f32; 2]] {
        &self.coords
    }

    pub fn max_abs_diff(&self, other: &WarpField) -> f32 {
        if (self.height, self.width) != (other.height, other.width) {
            return f32::INFINITY;
        }
        self.coords
            .iter()
            .zip(&other.coords)
            .map(|(a, b)| (a[0] - b[0]).abs().max((a[1] - b[1]).abs()))
            .fold(0.0, f32::max)
    }

    /// Offset from the identity grid as a 2-channel `(dx, dy)` tensor.
    pub fn displacement(&self) -> Tensor {
        let id = WarpField::identity(self.height, self.width);
        let n = self.height * self.width;
        let mut data = vec![0.0; 2 * n];
        for (i, (c, g)) in self.coords.iter().zip(&id.coords).enumerate() {
            data[i] = c[0] - g[0];
            data[n + i] = c[1] - g[1];
        }
        Tensor::from_vec(2, self.height, self.width, data).expect("sized above")
    }

    /// Resamples the field to another grid size by bilinearly interpolating
    /// its displacement, so the identity field stays exactly the identity.
    pub fn resample(&self, height: usize, width: usize) -> WarpField {
        if (height, width) == (self.height, self.width) {
            return self.clone();
        }
        let disp = resize_bilinear(&self.displacement(), height, width);
        let (dx, dy) = (disp.channel(0), disp.channel(1));
        WarpField::from_fn(height, width, |y, x| {
            let i = y * width + x;
            [
                pixel_to_normalized(x, width) + dx[i],
                pixel_to_normalized(y, height) + dy[i],
            ]
        })
    }
}

/// Bilinearly samples `input` at every coordinate of `field`; samples
/// outside the image clamp to the border texels.
pub fn grid_sample(input: &Tensor, field: &WarpField) -> Tensor {
    let (c, h, w) = input.dims();
    let (oh, ow) = (field.height, field.width);
    let n = oh * ow;
    // Resolve taps once and reuse them for every channel.
    let mut taps = Vec::with_capacity(n);
    for &[gx, gy] in &field.coords {
        let px = normalized_to_pixel(gx, w).clamp(0.0, (w - 1) as f32);
        let py = normalized_to_pixel(gy, h).clamp(0.0, (h - 1) as f32);
        let (px, py) = if px.is_finite() && py.is_finite() {
            (px, py)
        } else {
            (0.0, 0.0)
        };
        let x0 = px.floor() as usize;
        let y0 = py.floor() as usize;
        let x1 = (x0 + 1).min(w - 1);
        let y1 = (y0 + 1).min(h - 1);
        taps.push((y0 * w + x0, y0 * w + x1, y1 * w + x0, y1 * w + x1, px - x0 as f32, py - y0 as f32));
    }
    let mut out = Tensor::zeros(c, oh, ow);
    for ch in 0..c {
        let src = input.channel(ch);
        let dst = out.channel_mut(ch);
        for (d, &(i00, i01, i10, i11, fx, fy)) in dst.iter_mut().zip(&taps) {
            let top = src[i00] + (src[i01] - src[i00]) * fx;
            let bot = src[i10] + (src[i11] - src[i10]) * fx;
            *d = top + (bot - top) * fy;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_grid_reproduces_input() {
        let t = Tensor::from_fn(2, 7, 5, |c, y, x| (c * 31 + y * 5 + x) as f32 * 0.1);
        let out = grid_sample(&t, &WarpField::identity(7, 5));
        assert!(out.max_abs_diff(&t) < 1e-5);
    }

    #[test]
    fn one_texel_shift_replicates_border() {
        let t = Tensor::from_fn(1, 4, 6, |_, y, x| (y * 10 + x) as f32);
        let field = WarpField::from_fn(4, 6, |y, x| {
            [pixel_to_normalized(x, 6) + 2.0 / 6.0, pixel_to_normalized(y, 4)]
        });
        let out = grid_sample(&t, &field);
        for y in 0..4 {
            for x in 0..6 {
                let want = t.at(0, y, (x + 1).min(5));
                assert!((out.at(0, y, x) - want).abs() < 1e-4);
            }
        }
    }

    #[test]
    fn constant_input_stays_constant() {
        let t = Tensor::filled(3, 5, 5, 0.7);
        let field = WarpField::from_fn(9, 3, |y, x| [x as f32 * 1.7 - 2.0, (y as f32).sin() * 3.0]);
        let out = grid_sample(&t, &field);
        assert_eq!(out.dims(), (3, 9, 3));
        assert!(out.data().iter().all(|&v| (v - 0.7).abs() < 1e-6));
    }

    #[test]
    fn identity_resample_is_identity() {
        let id = WarpField::identity(16, 16);
        assert!(id.resample(64, 64).max_abs_diff(&WarpField::identity(64, 64)) < 1e-6);
        assert!(id.resample(4, 4).max_abs_diff(&WarpField::identity(4, 4)) < 1e-6);
    }

    #[test]
    fn translation_survives_resampling() {
        let f = WarpField::from_fn(8, 8, |y, x| [pixel_to_normalized(x, 8) + 0.25, pixel_to_normalized(y, 8)]);
        let r = f.resample(32, 32);
        let want = WarpField::from_fn(32, 32, |y, x| [pixel_to_normalized(x, 32) + 0.25, pixel_to_normalized(y, 32)]);
        assert!(r.max_abs_diff(&want) < 1e-6);
    }
}
