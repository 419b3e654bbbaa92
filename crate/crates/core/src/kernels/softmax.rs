use crate::tensor::Tensor;

/// Softmax across channels at every pixel.
pub fn softmax_channels(input: &Tensor) -> Tensor {
    let (c, h, w) = input.dims();
    let n = h * w;
    let src = input.data();
    let mut out = Tensor::zeros(c, h, w);
    let dst = out.data_mut();
    let mut exps = vec![0.0f64; c];
    for p in 0..n {
        let max = (0..c).map(|ch| src[ch * n + p]).fold(f32::NEG_INFINITY, f32::max);
        let mut sum = 0.0f64;
        for (ch, e) in exps.iter_mut().enumerate() {
            *e = ((src[ch * n + p] - max) as f64).exp();
            sum += *e;
        }
        for (ch, e) in exps.iter().enumerate() {
            dst[ch * n + p] = (e / sum) as f32;
        }
    }
    out
}

/// Softmax over all pixels of each channel independently.
pub fn softmax_spatial(input: &Tensor) -> Tensor {
    let mut out = input.clone();
    for ch in 0..input.channels() {
        let plane = out.channel_mut(ch);
        let max = plane.iter().copied().fold(f32::NEG_INFINITY, f32::max);
        let exps: Vec<f64> = plane.iter().map(|&v| ((v - max) as f64).exp()).collect();
        let sum: f64 = exps.iter().sum();
        for (v, e) in plane.iter_mut().zip(&exps) {
            *v = (e / sum) as f32;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equal_logits_split_evenly() {
        let t = Tensor::filled(3, 2, 2, 4.0);
        let s = softmax_channels(&t);
        assert!(s.data().iter().all(|&v| (v - 1.0 / 3.0).abs() < 1e-7));
    }

    #[test]
    fn dominant_logit_takes_all() {
        let mut t = Tensor::zeros(3, 1, 1);
        t.set(1, 0, 0, 1000.0);
        let s = softmax_channels(&t);
        assert!((s.at(1, 0, 0) - 1.0).abs() < 1e-6);

        let mut m = Tensor::zeros(1, 4, 4);
        m.set(0, 2, 3, 1000.0);
        let s = softmax_spatial(&m);
        assert!((s.at(0, 2, 3) - 1.0).abs() < 1e-6);
    }
}
