//! Image-quality metrics and latency distributions.
//!
//!     cargo run --example quality

use refsr::codec::{bicubic_upsample, downsample, nearest_upsample};
use refsr::metrics::{psnr, ssim, ssim_to_db, Cdf};
use refsr::video::smooth_gradient;

fn main() -> refsr::Result<()> {
    let truth = smooth_gradient(1024, 0.3);
    let lr = downsample(&truth, 256)?;
    for (name, up) in [("bicubic", bicubic_upsample(&lr, 1024)?), ("nearest", nearest_upsample(&lr, 1024)?)] {
        let s = ssim(&up, &truth)?;
        println!("{name}: psnr {:.2} dB, ssim {:.4} ({:.2} dB)", psnr(&up, &truth)?, s, ssim_to_db(s));
    }

    let cdf = Cdf::new(vec![31.0, 35.5, 33.2, 90.1, 34.0, 36.8, 32.9, 33.3]);
    println!("latency p50 {:.1} ms, p90 {:.1} ms, p99 {:.1} ms", cdf.p50, cdf.p90, cdf.p99);
    Ok(())
}
