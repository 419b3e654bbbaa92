//! The tensor kernels on their own: a convolution and a bilinear warp that
//! shifts an image by a quarter of its width.
//!
//!     cargo run --example warp

use refsr::kernels::{conv2d, grid_sample, pixel_to_normalized, ConvKernel, WarpField};
use refsr::Tensor;

fn main() -> refsr::Result<()> {
    let img = Tensor::from_fn(1, 8, 8, |_, y, x| (x + 8 * y) as f32);

    // 3×3 box blur.
    let k = ConvKernel::new(1, 1, 3, 3, vec![1.0 / 9.0; 9])?;
    let blurred = conv2d(&img, &k, &[0.0], 1, 1)?;
    println!("blurred centre {:.3}", blurred.at(0, 4, 4));

    // Sample two pixels to the right; columns past the edge read zero.
    let field = WarpField::from_fn(8, 8, |y, x| [pixel_to_normalized(x + 2, 8), pixel_to_normalized(y, 8)]);
    let shifted = grid_sample(&img, &field);
    for y in 0..2 {
        let row: Vec<_> = (0..8).map(|x| format!("{:>3.0}", shifted.at(0, y, x))).collect();
        println!("{}", row.join(" "));
    }
    Ok(())
}
