//! Measure the bitrate range the codec covers at each resolution on a
//! small synthetic corpus.
//!
//!     cargo run --example profile

use refsr::codec::profile;
use refsr::video::SyntheticClip;

fn main() -> refsr::Result<()> {
    let corpus: Vec<_> = (0..2).map(|seed| SyntheticClip::new(512, seed).frames(3)).collect();
    let p = profile(&corpus, 30.0)?;
    for r in &p.ranges {
        println!("{:>5}  {:>9.1} .. {:>9.1} kbps", r.resolution, r.min_kbps, r.max_kbps);
    }
    println!("{}", p.to_json()?);
    Ok(())
}
