//! Write a random weight set to disk, read it back, and load it through a
//! model bank the way the receiver does.
//!
//!     cargo run --example weights

use refsr::model::{Model, ModelBank, WeightSource};
use refsr::synth::SynthesizerConfig;
use refsr::weights::{random_init, WeightStore};

fn main() -> refsr::Result<()> {
    let cfg = SynthesizerConfig::for_output(256)?;
    let arch = Model::architecture(&cfg);
    println!("{} parameters", arch.total_values());

    let store = random_init(&arch, 42)?;
    let root = std::env::temp_dir().join(format!("refsr-weights-{}", std::process::id()));
    store.save(root.join("p64"))?;

    let loaded = WeightStore::load(root.join("p64"))?;
    assert_eq!(loaded.len(), store.len());
    for (name, p) in loaded.iter().take(4) {
        println!("{name:<40} {:?}", p.shape);
    }

    let mut bank = ModelBank::new(256, WeightSource::Directory(root.clone()))?;
    let model = bank.get("p64")?;
    println!("loaded p64 for {}x{} output", model.config().output_resolution, model.config().output_resolution);

    std::fs::remove_dir_all(&root)?;
    Ok(())
}
