//! Print the discriminator shape traces of every preset.
//!
//! cargo run --release --example layer_shapes

use tsgan::gan::{shape_report, Discriminator, Preset};

fn main() -> tsgan::Result<()> {
    for preset in Preset::ALL {
        let spec = preset.spec(5);
        let d = Discriminator::new(spec.discriminator.clone(), 0)?;
        println!("{} ({} discriminator parameters)", preset.name(), d.store.num_values());
        for line in shape_report(&spec.discriminator)?.lines() {
            println!("  {line}");
        }
    }
    Ok(())
}
