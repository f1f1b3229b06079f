//! Regenerates the reference data set: `cargo run --example build_reference -- data/reference`

use shuttlesim_core::reference;

fn main() -> shuttlesim_core::Result<()> {
    let dir = std::env::args().nth(1).unwrap_or_else(|| "data/reference".into());
    reference::write_reference(&dir)?;
    println!("wrote {dir}");
    Ok(())
}
