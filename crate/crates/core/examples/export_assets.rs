//! Writes the built-in procedural backgrounds and foregrounds as PNGs so they
//! can be edited or replaced and passed back with `--background-dir` and
//! `--foreground-dir`.
//!
//! `cargo run --example export_assets -- assets`

use std::path::PathBuf;

use refocus_core::synth::Assets;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let root = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "assets".into()));
    let (bg, fg) = (root.join("backgrounds"), root.join("foregrounds"));
    Assets::procedural().save(&bg, &fg)?;
    println!("wrote {} and {}", bg.display(), fg.display());
    Ok(())
}
