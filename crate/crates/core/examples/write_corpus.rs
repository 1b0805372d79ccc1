//! Regenerates the PPM files under `corpus/`.
//!
//! cargo run -p keytone --example write_corpus [-- DIR]

use std::path::PathBuf;

use keytone::classify::ImageCategory;
use keytone::corpus;
use keytone::imageio::write_ppm;

fn main() -> keytone::Result<()> {
    let dir = std::env::args()
        .nth(1)
        .map_or_else(|| PathBuf::from("corpus"), PathBuf::from);
    std::fs::create_dir_all(&dir).map_err(|e| keytone::Error::io(&dir, e))?;
    for cat in ImageCategory::ALL {
        let path = dir.join(corpus::file_name(cat));
        write_ppm(&path, &corpus::scene(cat))?;
        println!("{}", path.display());
    }
    Ok(())
}
