//! Renders a synthetic walk as PPM stick figures, one image per frame.

use mmdm::cli::render::{render_frames, write_frames, RenderOptions, View};
use mmdm::motion::{generate_synthetic_dataset, GeneratorConfig};

pub fn run_example() -> mmdm::Result<usize> {
    let data = GeneratorConfig { archetypes: ["walk", "wave-left-arm", "kick-right-leg", "crouch"].map(String::from).to_vec(), samples_per_archetype: 1, min_len: 16, max_len: 16, ..Default::default() };
    let walk = generate_synthetic_dataset(&data, 4)?.remove(0);
    let images = render_frames(&walk, &data.skeleton(), &RenderOptions { view: View::Side, size: 128 })?;
    let dir = tempfile::tempdir().map_err(|e| mmdm::Error::io("tempdir", e))?;
    let paths = write_frames(&images, dir.path())?;
    println!("{} frames, first {}", paths.len(), paths[0].file_name().unwrap().to_string_lossy());
    Ok(paths.len())
}

#[allow(dead_code)]
fn main() -> mmdm::Result<()> {
    run_example().map(|_| ())
}
