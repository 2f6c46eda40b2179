//! Write the bundled courtyard scene to disk, by default into `scenes/demo`.
//!
//! ```text
//! cargo run -p rainsim-core --example make_demo_scene -- [DIR] [CELLS WIDTH HEIGHT]
//! ```

use std::path::PathBuf;

use rainsim_core::scene::write_scene;
use rainsim_core::synthetic::{courtyard_scene, demo_scene};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let dir = PathBuf::from(args.first().map(String::as_str).unwrap_or("scenes/demo"));
    let scene = match &args[1.min(args.len())..] {
        [] => demo_scene()?,
        [cells, w, h] => courtyard_scene(cells.parse()?, w.parse()?, h.parse()?)?,
        _ => return Err("expected DIR or DIR CELLS WIDTH HEIGHT".into()),
    };
    write_scene(&dir, &scene)?;
    println!("wrote {} ({} views)", dir.display(), scene.views.len());
    Ok(())
}
