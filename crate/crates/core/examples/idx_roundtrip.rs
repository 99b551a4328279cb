//! Write a dataset as IDX files and read it back.
//!
//! ```bash
//! cargo run --release -p isicv --example idx_roundtrip
//! ```

use isicv::data::{build_synthetic, load_idx, write_idx, SyntheticSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let seq = build_synthetic(&SyntheticSpec {
        dim: 49,
        ..SyntheticSpec::default()
    })?;
    let data = &seq.tasks[0].train;
    let dir = std::env::temp_dir().join("isicv-idx-example");
    let (images, labels) = (dir.join("images-idx3-ubyte"), dir.join("labels-idx1-ubyte"));
    std::fs::create_dir_all(&dir)?;
    write_idx(data, &images, &labels)?;
    let back = load_idx(&images, &labels)?;

    println!("wrote {} samples of {}x{} to {}", data.len(), data.rows, data.cols, dir.display());
    println!("labels equal: {}", back.labels == data.labels);
    println!("pixels equal: {}", back.images == data.images);
    println!("first sample:");
    let pixels: Vec<char> = back.images.row(0).iter().map(|&p| if p > 0.5 { '#' } else { '.' }).collect();
    for line in pixels.chunks(7) {
        println!("  {}", line.iter().collect::<String>());
    }
    Ok(())
}
