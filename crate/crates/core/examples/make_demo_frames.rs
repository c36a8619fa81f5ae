//! Write small frame directories for trying the CLI.
//!
//! ```text
//! cargo run --example make_demo_frames -- demo
//! vidtok prune-stats --frames demo/static3 --threshold 0.1
//! ```

use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vidtok::geometry::ImageBuffer;
use vidtok::io::write_frame_dir;

fn main() -> vidtok::Result<()> {
    let root = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "demo".into()));
    let mut rng = ChaCha8Rng::seed_from_u64(1);

    let still = ImageBuffer::from_fn(56, 84, 3, |_, _, _| rng.gen::<f64>())?;
    write_frame_dir(
        &root.join("static3"),
        &vec![still; 3],
        &[0.0, 1.0, 2.0],
        3.0,
        1.0,
        "png",
    )?;

    // A bright square sliding right over a dark background, 4 s at 2 fps.
    let moving: Vec<ImageBuffer> = (0..8)
        .map(|i| {
            ImageBuffer::from_fn(56, 112, 1, |y, x, _| {
                let x0 = i * 10;
                if (14..42).contains(&y) && (x0..x0 + 28).contains(&x) {
                    0.9
                } else {
                    0.1
                }
            })
        })
        .collect::<vidtok::Result<_>>()?;
    let times: Vec<f64> = (0..8).map(|i| i as f64 * 0.5).collect();
    write_frame_dir(&root.join("moving"), &moving, &times, 4.0, 2.0, "png")?;

    println!(
        "wrote {} and {}",
        root.join("static3").display(),
        root.join("moving").display()
    );
    Ok(())
}
