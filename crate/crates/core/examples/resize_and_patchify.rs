//! Snap an arbitrary resolution onto the token lattice, resize, and cut
//! patches.

use vidtok::geometry::{
    bilinear_resize, patchify, smart_resize, unpatchify, ImageBuffer, Resolution,
};

fn main() -> vidtok::Result<()> {
    for (h, w) in [(384, 384), (480, 640), (1080, 1920), (3000, 200)] {
        let target = smart_resize(Resolution::new(h, w)?, 14, 2, 10240)?;
        let tokens = (target.height / 28) * (target.width / 28);
        println!("{h}x{w} -> {target} ({tokens} tokens after merge)");
    }

    let img = ImageBuffer::from_fn(100, 150, 3, |y, x, c| ((y + 2 * x + c) % 17) as f64 / 16.0)?;
    let target = smart_resize(img.resolution(), 14, 2, 10240)?;
    let resized = bilinear_resize(&img, target)?;
    let patches = patchify(&resized, 14)?;
    println!(
        "image {} resized to {}: {}x{} patches of dim {}",
        img.resolution(),
        resized.resolution(),
        patches.rows(),
        patches.cols(),
        patches.dim()
    );
    assert_eq!(unpatchify(&patches, 3)?, resized);
    println!("unpatchify restores the resized image exactly");
    Ok(())
}
