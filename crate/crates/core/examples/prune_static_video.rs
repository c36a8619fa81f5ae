//! Differential frame pruning on a static clip and on a clip with one
//! moving region.

use vidtok::diff_fp::{
    compression_stats, compute_prune_mask, frame_stats, FrameSequence, PruneConfig,
};
use vidtok::geometry::ImageBuffer;

fn main() -> vidtok::Result<()> {
    let cfg = PruneConfig::new(0.1, 28)?;

    let frame = ImageBuffer::from_fn(56, 56, 3, |y, x, c| {
        ((y * 7 + x * 3 + c) % 11) as f64 / 10.0
    })?;
    let still = FrameSequence::evenly_spaced(vec![frame.clone(); 3], 1.0)?;
    let s = compression_stats(&compute_prune_mask(&still, &cfg)?);
    println!(
        "static, 3 frames: kept={} dropped={} ratio={:.4}",
        s.kept, s.dropped, s.ratio
    );

    let mut frames = vec![frame.clone()];
    for t in 1..4 {
        // brighten only the top-left region
        frames.push(ImageBuffer::from_fn(56, 56, 3, |y, x, c| {
            let v = frame.get(y, x, c);
            if y < 28 && x < 28 {
                (v + 0.2 * t as f64).min(1.0)
            } else {
                v
            }
        })?);
    }
    let seq = FrameSequence::evenly_spaced(frames, 1.0)?;
    let mask = compute_prune_mask(&seq, &cfg)?;
    for f in frame_stats(&mask, seq.timestamps())? {
        println!(
            "frame {} t={} kept={} dropped={}",
            f.frame, f.timestamp, f.kept, f.dropped
        );
    }
    Ok(())
}
