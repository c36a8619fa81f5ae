//! End to end: sample a synthetic clip, resize, prune, encode, budget, and
//! render the resulting video sequence.

use vidtok::format::{render_video_sequence, RenderItem};
use vidtok::geometry::ImageBuffer;
use vidtok::video::{
    prepare_frames, sample_timestamps, EncoderPlug, SamplingPolicy, VideoTokenizer,
};

fn main() -> vidtok::Result<()> {
    let times = sample_timestamps(6.0, &SamplingPolicy::default())?;
    // A vertical bar that moves during the first half and then stops.
    let frames = times
        .iter()
        .map(|&t| {
            let pos = (t.min(3.0) * 30.0) as usize;
            ImageBuffer::from_fn(120, 160, 3, |_, x, c| {
                if (pos..pos + 20).contains(&x) {
                    0.8
                } else {
                    0.1 * c as f64
                }
            })
        })
        .collect::<vidtok::Result<Vec<_>>>()?;

    let tok = VideoTokenizer::new(EncoderPlug::random_projection(32, 7)?);
    let seq = prepare_frames(
        frames,
        times,
        tok.patch_size,
        tok.merge,
        tok.budget.max_vision_tokens(),
    )?;
    println!("frames resized to {}", seq.resolution());

    let out = tok.tokenize(&seq)?;
    println!(
        "{} vision tokens from {} frames (grid {}x{})",
        out.sequence.vision_count(),
        out.frames.len(),
        out.mask.rows(),
        out.mask.cols()
    );
    let items: Vec<RenderItem> = out
        .sequence
        .frame_runs()
        .iter()
        .map(|r| RenderItem::frame(r.tokens, r.timestamp))
        .collect();
    let rendered = render_video_sequence(&items, Some("Where is the bar at the end?"))?;
    println!("{}", rendered.text);
    Ok(())
}
