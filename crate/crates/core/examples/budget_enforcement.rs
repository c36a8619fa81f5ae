//! Whole-frame subsampling when a clip overflows the vision budget.

use vidtok::geometry::TokenBudget;
use vidtok::video::{select_frames_for_budget, uniform_indices, SamplingPolicy};
use vidtok::Error;

fn main() -> vidtok::Result<()> {
    let budget = TokenBudget::default();
    let policy = SamplingPolicy::default();

    let frames = vec![1000; 20];
    let picked = select_frames_for_budget(&frames, 0, &budget, &policy)?;
    println!("20 x 1000 tokens under 10240: keep frames {picked:?}");

    println!(
        "uniform 180 of 200 starts {:?}",
        &uniform_indices(200, 180)[..8]
    );

    match select_frames_for_budget(&[20000], 0, &budget, &policy) {
        Err(e @ Error::UnsatisfiableBudget { .. }) => println!("single 20000-token frame: {e}"),
        other => println!("unexpected: {other:?}"),
    }
    Ok(())
}
