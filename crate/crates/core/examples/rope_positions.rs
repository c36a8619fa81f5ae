//! 2D rotary position embedding over a patch grid.

use vidtok::rope2d::{position_indices, PositionIndex, Rope2d, RopeConfig};

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn main() -> vidtok::Result<()> {
    let rope = Rope2d::new(RopeConfig::with_head_dim(8)?);
    let positions = position_indices(2, 3);
    println!(
        "positions of a 2x3 grid: {:?}",
        positions
            .iter()
            .flatten()
            .map(|p| (p.row, p.col))
            .collect::<Vec<_>>()
    );

    let q = [1.0, 0.5, -0.25, 0.0, 0.3, -0.7, 0.2, 0.9];
    let k = [0.2, -0.1, 0.6, 0.4, -0.5, 0.1, 0.8, -0.3];
    for p in [
        PositionIndex::new(0, 0),
        PositionIndex::new(1, 2),
        PositionIndex::new(5, 7),
    ] {
        let r = rope.rotate(&q, p)?;
        println!(
            "q at ({}, {}) -> {:?}",
            p.row,
            p.col,
            r.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>()
        );
    }

    // The score depends only on the offset between the two positions.
    for shift in [0, 3, 10] {
        let a = rope.rotate(&q, PositionIndex::new(2 + shift, 1 + shift))?;
        let b = rope.rotate(&k, PositionIndex::new(shift, 4 + shift))?;
        println!("offset (2,-3), shift {shift}: q.k = {:.12}", dot(&a, &b));
    }
    Ok(())
}
