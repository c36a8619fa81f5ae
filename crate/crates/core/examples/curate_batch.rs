//! Aspect, score and cluster filtering over a small synthetic batch.

use vidtok::curation::{cluster_select, CurationPipeline, CurationSample, Stage, StoredScorer};
use vidtok::geometry::Resolution;

fn main() -> vidtok::Result<()> {
    let dims = [
        (480, 640),
        (100, 900),
        (512, 512),
        (720, 1280),
        (900, 200),
        (600, 800),
    ];
    let batch: Vec<CurationSample> = dims
        .iter()
        .enumerate()
        .map(|(i, &(h, w))| {
            let x = i as f64;
            Ok(
                CurationSample::new(format!("img{i}"), Resolution::new(h, w)?)
                    .with_score("aesthetic", 0.3 + 0.1 * x)
                    .with_feature(vec![(x * 1.7).sin(), (x * 0.9).cos()]),
            )
        })
        .collect::<vidtok::Result<_>>()?;

    let stages = vec![
        Stage::Aspect {
            min: 1.0 / 3.0,
            max: 3.0,
        },
        Stage::Score {
            name: "aesthetic".into(),
            threshold: 0.5,
        },
        Stage::Cluster {
            k: 1,
            per_cluster: 2,
        },
    ];
    let part = CurationPipeline::new(stages, 0)
        .with_scorer("aesthetic", StoredScorer("aesthetic".into()))
        .run(batch.clone())?;
    for s in &part.kept {
        println!("kept    {}", s.id);
    }
    for s in &part.removed {
        println!("removed {} ({})", s.id, s.notes.join("; "));
    }

    let features: Vec<Vec<f64>> = batch
        .iter()
        .map(|s| s.feature.clone().unwrap_or_default())
        .collect();
    println!(
        "2 clusters x 1 representative: {:?}",
        cluster_select(&features, 2, 1, 0)?
    );
    Ok(())
}
