//! Balanced label clustering from label features, compared with a random
//! partition of the same sizes.
//!
//! ```text
//! cargo run --release --example label_clustering
//! ```

use fanin_xmc::clustering::{
    balanced_kmeans, build_label_features, cluster_overlap, meta_targets, random_clustering, LabelClustering,
};
use fanin_xmc::data::{SyntheticConfig, SyntheticTask};

fn main() -> fanin_xmc::Result<()> {
    let task = SyntheticTask::new(SyntheticConfig::new(256, 500, 1.2, 3), 0);
    let data = task.sample(2000, 1);
    let k = 8;
    let balanced = balanced_kmeans(&build_label_features(&data), k, 0)?;
    let random = random_clustering(data.num_labels(), k, 0)?;
    println!("balanced sizes {:?}", balanced.cluster_sizes());
    println!("random sizes   {:?}", random.cluster_sizes());

    // Labels drawn from the same generating topic should mostly share a
    // cluster when the partition follows the data.
    let purity = |c: &LabelClustering| {
        let topics = task.topic_of();
        let same = (0..data.num_labels())
            .flat_map(|a| (a + 1..data.num_labels()).map(move |b| (a, b)))
            .filter(|&(a, b)| topics[a] == topics[b]);
        let (mut together, mut total) = (0usize, 0usize);
        for (a, b) in same {
            total += 1;
            together += (c.cluster_of(a as u32) == c.cluster_of(b as u32)) as usize;
        }
        together as f64 / total.max(1) as f64
    };
    println!("same-topic pairs kept together: balanced {:.3}, random {:.3}", purity(&balanced), purity(&random));
    println!("overlap balanced vs random {:.3}", cluster_overlap(&balanced, &random)?);

    let labels = &data.labels()[0];
    println!("sample 0 labels {labels:?} -> meta labels {:?}", meta_targets(labels, &balanced));
    Ok(())
}
