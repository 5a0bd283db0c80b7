//! Writes a synthetic long-tailed dataset in the text format, reads it back
//! and prints the summary statistics row.
//!
//! ```text
//! cargo run --example dataset_stats
//! ```

use fanin_xmc::data::{
    compute_stats, read_xmc_file, stats_csv_row, write_xmc_file, SyntheticConfig, SyntheticTask, STATS_CSV_HEADER,
};

fn main() -> fanin_xmc::Result<()> {
    let task = SyntheticTask::new(SyntheticConfig::new(500, 1000, 1.2, 4), 42);
    let (train, test) = task.split(3000, 1000, 43);
    let dir = std::env::temp_dir().join("fanin-xmc-dataset-stats");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("train.txt");
    write_xmc_file(&train, &path)?;
    let back = read_xmc_file(&path)?;
    assert_eq!(back, train);

    println!("{STATS_CSV_HEADER}");
    println!("{}", stats_csv_row("synthetic", &compute_stats(&back), Some(test.num_instances())));

    let mut counts = back.label_counts();
    counts.sort_unstable_by(|a, b| b.cmp(a));
    let head: u64 = counts[..counts.len() / 10].iter().sum();
    let total: u64 = counts.iter().sum();
    println!("top 10% of labels hold {:.1}% of label occurrences", 100.0 * head as f64 / total as f64);
    println!("labels never seen in training: {}", counts.iter().filter(|&&c| c == 0).count());
    let text = std::fs::read_to_string(&path)?;
    let first: String = text.lines().nth(1).unwrap_or("").chars().take(72).collect();
    println!("first row: {first} ...");
    Ok(())
}
