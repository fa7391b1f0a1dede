//! Unique subscribers per hour and domain category.
//!
//! cargo run --release --example category_traffic

use std::collections::BTreeMap;

use dnsflow::aggregates::{to_csv, Dataset, DateRange};
use dnsflow::datagen::{default_spec, generate};
use dnsflow::engine::{run_pipeline, PipelineConfig};

fn main() -> dnsflow::Result<()> {
    let mut spec = default_spec();
    spec.subscriber_count = 1_000;
    spec.days = 1;
    let tmp = tempfile::tempdir().expect("temp dir");
    let data = generate(&spec, &tmp.path().join("raw"))?;
    let root = tmp.path().join("dataset");
    run_pipeline(&PipelineConfig::new(
        data.logs,
        &data.cdr,
        &data.crm,
        &data.rules,
        &root,
    ))?;

    let report = Dataset::open(&root)?.category_traffic(DateRange::day(spec.start_date))?;

    let mut peak: BTreeMap<&str, (u8, u64)> = BTreeMap::new();
    for row in &report.rows {
        let best = peak.entry(&row.category).or_default();
        if row.unique_subscribers > best.1 {
            *best = (row.hour, row.unique_subscribers);
        }
    }
    println!("{:<22} {:>9} {:>6}", "category", "peak hour", "users");
    for (category, (hour, users)) in &peak {
        println!("{category:<22} {hour:>9} {users:>6}");
    }

    let csv = to_csv(&report.rows)?;
    println!("\nfirst CSV lines:");
    for line in csv.lines().take(5) {
        println!("{line}");
    }
    Ok(())
}
