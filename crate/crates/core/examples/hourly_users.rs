//! Unique subscribers per hour and server, the daily usage curve.
//!
//! cargo run --release --example hourly_users

use dnsflow::aggregates::{Dataset, DateRange};
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

    let dataset = Dataset::open(&root)?;
    let report = dataset.unique_users_hourly(DateRange::day(spec.start_date))?;

    // sum the three servers per hour for a compact curve
    let mut per_hour = [0u64; 24];
    for row in &report.rows {
        per_hour[row.hour as usize] += row.unique_subscribers;
    }
    let peak = *per_hour.iter().max().unwrap_or(&1).max(&1);
    for (hour, users) in per_hour.iter().enumerate() {
        let bar = "#".repeat((users * 50 / peak) as usize);
        println!("{hour:02}h {users:>6} {bar}");
    }
    Ok(())
}
