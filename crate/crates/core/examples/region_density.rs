//! Queries and unique subscribers per day and region, written as CSV.
//!
//! cargo run --release --example region_density -- [OUT_CSV]

use std::path::PathBuf;

use dnsflow::aggregates::{emit_plot_data, Dataset, RegionDensityRow};
use dnsflow::datagen::{default_spec, generate};
use dnsflow::engine::{run_pipeline, PipelineConfig};

fn main() -> dnsflow::Result<()> {
    let out = PathBuf::from(
        std::env::args()
            .nth(1)
            .unwrap_or_else(|| "target/region_density.csv".into()),
    );
    let mut spec = default_spec();
    spec.subscriber_count = 2_000;
    spec.days = 2;
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
    let range = dataset.date_span().expect("dataset has partitions");
    let report = dataset.region_density(range)?;
    let mut rows: Vec<&RegionDensityRow> = report.rows.iter().collect();
    rows.sort_by(|a, b| (a.date, b.query_count).cmp(&(b.date, a.query_count)));
    for r in rows {
        println!(
            "{} {:>3} queries={:>7} users={:>5}",
            r.date, r.region, r.query_count, r.unique_subscribers
        );
    }

    emit_plot_data(&report.rows, &out)?;
    println!("wrote {}", out.display());
    Ok(())
}
