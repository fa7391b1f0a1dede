//! Generate a dataset, then parse, sanitize, enrich and partition it.
//!
//! cargo run --release --example run_pipeline -- [SUBSCRIBERS] [DAYS] [WORKERS]

use std::time::Instant;

use dnsflow::datagen::{default_spec, generate};
use dnsflow::engine::{run_pipeline, PipelineConfig};

fn main() -> dnsflow::Result<()> {
    let mut args = std::env::args().skip(1);
    let mut spec = default_spec();
    spec.subscriber_count = args.next().map_or(500, |s| s.parse().expect("SUBSCRIBERS"));
    spec.days = args.next().map_or(2, |s| s.parse().expect("DAYS"));
    let workers: usize = args.next().map_or(4, |s| s.parse().expect("WORKERS"));

    let tmp = tempfile::tempdir().expect("temp dir");
    let data = generate(&spec, &tmp.path().join("raw"))?;
    let config = PipelineConfig::new(
        data.logs.clone(),
        &data.cdr,
        &data.crm,
        &data.rules,
        tmp.path().join("dataset"),
    )
    .with_workers(workers);

    let started = Instant::now();
    let report = run_pipeline(&config)?;
    print!("{}", report.to_text());
    println!("elapsed_ms: {}", started.elapsed().as_millis());

    assert!(report.is_balanced());
    assert_eq!(
        report.sanitize.duplicates_removed,
        data.manifest.planted_duplicates
    );
    assert_eq!(
        report.sanitize.null_incomplete_removed,
        data.manifest.planted_placeholders
    );
    Ok(())
}
