//! Generate a synthetic week of resolver logs plus CDR, CRM and rule tables.
//!
//! cargo run --release --example generate_dataset -- [OUT_DIR] [SUBSCRIBERS] [DAYS]

use std::path::PathBuf;

use dnsflow::datagen::{default_spec, generate};

fn main() -> dnsflow::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = PathBuf::from(args.next().unwrap_or_else(|| "target/demo-data".into()));
    let mut spec = default_spec();
    if let Some(n) = args.next() {
        spec.subscriber_count = n.parse().expect("SUBSCRIBERS must be a number");
    }
    if let Some(d) = args.next() {
        spec.days = d.parse().expect("DAYS must be a number");
    }

    let dataset = generate(&spec, &out)?;
    let m = &dataset.manifest;
    println!(
        "wrote {} log files under {}",
        dataset.logs.len(),
        out.display()
    );
    println!("lines:        {}", m.total_lines);
    println!("duplicates:   {}", m.planted_duplicates);
    println!("placeholders: {}", m.planted_placeholders);
    println!("joinable:     {}", m.joinable_queries);
    println!("unjoinable:   {}", m.unjoinable_queries);
    println!("manifest:     {}", dataset.manifest_path.display());
    Ok(())
}
