//! Price measured runs on three cluster shapes and rank them by cost.
//!
//! cargo run --example compare_costs -- [CATALOG_CSV]

use std::path::Path;

use rust_decimal::Decimal;

use dnsflow::planner::{compare_scenarios, comparison_csv, estimate_cost, Catalog, Scenario};

fn main() -> dnsflow::Result<()> {
    let catalog = match std::env::args().nth(1) {
        Some(path) => Catalog::load(Path::new(&path))?,
        None => Catalog::builtin(),
    };
    // 1 master + 10 core nodes each, with measured runtimes in minutes
    let scenarios = [
        Scenario::new("m5.xlarge", 10, Decimal::from(40)),
        Scenario::new("m5.2xlarge", 10, Decimal::from(22)),
        Scenario::new("r5.4xlarge", 10, Decimal::from(13)),
    ];
    let rows = compare_scenarios(&catalog, &scenarios)?;
    print!("{}", comparison_csv(&rows));

    let one_off = estimate_cost(11, Decimal::new(480, 4), Decimal::from(40));
    println!(
        "\n11 nodes x $0.048/h x 40 min = ${}",
        one_off.total_cost_usd
    );
    Ok(())
}
