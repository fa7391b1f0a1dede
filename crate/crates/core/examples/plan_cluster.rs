//! Size Spark executors for each catalog instance on a 10-node cluster.
//!
//! cargo run --example plan_cluster -- [INSTANCE] [NODES]

use dnsflow::planner::{plan_executors, Catalog};

fn main() -> dnsflow::Result<()> {
    let mut args = std::env::args().skip(1);
    let catalog = Catalog::builtin();
    let nodes: u32 = 10;

    if let Some(name) = args.next() {
        let nodes = args.next().map_or(nodes, |n| n.parse().expect("NODES"));
        let plan = plan_executors(catalog.lookup(&name)?, nodes);
        println!("{name} x {nodes}: {plan}");
        print!("{}", plan.spark_properties());
        return Ok(());
    }

    for instance in catalog.instances() {
        let plan = plan_executors(instance, nodes);
        println!(
            "{:<11} {:>2} vCPU {:>3} GiB -> {plan}",
            instance.name, instance.vcpus, instance.ram_gib
        );
    }
    Ok(())
}
