//! Executor sizing and cluster cost estimation.
//!
//! Sizing reserves one core and 1 GiB per node for the node manager, packs
//! executors of at most five cores into what is left, splits each executor's
//! memory share 90/10 between heap and overhead (floored to whole GiB) and
//! keeps one executor slot for the driver. Dynamic allocation stays off.
//!
//! Money is exact decimal arithmetic rounded half-up to four places.

use std::fmt;
use std::path::Path;

use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_EXECUTOR_CORES: u32 = 5;
pub const COST_DECIMAL_PLACES: u32 = 4;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstanceType {
    pub name: String,
    pub vcpus: u32,
    pub ram_gib: u32,
    #[serde(with = "rust_decimal::serde::str")]
    pub hourly_rate_usd: Decimal,
}

impl InstanceType {
    pub fn new(name: &str, vcpus: u32, ram_gib: u32, hourly_rate_usd: Decimal) -> Self {
        InstanceType {
            name: name.to_string(),
            vcpus,
            ram_gib,
            hourly_rate_usd,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.vcpus == 0 || self.ram_gib == 0 {
            return Err(Error::Config(format!(
                "instance `{}` needs at least 1 vCPU and 1 GiB",
                self.name
            )));
        }
        if self.hourly_rate_usd.is_sign_negative() {
            return Err(Error::Config(format!(
                "instance `{}` has a negative hourly rate",
                self.name
            )));
        }
        Ok(())
    }
}

/// Instance types with hourly rates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Catalog {
    instances: Vec<InstanceType>,
}

impl Catalog {
    pub fn new(instances: Vec<InstanceType>) -> Result<Self> {
        for (i, inst) in instances.iter().enumerate() {
            inst.validate()?;
            if instances[..i].iter().any(|o| o.name == inst.name) {
                return Err(Error::Config(format!(
                    "instance `{}` listed twice",
                    inst.name
                )));
            }
        }
        Ok(Catalog { instances })
    }

    /// m5.xlarge (listed at 2 vCPU), m5.2xlarge and r5.4xlarge. At the
    /// m5.xlarge rate 11 nodes for 40 minutes cost $0.352; r5.4xlarge is
    /// $0.2037/h dearer.
    pub fn builtin() -> Self {
        Catalog {
            instances: vec![
                InstanceType::new("m5.xlarge", 2, 8, Decimal::new(480, 4)),
                InstanceType::new("m5.2xlarge", 8, 32, Decimal::new(960, 4)),
                InstanceType::new("r5.4xlarge", 16, 128, Decimal::new(2517, 4)),
            ],
        }
    }

    pub fn get(&self, name: &str) -> Option<&InstanceType> {
        self.instances.iter().find(|i| i.name == name)
    }

    pub fn lookup(&self, name: &str) -> Result<&InstanceType> {
        self.get(name)
            .ok_or_else(|| Error::UnknownInstance(name.to_string()))
    }

    pub fn instances(&self) -> &[InstanceType] {
        &self.instances
    }

    /// Reads `name,vcpus,ram_gib,hourly_rate_usd`.
    pub fn load(path: &Path) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| Error::csv(path, e))?;
        let rows = reader
            .deserialize()
            .collect::<Result<Vec<InstanceType>, _>>()
            .map_err(|e| Error::csv(path, e))?;
        Catalog::new(rows)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("name,vcpus,ram_gib,hourly_rate_usd\n");
        for i in &self.instances {
            out.push_str(&format!(
                "{},{},{},{}\n",
                i.name, i.vcpus, i.ram_gib, i.hourly_rate_usd
            ));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExecutorPlan {
    pub executor_cores: u32,
    pub executors_per_node: u32,
    pub executor_instances: u32,
    pub executor_memory_gib: u32,
    pub memory_overhead_gib: u32,
    pub parallel_tasks: u32,
    pub dynamic_allocation: bool,
}

impl ExecutorPlan {
    /// Heap plus overhead granted to one executor.
    pub fn memory_budget_gib(&self) -> u32 {
        self.executor_memory_gib + self.memory_overhead_gib
    }

    /// The equivalent Spark properties, one `key=value` per line.
    pub fn spark_properties(&self) -> String {
        format!(
            "spark.dynamicAllocation.enabled={}\n\
             spark.executor.cores={}\n\
             spark.executor.memory={}g\n\
             spark.executor.instances={}\n\
             spark.yarn.executor.memoryOverhead={}g\n",
            self.dynamic_allocation,
            self.executor_cores,
            self.executor_memory_gib,
            self.executor_instances,
            self.memory_overhead_gib
        )
    }
}

impl fmt::Display for ExecutorPlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "cores={} memory={} overhead={} executors_per_node={} instances={} parallel_tasks={} dynamic_allocation={}",
            self.executor_cores,
            self.executor_memory_gib,
            self.memory_overhead_gib,
            self.executors_per_node,
            self.executor_instances,
            self.parallel_tasks,
            self.dynamic_allocation
        )
    }
}

/// Sizes executors for `core_nodes` worker nodes of one instance type.
pub fn plan_executors(instance: &InstanceType, core_nodes: u32) -> ExecutorPlan {
    let usable_cores = instance.vcpus.saturating_sub(1);
    let executor_cores = usable_cores.clamp(1, MAX_EXECUTOR_CORES);
    let executors_per_node = (usable_cores / executor_cores).max(1);
    let budget = instance.ram_gib.saturating_sub(1) / executors_per_node;
    // floor(0.9 * budget) in integers
    let executor_memory_gib = budget * 9 / 10;
    let memory_overhead_gib = budget - executor_memory_gib;
    let executor_instances = (executors_per_node * core_nodes.max(1))
        .saturating_sub(1)
        .max(1);
    let mut plan = ExecutorPlan {
        executor_cores,
        executors_per_node,
        executor_instances,
        executor_memory_gib,
        memory_overhead_gib,
        parallel_tasks: 0,
        dynamic_allocation: false,
    };
    plan.parallel_tasks = parallel_tasks(&plan);
    plan
}

/// Tasks that can run at once: executor cores × executor instances.
pub fn parallel_tasks(plan: &ExecutorPlan) -> u32 {
    plan.executor_cores * plan.executor_instances
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CostEstimate {
    pub node_count: u32,
    pub runtime_minutes: Decimal,
    pub total_cost_usd: Decimal,
}

/// Rounds `numerator / denominator` half-up, for non-negative integers.
fn div_round_half_up(numerator: i128, denominator: i128) -> i128 {
    (2 * numerator + denominator) / (2 * denominator)
}

/// `node_count × hourly_rate × runtime_minutes / 60`, rounded half-up to
/// four decimal places without intermediate rounding.
pub fn estimate_cost(
    node_count: u32,
    hourly_rate_usd: Decimal,
    runtime_minutes: Decimal,
) -> CostEstimate {
    assert!(
        !hourly_rate_usd.is_sign_negative() && !runtime_minutes.is_sign_negative(),
        "cost inputs must be non-negative"
    );
    // exact product: mantissa × 10^-scale
    let product = Decimal::from(node_count) * hourly_rate_usd * runtime_minutes;
    let mantissa = product.mantissa();
    let scale = product.scale();
    // total = mantissa / (60 × 10^scale); want it in units of 10^-4
    let (num, den) = if scale >= COST_DECIMAL_PLACES {
        (mantissa, 60 * 10i128.pow(scale - COST_DECIMAL_PLACES))
    } else {
        (mantissa * 10i128.pow(COST_DECIMAL_PLACES - scale), 60)
    };
    let units = div_round_half_up(num, den);
    CostEstimate {
        node_count,
        runtime_minutes,
        total_cost_usd: Decimal::from_i128_with_scale(units, COST_DECIMAL_PLACES),
    }
}

/// One measured cluster run to compare.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Scenario {
    pub instance: String,
    pub core_nodes: u32,
    pub runtime_minutes: Decimal,
}

impl Scenario {
    pub fn new(instance: &str, core_nodes: u32, runtime_minutes: Decimal) -> Self {
        Scenario {
            instance: instance.to_string(),
            core_nodes,
            runtime_minutes,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComparisonRow {
    pub instance: InstanceType,
    pub core_nodes: u32,
    pub plan: ExecutorPlan,
    pub cost: CostEstimate,
}

/// Plans and prices each scenario on a cluster of one master plus
/// `core_nodes` core nodes of the same type. Rows are sorted by total cost;
/// equal costs keep input order.
pub fn compare_scenarios(catalog: &Catalog, scenarios: &[Scenario]) -> Result<Vec<ComparisonRow>> {
    let mut rows = scenarios
        .iter()
        .map(|s| {
            let instance = catalog.lookup(&s.instance)?.clone();
            if s.core_nodes == 0 {
                return Err(Error::Config("core_nodes must be at least 1".into()));
            }
            let plan = plan_executors(&instance, s.core_nodes);
            let cost = estimate_cost(
                s.core_nodes + 1,
                instance.hourly_rate_usd,
                s.runtime_minutes,
            );
            Ok(ComparisonRow {
                instance,
                core_nodes: s.core_nodes,
                plan,
                cost,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    rows.sort_by_key(|r| r.cost.total_cost_usd);
    Ok(rows)
}

pub const COMPARISON_HEADER: &str = "instance,cluster,vcpus,ram_gib,executor_cores,executor_memory_gib,memory_overhead_gib,executor_instances,parallel_tasks,runtime_minutes,hourly_rate_usd,total_cost_usd";

pub fn comparison_csv(rows: &[ComparisonRow]) -> String {
    let mut out = String::from(COMPARISON_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},1+{},{},{},{},{},{},{},{},{},{},{}\n",
            r.instance.name,
            r.core_nodes,
            r.instance.vcpus,
            r.instance.ram_gib,
            r.plan.executor_cores,
            r.plan.executor_memory_gib,
            r.plan.memory_overhead_gib,
            r.plan.executor_instances,
            r.plan.parallel_tasks,
            r.cost.runtime_minutes,
            r.instance.hourly_rate_usd,
            r.cost.total_cost_usd
        ));
    }
    out
}
