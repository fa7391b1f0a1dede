//! Batch analytics over recursive-resolver query logs.
//!
//! Raw logs from three resolvers are parsed, cleaned of null, placeholder and
//! duplicated records, joined with subscriber leases (CDR), demographics (CRM)
//! and domain category rules, then written as dictionary-encoded columnar
//! segments partitioned by date, hour and server. Reports are computed from
//! the segments, and a planner sizes and prices the cluster for such a run.

pub mod aggregates;
pub mod cli;
pub mod colstore;
pub mod datagen;
pub mod engine;
pub mod enrich;
pub mod error;
pub mod planner;
pub mod record;
pub mod sanitize;

pub use aggregates::{Dataset, DateRange, Report};
pub use colstore::{read_segment, write_segment, PartitionKey, SegmentError};
pub use datagen::{generate, GeneratorSpec, Manifest};
pub use engine::{run_pipeline, PipelineConfig, RunReport};
pub use enrich::{EnrichedRecord, JoinTables};
pub use error::{Error, Result};
pub use planner::{estimate_cost, plan_executors, Catalog, ExecutorPlan, InstanceType};
pub use record::{parse_line, DnsQueryRecord, QueryType, ServerId};
pub use sanitize::{sanitize, SanitizeReport};
