//! Removal of null/incomplete and duplicated records.

use std::collections::HashSet;
use std::net::Ipv4Addr;

use crate::record::{DnsQueryRecord, QueryType, ServerId};

/// Domain values that stand for "no domain".
pub const PLACEHOLDER_DOMAINS: [&str; 2] = ["-", "."];

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SanitizeReport {
    pub input_count: u64,
    pub null_incomplete_removed: u64,
    pub duplicates_removed: u64,
    pub output_count: u64,
}

impl SanitizeReport {
    pub const CSV_HEADER: &'static str = "input,null_incomplete,duplicates,output";

    pub fn merge(&mut self, other: &SanitizeReport) {
        self.input_count += other.input_count;
        self.null_incomplete_removed += other.null_incomplete_removed;
        self.duplicates_removed += other.duplicates_removed;
        self.output_count += other.output_count;
    }

    pub fn is_balanced(&self) -> bool {
        self.input_count
            == self.output_count + self.null_incomplete_removed + self.duplicates_removed
    }

    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{}",
            self.input_count,
            self.null_incomplete_removed,
            self.duplicates_removed,
            self.output_count
        )
    }
}

/// True for records that carry no usable query.
pub fn is_null_or_incomplete(rec: &DnsQueryRecord) -> bool {
    rec.timestamp_ms == 0 || PLACEHOLDER_DOMAINS.contains(&rec.query_name.as_str())
}

/// Fields that make two records the same query. The response code is not part
/// of the key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct DuplicateKey<'a> {
    pub timestamp_ms: u64,
    pub server: ServerId,
    pub client_ip: Ipv4Addr,
    pub query_name: &'a str,
    pub query_type: QueryType,
}

impl<'a> DuplicateKey<'a> {
    pub fn of(rec: &'a DnsQueryRecord) -> Self {
        DuplicateKey {
            timestamp_ms: rec.timestamp_ms,
            server: rec.server,
            client_ip: rec.client_ip,
            query_name: &rec.query_name,
            query_type: rec.query_type,
        }
    }
}

/// Drops null/incomplete records and all but the first occurrence of each
/// duplicate key. Survivors keep their relative order.
pub fn sanitize(records: Vec<DnsQueryRecord>) -> (Vec<DnsQueryRecord>, SanitizeReport) {
    let mut report = SanitizeReport {
        input_count: records.len() as u64,
        ..SanitizeReport::default()
    };

    // first pass decides, second pass moves; keys borrow from `records`
    let keep: Vec<bool> = {
        let mut seen = HashSet::with_capacity(records.len());
        records
            .iter()
            .map(|rec| {
                if is_null_or_incomplete(rec) {
                    report.null_incomplete_removed += 1;
                    false
                } else if !seen.insert(DuplicateKey::of(rec)) {
                    report.duplicates_removed += 1;
                    false
                } else {
                    true
                }
            })
            .collect()
    };

    let out: Vec<DnsQueryRecord> = records
        .into_iter()
        .zip(keep)
        .filter_map(|(rec, keep)| keep.then_some(rec))
        .collect();
    report.output_count = out.len() as u64;
    (out, report)
}
