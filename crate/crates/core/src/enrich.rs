//! Subscriber join and domain categorization.
//!
//! DNS records are joined to subscribers through CDR assignments (client IP
//! leased to a subscriber over a half-open time window), then decorated with
//! CRM demographics and a category from a suffix rule table. The join is a
//! left join: every input record produces exactly one output record.

use std::collections::{HashMap, HashSet};
use std::net::Ipv4Addr;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::record::DnsQueryRecord;

pub const UNCATEGORIZED: &str = "Uncategorized";

/// The six category labels used by default rule tables.
pub const DEFAULT_CATEGORIES: [&str; 6] = [
    "Technology/Internet",
    "News/Media",
    "Social",
    "Video/Streaming",
    "Shopping",
    "Other",
];

/// A CDR row: `client_ip` belonged to `subscriber_id` during `[start_ms, end_ms)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubscriberAssignment {
    pub subscriber_id: u64,
    #[serde(rename = "ip")]
    pub client_ip: Ipv4Addr,
    pub start_ms: u64,
    pub end_ms: u64,
}

#[derive(Debug, Clone, Copy)]
struct Lease {
    start_ms: u64,
    end_ms: u64,
    subscriber_id: u64,
}

/// Per-IP sorted interval lists for point-in-time lookups.
#[derive(Debug, Default)]
pub struct AssignmentIndex {
    by_ip: HashMap<Ipv4Addr, Vec<Lease>>,
}

impl AssignmentIndex {
    /// Builds the index, rejecting empty intervals and overlaps on one IP.
    pub fn build(assignments: &[SubscriberAssignment]) -> Result<Self> {
        let mut by_ip: HashMap<Ipv4Addr, Vec<Lease>> = HashMap::new();
        for a in assignments {
            if a.start_ms >= a.end_ms {
                return Err(Error::InvalidInterval {
                    subscriber_id: a.subscriber_id,
                    ip: a.client_ip,
                    start_ms: a.start_ms,
                    end_ms: a.end_ms,
                });
            }
            by_ip.entry(a.client_ip).or_default().push(Lease {
                start_ms: a.start_ms,
                end_ms: a.end_ms,
                subscriber_id: a.subscriber_id,
            });
        }
        for (ip, leases) in by_ip.iter_mut() {
            leases.sort_by_key(|l| (l.start_ms, l.end_ms));
            if let Some(w) = leases.windows(2).find(|w| w[1].start_ms < w[0].end_ms) {
                return Err(Error::OverlappingIntervals {
                    ip: *ip,
                    a: (w[0].start_ms, w[0].end_ms),
                    b: (w[1].start_ms, w[1].end_ms),
                });
            }
        }
        Ok(AssignmentIndex { by_ip })
    }

    pub fn lookup(&self, ip: Ipv4Addr, timestamp_ms: u64) -> Option<u64> {
        let leases = self.by_ip.get(&ip)?;
        let after = leases.partition_point(|l| l.start_ms <= timestamp_ms);
        let lease = leases[..after].last()?;
        (timestamp_ms < lease.end_ms).then_some(lease.subscriber_id)
    }

    pub fn len(&self) -> usize {
        self.by_ip.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.by_ip.is_empty()
    }
}

/// CRM demographics for one subscriber.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SubscriberProfile {
    pub subscriber_id: u64,
    pub city: Arc<str>,
    pub region_code: Arc<str>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ProfileRow {
    subscriber_id: u64,
    city: String,
    region_code: String,
}

/// Subscriber profiles keyed by id.
#[derive(Debug, Default)]
pub struct CrmTable {
    profiles: HashMap<u64, SubscriberProfile>,
}

impl CrmTable {
    pub fn new(profiles: impl IntoIterator<Item = SubscriberProfile>) -> Result<Self> {
        let mut map = HashMap::new();
        // intern so repeated cities share one allocation
        let mut strings: HashSet<Arc<str>> = HashSet::new();
        let mut intern = |s: Arc<str>| -> Arc<str> {
            if let Some(existing) = strings.get(&s) {
                return existing.clone();
            }
            strings.insert(s.clone());
            s
        };
        for p in profiles {
            let id = p.subscriber_id;
            let p = SubscriberProfile {
                subscriber_id: id,
                city: intern(p.city),
                region_code: intern(p.region_code),
            };
            if map.insert(id, p).is_some() {
                return Err(Error::DuplicateSubscriber(id));
            }
        }
        Ok(CrmTable { profiles: map })
    }

    pub fn get(&self, subscriber_id: u64) -> Option<&SubscriberProfile> {
        self.profiles.get(&subscriber_id)
    }

    pub fn len(&self) -> usize {
        self.profiles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.profiles.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryRule {
    pub suffix: String,
    pub category: String,
}

/// Suffix → category table with label-boundary longest-suffix matching.
#[derive(Debug)]
pub struct CategoryRules {
    by_suffix: HashMap<String, Arc<str>>,
    uncategorized: Arc<str>,
}

impl Default for CategoryRules {
    fn default() -> Self {
        CategoryRules {
            by_suffix: HashMap::new(),
            uncategorized: Arc::from(UNCATEGORIZED),
        }
    }
}

impl CategoryRules {
    /// Suffixes are lowercased; empty suffixes, leading or trailing dots and
    /// embedded whitespace are rejected, as are repeated suffixes.
    pub fn new(rules: impl IntoIterator<Item = CategoryRule>) -> Result<Self> {
        let mut table = CategoryRules::default();
        let mut categories: HashMap<String, Arc<str>> = HashMap::new();
        for rule in rules {
            let suffix = rule.suffix.to_ascii_lowercase();
            if suffix.is_empty()
                || suffix.starts_with('.')
                || suffix.ends_with('.')
                || suffix.bytes().any(|b| !b.is_ascii_graphic())
            {
                return Err(Error::InvalidRule(rule.suffix));
            }
            let category = categories
                .entry(rule.category.clone())
                .or_insert_with(|| Arc::from(rule.category.as_str()))
                .clone();
            if table.by_suffix.insert(suffix.clone(), category).is_some() {
                return Err(Error::DuplicateRule(suffix));
            }
        }
        Ok(table)
    }

    /// Category of the longest rule suffix that matches `query_name` on a
    /// label boundary, or `Uncategorized`.
    pub fn categorize(&self, query_name: &str) -> &Arc<str> {
        let mut candidate = query_name;
        loop {
            if let Some(cat) = self.by_suffix.get(candidate) {
                return cat;
            }
            match candidate.find('.') {
                Some(dot) => candidate = &candidate[dot + 1..],
                None => return &self.uncategorized,
            }
        }
    }

    pub fn len(&self) -> usize {
        self.by_suffix.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_suffix.is_empty()
    }
}

/// A DNS record after the subscriber join.
///
/// `subscriber` is present only when both the CDR lookup and the CRM lookup
/// succeed, so identity and demographics are always present together.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct EnrichedRecord {
    pub record: DnsQueryRecord,
    pub subscriber: Option<SubscriberProfile>,
    pub category: Arc<str>,
}

impl EnrichedRecord {
    pub fn subscriber_id(&self) -> Option<u64> {
        self.subscriber.as_ref().map(|s| s.subscriber_id)
    }

    pub fn region_code(&self) -> Option<&str> {
        self.subscriber.as_ref().map(|s| &*s.region_code)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct JoinStats {
    pub joined: u64,
    /// No CDR lease covered the record's (ip, timestamp).
    pub unassigned: u64,
    /// A lease matched but the CRM table had no profile for it.
    pub missing_profile: u64,
}

impl JoinStats {
    pub fn total(&self) -> u64 {
        self.joined + self.unassigned + self.missing_profile
    }

    pub fn merge(&mut self, other: &JoinStats) {
        self.joined += other.joined;
        self.unassigned += other.unassigned;
        self.missing_profile += other.missing_profile;
    }
}

/// Immutable join inputs, shareable across worker threads.
#[derive(Debug, Default)]
pub struct JoinTables {
    pub assignments: AssignmentIndex,
    pub crm: CrmTable,
    pub rules: CategoryRules,
}

impl JoinTables {
    pub fn load(cdr: &Path, crm: &Path, rules: &Path) -> Result<Self> {
        Ok(JoinTables {
            assignments: AssignmentIndex::build(&load_assignments(cdr)?)?,
            crm: load_profiles(crm)?,
            rules: load_rules(rules)?,
        })
    }

    pub fn enrich_one(&self, record: DnsQueryRecord, stats: &mut JoinStats) -> EnrichedRecord {
        join_one(record, &self.assignments, &self.crm, &self.rules, stats)
    }

    /// Left join over a batch, preserving order and length.
    pub fn enrich(&self, records: Vec<DnsQueryRecord>) -> (Vec<EnrichedRecord>, JoinStats) {
        let mut stats = JoinStats::default();
        let out = records
            .into_iter()
            .map(|r| self.enrich_one(r, &mut stats))
            .collect();
        (out, stats)
    }
}

/// Left-joins `records` against the CDR index, CRM table and category rules.
pub fn enrich(
    records: Vec<DnsQueryRecord>,
    index: &AssignmentIndex,
    crm: &CrmTable,
    rules: &CategoryRules,
) -> (Vec<EnrichedRecord>, JoinStats) {
    let mut stats = JoinStats::default();
    let out = records
        .into_iter()
        .map(|r| join_one(r, index, crm, rules, &mut stats))
        .collect();
    (out, stats)
}

fn join_one(
    record: DnsQueryRecord,
    index: &AssignmentIndex,
    crm: &CrmTable,
    rules: &CategoryRules,
    stats: &mut JoinStats,
) -> EnrichedRecord {
    let subscriber = match index.lookup(record.client_ip, record.timestamp_ms) {
        None => {
            stats.unassigned += 1;
            None
        }
        Some(id) => {
            let found = crm.get(id).cloned();
            if found.is_some() {
                stats.joined += 1;
            } else {
                stats.missing_profile += 1;
            }
            found
        }
    };
    let category = rules.categorize(&record.query_name).clone();
    EnrichedRecord {
        record,
        subscriber,
        category,
    }
}

fn read_csv<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::csv(path, e))?;
    reader
        .deserialize()
        .collect::<Result<Vec<T>, _>>()
        .map_err(|e| Error::csv(path, e))
}

fn write_csv<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut writer = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(|e| Error::csv(path, e))?;
    for row in rows {
        writer.serialize(row).map_err(|e| Error::csv(path, e))?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}

/// Reads a CDR file with header `subscriber_id,ip,start_ms,end_ms`.
pub fn load_assignments(path: &Path) -> Result<Vec<SubscriberAssignment>> {
    read_csv(path)
}

pub fn write_assignments(path: &Path, rows: &[SubscriberAssignment]) -> Result<()> {
    write_csv(path, rows)
}

/// Reads a CRM file with header `subscriber_id,city,region_code`.
pub fn load_profiles(path: &Path) -> Result<CrmTable> {
    let rows: Vec<ProfileRow> = read_csv(path)?;
    CrmTable::new(rows.into_iter().map(|r| SubscriberProfile {
        subscriber_id: r.subscriber_id,
        city: Arc::from(r.city),
        region_code: Arc::from(r.region_code),
    }))
}

pub fn write_profiles(path: &Path, rows: &[SubscriberProfile]) -> Result<()> {
    write_csv(
        path,
        rows.iter().map(|p| ProfileRow {
            subscriber_id: p.subscriber_id,
            city: p.city.to_string(),
            region_code: p.region_code.to_string(),
        }),
    )
}

/// Reads a rules file with header `suffix,category`.
pub fn load_rules(path: &Path) -> Result<CategoryRules> {
    CategoryRules::new(read_csv::<CategoryRule>(path)?)
}

pub fn write_rules(path: &Path, rules: &[CategoryRule]) -> Result<()> {
    write_csv(path, rules)
}
