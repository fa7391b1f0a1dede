//! Unique-user and traffic aggregations over enriched records.
//!
//! Three reports are produced:
//!
//! * hourly unique active subscribers per server,
//! * unique subscribers per URL category per hour,
//! * query volume and unique subscribers per region per day.
//!
//! Counting is exact (one hash set per key). A row exists for every key that
//! has at least one record; records without a subscriber add to query
//! volume but never to unique counts. Dataset-backed variants read each
//! partition on the rayon pool and merge partial sets by union.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::colstore::{read_segment, PartitionKey, SEGMENT_EXTENSION};
use crate::enrich::EnrichedRecord;
use crate::error::{Error, Result};
use crate::record::ServerId;

/// Region label for records that did not join to a subscriber.
pub const UNJOINED_REGION: &str = "??";

#[derive(Debug, Clone, Default)]
struct KeyStats {
    queries: u64,
    subscribers: HashSet<u64>,
}

/// Per-key query counts and distinct subscriber sets.
#[derive(Debug, Clone)]
pub struct DistinctCounter<K> {
    keys: BTreeMap<K, KeyStats>,
}

impl<K: Ord> Default for DistinctCounter<K> {
    fn default() -> Self {
        DistinctCounter {
            keys: BTreeMap::new(),
        }
    }
}

impl<K: Ord> DistinctCounter<K> {
    pub fn add(&mut self, key: K, subscriber: Option<u64>) {
        let stats = self.keys.entry(key).or_default();
        stats.queries += 1;
        if let Some(id) = subscriber {
            stats.subscribers.insert(id);
        }
    }

    pub fn merge(mut self, other: Self) -> Self {
        for (key, theirs) in other.keys {
            let mine = self.keys.entry(key).or_default();
            mine.queries += theirs.queries;
            if mine.subscribers.len() < theirs.subscribers.len() {
                let small = std::mem::replace(&mut mine.subscribers, theirs.subscribers);
                mine.subscribers.extend(small);
            } else {
                mine.subscribers.extend(theirs.subscribers);
            }
        }
        self
    }

    /// `(key, query_count, unique_subscribers)` in key order.
    pub fn into_counts(self) -> impl Iterator<Item = (K, u64, u64)> {
        self.keys
            .into_iter()
            .map(|(k, s)| (k, s.queries, s.subscribers.len() as u64))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct HourlyUsersRow {
    pub date: NaiveDate,
    pub hour: u8,
    pub server: ServerId,
    pub unique_subscribers: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CategoryTrafficRow {
    pub date: NaiveDate,
    pub hour: u8,
    pub category: String,
    pub unique_subscribers: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RegionDensityRow {
    pub date: NaiveDate,
    pub region: String,
    pub query_count: u64,
    pub unique_subscribers: u64,
}

type HourlyKey = (NaiveDate, u8, ServerId);
type CategoryKey = (NaiveDate, u8, String);
type RegionKey = (NaiveDate, String);

fn hourly_key(r: &EnrichedRecord) -> HourlyKey {
    let k = PartitionKey::of_record(&r.record);
    (k.date, k.hour, k.server)
}

fn category_key(r: &EnrichedRecord) -> CategoryKey {
    let k = PartitionKey::of_record(&r.record);
    (k.date, k.hour, r.category.to_string())
}

fn region_key(r: &EnrichedRecord) -> RegionKey {
    let k = PartitionKey::of_record(&r.record);
    let region = r.region_code().unwrap_or(UNJOINED_REGION);
    (k.date, region.to_string())
}

fn count<'a, K: Ord>(
    records: impl IntoIterator<Item = &'a EnrichedRecord>,
    key: impl Fn(&EnrichedRecord) -> K,
) -> DistinctCounter<K> {
    let mut counter = DistinctCounter::default();
    for r in records {
        counter.add(key(r), r.subscriber_id());
    }
    counter
}

fn hourly_rows(counter: DistinctCounter<HourlyKey>) -> Vec<HourlyUsersRow> {
    counter
        .into_counts()
        .map(|((date, hour, server), _, unique)| HourlyUsersRow {
            date,
            hour,
            server,
            unique_subscribers: unique,
        })
        .collect()
}

fn category_rows(counter: DistinctCounter<CategoryKey>) -> Vec<CategoryTrafficRow> {
    counter
        .into_counts()
        .map(|((date, hour, category), _, unique)| CategoryTrafficRow {
            date,
            hour,
            category,
            unique_subscribers: unique,
        })
        .collect()
}

fn region_rows(counter: DistinctCounter<RegionKey>) -> Vec<RegionDensityRow> {
    counter
        .into_counts()
        .map(|((date, region), queries, unique)| RegionDensityRow {
            date,
            region,
            query_count: queries,
            unique_subscribers: unique,
        })
        .collect()
}

/// Distinct subscribers per (date, hour, server).
pub fn unique_users_hourly_from<'a>(
    records: impl IntoIterator<Item = &'a EnrichedRecord>,
) -> Vec<HourlyUsersRow> {
    hourly_rows(count(records, hourly_key))
}

/// Distinct subscribers per (date, hour, category).
pub fn category_traffic_from<'a>(
    records: impl IntoIterator<Item = &'a EnrichedRecord>,
) -> Vec<CategoryTrafficRow> {
    category_rows(count(records, category_key))
}

/// Query volume and distinct subscribers per (date, region); unjoined records
/// land under [`UNJOINED_REGION`].
pub fn region_density_from<'a>(
    records: impl IntoIterator<Item = &'a EnrichedRecord>,
) -> Vec<RegionDensityRow> {
    region_rows(count(records, region_key))
}

/// Inclusive date range.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DateRange {
    pub from: NaiveDate,
    pub to: NaiveDate,
}

impl DateRange {
    pub fn new(from: NaiveDate, to: NaiveDate) -> Self {
        DateRange { from, to }
    }

    pub fn day(date: NaiveDate) -> Self {
        DateRange {
            from: date,
            to: date,
        }
    }

    pub fn contains(&self, date: NaiveDate) -> bool {
        self.from <= date && date <= self.to
    }

    pub fn days(&self) -> impl Iterator<Item = NaiveDate> + '_ {
        self.from.iter_days().take_while(move |d| *d <= self.to)
    }
}

/// A report plus the partitions of the requested range that were absent.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Report<R> {
    pub rows: Vec<R>,
    pub missing_partitions: Vec<PartitionKey>,
}

type PartitionRef<'a> = (&'a PartitionKey, &'a [PathBuf]);

/// Index of the segment files under a dataset root.
#[derive(Debug, Clone)]
pub struct Dataset {
    root: PathBuf,
    partitions: BTreeMap<PartitionKey, Vec<PathBuf>>,
}

fn sorted_dir(path: &Path) -> Result<Vec<(String, PathBuf)>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(path).map_err(|e| Error::io(path, e))? {
        let entry = entry.map_err(|e| Error::io(path, e))?;
        out.push((
            entry.file_name().to_string_lossy().into_owned(),
            entry.path(),
        ));
    }
    out.sort();
    Ok(out)
}

impl Dataset {
    /// Scans `date=*/hour=*/server=*/*.tnc` under `root`. Other entries are
    /// ignored.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        let mut partitions = BTreeMap::new();
        for (date, date_path) in sorted_dir(&root)? {
            if !date.starts_with("date=") || !date_path.is_dir() {
                continue;
            }
            for (hour, hour_path) in sorted_dir(&date_path)? {
                if !hour_path.is_dir() {
                    continue;
                }
                for (server, server_path) in sorted_dir(&hour_path)? {
                    let Some(key) = PartitionKey::from_dir_names(&date, &hour, &server) else {
                        continue;
                    };
                    if !server_path.is_dir() {
                        continue;
                    }
                    let segments: Vec<PathBuf> = sorted_dir(&server_path)?
                        .into_iter()
                        .map(|(_, p)| p)
                        .filter(|p| p.extension().is_some_and(|e| e == SEGMENT_EXTENSION))
                        .collect();
                    if !segments.is_empty() {
                        partitions.insert(key, segments);
                    }
                }
            }
        }
        Ok(Dataset { root, partitions })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn partitions(&self) -> impl Iterator<Item = (&PartitionKey, &[PathBuf])> {
        self.partitions.iter().map(|(k, v)| (k, v.as_slice()))
    }

    /// First and last date with data.
    pub fn date_span(&self) -> Option<DateRange> {
        let first = self.partitions.keys().next()?.date;
        let last = self.partitions.keys().next_back()?.date;
        Some(DateRange::new(first, last))
    }

    fn select(&self, range: DateRange) -> Result<(Vec<PartitionRef<'_>>, Vec<PartitionKey>)> {
        let present: Vec<_> = self
            .partitions()
            .filter(|(k, _)| range.contains(k.date))
            .collect();
        if present.is_empty() {
            return Err(Error::NoPartitions);
        }
        let mut missing = Vec::new();
        for date in range.days() {
            for hour in 0..24 {
                for server in ServerId::ALL {
                    let key = PartitionKey { date, hour, server };
                    if !self.partitions.contains_key(&key) {
                        missing.push(key);
                    }
                }
            }
        }
        Ok((present, missing))
    }

    /// Reads every segment of one partition.
    pub fn read_partition(&self, key: &PartitionKey) -> Result<Vec<EnrichedRecord>> {
        let mut out = Vec::new();
        for path in self.partitions.get(key).into_iter().flatten() {
            out.extend(read_segment(path).map_err(|e| Error::segment(path, e))?);
        }
        Ok(out)
    }

    fn fold<K, F>(
        &self,
        range: DateRange,
        key: F,
    ) -> Result<(DistinctCounter<K>, Vec<PartitionKey>)>
    where
        K: Ord + Send,
        F: Fn(&EnrichedRecord) -> K + Sync,
    {
        let (present, missing) = self.select(range)?;
        let counter = present
            .par_iter()
            .map(|(k, _)| Ok(count(&self.read_partition(k)?, &key)))
            .try_reduce(DistinctCounter::default, |a, b| Ok(a.merge(b)))?;
        Ok((counter, missing))
    }

    pub fn unique_users_hourly(&self, range: DateRange) -> Result<Report<HourlyUsersRow>> {
        let (counter, missing) = self.fold(range, hourly_key)?;
        Ok(Report {
            rows: hourly_rows(counter),
            missing_partitions: missing,
        })
    }

    pub fn category_traffic(&self, range: DateRange) -> Result<Report<CategoryTrafficRow>> {
        let (counter, missing) = self.fold(range, category_key)?;
        Ok(Report {
            rows: category_rows(counter),
            missing_partitions: missing,
        })
    }

    pub fn region_density(&self, range: DateRange) -> Result<Report<RegionDensityRow>> {
        let (counter, missing) = self.fold(range, region_key)?;
        Ok(Report {
            rows: region_rows(counter),
            missing_partitions: missing,
        })
    }
}

/// Writes rows as CSV with a header line and LF endings.
pub fn emit_plot_data<R: Serialize>(rows: &[R], path: &Path) -> Result<()> {
    fs::write(path, to_csv(rows)?).map_err(|e| Error::io(path, e))
}

pub fn to_csv<R: Serialize>(rows: &[R]) -> Result<String> {
    let mut writer = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    for row in rows {
        writer
            .serialize(row)
            .map_err(|e| Error::csv("<memory>", e))?;
    }
    let bytes = writer
        .into_inner()
        .map_err(|e| Error::io("<memory>", e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

/// Reads rows written by [`emit_plot_data`].
pub fn read_plot_data<R: DeserializeOwned>(path: &Path) -> Result<Vec<R>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
    reader
        .deserialize()
        .collect::<Result<Vec<R>, _>>()
        .map_err(|e| Error::csv(path, e))
}
