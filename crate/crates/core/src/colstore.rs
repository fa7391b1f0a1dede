//! Partitioned, dictionary-encoded columnar segments.
//!
//! Layout (little-endian):
//!
//! ```text
//! "TNDC" 0x01                      magic + version
//! u64 record_count
//! u32 column_count
//! column_count × { u16 name_len, name, u8 encoding, u64 offset, u64 length }
//! payloads, back to back, in directory order
//! ```
//!
//! Offsets are absolute file positions. Payloads are contiguous: the first
//! starts right after the directory, each next one where the previous ended,
//! and the last ends at end of file. The reader enforces that, together with
//! the fixed column schema, so any damage to the header or directory surfaces
//! as an error instead of a silently different decode.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::io;
use std::net::Ipv4Addr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::{DateTime, NaiveDate, Timelike};

use crate::enrich::{EnrichedRecord, SubscriberProfile};
use crate::record::{DnsQueryRecord, QueryType, ServerId, MAX_RESPONSE_CODE};

pub const MAGIC: &[u8; 4] = b"TNDC";
pub const VERSION: u8 = 0x01;
pub const SEGMENT_EXTENSION: &str = "tnc";
const HEADER_LEN: usize = 4 + 1 + 8 + 4;

#[derive(Debug, thiserror::Error)]
pub enum SegmentError {
    #[error("bad magic bytes")]
    BadMagic,
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u8),
    #[error("corrupt column directory: {0}")]
    CorruptDirectory(String),
    #[error("column `{column}` does not hold {expected} values")]
    CountMismatch { column: &'static str, expected: u64 },
    #[error("corrupt payload in column `{column}`: {detail}")]
    CorruptPayload {
        column: &'static str,
        detail: String,
    },
    #[error("records from partitions {0} and {1} in one segment")]
    MixedPartition(PartitionKey, PartitionKey),
    #[error("refusing to write an empty segment")]
    EmptySegment,
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Encoding {
    U64Fixed = 1,
    U32Fixed = 2,
    DictString = 3,
    OptionalU64 = 4,
}

impl Encoding {
    fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            1 => Some(Encoding::U64Fixed),
            2 => Some(Encoding::U32Fixed),
            3 => Some(Encoding::DictString),
            4 => Some(Encoding::OptionalU64),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Encoding::U64Fixed => "u64-fixed",
            Encoding::U32Fixed => "u32-fixed",
            Encoding::DictString => "dict-string",
            Encoding::OptionalU64 => "optional-u64",
        }
    }
}

/// Column order and encodings of every segment.
pub const SCHEMA: [(&str, Encoding); 10] = [
    ("timestamp_ms", Encoding::U64Fixed),
    ("server_id", Encoding::U32Fixed),
    ("client_ip", Encoding::U32Fixed),
    ("query_name", Encoding::DictString),
    ("query_type", Encoding::U32Fixed),
    ("response_code", Encoding::U32Fixed),
    ("subscriber_id", Encoding::OptionalU64),
    ("city", Encoding::DictString),
    ("region_code", Encoding::DictString),
    ("category", Encoding::DictString),
];

/// The (date, hour, server) slice a record belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PartitionKey {
    pub date: NaiveDate,
    pub hour: u8,
    pub server: ServerId,
}

impl PartitionKey {
    /// UTC date and hour of `timestamp_ms`.
    pub fn of(timestamp_ms: u64, server: ServerId) -> Self {
        let ts = DateTime::from_timestamp_millis(timestamp_ms.min(i64::MAX as u64) as i64)
            .unwrap_or(DateTime::<chrono::Utc>::MAX_UTC);
        PartitionKey {
            date: ts.date_naive(),
            hour: ts.hour() as u8,
            server,
        }
    }

    pub fn of_record(rec: &DnsQueryRecord) -> Self {
        PartitionKey::of(rec.timestamp_ms, rec.server)
    }

    /// `date=YYYY-MM-DD/hour=HH/server=dnsN`
    pub fn dir(&self) -> PathBuf {
        PathBuf::from(format!("date={}", self.date.format("%Y-%m-%d")))
            .join(format!("hour={:02}", self.hour))
            .join(format!("server={}", self.server))
    }

    /// Inverse of [`PartitionKey::dir`] over the three directory names.
    pub fn from_dir_names(date: &str, hour: &str, server: &str) -> Option<Self> {
        let date = NaiveDate::parse_from_str(date.strip_prefix("date=")?, "%Y-%m-%d").ok()?;
        let hour_raw = hour.strip_prefix("hour=")?;
        if hour_raw.len() != 2 {
            return None;
        }
        let hour: u8 = hour_raw.parse().ok().filter(|h| *h < 24)?;
        let server = server.strip_prefix("server=")?.parse().ok()?;
        Some(PartitionKey { date, hour, server })
    }
}

impl fmt::Display for PartitionKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {:02}h {}",
            self.date.format("%Y-%m-%d"),
            self.hour,
            self.server
        )
    }
}

/// Relative path of segment `part_index` inside a partition.
pub fn partition_path(key: &PartitionKey, part_index: u32) -> PathBuf {
    key.dir()
        .join(format!("part-{part_index:05}.{SEGMENT_EXTENSION}"))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnInfo {
    pub name: String,
    pub encoding: Encoding,
    pub offset: u64,
    pub length: u64,
}

/// Header and directory of one segment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegmentMeta {
    pub record_count: u64,
    pub columns: Vec<ColumnInfo>,
    pub file_len: u64,
}

impl SegmentMeta {
    pub fn column(&self, name: &str) -> Option<&ColumnInfo> {
        self.columns.iter().find(|c| c.name == name)
    }
}

#[derive(Default)]
struct DictBuilder<'a> {
    index: HashMap<&'a str, u32>,
    values: Vec<&'a str>,
    ids: Vec<u32>,
}

impl<'a> DictBuilder<'a> {
    fn push(&mut self, value: &'a str) {
        let next = self.values.len() as u32;
        let id = *self.index.entry(value).or_insert_with(|| {
            self.values.push(value);
            next
        });
        self.ids.push(id);
    }

    fn encode(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&(self.values.len() as u32).to_le_bytes());
        for v in &self.values {
            out.extend_from_slice(&(v.len() as u32).to_le_bytes());
            out.extend_from_slice(v.as_bytes());
        }
        for id in &self.ids {
            out.extend_from_slice(&id.to_le_bytes());
        }
    }
}

fn encode_dict<'a>(values: impl Iterator<Item = &'a str>) -> Vec<u8> {
    let mut dict = DictBuilder::default();
    for v in values {
        dict.push(v);
    }
    let mut out = Vec::new();
    dict.encode(&mut out);
    out
}

fn encode_u32(values: impl Iterator<Item = u32>) -> Vec<u8> {
    values.flat_map(u32::to_le_bytes).collect()
}

/// Serializes records that share one partition into segment bytes.
pub fn encode_segment(records: &[EnrichedRecord]) -> Result<(Vec<u8>, SegmentMeta), SegmentError> {
    let first = records.first().ok_or(SegmentError::EmptySegment)?;
    let key = PartitionKey::of_record(&first.record);
    if let Some(other) = records
        .iter()
        .map(|r| PartitionKey::of_record(&r.record))
        .find(|k| *k != key)
    {
        return Err(SegmentError::MixedPartition(key, other));
    }

    let n = records.len();
    let mut payloads: Vec<Vec<u8>> = Vec::with_capacity(SCHEMA.len());
    payloads.push(
        records
            .iter()
            .flat_map(|r| r.record.timestamp_ms.to_le_bytes())
            .collect(),
    );
    payloads.push(encode_u32(records.iter().map(|r| r.record.server.code())));
    payloads.push(encode_u32(
        records.iter().map(|r| u32::from(r.record.client_ip)),
    ));
    payloads.push(encode_dict(
        records.iter().map(|r| r.record.query_name.as_str()),
    ));
    payloads.push(encode_u32(
        records.iter().map(|r| r.record.query_type.code()),
    ));
    payloads.push(encode_u32(
        records.iter().map(|r| u32::from(r.record.response_code)),
    ));
    let mut subs = Vec::with_capacity(n * 9);
    subs.extend(records.iter().map(|r| u8::from(r.subscriber.is_some())));
    for s in records.iter().filter_map(|r| r.subscriber.as_ref()) {
        subs.extend_from_slice(&s.subscriber_id.to_le_bytes());
    }
    payloads.push(subs);
    payloads.push(encode_dict(
        records
            .iter()
            .map(|r| r.subscriber.as_ref().map_or("", |s| &*s.city)),
    ));
    payloads.push(encode_dict(
        records
            .iter()
            .map(|r| r.subscriber.as_ref().map_or("", |s| &*s.region_code)),
    ));
    payloads.push(encode_dict(records.iter().map(|r| &*r.category)));

    let dir_len: usize = SCHEMA
        .iter()
        .map(|(name, _)| 2 + name.len() + 1 + 8 + 8)
        .sum();
    let mut offset = (HEADER_LEN + dir_len) as u64;
    let mut columns = Vec::with_capacity(SCHEMA.len());
    for ((name, encoding), payload) in SCHEMA.iter().zip(&payloads) {
        columns.push(ColumnInfo {
            name: name.to_string(),
            encoding: *encoding,
            offset,
            length: payload.len() as u64,
        });
        offset += payload.len() as u64;
    }

    let mut out = Vec::with_capacity(offset as usize);
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.extend_from_slice(&(n as u64).to_le_bytes());
    out.extend_from_slice(&(SCHEMA.len() as u32).to_le_bytes());
    for col in &columns {
        out.extend_from_slice(&(col.name.len() as u16).to_le_bytes());
        out.extend_from_slice(col.name.as_bytes());
        out.push(col.encoding as u8);
        out.extend_from_slice(&col.offset.to_le_bytes());
        out.extend_from_slice(&col.length.to_le_bytes());
    }
    for p in &payloads {
        out.extend_from_slice(p);
    }
    debug_assert_eq!(out.len() as u64, offset);

    let meta = SegmentMeta {
        record_count: n as u64,
        columns,
        file_len: offset,
    };
    Ok((out, meta))
}

/// Writes one segment file, creating parent directories as needed.
pub fn write_segment(records: &[EnrichedRecord], path: &Path) -> Result<SegmentMeta, SegmentError> {
    let (bytes, meta) = encode_segment(records)?;
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, bytes)?;
    Ok(meta)
}

pub fn read_segment(path: &Path) -> Result<Vec<EnrichedRecord>, SegmentError> {
    decode_segment(&fs::read(path)?)
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let end = self.pos.checked_add(n)?;
        let out = self.buf.get(self.pos..end)?;
        self.pos = end;
        Some(out)
    }

    fn u8(&mut self) -> Option<u8> {
        self.take(1).map(|b| b[0])
    }

    fn u16(&mut self) -> Option<u16> {
        self.take(2)
            .map(|b| u16::from_le_bytes(b.try_into().unwrap()))
    }

    fn u32(&mut self) -> Option<u32> {
        self.take(4)
            .map(|b| u32::from_le_bytes(b.try_into().unwrap()))
    }

    fn u64(&mut self) -> Option<u64> {
        self.take(8)
            .map(|b| u64::from_le_bytes(b.try_into().unwrap()))
    }
}

fn corrupt(msg: impl Into<String>) -> SegmentError {
    SegmentError::CorruptDirectory(msg.into())
}

/// Parses and validates the header and column directory.
pub fn decode_meta(bytes: &[u8]) -> Result<SegmentMeta, SegmentError> {
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return Err(SegmentError::BadMagic);
    }
    let mut cur = Cursor {
        buf: bytes,
        pos: MAGIC.len(),
    };
    let version = cur.u8().ok_or_else(|| corrupt("truncated header"))?;
    if version != VERSION {
        return Err(SegmentError::UnsupportedVersion(version));
    }
    let record_count = cur.u64().ok_or_else(|| corrupt("truncated header"))?;
    let column_count = cur.u32().ok_or_else(|| corrupt("truncated header"))?;
    if column_count as usize != SCHEMA.len() {
        return Err(corrupt(format!(
            "expected {} columns, found {column_count}",
            SCHEMA.len()
        )));
    }

    let mut raw = Vec::with_capacity(SCHEMA.len());
    for (i, (want_name, want_enc)) in SCHEMA.iter().enumerate() {
        let truncated = || corrupt(format!("directory entry {i} truncated"));
        let name_len = cur.u16().ok_or_else(truncated)? as usize;
        let name = cur.take(name_len).ok_or_else(truncated)?;
        let tag = cur.u8().ok_or_else(truncated)?;
        let offset = cur.u64().ok_or_else(truncated)?;
        let length = cur.u64().ok_or_else(truncated)?;
        if name != want_name.as_bytes() {
            return Err(corrupt(format!(
                "entry {i}: expected column `{want_name}`, found `{}`",
                String::from_utf8_lossy(name)
            )));
        }
        let encoding = Encoding::from_tag(tag)
            .filter(|e| e == want_enc)
            .ok_or_else(|| corrupt(format!("column `{want_name}`: bad encoding tag {tag}")))?;
        raw.push(ColumnInfo {
            name: want_name.to_string(),
            encoding,
            offset,
            length,
        });
    }

    let mut expected = cur.pos as u64;
    for col in &raw {
        if col.offset != expected {
            return Err(corrupt(format!(
                "column `{}` starts at {} but previous data ends at {expected}",
                col.name, col.offset
            )));
        }
        expected = col
            .offset
            .checked_add(col.length)
            .filter(|end| *end <= bytes.len() as u64)
            .ok_or_else(|| {
                corrupt(format!(
                    "column `{}` extends past end of file ({} bytes)",
                    col.name,
                    bytes.len()
                ))
            })?;
    }
    if expected != bytes.len() as u64 {
        return Err(corrupt(format!(
            "{} trailing bytes after last column",
            bytes.len() as u64 - expected
        )));
    }

    Ok(SegmentMeta {
        record_count,
        columns: raw,
        file_len: bytes.len() as u64,
    })
}

fn fixed<'a, const W: usize>(
    payload: &'a [u8],
    count: usize,
    column: &'static str,
) -> Result<impl Iterator<Item = [u8; W]> + 'a, SegmentError> {
    if count.checked_mul(W) != Some(payload.len()) {
        return Err(SegmentError::CountMismatch {
            column,
            expected: count as u64,
        });
    }
    Ok(payload
        .chunks_exact(W)
        .map(|c| <[u8; W]>::try_from(c).unwrap()))
}

fn decode_u32(
    payload: &[u8],
    count: usize,
    column: &'static str,
) -> Result<Vec<u32>, SegmentError> {
    Ok(fixed::<4>(payload, count, column)?
        .map(u32::from_le_bytes)
        .collect())
}

fn decode_dict(
    payload: &[u8],
    count: usize,
    column: &'static str,
) -> Result<(Vec<Arc<str>>, Vec<u32>), SegmentError> {
    let bad = |detail: &str| SegmentError::CorruptPayload {
        column,
        detail: detail.to_string(),
    };
    let mut cur = Cursor {
        buf: payload,
        pos: 0,
    };
    let size = cur.u32().ok_or_else(|| bad("missing dictionary size"))? as usize;
    if size > payload.len() / 4 {
        return Err(bad("dictionary size exceeds payload"));
    }
    let mut dict = Vec::with_capacity(size);
    for _ in 0..size {
        let len = cur.u32().ok_or_else(|| bad("truncated dictionary"))? as usize;
        let raw = cur.take(len).ok_or_else(|| bad("truncated dictionary"))?;
        let s = std::str::from_utf8(raw).map_err(|_| bad("dictionary entry is not UTF-8"))?;
        dict.push(Arc::<str>::from(s));
    }
    let ids = decode_u32(&payload[cur.pos..], count, column)?;
    if ids.iter().any(|&id| id as usize >= dict.len()) {
        return Err(bad("index out of dictionary range"));
    }
    Ok((dict, ids))
}

fn decode_optional_u64(
    payload: &[u8],
    count: usize,
    column: &'static str,
) -> Result<Vec<Option<u64>>, SegmentError> {
    let mismatch = || SegmentError::CountMismatch {
        column,
        expected: count as u64,
    };
    let presence = payload.get(..count).ok_or_else(mismatch)?;
    if presence.iter().any(|&p| p > 1) {
        return Err(SegmentError::CorruptPayload {
            column,
            detail: "presence byte is neither 0 nor 1".into(),
        });
    }
    let present = presence.iter().filter(|&&p| p == 1).count();
    let mut values = fixed::<8>(&payload[count..], present, column)
        .map_err(|_| mismatch())?
        .map(u64::from_le_bytes);
    Ok(presence
        .iter()
        .map(|&p| if p == 1 { values.next() } else { None })
        .collect())
}

/// Decodes segment bytes back into records, in write order.
pub fn decode_segment(bytes: &[u8]) -> Result<Vec<EnrichedRecord>, SegmentError> {
    let meta = decode_meta(bytes)?;
    let n = usize::try_from(meta.record_count).map_err(|_| corrupt("record count overflow"))?;
    // every column stores at least one byte per record
    if n > bytes.len() {
        return Err(SegmentError::CountMismatch {
            column: SCHEMA[0].0,
            expected: meta.record_count,
        });
    }
    let payload = |i: usize| {
        let c = &meta.columns[i];
        &bytes[c.offset as usize..(c.offset + c.length) as usize]
    };
    let name = |i: usize| SCHEMA[i].0;

    let timestamps: Vec<u64> = fixed::<8>(payload(0), n, name(0))?
        .map(u64::from_le_bytes)
        .collect();
    let servers = decode_u32(payload(1), n, name(1))?;
    let ips = decode_u32(payload(2), n, name(2))?;
    let (names, name_ids) = decode_dict(payload(3), n, name(3))?;
    let types = decode_u32(payload(4), n, name(4))?;
    let rcodes = decode_u32(payload(5), n, name(5))?;
    let subscribers = decode_optional_u64(payload(6), n, name(6))?;
    let (cities, city_ids) = decode_dict(payload(7), n, name(7))?;
    let (regions, region_ids) = decode_dict(payload(8), n, name(8))?;
    let (categories, category_ids) = decode_dict(payload(9), n, name(9))?;

    let bad =
        |column: &'static str, detail: String| SegmentError::CorruptPayload { column, detail };
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let server = ServerId::from_code(servers[i])
            .ok_or_else(|| bad(name(1), format!("unknown server code {}", servers[i])))?;
        let query_type = QueryType::from_code(types[i])
            .ok_or_else(|| bad(name(4), format!("unknown query type code {}", types[i])))?;
        let response_code = u16::try_from(rcodes[i])
            .ok()
            .filter(|c| *c <= MAX_RESPONSE_CODE)
            .ok_or_else(|| bad(name(5), format!("response code {} out of range", rcodes[i])))?;
        let city = &cities[city_ids[i] as usize];
        let region = &regions[region_ids[i] as usize];
        let subscriber = match subscribers[i] {
            Some(id) => Some(SubscriberProfile {
                subscriber_id: id,
                city: city.clone(),
                region_code: region.clone(),
            }),
            None if city.is_empty() && region.is_empty() => None,
            None => {
                return Err(bad(
                    name(7),
                    "demographics present without a subscriber".into(),
                ))
            }
        };
        out.push(EnrichedRecord {
            record: DnsQueryRecord {
                timestamp_ms: timestamps[i],
                server,
                client_ip: Ipv4Addr::from(ips[i]),
                query_name: names[name_ids[i] as usize].to_string(),
                query_type,
                response_code,
            },
            subscriber,
            category: categories[category_ids[i] as usize].clone(),
        });
    }
    Ok(out)
}
