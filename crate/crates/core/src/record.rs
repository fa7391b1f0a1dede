//! DNS query log records and the canonical tab-separated line format.
//!
//! A log line carries six fields:
//!
//! ```text
//! <timestamp_ms>\t<server_id>\t<client_ip>\t<query_name>\t<query_type>\t<response_code>
//! ```
//!
//! Parsing is total: every byte string yields either a [`DnsQueryRecord`] or a
//! [`RejectReason`] naming the first failing field, left to right.

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::net::Ipv4Addr;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

pub const MAX_DOMAIN_LEN: usize = 253;
pub const MAX_RESPONSE_CODE: u16 = 4095;
const FIELD_COUNT: usize = 6;

/// One of the three resolvers that produce query logs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ServerId {
    Dns1,
    Dns2,
    Dns3,
}

impl ServerId {
    pub const ALL: [ServerId; 3] = [ServerId::Dns1, ServerId::Dns2, ServerId::Dns3];

    pub fn as_str(self) -> &'static str {
        match self {
            ServerId::Dns1 => "dns1",
            ServerId::Dns2 => "dns2",
            ServerId::Dns3 => "dns3",
        }
    }

    /// 1-based numeric code, as stored in columnar segments.
    pub fn code(self) -> u32 {
        match self {
            ServerId::Dns1 => 1,
            ServerId::Dns2 => 2,
            ServerId::Dns3 => 3,
        }
    }

    pub fn from_code(code: u32) -> Option<Self> {
        match code {
            1 => Some(ServerId::Dns1),
            2 => Some(ServerId::Dns2),
            3 => Some(ServerId::Dns3),
            _ => None,
        }
    }

    fn from_bytes(raw: &[u8]) -> Option<Self> {
        match raw {
            b"dns1" => Some(ServerId::Dns1),
            b"dns2" => Some(ServerId::Dns2),
            b"dns3" => Some(ServerId::Dns3),
            _ => None,
        }
    }
}

impl fmt::Display for ServerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ServerId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ServerId::from_bytes(s.as_bytes()).ok_or_else(|| format!("unknown server id `{s}`"))
    }
}

/// Query record type. Any well-formed uppercase token outside the named set
/// is folded into `Other`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum QueryType {
    A,
    Aaaa,
    Cname,
    Mx,
    Txt,
    Ns,
    Ptr,
    Other,
}

impl QueryType {
    pub const ALL: [QueryType; 8] = [
        QueryType::A,
        QueryType::Aaaa,
        QueryType::Cname,
        QueryType::Mx,
        QueryType::Txt,
        QueryType::Ns,
        QueryType::Ptr,
        QueryType::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            QueryType::A => "A",
            QueryType::Aaaa => "AAAA",
            QueryType::Cname => "CNAME",
            QueryType::Mx => "MX",
            QueryType::Txt => "TXT",
            QueryType::Ns => "NS",
            QueryType::Ptr => "PTR",
            QueryType::Other => "OTHER",
        }
    }

    pub fn code(self) -> u32 {
        self as u32
    }

    pub fn from_code(code: u32) -> Option<Self> {
        QueryType::ALL.get(code as usize).copied()
    }

    fn from_bytes(raw: &[u8]) -> Option<Self> {
        let ty = match raw {
            b"A" => QueryType::A,
            b"AAAA" => QueryType::Aaaa,
            b"CNAME" => QueryType::Cname,
            b"MX" => QueryType::Mx,
            b"TXT" => QueryType::Txt,
            b"NS" => QueryType::Ns,
            b"PTR" => QueryType::Ptr,
            _ if !raw.is_empty()
                && raw.len() <= 16
                && raw[0].is_ascii_uppercase()
                && raw
                    .iter()
                    .all(|b| b.is_ascii_uppercase() || b.is_ascii_digit()) =>
            {
                QueryType::Other
            }
            _ => return None,
        };
        Some(ty)
    }
}

impl fmt::Display for QueryType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A single parsed resolver log entry.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct DnsQueryRecord {
    /// Milliseconds since the Unix epoch.
    pub timestamp_ms: u64,
    pub server: ServerId,
    pub client_ip: Ipv4Addr,
    /// Lowercase ASCII domain.
    pub query_name: String,
    pub query_type: QueryType,
    pub response_code: u16,
}

impl DnsQueryRecord {
    /// Renders the canonical log line, without the trailing newline.
    pub fn to_line(&self) -> String {
        format!(
            "{}\t{}\t{}\t{}\t{}\t{}",
            self.timestamp_ms,
            self.server,
            self.client_ip,
            self.query_name,
            self.query_type,
            self.response_code
        )
    }
}

/// Why a line was rejected by [`parse_line`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RejectReason {
    WrongFieldCount,
    BadTimestamp,
    BadIp,
    BadServer,
    /// Missing or unusable domain: empty, too long, non-ASCII or containing whitespace.
    EmptyDomain,
    BadType,
    BadRcode,
}

impl RejectReason {
    pub const ALL: [RejectReason; 7] = [
        RejectReason::WrongFieldCount,
        RejectReason::BadTimestamp,
        RejectReason::BadIp,
        RejectReason::BadServer,
        RejectReason::EmptyDomain,
        RejectReason::BadType,
        RejectReason::BadRcode,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RejectReason::WrongFieldCount => "wrong_field_count",
            RejectReason::BadTimestamp => "bad_timestamp",
            RejectReason::BadIp => "bad_ip",
            RejectReason::BadServer => "bad_server",
            RejectReason::EmptyDomain => "empty_domain",
            RejectReason::BadType => "bad_type",
            RejectReason::BadRcode => "bad_rcode",
        }
    }
}

pub type ParseOutcome = Result<DnsQueryRecord, RejectReason>;

/// Parses one canonical log line (no trailing newline).
///
/// Fields are validated in line order, so the returned reason always names the
/// leftmost bad field. The domain is lowercased.
pub fn parse_line(line: &[u8]) -> ParseOutcome {
    let mut fields = [&[][..]; FIELD_COUNT];
    let mut count = 0;
    for field in line.split(|&b| b == b'\t') {
        if count == FIELD_COUNT {
            return Err(RejectReason::WrongFieldCount);
        }
        fields[count] = field;
        count += 1;
    }
    if count != FIELD_COUNT {
        return Err(RejectReason::WrongFieldCount);
    }
    let [ts, server, ip, name, qtype, rcode] = fields;

    let timestamp_ms = parse_decimal(ts)
        .filter(|&t| t > 0)
        .ok_or(RejectReason::BadTimestamp)?;
    let server = ServerId::from_bytes(server).ok_or(RejectReason::BadServer)?;
    let client_ip = std::str::from_utf8(ip)
        .ok()
        .and_then(|s| s.parse::<Ipv4Addr>().ok())
        .ok_or(RejectReason::BadIp)?;
    let query_name = parse_domain(name).ok_or(RejectReason::EmptyDomain)?;
    let query_type = QueryType::from_bytes(qtype).ok_or(RejectReason::BadType)?;
    let response_code = parse_decimal(rcode)
        .filter(|&c| c <= u64::from(MAX_RESPONSE_CODE))
        .ok_or(RejectReason::BadRcode)? as u16;

    Ok(DnsQueryRecord {
        timestamp_ms,
        server,
        client_ip,
        query_name,
        query_type,
        response_code,
    })
}

fn parse_decimal(raw: &[u8]) -> Option<u64> {
    if raw.is_empty() || raw.len() > 20 {
        return None;
    }
    raw.iter().try_fold(0u64, |acc, &b| {
        if !b.is_ascii_digit() {
            return None;
        }
        acc.checked_mul(10)?.checked_add(u64::from(b - b'0'))
    })
}

fn parse_domain(raw: &[u8]) -> Option<String> {
    if raw.is_empty() || raw.len() > MAX_DOMAIN_LEN || !raw.iter().all(|b| b.is_ascii_graphic()) {
        return None;
    }
    let lowered: Vec<u8> = raw.iter().map(u8::to_ascii_lowercase).collect();
    // ascii_graphic bytes are valid UTF-8
    String::from_utf8(lowered).ok()
}

/// Per-reason reject counters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RejectStats {
    counts: [u64; 7],
}

impl RejectStats {
    pub fn record(&mut self, reason: RejectReason) {
        self.counts[reason as usize] += 1;
    }

    pub fn count(&self, reason: RejectReason) -> u64 {
        self.counts[reason as usize]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn merge(&mut self, other: &RejectStats) {
        for (mine, theirs) in self.counts.iter_mut().zip(other.counts.iter()) {
            *mine += theirs;
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (RejectReason, u64)> + '_ {
        RejectReason::ALL.iter().map(|&r| (r, self.count(r)))
    }
}

/// Parses a buffer of LF-separated lines. Empty lines are skipped and not
/// counted; every other line is either accepted or counted as a reject.
pub fn parse_lines(buf: &[u8], records: &mut Vec<DnsQueryRecord>, stats: &mut RejectStats) {
    for line in buf.split(|&b| b == b'\n') {
        if line.is_empty() {
            continue;
        }
        match parse_line(line) {
            Ok(rec) => records.push(rec),
            Err(reason) => stats.record(reason),
        }
    }
}

/// Reads and parses a whole log file.
pub fn parse_file(path: &Path) -> Result<(Vec<DnsQueryRecord>, RejectStats), Error> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = BufReader::new(file);
    let mut records = Vec::new();
    let mut stats = RejectStats::default();
    let mut line = Vec::with_capacity(128);
    loop {
        line.clear();
        let n = reader
            .read_until(b'\n', &mut line)
            .map_err(|e| Error::io(path, e))?;
        if n == 0 {
            break;
        }
        parse_lines(&line, &mut records, &mut stats);
    }
    Ok((records, stats))
}
