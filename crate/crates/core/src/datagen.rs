//! Seeded synthetic DNS logs, CDR leases, CRM profiles and category rules.
//!
//! The generator plants known amounts of duplicated and placeholder records
//! and knows which queries it sent from subscriber leases, and writes all of
//! it to a manifest. Downstream stages can then be checked against exact
//! counts rather than estimates.
//!
//! Query volume per hour follows `hourly_weights` (largest-remainder
//! apportionment of the daily total). Subscribers get two leases per day on
//! IPs from a per-day shuffle of the address pool, so the same IP belongs to
//! different subscribers on different days.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::net::Ipv4Addr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::NaiveDate;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::enrich::{
    write_assignments, write_profiles, write_rules, CategoryRule, SubscriberAssignment,
    SubscriberProfile,
};
use crate::error::{Error, Result};
use crate::record::{QueryType, ServerId};

const DAY_MS: u64 = 86_400_000;
const HOUR_MS: u64 = 3_600_000;
const MIX_TOLERANCE: f64 = 1e-9;

pub const MANIFEST_FILE: &str = "manifest.txt";
pub const CDR_FILE: &str = "cdr.csv";
pub const CRM_FILE: &str = "crm.csv";
pub const RULES_FILE: &str = "rules.csv";
pub const LOG_DIR: &str = "logs";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSpec {
    pub seed: u64,
    pub subscriber_count: u32,
    pub days: u32,
    /// First generated UTC day.
    pub start_date: NaiveDate,
    pub base_queries_per_subscriber_day: u32,
    /// Relative query intensity for hours 00..23.
    pub hourly_weights: Vec<f64>,
    pub category_mix: BTreeMap<String, f64>,
    pub region_mix: BTreeMap<String, f64>,
    /// Probability that a query line is immediately repeated verbatim.
    pub duplicate_rate: f64,
    /// Probability that a query carries a placeholder domain.
    pub placeholder_rate: f64,
    /// Share of queries sent from addresses outside every CDR lease.
    pub unjoined_rate: f64,
}

impl Default for GeneratorSpec {
    fn default() -> Self {
        default_spec()
    }
}

/// Defaults: a week from 2019-05-07, quietest at 04-05h, busiest 20-23h,
/// Technology/Internet as the largest category.
pub fn default_spec() -> GeneratorSpec {
    let hourly_weights = vec![
        0.80, 0.62, 0.45, 0.32, 0.22, 0.22, 0.30, 0.45, 0.60, 0.70, 0.75, 0.78, //
        0.80, 0.80, 0.80, 0.82, 0.85, 0.88, 0.92, 0.96, 1.00, 1.00, 1.00, 0.95,
    ];
    let category_mix = [
        ("Technology/Internet", 0.30),
        ("Social", 0.20),
        ("Video/Streaming", 0.18),
        ("News/Media", 0.14),
        ("Shopping", 0.10),
        ("Other", 0.08),
    ];
    let region_mix = [
        ("34", 0.40),
        ("06", 0.18),
        ("35", 0.14),
        ("16", 0.10),
        ("07", 0.09),
        ("01", 0.09),
    ];
    GeneratorSpec {
        seed: 20190507,
        subscriber_count: 5_000,
        days: 7,
        start_date: NaiveDate::from_ymd_opt(2019, 5, 7).expect("valid date"),
        base_queries_per_subscriber_day: 30,
        hourly_weights,
        category_mix: category_mix
            .iter()
            .map(|(k, v)| (k.to_string(), *v))
            .collect(),
        region_mix: region_mix
            .iter()
            .map(|(k, v)| (k.to_string(), *v))
            .collect(),
        duplicate_rate: 0.01,
        placeholder_rate: 0.005,
        unjoined_rate: 0.05,
    }
}

fn check_mix(name: &str, mix: &BTreeMap<String, f64>) -> Result<()> {
    if mix.is_empty() {
        return Err(Error::Config(format!("{name} is empty")));
    }
    if mix.values().any(|p| !p.is_finite() || *p < 0.0) {
        return Err(Error::Config(format!(
            "{name} has a negative or non-finite entry"
        )));
    }
    let sum: f64 = mix.values().sum();
    if (sum - 1.0).abs() > MIX_TOLERANCE {
        return Err(Error::Config(format!("{name} sums to {sum}, not 1")));
    }
    Ok(())
}

impl GeneratorSpec {
    pub fn validate(&self) -> Result<()> {
        if self.hourly_weights.len() != 24 {
            return Err(Error::Config(format!(
                "hourly_weights needs 24 entries, got {}",
                self.hourly_weights.len()
            )));
        }
        if self
            .hourly_weights
            .iter()
            .any(|w| !w.is_finite() || *w < 0.0)
        {
            return Err(Error::Config("hourly_weights must be non-negative".into()));
        }
        if self.hourly_weights.iter().all(|w| *w == 0.0) {
            return Err(Error::Config("hourly_weights are all zero".into()));
        }
        check_mix("category_mix", &self.category_mix)?;
        check_mix("region_mix", &self.region_mix)?;
        for (name, rate) in [
            ("duplicate_rate", self.duplicate_rate),
            ("placeholder_rate", self.placeholder_rate),
            ("unjoined_rate", self.unjoined_rate),
        ] {
            if !(0.0..1.0).contains(&rate) {
                return Err(Error::Config(format!("{name} must be in [0, 1)")));
            }
        }
        if self.subscriber_count == 0 {
            return Err(Error::Config("subscriber_count must be at least 1".into()));
        }
        if self
            .category_mix
            .keys()
            .any(|c| c.is_empty() || c.contains(','))
        {
            return Err(Error::Config(
                "category names must be non-empty and comma-free".into(),
            ));
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: GeneratorSpec =
            toml::from_str(text).map_err(|e| Error::Config(format!("generator spec: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("spec serializes")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        GeneratorSpec::from_toml(&text)
    }

    /// Queries per hour of one day, apportioned by largest remainder so the
    /// day total is exact.
    pub fn hourly_quota(&self) -> [u64; 24] {
        let total =
            u64::from(self.subscriber_count) * u64::from(self.base_queries_per_subscriber_day);
        apportion(total, &self.hourly_weights)
            .try_into()
            .expect("24 weights")
    }
}

/// Splits `total` into integer parts proportional to `weights`; leftover units
/// go to the largest fractional remainders, ties to the lower index.
fn apportion(total: u64, weights: &[f64]) -> Vec<u64> {
    let sum: f64 = weights.iter().sum();
    let exact: Vec<f64> = weights.iter().map(|w| total as f64 * w / sum).collect();
    let mut parts: Vec<u64> = exact.iter().map(|x| x.floor() as u64).collect();
    let assigned: u64 = parts.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &i in order.iter().take(total.saturating_sub(assigned) as usize) {
        parts[i] += 1;
    }
    parts
}

fn city_for_region(code: &str) -> String {
    match code {
        "01" => "Adana",
        "06" => "Ankara",
        "07" => "Antalya",
        "16" => "Bursa",
        "34" => "Istanbul",
        "35" => "Izmir",
        "42" => "Konya",
        "27" => "Gaziantep",
        _ => return format!("City-{code}"),
    }
    .to_string()
}

fn base_domains(category: &str) -> Vec<String> {
    let known: &[&str] = match category {
        "Technology/Internet" => &[
            "google.com",
            "microsoft.com",
            "apple.com",
            "github.com",
            "cloudflare.com",
            "amazonaws.com",
            "mozilla.org",
            "ubuntu.com",
            "stackoverflow.com",
            "akamaized.net",
        ],
        "News/Media" => &[
            "hurriyet.com.tr",
            "sozcu.com.tr",
            "bbc.co.uk",
            "cnn.com",
            "reuters.com",
            "ntv.com.tr",
            "milliyet.com.tr",
            "sabah.com.tr",
        ],
        "Social" => &[
            "facebook.com",
            "instagram.com",
            "twitter.com",
            "whatsapp.net",
            "linkedin.com",
            "reddit.com",
            "tiktok.com",
            "snapchat.com",
        ],
        "Video/Streaming" => &[
            "youtube.com",
            "netflix.com",
            "googlevideo.com",
            "twitch.tv",
            "spotify.com",
            "dailymotion.com",
            "blutv.com",
        ],
        "Shopping" => &[
            "trendyol.com",
            "hepsiburada.com",
            "amazon.com.tr",
            "n11.com",
            "sahibinden.com",
            "gittigidiyor.com",
        ],
        "Other" => &[
            "weather.com",
            "booking.com",
            "wikipedia.org",
            "eksisozluk.com",
            "sahadan.com",
        ],
        _ => &[],
    };
    if !known.is_empty() {
        return known.iter().map(|s| s.to_string()).collect();
    }
    let slug: String = category
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() {
                c.to_ascii_lowercase()
            } else {
                '-'
            }
        })
        .collect();
    (0..6).map(|i| format!("{slug}-{i}.example")).collect()
}

const SUBDOMAINS: [&str; 7] = ["", "www.", "api.", "cdn.", "m.", "static.", "mail."];
const QUERY_TYPE_WEIGHTS: [(QueryType, u32); 8] = [
    (QueryType::A, 60),
    (QueryType::Aaaa, 25),
    (QueryType::Cname, 5),
    (QueryType::Mx, 3),
    (QueryType::Txt, 3),
    (QueryType::Ns, 2),
    (QueryType::Ptr, 1),
    (QueryType::Other, 1),
];
const RCODE_WEIGHTS: [(u16, u32); 3] = [(0, 92), (3, 6), (2, 2)];
const PLACEHOLDERS: [&str; 2] = ["-", "."];

fn subscriber_ip(slot: u32) -> Ipv4Addr {
    Ipv4Addr::from(0x0A00_0001u32 + slot)
}

fn unjoined_ip(slot: u32) -> Ipv4Addr {
    Ipv4Addr::from(0xAC10_0001u32 + slot)
}

/// Ground truth for one generated dataset.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Manifest {
    pub seed: u64,
    pub subscribers: u64,
    pub days: u64,
    pub start_date: String,
    pub total_lines: u64,
    /// Queries before duplication (placeholders included).
    pub original_queries: u64,
    pub planted_duplicates: u64,
    pub planted_placeholders: u64,
    /// Non-placeholder originals sent from a leased address.
    pub joinable_queries: u64,
    /// Non-placeholder originals sent from outside every lease.
    pub unjoinable_queries: u64,
    pub cdr_rows: u64,
    pub crm_rows: u64,
    pub rule_rows: u64,
    /// Intended queries per hour of day, summed over all days.
    pub hourly_intensity: [u64; 24],
    /// Log file path (relative to the output dir) → line count.
    pub files: BTreeMap<String, u64>,
}

impl Manifest {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut kv = |k: &str, v: &dyn std::fmt::Display| {
            let _ = writeln!(out, "{k}: {v}");
        };
        kv("seed", &self.seed);
        kv("subscribers", &self.subscribers);
        kv("days", &self.days);
        kv("start_date", &self.start_date);
        kv("total_lines", &self.total_lines);
        kv("original_queries", &self.original_queries);
        kv("planted_duplicates", &self.planted_duplicates);
        kv("planted_placeholders", &self.planted_placeholders);
        kv("joinable_queries", &self.joinable_queries);
        kv("unjoinable_queries", &self.unjoinable_queries);
        kv("cdr_rows", &self.cdr_rows);
        kv("crm_rows", &self.crm_rows);
        kv("rule_rows", &self.rule_rows);
        for (h, n) in self.hourly_intensity.iter().enumerate() {
            kv(&format!("intensity.hour_{h:02}"), n);
        }
        for (f, n) in &self.files {
            kv(&format!("file.{f}"), n);
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let bad = |line: &str| Error::Config(format!("manifest line `{line}`"));
        let mut m = Manifest::default();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let (key, value) = line.split_once(": ").ok_or_else(|| bad(line))?;
            let num = || value.parse::<u64>().map_err(|_| bad(line));
            match key {
                "seed" => m.seed = num()?,
                "subscribers" => m.subscribers = num()?,
                "days" => m.days = num()?,
                "start_date" => m.start_date = value.to_string(),
                "total_lines" => m.total_lines = num()?,
                "original_queries" => m.original_queries = num()?,
                "planted_duplicates" => m.planted_duplicates = num()?,
                "planted_placeholders" => m.planted_placeholders = num()?,
                "joinable_queries" => m.joinable_queries = num()?,
                "unjoinable_queries" => m.unjoinable_queries = num()?,
                "cdr_rows" => m.cdr_rows = num()?,
                "crm_rows" => m.crm_rows = num()?,
                "rule_rows" => m.rule_rows = num()?,
                _ => {
                    if let Some(h) = key.strip_prefix("intensity.hour_") {
                        let h: usize = h
                            .parse()
                            .ok()
                            .filter(|h| *h < 24)
                            .ok_or_else(|| bad(line))?;
                        m.hourly_intensity[h] = num()?;
                    } else if let Some(f) = key.strip_prefix("file.") {
                        m.files.insert(f.to_string(), num()?);
                    } else {
                        return Err(bad(line));
                    }
                }
            }
        }
        Ok(m)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Manifest::parse(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }
}

/// Paths of everything [`generate`] wrote.
#[derive(Debug, Clone)]
pub struct GeneratedDataset {
    pub root: PathBuf,
    pub manifest: Manifest,
    pub logs: Vec<PathBuf>,
    pub cdr: PathBuf,
    pub crm: PathBuf,
    pub rules: PathBuf,
    pub manifest_path: PathBuf,
}

struct Query {
    timestamp_ms: u64,
    server: ServerId,
    client_ip: Ipv4Addr,
    domain: Arc<str>,
    query_type: QueryType,
    response_code: u16,
    duplicated: bool,
}

/// Writes a full synthetic dataset under `out_dir`.
pub fn generate(spec: &GeneratorSpec, out_dir: &Path) -> Result<GeneratedDataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let log_dir = out_dir.join(LOG_DIR);
    fs::create_dir_all(&log_dir).map_err(|e| Error::io(&log_dir, e))?;

    let n = spec.subscriber_count;

    // regions by exact quota, then shuffled over subscribers
    let regions: Vec<&String> = spec.region_mix.keys().collect();
    let weights: Vec<f64> = spec.region_mix.values().copied().collect();
    let mut region_of: Vec<&String> = apportion(u64::from(n), &weights)
        .iter()
        .zip(&regions)
        .flat_map(|(count, region)| std::iter::repeat_n(*region, *count as usize))
        .collect();
    region_of.shuffle(&mut rng);
    let profiles: Vec<SubscriberProfile> = region_of
        .iter()
        .enumerate()
        .map(|(i, region)| SubscriberProfile {
            subscriber_id: i as u64 + 1,
            city: Arc::from(city_for_region(region)),
            region_code: Arc::from(region.as_str()),
        })
        .collect();

    // domain catalogue and rules
    let categories: Vec<&String> = spec.category_mix.keys().collect();
    let category_dist = WeightedIndex::new(spec.category_mix.values().copied())
        .map_err(|e| Error::Config(format!("category_mix: {e}")))?;
    let mut rules = Vec::new();
    let mut domains_by_category: Vec<Vec<Arc<str>>> = Vec::new();
    for cat in &categories {
        let bases = base_domains(cat);
        let mut names = Vec::new();
        for base in &bases {
            rules.push(CategoryRule {
                suffix: base.clone(),
                category: cat.to_string(),
            });
            for sub in SUBDOMAINS {
                names.push(Arc::<str>::from(format!("{sub}{base}")));
            }
        }
        domains_by_category.push(names);
    }
    let type_dist =
        WeightedIndex::new(QUERY_TYPE_WEIGHTS.iter().map(|(_, w)| *w)).expect("weights");
    let rcode_dist = WeightedIndex::new(RCODE_WEIGHTS.iter().map(|(_, w)| *w)).expect("weights");
    let placeholders: Vec<Arc<str>> = PLACEHOLDERS.iter().map(|p| Arc::from(*p)).collect();

    let quota = spec.hourly_quota();
    let epoch = NaiveDate::from_ymd_opt(1970, 1, 1).expect("epoch");
    let mut manifest = Manifest {
        seed: spec.seed,
        subscribers: u64::from(n),
        days: u64::from(spec.days),
        start_date: spec.start_date.format("%Y-%m-%d").to_string(),
        crm_rows: profiles.len() as u64,
        rule_rows: rules.len() as u64,
        ..Manifest::default()
    };
    let mut assignments = Vec::with_capacity(2 * n as usize * spec.days as usize);
    let mut logs = Vec::new();
    let pool: Vec<u32> = (0..2 * n).collect();
    let unjoined_pool = n.clamp(16, 65_536);

    for day in 0..spec.days {
        let date = spec.start_date + chrono::Days::new(u64::from(day));
        let day_start = (date - epoch).num_days() as u64 * DAY_MS;

        // two leases per subscriber: [day_start, split) and [split, day_end)
        let mut slots = pool.clone();
        slots.shuffle(&mut rng);
        let mut leases = Vec::with_capacity(n as usize);
        for i in 0..n as usize {
            let split = day_start + rng.random_range(HOUR_MS..DAY_MS - HOUR_MS);
            let (a, b) = (subscriber_ip(slots[2 * i]), subscriber_ip(slots[2 * i + 1]));
            let id = i as u64 + 1;
            assignments.push(SubscriberAssignment {
                subscriber_id: id,
                client_ip: a,
                start_ms: day_start,
                end_ms: split,
            });
            assignments.push(SubscriberAssignment {
                subscriber_id: id,
                client_ip: b,
                start_ms: split,
                end_ms: day_start + DAY_MS,
            });
            leases.push((split, a, b));
        }

        let mut per_server: [Vec<Query>; 3] = Default::default();
        let mut seen: HashSet<(u64, ServerId, Ipv4Addr, *const u8, QueryType)> = HashSet::new();
        for (hour, &count) in quota.iter().enumerate() {
            manifest.hourly_intensity[hour] += count;
            let hour_start = day_start + hour as u64 * HOUR_MS;
            for _ in 0..count {
                let server = ServerId::ALL[rng.random_range(0..3)];
                let unjoined = rng.random_bool(spec.unjoined_rate);
                let client_for = |ts: u64, rng: &mut ChaCha8Rng| -> Ipv4Addr {
                    if unjoined {
                        unjoined_ip(rng.random_range(0..unjoined_pool))
                    } else {
                        let (split, a, b) = leases[rng.random_range(0..n as usize)];
                        if ts < split {
                            a
                        } else {
                            b
                        }
                    }
                };
                let placeholder = rng.random_bool(spec.placeholder_rate);
                let domain = if placeholder {
                    placeholders[rng.random_range(0..placeholders.len())].clone()
                } else {
                    let names = &domains_by_category[category_dist.sample(&mut rng)];
                    names[rng.random_range(0..names.len())].clone()
                };
                let query_type = QUERY_TYPE_WEIGHTS[type_dist.sample(&mut rng)].0;
                let response_code = RCODE_WEIGHTS[rcode_dist.sample(&mut rng)].0;

                let mut timestamp_ms = hour_start + rng.random_range(0..HOUR_MS);
                let mut client_ip = client_for(timestamp_ms, &mut rng);
                if !placeholder {
                    // redraw on an accidental key collision so planted duplicates stay exact
                    while !seen.insert((
                        timestamp_ms,
                        server,
                        client_ip,
                        domain.as_ptr(),
                        query_type,
                    )) {
                        timestamp_ms = hour_start + rng.random_range(0..HOUR_MS);
                        client_ip = client_for(timestamp_ms, &mut rng);
                    }
                }
                let duplicated = !placeholder && rng.random_bool(spec.duplicate_rate);

                manifest.original_queries += 1;
                if placeholder {
                    manifest.planted_placeholders += 1;
                } else if unjoined {
                    manifest.unjoinable_queries += 1;
                } else {
                    manifest.joinable_queries += 1;
                }
                if duplicated {
                    manifest.planted_duplicates += 1;
                }
                per_server[server as usize].push(Query {
                    timestamp_ms: timestamp_ms.max(1),
                    server,
                    client_ip,
                    domain,
                    query_type,
                    response_code,
                    duplicated,
                });
            }
        }

        for queries in per_server.iter_mut() {
            if queries.is_empty() {
                continue;
            }
            queries.sort_by_key(|q| q.timestamp_ms);
            let server = queries[0].server;
            let rel = format!("{LOG_DIR}/{server}-{}.log", date.format("%Y-%m-%d"));
            let path = out_dir.join(&rel);
            let lines = write_log(&path, queries)?;
            manifest.total_lines += lines;
            manifest.files.insert(rel, lines);
            logs.push(path);
        }
    }

    manifest.cdr_rows = assignments.len() as u64;
    let cdr = out_dir.join(CDR_FILE);
    write_assignments(&cdr, &assignments)?;
    let crm = out_dir.join(CRM_FILE);
    write_profiles(&crm, &profiles)?;
    let rules_path = out_dir.join(RULES_FILE);
    write_rules(&rules_path, &rules)?;
    let manifest_path = out_dir.join(MANIFEST_FILE);
    fs::write(&manifest_path, manifest.to_text()).map_err(|e| Error::io(&manifest_path, e))?;

    Ok(GeneratedDataset {
        root: out_dir.to_path_buf(),
        manifest,
        logs,
        cdr,
        crm,
        rules: rules_path,
        manifest_path,
    })
}

fn write_log(path: &Path, queries: &[Query]) -> Result<u64> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut lines = 0;
    for q in queries {
        let copies = if q.duplicated { 2 } else { 1 };
        for _ in 0..copies {
            writeln!(
                w,
                "{}\t{}\t{}\t{}\t{}\t{}",
                q.timestamp_ms, q.server, q.client_ip, q.domain, q.query_type, q.response_code
            )
            .map_err(|e| Error::io(path, e))?;
            lines += 1;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(lines)
}
