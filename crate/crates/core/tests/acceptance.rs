//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails. Positional arguments filter criteria by
//! substring of their name.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs;
use std::hash::{DefaultHasher, Hash, Hasher};
use std::net::Ipv4Addr;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::{Arc, OnceLock};
use std::time::{Duration, Instant};

use chrono::{Days, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rust_decimal::Decimal;

use dnsflow::aggregates::{
    to_csv, CategoryTrafficRow, Dataset, HourlyUsersRow, RegionDensityRow, UNJOINED_REGION,
};
use dnsflow::colstore::{decode_segment, read_segment, write_segment};
use dnsflow::datagen::{default_spec, generate, GeneratedDataset, GeneratorSpec};
use dnsflow::engine::{run_pipeline, PipelineConfig, RunReport};
use dnsflow::enrich::{EnrichedRecord, SubscriberProfile, UNCATEGORIZED};
use dnsflow::planner::{estimate_cost, parallel_tasks, plan_executors, Catalog, ExecutorPlan};
use dnsflow::record::{parse_line, DnsQueryRecord, QueryType, ServerId};

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn tmp() -> tempfile::TempDir {
    tempfile::tempdir().expect("temp dir")
}

fn config(data: &GeneratedDataset, out: &Path) -> PipelineConfig {
    PipelineConfig::new(data.logs.clone(), &data.cdr, &data.crm, &data.rules, out)
}

/// A default-spec dataset (about 10^6 lines) shared by the scale criteria.
struct Large {
    _dir: tempfile::TempDir,
    root: PathBuf,
    data: GeneratedDataset,
}

fn large() -> &'static Large {
    static LARGE: OnceLock<Large> = OnceLock::new();
    LARGE.get_or_init(|| {
        let dir = tmp();
        let data = generate(&default_spec(), &dir.path().join("raw")).expect("generate");
        Large {
            root: dir.path().to_path_buf(),
            _dir: dir,
            data,
        }
    })
}

/// The three reports as CSV plus a digest of every segment file.
fn canonical_outputs(root: &Path) -> ([String; 3], u64) {
    let ds = Dataset::open(root).expect("open dataset");
    let range = ds.date_span().expect("partitions");
    let csvs = [
        to_csv(&ds.unique_users_hourly(range).unwrap().rows).unwrap(),
        to_csv(&ds.category_traffic(range).unwrap().rows).unwrap(),
        to_csv(&ds.region_density(range).unwrap().rows).unwrap(),
    ];
    let mut h = DefaultHasher::new();
    for (_, files) in ds.partitions() {
        for f in files {
            f.strip_prefix(root).unwrap().hash(&mut h);
            fs::read(f).unwrap().hash(&mut h);
        }
    }
    (csvs, h.finish())
}

fn planner_anchor() -> Check {
    let catalog = Catalog::builtin();
    let r5 = catalog.lookup("r5.4xlarge").map_err(|e| e.to_string())?;
    ensure(r5.vcpus == 16 && r5.ram_gib == 128, || {
        format!("catalog r5.4xlarge is {r5:?}")
    })?;
    let started = Instant::now();
    let plan = plan_executors(r5, 10);
    let took = started.elapsed();
    let triple = (
        plan.executor_cores,
        plan.executor_memory_gib,
        plan.memory_overhead_gib,
    );
    ensure(triple == (5, 37, 5), || format!("got {triple:?}"))?;
    ensure(took < Duration::from_millis(1), || format!("took {took:?}"))?;
    Ok(format!(
        "cores={} memory={} overhead={} ({} instances) in {took:?}",
        triple.0, triple.1, triple.2, plan.executor_instances
    ))
}

fn cost_anchor() -> Check {
    let cost = estimate_cost(11, Decimal::from_str("0.048").unwrap(), Decimal::from(40));
    let text = cost.total_cost_usd.to_string();
    ensure(text == "0.3520", || format!("got {text}"))?;
    Ok(format!("11 nodes x 0.048 $/h x 40 min = ${text}"))
}

fn parallel_task_product() -> Check {
    let plan = ExecutorPlan {
        executor_cores: 5,
        executors_per_node: 3,
        executor_instances: 170,
        executor_memory_gib: 37,
        memory_overhead_gib: 5,
        parallel_tasks: 0,
        dynamic_allocation: false,
    };
    let n = parallel_tasks(&plan);
    ensure(n == 850, || format!("got {n}"))?;
    Ok("5 cores x 170 instances = 850".into())
}

fn pipeline_determinism() -> Check {
    let large = large();
    let started = Instant::now();
    let mut reference: Option<([String; 3], u64)> = None;
    let mut runs = 0;
    for chunk in [1_000, 100_000] {
        for workers in [1, 2, 4, 8] {
            let root = large.root.join(format!("det-w{workers}-c{chunk}"));
            let report = run_pipeline(
                &config(&large.data, &root)
                    .with_workers(workers)
                    .with_chunk_records(chunk),
            )
            .map_err(|e| e.to_string())?;
            ensure(report.is_balanced(), || {
                format!("unbalanced report at w={workers} c={chunk}")
            })?;
            let out = canonical_outputs(&root);
            fs::remove_dir_all(&root).ok();
            match &reference {
                None => reference = Some(out),
                Some(r) => ensure(*r == out, || {
                    format!("outputs differ at workers={workers} chunk={chunk}")
                })?,
            }
            runs += 1;
        }
    }
    let took = started.elapsed();
    ensure(took < Duration::from_secs(300), || {
        format!("{runs} runs took {took:?}")
    })?;
    Ok(format!(
        "{runs} runs over {} lines identical, {:.1}s total",
        large.data.manifest.total_lines,
        took.as_secs_f64()
    ))
}

// ---- brute-force oracles ------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
struct Flat {
    ts: u64,
    server: ServerId,
    ip: Ipv4Addr,
    name: String,
    qtype: QueryType,
    rcode: u16,
    subscriber: Option<u64>,
    city: String,
    region: String,
    category: String,
}

fn flatten(r: &EnrichedRecord) -> Flat {
    Flat {
        ts: r.record.timestamp_ms,
        server: r.record.server,
        ip: r.record.client_ip,
        name: r.record.query_name.clone(),
        qtype: r.record.query_type,
        rcode: r.record.response_code,
        subscriber: r.subscriber_id(),
        city: r
            .subscriber
            .as_ref()
            .map_or(String::new(), |p| p.city.to_string()),
        region: r.region_code().unwrap_or("").to_string(),
        category: r.category.to_string(),
    }
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

fn oracle_sanitize(parsed: &[DnsQueryRecord]) -> (Vec<DnsQueryRecord>, u64, u64) {
    let mut kept: Vec<DnsQueryRecord> = Vec::new();
    let (mut null, mut dup) = (0, 0);
    for r in parsed {
        if r.timestamp_ms == 0 || r.query_name == "-" || r.query_name == "." {
            null += 1;
            continue;
        }
        let seen = kept.iter().any(|k| {
            k.timestamp_ms == r.timestamp_ms
                && k.server == r.server
                && k.client_ip == r.client_ip
                && k.query_name == r.query_name
                && k.query_type == r.query_type
        });
        if seen {
            dup += 1;
        } else {
            kept.push(r.clone());
        }
    }
    (kept, null, dup)
}

fn oracle_enrich(kept: &[DnsQueryRecord], cdr: &Path, crm: &Path, rules: &Path) -> Vec<Flat> {
    let leases = csv_rows(cdr);
    let profiles = csv_rows(crm);
    let rules = csv_rows(rules);
    kept.iter()
        .map(|r| {
            let ip = r.client_ip.to_string();
            let sub = leases
                .iter()
                .find(|l| {
                    l[1] == ip
                        && l[2].parse::<u64>().unwrap() <= r.timestamp_ms
                        && r.timestamp_ms < l[3].parse::<u64>().unwrap()
                })
                .map(|l| l[0].clone());
            let profile = sub
                .as_ref()
                .and_then(|id| profiles.iter().find(|p| &p[0] == id));
            let category = rules
                .iter()
                .filter(|rule| {
                    r.query_name == rule[0] || r.query_name.ends_with(&format!(".{}", rule[0]))
                })
                .max_by_key(|rule| rule[0].len())
                .map_or(UNCATEGORIZED.to_string(), |rule| rule[1].clone());
            Flat {
                ts: r.timestamp_ms,
                server: r.server,
                ip: r.client_ip,
                name: r.query_name.clone(),
                qtype: r.query_type,
                rcode: r.response_code,
                subscriber: profile.map(|p| p[0].parse().unwrap()),
                city: profile.map_or(String::new(), |p| p[1].clone()),
                region: profile.map_or(String::new(), |p| p[2].clone()),
                category,
            }
        })
        .collect()
}

fn day_hour(ts: u64) -> (NaiveDate, u8) {
    let epoch = NaiveDate::from_ymd_opt(1970, 1, 1).unwrap();
    (
        epoch + Days::new(ts / 86_400_000),
        (ts % 86_400_000 / 3_600_000) as u8,
    )
}

/// For each distinct key, rescans every record: query count and the set of
/// distinct subscribers.
fn recount<K: Ord + Clone>(records: &[Flat], key: impl Fn(&Flat) -> K) -> Vec<(K, u64, u64)> {
    let keys: BTreeSet<K> = records.iter().map(&key).collect();
    keys.into_iter()
        .map(|k| {
            let mut queries = 0;
            let mut subs = HashSet::new();
            for r in records.iter().filter(|r| key(r) == k) {
                queries += 1;
                if let Some(s) = r.subscriber {
                    subs.insert(s);
                }
            }
            (k, queries, subs.len() as u64)
        })
        .collect()
}

fn oracle_equivalence() -> Check {
    let dir = tmp();
    let spec = GeneratorSpec {
        seed: 4242,
        subscriber_count: 100,
        days: 1,
        base_queries_per_subscriber_day: 100,
        duplicate_rate: 0.02,
        placeholder_rate: 0.01,
        ..default_spec()
    };
    let data = generate(&spec, &dir.path().join("raw")).map_err(|e| e.to_string())?;

    // drop every tenth CRM row and add a nested rule so those paths are covered
    let crm_text = fs::read_to_string(&data.crm).unwrap();
    let crm: String = crm_text
        .lines()
        .enumerate()
        .filter(|(i, l)| *i == 0 || !l.split(',').next().unwrap().ends_with('0'))
        .map(|(_, l)| format!("{l}\n"))
        .collect();
    fs::write(&data.crm, crm).unwrap();
    let mut rules = fs::read_to_string(&data.rules).unwrap();
    rules.push_str("mail.google.com,Other\n");
    fs::write(&data.rules, rules).unwrap();

    // label-boundary and unmatched domains, plus lines on lease boundaries
    let first = &csv_rows(&data.cdr)[0];
    let (ip, start, end) = (&first[1], &first[2], &first[3]);
    let extra = dir.path().join("raw/extra.log");
    fs::write(
        &extra,
        format!(
            "{start}\tdns1\t{ip}\tnotgoogle.com\tA\t0\n\
             {start}\tdns1\t{ip}\tunknown.test\tA\t0\n\
             {start}\tdns2\t{ip}\tmail.google.com\tMX\t0\n\
             {end}\tdns2\t{ip}\tgoogle.com\tA\t0\n\
             {}\tdns3\t{ip}\twww.google.com\tA\t0\n",
            end.parse::<u64>().unwrap() - 1
        ),
    )
    .unwrap();
    let mut inputs = data.logs.clone();
    inputs.push(extra);

    let root = dir.path().join("out");
    let cfg = PipelineConfig::new(inputs.clone(), &data.cdr, &data.crm, &data.rules, &root)
        .with_workers(4)
        .with_chunk_records(700);
    let report: RunReport = run_pipeline(&cfg).map_err(|e| e.to_string())?;

    let mut parsed = Vec::new();
    for input in &inputs {
        for line in fs::read_to_string(input)
            .unwrap()
            .lines()
            .filter(|l| !l.is_empty())
        {
            if let Ok(r) = parse_line(line.as_bytes()) {
                parsed.push(r);
            }
        }
    }
    ensure(parsed.len() >= 10_000, || {
        format!("only {} records", parsed.len())
    })?;

    let (kept, null, dup) = oracle_sanitize(&parsed);
    ensure(
        (
            report.sanitize.null_incomplete_removed,
            report.sanitize.duplicates_removed,
        ) == (null, dup),
        || {
            format!(
                "sanitize {:?} vs oracle null={null} dup={dup}",
                report.sanitize
            )
        },
    )?;

    let mut expected = oracle_enrich(&kept, &data.cdr, &data.crm, &data.rules);
    let ds = Dataset::open(&root).map_err(|e| e.to_string())?;
    let keys: Vec<_> = ds.partitions().map(|(k, _)| *k).collect();
    let mut actual = Vec::new();
    for k in &keys {
        actual.extend(
            ds.read_partition(k)
                .map_err(|e| e.to_string())?
                .iter()
                .map(flatten),
        );
    }
    let missing_profile = expected.iter().filter(|f| f.subscriber.is_none()).count() as u64;
    ensure(report.join.missing_profile > 0, || {
        "no missing-profile rows exercised".into()
    })?;
    ensure(
        report.join.unassigned + report.join.missing_profile == missing_profile,
        || {
            format!(
                "join stats {:?} vs {missing_profile} without subscriber",
                report.join
            )
        },
    )?;
    expected.sort();
    actual.sort();
    ensure(actual == expected, || {
        let first = actual.iter().zip(&expected).find(|(a, b)| a != b);
        format!(
            "enriched records differ ({} vs {}), first: {first:?}",
            actual.len(),
            expected.len()
        )
    })?;

    let range = ds.date_span().unwrap();
    let hourly: Vec<HourlyUsersRow> = recount(&expected, |r| {
        let (d, h) = day_hour(r.ts);
        (d, h, r.server)
    })
    .into_iter()
    .map(|((date, hour, server), _, u)| HourlyUsersRow {
        date,
        hour,
        server,
        unique_subscribers: u,
    })
    .collect();
    let category: Vec<CategoryTrafficRow> = recount(&expected, |r| {
        let (d, h) = day_hour(r.ts);
        (d, h, r.category.clone())
    })
    .into_iter()
    .map(|((date, hour, category), _, u)| CategoryTrafficRow {
        date,
        hour,
        category,
        unique_subscribers: u,
    })
    .collect();
    let region: Vec<RegionDensityRow> = recount(&expected, |r| {
        let region = if r.subscriber.is_some() {
            r.region.clone()
        } else {
            UNJOINED_REGION.to_string()
        };
        (day_hour(r.ts).0, region)
    })
    .into_iter()
    .map(|((date, region), q, u)| RegionDensityRow {
        date,
        region,
        query_count: q,
        unique_subscribers: u,
    })
    .collect();

    ensure(
        ds.unique_users_hourly(range).unwrap().rows == hourly,
        || "hourly users differ".into(),
    )?;
    ensure(ds.category_traffic(range).unwrap().rows == category, || {
        "category traffic differs".into()
    })?;
    ensure(ds.region_density(range).unwrap().rows == region, || {
        "region density differs".into()
    })?;
    Ok(format!(
        "{} records: sanitize, join ({} joined, {} unassigned, {} missing profile) and {} report rows match",
        parsed.len(),
        report.join.joined,
        report.join.unassigned,
        report.join.missing_profile,
        hourly.len() + category.len() + region.len()
    ))
}

fn ground_truth_recovery() -> Check {
    let mut totals = (0, 0);
    for seed in 0..10u64 {
        let dir = tmp();
        let spec = GeneratorSpec {
            seed: 1_000 + seed * 7_919,
            subscriber_count: 300,
            days: 2,
            base_queries_per_subscriber_day: 30,
            duplicate_rate: 0.03,
            placeholder_rate: 0.02,
            ..default_spec()
        };
        let data = generate(&spec, &dir.path().join("raw")).map_err(|e| e.to_string())?;
        let report = run_pipeline(
            &config(&data, &dir.path().join("out"))
                .with_workers(4)
                .with_chunk_records(1_000),
        )
        .map_err(|e| e.to_string())?;
        let m = &data.manifest;
        ensure(
            report.sanitize.duplicates_removed == m.planted_duplicates
                && report.sanitize.null_incomplete_removed == m.planted_placeholders,
            || {
                format!(
                    "seed {}: report {:?}, manifest dup={} null={}",
                    spec.seed, report.sanitize, m.planted_duplicates, m.planted_placeholders
                )
            },
        )?;
        ensure(report.join.joined == m.joinable_queries, || {
            format!(
                "seed {}: joined {} vs {}",
                spec.seed, report.join.joined, m.joinable_queries
            )
        })?;
        totals.0 += m.planted_duplicates;
        totals.1 += m.planted_placeholders;
    }
    Ok(format!(
        "10 seeds, {} duplicates and {} placeholders recovered exactly",
        totals.0, totals.1
    ))
}

fn random_batch(rng: &mut ChaCha8Rng) -> Vec<EnrichedRecord> {
    const CITIES: [&str; 5] = [
        "Istanbul",
        "Ankara",
        "İzmir",
        "Şanlıurfa",
        "City, with comma",
    ];
    const CATEGORIES: [&str; 4] = ["Social", "News/Media", UNCATEGORIZED, "Video/Streaming"];
    let hour_start = 1_546_300_800_000 + rng.random_range(0..100_000u64) * 3_600_000;
    let server = ServerId::ALL[rng.random_range(0..3)];
    let profiles: Vec<SubscriberProfile> = (0..rng.random_range(1..20u64))
        .map(|i| SubscriberProfile {
            subscriber_id: rng.random_range(0..u64::MAX / 2) + i,
            city: Arc::from(CITIES[rng.random_range(0..CITIES.len())]),
            region_code: Arc::from(format!("{:02}", rng.random_range(1..82))),
        })
        .collect();
    (0..rng.random_range(1..400))
        .map(|_| {
            let labels = rng.random_range(1..4);
            let name = (0..labels)
                .map(|_| {
                    (0..rng.random_range(1..12))
                        .map(|_| (b'a' + rng.random_range(0..26)) as char)
                        .collect::<String>()
                })
                .collect::<Vec<_>>()
                .join(".");
            EnrichedRecord {
                record: DnsQueryRecord {
                    timestamp_ms: hour_start + rng.random_range(0..3_600_000),
                    server,
                    client_ip: Ipv4Addr::from(rng.random::<u32>()),
                    query_name: name,
                    query_type: QueryType::ALL[rng.random_range(0..QueryType::ALL.len())],
                    response_code: rng.random_range(0..=4095),
                },
                subscriber: rng
                    .random_bool(0.7)
                    .then(|| profiles[rng.random_range(0..profiles.len())].clone()),
                category: Arc::from(CATEGORIES[rng.random_range(0..CATEGORIES.len())]),
            }
        })
        .collect()
}

fn columnar_roundtrip() -> Check {
    let dir = tmp();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut corruptions = 0;
    for i in 0..100 {
        let batch = random_batch(&mut rng);
        let path = dir.path().join(format!("b{i}.tnc"));
        let meta = write_segment(&batch, &path).map_err(|e| format!("batch {i}: {e}"))?;
        let back = read_segment(&path).map_err(|e| format!("batch {i}: {e}"))?;
        ensure(back == batch, || {
            format!("batch {i} differs after roundtrip")
        })?;

        let bytes = fs::read(&path).unwrap();
        let directory_end = meta.columns[0].offset as usize;
        for _ in 0..20 {
            let mut corrupt = bytes.clone();
            let at = rng.random_range(0..directory_end);
            corrupt[at] ^= rng.random_range(1..=255u8);
            ensure(decode_segment(&corrupt).is_err(), || {
                format!("batch {i}: flipping byte {at} of {directory_end} went undetected")
            })?;
            corruptions += 1;
        }
    }
    Ok(format!(
        "100 batches roundtrip, {corruptions} directory corruptions detected"
    ))
}

fn diurnal_shape() -> Check {
    let large = large();
    let root = large.root.join("diurnal");
    run_pipeline(&config(&large.data, &root)).map_err(|e| e.to_string())?;
    let ds = Dataset::open(&root).map_err(|e| e.to_string())?;
    let rows = ds
        .unique_users_hourly(ds.date_span().unwrap())
        .unwrap()
        .rows;
    fs::remove_dir_all(&root).ok();

    let mut per_day: BTreeMap<NaiveDate, [u64; 24]> = BTreeMap::new();
    for r in &rows {
        per_day.entry(r.date).or_default()[r.hour as usize] += r.unique_subscribers;
    }
    let mean = |h: &[u64; 24], hours: std::ops::RangeInclusive<usize>| {
        let n = hours.clone().count() as f64;
        hours.map(|i| h[i] as f64).sum::<f64>() / n
    };
    let mut worst = f64::MAX;
    for (day, hours) in &per_day {
        let (low, high) = (mean(hours, 4..=5), mean(hours, 20..=23));
        ensure(low < high, || {
            format!("{day}: mean 04-05h {low} >= mean 20-23h {high}")
        })?;
        worst = worst.min(high / low);
    }
    ensure(per_day.len() == default_spec().days as usize, || {
        format!("{} days", per_day.len())
    })?;
    Ok(format!(
        "{} days, evening/night ratio at least {worst:.2}",
        per_day.len()
    ))
}

fn parallel_speedup() -> Check {
    let large = large();
    let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
    let time = |workers: usize| -> Result<Duration, String> {
        let mut best = Duration::MAX;
        for attempt in 0..2 {
            let root = large.root.join(format!("speed-w{workers}-{attempt}"));
            let started = Instant::now();
            run_pipeline(&config(&large.data, &root).with_workers(workers))
                .map_err(|e| e.to_string())?;
            best = best.min(started.elapsed());
            fs::remove_dir_all(&root).ok();
        }
        Ok(best)
    };
    let one = time(1)?;
    let four = time(4)?;
    let ratio = four.as_secs_f64() / one.as_secs_f64();
    let detail = format!(
        "workers=1 {:.2}s, workers=4 {:.2}s, ratio {ratio:.2} (limit 0.70) on {cores} available core(s), {} lines",
        one.as_secs_f64(),
        four.as_secs_f64(),
        large.data.manifest.total_lines
    );
    ensure(ratio <= 0.7, || detail.clone())?;
    Ok(detail)
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("planner_anchor", planner_anchor),
        ("cost_anchor", cost_anchor),
        ("parallel_task_product", parallel_task_product),
        ("pipeline_determinism", pipeline_determinism),
        ("oracle_equivalence", oracle_equivalence),
        ("ground_truth_recovery", ground_truth_recovery),
        ("columnar_roundtrip", columnar_roundtrip),
        ("diurnal_shape", diurnal_shape),
        ("parallel_speedup", parallel_speedup),
    ];
    let filters: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        if !filters.is_empty() && !filters.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|panic| {
            let msg = panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("criterion {} {name}: PASS ({detail})", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {} {name}: FAIL ({detail})", i + 1);
            }
        }
    }
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        std::process::exit(1);
    }
}
