//! Chunked, multi-threaded pipeline runner.
//!
//! Input files are cut into chunks of whole lines. A fixed pool of worker
//! threads pulls chunks from one shared FIFO, parses them and buckets the
//! records by partition. At the merge barrier the per-chunk buckets are
//! concatenated per partition in chunk order, which reproduces input order.
//! A second pass over partitions, on the same pool, sanitizes, enriches and
//! writes segments.
//!
//! Deduplication runs after the barrier. The duplicate key includes the
//! timestamp and server, both of which fix the partition, so per-partition
//! dedup equals global dedup and the output does not depend on how the input
//! was chunked or how many workers ran.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufReader, Read, Seek, SeekFrom};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Instant;

use crate::colstore::{partition_path, write_segment, PartitionKey};
use crate::enrich::{JoinStats, JoinTables};
use crate::error::{Error, Result};
use crate::record::{parse_lines, DnsQueryRecord, RejectStats, ServerId};
use crate::sanitize::{sanitize, SanitizeReport};

pub const DEFAULT_CHUNK_RECORDS: usize = 1 << 20;
pub const DEFAULT_SEGMENT_RECORDS: usize = 1 << 20;
pub const RUN_REPORT_FILE: &str = "run_report.txt";
pub const SANITIZE_REPORT_FILE: &str = "sanitize_report.csv";

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub inputs: Vec<PathBuf>,
    pub cdr: PathBuf,
    pub crm: PathBuf,
    pub rules: PathBuf,
    /// Dataset root; partitions and run reports are written here.
    pub output_root: PathBuf,
    /// Lines per work chunk.
    pub chunk_records: usize,
    pub worker_count: usize,
    /// Upper bound on records per segment file within a partition.
    pub segment_records: usize,
}

impl PipelineConfig {
    pub fn new(
        inputs: Vec<PathBuf>,
        cdr: impl Into<PathBuf>,
        crm: impl Into<PathBuf>,
        rules: impl Into<PathBuf>,
        output_root: impl Into<PathBuf>,
    ) -> Self {
        PipelineConfig {
            inputs,
            cdr: cdr.into(),
            crm: crm.into(),
            rules: rules.into(),
            output_root: output_root.into(),
            chunk_records: DEFAULT_CHUNK_RECORDS,
            worker_count: std::thread::available_parallelism().map_or(1, |n| n.get()),
            segment_records: DEFAULT_SEGMENT_RECORDS,
        }
    }

    pub fn with_workers(mut self, worker_count: usize) -> Self {
        self.worker_count = worker_count;
        self
    }

    pub fn with_chunk_records(mut self, chunk_records: usize) -> Self {
        self.chunk_records = chunk_records;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.chunk_records == 0 {
            return Err(Error::Config("chunk_records must be at least 1".into()));
        }
        if self.worker_count == 0 {
            return Err(Error::Config("worker_count must be at least 1".into()));
        }
        if self.segment_records == 0 {
            return Err(Error::Config("segment_records must be at least 1".into()));
        }
        Ok(())
    }
}

/// A contiguous run of whole lines inside one input file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WorkChunk {
    pub id: usize,
    pub path: Arc<Path>,
    pub byte_offset: u64,
    pub byte_len: u64,
    /// Zero-based index of the first line in the file.
    pub first_line: u64,
    pub line_count: u64,
}

/// Splits every input into chunks of `chunk_records` lines; only the last
/// chunk of a file may be shorter and no chunk spans two files.
pub fn plan_chunks(inputs: &[PathBuf], chunk_records: usize) -> Result<Vec<WorkChunk>> {
    if chunk_records == 0 {
        return Err(Error::Config("chunk_records must be at least 1".into()));
    }
    let mut chunks = Vec::new();
    let mut buf = vec![0u8; 1 << 16];
    for input in inputs {
        let path: Arc<Path> = Arc::from(input.as_path());
        let file = File::open(input).map_err(|e| Error::io(input, e))?;
        let mut reader = BufReader::new(file);

        let mut pos = 0u64;
        let mut chunk_start = 0u64;
        let mut first_line = 0u64;
        let mut lines_in_chunk = 0u64;
        let mut line_open = false;
        loop {
            let n = reader.read(&mut buf).map_err(|e| Error::io(input, e))?;
            if n == 0 {
                break;
            }
            for &b in &buf[..n] {
                pos += 1;
                line_open = true;
                if b == b'\n' {
                    line_open = false;
                    lines_in_chunk += 1;
                    if lines_in_chunk == chunk_records as u64 {
                        chunks.push(WorkChunk {
                            id: chunks.len(),
                            path: path.clone(),
                            byte_offset: chunk_start,
                            byte_len: pos - chunk_start,
                            first_line,
                            line_count: lines_in_chunk,
                        });
                        chunk_start = pos;
                        first_line += lines_in_chunk;
                        lines_in_chunk = 0;
                    }
                }
            }
        }
        if line_open {
            lines_in_chunk += 1;
        }
        if lines_in_chunk > 0 {
            chunks.push(WorkChunk {
                id: chunks.len(),
                path: path.clone(),
                byte_offset: chunk_start,
                byte_len: pos - chunk_start,
                first_line,
                line_count: lines_in_chunk,
            });
        }
    }
    Ok(chunks)
}

/// Accounting for one pipeline run.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RunReport {
    /// Non-empty input lines.
    pub total_lines: u64,
    pub parsed: u64,
    pub rejected: u64,
    pub rejects: RejectStats,
    pub sanitize: SanitizeReport,
    pub join: JoinStats,
    pub enriched: u64,
    pub chunks: u64,
    pub partitions: u64,
    pub segments_written: u64,
    pub wall_ms: u64,
    /// Tasks (chunks plus partitions) completed by each worker.
    pub worker_tasks: Vec<u64>,
}

impl RunReport {
    pub fn is_balanced(&self) -> bool {
        self.parsed + self.rejected == self.total_lines
            && self.rejected == self.rejects.total()
            && self.sanitize.input_count == self.parsed
            && self.sanitize.is_balanced()
            && self.enriched == self.sanitize.output_count
            && self.join.total() == self.enriched
    }

    /// `key: value` lines.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut kv = |k: &str, v: &dyn std::fmt::Display| {
            let _ = writeln!(out, "{k}: {v}");
        };
        kv("total_lines", &self.total_lines);
        kv("parsed", &self.parsed);
        kv("rejected", &self.rejected);
        for (reason, count) in self.rejects.iter() {
            kv(&format!("rejected.{}", reason.as_str()), &count);
        }
        kv("sanitize.input", &self.sanitize.input_count);
        kv(
            "sanitize.null_incomplete",
            &self.sanitize.null_incomplete_removed,
        );
        kv("sanitize.duplicates", &self.sanitize.duplicates_removed);
        kv("sanitize.output", &self.sanitize.output_count);
        kv("enriched", &self.enriched);
        kv("join.joined", &self.join.joined);
        kv("join.unassigned", &self.join.unassigned);
        kv("join.missing_profile", &self.join.missing_profile);
        kv("chunks", &self.chunks);
        kv("partitions", &self.partitions);
        kv("segments_written", &self.segments_written);
        kv("wall_ms", &self.wall_ms);
        let tasks: Vec<String> = self.worker_tasks.iter().map(u64::to_string).collect();
        kv("worker_tasks", &tasks.join(","));
        out
    }
}

/// Runs `task` over `items` on `workers` threads pulling from a shared queue.
/// Results come back in item order. The first error stops further pulls.
fn run_pool<T, R, F>(items: &[T], workers: usize, task: F) -> Result<(Vec<R>, Vec<u64>)>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> Result<R> + Sync,
{
    let workers = workers.max(1).min(items.len().max(1));
    let next = AtomicUsize::new(0);
    let stop = AtomicBool::new(false);
    let slots: Vec<Mutex<Option<R>>> = items.iter().map(|_| Mutex::new(None)).collect();
    let failure: Mutex<Option<(usize, Error)>> = Mutex::new(None);

    let counts: Vec<u64> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|_| {
                scope.spawn(|| {
                    let mut done = 0u64;
                    while !stop.load(Ordering::Relaxed) {
                        let i = next.fetch_add(1, Ordering::Relaxed);
                        let Some(item) = items.get(i) else { break };
                        match task(item) {
                            Ok(r) => {
                                *slots[i].lock().unwrap() = Some(r);
                                done += 1;
                            }
                            Err(e) => {
                                stop.store(true, Ordering::Relaxed);
                                let mut f = failure.lock().unwrap();
                                // keep the lowest-indexed failure
                                if f.as_ref().is_none_or(|(j, _)| i < *j) {
                                    *f = Some((i, e));
                                }
                                break;
                            }
                        }
                    }
                    done
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("worker panicked"))
            .collect()
    });

    if let Some((_, e)) = failure.into_inner().unwrap() {
        return Err(e);
    }
    let results = slots
        .into_iter()
        .map(|s| s.into_inner().unwrap().expect("every item processed"))
        .collect();
    Ok((results, counts))
}

struct ChunkOutput {
    partitions: Vec<(PartitionKey, Vec<DnsQueryRecord>)>,
    parsed: u64,
    rejects: RejectStats,
}

fn read_chunk(chunk: &WorkChunk) -> std::io::Result<Vec<u8>> {
    let mut file = File::open(&chunk.path)?;
    file.seek(SeekFrom::Start(chunk.byte_offset))?;
    let mut buf = vec![0u8; chunk.byte_len as usize];
    file.read_exact(&mut buf)?;
    Ok(buf)
}

/// Buckets records by partition, keeping input order inside each bucket.
fn bucket_by_partition(records: Vec<DnsQueryRecord>) -> Vec<(PartitionKey, Vec<DnsQueryRecord>)> {
    const HOUR_MS: u64 = 3_600_000;
    let mut buckets: BTreeMap<(u64, ServerId), (PartitionKey, Vec<DnsQueryRecord>)> =
        BTreeMap::new();
    for rec in records {
        let slot = (rec.timestamp_ms / HOUR_MS, rec.server);
        buckets
            .entry(slot)
            .or_insert_with(|| (PartitionKey::of_record(&rec), Vec::new()))
            .1
            .push(rec);
    }
    buckets.into_values().collect()
}

fn process_chunk(chunk: &WorkChunk) -> Result<ChunkOutput> {
    let buf = read_chunk(chunk).map_err(|e| Error::Chunk {
        chunk_id: chunk.id,
        path: chunk.path.to_path_buf(),
        offset: chunk.byte_offset,
        source: Box::new(Error::io(&chunk.path, e)),
    })?;
    let mut records = Vec::with_capacity(chunk.line_count as usize);
    let mut rejects = RejectStats::default();
    parse_lines(&buf, &mut records, &mut rejects);
    Ok(ChunkOutput {
        parsed: records.len() as u64,
        partitions: bucket_by_partition(records),
        rejects,
    })
}

struct PartitionOutput {
    sanitize: SanitizeReport,
    join: JoinStats,
    enriched: u64,
    segments: u64,
}

fn process_partition(
    key: &PartitionKey,
    records: &Mutex<Vec<DnsQueryRecord>>,
    tables: &JoinTables,
    output_root: &Path,
    segment_records: usize,
) -> Result<PartitionOutput> {
    let records = std::mem::take(&mut *records.lock().unwrap());
    let (mut clean, sanitize_report) = sanitize(records);
    // canonical order within a partition; stable, so ties keep input order
    clean.sort_by(|a, b| {
        (a.timestamp_ms, a.client_ip, &a.query_name).cmp(&(
            b.timestamp_ms,
            b.client_ip,
            &b.query_name,
        ))
    });
    let (enriched, join) = tables.enrich(clean);
    let mut segments = 0u64;
    for (part, batch) in enriched.chunks(segment_records).enumerate() {
        let path = output_root.join(partition_path(key, part as u32));
        write_segment(batch, &path).map_err(|e| Error::segment(&path, e))?;
        segments += 1;
    }
    Ok(PartitionOutput {
        sanitize: sanitize_report,
        join,
        enriched: enriched.len() as u64,
        segments,
    })
}

fn has_partitions(root: &Path) -> Result<bool> {
    let entries = match fs::read_dir(root) {
        Ok(entries) => entries,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(false),
        Err(e) => return Err(Error::io(root, e)),
    };
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(root, e))?;
        if entry.file_name().to_string_lossy().starts_with("date=") {
            return Ok(true);
        }
    }
    Ok(false)
}

/// Executes parse → sanitize → enrich → partition → write and persists the
/// run report next to the dataset.
pub fn run_pipeline(config: &PipelineConfig) -> Result<RunReport> {
    let started = Instant::now();
    config.validate()?;
    let tables = JoinTables::load(&config.cdr, &config.crm, &config.rules)?;
    if has_partitions(&config.output_root)? {
        return Err(Error::OutputNotEmpty(config.output_root.clone()));
    }
    fs::create_dir_all(&config.output_root).map_err(|e| Error::io(&config.output_root, e))?;

    let chunks = plan_chunks(&config.inputs, config.chunk_records)?;
    let (chunk_outputs, chunk_tasks) = run_pool(&chunks, config.worker_count, process_chunk)?;

    // merge barrier
    let mut report = RunReport {
        chunks: chunks.len() as u64,
        ..RunReport::default()
    };
    let mut merged: BTreeMap<PartitionKey, Vec<DnsQueryRecord>> = BTreeMap::new();
    for out in chunk_outputs {
        report.parsed += out.parsed;
        report.rejects.merge(&out.rejects);
        for (key, mut records) in out.partitions {
            merged.entry(key).or_default().append(&mut records);
        }
    }
    report.rejected = report.rejects.total();
    report.total_lines = report.parsed + report.rejected;

    let partitions: Vec<(PartitionKey, Mutex<Vec<DnsQueryRecord>>)> = merged
        .into_iter()
        .map(|(k, v)| (k, Mutex::new(v)))
        .collect();
    let (partition_outputs, partition_tasks) =
        run_pool(&partitions, config.worker_count, |(key, records)| {
            process_partition(
                key,
                records,
                &tables,
                &config.output_root,
                config.segment_records,
            )
        })?;

    report.partitions = partitions.len() as u64;
    for out in &partition_outputs {
        report.sanitize.merge(&out.sanitize);
        report.join.merge(&out.join);
        report.enriched += out.enriched;
        report.segments_written += out.segments;
    }
    report.worker_tasks = (0..config.worker_count)
        .map(|w| chunk_tasks.get(w).unwrap_or(&0) + partition_tasks.get(w).unwrap_or(&0))
        .collect();
    report.wall_ms = started.elapsed().as_millis() as u64;
    debug_assert!(report.is_balanced());

    let text_path = config.output_root.join(RUN_REPORT_FILE);
    fs::write(&text_path, report.to_text()).map_err(|e| Error::io(&text_path, e))?;
    let csv_path = config.output_root.join(SANITIZE_REPORT_FILE);
    fs::write(
        &csv_path,
        format!(
            "{}\n{}\n",
            SanitizeReport::CSV_HEADER,
            report.sanitize.to_csv_row()
        ),
    )
    .map_err(|e| Error::io(&csv_path, e))?;
    Ok(report)
}
