use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use dnsflow::aggregates::{to_csv, Dataset};
use dnsflow::datagen::{default_spec, generate, GeneratedDataset, GeneratorSpec};
use dnsflow::engine::{run_pipeline, PipelineConfig, RunReport, RUN_REPORT_FILE};
use dnsflow::Error;

fn small_spec(seed: u64) -> GeneratorSpec {
    GeneratorSpec {
        seed,
        subscriber_count: 200,
        days: 2,
        base_queries_per_subscriber_day: 40,
        duplicate_rate: 0.05,
        placeholder_rate: 0.02,
        ..default_spec()
    }
}

fn config(data: &GeneratedDataset, out: &Path) -> PipelineConfig {
    PipelineConfig::new(data.logs.clone(), &data.cdr, &data.crm, &data.rules, out)
}

/// All three reports over the whole dataset, as CSV text.
fn reports(root: &Path) -> [String; 3] {
    let ds = Dataset::open(root).unwrap();
    let range = ds.date_span().unwrap();
    [
        to_csv(&ds.unique_users_hourly(range).unwrap().rows).unwrap(),
        to_csv(&ds.category_traffic(range).unwrap().rows).unwrap(),
        to_csv(&ds.region_density(range).unwrap().rows).unwrap(),
    ]
}

/// Relative path → bytes for every segment under `root`.
fn segments(root: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let ds = Dataset::open(root).unwrap();
    ds.partitions()
        .flat_map(|(_, files)| files.iter())
        .map(|f| {
            (
                f.strip_prefix(root).unwrap().to_path_buf(),
                fs::read(f).unwrap(),
            )
        })
        .collect()
}

#[test]
fn output_is_independent_of_workers_and_chunking() {
    let tmp = tempfile::tempdir().unwrap();
    let data = generate(&small_spec(1), &tmp.path().join("raw")).unwrap();

    let base_root = tmp.path().join("w1");
    let base = run_pipeline(&config(&data, &base_root).with_workers(1)).unwrap();
    let base_reports = reports(&base_root);
    let base_segments = segments(&base_root);

    for (i, (workers, chunk)) in [(2, 97), (4, 1_000), (8, 5), (3, 1 << 20)]
        .into_iter()
        .enumerate()
    {
        let root = tmp.path().join(format!("run{i}"));
        let report = run_pipeline(
            &config(&data, &root)
                .with_workers(workers)
                .with_chunk_records(chunk),
        )
        .unwrap();
        assert!(report.is_balanced());
        assert_eq!(
            report.sanitize, base.sanitize,
            "workers={workers} chunk={chunk}"
        );
        assert_eq!(report.join, base.join);
        assert_eq!(
            reports(&root),
            base_reports,
            "workers={workers} chunk={chunk}"
        );
        assert_eq!(
            segments(&root),
            base_segments,
            "workers={workers} chunk={chunk}"
        );
    }
}

#[test]
fn planted_counts_are_recovered() {
    let tmp = tempfile::tempdir().unwrap();
    let data = generate(&small_spec(2), &tmp.path().join("raw")).unwrap();
    let report =
        run_pipeline(&config(&data, &tmp.path().join("out")).with_chunk_records(50)).unwrap();
    let m = &data.manifest;
    assert!(m.planted_duplicates > 0 && m.planted_placeholders > 0);
    assert_eq!(report.total_lines, m.total_lines);
    assert_eq!(report.rejected, 0);
    assert_eq!(report.sanitize.duplicates_removed, m.planted_duplicates);
    assert_eq!(
        report.sanitize.null_incomplete_removed,
        m.planted_placeholders
    );
    assert_eq!(report.join.joined, m.joinable_queries);
    assert_eq!(report.join.unassigned, m.unjoinable_queries);
    assert_eq!(report.join.missing_profile, 0);
}

fn write(path: &Path, text: &str) -> PathBuf {
    fs::write(path, text).unwrap();
    path.to_path_buf()
}

struct Fixture {
    _tmp: tempfile::TempDir,
    dir: PathBuf,
    cdr: PathBuf,
    crm: PathBuf,
    rules: PathBuf,
}

fn fixture() -> Fixture {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().to_path_buf();
    let cdr = write(
        &dir.join("cdr.csv"),
        "subscriber_id,ip,start_ms,end_ms\n7,10.0.0.1,0,9999999999999\n",
    );
    let crm = write(
        &dir.join("crm.csv"),
        "subscriber_id,city,region_code\n7,Istanbul,34\n",
    );
    let rules = write(
        &dir.join("rules.csv"),
        "suffix,category\nexample.com,News/Media\n",
    );
    Fixture {
        _tmp: tmp,
        dir,
        cdr,
        crm,
        rules,
    }
}

#[test]
fn duplicate_split_across_chunks_is_removed_once() {
    let f = fixture();
    let mut text = String::new();
    for i in 0..9 {
        text.push_str(&format!(
            "{}\tdns1\t10.0.0.1\tq{i}.example.com\tA\t0\n",
            1_557_187_200_000u64 + i
        ));
    }
    // line 10 repeats line 1 and lands in the second chunk of 5 lines; the
    // copy in another file lands in a third chunk
    text.push_str("1557187200000\tdns1\t10.0.0.1\tq0.example.com\tA\t0\n");
    let a = write(&f.dir.join("a.log"), &text);
    let b = write(
        &f.dir.join("b.log"),
        "1557187200000\tdns1\t10.0.0.1\tq0.example.com\tA\t3\n",
    );

    let out = f.dir.join("out");
    let cfg = PipelineConfig::new(vec![a, b], &f.cdr, &f.crm, &f.rules, &out)
        .with_chunk_records(5)
        .with_workers(3);
    let report = run_pipeline(&cfg).unwrap();
    assert_eq!(report.chunks, 3);
    assert_eq!(report.sanitize.duplicates_removed, 2);
    assert_eq!(report.sanitize.output_count, 9);
    assert_eq!(report.join.joined, 9);

    let ds = Dataset::open(&out).unwrap();
    let (key, _) = ds.partitions().next().unwrap();
    let records = ds.read_partition(key).unwrap();
    assert_eq!(records.len(), 9);
    // first occurrence kept: response code 0, not the later 3
    assert!(records.iter().all(|r| r.record.response_code == 0));
    assert!(records
        .windows(2)
        .all(|w| w[0].record.timestamp_ms <= w[1].record.timestamp_ms));
}

#[test]
fn empty_input_gives_zero_report() {
    let f = fixture();
    let empty = write(&f.dir.join("empty.log"), "");
    for inputs in [vec![], vec![empty]] {
        let out = tempfile::tempdir().unwrap();
        let report = run_pipeline(
            &PipelineConfig::new(inputs, &f.cdr, &f.crm, &f.rules, out.path()).with_workers(2),
        )
        .unwrap();
        assert_eq!(
            RunReport {
                wall_ms: report.wall_ms,
                worker_tasks: report.worker_tasks.clone(),
                ..RunReport::default()
            },
            report
        );
        assert!(out.path().join(RUN_REPORT_FILE).exists());
        assert!(Dataset::open(out.path()).unwrap().date_span().is_none());
    }
}

#[test]
fn rejects_are_counted_not_fatal() {
    let f = fixture();
    let log = write(
        &f.dir.join("mixed.log"),
        "1557187200000\tdns1\t10.0.0.1\ta.example.com\tA\t0\n\
         garbage\n\
         1557187200001\tdns4\t10.0.0.1\ta.example.com\tA\t0\n\
         \n\
         1557187200002\tdns1\t10.0.0.1\t-\tA\t0\n",
    );
    let out = f.dir.join("out");
    let report = run_pipeline(&PipelineConfig::new(
        vec![log],
        &f.cdr,
        &f.crm,
        &f.rules,
        &out,
    ))
    .unwrap();
    assert_eq!(report.total_lines, 4);
    assert_eq!(report.rejected, 2);
    assert_eq!(report.sanitize.null_incomplete_removed, 1);
    assert_eq!(report.enriched, 1);
    assert!(report.is_balanced());
}

#[test]
fn overlapping_leases_fail_before_any_output() {
    let f = fixture();
    let cdr = write(
        &f.dir.join("overlap.csv"),
        "subscriber_id,ip,start_ms,end_ms\n1,10.0.0.1,0,100\n2,10.0.0.1,50,200\n",
    );
    let log = write(
        &f.dir.join("x.log"),
        "1557187200000\tdns1\t10.0.0.1\ta.example.com\tA\t0\n",
    );
    let out = f.dir.join("out");
    let err = run_pipeline(&PipelineConfig::new(
        vec![log],
        &cdr,
        &f.crm,
        &f.rules,
        &out,
    ))
    .unwrap_err();
    assert!(matches!(err, Error::OverlappingIntervals { .. }), "{err}");
    assert_eq!(err.exit_code(), 2);
    assert!(!out.exists());
}

#[test]
fn missing_input_is_an_io_error() {
    let f = fixture();
    let out = f.dir.join("out");
    let err = run_pipeline(&PipelineConfig::new(
        vec![f.dir.join("nope.log")],
        &f.cdr,
        &f.crm,
        &f.rules,
        &out,
    ))
    .unwrap_err();
    assert_eq!(err.exit_code(), 3, "{err}");
}

#[test]
fn refuses_to_overwrite_a_dataset() {
    let f = fixture();
    let log = write(
        &f.dir.join("x.log"),
        "1557187200000\tdns1\t10.0.0.1\ta.example.com\tA\t0\n",
    );
    let out = f.dir.join("out");
    let cfg = PipelineConfig::new(vec![log], &f.cdr, &f.crm, &f.rules, &out);
    run_pipeline(&cfg).unwrap();
    assert!(matches!(run_pipeline(&cfg), Err(Error::OutputNotEmpty(_))));
}

#[test]
fn segment_size_limit_splits_partitions() {
    let f = fixture();
    let mut file = fs::File::create(f.dir.join("many.log")).unwrap();
    for i in 0..25u64 {
        writeln!(
            file,
            "{}\tdns2\t10.0.0.1\tq{i}.example.com\tA\t0",
            1_557_187_200_000 + i
        )
        .unwrap();
    }
    let out = f.dir.join("out");
    let mut cfg = PipelineConfig::new(vec![f.dir.join("many.log")], &f.cdr, &f.crm, &f.rules, &out);
    cfg.segment_records = 10;
    let report = run_pipeline(&cfg).unwrap();
    assert_eq!(report.partitions, 1);
    assert_eq!(report.segments_written, 3);
    let ds = Dataset::open(&out).unwrap();
    let (key, files) = ds.partitions().next().unwrap();
    assert_eq!(files.len(), 3);
    assert_eq!(ds.read_partition(key).unwrap().len(), 25);
}
