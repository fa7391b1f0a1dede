//! Parse raw log lines, count rejects, then drop placeholders and duplicates.
//!
//! cargo run --example sanitize_logs

use dnsflow::record::{parse_lines, RejectStats};
use dnsflow::sanitize::{sanitize, SanitizeReport};

const LOG: &str = "\
1557187200000\tdns1\t10.0.0.1\tWWW.Google.com\tA\t0
1557187200000\tdns1\t10.0.0.1\twww.google.com\tA\t0
1557187200500\tdns1\t10.0.0.2\t-\tA\t0
1557187201000\tdns2\t10.0.0.3\t.\tAAAA\t0
1557187202000\tdns3\t10.0.0.4\tyoutube.com\tAAAA\t0
1557187202000\tdns3\t10.0.0.4\tyoutube.com\tA\t0
0\tdns1\t10.0.0.5\tnews.example.com\tA\t0
1557187203000\tdns9\t10.0.0.5\tnews.example.com\tA\t0
1557187203000\tdns1\t300.0.0.5\tnews.example.com\tA\t0
1557187204000\tdns1\t10.0.0.5\tnews.example.com\tA
";

fn main() {
    let mut records = Vec::new();
    let mut rejects = RejectStats::default();
    parse_lines(LOG.as_bytes(), &mut records, &mut rejects);
    println!(
        "parsed {} lines, rejected {}",
        records.len(),
        rejects.total()
    );
    for (reason, n) in rejects.iter().filter(|(_, n)| *n > 0) {
        println!("  {:<20} {n}", reason.as_str());
    }

    let (clean, report) = sanitize(records);
    println!("\n{}", SanitizeReport::CSV_HEADER);
    println!("{}", report.to_csv_row());
    for r in &clean {
        println!("{}", r.to_line());
    }
}
